//! Domain ontology, pronunciation dictionary and lexicon features.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("malformed ontology: {0}")]
    Malformed(String),
    #[error("ontology defines no candidate values")]
    Empty,
    #[error("pronunciation dictionary line {line}: {message}")]
    Dictionary { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Candidate values per `(act, slot)` with per-slot fallbacks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ontology {
    pairs: BTreeMap<(String, String), Vec<String>>,
    slots: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize, Default)]
struct OntologyDocument {
    #[serde(default)]
    pairs: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    slots: BTreeMap<String, Vec<String>>,
}

/// Which candidate list a lookup resolved to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CandidateKey {
    Pair(String, String),
    Slot(String),
}

fn dedup_values(values: Vec<String>, key: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let before = values.len();
    let out: Vec<String> = values.into_iter().filter(|v| seen.insert(v.clone())).collect();
    if out.len() != before {
        log::warn!("ontology entry `{key}`: {} duplicate values collapsed", before - out.len());
    }
    out
}

impl Ontology {
    /// Builds an ontology from in-memory lists, applying the same validation as [`load_ontology`].
    pub fn from_parts<P, S>(pairs: P, slots: S) -> Result<Self, OntologyError>
    where
        P: IntoIterator<Item = ((String, String), Vec<String>)>,
        S: IntoIterator<Item = (String, Vec<String>)>,
    {
        let mut onto = Ontology::default();
        for ((act, slot), values) in pairs {
            if act.is_empty() || slot.is_empty() {
                return Err(OntologyError::Malformed("empty act or slot name".into()));
            }
            let values = dedup_values(values, &format!("{act}#{slot}"));
            if values.is_empty() {
                log::warn!("ontology entry `{act}#{slot}` has no values and is ignored");
                continue;
            }
            onto.pairs.insert((act, slot), values);
        }
        for (slot, values) in slots {
            let values = dedup_values(values, &slot);
            if values.is_empty() {
                log::warn!("ontology slot `{slot}` has no values and is ignored");
                continue;
            }
            onto.slots.insert(slot, values);
        }
        if onto.pairs.is_empty() && onto.slots.is_empty() {
            return Err(OntologyError::Empty);
        }
        Ok(onto)
    }

    /// Exact `(act, slot)` entry, else the slot fallback, else empty.
    pub fn candidate_set(&self, act: &str, slot: &str) -> &[String] {
        self.resolve(act, slot).map(|(_, v)| v).unwrap_or(&[])
    }

    pub fn resolve(&self, act: &str, slot: &str) -> Option<(CandidateKey, &[String])> {
        if let Some(v) = self.pairs.get(&(act.to_string(), slot.to_string())) {
            return Some((CandidateKey::Pair(act.into(), slot.into()), v));
        }
        self.slots.get(slot).map(|v| (CandidateKey::Slot(slot.into()), v.as_slice()))
    }

    /// Every candidate list, pairs first.
    pub fn lists(&self) -> impl Iterator<Item = (CandidateKey, &[String])> {
        self.pairs
            .iter()
            .map(|((a, s), v)| (CandidateKey::Pair(a.clone(), s.clone()), v.as_slice()))
            .chain(self.slots.iter().map(|(s, v)| (CandidateKey::Slot(s.clone()), v.as_slice())))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.keys().map(|(a, s)| (a.as_str(), s.as_str()))
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    /// All distinct values in the ontology, in list order.
    pub fn all_values(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.lists()
            .flat_map(|(_, vs)| vs.iter().cloned())
            .filter(|v| seen.insert(v.clone()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let doc = OntologyDocument {
            pairs: self.pairs.iter().map(|((a, s), v)| (format!("{a}#{s}"), v.clone())).collect(),
            slots: self.slots.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("ontology serializes")
    }
}

/// Reads `{"pairs": {"act#slot": [...]}, "slots": {"slot": [...]}}`.
pub fn load_ontology<R: Read>(reader: R) -> Result<Ontology, OntologyError> {
    let doc: OntologyDocument =
        serde_json::from_reader(reader).map_err(|e| OntologyError::Malformed(e.to_string()))?;
    let mut pairs = Vec::new();
    for (key, values) in doc.pairs {
        let (act, slot) = key
            .split_once('#')
            .ok_or_else(|| OntologyError::Malformed(format!("pair key `{key}` is not `act#slot`")))?;
        pairs.push(((act.to_string(), slot.to_string()), values));
    }
    Ontology::from_parts(pairs, doc.slots)
}

/// Token to phoneme-sequence mapping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PronunciationDictionary {
    entries: BTreeMap<String, Vec<String>>,
}

impl PronunciationDictionary {
    /// Parses `token<TAB>phoneme phoneme ...` lines; later duplicates override earlier ones.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, OntologyError> {
        let mut entries = BTreeMap::new();
        for (index, line) in reader.lines().enumerate() {
            let line = line?;
            let err = |message: &str| OntologyError::Dictionary { line: index + 1, message: message.into() };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, phones) = line.split_once('\t').ok_or_else(|| err("missing tab separator"))?;
            if token.is_empty() {
                return Err(err("empty token"));
            }
            let phones: Vec<String> = phones.split_whitespace().map(str::to_string).collect();
            if phones.is_empty() {
                return Err(err("no phonemes"));
            }
            entries.insert(token.to_string(), phones);
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, token: impl Into<String>, phones: Vec<String>) {
        self.entries.insert(token.into(), phones);
    }

    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Concatenated per-character phonemes; unknown characters stand for themselves.
pub fn to_pronunciation(dictionary: &PronunciationDictionary, value: &str) -> Vec<String> {
    let mut buf = [0u8; 4];
    let mut out = Vec::new();
    for c in value.chars() {
        let key: &str = c.encode_utf8(&mut buf);
        match dictionary.get(key) {
            Some(phones) => out.extend(phones.iter().cloned()),
            None => out.push(key.to_string()),
        }
    }
    out
}

/// Ontology values of length two or more, used for lexicon features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    values: Vec<String>,
    #[serde(skip)]
    index: HashSet<Vec<char>>,
    #[serde(skip)]
    max_len: usize,
}

impl Lexicon {
    pub fn new(values: impl IntoIterator<Item = String>) -> Self {
        let mut seen = HashSet::new();
        let values: Vec<String> =
            values.into_iter().filter(|v| v.chars().count() >= 2 && seen.insert(v.clone())).collect();
        let mut lex = Lexicon { values, ..Default::default() };
        lex.rebuild();
        lex
    }

    pub fn from_ontology(ontology: &Ontology) -> Self {
        Self::new(ontology.all_values())
    }

    /// Restores lookup tables after deserialization.
    pub fn rebuild(&mut self) {
        self.index = self.values.iter().map(|v| v.chars().collect()).collect();
        self.max_len = self.index.iter().map(Vec::len).max().unwrap_or(0);
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    /// `[inside, start]` bits per character.
    ///
    /// All matches are ranked longest first, then leftmost, and accepted
    /// greedily when they do not overlap an accepted match.
    pub fn features(&self, characters: &[char]) -> Vec<[bool; 2]> {
        let n = characters.len();
        let mut matches = Vec::new();
        for start in 0..n {
            for len in 2..=self.max_len.min(n - start) {
                if self.index.contains(&characters[start..start + len]) {
                    matches.push((len, start));
                }
            }
        }
        matches.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut out = vec![[false; 2]; n];
        for (len, start) in matches {
            if out[start..start + len].iter().all(|f| !f[0]) {
                out[start][1] = true;
                for f in &mut out[start..start + len] {
                    f[0] = true;
                }
            }
        }
        out
    }
}

/// Lexicon features of `characters` against every ontology value.
pub fn lexicon_features(ontology: &Ontology, characters: &[char]) -> Vec<[bool; 2]> {
    Lexicon::from_ontology(ontology).features(characters)
}
