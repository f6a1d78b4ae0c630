//! Utterances, semantic triplets, corpus I/O, BIO derivation and
//! hypothesis alignment.
//!
//! A corpus file is UTF-8 JSON lines. Each record carries `id`,
//! `transcription`, an optional `hypothesis`, the unaligned `semantics`
//! and optional per-character `tags`.

mod align;
mod bio;
mod noise;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::{align_hypothesis, character_error_rate, edit_distance, EditOp};
pub use bio::{derive_bio_tags, is_well_formed, repair_tags, tags_to_triplets, Tag};
pub use noise::{simulate_asr_noise, AsrNoiseSimulator, NoiseConfig};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),
    #[error("value of {0} does not occur in the transcription")]
    UnalignableValue(SemanticTriplet),
    #[error("spans of {0} and {1} overlap")]
    Overlap(SemanticTriplet, SemanticTriplet),
    #[error("invalid tag `{0}`")]
    InvalidTag(String),
    #[error("invalid noise config: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One `act(slot=value)` record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SemanticTriplet {
    pub act: String,
    pub slot: String,
    pub value: String,
}

impl SemanticTriplet {
    pub fn new(act: impl Into<String>, slot: impl Into<String>, value: impl Into<String>) -> Self {
        Self { act: act.into(), slot: slot.into(), value: value.into() }
    }

    /// The `act-slot` label used inside BIO tags.
    pub fn label(&self) -> String {
        format!("{}-{}", self.act, self.slot)
    }

    /// Empty values are representable (a corpus may contain them) but never valid.
    pub fn is_valid(&self) -> bool {
        !self.act.is_empty() && !self.slot.is_empty() && !self.value.is_empty()
    }
}

impl fmt::Display for SemanticTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}={})", self.act, self.slot, self.value)
    }
}

/// Set of triplets; iteration order is `(act, slot, value)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TripletSet(BTreeSet<SemanticTriplet>);

impl TripletSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, triplet: SemanticTriplet) -> bool {
        self.0.insert(triplet)
    }

    pub fn contains(&self, triplet: &SemanticTriplet) -> bool {
        self.0.contains(triplet)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SemanticTriplet> {
        self.0.iter()
    }

    /// Number of triplets in `self` that are absent from `other`.
    pub fn difference_count(&self, other: &TripletSet) -> usize {
        self.0.difference(&other.0).count()
    }

    pub fn intersection_count(&self, other: &TripletSet) -> usize {
        self.0.intersection(&other.0).count()
    }
}

impl FromIterator<SemanticTriplet> for TripletSet {
    fn from_iter<I: IntoIterator<Item = SemanticTriplet>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl IntoIterator for TripletSet {
    type Item = SemanticTriplet;
    type IntoIter = std::collections::btree_set::IntoIter<SemanticTriplet>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<'a> IntoIterator for &'a TripletSet {
    type Item = &'a SemanticTriplet;
    type IntoIter = std::collections::btree_set::Iter<'a, SemanticTriplet>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// One dialogue turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub transcription: String,
    pub hypothesis: String,
    pub gold: TripletSet,
    pub transcription_tags: Option<Vec<Tag>>,
}

impl Utterance {
    /// Utterance whose hypothesis equals its transcription and which has no tags.
    pub fn clean(id: impl Into<String>, transcription: impl Into<String>, gold: TripletSet) -> Self {
        let transcription = transcription.into();
        Self {
            id: id.into(),
            hypothesis: transcription.clone(),
            transcription,
            gold,
            transcription_tags: None,
        }
    }

    pub fn transcription_chars(&self) -> Vec<char> {
        self.transcription.chars().collect()
    }

    pub fn hypothesis_chars(&self) -> Vec<char> {
        self.hypothesis.chars().collect()
    }

    /// Stored tags if present, otherwise tags derived from the gold triplets.
    pub fn tags_or_derive(&self) -> Result<Vec<Tag>, CorpusError> {
        match &self.transcription_tags {
            Some(tags) => Ok(tags.clone()),
            None => derive_bio_tags(&self.transcription_chars(), &self.gold),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    transcription: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hypothesis: Option<String>,
    semantics: Vec<SemanticTriplet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tags: Option<Vec<String>>,
}

/// Parses one JSON record per non-blank line.
///
/// A missing hypothesis defaults to the transcription. Tags are checked for
/// length and syntax; orphan `I-` tags are repaired to `B-`.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Utterance>, CorpusError> {
    let mut seen = HashSet::new();
    let mut utterances = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse { line: line_no, message };
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        for triplet in &record.semantics {
            if triplet.act.is_empty() || triplet.slot.is_empty() {
                return Err(parse_err(format!("triplet {triplet} has an empty act or slot")));
            }
            if triplet.act.contains('-') || triplet.act.contains('#') || triplet.slot.contains('#') {
                return Err(parse_err(format!("triplet {triplet} has a reserved character in act or slot")));
            }
            if triplet.value.is_empty() {
                log::warn!("line {line_no}: triplet {triplet} has an empty value and is invalid");
            }
        }
        let transcription_len = record.transcription.chars().count();
        let tags = match record.tags {
            None => None,
            Some(raw) => {
                if raw.len() != transcription_len {
                    return Err(parse_err(format!(
                        "{} tags for a transcription of {} characters",
                        raw.len(),
                        transcription_len
                    )));
                }
                let parsed = raw
                    .iter()
                    .map(|t| t.parse::<Tag>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| parse_err(e.to_string()))?;
                if !is_well_formed(&parsed) {
                    log::warn!("line {line_no}: ill-formed BIO sequence repaired");
                }
                Some(repair_tags(&parsed))
            }
        };
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId(record.id));
        }
        utterances.push(Utterance {
            id: record.id,
            hypothesis: record.hypothesis.unwrap_or_else(|| record.transcription.clone()),
            transcription: record.transcription,
            gold: record.semantics.into_iter().collect(),
            transcription_tags: tags,
        });
    }
    Ok(utterances)
}

/// Writes records with fields in the order `id, transcription, hypothesis, semantics, tags`.
pub fn write_corpus<W: Write>(mut writer: W, utterances: &[Utterance]) -> Result<(), CorpusError> {
    for utt in utterances {
        let record = Record {
            id: utt.id.clone(),
            transcription: utt.transcription.clone(),
            hypothesis: Some(utt.hypothesis.clone()),
            semantics: utt.gold.iter().cloned().collect(),
            tags: utt
                .transcription_tags
                .as_ref()
                .map(|tags| tags.iter().map(Tag::to_string).collect()),
        };
        serde_json::to_writer(&mut writer, &record).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
