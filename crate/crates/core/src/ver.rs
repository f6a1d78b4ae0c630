//! Value error recovery.
//!
//! Each candidate list of the ontology is indexed as two sparse matrices
//! whose unit-norm columns are the binary n-gram indicator vectors of the
//! candidates, one over characters and one over phonemes. A predicted value
//! is scored against all candidates with one sparse matrix-vector product per
//! channel; the blended score decides whether the value is replaced by its
//! best candidate or dropped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SemanticTriplet, TripletSet};
use crate::ontology::{to_pronunciation, CandidateKey, Ontology, PronunciationDictionary};

/// Slack for the threshold comparison: a value whose only evidence is an
/// exact pronunciation match scores `(1 - lambda) * 1.0` up to rounding.
pub const THRESHOLD_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum VerError {
    #[error("no candidate set for {act}-{slot}")]
    AbsentCandidateSet { act: String, slot: String },
    #[error("unknown post-processing mode `{0}`")]
    UnknownMode(String),
    #[error("invalid VER config: {0}")]
    InvalidConfig(String),
}

/// Post-processing applied to predicted triplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PostProcess {
    None,
    Delete,
    #[default]
    Ver,
}

impl PostProcess {
    pub const ALL: [PostProcess; 3] = [PostProcess::None, PostProcess::Delete, PostProcess::Ver];
}

impl fmt::Display for PostProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PostProcess::None => "none",
            PostProcess::Delete => "delete",
            PostProcess::Ver => "ver",
        })
    }
}

impl FromStr for PostProcess {
    type Err = VerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PostProcess::None),
            "delete" => Ok(PostProcess::Delete),
            "ver" => Ok(PostProcess::Ver),
            _ => Err(VerError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerConfig {
    pub n: usize,
    pub lambda: f64,
    pub threshold: f64,
    pub mode: PostProcess,
}

impl Default for VerConfig {
    fn default() -> Self {
        Self { n: 2, lambda: 0.5, threshold: 0.5, mode: PostProcess::Ver }
    }
}

impl VerConfig {
    pub fn validate(&self) -> Result<(), VerError> {
        if self.n == 0 {
            return Err(VerError::InvalidConfig("n must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(VerError::InvalidConfig(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(VerError::InvalidConfig(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// An n-gram, symbols joined by U+001F.
pub type Ngram = String;

/// Distinct n-grams of `symbols`; empty when there are fewer than `n` symbols.
pub fn ngram_set<S: AsRef<str>>(symbols: &[S], n: usize) -> BTreeSet<Ngram> {
    assert!(n > 0, "n-gram order must be positive");
    symbols
        .windows(n)
        .map(|w| w.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\u{1f}"))
        .collect()
}

fn char_symbols(value: &str) -> Vec<String> {
    value.chars().map(String::from).collect()
}

/// Binary n-gram indicator of a value, restricted to a vocabulary and scaled
/// to unit length.
///
/// N-grams outside the vocabulary cannot match a candidate and are not
/// materialized, but they still count towards the norm, so a product with a
/// candidate column is the cosine of the two full indicator vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// `(vocabulary index, weight)`, ascending by index.
    pub coords: Vec<(usize, f64)>,
    /// N-grams of the value that are absent from the vocabulary.
    pub out_of_vocabulary: usize,
}

impl FeatureVector {
    pub fn is_zero(&self) -> bool {
        self.coords.is_empty()
    }

    /// Dense in-vocabulary coordinates.
    pub fn to_dense(&self, vocabulary_len: usize) -> Vec<f64> {
        let mut out = vec![0.0; vocabulary_len];
        for &(j, w) in &self.coords {
            out[j] = w;
        }
        out
    }
}

/// N-gram vocabulary with insertion-ordered indices.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    index: HashMap<Ngram, usize>,
    grams: Vec<Ngram>,
}

impl Vocabulary {
    fn intern(&mut self, gram: &Ngram) -> usize {
        if let Some(&i) = self.index.get(gram) {
            return i;
        }
        self.grams.push(gram.clone());
        self.index.insert(gram.clone(), self.grams.len() - 1);
        self.grams.len() - 1
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn get(&self, gram: &str) -> Option<usize> {
        self.index.get(gram).copied()
    }

    pub fn grams(&self) -> &[Ngram] {
        &self.grams
    }
}

/// Feature vector of a symbol sequence against `vocabulary`.
pub fn feature_vector<S: AsRef<str>>(symbols: &[S], vocabulary: &Vocabulary, n: usize) -> FeatureVector {
    let grams = ngram_set(symbols, n);
    if grams.is_empty() {
        return FeatureVector { coords: Vec::new(), out_of_vocabulary: 0 };
    }
    let weight = 1.0 / (grams.len() as f64).sqrt();
    let mut coords: Vec<(usize, f64)> = grams.iter().filter_map(|g| vocabulary.get(g)).map(|j| (j, weight)).collect();
    coords.sort_by_key(|c| c.0);
    let out_of_vocabulary = grams.len() - coords.len();
    FeatureVector { coords, out_of_vocabulary }
}

/// `L x M` matrix stored by columns; entries are `1/sqrt(|column support|)`.
#[derive(Debug, Clone)]
pub struct UnitColumnMatrix {
    rows: usize,
    columns: Vec<Vec<(usize, f64)>>,
}

impl UnitColumnMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, k: usize) -> &[(usize, f64)] {
        &self.columns[k]
    }

    /// `D^T d` for a dense vector `d` of length `rows`.
    pub fn transpose_mul(&self, d: &[f64]) -> Vec<f64> {
        debug_assert_eq!(d.len(), self.rows);
        self.columns.iter().map(|col| col.iter().map(|&(j, w)| w * d[j]).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols()]; self.rows];
        for (k, col) in self.columns.iter().enumerate() {
            for &(j, w) in col {
                out[j][k] = w;
            }
        }
        out
    }
}

/// Vocabulary and unit-column matrix for one channel.
#[derive(Debug, Clone)]
pub struct ChannelIndex {
    pub vocabulary: Vocabulary,
    pub matrix: UnitColumnMatrix,
}

impl ChannelIndex {
    fn build(candidates: &[Vec<String>], n: usize) -> Self {
        let mut vocabulary = Vocabulary::default();
        let sets: Vec<BTreeSet<Ngram>> = candidates.iter().map(|c| ngram_set(c, n)).collect();
        let mut columns = Vec::with_capacity(sets.len());
        for set in &sets {
            let w = if set.is_empty() { 0.0 } else { 1.0 / (set.len() as f64).sqrt() };
            let mut col: Vec<(usize, f64)> = set.iter().map(|g| (vocabulary.intern(g), w)).collect();
            col.sort_by_key(|c| c.0);
            columns.push(col);
        }
        let rows = vocabulary.len();
        ChannelIndex { vocabulary, matrix: UnitColumnMatrix { rows, columns } }
    }

    fn scores<S: AsRef<str>>(&self, symbols: &[S], n: usize) -> Vec<f64> {
        let fv = feature_vector(symbols, &self.vocabulary, n);
        if fv.is_zero() {
            return vec![0.0; self.matrix.cols()];
        }
        self.matrix.transpose_mul(&fv.to_dense(self.vocabulary.len()))
    }
}

/// Index over one candidate list.
#[derive(Debug, Clone)]
pub struct NgramIndex {
    pub candidates: Vec<String>,
    pub word: ChannelIndex,
    pub pron: ChannelIndex,
}

impl NgramIndex {
    pub fn build(candidates: &[String], dictionary: &PronunciationDictionary, n: usize) -> Self {
        let words: Vec<Vec<String>> = candidates.iter().map(|c| char_symbols(c)).collect();
        let prons: Vec<Vec<String>> = candidates.iter().map(|c| to_pronunciation(dictionary, c)).collect();
        NgramIndex {
            candidates: candidates.to_vec(),
            word: ChannelIndex::build(&words, n),
            pron: ChannelIndex::build(&prons, n),
        }
    }

    /// Per-channel scores `(word, pron)`.
    pub fn channel_scores(&self, value: &str, dictionary: &PronunciationDictionary, n: usize) -> (Vec<f64>, Vec<f64>) {
        let word = self.word.scores(&char_symbols(value), n);
        let pron = self.pron.scores(&to_pronunciation(dictionary, value), n);
        (word, pron)
    }
}

/// Indices for every candidate list of an ontology.
#[derive(Debug, Clone)]
pub struct VerIndex {
    lists: BTreeMap<CandidateKey, NgramIndex>,
    ontology: Ontology,
    dictionary: PronunciationDictionary,
    n: usize,
}

/// Builds one [`NgramIndex`] per non-empty candidate list.
pub fn build_index(ontology: &Ontology, dictionary: &PronunciationDictionary, config: &VerConfig) -> VerIndex {
    let lists = ontology
        .lists()
        .map(|(key, values)| (key, NgramIndex::build(values, dictionary, config.n)))
        .collect();
    VerIndex { lists, ontology: ontology.clone(), dictionary: dictionary.clone(), n: config.n }
}

impl VerIndex {
    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn dictionary(&self) -> &PronunciationDictionary {
        &self.dictionary
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Index of the candidate list `(act, slot)` resolves to.
    pub fn lookup(&self, act: &str, slot: &str) -> Option<&NgramIndex> {
        let (key, _) = self.ontology.resolve(act, slot)?;
        self.lists.get(&key)
    }

    pub fn is_candidate(&self, triplet: &SemanticTriplet) -> bool {
        self.ontology.candidate_set(&triplet.act, &triplet.slot).iter().any(|v| *v == triplet.value)
    }
}

/// Blended similarity of `value` to every candidate of `(act, slot)`.
pub fn similarity(value: &str, act: &str, slot: &str, index: &VerIndex, config: &VerConfig) -> Result<Vec<f64>, VerError> {
    let list = index
        .lookup(act, slot)
        .ok_or_else(|| VerError::AbsentCandidateSet { act: act.into(), slot: slot.into() })?;
    let (word, pron) = list.channel_scores(value, &index.dictionary, index.n);
    Ok(word
        .iter()
        .zip(&pron)
        .map(|(w, p)| (config.lambda * w + (1.0 - config.lambda) * p).clamp(0.0, 1.0))
        .collect())
}

/// First index of the maximum.
fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(k);
        }
    }
    best
}

/// Recovers one triplet; `None` means drop.
pub fn recover_triplet(triplet: &SemanticTriplet, index: &VerIndex, config: &VerConfig) -> Option<SemanticTriplet> {
    match config.mode {
        PostProcess::None => Some(triplet.clone()),
        PostProcess::Delete => index.is_candidate(triplet).then(|| triplet.clone()),
        PostProcess::Ver => {
            if index.is_candidate(triplet) {
                return Some(triplet.clone());
            }
            let scores = similarity(&triplet.value, &triplet.act, &triplet.slot, index, config).ok()?;
            let best = argmax(&scores)?;
            if scores[best] + THRESHOLD_SLACK >= config.threshold {
                let value = index.lookup(&triplet.act, &triplet.slot)?.candidates[best].clone();
                Some(SemanticTriplet { value, ..triplet.clone() })
            } else {
                None
            }
        }
    }
}

/// Applies the configured post-processing to a set of predicted triplets.
pub fn recover(triplets: &TripletSet, index: &VerIndex, config: &VerConfig) -> TripletSet {
    triplets.iter().filter_map(|t| recover_triplet(t, index, config)).collect()
}
