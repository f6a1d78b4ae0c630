//! Character-level slot tagger: embeddings, BLSTM encoder, focus decoder
//! (the decoder at step `t` reads exactly encoder state `h_t`), softmax tag
//! distribution, greedy and beam decoding.

mod decode;
mod model;
mod persist;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SemanticTriplet, Tag, Utterance};
use crate::nncore::NnError;

pub use decode::{BeamEntry, ScoredSequence};
pub use model::{EncodedUtterance, ForwardMode, Tagger};
pub use persist::{load_tagger, save_tagger};

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("{tags} tags for {chars} characters")]
    LengthMismatch { chars: usize, tags: usize },
    #[error("tag `{0}` is not in the tagset")]
    UnknownTag(String),
    #[error("invalid tagger config: {0}")]
    InvalidConfig(String),
    #[error("invalid checkpoint metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggerConfig {
    pub embedding_dim: usize,
    /// Hidden units per encoder direction; also the decoder width.
    pub hidden_units: usize,
    pub label_embedding_dim: usize,
    pub use_lexicon_features: bool,
    pub dropout_p: f64,
    pub init_range: f64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 200,
            hidden_units: 256,
            label_embedding_dim: 32,
            use_lexicon_features: true,
            dropout_p: 0.5,
            init_range: 0.2,
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<(), TaggerError> {
        if self.embedding_dim == 0 || self.hidden_units == 0 || self.label_embedding_dim == 0 {
            return Err(TaggerError::InvalidConfig("dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(TaggerError::InvalidConfig(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        if self.init_range <= 0.0 {
            return Err(TaggerError::InvalidConfig("init_range must be positive".into()));
        }
        Ok(())
    }
}

/// Ordered tag inventory: `O`, then `B-x`, `I-x` for every label in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    tags: Vec<Tag>,
    index: HashMap<Tag, usize>,
}

impl TagSet {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        let mut tags = vec![Tag::Outside];
        for l in labels {
            tags.push(Tag::Begin(l.clone()));
            tags.push(Tag::Inside(l));
        }
        Self::from_tags(tags).expect("generated tagset is valid")
    }

    /// Labels of every triplet and tag in a corpus.
    pub fn from_corpus<'a>(utterances: impl IntoIterator<Item = &'a Utterance>) -> Self {
        let mut labels = BTreeSet::new();
        for u in utterances {
            labels.extend(u.gold.iter().map(SemanticTriplet::label));
            if let Some(tags) = &u.transcription_tags {
                labels.extend(tags.iter().filter_map(|t| t.label().map(str::to_string)));
            }
        }
        Self::from_labels(labels)
    }

    pub fn from_tags(tags: Vec<Tag>) -> Result<Self, TaggerError> {
        if !tags.contains(&Tag::Outside) {
            return Err(TaggerError::InvalidConfig("tagset lacks O".into()));
        }
        let index: HashMap<Tag, usize> = tags.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        if index.len() != tags.len() {
            return Err(TaggerError::InvalidConfig("tagset has duplicates".into()));
        }
        Ok(Self { tags, index })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn tag(&self, index: usize) -> &Tag {
        &self.tags[index]
    }

    pub fn index_of(&self, tag: &Tag) -> Result<usize, TaggerError> {
        self.index.get(tag).copied().ok_or_else(|| TaggerError::UnknownTag(tag.to_string()))
    }

    pub fn encode(&self, tags: &[Tag]) -> Result<Vec<usize>, TaggerError> {
        tags.iter().map(|t| self.index_of(t)).collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<Tag> {
        indices.iter().map(|&i| self.tags[i].clone()).collect()
    }
}

/// Character vocabulary; index 0 is reserved for unknown characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    pub const UNK: usize = 0;

    /// Sorted distinct characters of `texts`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<char> = texts.into_iter().flat_map(str::chars).collect();
        Self::from_chars(set.into_iter().collect())
    }

    /// Characters of every transcription and hypothesis.
    pub fn from_corpus<'a>(utterances: impl IntoIterator<Item = &'a Utterance>) -> Self {
        let mut set = BTreeSet::new();
        for u in utterances {
            set.extend(u.transcription.chars());
            set.extend(u.hypothesis.chars());
        }
        Self::from_chars(set.into_iter().collect())
    }

    pub fn from_chars(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        Self { chars, index }
    }

    /// Size including the unknown row.
    pub fn len(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(Self::UNK)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}
