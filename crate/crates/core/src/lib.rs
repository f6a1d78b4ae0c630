//! Robust spoken language understanding on ASR hypotheses.
//!
//! A character-level BIO slot tagger (BLSTM encoder, focus decoder) is
//! pretrained on manual transcriptions and then adapted to noisy ASR
//! hypotheses with policy-gradient training. The reward is computed after
//! rule-based value error recovery, which snaps predicted values onto the
//! domain ontology by n-gram cosine similarity over characters and phonemes.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: utterances, triplets, BIO tags, alignment, ASR noise
//! - [`ontology`]: candidate values, pronunciations, lexicon features
//! - [`ver`]: value error recovery
//! - [`nncore`]: tensors, LSTM cell, softmax, Adam, checkpoints
//! - [`tagger`]: the slot tagging model and its decoders
//! - [`training`]: pretraining, rewards, policy gradient, the two-stage loop
//! - [`eval`]: triplet F1, joint accuracy, CER buckets
//! - [`synth`]: templated synthetic corpora
//! - [`cli`]: the `synth`/`train`/`eval`/`correct` commands
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod corpus;
pub mod eval;
pub mod nncore;
pub mod ontology;
pub mod synth;
pub mod tagger;
pub mod training;
pub mod ver;
