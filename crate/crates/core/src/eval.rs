//! Triplet-level micro F1, utterance-level joint accuracy and CER buckets.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{character_error_rate, SemanticTriplet, TripletSet, Utterance};
use crate::tagger::{Tagger, TaggerError};
use crate::ver::{recover, PostProcess, VerConfig, VerIndex};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("bucket edges must be strictly increasing, got {0:?}")]
    BucketEdges(Vec<f64>),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tagger output for one utterance, before post-processing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub id: String,
    pub cer: f64,
    pub gold: TripletSet,
    pub raw: TripletSet,
}

/// One line of a prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub cer: f64,
    pub gold: Vec<SemanticTriplet>,
    /// Triplets read off the tags.
    pub raw: Vec<SemanticTriplet>,
    /// Triplets after post-processing; these are scored.
    pub predicted: Vec<SemanticTriplet>,
}

impl Prediction {
    fn sets(&self) -> (TripletSet, TripletSet) {
        (self.gold.iter().cloned().collect(), self.predicted.iter().cloned().collect())
    }
}

/// Micro-averaged counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub exact: usize,
    pub utterances: usize,
}

impl Counts {
    pub fn add(&mut self, gold: &TripletSet, predicted: &TripletSet) {
        self.tp += predicted.intersection_count(gold);
        self.fp += predicted.difference_count(gold);
        self.fn_ += gold.difference_count(predicted);
        self.exact += usize::from(gold == predicted);
        self.utterances += 1;
    }

    pub fn merge(mut self, other: Counts) -> Counts {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.exact += other.exact;
        self.utterances += other.utterances;
        self
    }

    /// 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 0 when the gold side is empty.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn joint_accuracy(&self) -> f64 {
        ratio(self.exact, self.utterances)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub cer_low: f64,
    /// `f64::INFINITY` for the open last bucket; serialized as `null`.
    pub cer_high: f64,
    pub count: usize,
    pub f1: f64,
    pub joint_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: PostProcess,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub joint_accuracy: f64,
    pub utterances: usize,
    pub buckets: Vec<BucketRow>,
}

impl EvalReport {
    pub fn from_counts(mode: PostProcess, counts: Counts, buckets: Vec<BucketRow>) -> Self {
        Self {
            mode,
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            joint_accuracy: counts.joint_accuracy(),
            utterances: counts.utterances,
            buckets,
        }
    }
}

/// `0, 0.1, ..., 0.9, inf`.
pub fn default_bucket_edges() -> Vec<f64> {
    let mut edges: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
    edges.push(f64::INFINITY);
    edges
}

/// Decodes every hypothesis (top-1 of a beam of `beam`) in parallel.
pub fn decode_corpus(model: &Tagger, corpus: &[Utterance], beam: usize) -> Result<Vec<RawPrediction>, EvalError> {
    corpus
        .par_iter()
        .map(|u| {
            let hyp = u.hypothesis_chars();
            Ok(RawPrediction {
                id: u.id.clone(),
                cer: character_error_rate(&hyp, &u.transcription_chars()),
                gold: u.gold.clone(),
                raw: model.predict_triplets(&hyp, beam)?,
            })
        })
        .collect()
}

/// Applies one post-processing mode to decoded output.
pub fn postprocess(raw: &[RawPrediction], index: &VerIndex, config: &VerConfig, mode: PostProcess) -> Vec<Prediction> {
    let config = VerConfig { mode, ..config.clone() };
    raw.iter()
        .map(|r| Prediction {
            id: r.id.clone(),
            cer: r.cer,
            gold: r.gold.iter().cloned().collect(),
            raw: r.raw.iter().cloned().collect(),
            predicted: recover(&r.raw, index, &config).into_iter().collect(),
        })
        .collect()
}

/// Scores a prediction dump with the default CER buckets.
pub fn score(predictions: &[Prediction], mode: PostProcess) -> EvalReport {
    let mut counts = Counts::default();
    for p in predictions {
        let (gold, predicted) = p.sets();
        counts.add(&gold, &predicted);
    }
    let buckets = cer_bucket_report(predictions, &default_bucket_edges()).expect("default edges are increasing");
    EvalReport::from_counts(mode, counts, buckets)
}

/// Decodes `corpus` and scores it under `config.mode`.
pub fn evaluate(
    model: &Tagger,
    corpus: &[Utterance],
    index: &VerIndex,
    config: &VerConfig,
    beam: usize,
) -> Result<(EvalReport, Vec<Prediction>), EvalError> {
    let raw = decode_corpus(model, corpus, beam)?;
    let predictions = postprocess(&raw, index, config, config.mode);
    Ok((score(&predictions, config.mode), predictions))
}

/// Decodes once and scores under every mode in `modes`.
pub fn evaluate_modes(
    model: &Tagger,
    corpus: &[Utterance],
    index: &VerIndex,
    config: &VerConfig,
    modes: &[PostProcess],
    beam: usize,
) -> Result<Vec<(EvalReport, Vec<Prediction>)>, EvalError> {
    let raw = decode_corpus(model, corpus, beam)?;
    Ok(modes
        .iter()
        .map(|&mode| {
            let predictions = postprocess(&raw, index, config, mode);
            (score(&predictions, mode), predictions)
        })
        .collect())
}

/// Partitions predictions into `[edges[i], edges[i+1])` by CER; utterances
/// outside every bucket are ignored.
pub fn cer_bucket_report(predictions: &[Prediction], edges: &[f64]) -> Result<Vec<BucketRow>, EvalError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(EvalError::BucketEdges(edges.to_vec()));
    }
    let mut counts = vec![Counts::default(); edges.len() - 1];
    for p in predictions {
        if let Some(k) = edges.windows(2).position(|w| p.cer >= w[0] && p.cer < w[1]) {
            let (gold, predicted) = p.sets();
            counts[k].add(&gold, &predicted);
        }
    }
    Ok(edges
        .windows(2)
        .zip(counts)
        .map(|(w, c)| BucketRow {
            cer_low: w[0],
            cer_high: w[1],
            count: c.utterances,
            f1: c.f1(),
            joint_accuracy: c.joint_accuracy(),
        })
        .collect())
}

/// Tab-separated `cer_low cer_high count f1`, with an optional `#` header line.
pub fn write_bucket_tsv<W: Write>(mut w: W, rows: &[BucketRow], header: Option<&str>) -> std::io::Result<()> {
    if let Some(h) = header {
        writeln!(w, "# {h}")?;
    }
    writeln!(w, "cer_low\tcer_high\tcount\tf1")?;
    for r in rows {
        writeln!(w, "{}\t{}\t{}\t{:.6}", r.cer_low, r.cer_high, r.count, r.f1)?;
    }
    Ok(())
}

/// One JSON object per line.
pub fn write_predictions<W: Write>(mut w: W, predictions: &[Prediction]) -> std::io::Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut w, p)?;
        writeln!(w)?;
    }
    Ok(())
}
