//! Supervised pretraining on transcriptions, rewards, policy-gradient
//! adaptation to ASR hypotheses and the two-stage training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{align_hypothesis, tags_to_triplets, CorpusError, TripletSet, Utterance};
use crate::eval::{evaluate, EvalError, EvalReport};
use crate::nncore::{adam_step, clip_gradients, AdamConfig, Gradients, ParameterStore};
use crate::tagger::{ForwardMode, ScoredSequence, Tagger, TaggerError};
use crate::ver::{recover, PostProcess, VerConfig, VerIndex};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("refusing to run: {0}")]
    Refused(String),
    #[error("utterance `{id}`: {source}")]
    Data { id: String, source: CorpusError },
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Which stages of the two-stage procedure run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    #[default]
    Full,
    PretrainOnly,
    /// Policy gradient from random initialization with no supervised data.
    RlOnly,
}

/// Input text of the policy-gradient stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RlSource {
    #[default]
    Hypothesis,
    Transcription,
}

/// How the K rollouts are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rollout {
    /// Deterministic top-K beam.
    #[default]
    Beam,
    /// K independent ancestral samples.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub eta1: f64,
    pub eta2: f64,
    /// Rollouts per utterance.
    pub k: usize,
    pub eval_beam: usize,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub rl_batch_size: usize,
    /// Per stage.
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub stage: Stage,
    pub rl_source: RlSource,
    pub rollout: Rollout,
    /// Needed for [`Stage::RlOnly`].
    pub allow_rl_from_scratch: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta1: 1e-3,
            eta2: 5e-4,
            k: 10,
            eval_beam: 5,
            clip_norm: 5.0,
            batch_size: 32,
            rl_batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 1,
            stage: Stage::Full,
            rl_source: RlSource::Hypothesis,
            rollout: Rollout::Beam,
            allow_rl_from_scratch: false,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.k < 2 {
            return bad("k must be at least 2");
        }
        if self.eval_beam == 0 || self.batch_size == 0 || self.rl_batch_size == 0 {
            return bad("beam and batch sizes must be positive");
        }
        if !(self.eta1 > 0.0 && self.eta2 > 0.0 && self.clip_norm > 0.0) {
            return bad("learning rates and clip norm must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        Ok(())
    }
}

/// Reward of one rollout against the gold set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub reward: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub r_triplet: f64,
    pub r_utt: f64,
    /// Mean reward of the beam this rollout belongs to.
    pub baseline: f64,
}

impl RewardRecord {
    pub fn advantage(&self) -> f64 {
        self.reward - self.baseline
    }
}

/// `r_triplet = 1 - (FP + FN) / max(|gold|, 1)`, `r_utt = [gold == predicted]`.
/// The baseline is left at 0; see [`assign_baseline`].
pub fn compute_reward(gold: &TripletSet, predicted: &TripletSet) -> RewardRecord {
    let fp = predicted.difference_count(gold);
    let fn_ = gold.difference_count(predicted);
    let r_triplet = 1.0 - (fp + fn_) as f64 / gold.len().max(1) as f64;
    let r_utt = if gold == predicted { 1.0 } else { 0.0 };
    RewardRecord { reward: r_triplet + r_utt, fp, fn_, r_triplet, r_utt, baseline: 0.0 }
}

/// Sets every record's baseline to the mean reward of `records`.
pub fn assign_baseline(records: &mut [RewardRecord]) {
    if records.is_empty() {
        return;
    }
    let mean = records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64;
    for r in records {
        r.baseline = mean;
    }
}

/// A supervised example: input characters and gold tag indices.
pub type TaggedExample = (Vec<char>, Vec<usize>);

/// Input characters and tag indices of the transcription of `u`.
pub fn tagged_example(model: &Tagger, u: &Utterance) -> Result<TaggedExample, TrainError> {
    let data = |source| TrainError::Data { id: u.id.clone(), source };
    let tags = u.tags_or_derive().map_err(data)?;
    let chars = u.transcription_chars();
    if chars.is_empty() {
        return Err(data(CorpusError::InvalidTag("empty transcription".into())));
    }
    Ok((chars, model.tagset.encode(&tags)?))
}

/// Sums per-example gradients in input order.
fn reduce(store: &ParameterStore, parts: Vec<Gradients>) -> Gradients {
    let mut total = store.zero_gradients();
    for g in &parts {
        total.add(g);
    }
    total
}

/// `-mean log P(tags | chars)` over `batch` in training mode, followed by
/// clipping and an Adam step at `learning_rate`. Returns the batch loss.
pub fn supervised_step(
    model: &mut Tagger,
    batch: &[TaggedExample],
    learning_rate: f64,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    for (chars, tags) in batch {
        if chars.is_empty() {
            return Err(TaggerError::EmptyInput.into());
        }
        if chars.len() != tags.len() {
            return Err(TaggerError::LengthMismatch { chars: chars.len(), tags: tags.len() }.into());
        }
    }
    let coef = -1.0 / batch.len() as f64;
    let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
    let m: &Tagger = model;
    let results: Vec<(f64, Gradients)> = batch
        .par_iter()
        .zip(&seeds)
        .map(|((chars, tags), &seed)| {
            let mut g = m.store.zero_gradients();
            let mut drop_rng = ChaCha8Rng::seed_from_u64(seed);
            let lp = m.accumulate_log_prob_gradients(chars, &[(tags, coef)], &mut ForwardMode::Train(&mut drop_rng), &mut g)?;
            Ok((lp[0], g))
        })
        .collect::<Result<_, TaggerError>>()?;
    let loss = -results.iter().map(|r| r.0).sum::<f64>() / batch.len() as f64;
    let grads = reduce(&model.store, results.into_iter().map(|r| r.1).collect());
    apply(model, &grads, learning_rate, config);
    Ok(loss)
}

fn apply(model: &mut Tagger, grads: &Gradients, learning_rate: f64, config: &TrainConfig) {
    model.store.zero_grad();
    model.store.accumulate(grads, 1.0);
    clip_gradients(&mut model.store, config.clip_norm);
    adam_step(&mut model.store, learning_rate, &config.adam);
}

/// Mean negative log-likelihood in evaluation mode.
pub fn nll(model: &Tagger, batch: &[TaggedExample]) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for (chars, tags) in batch {
        total -= model.sequence_log_prob(chars, tags)?;
    }
    Ok(total / batch.len().max(1) as f64)
}

/// Rollouts and rewards for one utterance.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub characters: Vec<char>,
    pub sequences: Vec<ScoredSequence>,
    pub records: Vec<RewardRecord>,
}

/// Produces up to K rollouts for `characters` and scores each after VER.
pub fn rollouts(
    model: &Tagger,
    characters: &[char],
    gold: &TripletSet,
    index: &VerIndex,
    ver: &VerConfig,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutBatch, TrainError> {
    let sequences = match config.rollout {
        Rollout::Beam => model.beam_search(characters, config.k, config.k)?,
        Rollout::Sample => model.sample(characters, config.k, rng)?,
    };
    let ver = VerConfig { mode: PostProcess::Ver, ..ver.clone() };
    let mut records: Vec<RewardRecord> = sequences
        .iter()
        .map(|s| {
            let raw = tags_to_triplets(characters, &model.tagset.decode(&s.tags));
            compute_reward(gold, &recover(&raw, index, &ver))
        })
        .collect();
    assign_baseline(&mut records);
    Ok(RolloutBatch { characters: characters.to_vec(), sequences, records })
}

/// Gradient of the policy-gradient loss
/// `-(1 / (K * batch)) * sum_k (R_k - B) * log P(y_k)` for the given rollouts.
pub fn policy_gradient(model: &Tagger, batch: &[RolloutBatch]) -> Result<Gradients, TrainError> {
    let n = batch.len().max(1) as f64;
    let parts: Vec<Gradients> = batch
        .par_iter()
        .map(|b| {
            let mut g = model.store.zero_gradients();
            let k = b.sequences.len() as f64;
            let weighted: Vec<(&[usize], f64)> =
                b.sequences.iter().zip(&b.records).map(|(s, r)| (s.tags.as_slice(), -r.advantage() / (k * n))).collect();
            model.accumulate_log_prob_gradients::<ChaCha8Rng>(&b.characters, &weighted, &mut ForwardMode::Eval, &mut g)?;
            Ok(g)
        })
        .collect::<Result<_, TaggerError>>()?;
    Ok(reduce(&model.store, parts))
}

/// Rolls out every `(characters, gold)` pair, then takes one clipped Adam
/// step at `eta2`. Inputs with no characters are skipped. When every
/// advantage is zero no update is made.
pub fn policy_gradient_step(
    model: &mut Tagger,
    batch: &[(Vec<char>, TripletSet)],
    index: &VerIndex,
    ver: &VerConfig,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<RewardRecord>>, TrainError> {
    let usable: Vec<&(Vec<char>, TripletSet)> = batch.iter().filter(|(c, _)| !c.is_empty()).collect();
    let seeds: Vec<u64> = usable.iter().map(|_| rng.gen()).collect();
    let m: &Tagger = model;
    let rolled: Vec<RolloutBatch> = usable
        .par_iter()
        .zip(&seeds)
        .map(|((chars, gold), &seed)| rollouts(m, chars, gold, index, ver, config, &mut ChaCha8Rng::seed_from_u64(seed)))
        .collect::<Result<_, _>>()?;
    if rolled.iter().any(|b| b.records.iter().any(|r| r.advantage() != 0.0)) {
        let grads = policy_gradient(model, &rolled)?;
        apply(model, &grads, config.eta2, config);
    }
    Ok(rolled.into_iter().map(|b| b.records).collect())
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: String,
    pub train_loss: f64,
    pub mean_reward: Option<f64>,
    pub rl_batches: usize,
    pub supervised_batches: usize,
    pub valid_f1: f64,
    pub valid_joint_accuracy: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// `(stage, epoch)` of the selected model; epoch 0 is the starting point.
    pub best_stage: String,
    pub best_epoch: usize,
    pub best_valid: EvalReport,
    /// Best parameters at the end of stage 1, which equal the result of a
    /// pretrain-only run with the same seed.
    pub pretrained: Option<ParameterStore>,
    pub log: Vec<EpochLog>,
}

/// Training data for [`train`].
pub struct TrainData<'a> {
    /// Transcriptions with gold semantics (and optionally tags).
    pub tscp: &'a [Utterance],
    /// Hypotheses with gold semantics; no tags needed.
    pub hyp: &'a [Utterance],
    /// Scored on hypotheses with VER after every epoch.
    pub valid: &'a [Utterance],
}

struct Selector {
    best: Option<(f64, f64)>,
    store: ParameterStore,
    stage: String,
    epoch: usize,
    report: Option<EvalReport>,
}

impl Selector {
    /// Keeps `model` if its validation joint accuracy (then F1) is strictly better.
    fn offer(&mut self, model: &Tagger, report: &EvalReport, stage: &str, epoch: usize) -> bool {
        let key = (report.joint_accuracy, report.f1);
        let better = self.best.is_none_or(|b| key > b);
        if better {
            self.best = Some(key);
            self.store = model.store.clone();
            self.stage = stage.to_string();
            self.epoch = epoch;
            self.report = Some(report.clone());
        }
        better
    }
}

/// Two-stage training; `model` ends up holding the selected parameters.
///
/// Stage 1 runs supervised epochs on `data.tscp`. Stage 2 starts from the
/// best stage-1 model and alternates one policy-gradient batch on
/// `data.hyp` with one supervised batch on `data.tscp`. Each stage stops
/// after `patience` epochs without improvement on validation joint accuracy.
/// The returned model is the best one seen, including the starting point.
pub fn train(
    model: &mut Tagger,
    data: &TrainData<'_>,
    index: &VerIndex,
    ver: &VerConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let run_pretrain = config.stage != Stage::RlOnly;
    let run_rl = config.stage != Stage::PretrainOnly && !data.hyp.is_empty();
    if config.stage == Stage::RlOnly && !config.allow_rl_from_scratch {
        return Err(TrainError::Refused(
            "policy-gradient training without supervised data collapses; set allow_rl_from_scratch to run it anyway".into(),
        ));
    }
    if run_pretrain && data.tscp.is_empty() {
        return Err(TrainError::Refused("no transcription data for supervised training".into()));
    }
    if config.stage == Stage::RlOnly && data.hyp.is_empty() {
        return Err(TrainError::Refused("no hypothesis data for policy-gradient training".into()));
    }
    let supervised: Vec<TaggedExample> = if run_pretrain {
        data.tscp.iter().map(|u| tagged_example(model, u)).collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let rl_data: Vec<(Vec<char>, TripletSet)> = data
        .hyp
        .iter()
        .map(|u| {
            let chars = match config.rl_source {
                RlSource::Hypothesis => u.hypothesis_chars(),
                RlSource::Transcription => u.transcription_chars(),
            };
            (chars, u.gold.clone())
        })
        .collect();
    let eval_ver = VerConfig { mode: PostProcess::Ver, ..ver.clone() };
    let validate = |m: &Tagger| -> Result<EvalReport, TrainError> {
        Ok(evaluate(m, data.valid, index, &eval_ver, config.eval_beam)?.0)
    };

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x4452_4f50);
    let mut rollout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x524f_4c4c);
    let mut log = Vec::new();
    let start = validate(model)?;
    let mut selector =
        Selector { best: None, store: model.store.clone(), stage: "init".into(), epoch: 0, report: None };
    selector.offer(model, &start, "init", 0);

    if run_pretrain {
        let mut order: Vec<usize> = (0..supervised.len()).collect();
        let mut stale = 0;
        for epoch in 1..=config.max_epochs {
            let t0 = Instant::now();
            order.shuffle(&mut shuffle_rng);
            let mut loss = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<TaggedExample> = chunk.iter().map(|&i| supervised[i].clone()).collect();
                loss += supervised_step(model, &batch, config.eta1, config, &mut dropout_rng)?;
                batches += 1;
            }
            let report = validate(model)?;
            let entry = EpochLog {
                epoch,
                stage: "pretrain".into(),
                train_loss: loss / batches.max(1) as f64,
                mean_reward: None,
                rl_batches: 0,
                supervised_batches: batches,
                valid_f1: report.f1,
                valid_joint_accuracy: report.joint_accuracy,
                wall_time_s: t0.elapsed().as_secs_f64(),
            };
            on_epoch(&entry);
            log.push(entry);
            if selector.offer(model, &report, "pretrain", epoch) {
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
        model.store = selector.store.clone();
    }
    let pretrained = run_pretrain.then(|| selector.store.clone());

    if run_rl {
        let mut rl_order: Vec<usize> = (0..rl_data.len()).collect();
        let mut sup_order: Vec<usize> = (0..supervised.len()).collect();
        sup_order.shuffle(&mut shuffle_rng);
        let mut sup_cursor = 0;
        let mut stale = 0;
        for epoch in 1..=config.max_epochs {
            let t0 = Instant::now();
            rl_order.shuffle(&mut shuffle_rng);
            let (mut loss, mut reward_sum, mut reward_n) = (0.0, 0.0, 0usize);
            let (mut rl_batches, mut sup_batches) = (0, 0);
            for chunk in rl_order.chunks(config.rl_batch_size) {
                let batch: Vec<(Vec<char>, TripletSet)> = chunk.iter().map(|&i| rl_data[i].clone()).collect();
                let records = policy_gradient_step(model, &batch, index, ver, config, &mut rollout_rng)?;
                for r in records.iter().flatten() {
                    reward_sum += r.reward;
                    reward_n += 1;
                }
                rl_batches += 1;
                if !supervised.is_empty() {
                    let mut batch = Vec::with_capacity(config.batch_size);
                    while batch.len() < config.batch_size.min(supervised.len()) {
                        if sup_cursor == sup_order.len() {
                            sup_order.shuffle(&mut shuffle_rng);
                            sup_cursor = 0;
                        }
                        batch.push(supervised[sup_order[sup_cursor]].clone());
                        sup_cursor += 1;
                    }
                    loss += supervised_step(model, &batch, config.eta1, config, &mut dropout_rng)?;
                    sup_batches += 1;
                }
            }
            let report = validate(model)?;
            let entry = EpochLog {
                epoch,
                stage: "rl".into(),
                train_loss: loss / sup_batches.max(1) as f64,
                mean_reward: Some(reward_sum / reward_n.max(1) as f64),
                rl_batches,
                supervised_batches: sup_batches,
                valid_f1: report.f1,
                valid_joint_accuracy: report.joint_accuracy,
                wall_time_s: t0.elapsed().as_secs_f64(),
            };
            on_epoch(&entry);
            log.push(entry);
            if selector.offer(model, &report, "rl", epoch) {
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }

    model.store = selector.store;
    Ok(TrainOutcome {
        best_stage: selector.stage,
        best_epoch: selector.epoch,
        best_valid: selector.report.expect("initial model is always offered"),
        pretrained,
        log,
    })
}

/// DA-Gen: greedy-decodes each hypothesis and returns it as a tagged
/// training utterance (transcription = hypothesis) keeping the gold set.
/// Empty hypotheses are skipped.
pub fn da_generate_pseudo(model: &Tagger, utterances: &[Utterance]) -> Result<Vec<Utterance>, TrainError> {
    utterances
        .iter()
        .filter(|u| !u.hypothesis.is_empty())
        .map(|u| {
            let chars = u.hypothesis_chars();
            let tags = model.tagset.decode(&model.greedy(&chars)?.tags);
            Ok(Utterance {
                id: format!("{}-gen", u.id),
                transcription: u.hypothesis.clone(),
                hypothesis: u.hypothesis.clone(),
                gold: u.gold.clone(),
                transcription_tags: Some(tags),
            })
        })
        .collect()
}

/// DA-Align: transfers transcription tags onto each hypothesis through the
/// edit-distance alignment. Empty hypotheses are skipped.
pub fn da_align_pseudo(utterances: &[Utterance]) -> Result<Vec<Utterance>, TrainError> {
    utterances
        .iter()
        .filter(|u| !u.hypothesis.is_empty())
        .map(|u| {
            let tags = u.tags_or_derive().map_err(|source| TrainError::Data { id: u.id.clone(), source })?;
            let aligned = align_hypothesis(&u.transcription_chars(), &u.hypothesis_chars(), &tags);
            Ok(Utterance {
                id: format!("{}-align", u.id),
                transcription: u.hypothesis.clone(),
                hypothesis: u.hypothesis.clone(),
                gold: u.gold.clone(),
                transcription_tags: Some(aligned),
            })
        })
        .collect()
}
