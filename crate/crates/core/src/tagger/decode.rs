use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::model::ForwardMode;
use super::{Tagger, TaggerError};
use crate::corpus::{tags_to_triplets, TripletSet};
use crate::nncore::{Gradients, LstmCellState};

/// A partial or complete hypothesis kept on the beam.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamEntry {
    pub tags: Vec<usize>,
    pub log_prob: f64,
    pub state: LstmCellState,
}

/// A complete tag sequence and its log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSequence {
    pub tags: Vec<usize>,
    pub log_prob: f64,
}

impl Tagger {
    /// Top `k_return` tag sequences by log-probability, best first.
    ///
    /// Candidates are generated in (beam entry, tag index) order and sorted
    /// stably, so ties keep that order.
    pub fn beam_search(
        &self,
        characters: &[char],
        beam_width: usize,
        k_return: usize,
    ) -> Result<Vec<ScoredSequence>, TaggerError> {
        if beam_width == 0 || k_return == 0 || k_return > beam_width {
            return Err(TaggerError::InvalidConfig(format!(
                "need 1 <= k_return ({k_return}) <= beam_width ({beam_width})"
            )));
        }
        let encoded = self.encode::<ChaCha8Rng>(characters, &mut ForwardMode::Eval)?;
        let mut beam = vec![BeamEntry {
            tags: Vec::new(),
            log_prob: 0.0,
            state: encoded.initial_decoder_state(self.hidden()),
        }];
        for h_t in &encoded.states {
            let mut candidates: Vec<(usize, usize, f64)> = Vec::with_capacity(beam.len() * self.tagset.len());
            let mut next_states = Vec::with_capacity(beam.len());
            for (b, entry) in beam.iter().enumerate() {
                let prev = entry.tags.last().copied().unwrap_or(self.bos());
                let (next, cache) = self.decoder_forward::<ChaCha8Rng>(prev, h_t, &entry.state, &mut ForwardMode::Eval)?;
                for (tag, lp) in cache.log_probs.iter().enumerate() {
                    candidates.push((b, tag, entry.log_prob + lp));
                }
                next_states.push(next);
            }
            candidates.sort_by(|a, b| b.2.total_cmp(&a.2));
            candidates.truncate(beam_width);
            beam = candidates
                .into_iter()
                .map(|(b, tag, log_prob)| {
                    let mut tags = beam[b].tags.clone();
                    tags.push(tag);
                    BeamEntry { tags, log_prob, state: next_states[b].clone() }
                })
                .collect();
        }
        Ok(beam.into_iter().take(k_return).map(|e| ScoredSequence { tags: e.tags, log_prob: e.log_prob }).collect())
    }

    /// Argmax tag at every step; ties go to the lower tag index.
    pub fn greedy(&self, characters: &[char]) -> Result<ScoredSequence, TaggerError> {
        let encoded = self.encode::<ChaCha8Rng>(characters, &mut ForwardMode::Eval)?;
        let mut state = encoded.initial_decoder_state(self.hidden());
        let mut prev = self.bos();
        let mut tags = Vec::with_capacity(characters.len());
        let mut log_prob = 0.0;
        for h_t in &encoded.states {
            let (next, cache) = self.decoder_forward::<ChaCha8Rng>(prev, h_t, &state, &mut ForwardMode::Eval)?;
            let mut best = 0;
            for (k, lp) in cache.log_probs.iter().enumerate() {
                if *lp > cache.log_probs[best] {
                    best = k;
                }
            }
            log_prob += cache.log_probs[best];
            tags.push(best);
            prev = best;
            state = next;
        }
        Ok(ScoredSequence { tags, log_prob })
    }

    /// Draws `count` sequences from the model distribution, step by step.
    pub fn sample<R: Rng>(&self, characters: &[char], count: usize, rng: &mut R) -> Result<Vec<ScoredSequence>, TaggerError> {
        let encoded = self.encode::<ChaCha8Rng>(characters, &mut ForwardMode::Eval)?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut state = encoded.initial_decoder_state(self.hidden());
            let mut prev = self.bos();
            let mut tags = Vec::with_capacity(characters.len());
            let mut log_prob = 0.0;
            for h_t in &encoded.states {
                let (next, cache) = self.decoder_forward::<ChaCha8Rng>(prev, h_t, &state, &mut ForwardMode::Eval)?;
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = cache.log_probs.len() - 1;
                for (k, lp) in cache.log_probs.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                log_prob += cache.log_probs[pick];
                tags.push(pick);
                prev = pick;
                state = next;
            }
            out.push(ScoredSequence { tags, log_prob });
        }
        Ok(out)
    }

    /// `log P(tags | characters)` with teacher-forced previous tags, in
    /// evaluation mode.
    pub fn sequence_log_prob(&self, characters: &[char], tags: &[usize]) -> Result<f64, TaggerError> {
        if tags.len() != characters.len() {
            return Err(TaggerError::LengthMismatch { chars: characters.len(), tags: tags.len() });
        }
        let encoded = self.encode::<ChaCha8Rng>(characters, &mut ForwardMode::Eval)?;
        Ok(self.decode_forced::<ChaCha8Rng>(&encoded, tags, &mut ForwardMode::Eval)?.0)
    }

    /// `log P(tags)` and its gradient with respect to every parameter (eval mode).
    pub fn sequence_log_prob_gradient(&self, characters: &[char], tags: &[usize]) -> Result<(f64, Gradients), TaggerError> {
        let mut grads = self.store.zero_gradients();
        let lp = self.accumulate_log_prob_gradients::<ChaCha8Rng>(characters, &[(tags, 1.0)], &mut ForwardMode::Eval, &mut grads)?;
        Ok((lp[0], grads))
    }

    /// Greedy-decodes `characters` and converts the tags to triplets.
    /// An empty input yields the empty set.
    pub fn predict_triplets(&self, characters: &[char], beam_width: usize) -> Result<TripletSet, TaggerError> {
        if characters.is_empty() {
            return Ok(TripletSet::default());
        }
        let tags = if beam_width <= 1 {
            self.greedy(characters)?.tags
        } else {
            self.beam_search(characters, beam_width, 1)?.remove(0).tags
        };
        Ok(tags_to_triplets(characters, &self.tagset.decode(&tags)))
    }
}
