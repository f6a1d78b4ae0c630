use rand::Rng;

use super::{CharVocab, TagSet, TaggerConfig, TaggerError};
use crate::nncore::{
    dropout_mask, log_softmax, lstm_step, lstm_step_backward, matvec_acc, matvec_t_acc, outer_acc, Gradients,
    LstmCache, LstmCellState, ParamId, ParameterStore, Tensor,
};
use crate::ontology::Lexicon;

/// Whether dropout is active.
pub enum ForwardMode<'a, R: Rng> {
    Eval,
    Train(&'a mut R),
}

pub(crate) const NAMES: [&str; 10] = [
    "char_embedding",
    "encoder.forward.weight",
    "encoder.forward.bias",
    "encoder.backward.weight",
    "encoder.backward.bias",
    "label_embedding",
    "decoder.weight",
    "decoder.bias",
    "output.weight",
    "output.bias",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ParamIds {
    pub char_emb: ParamId,
    pub fwd_w: ParamId,
    pub fwd_b: ParamId,
    pub bwd_w: ParamId,
    pub bwd_b: ParamId,
    pub label_emb: ParamId,
    pub dec_w: ParamId,
    pub dec_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

impl ParamIds {
    pub(crate) fn resolve(store: &ParameterStore) -> Result<Self, TaggerError> {
        let get = |name: &str| store.find(name).ok_or_else(|| TaggerError::Metadata(format!("missing parameter `{name}`")));
        Ok(Self {
            char_emb: get(NAMES[0])?,
            fwd_w: get(NAMES[1])?,
            fwd_b: get(NAMES[2])?,
            bwd_w: get(NAMES[3])?,
            bwd_b: get(NAMES[4])?,
            label_emb: get(NAMES[5])?,
            dec_w: get(NAMES[6])?,
            dec_b: get(NAMES[7])?,
            out_w: get(NAMES[8])?,
            out_b: get(NAMES[9])?,
        })
    }
}

/// The slot tagging model with its parameters.
#[derive(Debug, Clone)]
pub struct Tagger {
    pub config: TaggerConfig,
    pub tagset: TagSet,
    pub vocab: CharVocab,
    pub lexicon: Option<Lexicon>,
    pub store: ParameterStore,
    pub(crate) ids: ParamIds,
}

/// Encoder output plus what the backward pass needs.
#[derive(Debug, Clone)]
pub struct EncodedUtterance {
    /// `h_t = [forward h_t; backward h_t]`, each `2H` long.
    pub states: Vec<Vec<f64>>,
    pub(crate) char_ids: Vec<usize>,
    pub(crate) embed_masks: Option<Vec<Vec<f64>>>,
    pub(crate) fwd_caches: Vec<LstmCache>,
    pub(crate) bwd_caches: Vec<LstmCache>,
}

impl EncodedUtterance {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Backward-direction state at the first position, the decoder's `s_0`.
    pub fn initial_decoder_state(&self, hidden: usize) -> LstmCellState {
        LstmCellState { hidden: self.states[0][hidden..].to_vec(), cell: vec![0.0; hidden] }
    }
}

pub(crate) struct DecoderCache {
    lstm: LstmCache,
    prev_tag: usize,
    /// Decoder state after dropout, input of the output layer.
    dropped: Vec<f64>,
    mask: Option<Vec<f64>>,
    pub(crate) log_probs: Vec<f64>,
}

impl Tagger {
    /// Randomly initialized model; every weight is drawn from `(-init_range, init_range)`.
    pub fn new<R: Rng>(
        config: TaggerConfig,
        tagset: TagSet,
        vocab: CharVocab,
        lexicon: Option<Lexicon>,
        rng: &mut R,
    ) -> Result<Self, TaggerError> {
        config.validate()?;
        let lexicon = if config.use_lexicon_features { Some(lexicon.unwrap_or_default()) } else { None };
        let (e, h, l, v) = (config.embedding_dim, config.hidden_units, config.label_embedding_dim, tagset.len());
        let d = e + if config.use_lexicon_features { 2 } else { 0 };
        let r = config.init_range;
        let mut store = ParameterStore::new();
        store.add_uniform(NAMES[0], &[vocab.len(), e], r, rng);
        store.add_uniform(NAMES[1], &[4 * h, d + h], r, rng);
        store.add_uniform(NAMES[2], &[4 * h], r, rng);
        store.add_uniform(NAMES[3], &[4 * h, d + h], r, rng);
        store.add_uniform(NAMES[4], &[4 * h], r, rng);
        store.add_uniform(NAMES[5], &[v + 1, l], r, rng);
        store.add_uniform(NAMES[6], &[4 * h, l + 2 * h + h], r, rng);
        store.add_uniform(NAMES[7], &[4 * h], r, rng);
        store.add_uniform(NAMES[8], &[v, h], r, rng);
        store.add_uniform(NAMES[9], &[v], r, rng);
        let ids = ParamIds::resolve(&store)?;
        Ok(Self { config, tagset, vocab, lexicon, store, ids })
    }

    pub(crate) fn from_parts(
        config: TaggerConfig,
        tagset: TagSet,
        vocab: CharVocab,
        lexicon: Option<Lexicon>,
        store: ParameterStore,
    ) -> Result<Self, TaggerError> {
        let ids = ParamIds::resolve(&store)?;
        let model = Self { config, tagset, vocab, lexicon, store, ids };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<(), TaggerError> {
        let (e, h, l, v) = (self.config.embedding_dim, self.hidden(), self.config.label_embedding_dim, self.tagset.len());
        let d = self.input_dim();
        let expected: [(ParamId, Vec<usize>); 10] = [
            (self.ids.char_emb, vec![self.vocab.len(), e]),
            (self.ids.fwd_w, vec![4 * h, d + h]),
            (self.ids.fwd_b, vec![4 * h]),
            (self.ids.bwd_w, vec![4 * h, d + h]),
            (self.ids.bwd_b, vec![4 * h]),
            (self.ids.label_emb, vec![v + 1, l]),
            (self.ids.dec_w, vec![4 * h, l + 3 * h]),
            (self.ids.dec_b, vec![4 * h]),
            (self.ids.out_w, vec![v, h]),
            (self.ids.out_b, vec![v]),
        ];
        for (id, shape) in expected {
            if self.store.value(id).shape() != shape.as_slice() {
                return Err(TaggerError::Metadata(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    self.store.params()[id.0].name,
                    self.store.value(id).shape(),
                    shape
                )));
            }
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden_units
    }

    pub fn input_dim(&self) -> usize {
        self.config.embedding_dim + if self.config.use_lexicon_features { 2 } else { 0 }
    }

    /// Row of the label embedding used before the first tag.
    pub fn bos(&self) -> usize {
        self.tagset.len()
    }

    fn p(&self, id: ParamId) -> &Tensor {
        self.store.value(id)
    }

    /// Embeds, optionally appends lexicon bits, and runs both LSTM directions.
    pub fn encode<R: Rng>(&self, characters: &[char], mode: &mut ForwardMode<'_, R>) -> Result<EncodedUtterance, TaggerError> {
        if characters.is_empty() {
            return Err(TaggerError::EmptyInput);
        }
        let h = self.hidden();
        let e = self.config.embedding_dim;
        let char_ids: Vec<usize> = characters.iter().map(|&c| self.vocab.id(c)).collect();
        let features = self.lexicon.as_ref().map(|lex| lex.features(characters));
        let mut embed_masks = match mode {
            ForwardMode::Train(_) if self.config.dropout_p > 0.0 => Some(Vec::with_capacity(characters.len())),
            _ => None,
        };
        let mut inputs = Vec::with_capacity(characters.len());
        for (t, &id) in char_ids.iter().enumerate() {
            let mut x = self.p(self.ids.char_emb).row(id).to_vec();
            if let (Some(masks), ForwardMode::Train(rng)) = (&mut embed_masks, &mut *mode) {
                let m = dropout_mask(e, self.config.dropout_p, true, *rng)?;
                x.iter_mut().zip(&m).for_each(|(a, b)| *a *= b);
                masks.push(m);
            }
            if let Some(f) = &features {
                x.push(f64::from(u8::from(f[t][0])));
                x.push(f64::from(u8::from(f[t][1])));
            }
            inputs.push(x);
        }
        let n = inputs.len();
        let mut fwd_caches = Vec::with_capacity(n);
        let mut fwd_states = Vec::with_capacity(n);
        let mut state = LstmCellState::zeros(h);
        for x in &inputs {
            let (s, c) = lstm_step(self.p(self.ids.fwd_w), self.p(self.ids.fwd_b), x, &state)?;
            fwd_states.push(s.hidden.clone());
            fwd_caches.push(c);
            state = s;
        }
        let mut bwd_caches: Vec<Option<LstmCache>> = (0..n).map(|_| None).collect();
        let mut bwd_states = vec![Vec::new(); n];
        let mut state = LstmCellState::zeros(h);
        for t in (0..n).rev() {
            let (s, c) = lstm_step(self.p(self.ids.bwd_w), self.p(self.ids.bwd_b), &inputs[t], &state)?;
            bwd_states[t] = s.hidden.clone();
            bwd_caches[t] = Some(c);
            state = s;
        }
        let states = fwd_states
            .into_iter()
            .zip(bwd_states)
            .map(|(mut f, b)| {
                f.extend(b);
                f
            })
            .collect();
        Ok(EncodedUtterance {
            states,
            char_ids,
            embed_masks,
            fwd_caches,
            bwd_caches: bwd_caches.into_iter().map(|c| c.expect("every position encoded")).collect(),
        })
    }

    /// Logits `W s + b` for a (post-dropout) decoder state.
    pub fn output_logits(&self, state: &[f64]) -> Vec<f64> {
        let mut logits = self.p(self.ids.out_b).data().to_vec();
        matvec_acc(self.p(self.ids.out_w).data(), state, &mut logits);
        logits
    }

    pub(crate) fn decoder_forward<R: Rng>(
        &self,
        prev_tag: usize,
        encoder_state: &[f64],
        state: &LstmCellState,
        mode: &mut ForwardMode<'_, R>,
    ) -> Result<(LstmCellState, DecoderCache), TaggerError> {
        let mut input = self.p(self.ids.label_emb).row(prev_tag).to_vec();
        input.extend_from_slice(encoder_state);
        let (next, lstm) = lstm_step(self.p(self.ids.dec_w), self.p(self.ids.dec_b), &input, state)?;
        let mut dropped = next.hidden.clone();
        let mask = match mode {
            ForwardMode::Train(rng) if self.config.dropout_p > 0.0 => {
                let m = dropout_mask(dropped.len(), self.config.dropout_p, true, *rng)?;
                dropped.iter_mut().zip(&m).for_each(|(a, b)| *a *= b);
                Some(m)
            }
            _ => None,
        };
        let log_probs = log_softmax(&self.output_logits(&dropped));
        Ok((next, DecoderCache { lstm, prev_tag, dropped, mask, log_probs }))
    }

    /// One decoder step in evaluation mode: the tag distribution and the next state.
    /// `prev_tag` of `None` means start of sequence.
    pub fn decode_step(
        &self,
        prev_tag: Option<usize>,
        encoder_state: &[f64],
        state: &LstmCellState,
    ) -> Result<(Vec<f64>, LstmCellState), TaggerError> {
        let prev = prev_tag.unwrap_or(self.bos());
        if prev > self.bos() {
            return Err(TaggerError::UnknownTag(format!("index {prev}")));
        }
        let (next, cache) = self.decoder_forward::<rand_chacha::ChaCha8Rng>(prev, encoder_state, state, &mut ForwardMode::Eval)?;
        Ok((cache.log_probs.iter().map(|l| l.exp()).collect(), next))
    }

    /// Teacher-forced decoder pass; returns log P(tags) and per-step caches.
    pub(crate) fn decode_forced<R: Rng>(
        &self,
        encoded: &EncodedUtterance,
        tags: &[usize],
        mode: &mut ForwardMode<'_, R>,
    ) -> Result<(f64, Vec<DecoderCache>), TaggerError> {
        if tags.len() != encoded.len() {
            return Err(TaggerError::LengthMismatch { chars: encoded.len(), tags: tags.len() });
        }
        if let Some(&bad) = tags.iter().find(|&&t| t >= self.tagset.len()) {
            return Err(TaggerError::UnknownTag(format!("index {bad}")));
        }
        let mut state = encoded.initial_decoder_state(self.hidden());
        let mut prev = self.bos();
        let mut total = 0.0;
        let mut caches = Vec::with_capacity(tags.len());
        for (t, &tag) in tags.iter().enumerate() {
            let (next, cache) = self.decoder_forward(prev, &encoded.states[t], &state, mode)?;
            total += cache.log_probs[tag];
            caches.push(cache);
            state = next;
            prev = tag;
        }
        Ok((total, caches))
    }

    /// Accumulates `coef * d log P(tags) / d theta` for the decoder into
    /// `grads` and returns the gradient with respect to the encoder states.
    pub(crate) fn decoder_backward(
        &self,
        caches: &[DecoderCache],
        tags: &[usize],
        coef: f64,
        d_states: &mut [Vec<f64>],
        grads: &mut Gradients,
    ) {
        let h = self.hidden();
        let l = self.config.label_embedding_dim;
        let mut d_next = LstmCellState::zeros(h);
        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            // d(coef * log p[tag]) / d logits = coef * (onehot - softmax)
            let mut d_logits: Vec<f64> = cache.log_probs.iter().map(|lp| -coef * lp.exp()).collect();
            d_logits[tags[t]] += coef;
            outer_acc(grads.get_mut(self.ids.out_w).data_mut(), &d_logits, &cache.dropped);
            grads.get_mut(self.ids.out_b).add_scaled(&Tensor::from_vec(&[d_logits.len()], d_logits.clone()).unwrap(), 1.0);
            let mut d_hidden = vec![0.0; h];
            matvec_t_acc(self.p(self.ids.out_w).data(), &d_logits, &mut d_hidden);
            if let Some(mask) = &cache.mask {
                d_hidden.iter_mut().zip(mask).for_each(|(a, b)| *a *= b);
            }
            d_hidden.iter_mut().zip(&d_next.hidden).for_each(|(a, b)| *a += b);
            let (dw, db) = two_mut(grads, self.ids.dec_w, self.ids.dec_b);
            let (d_input, d_prev) = lstm_step_backward(self.p(self.ids.dec_w), &cache.lstm, &d_hidden, &d_next.cell, dw, db);
            let label_row = grads.get_mut(self.ids.label_emb).row_mut(cache.prev_tag);
            label_row.iter_mut().zip(&d_input[..l]).for_each(|(a, b)| *a += b);
            d_states[t].iter_mut().zip(&d_input[l..]).for_each(|(a, b)| *a += b);
            d_next = d_prev;
        }
        // s_0 is the backward encoder state at position 0; c_0 is constant.
        if !caches.is_empty() {
            d_states[0][h..].iter_mut().zip(&d_next.hidden).for_each(|(a, b)| *a += b);
        }
    }

    /// Backpropagates encoder-state gradients into LSTM weights and embeddings.
    pub(crate) fn encoder_backward(&self, encoded: &EncodedUtterance, d_states: &[Vec<f64>], grads: &mut Gradients) {
        let h = self.hidden();
        let e = self.config.embedding_dim;
        let n = encoded.len();
        let mut d_inputs = vec![vec![0.0; self.input_dim()]; n];
        let mut carry = LstmCellState::zeros(h);
        for t in (0..n).rev() {
            let dh: Vec<f64> = d_states[t][..h].iter().zip(&carry.hidden).map(|(a, b)| a + b).collect();
            let (dw, db) = two_mut(grads, self.ids.fwd_w, self.ids.fwd_b);
            let (dx, dprev) = lstm_step_backward(self.p(self.ids.fwd_w), &encoded.fwd_caches[t], &dh, &carry.cell, dw, db);
            d_inputs[t].iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            carry = dprev;
        }
        let mut carry = LstmCellState::zeros(h);
        for t in 0..n {
            let dh: Vec<f64> = d_states[t][h..].iter().zip(&carry.hidden).map(|(a, b)| a + b).collect();
            let (dw, db) = two_mut(grads, self.ids.bwd_w, self.ids.bwd_b);
            let (dx, dprev) = lstm_step_backward(self.p(self.ids.bwd_w), &encoded.bwd_caches[t], &dh, &carry.cell, dw, db);
            d_inputs[t].iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            carry = dprev;
        }
        let emb = grads.get_mut(self.ids.char_emb);
        for (t, &id) in encoded.char_ids.iter().enumerate() {
            let row = emb.row_mut(id);
            match &encoded.embed_masks {
                Some(masks) => {
                    for ((r, d), m) in row.iter_mut().zip(&d_inputs[t][..e]).zip(&masks[t]) {
                        *r += d * m;
                    }
                }
                None => row.iter_mut().zip(&d_inputs[t][..e]).for_each(|(r, d)| *r += d),
            }
        }
    }

    /// Adds `sum_k coef_k * d log P(tags_k | characters) / d theta` to
    /// `grads` and returns every `log P(tags_k)`.
    ///
    /// The encoder runs once; in training mode its dropout masks are shared by
    /// all sequences while each decoder pass draws its own.
    pub fn accumulate_log_prob_gradients<R: Rng>(
        &self,
        characters: &[char],
        sequences: &[(&[usize], f64)],
        mode: &mut ForwardMode<'_, R>,
        grads: &mut Gradients,
    ) -> Result<Vec<f64>, TaggerError> {
        let encoded = self.encode(characters, mode)?;
        let mut d_states = vec![vec![0.0; 2 * self.hidden()]; encoded.len()];
        let mut log_probs = Vec::with_capacity(sequences.len());
        for &(tags, coef) in sequences {
            let (lp, caches) = self.decode_forced(&encoded, tags, mode)?;
            if coef != 0.0 {
                self.decoder_backward(&caches, tags, coef, &mut d_states, grads);
            }
            log_probs.push(lp);
        }
        if sequences.iter().any(|s| s.1 != 0.0) {
            self.encoder_backward(&encoded, &d_states, grads);
        }
        Ok(log_probs)
    }
}

fn two_mut(grads: &mut Gradients, a: ParamId, b: ParamId) -> (&mut Tensor, &mut Tensor) {
    assert!(a.0 < b.0, "parameter ids must be increasing");
    let (lo, hi) = grads.0.split_at_mut(b.0);
    (&mut lo[a.0], &mut hi[0])
}
