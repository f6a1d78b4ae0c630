mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_slu::corpus::{derive_bio_tags, tags_to_triplets, SemanticTriplet, Tag, TripletSet};
use robust_slu::nncore::{gradient_check, lstm_step, LstmCellState};
use robust_slu::ontology::Lexicon;
use robust_slu::tagger::{load_tagger, save_tagger, ForwardMode, Tagger};

fn eval_mode<'a>() -> ForwardMode<'a, ChaCha8Rng> {
    ForwardMode::Eval
}

fn chars(s: &str) -> Vec<char> {
    s.chars().collect()
}

#[test]
fn zero_parameters_encode_to_zero() {
    let mut m = tiny_tagger(1, 2, (4, 3, 2), true, 0.3);
    zero_params(&mut m);
    let enc = m.encode(&chars("abcde"), &mut eval_mode()).unwrap();
    assert_eq!(enc.len(), 5);
    assert!(enc.states.iter().all(|h| h.len() == 6 && h.iter().all(|&x| x == 0.0)));
}

#[test]
fn empty_input_is_rejected() {
    let m = tiny_tagger(1, 1, (4, 3, 2), false, 0.3);
    assert!(m.encode(&[], &mut eval_mode()).is_err());
    assert!(m.sequence_log_prob(&[], &[]).is_err());
    assert!(m.predict_triplets(&[], 3).unwrap().is_empty());
}

#[test]
fn unknown_characters_use_the_reserved_row() {
    let m = tiny_tagger(2, 1, (4, 3, 2), false, 0.3);
    let a = m.encode(&chars("a字b"), &mut eval_mode()).unwrap();
    let b = m.encode(&chars("a字b"), &mut eval_mode()).unwrap();
    let c = m.encode(&chars("a词b"), &mut eval_mode()).unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.states, c.states);
}

#[test]
fn single_character_is_one_lstm_step_each_way() {
    let m = tiny_tagger(3, 1, (5, 4, 2), false, 0.4);
    let enc = m.encode(&['c'], &mut eval_mode()).unwrap();
    let emb = m.store.value(m.store.find("char_embedding").unwrap()).row(m.vocab.id('c')).to_vec();
    let step = |w: &str, b: &str| {
        let w = m.store.value(m.store.find(w).unwrap());
        let b = m.store.value(m.store.find(b).unwrap());
        lstm_step(w, b, &emb, &LstmCellState::zeros(4)).unwrap().0.hidden
    };
    let fwd = step("encoder.forward.weight", "encoder.forward.bias");
    let bwd = step("encoder.backward.weight", "encoder.backward.bias");
    assert_eq!(enc.states[0][..4], fwd[..]);
    assert_eq!(enc.states[0][4..], bwd[..]);
}

#[test]
fn reversal_symmetry() {
    for seed in 0..10 {
        let m = tiny_tagger(seed, 1, (4, 3, 2), false, 0.5);
        let mut swapped = m.clone();
        for (a, b) in [("encoder.forward.weight", "encoder.backward.weight"), ("encoder.forward.bias", "encoder.backward.bias")] {
            let (ia, ib) = (m.store.find(a).unwrap(), m.store.find(b).unwrap());
            *swapped.store.value_mut(ia) = m.store.value(ib).clone();
            *swapped.store.value_mut(ib) = m.store.value(ia).clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_chars(&mut rng, 5);
        let rev: Vec<char> = x.iter().rev().copied().collect();
        let h = m.encode(&x, &mut eval_mode()).unwrap().states;
        let g = swapped.encode(&rev, &mut eval_mode()).unwrap().states;
        for t in 0..5 {
            let mirrored = &g[4 - t];
            assert_eq!(h[t][..3], mirrored[3..]);
            assert_eq!(h[t][3..], mirrored[..3]);
        }
    }
}

#[test]
fn zero_parameters_decode_uniformly() {
    let mut m = tiny_tagger(4, 2, (4, 3, 2), true, 0.3);
    zero_params(&mut m);
    let enc = m.encode(&chars("abc"), &mut eval_mode()).unwrap();
    let (p, _) = m.decode_step(None, &enc.states[0], &enc.initial_decoder_state(3)).unwrap();
    assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-15));
}

#[test]
fn decode_step_is_a_distribution_over_softmax_of_logits() {
    for seed in 0..100 {
        let m = tiny_tagger(seed, 2, (4, 5, 3), seed % 2 == 0, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_chars(&mut rng, 3);
        let enc = m.encode(&x, &mut eval_mode()).unwrap();
        let prev = if seed % 3 == 0 { None } else { Some(rng.gen_range(0..m.tagset.len())) };
        let (p, next) = m.decode_step(prev, &enc.states[1], &enc.initial_decoder_state(5)).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // Independent re-evaluation of W s + b followed by softmax.
        let w = m.store.value(m.store.find("output.weight").unwrap());
        let b = m.store.value(m.store.find("output.bias").unwrap());
        let logits: Vec<f64> = (0..m.tagset.len())
            .map(|k| b.data()[k] + w.row(k).iter().zip(&next.hidden).map(|(a, s)| a * s).sum::<f64>())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for (pk, lk) in p.iter().zip(&logits) {
            assert!((pk - lk.exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_model_beam_and_log_prob() {
    let mut m = tagger_with_tag_count(1, 3, (3, 2, 2));
    zero_params(&mut m);
    let out = m.beam_search(&chars("ab"), 9, 9).unwrap();
    assert_eq!(out.len(), 9);
    for s in &out {
        assert!((s.log_prob - 2.0 * (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }
    // Ties keep tag order: sequences come out lexicographically.
    let seqs: Vec<Vec<usize>> = out.iter().map(|s| s.tags.clone()).collect();
    let mut sorted = seqs.clone();
    sorted.sort();
    assert_eq!(seqs, sorted);
    let lp = m.sequence_log_prob(&chars("abcd"), &[0, 2, 1, 1]).unwrap();
    assert!((lp + 4.0 * 3f64.ln()).abs() < 1e-12);
}

#[test]
fn beam_log_probs_match_sequence_log_prob() {
    for seed in 0..30 {
        let m = tiny_tagger(seed, 2, (4, 4, 3), true, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(1..=6);
        let x = random_chars(&mut rng, len);
        let out = m.beam_search(&x, 6, 6).unwrap();
        for w in out.windows(2) {
            assert!(w[0].log_prob >= w[1].log_prob);
        }
        for s in &out {
            assert!(s.log_prob <= 0.0);
            assert!((m.sequence_log_prob(&x, &s.tags).unwrap() - s.log_prob).abs() < 1e-9);
        }
    }
}

#[test]
fn width_one_beam_equals_greedy() {
    for seed in 0..100 {
        let m = tiny_tagger(seed, 2, (4, 4, 3), false, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let len = rng.gen_range(1..=6);
        let x = random_chars(&mut rng, len);
        let g = m.greedy(&x).unwrap();
        let b = m.beam_search(&x, 1, 1).unwrap().remove(0);
        assert_eq!(g.tags, b.tags);
        assert_eq!(g.log_prob, b.log_prob);
    }
}

#[test]
fn full_width_beam_is_never_worse_than_narrow() {
    for seed in 0..30 {
        let m = tagger_with_tag_count(seed, 3, (3, 3, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(1..=4);
        let x = random_chars(&mut rng, len);
        let full = m.beam_search(&x, 3usize.pow(len as u32), 1).unwrap()[0].log_prob;
        for width in 1..=5 {
            assert!(m.beam_search(&x, width, 1).unwrap()[0].log_prob <= full + 1e-12);
        }
    }
}

#[test]
fn beam_arguments_checked() {
    let m = tiny_tagger(1, 1, (2, 2, 2), false, 0.1);
    assert!(m.beam_search(&chars("ab"), 2, 3).is_err());
    assert!(m.beam_search(&chars("ab"), 0, 0).is_err());
    assert!(m.sequence_log_prob(&chars("ab"), &[0]).is_err());
    assert!(m.sequence_log_prob(&chars("ab"), &[0, 99]).is_err());
}

#[test]
fn fewer_sequences_than_k_when_space_is_small() {
    let m = tagger_with_tag_count(2, 3, (3, 3, 2));
    assert_eq!(m.beam_search(&chars("a"), 10, 10).unwrap().len(), 3);
}

#[test]
fn log_prob_gradient_passes_finite_differences() {
    for seed in 0..10 {
        let m = tiny_tagger(seed, 1, (3, 3, 2), seed % 2 == 0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_chars(&mut rng, 4);
        let tags = random_tags(&mut rng, 4, m.tagset.len());
        let (_, grads) = m.sequence_log_prob_gradient(&x, &tags).unwrap();
        let theta = m.store.flat_values();
        let mut probe = m.clone();
        let check = gradient_check(
            |t| {
                probe.store.set_flat_values(t);
                probe.sequence_log_prob(&x, &tags).unwrap()
            },
            &theta,
            &grads.flatten(),
            1e-3,
        );
        assert!(check.max_relative_error < 1e-4, "seed {seed}: {check:?}");
    }
}

#[test]
fn lexicon_off_ignores_ontology() {
    let a = tiny_tagger(5, 2, (4, 3, 2), false, 0.5);
    let mut b = a.clone();
    b.lexicon = Some(Lexicon::new(["abc".to_string()]));
    b.lexicon = None;
    let x = chars("abcab");
    assert_eq!(a.beam_search(&x, 4, 4).unwrap(), b.beam_search(&x, 4, 4).unwrap());
}

#[test]
fn lexicon_bits_change_the_encoding() {
    let m = tiny_tagger(6, 1, (4, 3, 2), true, 0.5);
    let h1 = m.encode(&chars("abh"), &mut eval_mode()).unwrap().states;
    let mut no_match = m.clone();
    no_match.lexicon = Some(Lexicon::new(["zz".to_string()]));
    let h2 = no_match.encode(&chars("abh"), &mut eval_mode()).unwrap().states;
    assert_ne!(h1, h2);
}

#[test]
fn inform_and_deny_tags_to_triplets() {
    let x = chars("我想去苏州不是上海");
    let mut tags = vec![Tag::Outside; 3];
    tags.extend([Tag::begin("inform", "dest"), Tag::inside("inform", "dest")]);
    tags.extend([Tag::Outside, Tag::Outside]);
    tags.extend([Tag::begin("deny", "dest"), Tag::inside("deny", "dest")]);
    let expected: TripletSet =
        [SemanticTriplet::new("inform", "dest", "苏州"), SemanticTriplet::new("deny", "dest", "上海")].into_iter().collect();
    assert_eq!(tags_to_triplets(&x, &tags), expected);
    assert_eq!(derive_bio_tags(&x, &expected).unwrap(), tags);
    assert!(tags_to_triplets(&x, &vec![Tag::Outside; 9]).is_empty());
    let orphan = tags_to_triplets(&chars("苏州"), &[Tag::inside("inform", "dest"), Tag::inside("inform", "dest")]);
    assert_eq!(orphan, [SemanticTriplet::new("inform", "dest", "苏州")].into_iter().collect());
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let m = tiny_tagger(7, 2, (4, 3, 2), true, 0.5);
    let mut buf = Vec::new();
    save_tagger(&mut buf, &m, &serde_json::json!({"note": "x"})).unwrap();
    let (back, extra): (Tagger, _) = load_tagger(buf.as_slice()).unwrap();
    assert_eq!(extra["note"], "x");
    assert_eq!(back.store, m.store);
    assert_eq!(back.tagset, m.tagset);
    assert_eq!(back.vocab, m.vocab);
    let x = chars("abcdeab");
    assert_eq!(back.beam_search(&x, 5, 5).unwrap(), m.beam_search(&x, 5, 5).unwrap());
    let mut again = Vec::new();
    save_tagger(&mut again, &back, &serde_json::json!({"note": "x"})).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn dropout_only_in_training_mode() {
    let mut m = tiny_tagger(8, 1, (6, 4, 2), false, 0.5);
    m.config.dropout_p = 0.5;
    let x = chars("abcd");
    let e1 = m.encode(&x, &mut eval_mode()).unwrap().states;
    let e2 = m.encode(&x, &mut eval_mode()).unwrap().states;
    assert_eq!(e1, e2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = m.encode(&x, &mut ForwardMode::Train(&mut rng)).unwrap().states;
    assert_ne!(e1, t);
}
