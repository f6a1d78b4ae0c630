#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_slu::corpus::{SemanticTriplet, TripletSet};
use robust_slu::ontology::Lexicon;
use robust_slu::tagger::{CharVocab, TagSet, Tagger, TaggerConfig};

pub const ALPHABET: &str = "abcdefgh";

/// Tagset with `labels` B/I pairs over `ALPHABET`.
pub fn tiny_tagger(seed: u64, labels: usize, dims: (usize, usize, usize), lexicon: bool, init: f64) -> Tagger {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tagset = TagSet::from_labels((0..labels).map(|k| format!("inform-s{k}")));
    let vocab = CharVocab::build([ALPHABET]);
    let config = TaggerConfig {
        embedding_dim: dims.0,
        hidden_units: dims.1,
        label_embedding_dim: dims.2,
        use_lexicon_features: lexicon,
        dropout_p: 0.0,
        init_range: init,
    };
    let lex = lexicon.then(|| Lexicon::new(["ab".to_string(), "cde".to_string()]));
    Tagger::new(config, tagset, vocab, lex, &mut rng).unwrap()
}

/// A tagger with exactly `tags` tags: `O` plus B/I pairs, truncated.
pub fn tagger_with_tag_count(seed: u64, tags: usize, dims: (usize, usize, usize)) -> Tagger {
    use robust_slu::corpus::Tag;
    let mut list = vec![Tag::Outside];
    let mut k = 0;
    while list.len() < tags {
        list.push(Tag::begin("inform", &format!("s{k}")));
        if list.len() < tags {
            list.push(Tag::inside("inform", &format!("s{k}")));
        }
        k += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = TaggerConfig {
        embedding_dim: dims.0,
        hidden_units: dims.1,
        label_embedding_dim: dims.2,
        use_lexicon_features: false,
        dropout_p: 0.0,
        init_range: 1.0,
    };
    Tagger::new(config, TagSet::from_tags(list).unwrap(), CharVocab::build([ALPHABET]), None, &mut rng).unwrap()
}

pub fn zero_params(model: &mut Tagger) {
    for p in model.store.params_mut() {
        p.value.fill(0.0);
    }
}

pub fn random_chars(rng: &mut impl Rng, len: usize) -> Vec<char> {
    let a: Vec<char> = ALPHABET.chars().collect();
    (0..len).map(|_| a[rng.gen_range(0..a.len())]).collect()
}

pub fn random_tags(rng: &mut impl Rng, len: usize, tags: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..tags)).collect()
}

/// Small random triplet set over a fixed universe.
pub fn random_set(rng: &mut impl Rng, max: usize) -> TripletSet {
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| {
            let act = ["inform", "deny"][rng.gen_range(0..2)];
            let slot = ["dest", "origin"][rng.gen_range(0..2)];
            let value = ["苏州", "上海", "杭州"][rng.gen_range(0..3)];
            SemanticTriplet::new(act, slot, value)
        })
        .collect()
}

/// FP and FN by explicit enumeration over vectors.
pub fn brute_force_fp_fn(gold: &TripletSet, predicted: &TripletSet) -> (usize, usize) {
    let g: Vec<&SemanticTriplet> = gold.iter().collect();
    let p: Vec<&SemanticTriplet> = predicted.iter().collect();
    let fp = p.iter().filter(|x| !g.iter().any(|y| y == *x)).count();
    let fn_ = g.iter().filter(|x| !p.iter().any(|y| y == *x)).count();
    (fp, fn_)
}

/// Set-based cosine of character or symbol n-grams, computed directly.
pub fn ngram_cosine(a: &[String], b: &[String], n: usize) -> f64 {
    let grams = |s: &[String]| -> BTreeSet<Vec<String>> {
        if s.len() < n {
            BTreeSet::new()
        } else {
            s.windows(n).map(|w| w.to_vec()).collect()
        }
    };
    let (ga, gb) = (grams(a), grams(b));
    if ga.is_empty() || gb.is_empty() {
        return 0.0;
    }
    let shared = ga.intersection(&gb).count() as f64;
    shared / ((ga.len() as f64).sqrt() * (gb.len() as f64).sqrt())
}

pub fn symbols(s: &str) -> Vec<String> {
    s.chars().map(|c| c.to_string()).collect()
}

use robust_slu::ontology::{to_pronunciation, Ontology, PronunciationDictionary};
use robust_slu::ver::VerConfig;

/// Random short string over `alphabet`.
pub fn random_word(rng: &mut impl Rng, alphabet: &[char], min: usize, max: usize) -> String {
    let len = rng.gen_range(min..=max);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

/// A random single-list ontology `inform-dest`, a dictionary mapping each
/// character to one or two phonemes drawn from a small inventory (so
/// homophones exist), and a query value.
pub fn random_ver_instance(rng: &mut impl Rng) -> (Ontology, PronunciationDictionary, String) {
    let alphabet: Vec<char> = "abcdefghij".chars().collect();
    let phones = ["p", "t", "k", "a", "i", "u"];
    let mut dict = PronunciationDictionary::default();
    for &c in &alphabet {
        let n = rng.gen_range(1..=2);
        dict.insert(c.to_string(), (0..n).map(|_| phones[rng.gen_range(0..phones.len())].to_string()).collect());
    }
    let size = rng.gen_range(1..=8);
    let mut values: Vec<String> = (0..size).map(|_| random_word(rng, &alphabet, 1, 6)).collect();
    values.sort();
    values.dedup();
    let onto = Ontology::from_parts([(("inform".to_string(), "dest".to_string()), values)], []).unwrap();
    let query = random_word(rng, &alphabet, 0, 7);
    (onto, dict, query)
}

/// Blended similarity of `value` to every candidate, computed pair by pair.
pub fn oracle_scores(onto: &Ontology, dict: &PronunciationDictionary, value: &str, config: &VerConfig) -> Vec<f64> {
    onto.candidate_set("inform", "dest")
        .iter()
        .map(|c| {
            let w = ngram_cosine(&symbols(value), &symbols(c), config.n);
            let p = ngram_cosine(&to_pronunciation(dict, value), &to_pronunciation(dict, c), config.n);
            (config.lambda * w + (1.0 - config.lambda) * p).clamp(0.0, 1.0)
        })
        .collect()
}
