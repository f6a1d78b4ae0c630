//! Saves a tagger with metadata and loads it back.
//!
//! Run with `cargo run --example checkpoint_roundtrip`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_slu::synth::{generate_splits, Domain, SynthConfig};
use robust_slu::tagger::{load_tagger, save_tagger, CharVocab, TagSet, Tagger, TaggerConfig};

fn main() {
    let domain = Domain::bundled_map();
    let splits = generate_splits(&domain, &SynthConfig { train: 50, valid: 0, test: 0, ..SynthConfig::default() }).unwrap();
    let config = TaggerConfig { embedding_dim: 8, hidden_units: 8, label_embedding_dim: 4, ..TaggerConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model =
        Tagger::new(config, TagSet::from_corpus(&splits.train), CharVocab::from_corpus(&splits.train), None, &mut rng).unwrap();

    let mut bytes = Vec::new();
    save_tagger(&mut bytes, &model, &serde_json::json!({ "note": "untrained" })).unwrap();
    let (loaded, extra) = load_tagger(bytes.as_slice()).unwrap();

    let x = splits.train[0].transcription_chars();
    assert_eq!(model.greedy(&x).unwrap(), loaded.greedy(&x).unwrap());
    println!("{} bytes, {} tags, extra {extra}", bytes.len(), loaded.tagset.len());
}
