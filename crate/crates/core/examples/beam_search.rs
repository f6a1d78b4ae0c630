//! Top-K tag sequences from a briefly trained tagger.
//!
//! Run with `cargo run --release --example beam_search`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_slu::corpus::tags_to_triplets;
use robust_slu::ontology::Lexicon;
use robust_slu::synth::{generate_splits, Domain, SynthConfig};
use robust_slu::tagger::{CharVocab, TagSet, Tagger, TaggerConfig};
use robust_slu::training::{train, Stage, TrainConfig, TrainData};
use robust_slu::ver::{build_index, VerConfig};

fn main() {
    let domain = Domain::bundled_map();
    let splits = generate_splits(&domain, &SynthConfig { train: 1000, valid: 100, test: 5, ..SynthConfig::default() }).unwrap();
    let config = TaggerConfig { embedding_dim: 24, hidden_units: 24, label_embedding_dim: 8, ..TaggerConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = Tagger::new(
        config,
        TagSet::from_corpus(&splits.train),
        CharVocab::from_corpus(&splits.train),
        Some(Lexicon::from_ontology(&domain.ontology)),
        &mut rng,
    )
    .unwrap();
    let ver = VerConfig::default();
    let index = build_index(&domain.ontology, &domain.dictionary, &ver);
    let tc = TrainConfig { stage: Stage::PretrainOnly, max_epochs: 20, ..TrainConfig::default() };
    train(&mut model, &TrainData { tscp: &splits.train, hyp: &[], valid: &splits.valid }, &index, &ver, &tc, |_| {})
        .unwrap();

    for u in &splits.test {
        let x = u.hypothesis_chars();
        if x.is_empty() {
            continue;
        }
        println!("{}  (said: {})", u.hypothesis, u.transcription);
        for s in model.beam_search(&x, 5, 3).unwrap() {
            let triplets: Vec<String> =
                tags_to_triplets(&x, &model.tagset.decode(&s.tags)).iter().map(|t| t.to_string()).collect();
            println!("  {:8.4}  {}", s.log_prob, triplets.join(" "));
        }
    }
}
