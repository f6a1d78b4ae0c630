//! F1 per CER bucket for a pretrained tagger, written as TSV to stdout.
//!
//! Run with `cargo run --release --example cer_buckets`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_slu::eval::{evaluate, write_bucket_tsv};
use robust_slu::ontology::Lexicon;
use robust_slu::synth::{generate_splits, Domain, SynthConfig};
use robust_slu::tagger::{CharVocab, TagSet, Tagger, TaggerConfig};
use robust_slu::training::{train, Stage, TrainConfig, TrainData};
use robust_slu::ver::{build_index, VerConfig};

fn main() {
    let domain = Domain::bundled_map();
    let splits = generate_splits(&domain, &SynthConfig { train: 1000, ..SynthConfig::default() }).unwrap();
    let config = TaggerConfig { embedding_dim: 24, hidden_units: 24, label_embedding_dim: 8, ..TaggerConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
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
    let tc = TrainConfig { stage: Stage::PretrainOnly, max_epochs: 15, ..TrainConfig::default() };
    train(&mut model, &TrainData { tscp: &splits.train, hyp: &[], valid: &splits.valid }, &index, &ver, &tc, |_| {})
        .unwrap();

    let (report, _) = evaluate(&model, &splits.test, &index, &ver, 5).unwrap();
    write_bucket_tsv(std::io::stdout().lock(), &report.buckets, None).unwrap();
}
