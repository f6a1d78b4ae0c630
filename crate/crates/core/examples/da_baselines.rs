//! Data-augmentation baselines: hypotheses tagged by a pretrained model
//! (generated) or by edit-distance transfer from the transcription (aligned),
//! each added to the supervised corpus.
//!
//! Run with `cargo run --release --example da_baselines`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_slu::corpus::Utterance;
use robust_slu::eval::evaluate;
use robust_slu::ontology::Lexicon;
use robust_slu::synth::{generate_splits, Domain, Splits, SynthConfig};
use robust_slu::tagger::{CharVocab, TagSet, Tagger, TaggerConfig};
use robust_slu::training::{da_align_pseudo, da_generate_pseudo, train, Stage, TrainConfig, TrainData};
use robust_slu::ver::{build_index, VerConfig, VerIndex};

fn fit(domain: &Domain, splits: &Splits, corpus: &[Utterance], index: &VerIndex) -> Tagger {
    let config = TaggerConfig { embedding_dim: 24, hidden_units: 24, label_embedding_dim: 8, ..TaggerConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut model = Tagger::new(
        config,
        TagSet::from_corpus(corpus),
        CharVocab::from_corpus(corpus),
        Some(Lexicon::from_ontology(&domain.ontology)),
        &mut rng,
    )
    .unwrap();
    let tc = TrainConfig { stage: Stage::PretrainOnly, max_epochs: 15, ..TrainConfig::default() };
    let data = TrainData { tscp: corpus, hyp: &[], valid: &splits.valid };
    train(&mut model, &data, index, &VerConfig::default(), &tc, |_| {}).unwrap();
    model
}

fn main() {
    let domain = Domain::bundled_map();
    let splits = generate_splits(&domain, &SynthConfig { train: 1000, ..SynthConfig::default() }).unwrap();
    let ver = VerConfig::default();
    let index = build_index(&domain.ontology, &domain.dictionary, &ver);

    let base = fit(&domain, &splits, &splits.train, &index);
    let generated: Vec<Utterance> =
        splits.train.iter().cloned().chain(da_generate_pseudo(&base, &splits.train).unwrap()).collect();
    let aligned: Vec<Utterance> = splits.train.iter().cloned().chain(da_align_pseudo(&splits.train).unwrap()).collect();

    for (name, model) in
        [("tscp", base), ("tscp+gen", fit(&domain, &splits, &generated, &index)), ("tscp+align", fit(&domain, &splits, &aligned, &index))]
    {
        let (r, _) = evaluate(&model, &splits.test, &index, &ver, 5).unwrap();
        println!("{name:<11} F1 {:.4}  joint {:.4}", r.f1, r.joint_accuracy);
    }
}
