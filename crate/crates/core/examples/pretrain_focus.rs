//! Supervised pretraining on transcriptions, scored on noisy hypotheses
//! under each post-processing mode.
//!
//! Run with `cargo run --release --example pretrain_focus [seed]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_slu::eval::evaluate_modes;
use robust_slu::ontology::Lexicon;
use robust_slu::synth::{generate_splits, mean_cer, Domain, SynthConfig};
use robust_slu::tagger::{CharVocab, TagSet, Tagger, TaggerConfig};
use robust_slu::training::{train, Stage, TrainConfig, TrainData};
use robust_slu::ver::{build_index, PostProcess, VerConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let domain = Domain::bundled_map();
    let splits = generate_splits(&domain, &SynthConfig { seed, ..SynthConfig::default() }).unwrap();
    println!("test CER {:.3}", mean_cer(&splits.test));

    let config = TaggerConfig { embedding_dim: 32, hidden_units: 32, label_embedding_dim: 16, ..TaggerConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
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
    let tc = TrainConfig { seed, stage: Stage::PretrainOnly, ..TrainConfig::default() };
    let data = TrainData { tscp: &splits.train, hyp: &[], valid: &splits.valid };
    train(&mut model, &data, &index, &ver, &tc, |e| {
        println!("epoch {:2}  loss {:.4}  valid f1 {:.4}", e.epoch, e.train_loss, e.valid_f1)
    })
    .unwrap();

    for (report, _) in evaluate_modes(&model, &splits.test, &index, &ver, &PostProcess::ALL, tc.eval_beam).unwrap() {
        println!("{:>6}  F1 {:.4}  joint {:.4}", report.mode.to_string(), report.f1, report.joint_accuracy);
    }
}
