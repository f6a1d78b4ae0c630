//! Pretraining followed by policy-gradient adaptation to ASR hypotheses.
//! Prints both models under VER.
//!
//! Run with `cargo run --release --example rl_adaptation [seed]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_slu::eval::evaluate;
use robust_slu::ontology::Lexicon;
use robust_slu::synth::{generate_splits, Domain, SynthConfig};
use robust_slu::tagger::{CharVocab, TagSet, Tagger, TaggerConfig};
use robust_slu::training::{train, Stage, TrainConfig, TrainData};
use robust_slu::ver::{build_index, VerConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let domain = Domain::bundled_map();
    let splits = generate_splits(&domain, &SynthConfig { seed, ..SynthConfig::default() }).unwrap();
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
    let tc = TrainConfig { seed, stage: Stage::Full, ..TrainConfig::default() };
    let data = TrainData { tscp: &splits.train, hyp: &splits.train, valid: &splits.valid };
    let outcome = train(&mut model, &data, &index, &ver, &tc, |e| {
        println!(
            "{:<8} epoch {:2}  reward {}  valid f1 {:.4} joint {:.4}",
            e.stage.to_string(),
            e.epoch,
            e.mean_reward.map_or("-".to_string(), |r| format!("{r:.3}")),
            e.valid_f1,
            e.valid_joint_accuracy
        )
    })
    .unwrap();
    println!("best: {} epoch {}", outcome.best_stage, outcome.best_epoch);

    let mut pretrained = model.clone();
    pretrained.store = outcome.pretrained.expect("stage 1 ran");
    for (name, m) in [("pretrained", &pretrained), ("adapted", &model)] {
        let (r, _) = evaluate(m, &splits.test, &index, &ver, tc.eval_beam).unwrap();
        println!("{name:<10}  F1 {:.4}  joint {:.4}", r.f1, r.joint_accuracy);
    }
}
