//! Finite-difference check of the tagger's log-likelihood gradient.
//!
//! Run with `cargo run --release --example gradient_check`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_slu::nncore::gradient_check;
use robust_slu::tagger::{CharVocab, TagSet, Tagger, TaggerConfig};

fn main() {
    let config = TaggerConfig {
        embedding_dim: 4,
        hidden_units: 3,
        label_embedding_dim: 2,
        use_lexicon_features: false,
        dropout_p: 0.0,
        init_range: 0.5,
    };
    let tagset = TagSet::from_labels(["inform-dest".to_string()]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = Tagger::new(config, tagset, CharVocab::build(["到苏州"]), None, &mut rng).unwrap();

    let x: Vec<char> = "到苏州".chars().collect();
    let y = [0, 1, 2];
    let (lp, grads) = model.sequence_log_prob_gradient(&x, &y).unwrap();
    let mut probe = model.clone();
    let report = gradient_check(
        |theta| {
            probe.store.set_flat_values(theta);
            probe.sequence_log_prob(&x, &y).unwrap()
        },
        &model.store.flat_values(),
        &grads.flatten(),
        1e-3,
    );
    println!("log P = {lp:.6} over {} parameters", model.store.num_values());
    println!(
        "max relative error {:.2e} at index {:?} (analytic {:.3e}, numeric {:.3e})",
        report.max_relative_error, report.worst_index, report.analytic, report.numeric
    );
}
