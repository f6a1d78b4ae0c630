//! Recovers misrecognized slot values against the bundled map ontology.
//!
//! Run with `cargo run --example value_error_recovery`.

use robust_slu::corpus::{SemanticTriplet, TripletSet};
use robust_slu::synth::Domain;
use robust_slu::ver::{build_index, recover, similarity, PostProcess, VerConfig};

fn main() {
    let domain = Domain::bundled_map();
    let config = VerConfig::default();
    let index = build_index(&domain.ontology, &domain.dictionary, &config);

    for (slot, value) in [("dest", "酥州"), ("dest", "杭洲"), ("poi", "医园"), ("origin", "好的谢谢")] {
        let scores = similarity(value, "inform", slot, &index, &config).unwrap();
        let candidates = domain.ontology.candidate_set("inform", slot);
        let (best, score) = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, s)| (&candidates[k], *s))
            .unwrap();
        println!("{value}: closest {slot} {best} ({score:.3})");
    }

    let predicted: TripletSet = [
        SemanticTriplet::new("inform", "dest", "酥州"),
        SemanticTriplet::new("inform", "poi", "医园"),
        SemanticTriplet::new("inform", "origin", "好的谢谢"),
    ]
    .into_iter()
    .collect();
    for mode in [PostProcess::None, PostProcess::Delete, PostProcess::Ver] {
        let out = recover(&predicted, &index, &VerConfig { mode, ..config.clone() });
        let shown: Vec<String> = out.iter().map(|t| t.to_string()).collect();
        println!("{:>6}: {}", mode.to_string(), shown.join(" "));
    }
}
