//! BIO tags from gold triplets, and their transfer onto an ASR hypothesis.
//!
//! Run with `cargo run --example bio_alignment`.

use robust_slu::corpus::{align_hypothesis, character_error_rate, derive_bio_tags, tags_to_triplets, SemanticTriplet, TripletSet};

fn main() {
    let transcription: Vec<char> = "从深圳到苏州".chars().collect();
    let hypothesis: Vec<char> = "从深震到酥州呀".chars().collect();
    let gold: TripletSet = [SemanticTriplet::new("inform", "origin", "深圳"), SemanticTriplet::new("inform", "dest", "苏州")]
        .into_iter()
        .collect();

    let tags = derive_bio_tags(&transcription, &gold).unwrap();
    for (c, t) in transcription.iter().zip(&tags) {
        println!("{c}\t{t}");
    }
    assert_eq!(tags_to_triplets(&transcription, &tags), gold);

    let moved = align_hypothesis(&transcription, &hypothesis, &tags);
    println!("\nhypothesis (CER {:.3})", character_error_rate(&hypothesis, &transcription));
    for (c, t) in hypothesis.iter().zip(&moved) {
        println!("{c}\t{t}");
    }
    let noisy: Vec<String> = tags_to_triplets(&hypothesis, &moved).iter().map(|t| t.to_string()).collect();
    println!("read back: {}", noisy.join(" "));
}
