//! Simulated recognition errors at increasing substitution rates.
//!
//! Run with `cargo run --example asr_noise`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_slu::corpus::{character_error_rate, AsrNoiseSimulator, NoiseConfig};
use robust_slu::synth::Domain;

fn main() {
    let domain = Domain::bundled_map();
    let simulator = AsrNoiseSimulator::new(&domain.dictionary);
    let sentence: Vec<char> = "导航到苏州火车站附近的医院".chars().collect();

    for rate in [0.0, 0.1, 0.2, 0.4] {
        let config = NoiseConfig { substitution_rate: rate, ..NoiseConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = 0.0;
        let mut sample = String::new();
        for i in 0..200 {
            let noisy = simulator.corrupt(&sentence, &config, &mut rng);
            total += character_error_rate(&noisy, &sentence);
            if i == 0 {
                sample = noisy.into_iter().collect();
            }
        }
        println!("sub {rate:.1}: mean CER {:.3}  e.g. {sample}", total / 200.0);
    }
}
