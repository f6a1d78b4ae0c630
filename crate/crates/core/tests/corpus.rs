use robust_slu::corpus::{derive_bio_tags, parse_corpus, tags_to_triplets, write_corpus, NoiseConfig};
use robust_slu::synth::{generate_splits, mean_cer, Domain, Generator, SynthConfig};

#[test]
fn synthetic_corpus_round_trips() {
    let domain = Domain::bundled_map();
    let splits = generate_splits(&domain, &SynthConfig { seed: 3, ..SynthConfig::default() }).unwrap();
    for u in splits.train.iter().chain(&splits.valid).chain(&splits.test) {
        let chars = u.transcription_chars();
        let tags = derive_bio_tags(&chars, &u.gold).unwrap();
        assert_eq!(tags_to_triplets(&chars, &tags), u.gold);
        assert_eq!(Some(&tags), u.transcription_tags.as_ref());
    }
    let mut buf = Vec::new();
    write_corpus(&mut buf, &splits.test).unwrap();
    assert_eq!(parse_corpus(buf.as_slice()).unwrap(), splits.test);
}

#[test]
fn generation_is_deterministic() {
    let domain = Domain::bundled_map();
    let cfg = SynthConfig { train: 200, valid: 20, test: 50, seed: 4, ..SynthConfig::default() };
    assert_eq!(generate_splits(&domain, &cfg).unwrap(), generate_splits(&domain, &cfg).unwrap());
    let other = SynthConfig { seed: 5, ..cfg.clone() };
    assert_ne!(generate_splits(&domain, &cfg).unwrap(), generate_splits(&domain, &other).unwrap());
}

#[test]
fn substitution_rate_sets_mean_cer() {
    let domain = Domain::bundled_map();
    for seed in 0..3 {
        let noise = NoiseConfig { substitution_rate: 0.2, deletion_rate: 0.0, insertion_rate: 0.0, ..NoiseConfig::default() };
        let corpus = Generator::new(&domain, noise, true, seed).unwrap().generate("c", 500).unwrap();
        let cer = mean_cer(&corpus);
        assert!((0.1..=0.3).contains(&cer), "seed {seed}: {cer}");
    }
}

#[test]
fn default_noise_targets_desk_scale_cer() {
    let domain = Domain::bundled_map();
    let splits = generate_splits(&domain, &SynthConfig::default()).unwrap();
    let cer = mean_cer(&splits.test);
    assert!((0.2..=0.3).contains(&cer), "{cer}");
}
