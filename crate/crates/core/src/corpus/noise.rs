use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::ontology::PronunciationDictionary;

/// Character-level ASR error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub substitution_rate: f64,
    pub deletion_rate: f64,
    pub insertion_rate: f64,
    /// Probability that a substitution picks a closest-sounding character
    /// instead of a uniformly random one.
    pub phonetic_bias: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { substitution_rate: 0.2, deletion_rate: 0.03, insertion_rate: 0.03, phonetic_bias: 0.9, seed: 0 }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self { substitution_rate: 0.0, deletion_rate: 0.0, insertion_rate: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let probs = [
            ("substitution_rate", self.substitution_rate),
            ("deletion_rate", self.deletion_rate),
            ("insertion_rate", self.insertion_rate),
            ("phonetic_bias", self.phonetic_bias),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::InvalidNoise(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if self.substitution_rate + self.deletion_rate > 1.0 {
            return Err(CorpusError::InvalidNoise("substitution_rate + deletion_rate exceeds 1".into()));
        }
        Ok(())
    }
}

/// Noise generator with a precomputed table of pronunciation neighbours.
///
/// The neighbours of a character are the other single-character dictionary
/// entries whose phoneme sets have the highest cosine similarity with its own.
pub struct AsrNoiseSimulator {
    alphabet: Vec<char>,
    neighbours: HashMap<char, Vec<char>>,
}

fn phoneme_cosine(a: &[String], b: &[String]) -> f64 {
    let sa: std::collections::BTreeSet<&String> = a.iter().collect();
    let sb: std::collections::BTreeSet<&String> = b.iter().collect();
    if sa.is_empty() || sb.is_empty() {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / ((sa.len() * sb.len()) as f64).sqrt()
}

impl AsrNoiseSimulator {
    pub fn new(dictionary: &PronunciationDictionary) -> Self {
        let entries: Vec<(char, &[String])> = dictionary
            .iter()
            .filter_map(|(token, phones)| {
                let mut cs = token.chars();
                match (cs.next(), cs.next()) {
                    (Some(c), None) => Some((c, phones)),
                    _ => None,
                }
            })
            .collect();
        let alphabet: Vec<char> = entries.iter().map(|(c, _)| *c).collect();
        let mut neighbours = HashMap::new();
        for (c, phones) in &entries {
            let mut best = 0.0f64;
            let mut list = Vec::new();
            for (other, other_phones) in &entries {
                if other == c {
                    continue;
                }
                let sim = phoneme_cosine(phones, other_phones);
                if sim > best + 1e-12 {
                    best = sim;
                    list.clear();
                }
                if sim > 0.0 && (sim - best).abs() <= 1e-12 {
                    list.push(*other);
                }
            }
            neighbours.insert(*c, list);
        }
        Self { alphabet, neighbours }
    }

    fn substitute<R: Rng>(&self, c: char, phonetic_bias: f64, rng: &mut R) -> char {
        if let Some(near) = self.neighbours.get(&c).filter(|n| !n.is_empty()) {
            if rng.gen::<f64>() < phonetic_bias {
                return near[rng.gen_range(0..near.len())];
            }
        }
        let pool: Vec<char> = self.alphabet.iter().copied().filter(|&a| a != c).collect();
        if pool.is_empty() {
            c
        } else {
            pool[rng.gen_range(0..pool.len())]
        }
    }

    fn random_char<R: Rng>(&self, rng: &mut R) -> Option<char> {
        (!self.alphabet.is_empty()).then(|| self.alphabet[rng.gen_range(0..self.alphabet.len())])
    }

    /// Corrupts `transcription` drawing from `rng`; the config seed is ignored.
    pub fn corrupt<R: Rng>(&self, transcription: &[char], config: &NoiseConfig, rng: &mut R) -> Vec<char> {
        let mut out = Vec::with_capacity(transcription.len() + 2);
        let maybe_insert = |out: &mut Vec<char>, rng: &mut R| {
            if config.insertion_rate > 0.0 && rng.gen::<f64>() < config.insertion_rate {
                if let Some(c) = self.random_char(rng) {
                    out.push(c);
                }
            }
        };
        for &c in transcription {
            maybe_insert(&mut out, rng);
            let r: f64 = if config.substitution_rate + config.deletion_rate > 0.0 { rng.gen() } else { 1.0 };
            if r < config.substitution_rate {
                out.push(self.substitute(c, config.phonetic_bias, rng));
            } else if r < config.substitution_rate + config.deletion_rate {
                continue;
            } else {
                out.push(c);
            }
        }
        maybe_insert(&mut out, rng);
        out
    }
}

/// Corrupts a transcription into a pseudo ASR hypothesis, seeded by `config.seed`.
pub fn simulate_asr_noise(
    transcription: &[char],
    dictionary: &PronunciationDictionary,
    config: &NoiseConfig,
) -> Result<Vec<char>, CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(AsrNoiseSimulator::new(dictionary).corrupt(transcription, config, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict(tsv: &str) -> PronunciationDictionary {
        PronunciationDictionary::parse(tsv.as_bytes()).unwrap()
    }

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn zero_rates_are_identity() {
        let d = dict("苏\ts u\n州\tzh ou\n");
        let t = chars("我想去苏州");
        assert_eq!(simulate_asr_noise(&t, &d, &NoiseConfig::noiseless()).unwrap(), t);
    }

    #[test]
    fn forced_homophone_substitution() {
        let d = dict("苏\ts u\n酥\ts u\n州\tzh ou\n洲\tzh ou\n海\th ai\n");
        let cfg = NoiseConfig { substitution_rate: 1.0, deletion_rate: 0.0, insertion_rate: 0.0, phonetic_bias: 1.0, seed: 7 };
        assert_eq!(simulate_asr_noise(&chars("苏州酥洲"), &d, &cfg).unwrap(), chars("酥洲苏州"));
    }

    #[test]
    fn same_seed_same_output() {
        let d = dict("a\ta\nb\tb\nc\tc\nd\td\n");
        let cfg = NoiseConfig { substitution_rate: 0.3, deletion_rate: 0.1, insertion_rate: 0.1, phonetic_bias: 0.5, seed: 11 };
        let t = chars("abcdabcdabcd");
        assert_eq!(simulate_asr_noise(&t, &d, &cfg).unwrap(), simulate_asr_noise(&t, &d, &cfg).unwrap());
    }

    #[test]
    fn full_deletion_empties() {
        let d = dict("a\ta\n");
        let cfg = NoiseConfig { substitution_rate: 0.0, deletion_rate: 1.0, insertion_rate: 0.0, phonetic_bias: 0.0, seed: 1 };
        assert!(simulate_asr_noise(&chars("aaaa"), &d, &cfg).unwrap().is_empty());
    }

    #[test]
    fn invalid_config_rejected() {
        let d = dict("a\ta\n");
        let cfg = NoiseConfig { substitution_rate: 0.7, deletion_rate: 0.5, ..NoiseConfig::default() };
        assert!(simulate_asr_noise(&chars("a"), &d, &cfg).is_err());
        let cfg = NoiseConfig { insertion_rate: -0.1, ..NoiseConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
