//! Templated synthetic corpora with simulated ASR noise.
//!
//! A domain is an ontology, a pronunciation dictionary and a list of
//! utterance patterns such as `我想去{inform#dest}`. Each generated
//! utterance fills every placeholder with a value drawn from the candidate
//! list its `(act, slot)` resolves to, records the gold triplets and BIO
//! tags, and corrupts the transcription into a hypothesis.

use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{derive_bio_tags, tags_to_triplets, AsrNoiseSimulator, CorpusError, NoiseConfig, SemanticTriplet, TripletSet, Utterance};
use crate::ontology::{load_ontology, Ontology, OntologyError, PronunciationDictionary};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("template {line}: {message}")]
    Template { line: usize, message: String },
    #[error("no templates")]
    NoTemplates,
    #[error("template `{template}` cannot be realised: {message}")]
    Unrealisable { template: String, message: String },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot { act: String, slot: String },
}

/// A parsed utterance pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    source: String,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self, String> {
        let mut pieces = Vec::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_string()));
            }
            let close = rest[open..].find('}').ok_or("unclosed `{`")? + open;
            let inner = &rest[open + 1..close];
            let (act, slot) = inner.split_once('#').ok_or_else(|| format!("placeholder `{inner}` is not act#slot"))?;
            if act.is_empty() || slot.is_empty() || act.contains('-') {
                return Err(format!("bad placeholder `{inner}`"));
            }
            pieces.push(Piece::Slot { act: act.into(), slot: slot.into() });
            rest = &rest[close + 1..];
        }
        if rest.contains('}') {
            return Err("stray `}`".into());
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(Self { source: source.to_string(), pieces })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn placeholders(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot { act, slot } => Some((act.as_str(), slot.as_str())),
            Piece::Text(_) => None,
        })
    }
}

/// Reads one template per line; blank lines and `#` comments are skipped.
pub fn parse_templates<R: BufRead>(reader: R) -> Result<Vec<Template>, SynthError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(Template::parse(line).map_err(|message| SynthError::Template { line: i + 1, message })?);
    }
    Ok(out)
}

/// Everything needed to generate a corpus.
#[derive(Debug, Clone)]
pub struct Domain {
    pub ontology: Ontology,
    pub dictionary: PronunciationDictionary,
    pub templates: Vec<Template>,
}

const MAP_ONTOLOGY: &str = include_str!("../data/map/ontology.json");
const MAP_PRONUNCIATION: &str = include_str!("../data/map/pronunciation.tsv");
const MAP_TEMPLATES: &str = include_str!("../data/map/templates.txt");

impl Domain {
    /// The bundled Chinese navigation domain.
    pub fn bundled_map() -> Self {
        Self::from_sources(MAP_ONTOLOGY, MAP_PRONUNCIATION, MAP_TEMPLATES).expect("bundled domain is valid")
    }

    pub fn from_sources(ontology: &str, pronunciation: &str, templates: &str) -> Result<Self, SynthError> {
        let domain = Self {
            ontology: load_ontology(ontology.as_bytes())?,
            dictionary: PronunciationDictionary::parse(pronunciation.as_bytes())?,
            templates: parse_templates(templates.as_bytes())?,
        };
        domain.check()?;
        Ok(domain)
    }

    /// Loads `ontology.json`, `pronunciation.tsv` and `templates.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, SynthError> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Self::from_sources(&read("ontology.json")?, &read("pronunciation.tsv")?, &read("templates.txt")?)
    }

    fn check(&self) -> Result<(), SynthError> {
        if self.templates.is_empty() {
            return Err(SynthError::NoTemplates);
        }
        for t in &self.templates {
            let mut need: Vec<(&str, &str)> = t.placeholders().collect();
            for &(act, slot) in &need {
                if self.ontology.candidate_set(act, slot).is_empty() {
                    return Err(SynthError::Unrealisable {
                        template: t.source.clone(),
                        message: format!("no candidates for {act}-{slot}"),
                    });
                }
            }
            need.sort_unstable();
            if need.windows(2).any(|w| w[0] == w[1]) {
                return Err(SynthError::Unrealisable { template: t.source.clone(), message: "repeated placeholder".into() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub noise: NoiseConfig,
    /// When set, each utterance scales the noise rates by a factor drawn
    /// uniformly from `[0, 2)`, which keeps the mean and widens the CER spread.
    pub vary_rates: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { train: 2000, valid: 300, test: 1000, noise: NoiseConfig::default(), vary_rates: true, seed: 7 }
    }
}

/// Train, validation and test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Utterance>,
    pub valid: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

/// Generator state: one RNG for content and one for noise.
pub struct Generator<'a> {
    domain: &'a Domain,
    simulator: AsrNoiseSimulator,
    content_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    noise: NoiseConfig,
    vary_rates: bool,
}

const MAX_ATTEMPTS: usize = 100;

impl<'a> Generator<'a> {
    pub fn new(domain: &'a Domain, noise: NoiseConfig, vary_rates: bool, seed: u64) -> Result<Self, SynthError> {
        noise.validate()?;
        Ok(Self {
            domain,
            simulator: AsrNoiseSimulator::new(&domain.dictionary),
            content_rng: ChaCha8Rng::seed_from_u64(seed),
            noise_rng: ChaCha8Rng::seed_from_u64(seed ^ noise.seed.rotate_left(17) ^ 0x4e4f_4953),
            noise,
            vary_rates,
        })
    }

    /// Clean text, gold triplets and tags. Values filling one template are
    /// pairwise distinct; draws whose tags do not read back to the gold set
    /// are retried.
    fn realise(&mut self) -> Result<(String, TripletSet, Vec<crate::corpus::Tag>), SynthError> {
        let template = self.domain.templates.choose(&mut self.content_rng).expect("checked non-empty").clone();
        for _ in 0..MAX_ATTEMPTS {
            let mut text = String::new();
            let mut gold = TripletSet::new();
            let mut used: Vec<&str> = Vec::new();
            let mut ok = true;
            for piece in &template.pieces {
                match piece {
                    Piece::Text(s) => text.push_str(s),
                    Piece::Slot { act, slot } => {
                        let values = self.domain.ontology.candidate_set(act, slot);
                        let value = values.choose(&mut self.content_rng).expect("checked non-empty");
                        ok &= !used.contains(&value.as_str());
                        used.push(value);
                        text.push_str(value);
                        gold.insert(SemanticTriplet::new(act.clone(), slot.clone(), value.clone()));
                    }
                }
            }
            if !ok {
                continue;
            }
            let chars: Vec<char> = text.chars().collect();
            if let Ok(tags) = derive_bio_tags(&chars, &gold) {
                if tags_to_triplets(&chars, &tags) == gold {
                    return Ok((text, gold, tags));
                }
            }
        }
        Err(SynthError::Unrealisable { template: template.source, message: "no consistent filling found".into() })
    }

    fn corrupt(&mut self, text: &str) -> String {
        let mut config = self.noise.clone();
        if self.vary_rates {
            let scale = self.noise_rng.gen_range(0.0..2.0);
            config.substitution_rate = (config.substitution_rate * scale).min(1.0);
            config.deletion_rate = (config.deletion_rate * scale).min(1.0 - config.substitution_rate);
            config.insertion_rate = (config.insertion_rate * scale).min(1.0);
        }
        let chars: Vec<char> = text.chars().collect();
        self.simulator.corrupt(&chars, &config, &mut self.noise_rng).into_iter().collect()
    }

    /// `count` utterances with ids `{prefix}-{index}`.
    pub fn generate(&mut self, prefix: &str, count: usize) -> Result<Vec<Utterance>, SynthError> {
        (0..count)
            .map(|i| {
                let (text, gold, tags) = self.realise()?;
                let hypothesis = self.corrupt(&text);
                Ok(Utterance {
                    id: format!("{prefix}-{i:05}"),
                    transcription: text,
                    hypothesis,
                    gold,
                    transcription_tags: Some(tags),
                })
            })
            .collect()
    }
}

/// Generates the three splits from one seed.
pub fn generate_splits(domain: &Domain, config: &SynthConfig) -> Result<Splits, SynthError> {
    let mut g = Generator::new(domain, config.noise.clone(), config.vary_rates, config.seed)?;
    Ok(Splits {
        train: g.generate("train", config.train)?,
        valid: g.generate("valid", config.valid)?,
        test: g.generate("test", config.test)?,
    })
}

/// Mean character error rate of hypotheses against transcriptions.
pub fn mean_cer(corpus: &[Utterance]) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    corpus
        .iter()
        .map(|u| crate::corpus::character_error_rate(&u.hypothesis_chars(), &u.transcription_chars()))
        .sum::<f64>()
        / corpus.len() as f64
}
