//! The `synth`, `train`, `eval` and `correct` commands.
//!
//! Every command reads one JSON [`RunConfig`] (or the defaults), applies
//! `--set key=value` overrides addressed by dotted paths, and records the
//! SHA-256 of the resulting canonical JSON in its outputs.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::corpus::{parse_corpus, write_corpus, SemanticTriplet, TripletSet, Utterance};
use crate::eval::{evaluate_modes, write_bucket_tsv, write_predictions};
use crate::ontology::{load_ontology, Lexicon, Ontology, PronunciationDictionary};
use crate::synth::{generate_splits, mean_cer, Domain, SynthConfig};
use crate::tagger::{load_tagger, save_tagger, CharVocab, TagSet, Tagger, TaggerConfig};
use crate::training::{train, Stage, TrainConfig, TrainData, TrainError};
use crate::ver::{build_index, recover, PostProcess, VerConfig, VerIndex};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn data(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// File locations. Unset domain files fall back to the bundled map domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub train_tscp: Option<PathBuf>,
    /// Defaults to `train_tscp`, whose records carry hypotheses too.
    pub train_hyp: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub pronunciation: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            train_tscp: None,
            train_hyp: None,
            valid: None,
            test: None,
            ontology: None,
            pronunciation: None,
            templates: None,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

/// Everything a command needs. `seed` overrides the seeds of the nested
/// training and synthesis sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    pub tagger: TaggerConfig,
    pub train: TrainConfig,
    pub ver: VerConfig,
    pub synth: SynthConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            tagger: TaggerConfig::default(),
            train: TrainConfig::default(),
            ver: VerConfig::default(),
            synth: SynthConfig::default(),
            seed: 1,
        }
    }
}

impl RunConfig {
    /// Propagates `seed` and validates every section.
    pub fn finalize(mut self) -> Result<Self, CliError> {
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
        self.tagger.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.ver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.synth.noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(self)
    }

    /// Hex SHA-256 of the canonical (key-sorted, compact) JSON form.
    /// `paths.output_dir` is left out: where results go does not change them.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value["paths"]["output_dir"] = Value::Null;
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

/// Sets the field at dotted `path` to `raw`, parsed as JSON when possible and
/// as a string otherwise. The field must already exist.
pub fn apply_override(config: &RunConfig, path: &str, raw: &str) -> Result<RunConfig, CliError> {
    let mut value = serde_json::to_value(config).expect("config serializes");
    let mut node = &mut value;
    for key in path.split('.') {
        node = node
            .as_object_mut()
            .and_then(|m| m.get_mut(key))
            .ok_or_else(|| CliError::Config(format!("unknown config key `{path}`")))?;
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("--set {path}={raw}: {e}")))
}

#[derive(Debug, Parser)]
#[command(name = "robust-slu", version, about = "Slot tagging robust to ASR errors")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for decoding and gradient computation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override a config field, e.g. `--set train.eta1=0.002`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/valid/test corpora from templates.
    Synth,
    /// Pretrain and adapt a tagger.
    Train {
        #[arg(long, value_enum)]
        stage: Option<StageArg>,
        /// Permit policy-gradient training from random initialization.
        #[arg(long)]
        allow_rl_from_scratch: bool,
    },
    /// Score a checkpoint on the test corpus.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        postproc: PostprocArg,
    },
    /// Apply value error recovery to each record's semantics.
    Correct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Replace the semantics with tags decoded from the hypothesis first.
        #[arg(long)]
        tag: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StageArg {
    Full,
    PretrainOnly,
    RlOnly,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PostprocArg {
    None,
    Delete,
    Ver,
    All,
}

impl PostprocArg {
    fn modes(self) -> Vec<PostProcess> {
        match self {
            PostprocArg::None => vec![PostProcess::None],
            PostprocArg::Delete => vec![PostProcess::Delete],
            PostprocArg::Ver => vec![PostProcess::Ver],
            PostprocArg::All => PostProcess::ALL.to_vec(),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Loads and finalizes the configuration named by the common flags.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    for item in &common.overrides {
        let (key, value) =
            item.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{item}`")))?;
        config = apply_override(&config, key, value)?;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.finalize()
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = resolve_config(&cli.common)?;
    if let Some(n) = cli.common.threads {
        // A global pool can only be installed once per process; later calls keep the first.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match cli.command {
        Command::Synth => cmd_synth(&config),
        Command::Train { stage, allow_rl_from_scratch } => {
            if let Some(s) = stage {
                config.train.stage = match s {
                    StageArg::Full => Stage::Full,
                    StageArg::PretrainOnly => Stage::PretrainOnly,
                    StageArg::RlOnly => Stage::RlOnly,
                };
            }
            config.train.allow_rl_from_scratch |= allow_rl_from_scratch;
            cmd_train(&config)
        }
        Command::Eval { checkpoint, postproc } => cmd_eval(&config, checkpoint.as_deref(), &postproc.modes()),
        Command::Correct { input, output, tag, checkpoint } => {
            cmd_correct(&config, &input, &output, tag.then_some(checkpoint.as_deref()))
        }
    }
}

fn require<'a>(path: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, CliError> {
    let p = path.as_deref().ok_or_else(|| CliError::Config(format!("paths.{name} is not set")))?;
    if !p.exists() {
        return Err(CliError::Config(format!("paths.{name}: {} does not exist", p.display())));
    }
    Ok(p)
}

fn check_optional(path: &Option<PathBuf>, name: &str) -> Result<(), CliError> {
    if path.is_some() {
        require(path, name)?;
    }
    Ok(())
}

fn load_domain_files(config: &RunConfig) -> Result<(Ontology, PronunciationDictionary), CliError> {
    check_optional(&config.paths.ontology, "ontology")?;
    check_optional(&config.paths.pronunciation, "pronunciation")?;
    let bundled = Domain::bundled_map();
    let ontology = match &config.paths.ontology {
        Some(p) => load_ontology(File::open(p).map_err(|e| data(p, e))?).map_err(|e| data(p, e))?,
        None => bundled.ontology,
    };
    let dictionary = match &config.paths.pronunciation {
        Some(p) => PronunciationDictionary::parse(BufReader::new(File::open(p).map_err(|e| data(p, e))?))
            .map_err(|e| data(p, e))?,
        None => bundled.dictionary,
    };
    Ok((ontology, dictionary))
}

fn read_corpus(path: &Path) -> Result<Vec<Utterance>, CliError> {
    let file = File::open(path).map_err(|e| data(path, e))?;
    parse_corpus(BufReader::new(file)).map_err(|e| data(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(runtime)?;
    writeln!(w).map_err(runtime)?;
    w.flush().map_err(runtime)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn header(config: &RunConfig) -> Value {
    json!({ "config_hash": config.hash(), "seed": config.seed })
}

/// Writes `train.jsonl`, `valid.jsonl`, `test.jsonl` and `run_manifest.json`.
pub fn cmd_synth(config: &RunConfig) -> Result<(), CliError> {
    check_optional(&config.paths.templates, "templates")?;
    let domain = match (&config.paths.ontology, &config.paths.pronunciation, &config.paths.templates) {
        (None, None, None) => Domain::bundled_map(),
        (o, p, t) => {
            let read = |path: &Option<PathBuf>, name: &str| -> Result<String, CliError> {
                let p = require(path, name)?;
                fs::read_to_string(p).map_err(|e| data(p, e))
            };
            Domain::from_sources(&read(o, "ontology")?, &read(p, "pronunciation")?, &read(t, "templates")?)
                .map_err(|e| CliError::Data(e.to_string()))?
        }
    };
    let splits = generate_splits(&domain, &config.synth).map_err(|e| CliError::Data(e.to_string()))?;
    let dir = &config.paths.output_dir;
    ensure_dir(dir)?;
    let mut manifest = header(config);
    for (name, corpus) in [("train", &splits.train), ("valid", &splits.valid), ("test", &splits.test)] {
        let path = dir.join(format!("{name}.jsonl"));
        let mut w = create(&path)?;
        write_corpus(&mut w, corpus).map_err(runtime)?;
        w.flush().map_err(runtime)?;
        manifest[name] = json!({ "file": format!("{name}.jsonl"), "utterances": corpus.len(), "mean_cer": mean_cer(corpus) });
    }
    write_json(&dir.join("run_manifest.json"), &manifest)?;
    log::info!("synth: wrote {} utterances to {} [config {}]", splits.train.len() + splits.valid.len() + splits.test.len(), dir.display(), config.hash());
    Ok(())
}

/// Builds an untrained tagger for the training corpora.
pub fn fresh_tagger(config: &RunConfig, ontology: &Ontology, train: &[Utterance], hyp: &[Utterance]) -> Result<Tagger, CliError> {
    let tagset = TagSet::from_corpus(train.iter().chain(hyp));
    let vocab = CharVocab::from_corpus(train.iter().chain(hyp));
    let lexicon = config.tagger.use_lexicon_features.then(|| Lexicon::from_ontology(ontology));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x494e_4954);
    Tagger::new(config.tagger.clone(), tagset, vocab, lexicon, &mut rng).map_err(|e| CliError::Config(e.to_string()))
}

fn save(path: &Path, model: &Tagger, extra: &Value) -> Result<(), CliError> {
    let mut w = create(path)?;
    save_tagger(&mut w, model, extra).map_err(runtime)?;
    w.flush().map_err(runtime)
}

/// Writes `best.ckpt`, `pretrained.ckpt` (when stage 1 ran), `train_log.jsonl`
/// and `train_summary.json` into the output directory.
pub fn cmd_train(config: &RunConfig) -> Result<(), CliError> {
    let tscp_path = match config.train.stage {
        Stage::RlOnly => config.paths.train_tscp.as_deref(),
        _ => Some(require(&config.paths.train_tscp, "train_tscp")?),
    };
    check_optional(&config.paths.train_hyp, "train_hyp")?;
    let valid_path = require(&config.paths.valid, "valid")?;
    let (ontology, dictionary) = load_domain_files(config)?;
    let tscp = match tscp_path {
        Some(p) if config.train.stage != Stage::RlOnly => read_corpus(p)?,
        _ => Vec::new(),
    };
    let hyp = match (&config.paths.train_hyp, config.train.stage) {
        (_, Stage::PretrainOnly) => Vec::new(),
        (Some(p), _) => read_corpus(p)?,
        (None, _) => match &config.paths.train_tscp {
            Some(p) => read_corpus(require(&Some(p.clone()), "train_tscp")?)?,
            None => return Err(CliError::Config("paths.train_hyp is not set".into())),
        },
    };
    let valid = read_corpus(valid_path)?;
    let index = build_index(&ontology, &dictionary, &config.ver);
    let mut model = fresh_tagger(config, &ontology, &tscp, &hyp)?;
    let dir = &config.paths.output_dir;
    ensure_dir(dir)?;
    let hash = config.hash();
    let mut log_file = create(&dir.join("train_log.jsonl"))?;
    let mut io_error = None;
    let outcome = train(
        &mut model,
        &TrainData { tscp: &tscp, hyp: &hyp, valid: &valid },
        &index,
        &config.ver,
        &config.train,
        |entry| {
            let mut line = serde_json::to_value(entry).expect("log entry serializes");
            line["config_hash"] = json!(hash);
            line["seed"] = json!(config.seed);
            log::info!("{line}");
            if let Err(e) = writeln!(log_file, "{line}") {
                io_error.get_or_insert(e);
            }
        },
    )
    .map_err(|e| match e {
        TrainError::Refused(_) | TrainError::InvalidConfig(_) => CliError::Config(e.to_string()),
        TrainError::Data { .. } => CliError::Data(e.to_string()),
        other => runtime(other),
    })?;
    if let Some(e) = io_error {
        return Err(runtime(e));
    }
    log_file.flush().map_err(runtime)?;
    let meta = json!({
        "config_hash": hash,
        "seed": config.seed,
        "best_stage": outcome.best_stage,
        "best_epoch": outcome.best_epoch,
    });
    save(&dir.join("best.ckpt"), &model, &meta)?;
    if let Some(store) = &outcome.pretrained {
        let mut pre = model.clone();
        pre.store = store.clone();
        save(&dir.join("pretrained.ckpt"), &pre, &json!({ "config_hash": hash, "seed": config.seed, "best_stage": "pretrain" }))?;
    }
    let mut summary = meta;
    summary["valid"] = serde_json::to_value(&outcome.best_valid).map_err(runtime)?;
    write_json(&dir.join("train_summary.json"), &summary)?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Tagger, CliError> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("checkpoint {}: {e}", path.display())))?;
    Ok(load_tagger(BufReader::new(file)).map_err(|e| data(path, e))?.0)
}

/// Writes `report_{mode}.json`, `predictions_{mode}.jsonl` and
/// `buckets_{mode}.tsv` for every requested mode.
pub fn cmd_eval(config: &RunConfig, checkpoint: Option<&Path>, modes: &[PostProcess]) -> Result<(), CliError> {
    let test_path = require(&config.paths.test, "test")?;
    let default_ckpt = config.paths.output_dir.join("best.ckpt");
    let ckpt = checkpoint.unwrap_or(&default_ckpt);
    let (ontology, dictionary) = load_domain_files(config)?;
    let model = load_checkpoint(ckpt)?;
    let test = read_corpus(test_path)?;
    let index = build_index(&ontology, &dictionary, &config.ver);
    let results = evaluate_modes(&model, &test, &index, &config.ver, modes, config.train.eval_beam).map_err(runtime)?;
    let dir = &config.paths.output_dir;
    ensure_dir(dir)?;
    let hash = config.hash();
    for (report, predictions) in results {
        let mode = report.mode;
        let mut doc = header(config);
        doc["checkpoint"] = json!(ckpt.display().to_string());
        doc["report"] = serde_json::to_value(&report).map_err(runtime)?;
        write_json(&dir.join(format!("report_{mode}.json")), &doc)?;
        let mut w = create(&dir.join(format!("predictions_{mode}.jsonl")))?;
        writeln!(w, "# config_hash={hash} seed={}", config.seed).map_err(runtime)?;
        write_predictions(&mut w, &predictions).map_err(runtime)?;
        w.flush().map_err(runtime)?;
        let mut w = create(&dir.join(format!("buckets_{mode}.tsv")))?;
        write_bucket_tsv(&mut w, &report.buckets, Some(&format!("config_hash={hash} seed={}", config.seed)))
            .map_err(runtime)?;
        w.flush().map_err(runtime)?;
        log::info!("eval {mode}: f1 {:.4} joint {:.4} [config {hash}]", report.f1, report.joint_accuracy);
    }
    Ok(())
}

fn semantics_of(record: &Value) -> Result<TripletSet, String> {
    match record.get("semantics") {
        None | Some(Value::Null) => Ok(TripletSet::new()),
        Some(v) => serde_json::from_value::<Vec<SemanticTriplet>>(v.clone())
            .map(|items| items.into_iter().collect())
            .map_err(|e| e.to_string()),
    }
}

/// Rewrites the `semantics` of each JSON line through VER, keeping every
/// other field, the ids and the order. With `tag` set, the semantics are
/// first replaced by the decoded hypothesis (or transcription).
/// A sidecar `{output}.manifest.json` records the config hash.
pub fn cmd_correct(config: &RunConfig, input: &Path, output: &Path, tag: Option<Option<&Path>>) -> Result<(), CliError> {
    if !input.exists() {
        return Err(CliError::Config(format!("input {} does not exist", input.display())));
    }
    let (ontology, dictionary) = load_domain_files(config)?;
    let model = match tag {
        Some(ckpt) => {
            let default_ckpt = config.paths.output_dir.join("best.ckpt");
            Some(load_checkpoint(ckpt.unwrap_or(&default_ckpt))?)
        }
        None => None,
    };
    let ver = VerConfig { mode: PostProcess::Ver, ..config.ver.clone() };
    let index: VerIndex = build_index(&ontology, &dictionary, &ver);
    let reader = BufReader::new(File::open(input).map_err(|e| data(input, e))?);
    let mut out = create(output)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| data(input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: Value =
            serde_json::from_str(&line).map_err(|e| CliError::Data(format!("{} line {}: {e}", input.display(), i + 1)))?;
        if !record.is_object() {
            return Err(CliError::Data(format!("{} line {}: not a JSON object", input.display(), i + 1)));
        }
        let semantics = match &model {
            Some(m) => {
                let text = record
                    .get("hypothesis")
                    .or_else(|| record.get("transcription"))
                    .and_then(Value::as_str)
                    .ok_or_else(|| CliError::Data(format!("{} line {}: no text to tag", input.display(), i + 1)))?;
                let chars: Vec<char> = text.chars().collect();
                m.predict_triplets(&chars, config.train.eval_beam).map_err(runtime)?
            }
            None => semantics_of(&record).map_err(|e| CliError::Data(format!("{} line {}: {e}", input.display(), i + 1)))?,
        };
        let corrected: Vec<SemanticTriplet> = recover(&semantics, &index, &ver).into_iter().collect();
        record["semantics"] = serde_json::to_value(corrected).map_err(runtime)?;
        writeln!(out, "{record}").map_err(runtime)?;
    }
    out.flush().map_err(runtime)?;
    let mut manifest = header(config);
    manifest["input"] = json!(input.display().to_string());
    let sidecar = PathBuf::from(format!("{}.manifest.json", output.display()));
    write_json(&sidecar, &manifest)
}
