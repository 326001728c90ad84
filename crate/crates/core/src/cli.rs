//! The `varndrr` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable or malformed files, shape mismatches), 3 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{load_corpus, prepare_task, tokenize, vectorize, write_corpus, Relation, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, label_from_probability, positive_probability, render_comparison, MetricsReport};
use crate::model::DimensionsConfig;
use crate::numerics::RngState;
use crate::synth::{generate_synthetic, SynthConfig};
use crate::trainer::{streams, train_with_progress, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Parser)]
#[command(name = "varndrr", version, about = "Variational discourse relation recognizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a one-vs-all model and write checkpoint, history and manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a corpus.
    Eval(EvalArgs),
    /// Label argument pairs with a trained checkpoint.
    Predict(PredictArgs),
    /// Write a synthetic corpus and its ground-truth description.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Target relation: COM, CON, EXP or TEM.
    #[arg(long)]
    task: Option<Relation>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long = "mc-samples")]
    mc_samples: Option<usize>,
    #[arg(long = "latent-dim")]
    latent_dim: Option<usize>,
    /// Width of every hidden layer, including the relation MLP.
    #[arg(long = "hidden-dim")]
    hidden_dim: Option<usize>,
    /// Bag-of-words dimension, including the unknown-word slot.
    #[arg(long = "vocab-size")]
    vocab_size: Option<usize>,
    #[arg(long = "learning-rate")]
    learning_rate: Option<f64>,
    /// Early-stopping patience in epochs on dev F1; 0 disables it.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file of defaults; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-run exactly the configuration recorded in a run manifest.
    #[arg(long = "from-manifest", conflicts_with = "config")]
    from_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Directory for the metrics CSV; defaults to the checkpoint's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Records as `arg1<TAB>arg2` or full corpus lines.
    #[arg(long)]
    corpus: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Corpus file to write; the ground truth goes to `<out>.truth.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of distinct token types.
    #[arg(long = "vocab-size", default_value_t = 200)]
    vocab_size: usize,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 400)]
    dev: usize,
    #[arg(long, default_value_t = 400)]
    test: usize,
    #[arg(long, default_value = "EXP")]
    task: Relation,
    /// Probability that a token comes from the shared set.
    #[arg(long, default_value_t = 0.3)]
    overlap: f64,
    #[arg(long = "train-positive-fraction", default_value_t = 0.5)]
    train_positive_fraction: f64,
    #[arg(long = "eval-positive-fraction", default_value_t = 0.25)]
    eval_positive_fraction: f64,
    /// Shortest argument, in tokens.
    #[arg(long = "min-tokens", default_value_t = 8)]
    min_tokens: usize,
    #[arg(long = "max-tokens", default_value_t = 16)]
    max_tokens: usize,
}

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub artifact_version: String,
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub vocab_size: usize,
    pub config: TrainConfig,
    pub timings: Option<Timings>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix: u64,
    pub finished_unix: u64,
    pub training_seconds: f64,
    pub epochs_run: usize,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(Error::from)
    }

    fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Parses arguments and runs a command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        return EXIT_NUMERICAL;
    }
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Values from a `--config` file, keyed by flag name without dashes.
fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn file_value<T: std::str::FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    file.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Config(format!("config key {key}: cannot parse {v:?}")))
        })
        .transpose()
}

struct ResolvedTrain {
    corpus: PathBuf,
    out: PathBuf,
    vocab_size: usize,
    config: TrainConfig,
}

fn resolve_train(args: &TrainArgs) -> Result<ResolvedTrain> {
    if let Some(path) = &args.from_manifest {
        let manifest = RunManifest::load(path)?;
        return Ok(ResolvedTrain {
            corpus: args.corpus.clone().unwrap_or(manifest.corpus),
            out: args.out.clone().unwrap_or(manifest.out),
            vocab_size: manifest.vocab_size,
            config: manifest.config,
        });
    }

    let file = match &args.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    const KNOWN: [&str; 12] = [
        "corpus", "task", "seed", "epochs", "batch", "mc-samples", "latent-dim", "hidden-dim",
        "vocab-size", "learning-rate", "patience", "out",
    ];
    if let Some(k) = file.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown config key {k}")));
    }

    macro_rules! pick {
        ($flag:expr, $key:literal, $default:expr) => {
            match $flag.clone() {
                Some(v) => v,
                None => file_value(&file, $key)?.unwrap_or($default),
            }
        };
    }

    let defaults = TrainConfig::default();
    let dflt_dims = DimensionsConfig::default();
    let corpus = args
        .corpus
        .clone()
        .or_else(|| file.get("corpus").map(PathBuf::from))
        .ok_or_else(|| Error::Config("--corpus is required".into()))?;
    let out = args
        .out
        .clone()
        .or_else(|| file.get("out").map(PathBuf::from))
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    let task: Option<Relation> = match args.task {
        Some(t) => Some(t),
        None => file
            .get("task")
            .map(|v| v.parse::<Relation>().map_err(Error::Config))
            .transpose()?,
    };
    let task = task.ok_or_else(|| Error::Config("--task is required".into()))?;

    let vocab_size: usize = pick!(args.vocab_size, "vocab-size", dflt_dims.d_x1);
    let hidden: usize = pick!(args.hidden_dim, "hidden-dim", dflt_dims.d_h1);
    let latent: usize = pick!(args.latent_dim, "latent-dim", dflt_dims.d_z);
    let patience: usize = pick!(args.patience, "patience", defaults.patience.unwrap_or(0));
    let mut adam = defaults.adam;
    adam.alpha = pick!(args.learning_rate, "learning-rate", adam.alpha);

    let config = TrainConfig {
        batch_size: pick!(args.batch, "batch", defaults.batch_size),
        max_epochs: pick!(args.epochs, "epochs", defaults.max_epochs),
        mc_samples: pick!(args.mc_samples, "mc-samples", defaults.mc_samples),
        dims: DimensionsConfig::uniform(vocab_size, hidden, latent),
        adam,
        seed: pick!(args.seed, "seed", defaults.seed),
        task,
        patience: (patience > 0).then_some(patience),
    };
    config.validate()?;
    Ok(ResolvedTrain {
        corpus,
        out,
        vocab_size,
        config,
    })
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ResolvedTrain {
        corpus,
        out,
        vocab_size,
        config,
    } = resolve_train(&args)?;

    // Absolute paths keep the manifest usable from any working directory.
    let corpus = std::fs::canonicalize(&corpus).map_err(|e| Error::io(&corpus, e))?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let out = std::fs::canonicalize(&out).map_err(|e| Error::io(&out, e))?;
    let mut manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME").to_string(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        corpus: corpus.clone(),
        out: out.clone(),
        vocab_size,
        config: config.clone(),
        timings: None,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;

    let data = load_corpus(&corpus)?;
    let root = RngState::new(config.seed);
    let task_data = prepare_task(&data, config.task, vocab_size, &mut root.substream(streams::BALANCE))?;
    eprintln!(
        "{} vs other: {} balanced train, {} dev, {} test, vocabulary {}",
        config.task,
        task_data.train.len(),
        task_data.dev.len(),
        task_data.test.len(),
        vocab_size
    );

    let started_unix = unix_now();
    let clock = Instant::now();
    let outcome = train_with_progress(&config, &task_data, |r| {
        eprintln!(
            "epoch {:>4}  elbo/datapoint {:>12.4}  dev F1 {:.2}",
            r.epoch,
            r.elbo_per_datapoint,
            100.0 * r.dev.f1
        );
    })?;
    let training_seconds = clock.elapsed().as_secs_f64();

    let history_path = out.join(HISTORY_FILE);
    std::fs::write(&history_path, outcome.history.to_csv()).map_err(|e| Error::io(&history_path, e))?;
    Checkpoint::new(&outcome.params, config.seed, config.task, &task_data.vocab).save(out.join(CHECKPOINT_FILE))?;

    let mut metrics_csv = format!("{}\n", MetricsReport::CSV_HEADER);
    for split in [Split::Dev, Split::Test] {
        let instances = task_data.split(split);
        if instances.is_empty() {
            continue;
        }
        let report = evaluate(&outcome.params, instances)?;
        metrics_csv.push_str(&report.csv_row(split.tag()));
        metrics_csv.push('\n');
        println!("{split}: {report}");
    }
    let metrics_path = out.join(METRICS_FILE);
    std::fs::write(&metrics_path, metrics_csv).map_err(|e| Error::io(&metrics_path, e))?;
    if let Some(best) = outcome.history.best_record() {
        println!("best epoch {} (dev F1 {:.2})", best.epoch, 100.0 * best.dev.f1);
    }

    manifest.timings = Some(Timings {
        started_unix,
        finished_unix: unix_now(),
        training_seconds,
        epochs_run: outcome.history.records.len(),
    });
    manifest.save(&manifest_path)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let params = ckpt.to_params()?;
    let data = load_corpus(&args.corpus)?;
    let instances: Vec<_> = data
        .get(args.split)
        .iter()
        .map(|p| vectorize(p, &ckpt.vocab, ckpt.task))
        .collect();
    let report = evaluate(&params, &instances)?;
    print!("{}", render_comparison(ckpt.task, &format!("this ({})", args.split), &report));
    println!("{report}");

    let dir = match args.out {
        Some(d) => d,
        None => args
            .checkpoint
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(format!("metrics_{}.csv", args.split));
    let text = format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row(args.split.tag()));
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Argument pairs from `arg1<TAB>arg2` lines or full corpus lines.
fn read_prediction_input(path: &Path) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (a1, a2) = match fields.len() {
            2 => (fields[0], fields[1]),
            4 => (fields[2], fields[3]),
            n => {
                return Err(Error::Corpus {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected 2 or 4 tab-separated fields, found {n}"),
                })
            }
        };
        out.push((tokenize(a1), tokenize(a2)));
    }
    Ok(out)
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let params = ckpt.to_params()?;
    let records = read_prediction_input(&args.corpus)?;
    let mut text = String::new();
    for (a1, a2) in &records {
        let p = positive_probability(&params, &ckpt.vocab.encode(a1), &ckpt.vocab.encode(a2))?;
        let label = if label_from_probability(p) { ckpt.task.tag() } else { "OTHER" };
        text.push_str(&format!("{label}\t{p}\n"));
    }
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        vocab_size: args.vocab_size,
        train: args.train,
        dev: args.dev,
        test: args.test,
        train_positive_fraction: args.train_positive_fraction,
        eval_positive_fraction: args.eval_positive_fraction,
        overlap: args.overlap,
        target: args.task,
        seed: args.seed,
        min_tokens: args.min_tokens,
        max_tokens: args.max_tokens,
    };
    let corpus = generate_synthetic(&config)?;
    let mut buf = Vec::new();
    write_corpus(&corpus.data, &mut buf).map_err(|e| Error::io(&args.out, e))?;
    std::fs::write(&args.out, buf).map_err(|e| Error::io(&args.out, e))?;
    let truth_path = truth_path(&args.out);
    let truth = serde_json::to_string_pretty(&corpus.truth)?;
    std::fs::write(&truth_path, truth + "\n").map_err(|e| Error::io(&truth_path, e))?;
    eprintln!(
        "wrote {} records to {} (ground truth in {})",
        corpus.data.train.len() + corpus.data.dev.len() + corpus.data.test.len(),
        args.out.display(),
        truth_path.display()
    );
    Ok(())
}

pub fn truth_path(corpus: &Path) -> PathBuf {
    let mut name = corpus.as_os_str().to_owned();
    name.push(".truth.json");
    PathBuf::from(name)
}
