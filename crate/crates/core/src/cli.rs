//! Command-line front end.
//!
//! Reports go to stdout as JSON; diagnostics go to stderr. An optional flat
//! `key = value` file given with `--config` supplies defaults for long
//! options, and flags on the command line override it.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, LevelFilter};
use serde_json::json;

use crate::bench::{run_bench, BenchConfig};
use crate::boosting::{boost, BoostConfig, DEFAULT_RUNS};
use crate::dataio::{
    load_codes, load_features, load_labels, save_codes, write_atomic, Dataset, FeatureFormat,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, PackedCodes, DEFAULT_K};
use crate::model::{trace_csv, HashModel};
use crate::trainer::{train, Hyperparams};

/// Global options that may appear in a config file.
const GLOBAL_KEYS: &[&str] = &["threads"];

#[derive(Debug, Parser)]
#[command(name = "rslh", version, about = "Supervised short-length binary hashing")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, help_heading = "Global options")]
    pub threads: Option<usize>,

    /// Flat `key = value` file of default option values.
    #[arg(long, global = true, help_heading = "Global options", value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More diagnostics on stderr (repeat for debug output).
    #[arg(short, long, global = true, help_heading = "Global options", action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on labelled features.
    Train(TrainArgs),
    /// Train several models and keep a balanced, uncorrelated subset of bits.
    Boost(BoostArgs),
    /// Encode features with a plain or boosted model.
    Encode(EncodeArgs),
    /// Rank a database by Hamming distance and report retrieval metrics.
    Eval(EvalArgs),
    /// Compare plain, boosted and random-rotation codes on synthetic blobs.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,
    #[arg(long, default_value = "binary")]
    pub format: FeatureFormat,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Code length L.
    #[arg(long, default_value_t = 8)]
    pub bits: usize,
    #[arg(long, default_value_t = 3.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub mu: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub lambda: f64,
    #[arg(long, default_value_t = 30)]
    pub max_iters: usize,
    /// Relative objective decrease below which training stops.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Number of kernel anchors (capped at the sample count).
    #[arg(long, default_value_t = 1000)]
    pub anchors: usize,
    /// RBF bandwidth; estimated from the data when omitted.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl HyperArgs {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            mu: self.mu,
            lambda: self.lambda,
            code_length: self.bits,
            max_iters: self.max_iters,
            rel_tol: self.tol,
            anchors: self.anchors,
            sigma: self.sigma,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Objective trace CSV (default: `<out>.trace.csv`).
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoostArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Number of training runs T.
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    pub runs: usize,
    /// Comma-separated per-run seeds (default: seed, seed+1, ...).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Seed for k-means in the bit clustering (default: --seed).
    #[arg(long)]
    pub cluster_seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    #[arg(long, default_value = "binary")]
    pub format: FeatureFormat,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub query_codes: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub query_labels: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub db_codes: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub db_labels: PathBuf,
    /// Cutoff for precision@K.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Also write per-query metrics as CSV.
    #[arg(long, value_name = "FILE")]
    pub per_query: Option<PathBuf>,
    /// Write the JSON report here as well as to stdout.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 2000)]
    pub n_db: usize,
    #[arg(long, default_value_t = 200)]
    pub n_query: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 3.0)]
    pub spread: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 4)]
    pub bits: usize,
    #[arg(long, default_value_t = 300)]
    pub anchors: usize,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON report here as well as to stdout.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    let stdout = std::io::stdout();
    match dispatch(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    // Built explicitly so no environment variable changes behaviour.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Splices options from a `--config` file into `args`: global keys right
/// after the program name, the rest right after the subcommand. Either way
/// they precede the command-line flags, which therefore win.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let (global, local) = parse_config(&text)?;
    let sub = args.iter().position(|a| {
        matches!(
            a.to_str(),
            Some("train" | "boost" | "encode" | "eval" | "bench")
        )
    });
    let mut out = Vec::with_capacity(args.len() + global.len() + local.len());
    out.push(args[0].clone());
    out.extend(global);
    match sub {
        Some(s) => {
            out.extend_from_slice(&args[1..=s]);
            out.extend(local);
            out.extend_from_slice(&args[s + 1..]);
        }
        None => out.extend_from_slice(&args[1..]),
    }
    Ok(out)
}

type ConfigArgs = (Vec<OsString>, Vec<OsString>);

fn parse_config(text: &str) -> Result<ConfigArgs> {
    let mut global = Vec::new();
    let mut local = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("invalid key {key:?}"),
            });
        }
        if key == "config" {
            return Err(Error::Parse {
                line: i + 1,
                message: "config files cannot include other config files".into(),
            });
        }
        let arg = OsString::from(format!("--{key}={}", value.trim()));
        if GLOBAL_KEYS.contains(&key.as_str()) {
            global.push(arg);
        } else {
            local.push(arg);
        }
    }
    Ok((global, local))
}

fn load_dataset(input: &InputArgs) -> Result<Dataset> {
    let features = load_features(&input.features, input.format)?;
    let labels = load_labels(&input.labels)?;
    Dataset::with_inferred_classes(features, labels)
}

fn print_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<String> {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(text)
}

fn default_trace_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".trace.csv");
    PathBuf::from(s)
}

pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Boost(a) => cmd_boost(&a, out),
        Command::Encode(a) => cmd_encode(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    }
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(&a.input)?;
    info!("training on {} samples, {} classes", ds.len(), ds.classes());
    let model = train(&ds, &a.hyper.hyperparams(), a.hyper.seed)?;
    let summary = json!({
        "final_objective": model.final_objective(),
        "sweeps": model.sweeps(),
    });
    let trace = trace_csv(&model.objective_trace);
    let bytes = HashModel::Plain(model).to_bytes()?;
    let trace_path = a.trace.clone().unwrap_or_else(|| default_trace_path(&a.out));
    write_atomic(&a.out, &bytes)?;
    if let Err(e) = write_atomic(&trace_path, trace.as_bytes()) {
        let _ = std::fs::remove_file(&a.out);
        return Err(e);
    }
    print_json(out, &summary)?;
    Ok(())
}

fn cmd_boost(a: &BoostArgs, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(&a.input)?;
    let cfg = BoostConfig {
        runs: a.runs,
        seeds: a.seeds.clone(),
        seed: a.hyper.seed,
        cluster_seed: a.cluster_seed.unwrap_or(a.hyper.seed),
    };
    let model = boost(&ds, &a.hyper.hyperparams(), &cfg)?;
    let summary = json!({
        "code_length": model.code_length(),
        "runs": model.run_seeds.len(),
        "selected": model.selected,
        "used_fallback": model.used_fallback,
    });
    write_atomic(&a.out, &HashModel::Boosted(model).to_bytes()?)?;
    print_json(out, &summary)?;
    Ok(())
}

fn cmd_encode(a: &EncodeArgs, out: &mut dyn Write) -> Result<()> {
    let model = HashModel::load(&a.model)?;
    let features = load_features(&a.features, a.format)?;
    let codes = model.encode(&features)?;
    save_codes(&codes, &a.out)?;
    print_json(
        out,
        &json!({
            "n": codes.len(),
            "code_length": codes.code_length(),
            "boosted": model.is_boosted(),
        }),
    )?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let query = PackedCodes::pack(&load_codes(&a.query_codes)?);
    let db = PackedCodes::pack(&load_codes(&a.db_codes)?);
    let report = evaluate(
        &query,
        &db,
        &load_labels(&a.query_labels)?,
        &load_labels(&a.db_labels)?,
        a.k,
    )?;
    if let Some(p) = &a.per_query {
        let csv = report.per_query_csv().expect("evaluate fills per-query metrics");
        write_atomic(p, csv.as_bytes())?;
    }
    let text = print_json(out, &report)?;
    if let Some(p) = &a.report {
        write_atomic(p, format!("{text}\n").as_bytes())?;
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = BenchConfig {
        n_db: a.n_db,
        n_query: a.n_query,
        dim: a.dim,
        classes: a.classes,
        spread: a.spread,
        noise: a.noise,
        hyper: Hyperparams {
            code_length: a.bits,
            anchors: a.anchors,
            ..Default::default()
        },
        runs: a.runs,
        k: a.k,
        seed: a.seed,
    };
    let report = run_bench(&cfg)?;
    let text = print_json(out, &report)?;
    if let Some(p) = &a.report {
        write_atomic(p, format!("{text}\n").as_bytes())?;
    }
    Ok(())
}
