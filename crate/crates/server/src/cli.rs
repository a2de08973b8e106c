//! Command-line surface of the `taboo` binary.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::commands;
use crate::config;

#[derive(Debug, Parser)]
#[command(
    name = "taboo",
    version,
    about = "Train, evaluate and serve sensitive-information detectors"
)]
pub struct Cli {
    /// Flat `key = value` file of default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean, optionally silver-sample, and split a record file.
    Prepare(PrepareArgs),
    /// Train a detector and write a model container.
    Train(TrainArgs),
    /// Print classification metrics of a model on a record file.
    Eval(EvalArgs),
    /// Compare the errors of two models on a record file.
    Compare(CompareArgs),
    /// Classify the sentences of a raw text document.
    Predict(PredictArgs),
    /// Run the HTTP JSON service.
    Serve(ServeArgs),
}

/// Comma-separated numbers, e.g. `0.8,0.1,0.1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumList(pub Vec<f64>);

fn num_list(s: &str) -> Result<NumList, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("{p:?} is not a number"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(NumList)
}

fn split_fractions(s: &str) -> Result<[f64; 3], String> {
    let v = num_list(s)?.0;
    let [a, b, c] = v[..] else {
        return Err("expected three comma-separated fractions".into());
    };
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err("fractions must lie in [0,1] and sum to 1".into());
    }
    Ok([a, b, c])
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Record file: `label<TAB>info_type<TAB>doc_id<TAB>(s-expression)`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub min_len: usize,
    #[arg(long, default_value_t = 200)]
    pub max_len: usize,
    #[arg(long, default_value = "0.8,0.1,0.1", value_parser = split_fractions)]
    pub splits: [f64; 3],
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Build a balanced silver dataset for this info type.
    #[arg(long, value_name = "INFO_TYPE")]
    pub silver: Option<String>,
    /// Output directory for train.tsv, dev.tsv and test.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Recnn,
    Infrule,
    Csan,
    KeywordMax,
    Selective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Sigmoid,
    Relu,
}

/// `auto` or a number of minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainArg {
    Auto,
    Minibatches(usize),
}

fn pretrain(s: &str) -> Result<PretrainArg, String> {
    if s == "auto" {
        return Ok(PretrainArg::Auto);
    }
    s.parse()
        .map(PretrainArg::Minibatches)
        .map_err(|_| format!("expected `auto` or a minibatch count, got {s:?}"))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub train: PathBuf,
    /// Dev records; required for recnn, selective and keyword-max.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Output model container.
    #[arg(long)]
    pub out: PathBuf,
    /// Info type stored in the container (default: that of the first
    /// training record).
    #[arg(long)]
    pub info_type: Option<String>,

    #[arg(long, default_value_t = 2)]
    pub min_support: usize,
    #[arg(long, default_value_t = 0.6)]
    pub min_confidence: f64,
    /// PMI threshold multiplier for csan.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Largest n-gram order scored by keyword-max.
    #[arg(long, default_value_t = 1)]
    pub order: usize,

    /// Word vectors in text format.
    #[arg(long, conflicts_with = "random_embeddings")]
    pub embeddings: Option<PathBuf>,
    /// Use seeded uniform random vectors of this size for the training vocabulary.
    #[arg(long, value_name = "DIM")]
    pub random_embeddings: Option<usize>,
    /// Store the vector file's path instead of copying the vectors into the container.
    #[arg(long, requires = "embeddings")]
    pub link_embeddings: bool,
    #[arg(long, default_value_t = 300)]
    pub hidden: usize,
    #[arg(long, value_enum, default_value = "tanh")]
    pub activation: ActivationArg,
    #[arg(long, default_value = "0.3,0.1,0.03,0.01", value_parser = num_list)]
    pub learning_rates: NumList,
    #[arg(long, default_value_t = 1)]
    pub line_search_epochs: usize,
    #[arg(long, default_value_t = 25)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Loss weight of the sensitive class.
    #[arg(long, default_value_t = 1.0)]
    pub weight: f64,
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 50)]
    pub max_epochs: usize,
    /// Minibatches between dev evaluations (0: once per epoch).
    #[arg(long, default_value_t = 0)]
    pub probe_interval: usize,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fine-tune the output layer of this recnn container instead of training from scratch.
    #[arg(long)]
    pub base_model: Option<PathBuf>,
    /// Std of Gaussian noise on word vectors while fine-tuning.
    #[arg(long, default_value_t = taboo_core::recnn::DEFAULT_TRANSFER_NOISE)]
    pub noise: f64,

    #[arg(long, default_value_t = 35)]
    pub clusters: usize,
    #[arg(long, default_value_t = 1.9)]
    pub cutoff: f64,
    #[arg(long, default_value = "auto", value_parser = pretrain)]
    pub pretrain: PretrainArg,
    /// Only filter clusters whose dominant label is this class.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub only_class: Option<u8>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub model_a: PathBuf,
    #[arg(long)]
    pub model_b: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Document text.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub text: Option<String>,
    /// File holding the document; `-` reads standard input.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "TABOO_MODELS_DIR")]
    pub models_dir: PathBuf,
    /// Record file with sample sentences for the samples panel.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory of static files served at `/`.
    #[arg(long = "static", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
}

/// A failed command: usage errors exit with 2, data errors with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }

    /// The single JSON line written to stderr.
    pub fn json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            kind: &'a str,
            code: i32,
        }
        serde_json::to_string(&Line {
            error: self.message(),
            kind: self.kind(),
            code: self.code(),
        })
        .expect("plain strings serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message())
    }
}

impl From<taboo_core::Error> for CliError {
    fn from(e: taboo_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

/// Parse arguments, applying a `--config` file if one is named.
pub fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let mut cmd = command();
    let mut args = args;
    if let Some(path) = config::config_path(&args) {
        let sub_name = args.get(1).map(|a| a.to_string_lossy().into_owned());
        let sub = sub_name
            .as_deref()
            .and_then(|n| cmd.find_subcommand(n))
            .cloned();
        if let Some(sub) = sub {
            let text = std::fs::read_to_string(&path).map_err(|e| {
                cmd.error(
                    clap::error::ErrorKind::Io,
                    format!("cannot read config {}: {e}", path.display()),
                )
            })?;
            args = config::parse_config(&text)
                .and_then(|entries| config::merge_into_args(&sub, &args, &entries))
                .map_err(|m| cmd.error(clap::error::ErrorKind::InvalidValue, m))?;
        }
    }
    let matches = cmd.try_get_matches_from_mut(args)?;
    Cli::from_arg_matches(&matches)
}

/// Run one invocation and return the exit code. Results go to stdout;
/// failures print a message followed by one JSON line to stderr.
pub fn run(args: Vec<OsString>) -> i32 {
    let cli = match parse(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            let rendered = e.render().to_string();
            let msg: Vec<&str> = rendered
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            let msg = msg.join(" ");
            let err = CliError::Usage(msg.strip_prefix("error: ").unwrap_or(&msg).to_string());
            eprintln!("{}", err.json_line());
            return err.code();
        }
    };
    match commands::execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.json_line());
            e.code()
        }
    }
}
