//! `tabcav` — train tabular classifiers and explain them with concept
//! activation vectors.
//!
//! The subcommands cover the whole workflow: `synth-data` writes benchmark
//! datasets, `train` fits a classifier, `tcav` scores concept predicates
//! against it, `fairness` audits a protected column, and `sweep-bias`
//! repeats the audit across datasets with controlled label bias.
//!
//! Exit codes: 0 on success, 1 for internal or numeric failures, 2 for
//! usage and configuration errors. Reports are deterministic: two runs with
//! the same configuration produce byte-identical JSON and CSV artifacts,
//! with wall-clock information confined to `.run.json` sidecars.

mod artifacts;
mod commands;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SynthData(args) => commands::synth_data(args),
        Command::Train(args) => commands::train(args),
        Command::Tcav(args) => commands::tcav(args),
        Command::Fairness(args) => commands::fairness(args),
        Command::SweepBias(args) => commands::sweep_bias(args),
    }
}

/// Failures that terminate the process, split by exit code: configuration
/// mistakes the user can fix (exit 2) versus internal failures (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Internal(err) => write!(f, "{err:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Internal(err)
    }
}

/// Shorthand for configuration errors (exit code 2).
pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser)]
#[command(
    name = "tabcav",
    version,
    about = "Concept-based attributions and fairness audits for tabular classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark dataset plus a .meta.json sidecar.
    SynthData(SynthDataArgs),
    /// Train a feedforward classifier on a labelled CSV.
    Train(TrainArgs),
    /// Score concept predicates against a trained model.
    Tcav(TcavArgs),
    /// Audit sensitivity to a protected column, with demographic parity.
    Fairness(FairnessArgs),
    /// Generate, train and audit models across a sweep of bias levels.
    SweepBias(SweepBiasArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DataKind {
    /// Ten numeric columns; the label is `X1*X2 < 0`.
    Xor,
    /// A small census-style table with a controllable demographic-parity
    /// gap between gender groups.
    Income,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::Xor => "xor",
            DataKind::Income => "income",
        }
    }
}

#[derive(Args)]
pub struct SynthDataArgs {
    /// Which benchmark table to generate.
    #[arg(value_enum)]
    pub kind: DataKind,
    /// Number of rows.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Demographic-parity gap targeted by the income generator
    /// (positive favours the Female group) [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path [default: `<kind>.csv` under the output directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the label column in the CSV.
    #[arg(long)]
    pub label: String,
    /// Optional held-out CSV scored after training.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Seed for weight init, batch order and the validation split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model output path [default: `model.json` under the output directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// Classifier hyperparameters, shared by `train` and `sweep-bias`.
#[derive(Args)]
pub struct ModelArgs {
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,64,32")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// L2 penalty on weights.
    #[arg(long, default_value_t = 1e-2)]
    pub l2: f64,
    /// Fraction of rows held out for validation accuracy (0 disables).
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
}

#[derive(Args)]
pub struct TcavArgs {
    /// Trained model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV whose class rows drive the gradients (and, for the natural
    /// sources, the concept example pools).
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the label column in the CSV.
    #[arg(long)]
    pub label: String,
    /// A concept predicate such as "age < 25 AND gender == 'Female'".
    /// Repeat the flag for several concepts.
    #[arg(long = "concept")]
    pub concepts: Vec<String>,
    /// File of concept predicates, one per line; `#` starts a comment.
    #[arg(long)]
    pub concepts_file: Option<PathBuf>,
    /// Where concept examples come from: train-data, test-data, uniform,
    /// generator-p1 or generator-p2.
    #[arg(long, default_value = "test-data")]
    pub source: String,
    /// Layers to probe, comma separated [default: every hidden layer].
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<String>,
    /// CAVs trained per concept (bootstrap ensemble size).
    #[arg(long, default_value_t = 10)]
    pub n_runs: usize,
    /// Significance level of the statistical test.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Concept examples per side of each CAV training set.
    #[arg(long, default_value_t = 500)]
    pub examples_per_side: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scoring rule: mean-derivative or sign-fraction.
    #[arg(long, default_value = "mean-derivative")]
    pub score_variant: String,
    /// Report path [default: `tcav.json` under the output directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat per-run CSV for plotting [default: next to the report].
    #[arg(long)]
    pub plot_csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct FairnessArgs {
    /// Trained model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluation CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the label column in the CSV.
    #[arg(long)]
    pub label: String,
    /// Categorical column holding the protected attribute.
    #[arg(long)]
    pub protected_column: String,
    /// Attribute value defining the audited group.
    #[arg(long)]
    pub protected_value: String,
    /// Class treated as the favourable outcome [default: the last class].
    #[arg(long)]
    pub positive_class: Option<String>,
    /// Layers to probe, comma separated [default: every hidden layer].
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub n_runs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scoring rule: mean-derivative or sign-fraction.
    #[arg(long, default_value = "mean-derivative")]
    pub score_variant: String,
    /// Report path [default: `fairness.json` under the output directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepBiasArgs {
    /// Demographic-parity gaps to target, comma separated
    /// (e.g. "-0.3,-0.2,-0.1,0").
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub epsilons: Vec<f64>,
    /// Training rows generated per sweep entry.
    #[arg(long, default_value_t = 30_000)]
    pub n: usize,
    /// Evaluation rows generated per sweep entry.
    #[arg(long, default_value_t = 10_000)]
    pub eval_n: usize,
    /// Sweep entries to run in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 10)]
    pub n_runs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Attribute value defining the audited group.
    #[arg(long, default_value = "Female")]
    pub protected_value: String,
    /// Base seed; per-entry data, model and audit seeds derive from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sweep directory [default: `sweep` under the output directory].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}
