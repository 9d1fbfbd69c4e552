//! `temt`: preprocess a temporal KG, build inductive splits, train the interval
//! scorer, predict and evaluate validity intervals, and run triple classification.
//!
//! Settings come from flags (or their `TEMT_*` variables), then a `--config` file of
//! `key=value` lines using the long flag names, then defaults.
//! Exit codes: 0 ok, 2 usage, 3 data error, 4 numeric failure.

mod commands;
mod report;
mod settings;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use temt_core::Execution;

use settings::EncoderSpec;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<temt_core::Error> for CliError {
    fn from(e: temt_core::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "temt",
    version,
    about = "Validity-interval prediction for temporal knowledge graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize raw TSV files (dates to years) into a dataset directory
    Preprocess(PreprocessArgs),
    /// Build an inductive split by removing entities from the graph
    SplitInductive(SplitArgs),
    /// Write the keyed sentence file for the external embedding extractor
    EmitSentences(EmitArgs),
    /// Train the interval scorer and write a checkpoint
    Train(TrainArgs),
    /// Predict ranked intervals for the closed facts of a split
    Predict(PredictArgs),
    /// Score a prediction dump with gIOU, aeIOU and gaeIOU at each k
    Evaluate(EvaluateArgs),
    /// Fit an MLP on triple embeddings to tell true triples from corrupted ones
    ClassifyTriples(ClassifyArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Settings file of key=value lines
    #[arg(long, env = "TEMT_CONFIG")]
    config: Option<PathBuf>,
    /// Dataset directory
    #[arg(long, env = "TEMT_DATA")]
    data: Option<PathBuf>,
    /// Output directory
    #[arg(long, env = "TEMT_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets the pool decide [default: 0]
    #[arg(long, env = "TEMT_THREADS")]
    threads: Option<usize>,
    /// `parallel` or `sequential` [default: parallel]
    #[arg(long, env = "TEMT_EXECUTION")]
    execution: Option<Execution>,
}

#[derive(Debug, Args)]
struct Encoding {
    /// Sentence variant: N (names) or ND (names and descriptions) [default: ND]
    #[arg(long, env = "TEMT_VARIANT")]
    variant: Option<temt_core::text::Variant>,
    /// `table:<path>` or `hash:<seed>` [default: hash:0]
    #[arg(long, env = "TEMT_ENCODER")]
    encoder: Option<EncoderSpec>,
    /// Dimension of the hashing encoder [default: 768]
    #[arg(long, env = "TEMT_TEXT_DIM")]
    text_dim: Option<usize>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[command(flatten)]
    common: Common,
    /// [default: 42]
    #[arg(long, env = "TEMT_SEED")]
    seed: Option<u64>,
    /// Entities removed into the valid split [default: 100]
    #[arg(long, env = "TEMT_VALID_ENTITIES")]
    valid_entities: Option<usize>,
    /// Entities removed into the test split [default: 100]
    #[arg(long, env = "TEMT_TEST_ENTITIES")]
    test_entities: Option<usize>,
    /// Minimum edges every relation keeps in train [default: 100]
    #[arg(long, env = "TEMT_MIN_RELATION_EDGES")]
    min_relation_edges: Option<usize>,
}

#[derive(Debug, Args)]
struct EmitArgs {
    #[command(flatten)]
    common: Common,
    /// [default: ND]
    #[arg(long, env = "TEMT_VARIANT")]
    variant: Option<temt_core::text::Variant>,
    /// Also emit the corrupted triples `classify-triples` will draw [default: false]
    #[arg(long, env = "TEMT_WITH_CLASSIFICATION", num_args = 0..=1, default_missing_value = "true")]
    with_classification: Option<bool>,
    /// Seed of the classification negatives [default: 42]
    #[arg(long, env = "TEMT_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    encoding: Encoding,
    /// [default: 0.001]
    #[arg(long, env = "TEMT_LEARNING_RATE")]
    learning_rate: Option<f64>,
    /// [default: 50]
    #[arg(long, env = "TEMT_EPOCHS")]
    epochs: Option<usize>,
    /// Margin of the ranking loss [default: 2]
    #[arg(long, env = "TEMT_MARGIN")]
    margin: Option<f64>,
    /// Negatives per positive [default: 128]
    #[arg(long, env = "TEMT_NEGATIVES")]
    negatives: Option<usize>,
    /// `time` or `entity` corruption [default: time]
    #[arg(long, env = "TEMT_NEGATIVE_TYPE")]
    negative_type: Option<temt_core::scorer::NegativeKind>,
    /// Positives per mini-batch [default: 512]
    #[arg(long, env = "TEMT_BATCH_SIZE")]
    batch_size: Option<usize>,
    /// Hidden width of the scorer [default: 64]
    #[arg(long, env = "TEMT_HIDDEN")]
    hidden: Option<usize>,
    /// Time embedding dimension, even [default: 64]
    #[arg(long, env = "TEMT_TIME_DIM")]
    time_dim: Option<usize>,
    /// [default: 0.9]
    #[arg(long, env = "TEMT_ADAM_BETA1")]
    adam_beta1: Option<f64>,
    /// [default: 0.999]
    #[arg(long, env = "TEMT_ADAM_BETA2")]
    adam_beta2: Option<f64>,
    /// [default: 1e-8]
    #[arg(long, env = "TEMT_ADAM_EPSILON")]
    adam_epsilon: Option<f64>,
    /// [default: 42]
    #[arg(long, env = "TEMT_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint directory [default: the output directory]
    #[arg(long, env = "TEMT_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
    /// Overrides the encoder recorded in the checkpoint
    #[arg(long, env = "TEMT_ENCODER")]
    encoder: Option<EncoderSpec>,
    /// train, valid or test [default: test]
    #[arg(long, env = "TEMT_SPLIT")]
    split: Option<temt_core::data::SplitKind>,
    /// Intervals per fact; with several values the largest is used [default: 10]
    #[arg(long, env = "TEMT_K", value_delimiter = ',')]
    k: Vec<usize>,
    /// Probability mass each interval must reach [default: 0.65]
    #[arg(long, env = "TEMT_THETA")]
    theta: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Prediction dump [default: <out>/predictions.tsv]
    #[arg(long, env = "TEMT_PREDICTIONS")]
    predictions: Option<PathBuf>,
    /// [default: test]
    #[arg(long, env = "TEMT_SPLIT")]
    split: Option<temt_core::data::SplitKind>,
    /// Cutoffs, repeatable [default: 1,10]
    #[arg(long, env = "TEMT_K", value_delimiter = ',')]
    k: Vec<usize>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    encoding: Encoding,
    /// [default: 42]
    #[arg(long, env = "TEMT_SEED")]
    seed: Option<u64>,
    /// Hidden width of the classifier [default: 100]
    #[arg(long, env = "TEMT_MLP_HIDDEN")]
    mlp_hidden: Option<usize>,
    /// L2 penalty [default: 0.05]
    #[arg(long, env = "TEMT_ALPHA")]
    alpha: Option<f64>,
    /// [default: 0.001]
    #[arg(long, env = "TEMT_MLP_LEARNING_RATE")]
    mlp_learning_rate: Option<f64>,
    /// [default: 1000]
    #[arg(long, env = "TEMT_MAX_ITER")]
    max_iter: Option<usize>,
    /// [default: 200]
    #[arg(long, env = "TEMT_MLP_BATCH_SIZE")]
    mlp_batch_size: Option<usize>,
    /// Loss improvement below which an epoch counts as stalled [default: 1e-4]
    #[arg(long, env = "TEMT_TOL")]
    tol: Option<f64>,
    /// Stalled epochs before stopping [default: 10]
    #[arg(long, env = "TEMT_N_ITER_NO_CHANGE")]
    n_iter_no_change: Option<usize>,
}

fn main() {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let (_, sub) = matches.subcommand().expect("a subcommand is required");
    if let Err(e) = commands::run(cli.command, sub) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
