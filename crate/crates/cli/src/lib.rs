//! Experiment CLI: dataset generation, training, evaluation, ablation, and
//! developer utilities behind one binary.
//!
//! Exit codes: 0 success, 1 usage error (bad flags or config), 2 data/model
//! error (broken artifacts, mismatched pairs, divergence). Outputs are
//! written atomically and output directories are locked for the duration of
//! a run.

mod commands;
mod config;
mod lock;

pub use config::{experiment_hash, load_config, ExperimentConfig, ModelSection};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or config; exits 1 before any file is written.
    #[error("{0}")]
    Usage(String),
    /// Broken or mismatched data/model artifacts, I/O failures, divergence;
    /// exits 2.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

macro_rules! data_error_from {
    ($($ty:ty),+) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )+};
}

data_error_from!(
    std::io::Error,
    demosynth_core::dataset::DatasetError,
    demosynth_core::dsl::DslError,
    demosynth_core::eval::EvalError,
    demosynth_core::model::CheckpointError,
    demosynth_core::model::TrainError,
    demosynth_core::world::WorldError
);

#[derive(Parser)]
#[command(
    name = "demosynth",
    version,
    about = "Program synthesis from demonstrations: generate datasets, train the synthesizer, evaluate under perception noise",
    after_help = "Seeds default to 0/7 per section; DEMOSYNTH_SEED overrides the defaults, \
                  a config file overrides DEMOSYNTH_SEED, and flags override everything."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample programs, generate demonstration sets, write a dataset directory
    Gen(GenArgs),
    /// Train the encoder-decoder synthesizer on a generated dataset
    Train(TrainArgs),
    /// Evaluate a checkpoint at one noise level (exact/alias accuracy)
    Eval(EvalArgs),
    /// Evaluate over an ε grid × seed list and print the ablation table
    Ablate(AblateArgs),
    /// Print the token-id tables and encoding conventions
    Vocab(VocabArgs),
    /// Compare two programs: exact, alias, and behavioral verdicts
    AliasCheck(AliasCheckArgs),
    /// Run a program in a seeded world and print its trace
    RunProgram(RunProgramArgs),
    /// Print version and on-disk format conventions
    Version,
}

#[derive(Args)]
struct GenArgs {
    /// Experiment config file (TOML, partial trees allowed)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Training-split size
    #[arg(long, value_name = "N")]
    train: Option<usize>,
    /// Test-split size
    #[arg(long, value_name = "N")]
    test: Option<usize>,
    /// Demonstrations per program
    #[arg(long, value_name = "K")]
    k: Option<usize>,
    /// Generation seed
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Output dataset directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Worker-parallelism bound for demo-set generation
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config file (TOML, partial trees allowed)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Dataset directory from `gen`
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Output directory for checkpoints and metrics
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Total optimizer steps (absolute; resuming continues toward it)
    #[arg(long, value_name = "N")]
    steps: Option<u64>,
    /// Batch size
    #[arg(long, value_name = "N")]
    batch: Option<usize>,
    /// Peak learning rate
    #[arg(long, value_name = "LR")]
    lr: Option<f64>,
    /// Warmup steps
    #[arg(long, value_name = "N")]
    warmup: Option<usize>,
    /// Training-time perception-noise ε
    #[arg(long, value_name = "EPS")]
    train_noise: Option<f64>,
    /// Initialization/shuffle seed
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Resume from a training checkpoint
    #[arg(long, value_name = "FILE")]
    resume: Option<PathBuf>,
    /// Proceed even if the checkpoint was trained on a different dataset
    #[arg(long)]
    allow_mismatch: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Split {
    Test,
    Train,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment config file (TOML, partial trees allowed)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Model or training checkpoint
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    /// Dataset directory from `gen`
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Which split to evaluate
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Perception-noise ε in [0, 1]
    #[arg(long, value_name = "EPS")]
    noise: Option<f64>,
    /// Action-noise ε in [0, 1]
    #[arg(long, value_name = "EPS")]
    action_noise: Option<f64>,
    /// Noise seed
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Beam width (1 = greedy)
    #[arg(long, value_name = "W", default_value_t = 1)]
    beam: usize,
    /// Write the report as JSON here
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Proceed even if checkpoint and dataset manifests disagree
    #[arg(long)]
    allow_mismatch: bool,
    /// Worker-parallelism bound
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct AblateArgs {
    /// Experiment config file (TOML, partial trees allowed)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Model or training checkpoint
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    /// Dataset directory from `gen`
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Which split to evaluate
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Noise levels, comma-separated (e.g. 0,0.1,0.2)
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "0,0.1,0.2")]
    epsilons: Vec<f64>,
    /// Noise seeds, comma-separated
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Beam width (1 = greedy)
    #[arg(long, value_name = "W", default_value_t = 1)]
    beam: usize,
    /// Write the table as JSON here
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Proceed even if checkpoint and dataset manifests disagree
    #[arg(long)]
    allow_mismatch: bool,
    /// Worker-parallelism bound
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum VocabFormat {
    Text,
    Json,
}

#[derive(Args)]
struct VocabArgs {
    /// Experiment config file (TOML, partial trees allowed)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VocabFormat::Text)]
    format: VocabFormat,
}

#[derive(Args)]
struct AliasCheckArgs {
    /// Experiment config file (TOML, partial trees allowed)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Reference program (must satisfy the standard limits)
    prog_a: PathBuf,
    /// Candidate program (parsed under relaxed limits)
    prog_b: PathBuf,
    /// Rewrite depth bound
    #[arg(long, value_name = "N")]
    depth: Option<usize>,
    /// Behavioral-equivalence trials
    #[arg(long, value_name = "N", default_value_t = 50)]
    trials: usize,
}

#[derive(Args)]
struct RunProgramArgs {
    /// Experiment config file (TOML, partial trees allowed)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Program source file
    #[arg(long, value_name = "FILE")]
    file: PathBuf,
    /// Episode seed
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Step budget override
    #[arg(long, value_name = "N")]
    steps: Option<usize>,
}

/// Parse argv and run the chosen subcommand; returns the process exit code.
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Gen(a) => commands::gen::run(a),
        Cmd::Train(a) => commands::train::run(a),
        Cmd::Eval(a) => commands::eval::run(a),
        Cmd::Ablate(a) => commands::ablate::run(a),
        Cmd::Vocab(a) => commands::vocab::run(a),
        Cmd::AliasCheck(a) => commands::alias_check::run(a),
        Cmd::RunProgram(a) => commands::run_program::run(a),
        Cmd::Version => commands::version::run(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
