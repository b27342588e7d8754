//! Command-line front end. `run` parses arguments, executes one command and
//! returns the process exit code: 0 success, 1 usage error, 2 data error,
//! 3 training failure.

mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::MbklError;
use crate::mbkl::{Method, Step0Mode};

pub use commands::per_sample_latency;
pub use config::ConfigFile;
pub use report::{parse_key_values, FoldLine, RunReport};

#[derive(Parser, Debug)]
#[command(name = "mbkl", version, about = "Multiple binary kernel learning with random decision stumps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model; with --folds, report stratified cross-validation first.
    Train(TrainCmd),
    /// Accuracy of a saved model on labelled data.
    Eval(EvalCmd),
    /// Choose C1/C2 by cross-validation over a grid.
    Cvgrid(CvgridCmd),
    /// Median per-sample prediction latency of a saved model.
    Bench(BenchCmd),
    /// Correlation between chi-square and MBK distances.
    Kernelcorr(KernelcorrCmd),
    /// Dump a saved model as JSON.
    Export(ExportCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Sparse,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

macro_rules! value_enum_from_str {
    ($t:ty) => {
        impl std::str::FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                <$t as ValueEnum>::from_str(s, true)
            }
        }
    };
}
value_enum_from_str!(DataFormat);
value_enum_from_str!(Toggle);

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Dataset path (sparse `label idx:value ...` text or CSV).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
    /// CSV label column (0-based); defaults to the last column.
    #[arg(long)]
    pub label_column: Option<usize>,
    /// The CSV file starts with a header row.
    #[arg(long)]
    pub header: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    /// Logistic feature normalization (default on for CSV, off for sparse).
    #[arg(long, value_enum)]
    pub normalize: Option<Toggle>,
    /// Initial number of random stumps (default max(10 d, 10000)).
    #[arg(long)]
    pub stumps: Option<usize>,
    #[arg(long)]
    pub neg_pos_ratio: Option<f64>,
    /// Maximum number of rows of the kernel-weight problem.
    #[arg(long)]
    pub step1_cap: Option<usize>,
    /// Fix the kernel-weight penalty instead of searching the grid.
    #[arg(long)]
    pub c1: Option<f64>,
    /// Fix the final SVM penalty instead of searching the grid.
    #[arg(long)]
    pub c2: Option<f64>,
    /// Comma-separated C grid (default 0.01,0.1,1,10,100,1000).
    #[arg(long)]
    pub grid: Option<String>,
    /// Folds of the inner penalty search.
    #[arg(long)]
    pub inner_folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Step 0 sign convention: majority, verbatim or hinge.
    #[arg(long)]
    pub step0_table: Option<Step0Mode>,
    /// Train a baseline instead: none, theta1, l1bits or linear.
    #[arg(long)]
    pub baseline: Option<Method>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// Plain-text `key = value` configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write the report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Include wall times in the report file.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub global: GlobalArgs,
    /// Report k-fold stratified cross-validation before the final fit.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Model file to write (default model.mbkl).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub global: GlobalArgs,
    /// Per-sample predictions CSV (`index,true,predicted`).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CvgridCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub global: GlobalArgs,
    /// Cross-validation folds of the search (default: --inner-folds, 3).
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub global: GlobalArgs,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

#[derive(Args, Debug, Clone)]
pub struct KernelcorrCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub global: GlobalArgs,
    /// Number of stumps with theta = 1 (default max(10 d, 10000)).
    #[arg(long)]
    pub stumps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Logistic normalization before measuring (default off).
    #[arg(long, value_enum)]
    pub normalize: Option<Toggle>,
    /// Maximum number of sampled pairs.
    #[arg(long, default_value_t = crate::kernel::PAIR_CAP)]
    pub pair_cap: usize,
    /// Scatter CSV `i,j,chi2,mbkl` (default kernelcorr.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the class-sorted Gram matrix of the same stumps.
    #[arg(long)]
    pub gram: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ExportCmd {
    #[arg(long)]
    pub model: PathBuf,
    /// JSON destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also dump the stump table as CSV.
    #[arg(long)]
    pub stumps_csv: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Mbkl(MbklError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Mbkl(e) => match e {
                MbklError::InvalidConfig(_) => 1,
                MbklError::EmptyBank | MbklError::Solver(_) => 3,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Mbkl(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<MbklError> for CliError {
    fn from(e: MbklError) -> Self {
        CliError::Mbkl(e)
    }
}

/// Parses `args` (program name first), runs the command writing its report
/// to `out`, and returns the exit code. Errors go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Train(c) => commands::train(c, out),
        Command::Eval(c) => commands::eval(c, out),
        Command::Cvgrid(c) => commands::cvgrid(c, out),
        Command::Bench(c) => commands::bench(c, out),
        Command::Kernelcorr(c) => commands::kernelcorr(c, out),
        Command::Export(c) => commands::export(c, out),
    }
}
