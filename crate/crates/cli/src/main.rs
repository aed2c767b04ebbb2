//! Command line front end for mediation analysis in randomized trials.
//!
//! Four subcommands cover the workflow: `standard` for the sequential-
//! ignorability regression, `iv` for the instrumented two-stage fit with
//! weak-instrument diagnostics, `sensitivity` for effect-drift grids, and
//! `simulate` for Monte Carlo experiments from a scenario file. Reports go
//! to stdout (or `--out`) in text, CSV, or JSON; diagnostics such as the
//! load summary go to stderr. Exit codes: 0 success, 2 configuration or
//! data error, 3 numerical failure.

mod commands;
mod config;
mod render;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mediv::Error;

#[derive(Parser)]
#[command(
    name = "mediv",
    version,
    about = "Mediation analysis for randomized trials using baseline-by-assignment interactions as instruments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regression of the outcome on covariates, assignment and the observed
    /// mediator; valid only under sequential ignorability
    Standard(AnalysisArgs),
    /// Two-stage least squares with assignment-by-covariate instruments,
    /// plus first-stage strength diagnostics
    Iv(IvArgs),
    /// Refit over a grid of effect-drift slopes to see how conclusions move
    /// when effect homogeneity is relaxed
    Sensitivity(SensitivityArgs),
    /// Monte Carlo and moment-condition experiments from a scenario file
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
struct AnalysisArgs {
    /// JSON config file supplying defaults; explicit flags override it
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// CSV dataset with a header row
    #[arg(long)]
    input: Option<std::path::PathBuf>,
    /// Outcome column name
    #[arg(long)]
    outcome: Option<String>,
    /// 0/1 random-assignment column name
    #[arg(long)]
    assignment: Option<String>,
    /// Mediator column name
    #[arg(long)]
    mediator: Option<String>,
    /// Instrumented baseline covariate column; repeatable
    #[arg(long = "x")]
    x: Vec<String>,
    /// Adjustment-only covariate column; repeatable
    #[arg(long = "z")]
    z: Vec<String>,
    /// Two-sided confidence level in (0, 1)
    #[arg(long)]
    ci_level: Option<f64>,
    /// Which covariance to report intervals from
    #[arg(long, value_enum)]
    covariance: Option<CovarianceChoice>,
    /// Divide the residual variance by n - k instead of n
    #[arg(long)]
    dof_adjust: bool,
    /// Report format
    #[arg(long, value_enum)]
    format: Option<FormatChoice>,
    /// Write the report to this file instead of stdout
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Field delimiter for the input file
    #[arg(long)]
    delimiter: Option<char>,
    /// What to do with rows holding missing or unparseable cells
    #[arg(long, value_enum)]
    missing: Option<MissingChoice>,
}

#[derive(Args)]
struct IvArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Adjust the first-stage odds ratio for the X covariates
    #[arg(long)]
    adjusted_or: bool,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Direct-effect drift slopes, one comma-separated vector of length p
    /// per occurrence; repeatable
    #[arg(long = "tau-r", allow_hyphen_values = true)]
    tau_r: Vec<String>,
    /// Mediator-effect drift slopes, same shape as --tau-r; repeatable
    #[arg(long = "tau-m", allow_hyphen_values = true)]
    tau_m: Vec<String>,
    /// Which slope varies in the outer loop of the grid
    #[arg(long, value_enum)]
    order: Option<OrderChoice>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config file supplying defaults; explicit flags override it
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Scenario specification file (JSON)
    #[arg(long)]
    scenario: Option<std::path::PathBuf>,
    /// Monte Carlo replications; 0 skips the Monte Carlo section
    #[arg(long)]
    reps: Option<usize>,
    /// Which estimator the replicates fit
    #[arg(long, value_enum)]
    estimator: Option<EstimatorChoice>,
    /// Override the scenario's random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Also check the instrument moment conditions on one sample of this
    /// size
    #[arg(long)]
    moments: Option<usize>,
    /// Report format
    #[arg(long, value_enum)]
    format: Option<FormatChoice>,
    /// Write the report to this file instead of stdout
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CovarianceChoice {
    Homoskedastic,
    Sandwich,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FormatChoice {
    Text,
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MissingChoice {
    /// Drop incomplete rows and report the counts
    Drop,
    /// Fail on the first incomplete cell
    Fail,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum OrderChoice {
    /// tau_m varies in the outer loop
    MOuter,
    /// tau_r varies in the outer loop
    ROuter,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum EstimatorChoice {
    TwoStage,
    Standard,
    AtTrueTau,
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::RankDeficient { .. }
        | Error::Separation
        | Error::NonConvergence { .. }
        | Error::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Standard(args) => commands::run_standard(&args),
        Command::Iv(args) => commands::run_iv(&args),
        Command::Sensitivity(args) => commands::run_sensitivity(&args),
        Command::Simulate(args) => commands::run_simulate(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
