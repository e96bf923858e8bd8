//! `npfs` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure, 4 trajectory
//! mismatch in `benchmark`.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use npfs::data::{LabelColumn, SyntheticSpec};
use npfs::{Folds, NpfsError};

#[derive(Parser)]
#[command(name = "npfs", version, about = "Forward feature selection for Gaussian mixture classifiers")]
struct Cli {
    /// Worker threads for candidate scoring (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select features on a labeled CSV and save the report and final model.
    Select(SelectArgs),
    /// Fit a model on a given feature list.
    Fit(FitArgs),
    /// Predict labels with a saved model.
    Predict(PredictArgs),
    /// Time the fast selection path against the refit-per-fold path.
    Benchmark(BenchmarkArgs),
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// Labeled CSV file.
    #[arg(long)]
    pub input: PathBuf,
    /// Label column, by 0-based index or header name.
    #[arg(long, default_value = "0")]
    pub label_column: LabelColumn,
    /// The CSV has no header line.
    #[arg(long)]
    pub no_header: bool,
    /// Standardize features with training-set statistics.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub standardize: bool,
}

#[derive(Args, Clone)]
pub struct SelectionArgs {
    /// Number of folds, or `loo` for leave-one-out.
    #[arg(long, default_value = "5", value_parser = parse_folds)]
    pub k: Folds,
    /// Minimum accuracy gain (absolute fraction) to accept a feature.
    #[arg(long, default_value_t = 0.005)]
    pub delta: f64,
    /// Maximum number of selected features (default: 20, capped at the
    /// number of features).
    #[arg(long)]
    pub max_variables: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stratify folds by class.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub stratified: bool,
    /// Draw new folds at every iteration.
    #[arg(long)]
    pub refold: bool,
}

#[derive(Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Directory for report.json, report.txt and model.json.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated feature indices or header names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<String>,
    /// Model file to write.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Column holding true labels; excluded from the features and used to
    /// report overall accuracy.
    #[arg(long)]
    pub truth_column: Option<LabelColumn>,
    #[arg(long)]
    pub no_header: bool,
    /// Where to write predicted labels (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct SyntheticArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub dim: usize,
    /// Comma-separated informative feature indices.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub informative: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    /// Target condition number of the nuisance covariance.
    #[arg(long, default_value_t = 10.0)]
    pub condition: f64,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
}

impl SyntheticArgs {
    pub fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_classes: self.classes,
            dim: self.dim,
            informative: self.informative.clone(),
            separation: self.separation,
            condition: self.condition,
            n_per_class: self.per_class,
            seed,
        }
    }
}

#[derive(Args)]
pub struct BenchmarkArgs {
    /// Labeled CSV; when absent a synthetic dataset is generated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "0")]
    pub label_column: LabelColumn,
    #[arg(long)]
    pub no_header: bool,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    /// Runs of each path; synthetic data is drawn with `--seed`.
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// Write the benchmark report as JSON here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

fn parse_folds(s: &str) -> Result<Folds, String> {
    if s.eq_ignore_ascii_case("loo") {
        return Ok(Folds::LeaveOneOut);
    }
    s.parse().map(Folds::KFold).map_err(|_| format!("expected an integer or `loo`, got `{s}`"))
}

fn exit_code(e: &NpfsError) -> u8 {
    match e {
        NpfsError::TrajectoryMismatch(_) => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool already built");
    }
    let result = match cli.command {
        Command::Select(a) => commands::select(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Benchmark(a) => commands::benchmark(&a),
        Command::Generate(a) => commands::generate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_flag() {
        assert_eq!(parse_folds("loo"), Ok(Folds::LeaveOneOut));
        assert_eq!(parse_folds("5"), Ok(Folds::KFold(5)));
        assert!(parse_folds("five").is_err());
    }

    #[test]
    fn error_exit_codes() {
        assert_eq!(exit_code(&NpfsError::TrajectoryMismatch("x".into())), 4);
        assert_eq!(exit_code(&NpfsError::SingularCovariance { class: 0, context: None }), 3);
        assert_eq!(exit_code(&NpfsError::NoFeasibleCandidate), 3);
        assert_eq!(exit_code(&NpfsError::SchemaMismatch("x".into())), 2);
    }
}
