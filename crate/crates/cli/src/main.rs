//! `logcontrast` command-line tool.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when the solver did not
//! converge (outputs are still written and flagged).

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "logcontrast", version = commands::BUILD_ID, about = "Sparse log-contrast regression with functional compositional predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one model at a fixed penalty (or along a penalty path).
    Fit(FitArgs),
    /// Choose the basis size and penalty by cross-validation or GIC, then refit.
    Tune(TuneArgs),
    /// Selection proportions over subject-level bootstrap resamples.
    Bootstrap(BootstrapArgs),
    /// Monte Carlo comparison of estimators on synthetic data.
    Simulate(SimulateArgs),
    /// Predict responses for new trajectories from a saved fit.
    Predict(PredictArgs),
    /// Render a simulation summary as a fixed-width table.
    Report(ReportArgs),
    /// Write basis function values on a grid.
    BasisDump(BasisDumpArgs),
    /// Write the integrated design matrix, controls and response.
    DesignDump(DesignDumpArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Long-format trajectory CSV: subject,time,<components...>
    #[arg(long)]
    pub trajectories: PathBuf,
    /// Response CSV: subject,y,<controls...>
    #[arg(long)]
    pub responses: PathBuf,
    /// Time domain `start,end`.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: String,
    /// Value substituted for zero proportions before renormalizing.
    #[arg(long, default_value_t = 0.5)]
    pub zero_replacement: f64,
    /// Integrate each subject over its own observed range only.
    #[arg(long)]
    pub no_boundary_extension: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// cgl, gl, bgl:R (1-based reference) or bgl (reference drawn from --seed).
    #[arg(long, default_value = "cgl")]
    pub variant: String,
    #[arg(long, default_value_t = 1.0)]
    pub mu0: f64,
    #[arg(long, default_value_t = 1.05)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub eps1: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub eps2: f64,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Basis sizes to try, `a..b` or a comma-separated list.
    #[arg(long, default_value = "4..6")]
    pub k_grid: String,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, default_value_t = 50)]
    pub nlambda: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_min_ratio: f64,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, required_unless_present = "lambda_path", conflicts_with = "lambda_path")]
    pub lambda: Option<f64>,
    /// `N:ratio`: N penalties from lambda_max down to ratio * lambda_max;
    /// the saved fit is the last one.
    #[arg(long)]
    pub lambda_path: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of grid points for curves.csv.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub tuning: GridArgs,
    /// cv or gic
    #[arg(long, default_value = "cv")]
    pub criterion: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub tuning: GridArgs,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 30)]
    pub p: usize,
    /// Observation times per subject.
    #[arg(long = "M", default_value_t = 20)]
    pub m: usize,
    #[arg(long, default_value_t = 0.0)]
    pub rho_t: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rho_x: f64,
    #[arg(long, default_value_t = 4.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 9.0)]
    pub sigma_x2: f64,
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value = "cgl,gl,bgl,average,snapshot")]
    pub methods: String,
    #[arg(long, default_value = "cv,gic")]
    pub criteria: String,
    #[command(flatten)]
    pub tuning: GridArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Summary CSV (raw means and standard errors).
    #[arg(long, default_value = "table.csv")]
    pub out: PathBuf,
    /// Also write the first replicate's training data as the standard CSVs.
    #[arg(long)]
    pub emit_data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// fit.json written by `fit` or `tune`.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub trajectories: PathBuf,
    /// Response-format CSV supplying control values; `y` is ignored.
    #[arg(long)]
    pub controls: Option<PathBuf>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Summary CSV written by `simulate`.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BasisDumpArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, default_value = "0,1", allow_hyphen_values = true)]
    pub domain: String,
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DesignDumpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Tune(a) => commands::tune(a),
        Command::Bootstrap(a) => commands::bootstrap(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Report(a) => commands::report(a),
        Command::BasisDump(a) => commands::basis_dump(a),
        Command::DesignDump(a) => commands::design_dump(a),
    };
    match result {
        Ok(status) => status.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
