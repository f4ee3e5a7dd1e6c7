//! `dengue`: batch experiments on the transcribed epidemic control
//! problem. Exit codes: 0 success, 1 solver failure, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dengue_control::cli::{run_bench, run_simulate, run_solve, CliError, RunConfig};
use dengue_control::model::ControlVec;
use dengue_control::solver::SolveStatus;
use dengue_control::{load_config, Scheme};

#[derive(Parser)]
#[command(
    name = "dengue",
    version,
    about = "Simulate, solve, and benchmark the dengue optimal-control problem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the uncontrolled model; writes trajectory.csv
    Simulate(CommonArgs),
    /// Transcribe and solve one problem; writes report.json and solution.csv
    Solve(SolveArgs),
    /// Solve the whole scheme-by-step grid; writes bench.csv
    Bench(BenchArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Discretization scheme: euler or trapezoidal
    #[arg(long, value_parser = parse_scheme, default_value = "euler")]
    scheme: Scheme,
    /// Mesh step in weeks; must divide the final time
    #[arg(long = "h", default_value_t = 0.5)]
    h: f64,
    /// key=value parameter file (defaults used for missing keys)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SolverArgs {
    /// Feasibility tolerance on the defect infinity norm
    #[arg(long = "tol-feas")]
    tol_feas: Option<f64>,
    /// Optimality tolerance on the projected-gradient infinity norm
    #[arg(long = "tol-opt")]
    tol_opt: Option<f64>,
    /// Outer iteration budget
    #[arg(long = "max-outer")]
    max_outer: Option<usize>,
    /// Upper bound applied to both controls (default: unbounded)
    #[arg(long = "u-max")]
    u_max: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    /// key=value parameter file (defaults used for missing keys)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the grid
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).ok_or_else(|| format!("unknown scheme `{s}` (expected euler or trapezoidal)"))
}

fn apply_solver_args(config: &mut RunConfig, args: &SolverArgs) {
    if let Some(v) = args.tol_feas {
        config.solver.tol_feas = v;
    }
    if let Some(v) = args.tol_opt {
        config.solver.tol_opt = v;
    }
    if let Some(v) = args.max_outer {
        config.solver.max_outer = v;
    }
    if let Some(v) = args.u_max {
        config.control_bounds.upper = ControlVec::new(v, v);
    }
}

fn load_model(path: &Option<PathBuf>) -> Result<dengue_control::ModelConfig, CliError> {
    match path {
        Some(p) => load_config(p).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(dengue_control::ModelConfig::default()),
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let config = RunConfig {
                model: load_model(&args.config)?,
                scheme: args.scheme,
                h: args.h,
                out_dir: args.out,
                ..RunConfig::default()
            };
            run_simulate(&config)?;
            Ok(0)
        }
        Command::Solve(args) => {
            let mut config = RunConfig {
                model: load_model(&args.common.config)?,
                scheme: args.common.scheme,
                h: args.common.h,
                out_dir: args.common.out,
                ..RunConfig::default()
            };
            apply_solver_args(&mut config, &args.solver);
            let (_, report) = run_solve(&config)?;
            Ok(if report.converged() { 0 } else { 1 })
        }
        Command::Bench(args) => {
            let mut config = RunConfig {
                model: load_model(&args.config)?,
                out_dir: args.out,
                parallel: args.parallel,
                ..RunConfig::default()
            };
            apply_solver_args(&mut config, &args.solver);
            let rows = run_bench(&config)?;
            let all_converged = rows.iter().all(|row| match &row.outcome {
                Ok(o) => o.status == SolveStatus::Converged,
                Err(_) => false,
            });
            Ok(if all_converged { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
