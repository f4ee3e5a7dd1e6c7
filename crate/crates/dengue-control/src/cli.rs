//! Batch front-end: forward simulations, single solves, and the full
//! scheme-by-step benchmark grid, with CSV/JSON artifacts.
//!
//! Artifacts written into the output directory:
//!
//! * `trajectory.csv` (simulate) / `solution.csv` (solve): node rows with
//!   header `t,x1,x2,x3,x4,x5,u1,u2`
//! * `report.json` (solve): problem descriptor, options, status,
//!   objective, iteration counts, residuals, multipliers, wall time
//! * `bench.csv` (bench): one row per (scheme, h) run
//!
//! Wall times are measured around the solve call only and reported at
//! millisecond resolution; all other numbers are written in shortest
//! round-trip form so artifacts reparse exactly.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::config::ModelConfig;
use crate::grid::{Grid, Scheme};
use crate::model::{ControlVec, ModelParams, StateVec};
use crate::simulate::{simulate, ControlSchedule, Trajectory};
use crate::solver::{solve, SolveReport, SolveStatus, SolverOptions};
use crate::transcription::{ControlBounds, LayoutDescriptor, NlpProblem};

/// Everything a batch run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub scheme: Scheme,
    pub h: f64,
    pub out_dir: PathBuf,
    pub solver: SolverOptions,
    pub control_bounds: ControlBounds,
    /// Benchmark grid: every scheme is run at every step.
    pub bench_schemes: Vec<Scheme>,
    pub bench_steps: Vec<f64>,
    /// Worker threads for the benchmark grid.
    pub parallel: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            scheme: Scheme::Euler,
            h: 0.5,
            out_dir: PathBuf::from("out"),
            solver: SolverOptions::default(),
            control_bounds: ControlBounds::default(),
            bench_schemes: vec![Scheme::Euler, Scheme::Trapezoidal],
            bench_steps: vec![0.5, 0.25, 0.125],
            parallel: 1,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: exit code 2.
    Config(String),
    /// Runtime failure (I/O, non-convergent integration): exit code 1.
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Run(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

fn build_grid(config: &RunConfig) -> Result<Grid, CliError> {
    Grid::new(config.model.t_final, config.h).map_err(|e| CliError::Config(e.to_string()))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))
}

/// Integrate the uncontrolled model forward and write `trajectory.csv`.
pub fn run_simulate(config: &RunConfig) -> Result<Trajectory, CliError> {
    let grid = build_grid(config)?;
    let schedule = ControlSchedule::zero(grid, config.scheme);
    let traj = simulate(
        &schedule,
        config.scheme,
        config.model.x_init,
        &config.model.params,
    )
    .map_err(|e| CliError::Run(e.to_string()))?;
    ensure_out_dir(&config.out_dir)?;
    let path = config.out_dir.join("trajectory.csv");
    let file = fs::File::create(&path)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))?;
    traj.write_csv(BufWriter::new(file))
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))?;
    println!(
        "simulated {} ({} steps of h={}): final accumulated cost x5({}) = {}",
        config.scheme, grid.n_steps, grid.h, grid.t_final, traj.final_cost()
    );
    Ok(traj)
}

/// Transcribe, solve, and write `report.json` plus `solution.csv`.
pub fn run_solve(config: &RunConfig) -> Result<(NlpProblem, SolveReport), CliError> {
    let (problem, report) = solve_one(config, config.scheme, config.h)?;
    ensure_out_dir(&config.out_dir)?;

    let csv_path = config.out_dir.join("solution.csv");
    let file = fs::File::create(&csv_path)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", csv_path.display())))?;
    report
        .trajectory
        .write_csv(BufWriter::new(file))
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", csv_path.display())))?;

    let json_path = config.out_dir.join("report.json");
    let json = report_json(&problem, &report, &config.solver);
    let text = serde_json::to_string_pretty(&json)
        .map_err(|e| CliError::Run(format!("cannot serialize report: {e}")))?;
    fs::write(&json_path, text + "\n")
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", json_path.display())))?;

    println!(
        "{} h={}: status {:?}, objective {:.6e}, feas {:.3e}, kkt {:.3e}, {} outer / {} inner, {:.3} s",
        config.scheme,
        config.h,
        report.status,
        report.objective,
        report.feas_inf_norm,
        report.kkt_inf_norm,
        report.outer_iters,
        report.inner_iters_total,
        round_ms(report.wall_time),
    );
    Ok((problem, report))
}

fn solve_one(
    config: &RunConfig,
    scheme: Scheme,
    h: f64,
) -> Result<(NlpProblem, SolveReport), CliError> {
    config
        .solver
        .validate()
        .map_err(|e| CliError::Config(format!("solver options: {e}")))?;
    let grid = Grid::new(config.model.t_final, h).map_err(|e| CliError::Config(e.to_string()))?;
    let problem = NlpProblem::build(
        grid,
        scheme,
        config.model.params,
        config.model.x_init,
        config.control_bounds,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    // Initial guess: the uncontrolled simulation, feasible by construction.
    let schedule = ControlSchedule::zero(grid, scheme);
    let traj = simulate(&schedule, scheme, config.model.x_init, &config.model.params)
        .map_err(|e| CliError::Run(format!("initial-guess simulation failed: {e}")))?;
    let z0 = problem
        .pack_trajectory(&traj)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let report = solve(&problem, &z0, &config.solver);
    Ok((problem, report))
}

/// One line of the benchmark grid.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub h: f64,
    pub n_vars: usize,
    pub n_cons: usize,
    pub outcome: Result<BenchOutcome, String>,
}

/// Solve summary carried by a successful bench row.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub status: SolveStatus,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub objective: f64,
    pub feas: f64,
    pub kkt: f64,
    pub wall_time_s: f64,
}

/// Run the full scheme-by-step grid and write `bench.csv`.
///
/// Rows run independently (optionally on `parallel` worker threads);
/// failures are recorded per row and do not stop the grid. Artifacts are
/// written by this thread after all rows finish, in grid order.
pub fn run_bench(config: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    let mut specs = Vec::new();
    for &scheme in &config.bench_schemes {
        for &h in &config.bench_steps {
            specs.push((scheme, h));
        }
    }

    let results: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; specs.len()]);
    let next = AtomicUsize::new(0);
    let workers = config.parallel.max(1).min(specs.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let (scheme, h) = specs[i];
                let row = bench_one(config, scheme, h);
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });

    let rows: Vec<BenchRow> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every row visited"))
        .collect();

    ensure_out_dir(&config.out_dir)?;
    let path = config.out_dir.join("bench.csv");
    let mut out = String::from(
        "scheme,h,n_vars,n_cons,outer_iters,inner_iters,objective,feas,kkt,wall_time_s\n",
    );
    for row in &rows {
        if let Ok(o) = &row.outcome {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                row.scheme,
                row.h,
                row.n_vars,
                row.n_cons,
                o.outer_iters,
                o.inner_iters,
                o.objective,
                o.feas,
                o.kkt,
                round_ms(o.wall_time_s),
            ));
        }
    }
    fs::write(&path, out)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))?;

    print!("{}", render_bench_table(&rows));
    Ok(rows)
}

fn bench_one(config: &RunConfig, scheme: Scheme, h: f64) -> BenchRow {
    let sizes = Grid::new(config.model.t_final, h)
        .ok()
        .map(|grid| {
            let layout = crate::transcription::Layout::new(scheme, grid.n_steps);
            (layout.n_vars(), 5 * grid.n_steps)
        })
        .unwrap_or((0, 0));
    match solve_one(config, scheme, h) {
        Ok((problem, report)) => BenchRow {
            scheme,
            h,
            n_vars: problem.n_vars(),
            n_cons: problem.n_cons(),
            outcome: Ok(BenchOutcome {
                status: report.status,
                outer_iters: report.outer_iters,
                inner_iters: report.inner_iters_total,
                objective: report.objective,
                feas: report.feas_inf_norm,
                kkt: report.kkt_inf_norm,
                wall_time_s: report.wall_time,
            }),
        },
        Err(e) => BenchRow {
            scheme,
            h,
            n_vars: sizes.0,
            n_cons: sizes.1,
            outcome: Err(e.to_string()),
        },
    }
}

/// Aligned text table over the benchmark rows: steps as rows, problem size
/// and solver performance as columns, grouped by scheme.
pub fn render_bench_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>7} {:>8} {:>9} {:>8} {:>8} {:>12} {:>10} {:>10} {:>10}  {}\n",
        "scheme", "h", "# var.", "# const.", "# outer", "# inner", "objective", "feas", "kkt",
        "time (s)", "status"
    ));
    for row in rows {
        match &row.outcome {
            Ok(o) => out.push_str(&format!(
                "{:<12} {:>7} {:>8} {:>9} {:>8} {:>8} {:>12.4e} {:>10.2e} {:>10.2e} {:>10.3}  {}\n",
                row.scheme.to_string(),
                row.h,
                row.n_vars,
                row.n_cons,
                o.outer_iters,
                o.inner_iters,
                o.objective,
                o.feas,
                o.kkt,
                round_ms(o.wall_time_s),
                match o.status {
                    SolveStatus::Converged => "converged",
                    SolveStatus::MaxIterations => "max iterations",
                    SolveStatus::InnerFailure => "inner failure",
                },
            )),
            Err(e) => out.push_str(&format!(
                "{:<12} {:>7} {:>8} {:>9} {:>8} {:>8} {:>12} {:>10} {:>10} {:>10}  error: {}\n",
                row.scheme.to_string(),
                row.h,
                row.n_vars,
                row.n_cons,
                "-",
                "-",
                "-",
                "-",
                "-",
                "-",
                e,
            )),
        }
    }
    out
}

/// Seconds rounded to millisecond resolution.
fn round_ms(seconds: f64) -> f64 {
    (seconds * 1000.0).round() / 1000.0
}

#[derive(Serialize)]
struct ProblemJson {
    scheme: Scheme,
    h: f64,
    t_final: f64,
    n_steps: usize,
    n_vars: usize,
    n_cons: usize,
    layout: LayoutDescriptor,
    /// `null` marks an unbounded side.
    control_lower: [Option<f64>; 2],
    control_upper: [Option<f64>; 2],
    params: ModelParams,
    x_init: [f64; 5],
}

#[derive(Serialize)]
struct ReportJson<'a> {
    problem: ProblemJson,
    options: &'a SolverOptions,
    status: SolveStatus,
    objective: f64,
    outer_iters: usize,
    inner_iters_total: usize,
    feas_inf_norm: f64,
    kkt_inf_norm: f64,
    wall_time_s: f64,
    note: Option<&'a str>,
    multipliers: &'a [f64],
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn report_json<'a>(
    problem: &NlpProblem,
    report: &'a SolveReport,
    options: &'a SolverOptions,
) -> ReportJson<'a> {
    let lower0 = problem.lower[problem.layout.control_offset(0)];
    let lower1 = problem.lower[problem.layout.control_offset(0) + 1];
    let upper0 = problem.upper[problem.layout.control_offset(0)];
    let upper1 = problem.upper[problem.layout.control_offset(0) + 1];
    ReportJson {
        problem: ProblemJson {
            scheme: problem.scheme,
            h: problem.grid.h,
            t_final: problem.grid.t_final,
            n_steps: problem.grid.n_steps,
            n_vars: problem.n_vars(),
            n_cons: problem.n_cons(),
            layout: problem.layout.descriptor(),
            control_lower: [finite_or_none(lower0), finite_or_none(lower1)],
            control_upper: [finite_or_none(upper0), finite_or_none(upper1)],
            params: problem.params,
            x_init: problem.x_init.0,
        },
        options,
        status: report.status,
        objective: report.objective,
        outer_iters: report.outer_iters,
        inner_iters_total: report.inner_iters_total,
        feas_inf_norm: report.feas_inf_norm,
        kkt_inf_norm: report.kkt_inf_norm,
        wall_time_s: round_ms(report.wall_time),
        note: report.note.as_deref(),
        multipliers: &report.multipliers,
    }
}

/// Parse a `t,x1..x5,u1,u2` CSV produced by [`Trajectory::write_csv`] back
/// into node states and controls. Blank control cells are skipped.
pub fn parse_trajectory_csv(text: &str) -> Result<(Vec<StateVec>, Vec<ControlVec>), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?;
    if header != "t,x1,x2,x3,x4,x5,u1,u2" {
        return Err(format!("unexpected header: {header}"));
    }
    let mut states = Vec::new();
    let mut controls = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(format!("row {}: expected 8 fields, got {}", i + 1, fields.len()));
        }
        let num = |s: &str| -> Result<f64, String> {
            s.parse().map_err(|_| format!("row {}: bad number `{s}`", i + 1))
        };
        states.push(StateVec::new(
            num(fields[1])?,
            num(fields[2])?,
            num(fields[3])?,
            num(fields[4])?,
            num(fields[5])?,
        ));
        if !fields[6].is_empty() {
            controls.push(ControlVec::new(num(fields[6])?, num(fields[7])?));
        }
    }
    Ok((states, controls))
}
