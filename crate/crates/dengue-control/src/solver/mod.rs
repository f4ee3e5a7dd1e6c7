//! Bound-constrained augmented-Lagrangian solver for the transcribed NLP.
//!
//! The equality-constrained problem `min f(z) s.t. c(z) = 0, l <= z <= u`
//! is solved as a sequence of box-constrained minimizations of
//!
//! ```text
//! L(z; lambda, rho) = f(z) + lambda^T c(z) + (rho/2) ||c(z)||^2
//! ```
//!
//! with first-order multiplier updates `lambda <- lambda + rho c(z*)` after
//! each inner solve and penalty growth whenever feasibility stagnates. The
//! inner minimizer is a projected L-BFGS descent over the bound box.
//! Everything is deterministic: repeated solves of the same problem produce
//! identical reports except for wall time.

mod lbfgs;

use std::time::Instant;

use serde::Serialize;

use crate::simulate::Trajectory;
use crate::transcription::{NlpProblem, SparseJacobian};

/// Evaluation interface the solver needs from a problem.
pub trait Problem {
    fn n_vars(&self) -> usize;
    fn n_cons(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn eval_objective(&self, z: &[f64]) -> f64;
    fn eval_objective_gradient(&self, z: &[f64], out: &mut [f64]);
    fn eval_constraints(&self, z: &[f64], out: &mut [f64]);
    fn eval_jacobian(&self, z: &[f64]) -> SparseJacobian;
}

impl Problem for NlpProblem {
    fn n_vars(&self) -> usize {
        NlpProblem::n_vars(self)
    }
    fn n_cons(&self) -> usize {
        NlpProblem::n_cons(self)
    }
    fn lower(&self) -> &[f64] {
        &self.lower
    }
    fn upper(&self) -> &[f64] {
        &self.upper
    }
    fn eval_objective(&self, z: &[f64]) -> f64 {
        self.objective(z).expect("length checked by solver")
    }
    fn eval_objective_gradient(&self, z: &[f64], out: &mut [f64]) {
        let g = self.objective_gradient(z).expect("length checked by solver");
        out.copy_from_slice(&g);
    }
    fn eval_constraints(&self, z: &[f64], out: &mut [f64]) {
        let c = self.defects(z).expect("length checked by solver");
        out.copy_from_slice(&c);
    }
    fn eval_jacobian(&self, z: &[f64]) -> SparseJacobian {
        self.defect_jacobian(z).expect("length checked by solver")
    }
}

/// Augmented-Lagrangian solver controls. All defaults are deterministic;
/// there is no random state anywhere in the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Constraint infinity-norm accepted as feasible.
    pub tol_feas: f64,
    /// Projected-gradient infinity-norm accepted as stationary.
    pub tol_opt: f64,
    /// Initial quadratic penalty weight.
    pub penalty_init: f64,
    /// Multiplicative penalty growth on stagnant feasibility.
    pub penalty_growth: f64,
    /// Required feasibility decrease ratio per outer iteration.
    pub feas_decrease: f64,
    /// Outer (multiplier update) iteration budget.
    pub max_outer: usize,
    /// Inner minimization iteration budget per outer iteration.
    pub max_inner: usize,
    /// Limited-memory pairs kept by the inner minimizer.
    pub lbfgs_memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_feas: 1e-6,
            tol_opt: 1e-4,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            feas_decrease: 0.25,
            max_outer: 50,
            max_inner: 2000,
            lbfgs_memory: 10,
        }
    }
}

impl SolverOptions {
    /// Check the option invariants: positive finite tolerances and penalty,
    /// growth above one, a decrease ratio in (0, 1), nonzero budgets.
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("tol_feas", self.tol_feas),
            ("tol_opt", self.tol_opt),
            ("penalty_init", self.penalty_init),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if !self.penalty_growth.is_finite() || self.penalty_growth <= 1.0 {
            return Err(format!(
                "penalty_growth must exceed 1, got {}",
                self.penalty_growth
            ));
        }
        if !self.feas_decrease.is_finite()
            || self.feas_decrease <= 0.0
            || self.feas_decrease >= 1.0
        {
            return Err(format!(
                "feas_decrease must lie in (0, 1), got {}",
                self.feas_decrease
            ));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.lbfgs_memory == 0 {
            return Err("iteration budgets and memory must be nonzero".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Both tolerances met; the report's residuals certify it.
    Converged,
    /// Outer budget exhausted; best iterate reported.
    MaxIterations,
    /// Inner line search stalled far from tolerance; best iterate reported.
    InnerFailure,
}

/// Solution of a generic [`Problem`].
#[derive(Debug, Clone, PartialEq)]
pub struct NlpSolution {
    pub status: SolveStatus,
    pub z: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub feas_inf_norm: f64,
    pub kkt_inf_norm: f64,
    pub wall_time: f64,
    pub note: Option<String>,
}

/// Solution of the transcribed epidemic problem, with the decision vector
/// expanded back into a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub feas_inf_norm: f64,
    pub kkt_inf_norm: f64,
    /// Seconds spent inside the solve loop, excluding I/O.
    pub wall_time: f64,
    pub trajectory: Trajectory,
    pub multipliers: Vec<f64>,
    pub note: Option<String>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Feasibility and stationarity residuals at `(z, lambda)`.
///
/// Feasibility is `||c(z)||_inf`; stationarity is the infinity norm of the
/// gradient of the Lagrangian `f + lambda^T c` with components blocked by
/// an active bound zeroed out.
pub fn kkt_residuals<P: Problem>(z: &[f64], lambda: &[f64], problem: &P) -> (f64, f64) {
    let mut c = vec![0.0; problem.n_cons()];
    problem.eval_constraints(z, &mut c);
    let feas = inf_norm(&c);
    let mut g = vec![0.0; problem.n_vars()];
    problem.eval_objective_gradient(z, &mut g);
    problem.eval_jacobian(z).accumulate_transpose(lambda, &mut g);
    let kkt = projected_gradient_norm(z, &g, problem.lower(), problem.upper());
    (feas, kkt)
}

/// Infinity norm of the gradient projected onto the feasible directions of
/// the box: components pointing out of an active face are zeroed.
pub(crate) fn projected_gradient_norm(z: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut norm = 0.0f64;
    for i in 0..z.len() {
        let blocked_low = z[i] <= lower[i] && g[i] > 0.0;
        let blocked_high = z[i] >= upper[i] && g[i] < 0.0;
        if !blocked_low && !blocked_high {
            norm = norm.max(g[i].abs());
        }
    }
    norm
}

struct AugmentedLagrangian<'a, P: Problem> {
    problem: &'a P,
    lambda: &'a [f64],
    rho: f64,
}

impl<P: Problem> lbfgs::Evaluator for AugmentedLagrangian<'_, P> {
    fn value(&self, z: &[f64]) -> f64 {
        let mut c = vec![0.0; self.problem.n_cons()];
        self.problem.eval_constraints(z, &mut c);
        let mut penalty = 0.0;
        let mut linear = 0.0;
        for (ci, li) in c.iter().zip(self.lambda.iter()) {
            linear += li * ci;
            penalty += ci * ci;
        }
        self.problem.eval_objective(z) + linear + 0.5 * self.rho * penalty
    }

    fn value_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let mut c = vec![0.0; self.problem.n_cons()];
        self.problem.eval_constraints(z, &mut c);
        self.problem.eval_objective_gradient(z, grad);
        let weights: Vec<f64> = c
            .iter()
            .zip(self.lambda.iter())
            .map(|(ci, li)| li + self.rho * ci)
            .collect();
        self.problem.eval_jacobian(z).accumulate_transpose(&weights, grad);
        let mut penalty = 0.0;
        let mut linear = 0.0;
        for (ci, li) in c.iter().zip(self.lambda.iter()) {
            linear += li * ci;
            penalty += ci * ci;
        }
        self.problem.eval_objective(z) + linear + 0.5 * self.rho * penalty
    }
}

/// Minimize a generic [`Problem`] by the augmented-Lagrangian method.
///
/// The starting point is projected into the box. Returns the first iterate
/// meeting both tolerances, or the best iterate found when a budget runs
/// out. `Converged` status always certifies its own residuals.
pub fn solve_nlp<P: Problem>(problem: &P, z0: &[f64], opts: &SolverOptions) -> NlpSolution {
    if let Err(e) = opts.validate() {
        panic!("invalid solver options: {e}");
    }
    let start = Instant::now();
    let n = problem.n_vars();
    let m = problem.n_cons();
    assert_eq!(z0.len(), n, "starting point has wrong dimension");

    let mut z = z0.to_vec();
    for (zi, (lo, hi)) in z.iter_mut().zip(problem.lower().iter().zip(problem.upper().iter())) {
        *zi = zi.clamp(*lo, *hi);
    }
    let mut lambda = vec![0.0; m];
    let mut rho = opts.penalty_init;
    let mut inner_tol = 1e-2f64.max(opts.tol_opt);
    let mut prev_feas = f64::INFINITY;
    let mut inner_total = 0usize;
    let mut note: Option<String> = None;
    // Curvature pairs survive multiplier updates (the subproblem Hessian
    // barely moves) but are useless after a penalty change.
    let mut history = lbfgs::History::new();

    // Best iterate by worst scaled residual, for budget-exhausted exits.
    struct BestIterate {
        score: f64,
        z: Vec<f64>,
        lambda: Vec<f64>,
        feas: f64,
        kkt: f64,
    }
    let mut best: Option<BestIterate> = None;

    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let al = AugmentedLagrangian {
            problem,
            lambda: &lambda,
            rho,
        };
        let inner = lbfgs::minimize(
            &al,
            &z,
            problem.lower(),
            problem.upper(),
            inner_tol,
            opts.max_inner,
            opts.lbfgs_memory,
            &mut history,
        );
        inner_total += inner.iters;
        z = inner.z;

        let mut c = vec![0.0; m];
        problem.eval_constraints(&z, &mut c);
        let feas = inf_norm(&c);
        // First-order multiplier estimate at the inner solution; with it,
        // the Lagrangian gradient equals the augmented-Lagrangian gradient.
        let lambda_hat: Vec<f64> = lambda
            .iter()
            .zip(c.iter())
            .map(|(li, ci)| li + rho * ci)
            .collect();
        let (_, kkt) = kkt_residuals(&z, &lambda_hat, problem);

        let score = (feas / opts.tol_feas).max(kkt / opts.tol_opt);
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(BestIterate {
                score,
                z: z.clone(),
                lambda: lambda_hat.clone(),
                feas,
                kkt,
            });
        }

        if std::env::var_os("DENGUE_SOLVER_TRACE").is_some() {
            let active = z
                .iter()
                .zip(problem.lower().iter().zip(problem.upper().iter()))
                .filter(|(zi, (lo, hi))| *zi <= *lo || *zi >= *hi)
                .count();
            eprintln!(
                "outer {outer:3}: rho {rho:9.2e}  inner {:4} ({:?})  feas {feas:9.3e}  \
                 kkt {kkt:9.3e}  obj {:12.6e}  inner_tol {inner_tol:8.2e}  active {active}",
                inner.iters,
                inner.status,
                problem.eval_objective(&z),
            );
        }

        if feas <= opts.tol_feas && kkt <= opts.tol_opt {
            return NlpSolution {
                status: SolveStatus::Converged,
                objective: problem.eval_objective(&z),
                z,
                multipliers: lambda_hat,
                outer_iters: outer,
                inner_iters_total: inner_total,
                feas_inf_norm: feas,
                kkt_inf_norm: kkt,
                wall_time: start.elapsed().as_secs_f64(),
                note,
            };
        }

        if inner.status == lbfgs::InnerStatus::Stalled {
            if feas <= 10.0 * opts.tol_feas && kkt <= 10.0 * opts.tol_opt {
                // Near-optimal stall: keep iterating rather than failing.
                note = Some(format!(
                    "inner line search stalled near tolerance at outer iteration {outer} \
                     (feas {feas:.3e}, kkt {kkt:.3e})"
                ));
            } else {
                let b = best.unwrap();
                return NlpSolution {
                    status: SolveStatus::InnerFailure,
                    objective: problem.eval_objective(&b.z),
                    z: b.z,
                    multipliers: b.lambda,
                    outer_iters: outer,
                    inner_iters_total: inner_total,
                    feas_inf_norm: b.feas,
                    kkt_inf_norm: b.kkt,
                    wall_time: start.elapsed().as_secs_f64(),
                    note: Some(format!(
                        "line search made no progress at outer iteration {outer} \
                         (feas {feas:.3e}, kkt {kkt:.3e}, inner pg {:.3e}, penalty {rho:.1e})",
                        inner.pg_norm
                    )),
                };
            }
        }

        lambda = lambda_hat;
        // Penalty growth only when a converged subproblem shows feasibility
        // stagnating above tolerance. An unconverged inner solve says
        // nothing about the penalty, and growing on an already-feasible
        // iterate would needlessly ill-condition the subproblems.
        if inner.status == lbfgs::InnerStatus::Converged
            && feas > opts.tol_feas
            && feas > opts.feas_decrease * prev_feas
        {
            rho *= opts.penalty_growth;
            history.clear();
        }
        prev_feas = feas;
        // Tighten the inner tolerance toward an order below current
        // feasibility, so multiplier updates are not polluted by subproblem
        // inexactness, and never below a tenth of the optimality tolerance.
        inner_tol = (0.5 * inner_tol)
            .min(0.1 * feas)
            .max(opts.tol_opt / 10.0);
    }

    let b = best.expect("at least one outer iteration");
    NlpSolution {
        status: SolveStatus::MaxIterations,
        objective: problem.eval_objective(&b.z),
        z: b.z,
        multipliers: b.lambda,
        outer_iters: outer,
        inner_iters_total: inner_total,
        feas_inf_norm: b.feas,
        kkt_inf_norm: b.kkt,
        wall_time: start.elapsed().as_secs_f64(),
        note,
    }
}

/// Solve the transcribed epidemic problem and expand the solution back
/// into a trajectory.
pub fn solve(problem: &NlpProblem, z0: &[f64], opts: &SolverOptions) -> SolveReport {
    let solution = solve_nlp(problem, z0, opts);
    let trajectory = problem
        .unpack_trajectory(&solution.z)
        .expect("solution has problem dimensions");
    SolveReport {
        status: solution.status,
        objective: solution.objective,
        outer_iters: solution.outer_iters,
        inner_iters_total: solution.inner_iters_total,
        feas_inf_norm: solution.feas_inf_norm,
        kkt_inf_norm: solution.kkt_inf_norm,
        wall_time: solution.wall_time,
        trajectory,
        multipliers: solution.multipliers,
        note: solution.note,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
