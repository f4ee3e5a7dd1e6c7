//! Forward integration of the epidemic field under a fixed control schedule.
//!
//! Used for initial guesses, as the feasibility oracle for the transcribed
//! problem, and for convergence-order measurements. The transcription module
//! evaluates its defect constraints through [`euler_update`] and
//! [`trapezoidal_residual`] below, so a simulated trajectory packs into an
//! exactly feasible decision vector.

use std::fmt;
use std::io::Write;

use crate::grid::{Grid, Scheme};
use crate::model::{dynamics, jacobian_x, ControlVec, ModelParams, StateVec, STATE_DIM};

/// Newton iteration controls for the implicit trapezoidal step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Residual infinity-norm accepted as converged.
    pub tol: f64,
    /// Maximum Newton iterations per step.
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-12,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    /// The Newton iteration for an implicit step failed to reach tolerance.
    NonConvergence {
        step: usize,
        t: f64,
        residual: f64,
    },
    /// Control schedule length does not match the scheme's node convention.
    ScheduleLength { expected: usize, got: usize },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::NonConvergence { step, t, residual } => write!(
                f,
                "implicit step {step} at t = {t} did not converge (residual {residual:e}); \
                 reduce the step size"
            ),
            SimError::ScheduleLength { expected, got } => {
                write!(f, "control schedule has {got} nodes, scheme needs {expected}")
            }
        }
    }
}

impl std::error::Error for SimError {}

/// Control values on the mesh nodes required by a scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSchedule {
    pub grid: Grid,
    pub values: Vec<ControlVec>,
}

impl ControlSchedule {
    /// Constant control on every node the scheme uses.
    pub fn constant(grid: Grid, scheme: Scheme, u: ControlVec) -> Self {
        ControlSchedule {
            grid,
            values: vec![u; scheme.control_nodes(grid.n_steps)],
        }
    }

    /// All-zero schedule (the uncontrolled system).
    pub fn zero(grid: Grid, scheme: Scheme) -> Self {
        Self::constant(grid, scheme, ControlVec::zeros())
    }
}

/// States at nodes `0..=N` together with the schedule that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub states: Vec<StateVec>,
    pub controls: ControlSchedule,
}

impl Trajectory {
    /// Final accumulated cost `x5(t_f)`.
    pub fn final_cost(&self) -> f64 {
        self.states[self.states.len() - 1][4]
    }

    /// Control at `node`, if the scheme convention defines one there.
    pub fn control_at(&self, node: usize) -> Option<ControlVec> {
        self.controls.values.get(node).copied()
    }

    /// Write the trajectory as CSV with header `t,x1,x2,x3,x4,x5,u1,u2`.
    ///
    /// Control columns are left blank on nodes where the scheme defines no
    /// control (the final node under Euler). Values are written in Rust's
    /// shortest round-trip decimal form with `\n` terminators.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x1,x2,x3,x4,x5,u1,u2")?;
        for (node, x) in self.states.iter().enumerate() {
            write!(w, "{}", self.grid.time(node))?;
            for i in 0..STATE_DIM {
                write!(w, ",{}", x[i])?;
            }
            match self.control_at(node) {
                Some(u) => writeln!(w, ",{},{}", u[0], u[1])?,
                None => writeln!(w, ",,")?,
            }
        }
        w.flush()
    }
}

/// One explicit Euler update: `x + h f(t, x, u)`.
///
/// This is the exact expression the Euler defect constraints are built
/// from; simulation and transcription share it bit for bit.
pub fn euler_update(t: f64, x: &StateVec, u: &ControlVec, h: f64, params: &ModelParams) -> StateVec {
    x.axpy(h, &dynamics(t, x, u, params))
}

/// Residual of the implicit trapezoidal equation:
/// `y - x - (h/2) [f(t, x, u_now) + f(t + h, y, u_next)]`.
///
/// Zero exactly when `y` is the trapezoidal update of `x`. Shared by the
/// Newton iteration in [`step_trapezoidal`] and the trapezoidal defect
/// constraints.
pub fn trapezoidal_residual(
    t: f64,
    x: &StateVec,
    y: &StateVec,
    u_now: &ControlVec,
    u_next: &ControlVec,
    h: f64,
    params: &ModelParams,
) -> StateVec {
    let f0 = dynamics(t, x, u_now, params);
    let f1 = dynamics(t + h, y, u_next, params);
    let mut r = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        r[i] = y[i] - x[i] - 0.5 * h * (f0[i] + f1[i]);
    }
    StateVec(r)
}

/// Explicit Euler step.
pub fn step_euler(t: f64, x: &StateVec, u: &ControlVec, h: f64, params: &ModelParams) -> StateVec {
    euler_update(t, x, u, h, params)
}

/// Implicit trapezoidal step, solved by damped Newton with the analytic
/// state Jacobian. The initial iterate is the Euler predictor; the step
/// length is halved until the residual norm decreases.
pub fn step_trapezoidal(
    t: f64,
    x: &StateVec,
    u_now: &ControlVec,
    u_next: &ControlVec,
    h: f64,
    params: &ModelParams,
    opts: &NewtonOptions,
) -> Result<StateVec, SimError> {
    let mut y = euler_update(t, x, u_now, h, params);
    let mut r = trapezoidal_residual(t, x, &y, u_now, u_next, h, params);
    let mut r_norm = inf_norm5(&r);

    for _ in 0..opts.max_iter {
        if r_norm <= opts.tol {
            return Ok(y);
        }
        // Newton matrix: I - (h/2) J_x evaluated at the right endpoint.
        let jx = jacobian_x(t + h, &y, u_next, params);
        let mut a = [[0.0; STATE_DIM]; STATE_DIM];
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                a[i][j] = -0.5 * h * jx[i][j];
            }
            a[i][i] += 1.0;
        }
        let mut rhs = [0.0; STATE_DIM];
        for i in 0..STATE_DIM {
            rhs[i] = -r[i];
        }
        let delta = match solve5(a, rhs) {
            Some(d) => d,
            None => {
                return Err(SimError::NonConvergence {
                    step: 0,
                    t,
                    residual: r_norm,
                })
            }
        };

        let mut alpha = 1.0;
        loop {
            let trial = StateVec([
                y[0] + alpha * delta[0],
                y[1] + alpha * delta[1],
                y[2] + alpha * delta[2],
                y[3] + alpha * delta[3],
                y[4] + alpha * delta[4],
            ]);
            let r_trial = trapezoidal_residual(t, x, &trial, u_now, u_next, h, params);
            let trial_norm = inf_norm5(&r_trial);
            if trial_norm < r_norm {
                y = trial;
                r = r_trial;
                r_norm = trial_norm;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(SimError::NonConvergence {
                    step: 0,
                    t,
                    residual: r_norm,
                });
            }
        }
    }
    if r_norm <= opts.tol {
        Ok(y)
    } else {
        Err(SimError::NonConvergence {
            step: 0,
            t,
            residual: r_norm,
        })
    }
}

/// Integrate the field node by node under `schedule` with the given scheme.
pub fn simulate(
    schedule: &ControlSchedule,
    scheme: Scheme,
    x_init: StateVec,
    params: &ModelParams,
) -> Result<Trajectory, SimError> {
    simulate_with(schedule, scheme, x_init, params, &NewtonOptions::default())
}

/// [`simulate`] with explicit Newton controls for the implicit steps.
pub fn simulate_with(
    schedule: &ControlSchedule,
    scheme: Scheme,
    x_init: StateVec,
    params: &ModelParams,
    newton: &NewtonOptions,
) -> Result<Trajectory, SimError> {
    let grid = schedule.grid;
    let expected = scheme.control_nodes(grid.n_steps);
    if schedule.values.len() != expected {
        return Err(SimError::ScheduleLength {
            expected,
            got: schedule.values.len(),
        });
    }

    let mut states = Vec::with_capacity(grid.n_steps + 1);
    states.push(x_init);
    for n in 0..grid.n_steps {
        let t = grid.time(n);
        let x = states[n];
        let next = match scheme {
            Scheme::Euler => step_euler(t, &x, &schedule.values[n], grid.h, params),
            Scheme::Trapezoidal => step_trapezoidal(
                t,
                &x,
                &schedule.values[n],
                &schedule.values[n + 1],
                grid.h,
                params,
                newton,
            )
            .map_err(|e| match e {
                SimError::NonConvergence { t, residual, .. } => SimError::NonConvergence {
                    step: n,
                    t,
                    residual,
                },
                other => other,
            })?,
        };
        states.push(next);
    }
    Ok(Trajectory {
        grid,
        states,
        controls: schedule.clone(),
    })
}

fn inf_norm5(v: &StateVec) -> f64 {
    v.0.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Dense 5x5 linear solve by Gaussian elimination with partial pivoting.
/// Returns None on a (numerically) singular matrix.
#[allow(clippy::needless_range_loop)]
fn solve5(mut a: [[f64; STATE_DIM]; STATE_DIM], mut b: [f64; STATE_DIM]) -> Option<[f64; STATE_DIM]> {
    let n = STATE_DIM;
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            a[row][col] = 0.0;
            for k in col + 1..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; STATE_DIM];
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in col + 1..n {
            sum -= a[col][k] * x[k];
        }
        x[col] = sum / a[col][col];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_initial_state;

    #[test]
    fn euler_step_hand_values() {
        let p = ModelParams::default();
        let x = default_initial_state();
        let y = step_euler(0.0, &x, &ControlVec::zeros(), 0.5, &p);
        assert!((y[0] - 0.985).abs() < 1e-15, "x1' = {}", y[0]);
        assert!((y[2] - 0.009676).abs() < 1e-15, "x3' = {}", y[2]);
    }

    #[test]
    fn euler_step_fixed_points() {
        let p = ModelParams::default();
        let zero = StateVec::zeros();
        assert_eq!(step_euler(3.0, &zero, &ControlVec::zeros(), 0.5, &p), zero);
        let x = default_initial_state();
        assert_eq!(step_euler(0.0, &x, &ControlVec::zeros(), 0.0, &p), x);
    }

    #[test]
    fn trapezoidal_step_at_equilibrium() {
        let p = ModelParams::default();
        let zero = StateVec::zeros();
        let y = step_trapezoidal(
            0.0,
            &zero,
            &ControlVec::zeros(),
            &ControlVec::zeros(),
            0.5,
            &p,
            &NewtonOptions::default(),
        )
        .unwrap();
        assert_eq!(y, zero);
    }

    #[test]
    fn trapezoidal_step_matches_linear_closed_form() {
        // Parameters that make the field f = -k x componentwise on states
        // with x4 = 0: no reproduction, no coupling, uniform decay rate k.
        let k = 0.3;
        let p = ModelParams {
            alpha_r: 0.0,
            alpha_m: k,
            beta: 0.0,
            eta: k,
            mu: 0.0,
            rho: 0.0,
            theta: 0.0,
            tau: k,
            gamma_d: 0.0,
            gamma_f: 0.0,
            gamma_e: 0.0,
            ..ModelParams::default()
        };
        let h = 0.5;
        let x = StateVec::new(1.5, -0.7, 0.4, 0.0, 2.0);
        let y = step_trapezoidal(
            0.0,
            &x,
            &ControlVec::zeros(),
            &ControlVec::zeros(),
            h,
            &p,
            &NewtonOptions::default(),
        )
        .unwrap();
        let factor = (1.0 - 0.5 * k * h) / (1.0 + 0.5 * k * h);
        for i in 0..3 {
            assert!(
                (y[i] - factor * x[i]).abs() < 1e-12,
                "component {i}: {} vs {}",
                y[i],
                factor * x[i]
            );
        }
        assert!(y[3].abs() < 1e-12);
        // f5 = 0 here, so the cost component is carried through unchanged.
        assert!((y[4] - x[4]).abs() < 1e-12);
    }

    #[test]
    fn trapezoidal_step_agrees_with_euler_to_second_order() {
        let p = ModelParams::default();
        let x = default_initial_state();
        let u = ControlVec::zeros();
        let newton = NewtonOptions::default();
        let diff = |h: f64| -> f64 {
            let e = step_euler(0.0, &x, &u, h, &p);
            let t = step_trapezoidal(0.0, &x, &u, &u, h, &p, &newton).unwrap();
            e.diff_inf_norm(&t)
        };
        let d_coarse = diff(0.5);
        let d_fine = diff(0.25);
        let ratio = d_coarse / d_fine;
        // The gap between the two one-step updates shrinks like h^2.
        assert!(
            (3.5..=4.5).contains(&ratio),
            "expected ~4x shrink per halving, got {ratio} ({d_coarse} / {d_fine})"
        );
    }

    #[test]
    fn simulate_zero_everything_stays_zero() {
        let p = ModelParams::default();
        let grid = Grid::new(52.0, 0.5).unwrap();
        for scheme in [Scheme::Euler, Scheme::Trapezoidal] {
            let schedule = ControlSchedule::zero(grid, scheme);
            let traj = simulate(&schedule, scheme, StateVec::zeros(), &p).unwrap();
            assert_eq!(traj.states.len(), 105);
            assert!(traj.states.iter().all(|s| *s == StateVec::zeros()));
        }
    }

    #[test]
    fn simulate_first_node_matches_hand_step() {
        let p = ModelParams::default();
        let grid = Grid::new(52.0, 0.5).unwrap();
        let schedule = ControlSchedule::zero(grid, Scheme::Euler);
        let traj = simulate(&schedule, Scheme::Euler, default_initial_state(), &p).unwrap();
        assert!((traj.states[1][0] - 0.985).abs() < 1e-15);
        assert!((traj.states[1][2] - 0.009676).abs() < 1e-15);
    }

    #[test]
    fn simulate_rejects_wrong_schedule_length() {
        let p = ModelParams::default();
        let grid = Grid::new(52.0, 0.5).unwrap();
        let schedule = ControlSchedule::zero(grid, Scheme::Euler);
        // An Euler-length schedule is one node short for trapezoidal.
        let err = simulate(&schedule, Scheme::Trapezoidal, StateVec::zeros(), &p).unwrap_err();
        assert!(matches!(
            err,
            SimError::ScheduleLength {
                expected: 105,
                got: 104
            }
        ));
    }

    #[test]
    fn final_cost_matches_scheme_quadrature() {
        let p = ModelParams::default();
        let grid = Grid::new(52.0, 0.5).unwrap();
        let x0 = default_initial_state();

        let schedule = ControlSchedule::zero(grid, Scheme::Euler);
        let traj = simulate(&schedule, Scheme::Euler, x0, &p).unwrap();
        let mut quad = 0.0;
        for n in 0..grid.n_steps {
            let g = crate::model::cost_integrand(&traj.states[n], &schedule.values[n], &p);
            quad += grid.h * g;
        }
        assert!(
            (traj.final_cost() - quad).abs() < 1e-12,
            "euler x5 {} vs quadrature {quad}",
            traj.final_cost()
        );

        let schedule = ControlSchedule::zero(grid, Scheme::Trapezoidal);
        let traj = simulate(&schedule, Scheme::Trapezoidal, x0, &p).unwrap();
        let mut quad = 0.0;
        for n in 0..grid.n_steps {
            let g0 = crate::model::cost_integrand(&traj.states[n], &schedule.values[n], &p);
            let g1 = crate::model::cost_integrand(&traj.states[n + 1], &schedule.values[n + 1], &p);
            quad += 0.5 * grid.h * (g0 + g1);
        }
        assert!(
            (traj.final_cost() - quad).abs() < 1e-9,
            "trapezoidal x5 {} vs quadrature {quad}",
            traj.final_cost()
        );
    }

    #[test]
    fn x5_is_nondecreasing_along_simulations() {
        let p = ModelParams::default();
        // Constant spending beyond ten weeks drains x1 negative and the
        // trajectory diverges, so keep the horizon short here.
        let grid = Grid::new(10.0, 0.25).unwrap();
        for scheme in [Scheme::Euler, Scheme::Trapezoidal] {
            let schedule = ControlSchedule::constant(grid, scheme, ControlVec::new(0.02, 0.01));
            let traj = simulate(&schedule, scheme, default_initial_state(), &p).unwrap();
            for n in 0..grid.n_steps {
                assert!(
                    traj.states[n + 1][4] >= traj.states[n][4] - 1e-11,
                    "x5 decreased at node {n}: {} -> {}",
                    traj.states[n][4],
                    traj.states[n + 1][4]
                );
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let p = ModelParams::default();
        let grid = Grid::new(10.0, 0.5).unwrap();
        let schedule = ControlSchedule::constant(grid, Scheme::Trapezoidal, ControlVec::new(0.02, 0.01));
        let a = simulate(&schedule, Scheme::Trapezoidal, default_initial_state(), &p).unwrap();
        let b = simulate(&schedule, Scheme::Trapezoidal, default_initial_state(), &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convergence_order_euler_and_trapezoidal() {
        let p = ModelParams::default();
        let x0 = default_initial_state();
        let final_state = |scheme: Scheme, h: f64| -> StateVec {
            let grid = Grid::new(52.0, h).unwrap();
            let schedule = ControlSchedule::zero(grid, scheme);
            let traj = simulate(&schedule, scheme, x0, &p).unwrap();
            *traj.states.last().unwrap()
        };
        let reference = final_state(Scheme::Trapezoidal, 1.0 / 512.0);

        let order = |scheme: Scheme| -> f64 {
            let e1 = final_state(scheme, 0.25).diff_inf_norm(&reference);
            let e2 = final_state(scheme, 0.125).diff_inf_norm(&reference);
            (e1 / e2).log2()
        };

        let p_euler = order(Scheme::Euler);
        assert!(
            (0.8..=1.2).contains(&p_euler),
            "euler observed order {p_euler}"
        );
        let p_trap = order(Scheme::Trapezoidal);
        assert!(
            (1.8..=2.2).contains(&p_trap),
            "trapezoidal observed order {p_trap}"
        );
    }

    #[test]
    fn csv_shape_and_blank_trailing_control() {
        let p = ModelParams::default();
        let grid = Grid::new(2.0, 0.5).unwrap();
        let schedule = ControlSchedule::zero(grid, Scheme::Euler);
        let traj = simulate(&schedule, Scheme::Euler, default_initial_state(), &p).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "t,x1,x2,x3,x4,x5,u1,u2");
        assert!(lines[5].ends_with(",,"), "last euler row: {}", lines[5]);
        assert!(!lines[1].ends_with(",,"));
    }

    #[test]
    fn solve5_recovers_known_solution() {
        let a = [
            [2.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 3.0, 1.0, 0.0, 0.0],
            [0.0, 1.0, 4.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 5.0, 1.0],
            [0.0, 0.0, 0.0, 1.0, 6.0],
        ];
        let x_true = [1.0, -2.0, 3.0, -4.0, 5.0];
        let mut b = [0.0; 5];
        for i in 0..5 {
            for j in 0..5 {
                b[i] += a[i][j] * x_true[j];
            }
        }
        let x = solve5(a, b).unwrap();
        for i in 0..5 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
        let singular = [[0.0; 5]; 5];
        assert!(solve5(singular, b).is_none());
    }
}
