//! Transcription of the continuous control problem into a finite NLP.
//!
//! The continuous problem (minimize the terminal accumulated cost
//! `x5(t_f)` subject to the five-dimensional field) is discretized on a
//! uniform mesh. States at nodes `1..=N` and controls at the scheme's
//! control nodes become decision variables; the integration rule over each
//! interval becomes a five-row equality ("defect") constraint. Node 0 is
//! the fixed initial condition, not a decision variable.
//!
//! # Decision-vector layout
//!
//! Euler (controls at nodes `0..N-1`):
//!
//! ```text
//! [ x(1) u(0) | x(2) u(1) | ... | x(N) u(N-1) ]      n_vars = 7N
//! ```
//!
//! Trapezoidal (controls at nodes `0..N`):
//!
//! ```text
//! [ u(0) | x(1) u(1) | x(2) u(2) | ... | x(N) u(N) ]  n_vars = 7N + 2
//! ```
//!
//! Both schemes produce `n_cons = 5N` defect rows, interval-major.

use serde::Serialize;

use crate::grid::{Grid, Scheme};
use crate::model::{
    jacobian_u, jacobian_x, ControlVec, ModelParams, StateVec, CONTROL_DIM,
    JACOBIAN_U_PATTERN, STATE_DIM,
};
use crate::simulate::{euler_update, trapezoidal_residual, ControlSchedule, Trajectory};

/// Flat vector of decision variables, interpreted through a [`Layout`].
pub type DecisionVector = Vec<f64>;

/// Structurally nonzero positions of a state block `aI + bJ_x` in the
/// defect Jacobian: the model's state-Jacobian pattern plus the full
/// diagonal (only `(4,4)` is not already covered).
const STATE_BLOCK_PATTERN: [(usize, usize); 12] = [
    (0, 0),
    (0, 3),
    (1, 0),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 1),
    (2, 2),
    (3, 2),
    (3, 3),
    (4, 2),
    (4, 4),
];

#[derive(Debug, Clone, PartialEq)]
pub enum TranscriptionError {
    /// A packed sequence does not match the layout's expected length.
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// The fixed initial state must be finite with a zero cost component.
    BadInitialState,
    /// Componentwise lower bounds must not exceed upper bounds.
    InvalidBounds,
}

impl std::fmt::Display for TranscriptionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TranscriptionError::LengthMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected length {expected}, got {got}"),
            TranscriptionError::BadInitialState => {
                write!(f, "initial state must be finite with x5 = 0")
            }
            TranscriptionError::InvalidBounds => write!(f, "lower bound exceeds upper bound"),
        }
    }
}

impl std::error::Error for TranscriptionError {}

/// Packing descriptor: where each state and control node lives in the
/// flat decision vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    scheme: Scheme,
    n_steps: usize,
}

impl Layout {
    pub fn new(scheme: Scheme, n_steps: usize) -> Self {
        Layout { scheme, n_steps }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_vars(&self) -> usize {
        STATE_DIM * self.n_steps + CONTROL_DIM * self.scheme.control_nodes(self.n_steps)
    }

    /// Offset of state node `node` (valid for `1..=N`).
    pub fn state_offset(&self, node: usize) -> usize {
        debug_assert!(node >= 1 && node <= self.n_steps);
        match self.scheme {
            Scheme::Euler => 7 * (node - 1),
            Scheme::Trapezoidal => 2 + 7 * (node - 1),
        }
    }

    /// Offset of control node `node` (valid for `0..N-1` under Euler,
    /// `0..=N` under trapezoidal).
    pub fn control_offset(&self, node: usize) -> usize {
        match self.scheme {
            Scheme::Euler => {
                debug_assert!(node < self.n_steps);
                7 * node + 5
            }
            Scheme::Trapezoidal => {
                debug_assert!(node <= self.n_steps);
                if node == 0 {
                    0
                } else {
                    2 + 7 * (node - 1) + 5
                }
            }
        }
    }

    /// Pack state nodes `1..=N` and the scheme's control nodes into a flat
    /// decision vector.
    pub fn pack(
        &self,
        states: &[StateVec],
        controls: &[ControlVec],
    ) -> Result<DecisionVector, TranscriptionError> {
        if states.len() != self.n_steps {
            return Err(TranscriptionError::LengthMismatch {
                what: "states",
                expected: self.n_steps,
                got: states.len(),
            });
        }
        let n_controls = self.scheme.control_nodes(self.n_steps);
        if controls.len() != n_controls {
            return Err(TranscriptionError::LengthMismatch {
                what: "controls",
                expected: n_controls,
                got: controls.len(),
            });
        }
        let mut z = vec![0.0; self.n_vars()];
        for (k, x) in states.iter().enumerate() {
            let off = self.state_offset(k + 1);
            z[off..off + STATE_DIM].copy_from_slice(x.as_slice());
        }
        for (k, u) in controls.iter().enumerate() {
            let off = self.control_offset(k);
            z[off..off + CONTROL_DIM].copy_from_slice(u.as_slice());
        }
        Ok(z)
    }

    /// Inverse of [`Layout::pack`].
    pub fn unpack(
        &self,
        z: &[f64],
    ) -> Result<(Vec<StateVec>, Vec<ControlVec>), TranscriptionError> {
        if z.len() != self.n_vars() {
            return Err(TranscriptionError::LengthMismatch {
                what: "decision vector",
                expected: self.n_vars(),
                got: z.len(),
            });
        }
        let states = (1..=self.n_steps).map(|k| self.state(z, k)).collect();
        let controls = (0..self.scheme.control_nodes(self.n_steps))
            .map(|k| self.control(z, k))
            .collect();
        Ok((states, controls))
    }

    fn state(&self, z: &[f64], node: usize) -> StateVec {
        let off = self.state_offset(node);
        StateVec([z[off], z[off + 1], z[off + 2], z[off + 3], z[off + 4]])
    }

    fn control(&self, z: &[f64], node: usize) -> ControlVec {
        let off = self.control_offset(node);
        ControlVec([z[off], z[off + 1]])
    }

    /// Exact packing formulas, for the JSON run summary.
    pub fn descriptor(&self) -> LayoutDescriptor {
        let (order, state_offset, control_offset) = match self.scheme {
            Scheme::Euler => (
                "per interval k=1..N: state x(k), then control u(k-1)",
                "7*(k-1) for node k in 1..=N",
                "7*j+5 for node j in 0..N-1",
            ),
            Scheme::Trapezoidal => (
                "control u(0) first, then per interval k=1..N: state x(k), then control u(k)",
                "2+7*(k-1) for node k in 1..=N",
                "0 for node 0, else 2+7*(j-1)+5 for node j in 1..=N",
            ),
        };
        LayoutDescriptor {
            scheme: self.scheme,
            n_steps: self.n_steps,
            n_vars: self.n_vars(),
            order: order.to_string(),
            state_offset: state_offset.to_string(),
            control_offset: control_offset.to_string(),
        }
    }
}

/// Serializable description of the decision-vector packing.
#[derive(Debug, Clone, Serialize)]
pub struct LayoutDescriptor {
    pub scheme: Scheme,
    pub n_steps: usize,
    pub n_vars: usize,
    pub order: String,
    pub state_offset: String,
    pub control_offset: String,
}

/// Box bounds applied to every control node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    pub lower: ControlVec,
    pub upper: ControlVec,
}

impl Default for ControlBounds {
    /// Investments cannot be negative; no upper cap.
    fn default() -> Self {
        ControlBounds {
            lower: ControlVec::zeros(),
            upper: ControlVec::new(f64::INFINITY, f64::INFINITY),
        }
    }
}

/// Sparse matrix in triplet form with a deterministic entry order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseJacobian {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseJacobian {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        SparseJacobian {
            n_rows,
            n_cols,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// out += J^T y
    pub fn accumulate_transpose(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n_rows);
        debug_assert_eq!(out.len(), self.n_cols);
        for k in 0..self.vals.len() {
            out[self.cols[k]] += self.vals[k] * y[self.rows[k]];
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for k in 0..self.vals.len() {
            dense[self.rows[k]][self.cols[k]] += self.vals[k];
        }
        dense
    }
}

/// The transcribed nonlinear program.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpProblem {
    pub grid: Grid,
    pub scheme: Scheme,
    pub params: ModelParams,
    pub x_init: StateVec,
    pub layout: Layout,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl NlpProblem {
    /// Assemble the NLP: packing layout, bounds (states free, controls
    /// boxed), and the defect-constraint structure implied by the scheme.
    pub fn build(
        grid: Grid,
        scheme: Scheme,
        params: ModelParams,
        x_init: StateVec,
        control_bounds: ControlBounds,
    ) -> Result<NlpProblem, TranscriptionError> {
        if !x_init.as_slice()[..4].iter().all(|v| v.is_finite()) || x_init[4] != 0.0 {
            return Err(TranscriptionError::BadInitialState);
        }
        for i in 0..CONTROL_DIM {
            if control_bounds.lower[i] > control_bounds.upper[i] {
                return Err(TranscriptionError::InvalidBounds);
            }
        }
        let layout = Layout::new(scheme, grid.n_steps);
        let n_vars = layout.n_vars();
        let mut lower = vec![f64::NEG_INFINITY; n_vars];
        let mut upper = vec![f64::INFINITY; n_vars];
        for node in 0..scheme.control_nodes(grid.n_steps) {
            let off = layout.control_offset(node);
            for i in 0..CONTROL_DIM {
                lower[off + i] = control_bounds.lower[i];
                upper[off + i] = control_bounds.upper[i];
            }
        }
        Ok(NlpProblem {
            grid,
            scheme,
            params,
            x_init,
            layout,
            lower,
            upper,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    pub fn n_cons(&self) -> usize {
        STATE_DIM * self.grid.n_steps
    }

    fn state_at(&self, z: &[f64], node: usize) -> StateVec {
        if node == 0 {
            self.x_init
        } else {
            self.layout.state(z, node)
        }
    }

    /// Defect residuals, interval-major: rows `5n..5n+5` hold the residual
    /// of the integration rule over interval `n`.
    pub fn defects(&self, z: &[f64]) -> Result<Vec<f64>, TranscriptionError> {
        self.check_len(z)?;
        let h = self.grid.h;
        let n = self.grid.n_steps;
        let mut c = vec![0.0; self.n_cons()];
        for interval in 0..n {
            let t = self.grid.time(interval);
            let x_now = self.state_at(z, interval);
            let x_next = self.layout.state(z, interval + 1);
            let row = STATE_DIM * interval;
            match self.scheme {
                Scheme::Euler => {
                    let u = self.layout.control(z, interval);
                    let predicted = euler_update(t, &x_now, &u, h, &self.params);
                    for i in 0..STATE_DIM {
                        c[row + i] = x_next[i] - predicted[i];
                    }
                }
                Scheme::Trapezoidal => {
                    let u_now = self.layout.control(z, interval);
                    let u_next = self.layout.control(z, interval + 1);
                    let r = trapezoidal_residual(
                        t,
                        &x_now,
                        &x_next,
                        &u_now,
                        &u_next,
                        h,
                        &self.params,
                    );
                    for i in 0..STATE_DIM {
                        c[row + i] = r[i];
                    }
                }
            }
        }
        Ok(c)
    }

    /// Analytic Jacobian of [`NlpProblem::defects`] in triplet form.
    ///
    /// The sparsity pattern is static per problem. Per interval, structural
    /// nonzeros are: 12 for each `aI + bJ_x` state block (the model pattern
    /// plus the diagonal), 5 per identity block, 5 per control block. The
    /// interval-0 state block on node 0 is absent (node 0 is constant), so
    ///
    /// ```text
    /// euler:       nnz = 10 + 22 (N-1) = 22N - 12
    /// trapezoidal: nnz = 22 + 34 (N-1) = 34N - 12
    /// ```
    pub fn defect_jacobian(&self, z: &[f64]) -> Result<SparseJacobian, TranscriptionError> {
        self.check_len(z)?;
        let h = self.grid.h;
        let n = self.grid.n_steps;
        let mut jac = SparseJacobian::new(self.n_cons(), self.n_vars());
        for interval in 0..n {
            let row = STATE_DIM * interval;
            let t0 = self.grid.time(interval);
            let t1 = self.grid.time(interval + 1);
            let x_now = self.state_at(z, interval);
            let x_next = self.layout.state(z, interval + 1);
            match self.scheme {
                Scheme::Euler => {
                    let u = self.layout.control(z, interval);
                    if interval > 0 {
                        let jx = jacobian_x(t0, &x_now, &u, &self.params);
                        let off = self.layout.state_offset(interval);
                        for (i, j) in STATE_BLOCK_PATTERN {
                            let diag = if i == j { -1.0 } else { 0.0 };
                            jac.push(row + i, off + j, diag - h * jx[i][j]);
                        }
                    }
                    let off_next = self.layout.state_offset(interval + 1);
                    for i in 0..STATE_DIM {
                        jac.push(row + i, off_next + i, 1.0);
                    }
                    let ju = jacobian_u(t0, &x_now, &u, &self.params);
                    let off_u = self.layout.control_offset(interval);
                    for (i, j) in JACOBIAN_U_PATTERN {
                        jac.push(row + i, off_u + j, -h * ju[i][j]);
                    }
                }
                Scheme::Trapezoidal => {
                    let u_now = self.layout.control(z, interval);
                    let u_next = self.layout.control(z, interval + 1);
                    if interval > 0 {
                        let jx = jacobian_x(t0, &x_now, &u_now, &self.params);
                        let off = self.layout.state_offset(interval);
                        for (i, j) in STATE_BLOCK_PATTERN {
                            let diag = if i == j { -1.0 } else { 0.0 };
                            jac.push(row + i, off + j, diag - 0.5 * h * jx[i][j]);
                        }
                    }
                    let jx = jacobian_x(t1, &x_next, &u_next, &self.params);
                    let off_next = self.layout.state_offset(interval + 1);
                    for (i, j) in STATE_BLOCK_PATTERN {
                        let diag = if i == j { 1.0 } else { 0.0 };
                        jac.push(row + i, off_next + j, diag - 0.5 * h * jx[i][j]);
                    }
                    let ju = jacobian_u(t0, &x_now, &u_now, &self.params);
                    let off_u = self.layout.control_offset(interval);
                    for (i, j) in JACOBIAN_U_PATTERN {
                        jac.push(row + i, off_u + j, -0.5 * h * ju[i][j]);
                    }
                    let ju = jacobian_u(t1, &x_next, &u_next, &self.params);
                    let off_u = self.layout.control_offset(interval + 1);
                    for (i, j) in JACOBIAN_U_PATTERN {
                        jac.push(row + i, off_u + j, -0.5 * h * ju[i][j]);
                    }
                }
            }
        }
        Ok(jac)
    }

    /// Structural nonzero count of the defect Jacobian (see
    /// [`NlpProblem::defect_jacobian`]).
    pub fn structural_nnz(&self) -> usize {
        let n = self.grid.n_steps;
        match self.scheme {
            Scheme::Euler => 22 * n - 12,
            Scheme::Trapezoidal => 34 * n - 12,
        }
    }

    /// Terminal cost: the `x5` component at the final node.
    pub fn objective(&self, z: &[f64]) -> Result<f64, TranscriptionError> {
        self.check_len(z)?;
        Ok(z[self.objective_index()])
    }

    /// Gradient of the objective: a unit coordinate vector.
    pub fn objective_gradient(&self, z: &[f64]) -> Result<Vec<f64>, TranscriptionError> {
        self.check_len(z)?;
        let mut g = vec![0.0; self.n_vars()];
        g[self.objective_index()] = 1.0;
        Ok(g)
    }

    fn objective_index(&self) -> usize {
        self.layout.state_offset(self.grid.n_steps) + 4
    }

    /// Pack a simulated trajectory (dropping the fixed node 0) into a
    /// decision vector.
    pub fn pack_trajectory(&self, traj: &Trajectory) -> Result<DecisionVector, TranscriptionError> {
        self.layout.pack(&traj.states[1..], &traj.controls.values)
    }

    /// Expand a decision vector back into a trajectory, restoring the
    /// fixed initial node.
    pub fn unpack_trajectory(&self, z: &[f64]) -> Result<Trajectory, TranscriptionError> {
        let (states, controls) = self.layout.unpack(z)?;
        let mut all_states = Vec::with_capacity(states.len() + 1);
        all_states.push(self.x_init);
        all_states.extend(states);
        Ok(Trajectory {
            grid: self.grid,
            states: all_states,
            controls: ControlSchedule {
                grid: self.grid,
                values: controls,
            },
        })
    }

    fn check_len(&self, z: &[f64]) -> Result<(), TranscriptionError> {
        if z.len() != self.n_vars() {
            return Err(TranscriptionError::LengthMismatch {
                what: "decision vector",
                expected: self.n_vars(),
                got: z.len(),
            });
        }
        Ok(())
    }
}
