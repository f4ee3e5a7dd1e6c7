//! Dengue epidemic dynamics, cost integrand, and their exact first derivatives.
//!
//! The state is five-dimensional: mosquito density `x1`, virus-carrying
//! mosquito density `x2`, infected person density `x3`, goodwill level `x4`
//! (popular motivation to combat mosquitoes), and accumulated social cost
//! `x5`. Two controls act on the system: insecticide investment `u1` and
//! education investment `u2`. Folding the running cost into `x5` makes the
//! whole problem a terminal-cost minimization of `x5(t_f)`, so every
//! downstream consumer (simulator, transcription) sees a single
//! five-dimensional field.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Number of state components (x1..x5, with x5 the accumulated cost).
pub const STATE_DIM: usize = 5;
/// Number of control components (u1 insecticide, u2 education).
pub const CONTROL_DIM: usize = 2;

/// Epidemic and cost parameters, in normalized weekly units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ModelParams {
    /// Average mosquito reproduction rate (1/week).
    pub alpha_r: f64,
    /// Mosquito mortality rate (1/week).
    pub alpha_m: f64,
    /// Contact rate between non-carrier mosquitoes and infected persons.
    pub beta: f64,
    /// Treatment (cure) rate of infected persons (1/week).
    pub eta: f64,
    /// Amplitude of the seasonal oscillation of the reproduction rate.
    pub mu: f64,
    /// Infection rate of persons per carrier-mosquito density.
    pub rho: f64,
    /// Fear factor: goodwill gained per unit disease prevalence.
    pub theta: f64,
    /// Forgetting rate of goodwill (1/week).
    pub tau: f64,
    /// Phase angle of the mosquito season (radians).
    pub phi: f64,
    /// Angular frequency of the yearly proliferation cycle (radians/week).
    pub omega: f64,
    /// Population in the risk area (normalized).
    pub p_total: f64,
    /// Cost weight on squared disease prevalence.
    pub gamma_d: f64,
    /// Cost weight on squared insecticide spending.
    pub gamma_f: f64,
    /// Cost weight on squared education spending.
    pub gamma_e: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha_r: 0.20,
            alpha_m: 0.18,
            beta: 0.3,
            eta: 0.15,
            mu: 0.1,
            rho: 0.1,
            theta: 0.05,
            tau: 0.1,
            phi: 0.0,
            omega: 2.0 * std::f64::consts::PI / 52.0,
            p_total: 1.0,
            gamma_d: 1.0,
            gamma_f: 0.4,
            gamma_e: 0.8,
        }
    }
}

/// A parameter value that violates a [`ModelParams`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidParam {
    pub field: &'static str,
    pub value: f64,
    pub requirement: &'static str,
}

impl fmt::Display for InvalidParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parameter {} = {} violates requirement: {}",
            self.field, self.value, self.requirement
        )
    }
}

impl std::error::Error for InvalidParam {}

impl ModelParams {
    /// Check the sign and range invariants of all parameters.
    pub fn validate(&self) -> Result<(), InvalidParam> {
        let nonneg = [
            ("alpha_r", self.alpha_r),
            ("alpha_m", self.alpha_m),
            ("beta", self.beta),
            ("eta", self.eta),
            ("rho", self.rho),
            ("theta", self.theta),
            ("tau", self.tau),
            ("gamma_d", self.gamma_d),
            ("gamma_f", self.gamma_f),
            ("gamma_e", self.gamma_e),
        ];
        for (field, value) in nonneg {
            if !value.is_finite() || value < 0.0 {
                return Err(InvalidParam {
                    field,
                    value,
                    requirement: "must be finite and >= 0",
                });
            }
        }
        if !(self.mu >= 0.0 && self.mu <= 1.0) {
            return Err(InvalidParam {
                field: "mu",
                value: self.mu,
                requirement: "must lie in [0, 1]",
            });
        }
        if !self.p_total.is_finite() || self.p_total <= 0.0 {
            return Err(InvalidParam {
                field: "p_total",
                value: self.p_total,
                requirement: "must be > 0",
            });
        }
        for (field, value) in [("phi", self.phi), ("omega", self.omega)] {
            if !value.is_finite() {
                return Err(InvalidParam {
                    field,
                    value,
                    requirement: "must be finite",
                });
            }
        }
        Ok(())
    }
}

/// Five-component state vector, component order `x1..x5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVec(pub [f64; STATE_DIM]);

impl StateVec {
    pub fn zeros() -> Self {
        StateVec([0.0; STATE_DIM])
    }

    pub fn new(x1: f64, x2: f64, x3: f64, x4: f64, x5: f64) -> Self {
        StateVec([x1, x2, x3, x4, x5])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// self + scale * other, componentwise.
    pub fn axpy(&self, scale: f64, other: &StateVec) -> StateVec {
        let mut out = [0.0; STATE_DIM];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *o = a + scale * b;
        }
        StateVec(out)
    }

    /// Infinity norm of self - other.
    pub fn diff_inf_norm(&self, other: &StateVec) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for StateVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for StateVec {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Two-component control vector `(u1, u2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlVec(pub [f64; CONTROL_DIM]);

impl ControlVec {
    pub fn zeros() -> Self {
        ControlVec([0.0; CONTROL_DIM])
    }

    pub fn new(u1: f64, u2: f64) -> Self {
        ControlVec([u1, u2])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ControlVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ControlVec {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Net per-capita mosquito growth rate at time `t` under goodwill `x4`:
/// `alpha_r (1 - mu sin(omega t + phi)) - alpha_m - x4`.
pub fn seasonal_growth(t: f64, x4: f64, params: &ModelParams) -> f64 {
    params.alpha_r * (1.0 - params.mu * (params.omega * t + params.phi).sin()) - params.alpha_m
        - x4
}

/// Running cost rate: `gamma_d x3^2 + gamma_f u1^2 + gamma_e u2^2`.
///
/// This is identical to the fifth component of [`dynamics`].
pub fn cost_integrand(x: &StateVec, u: &ControlVec, params: &ModelParams) -> f64 {
    params.gamma_d * x[2] * x[2] + params.gamma_f * u[0] * u[0] + params.gamma_e * u[1] * u[1]
}

/// Time derivative of the augmented state.
///
/// Components:
/// - `f1 = g(t, x4) x1 - u1` with `g` the [`seasonal_growth`] rate,
/// - `f2 = g(t, x4) x2 + beta (x1 - x2) x3 - u1`,
/// - `f3 = -eta x3 + rho x2 (P - x3)`,
/// - `f4 = -tau x4 + theta x3 + u2`,
/// - `f5 = gamma_d x3^2 + gamma_f u1^2 + gamma_e u2^2`.
pub fn dynamics(t: f64, x: &StateVec, u: &ControlVec, params: &ModelParams) -> StateVec {
    let g = seasonal_growth(t, x[3], params);
    StateVec([
        g * x[0] - u[0],
        g * x[1] + params.beta * (x[0] - x[1]) * x[2] - u[0],
        -params.eta * x[2] + params.rho * x[1] * (params.p_total - x[2]),
        -params.tau * x[3] + params.theta * x[2] + u[1],
        cost_integrand(x, u, params),
    ])
}

/// Structurally nonzero positions of the state Jacobian, row-major,
/// 0-indexed. Column 5 is absent everywhere: nothing depends on the
/// accumulated cost `x5`.
pub const JACOBIAN_X_PATTERN: [(usize, usize); 11] = [
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
];

/// Structurally nonzero positions of the control Jacobian, row-major,
/// 0-indexed. Row 3 (the infection equation) is absent: no control acts
/// on it directly.
pub const JACOBIAN_U_PATTERN: [(usize, usize); 5] = [(0, 0), (1, 0), (3, 1), (4, 0), (4, 1)];

/// Closed-form derivative of [`dynamics`] with respect to the state.
///
/// Entry `[i][j]` is `df_i/dx_j`. The pattern of structurally nonzero
/// entries is [`JACOBIAN_X_PATTERN`].
pub fn jacobian_x(t: f64, x: &StateVec, _u: &ControlVec, params: &ModelParams) -> [[f64; 5]; 5] {
    let g = seasonal_growth(t, x[3], params);
    let mut j = [[0.0; 5]; 5];
    j[0][0] = g;
    j[0][3] = -x[0];
    j[1][0] = params.beta * x[2];
    j[1][1] = g - params.beta * x[2];
    j[1][2] = params.beta * (x[0] - x[1]);
    j[1][3] = -x[1];
    j[2][1] = params.rho * (params.p_total - x[2]);
    j[2][2] = -params.eta - params.rho * x[1];
    j[3][2] = params.theta;
    j[3][3] = -params.tau;
    j[4][2] = 2.0 * params.gamma_d * x[2];
    j
}

/// Closed-form derivative of [`dynamics`] with respect to the control.
///
/// Entry `[i][j]` is `df_i/du_j`. The pattern of structurally nonzero
/// entries is [`JACOBIAN_U_PATTERN`].
pub fn jacobian_u(_t: f64, _x: &StateVec, u: &ControlVec, params: &ModelParams) -> [[f64; 2]; 5] {
    let mut j = [[0.0; 2]; 5];
    j[0][0] = -1.0;
    j[1][0] = -1.0;
    j[3][1] = 1.0;
    j[4][0] = 2.0 * params.gamma_f * u[0];
    j[4][1] = 2.0 * params.gamma_e * u[1];
    j
}

/// Initial state used throughout: the default epidemic initial condition
/// with zero accumulated cost.
pub fn default_initial_state() -> StateVec {
    StateVec::new(1.0, 0.12, 0.004, 0.05, 0.0)
}
