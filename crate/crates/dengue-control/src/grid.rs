//! Uniform time mesh and discretization scheme selection.

use std::fmt;

/// Discretization rule applied on each mesh interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// First-order explicit update `x_{n+1} = x_n + h f(t_n, x_n)`.
    Euler,
    /// Second-order implicit update
    /// `x_{n+1} = x_n + (h/2) [f(t_n, x_n) + f(t_{n+1}, x_{n+1})]`.
    Trapezoidal,
}

impl Scheme {
    /// Number of control nodes for a mesh with `n_steps` intervals.
    ///
    /// Euler evaluates the field only at the left endpoint of each
    /// interval, so controls live at nodes `0..N-1`; a control at node N
    /// would enter no equation. The trapezoidal rule evaluates both
    /// endpoints, so controls live at nodes `0..N`.
    pub fn control_nodes(&self, n_steps: usize) -> usize {
        match self {
            Scheme::Euler => n_steps,
            Scheme::Trapezoidal => n_steps + 1,
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Some(Scheme::Euler),
            "trapezoidal" => Some(Scheme::Trapezoidal),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Euler => write!(f, "euler"),
            Scheme::Trapezoidal => write!(f, "trapezoidal"),
        }
    }
}

/// Uniform mesh over `[0, t_final]` with step `h` and `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Grid {
    pub t0: f64,
    pub t_final: f64,
    pub h: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridError {
    /// `h` must be positive and finite.
    BadStep { h: f64 },
    /// `t_final` must be positive and finite.
    BadHorizon { t_final: f64 },
    /// `t_final` is not an integer multiple of `h` within tolerance.
    NonUniform { t_final: f64, h: f64 },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::BadStep { h } => write!(f, "step size h = {h} must be positive and finite"),
            GridError::BadHorizon { t_final } => {
                write!(f, "final time {t_final} must be positive and finite")
            }
            GridError::NonUniform { t_final, h } => write!(
                f,
                "final time {t_final} is not an integer multiple of step {h}"
            ),
        }
    }
}

impl std::error::Error for GridError {}

impl Grid {
    /// Build a uniform mesh covering `[0, t_final]` exactly.
    pub fn new(t_final: f64, h: f64) -> Result<Grid, GridError> {
        if !h.is_finite() || h <= 0.0 {
            return Err(GridError::BadStep { h });
        }
        if !t_final.is_finite() || t_final <= 0.0 {
            return Err(GridError::BadHorizon { t_final });
        }
        let n_steps = (t_final / h).round() as usize;
        if n_steps < 1 || (n_steps as f64 * h - t_final).abs() > 1e-12 * t_final {
            return Err(GridError::NonUniform { t_final, h });
        }
        Ok(Grid {
            t0: 0.0,
            t_final,
            h,
            n_steps,
        })
    }

    /// Time coordinate of mesh node `n` (0-based).
    pub fn time(&self, node: usize) -> f64 {
        self.t0 + node as f64 * self.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_grids() {
        for (h, n) in [(0.5, 104), (0.25, 208), (0.125, 416)] {
            let g = Grid::new(52.0, h).unwrap();
            assert_eq!(g.n_steps, n);
            assert_eq!(g.time(0), 0.0);
            assert_eq!(g.time(n), 52.0);
        }
    }

    #[test]
    fn rejects_non_multiple_step() {
        assert!(matches!(
            Grid::new(52.0, 0.3),
            Err(GridError::NonUniform { .. })
        ));
        assert!(matches!(Grid::new(52.0, 0.0), Err(GridError::BadStep { .. })));
        assert!(matches!(Grid::new(52.0, -0.5), Err(GridError::BadStep { .. })));
        assert!(matches!(
            Grid::new(0.0, 0.5),
            Err(GridError::BadHorizon { .. })
        ));
    }

    #[test]
    fn control_node_conventions() {
        assert_eq!(Scheme::Euler.control_nodes(104), 104);
        assert_eq!(Scheme::Trapezoidal.control_nodes(104), 105);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!(Scheme::parse("euler"), Some(Scheme::Euler));
        assert_eq!(Scheme::parse("Trapezoidal"), Some(Scheme::Trapezoidal));
        assert_eq!(Scheme::parse("rk4"), None);
    }
}
