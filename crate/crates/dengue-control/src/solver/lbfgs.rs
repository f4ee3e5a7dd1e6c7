//! Projected limited-memory quasi-Newton descent over a box.
//!
//! The quasi-Newton metric lives on the free subspace: components blocked
//! by an active bound are zeroed out of the gradient before the two-loop
//! recursion, the resulting direction is pinned on those components, and
//! the curvature pairs are built from the reduced gradients. Steps follow
//! a safeguarded interpolating backtracking line search with an Armijo
//! sufficient-decrease test along the projection arc; optimality is the
//! projected gradient infinity norm.

use std::collections::VecDeque;

use super::projected_gradient_norm;

/// Value and gradient of the function being minimized.
pub(crate) trait Evaluator {
    fn value(&self, z: &[f64]) -> f64;
    fn value_grad(&self, z: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InnerStatus {
    /// Projected gradient reached the requested tolerance.
    Converged,
    /// Iteration budget exhausted.
    MaxIterations,
    /// Backtracking reduced the step below machine level without decrease.
    Stalled,
}

#[derive(Debug, Clone)]
pub(crate) struct InnerResult {
    pub z: Vec<f64>,
    pub pg_norm: f64,
    pub iters: usize,
    pub status: InnerStatus,
}

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
const CURVATURE_FLOOR: f64 = 1e-12;

/// Curvature pairs `(s, y, 1/s^T y)` kept between calls; a caller may seed
/// the next minimization with the previous one's history when the function
/// has only changed slightly.
pub(crate) type History = VecDeque<(Vec<f64>, Vec<f64>, f64)>;

#[allow(clippy::too_many_arguments)]
pub(crate) fn minimize<E: Evaluator>(
    eval: &E,
    z0: &[f64],
    lower: &[f64],
    upper: &[f64],
    tol: f64,
    max_iter: usize,
    memory: usize,
    history: &mut History,
) -> InnerResult {
    let n = z0.len();
    let mut z = z0.to_vec();
    for i in 0..n {
        z[i] = z[i].clamp(lower[i], upper[i]);
    }

    let mut grad = vec![0.0; n];
    let mut f = eval.value_grad(&z, &mut grad);
    let mut pg = projected_gradient_norm(&z, &grad, lower, upper);
    if pg <= tol {
        return InnerResult {
            z,
            pg_norm: pg,
            iters: 0,
            status: InnerStatus::Converged,
        };
    }

    let mut blocked = vec![false; n];
    let mut reduced = vec![0.0; n];
    let mut z_trial = vec![0.0; n];
    let mut grad_new = vec![0.0; n];

    for iter in 1..=max_iter {
        // Freeze components held on a face by the gradient; the metric and
        // the step act on the free subspace only.
        for i in 0..n {
            blocked[i] = (z[i] <= lower[i] && grad[i] > 0.0) || (z[i] >= upper[i] && grad[i] < 0.0);
            reduced[i] = if blocked[i] { 0.0 } else { grad[i] };
        }

        let mut direction = two_loop(&reduced, history);
        for i in 0..n {
            direction[i] = if blocked[i] { 0.0 } else { -direction[i] };
        }
        let mut slope: f64 = direction.iter().zip(reduced.iter()).map(|(d, g)| d * g).sum();
        if !slope.is_finite() || slope >= 0.0 {
            // Quasi-Newton model broke down; fall back to steepest descent.
            history.clear();
            for i in 0..n {
                direction[i] = -reduced[i];
            }
            slope = -reduced.iter().map(|g| g * g).sum::<f64>();
        }

        let mut alpha = 1.0;
        let accepted = loop {
            for i in 0..n {
                z_trial[i] = (z[i] + alpha * direction[i]).clamp(lower[i], upper[i]);
            }
            // Sufficient decrease along the arc: compare against the
            // gradient times the step actually taken after projection.
            let gd: f64 = grad
                .iter()
                .zip(z_trial.iter().zip(z.iter()))
                .map(|(g, (zt, zi))| g * (zt - zi))
                .sum();
            if gd == 0.0 {
                break false;
            }
            let f_trial = eval.value(&z_trial);
            if f_trial <= f + ARMIJO_C1 * gd {
                break true;
            }
            // Quadratic interpolation on alpha, safeguarded into
            // [0.1 alpha, 0.5 alpha].
            let denom = f_trial - f - alpha * slope;
            let quad = if denom > 0.0 {
                -0.5 * slope * alpha * alpha / denom
            } else {
                0.5 * alpha
            };
            alpha = quad.clamp(0.1 * alpha, 0.5 * alpha);
            if alpha < MIN_STEP {
                break false;
            }
        };

        if !accepted {
            return InnerResult {
                z,
                pg_norm: pg,
                iters: iter,
                status: InnerStatus::Stalled,
            };
        }

        let f_new = eval.value_grad(&z_trial, &mut grad_new);
        // Curvature pair from the reduced gradients under this iteration's
        // active set, so the pair stays meaningful on the free subspace.
        let s: Vec<f64> = z_trial.iter().zip(z.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                if blocked[i] {
                    0.0
                } else {
                    grad_new[i] - grad[i]
                }
            })
            .collect();
        let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let s_norm = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let y_norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sy > CURVATURE_FLOOR * s_norm * y_norm {
            if history.len() == memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        z.copy_from_slice(&z_trial);
        grad.copy_from_slice(&grad_new);
        f = f_new;
        pg = projected_gradient_norm(&z, &grad, lower, upper);
        if pg <= tol {
            return InnerResult {
                z,
                pg_norm: pg,
                iters: iter,
                status: InnerStatus::Converged,
            };
        }
    }

    InnerResult {
        z,
        pg_norm: pg,
        iters: max_iter,
        status: InnerStatus::MaxIterations,
    }
}

/// Two-loop recursion: returns `H g` for the implicit quasi-Newton inverse
/// Hessian `H`, scaled by the last pair's curvature estimate.
fn two_loop(grad: &[f64], history: &History) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut coeffs = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.iter().zip(q.iter()).map(|(si, qi)| si * qi).sum::<f64>();
        for (qi, yi) in q.iter_mut().zip(y.iter()) {
            *qi -= a * yi;
        }
        coeffs.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if yy > 0.0 {
            let gamma = sy / yy;
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
    }
    for ((s, y, rho), a) in history.iter().zip(coeffs.iter().rev()) {
        let b = rho * y.iter().zip(q.iter()).map(|(yi, qi)| yi * qi).sum::<f64>();
        for (qi, si) in q.iter_mut().zip(s.iter()) {
            *qi += (a - b) * si;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = 1/2 sum d_i (x_i - c_i)^2
    struct Quadratic {
        scale: Vec<f64>,
        center: Vec<f64>,
    }

    impl Evaluator for Quadratic {
        fn value(&self, z: &[f64]) -> f64 {
            0.5 * z
                .iter()
                .zip(self.scale.iter().zip(self.center.iter()))
                .map(|(x, (d, c))| d * (x - c) * (x - c))
                .sum::<f64>()
        }
        fn value_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
            for i in 0..z.len() {
                grad[i] = self.scale[i] * (z[i] - self.center[i]);
            }
            self.value(z)
        }
    }

    #[test]
    fn quadratic_converges_within_dimension_plus_memory_iterations() {
        let q = Quadratic {
            scale: vec![1.0, 2.0, 3.0],
            center: vec![1.0, -2.0, 0.5],
        };
        let lower = vec![-10.0; 3];
        let upper = vec![10.0; 3];
        let memory = 10;
        let result = minimize(&q, &[0.0, 0.0, 0.0], &lower, &upper, 1e-9, 100, memory, &mut History::new());
        assert_eq!(result.status, InnerStatus::Converged);
        assert!(
            result.iters <= 3 + memory,
            "took {} iterations",
            result.iters
        );
        for (zi, ci) in result.z.iter().zip(q.center.iter()) {
            assert!((zi - ci).abs() < 1e-8, "{zi} vs {ci}");
        }
    }

    #[test]
    fn minimizer_outside_box_lands_on_face() {
        let q = Quadratic {
            scale: vec![2.0],
            center: vec![-5.0],
        };
        let result = minimize(&q, &[3.0], &[0.0], &[10.0], 1e-10, 100, 5, &mut History::new());
        assert_eq!(result.status, InnerStatus::Converged);
        assert_eq!(result.z[0], 0.0);
        // The gradient points out of the box at the face, so the projected
        // gradient is zero there.
        assert!(result.pg_norm <= 1e-10);
    }

    #[test]
    fn zero_gradient_returns_immediately() {
        let q = Quadratic {
            scale: vec![1.0, 1.0],
            center: vec![0.25, -0.75],
        };
        let result = minimize(
            &q,
            &[0.25, -0.75],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            1e-12,
            100,
            5,
            &mut History::new(),
        );
        assert_eq!(result.iters, 0);
        assert_eq!(result.status, InnerStatus::Converged);
    }

    #[test]
    fn respects_iteration_budget() {
        let q = Quadratic {
            scale: vec![1.0, 1e4],
            center: vec![1.0, 1.0],
        };
        let result = minimize(&q, &[-5.0, -5.0], &[-10.0, -10.0], &[10.0, 10.0], 0.0, 3, 5, &mut History::new());
        assert_eq!(result.status, InnerStatus::MaxIterations);
        assert_eq!(result.iters, 3);
    }

    #[test]
    fn mixed_active_set_quadratic() {
        // Unconstrained minimizer (-3, 4, 0.5); box forces the first two
        // onto faces while the third stays interior.
        let q = Quadratic {
            scale: vec![1.0, 5.0, 2.0],
            center: vec![-3.0, 4.0, 0.5],
        };
        let lower = vec![0.0, -1.0, -1.0];
        let upper = vec![10.0, 1.0, 1.0];
        let result = minimize(&q, &[5.0, 0.0, -0.9], &lower, &upper, 1e-10, 200, 5, &mut History::new());
        assert_eq!(result.status, InnerStatus::Converged);
        assert_eq!(result.z[0], 0.0);
        assert_eq!(result.z[1], 1.0);
        assert!((result.z[2] - 0.5).abs() < 1e-9);
    }
}
