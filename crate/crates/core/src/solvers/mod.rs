//! Per-task subproblem `min_β L(β; X̃, y) + γ ||β||_p^p` for least-squares
//! and logistic losses with `p ∈ {1, 2}`.
//!
//! Every iterative solver reports the optimality residual of the point it
//! returns; `converged` is set only when that residual is within `tol`.

mod gram;
mod lasso;
mod logistic;
mod ridge;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::loss::{check_labels, loss_and_gradient_unchecked, LossKind};

pub(crate) use gram::LeastSquaresGram;
pub use lasso::solve_lasso_ls;
pub use logistic::{solve_logistic_l1, solve_logistic_l2};
pub use ridge::solve_ridge_ls;

pub(crate) use lasso::lasso_gram;
pub(crate) use ridge::ridge_gram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Target for the KKT / gradient residual.
    pub tol: f64,
    /// Sweeps (coordinate descent) or iterations (Newton, proximal gradient).
    pub max_inner_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_inner_iters: 10_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!("solver tol must be positive, got {}", self.tol)));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::invalid("max_inner_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Residual of the returned point, as defined by [`kkt_residual`].
    pub kkt: f64,
}

/// `sign(z) · max(|z| − t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest violation of `0 ∈ ∇L + γ ∂||β||_1`.
pub(crate) fn l1_violation(grad: &DVector<f64>, beta: &DVector<f64>, gamma: f64) -> f64 {
    grad.iter()
        .zip(beta.iter())
        .map(|(&g, &b)| {
            if b > 0.0 {
                (g + gamma).abs()
            } else if b < 0.0 {
                (g - gamma).abs()
            } else {
                (g.abs() - gamma).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// `||∇L + 2γβ||_2`.
pub(crate) fn l2_violation(grad: &DVector<f64>, beta: &DVector<f64>, gamma: f64) -> f64 {
    grad.iter()
        .zip(beta.iter())
        .map(|(&g, &b)| {
            let r = g + 2.0 * gamma * b;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn check_subproblem(x: &DMatrix<f64>, y: &DVector<f64>, gamma: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::dims(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma1 must be positive, got {gamma}")));
    }
    ensure_finite("design matrix", x.iter())?;
    ensure_finite("targets", y.iter())
}

/// Optimality residual of `beta` for `L(β) + γ ||β||_p^p`: the gradient norm
/// for `p = 2`, the largest subdifferential violation for `p = 1`.
pub fn kkt_residual(
    beta: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    loss: LossKind,
    p: u8,
    gamma1: f64,
) -> Result<f64> {
    if x.ncols() != beta.len() || x.nrows() != y.len() {
        return Err(Error::dims(format!(
            "X is {}x{}, beta has {}, y has {}",
            x.nrows(),
            x.ncols(),
            beta.len(),
            y.len()
        )));
    }
    if loss == LossKind::Logistic {
        check_labels(y)?;
    }
    let (_, grad) = loss_and_gradient_unchecked(beta, x, y, loss);
    match p {
        1 => Ok(l1_violation(&grad, beta, gamma1)),
        2 => Ok(l2_violation(&grad, beta, gamma1)),
        other => Err(Error::invalid(format!("p must be 1 or 2, got {other}"))),
    }
}

/// Dispatches to the solver for `(loss, p)`, optionally warm-started.
pub fn solve_subproblem(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    loss: LossKind,
    p: u8,
    gamma1: f64,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<SubproblemSolution> {
    match (loss, p) {
        (LossKind::LeastSquares, 2) => {
            check_subproblem(x, y, gamma1)?;
            Ok(ridge_gram(&LeastSquaresGram::new(x, y), gamma1))
        }
        (LossKind::LeastSquares, 1) => {
            check_subproblem(x, y, gamma1)?;
            opts.validate()?;
            Ok(lasso_gram(&LeastSquaresGram::new(x, y), gamma1, opts, warm))
        }
        (LossKind::Logistic, 2) => logistic::logistic_l2_warm(x, y, gamma1, opts, warm),
        (LossKind::Logistic, 1) => logistic::logistic_l1_warm(x, y, gamma1, opts, warm),
        (_, other) => Err(Error::invalid(format!("p must be 1 or 2, got {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-4.0, 1.5), -2.5);
        assert_eq!(soft_threshold(1.0, 0.0), 1.0);
    }

    #[test]
    fn l1_violation_at_zero_inside_box() {
        let g = DVector::from_vec(vec![0.5, -0.9]);
        assert_eq!(l1_violation(&g, &DVector::zeros(2), 1.0), 0.0);
        assert!((l1_violation(&g, &DVector::zeros(2), 0.6) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().validate().is_ok());
        assert!(SolverOptions { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverOptions { max_inner_iters: 0, ..Default::default() }.validate().is_err());
    }
}
