use nalgebra::{DMatrix, DVector};

use super::gram::LeastSquaresGram;
use super::{check_subproblem, l2_violation, SubproblemSolution};
use crate::error::Result;

/// Unique minimizer of `||Xβ − y||² + γ ||β||²`.
pub fn solve_ridge_ls(x: &DMatrix<f64>, y: &DVector<f64>, gamma1: f64) -> Result<DVector<f64>> {
    check_subproblem(x, y, gamma1)?;
    Ok(ridge_gram(&LeastSquaresGram::new(x, y), gamma1).beta)
}

/// Solves `(G + γI) β = b` by Cholesky with one refinement step.
pub(crate) fn ridge_gram(gram: &LeastSquaresGram, gamma: f64) -> SubproblemSolution {
    let d = gram.b.len();
    let mut system = gram.g.clone();
    for j in 0..d {
        system[(j, j)] += gamma;
    }
    // γ > 0 keeps the system positive definite; LU only covers breakdown
    // from extreme scaling.
    let cholesky = system.clone().cholesky();
    let lu = match cholesky {
        Some(_) => None,
        None => Some(system.clone().lu()),
    };
    let solve = |rhs: &DVector<f64>| -> DVector<f64> {
        match (&cholesky, &lu) {
            (Some(ch), _) => ch.solve(rhs),
            (None, Some(lu)) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(d)),
            (None, None) => unreachable!(),
        }
    };
    let mut beta = solve(&gram.b);
    let residual = &gram.b - &system * &beta;
    beta += solve(&residual);
    let kkt = l2_violation(&gram.gradient(&beta), &beta, gamma);
    SubproblemSolution {
        converged: kkt.is_finite(),
        beta,
        iterations: 1,
        kkt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossKind;
    use crate::solvers::kkt_residual;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_example() {
        let beta = solve_ridge_ls(&DMatrix::from_element(1, 1, 1.0), &DVector::from_element(1, 2.0), 1.0).unwrap();
        assert_relative_eq!(beta[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_targets_give_zero() {
        let x = DMatrix::from_fn(5, 3, |i, j| (i as f64 - j as f64).sin());
        let beta = solve_ridge_ls(&x, &DVector::zeros(5), 0.1).unwrap();
        assert_eq!(beta, DVector::zeros(3));
    }

    #[test]
    fn stationarity_holds() {
        let x = DMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) as f64).cos());
        let y = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let beta = solve_ridge_ls(&x, &y, 0.5).unwrap();
        assert!(kkt_residual(&beta, &x, &y, LossKind::LeastSquares, 2, 0.5).unwrap() <= 1e-10);
    }

    #[test]
    fn rejects_nonpositive_gamma() {
        assert!(solve_ridge_ls(&DMatrix::zeros(1, 1), &DVector::zeros(1), 0.0).is_err());
    }
}
