use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::gram::LeastSquaresGram;
use super::{check_subproblem, l1_violation, soft_threshold, SolverOptions, SubproblemSolution};
use crate::error::Result;

/// Minimizer of `||Xβ − y||² + γ ||β||_1` by cyclic coordinate descent.
///
/// If `max_inner_iters` sweeps pass without reaching `tol`, the last iterate
/// is returned with `converged = false`.
pub fn solve_lasso_ls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma1: f64,
    opts: &SolverOptions,
) -> Result<SubproblemSolution> {
    check_subproblem(x, y, gamma1)?;
    opts.validate()?;
    Ok(lasso_gram(&LeastSquaresGram::new(x, y), gamma1, opts, None))
}

/// One cyclic pass over `coords`; `q` tracks `Gβ`. Returns the largest
/// coordinate change.
fn sweep(
    gram: &LeastSquaresGram,
    half_gamma: f64,
    beta: &mut DVector<f64>,
    q: &mut DVector<f64>,
    coords: impl Iterator<Item = usize>,
) -> f64 {
    let mut max_change: f64 = 0.0;
    for j in coords {
        let gjj = gram.g[(j, j)];
        let old = beta[j];
        let new = if gjj > 0.0 {
            soft_threshold(gram.b[j] - (q[j] - gjj * old), half_gamma) / gjj
        } else {
            0.0
        };
        if new != old {
            let delta = new - old;
            q.axpy(delta, &gram.g.column(j), 1.0);
            beta[j] = new;
            max_change = max_change.max(delta.abs() * gjj.sqrt());
        }
    }
    max_change
}

fn violation(gram: &LeastSquaresGram, q: &DVector<f64>, beta: &DVector<f64>, gamma: f64) -> f64 {
    let grad = (q - &gram.b) * 2.0;
    l1_violation(&grad, beta, gamma)
}

/// Coordinate-descent sweeps tried before switching to the active-set method.
const CD_SWEEPS: usize = 100;

enum FaceStep {
    Reached,
    /// Position in `active` of the coordinate that reached zero first.
    Blocked(usize),
    Singular,
}

/// Relative pivot below which a support column counts as linearly dependent.
/// Multiple of machine epsilon, relative to `max |b|`, below which the KKT
/// residual is rounding noise.
const ROUNDOFF_FACTOR: f64 = 100.0;

const DEPENDENT_PIVOT: f64 = 1e-10;

/// Cholesky factor of `G_AA`, or `None` when some pivot shows a column that
/// is numerically dependent on the earlier ones.
fn support_cholesky(g: &DMatrix<f64>, idx: &[usize]) -> Option<Cholesky<f64, Dyn>> {
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| g[(idx[a], idx[b])]);
    let chol = sub.cholesky()?;
    let l = chol.l_dirty();
    let independent = idx
        .iter()
        .enumerate()
        .all(|(a, &j)| l[(a, a)] * l[(a, a)] > DEPENDENT_PIVOT * g[(j, j)]);
    independent.then_some(chol)
}

/// Moves `beta` toward the minimizer of `βᵀGβ − 2bᵀβ + γ θᵀβ` over the
/// coordinates in `active`, i.e. `G_AA β_A = b_A − (γ/2) θ`, stopping at the
/// first coordinate whose sign would leave `θ`. No point on that segment has
/// a larger lasso objective than the start.
fn face_step(gram: &LeastSquaresGram, gamma: f64, beta: &mut DVector<f64>, active: &[usize], theta: &[f64]) -> FaceStep {
    let Some(chol) = support_cholesky(&gram.g, active) else {
        return FaceStep::Singular;
    };
    let rhs = DVector::from_fn(active.len(), |a, _| gram.b[active[a]] - 0.5 * gamma * theta[a]);
    let target = chol.solve(&rhs);
    if target.iter().any(|v| !v.is_finite()) {
        return FaceStep::Singular;
    }
    let mut step: f64 = 1.0;
    let mut blocking = None;
    for (a, &j) in active.iter().enumerate() {
        if target[a] * theta[a] <= 0.0 {
            let t = beta[j] / (beta[j] - target[a]);
            if t < step || blocking.is_none() && t <= step {
                step = t;
                blocking = Some(a);
            }
        }
    }
    for (a, &j) in active.iter().enumerate() {
        beta[j] += step * (target[a] - beta[j]);
    }
    match blocking {
        Some(a) => {
            beta[active[a]] = 0.0;
            FaceStep::Blocked(a)
        }
        None => FaceStep::Reached,
    }
}

/// Active-set (feature-sign) search. Each step either solves the quadratic
/// on the current signed support exactly, drops a coordinate that hit zero,
/// or adds the inactive coordinate with the largest KKT violation. A column
/// that is linearly dependent on the support is brought in by a step along
/// the null direction, which lowers the ℓ1 term until some support
/// coordinate reaches zero. Returns the number of steps taken.
fn feature_sign(gram: &LeastSquaresGram, gamma: f64, beta: &mut DVector<f64>, tol: f64, max_steps: usize) -> usize {
    let d = beta.len();
    let mut active: Vec<usize> = (0..d).filter(|&j| beta[j] != 0.0).collect();
    if !active.is_empty() && support_cholesky(&gram.g, &active).is_none() {
        beta.fill(0.0);
        active.clear();
    }
    let mut theta: Vec<f64> = active.iter().map(|&j| beta[j].signum()).collect();
    let mut needs_solve = !active.is_empty();
    let mut last_added = None;
    let mut steps = 0;

    while steps < max_steps {
        if needs_solve {
            steps += 1;
            match face_step(gram, gamma, beta, &active, &theta) {
                FaceStep::Reached => {}
                FaceStep::Blocked(a) => {
                    // The coordinate just added must move with its sign; if it
                    // cannot, the violation was rounding noise.
                    if last_added == Some(active[a]) && beta[active[a]] == 0.0 {
                        active.remove(a);
                        theta.remove(a);
                        face_step(gram, gamma, beta, &active, &theta);
                        return steps;
                    }
                    active.remove(a);
                    theta.remove(a);
                    last_added = None;
                    continue;
                }
                FaceStep::Singular => return steps,
            }
        }

        let grad = gram.gradient(beta);
        let mut entering = None;
        let mut worst = 0.1 * tol;
        for j in (0..d).filter(|&j| beta[j] == 0.0 && !active.contains(&j)) {
            let excess = grad[j].abs() - gamma;
            if excess > worst {
                worst = excess;
                entering = Some(j);
            }
        }
        let Some(i) = entering else {
            return steps;
        };
        let theta_i = -grad[i].signum();
        let gii = gram.g[(i, i)];
        if gii <= 0.0 {
            return steps;
        }

        let (schur, w) = if active.is_empty() {
            (gii, DVector::zeros(0))
        } else {
            let Some(chol) = support_cholesky(&gram.g, &active) else {
                return steps;
            };
            let g_ai = DVector::from_fn(active.len(), |a, _| gram.g[(active[a], i)]);
            let w = chol.solve(&g_ai);
            (gii - g_ai.dot(&w), w)
        };

        if schur > DEPENDENT_PIVOT * gii {
            active.push(i);
            theta.push(theta_i);
            needs_solve = true;
            last_added = Some(i);
            continue;
        }

        // Column i lies in the span of the support: z = (−w, 1) is a null
        // direction of the Gram block, along which only the ℓ1 term changes.
        steps += 1;
        let mut step = f64::INFINITY;
        let mut blocking = None;
        for (a, &j) in active.iter().enumerate() {
            let dir = -w[a] * theta_i;
            if dir * theta[a] < 0.0 {
                let t = -beta[j] / dir;
                if t < step {
                    step = t;
                    blocking = Some(a);
                }
            }
        }
        let Some(blocked) = blocking else {
            return steps;
        };
        for (a, &j) in active.iter().enumerate() {
            beta[j] -= step * w[a] * theta_i;
        }
        beta[i] = step * theta_i;
        beta[active[blocked]] = 0.0;
        active.remove(blocked);
        theta.remove(blocked);
        active.push(i);
        theta.push(theta_i);
        needs_solve = true;
        last_added = None;
    }
    steps
}

/// Minimizer of `βᵀGβ − 2bᵀβ + γ||β||_1`.
///
/// Cyclic coordinate descent alternates full sweeps, an exact solve on the
/// current signed support and sweeps restricted to the support. When that
/// has not converged after a fixed number of sweeps, which happens when the
/// support outgrows the rank of `G`, an active-set search finishes the job.
/// Coordinate order is fixed, so results are deterministic.
pub(crate) fn lasso_gram(
    gram: &LeastSquaresGram,
    gamma: f64,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> SubproblemSolution {
    let d = gram.b.len();
    let mut beta = match warm {
        Some(w) if w.len() == d && w.iter().all(|v| v.is_finite()) => w.clone(),
        _ => DVector::zeros(d),
    };
    // The residual Gβ − b cannot be resolved below rounding in b, which
    // grows with the square of the gates.
    let tol = opts.tol.max(ROUNDOFF_FACTOR * f64::EPSILON * gram.b.amax());
    let mut q = &gram.g * &beta;
    let half = 0.5 * gamma;
    let mut iterations = 0;
    let mut kkt = violation(gram, &q, &beta, gamma);
    let cd_budget = opts.max_inner_iters.min(CD_SWEEPS);

    while kkt > tol && iterations < cd_budget {
        sweep(gram, half, &mut beta, &mut q, 0..d);
        iterations += 1;

        // Refresh Gβ to drop accumulated rounding before judging optimality.
        q = &gram.g * &beta;
        kkt = violation(gram, &q, &beta, gamma);
        if kkt <= tol {
            break;
        }

        let active: Vec<usize> = (0..d).filter(|&j| beta[j] != 0.0).collect();
        let theta: Vec<f64> = active.iter().map(|&j| beta[j].signum()).collect();
        if !active.is_empty() && !matches!(face_step(gram, gamma, &mut beta, &active, &theta), FaceStep::Singular) {
            q = &gram.g * &beta;
            kkt = violation(gram, &q, &beta, gamma);
            if kkt <= tol {
                break;
            }
        }
        while iterations < cd_budget {
            let change = sweep(gram, half, &mut beta, &mut q, active.iter().copied());
            iterations += 1;
            if change <= 0.1 * tol {
                break;
            }
        }
        q = &gram.g * &beta;
        kkt = violation(gram, &q, &beta, gamma);
    }

    if kkt > tol && iterations < opts.max_inner_iters {
        let mut candidate = beta.clone();
        iterations += feature_sign(gram, gamma, &mut candidate, tol, opts.max_inner_iters - iterations);
        let mut candidate_kkt = violation(gram, &(&gram.g * &candidate), &candidate, gamma);
        if candidate_kkt > tol && iterations < opts.max_inner_iters {
            candidate.fill(0.0);
            iterations += feature_sign(gram, gamma, &mut candidate, tol, opts.max_inner_iters - iterations);
            candidate_kkt = violation(gram, &(&gram.g * &candidate), &candidate, gamma);
        }
        if candidate_kkt < kkt {
            beta = candidate;
            kkt = candidate_kkt;
        }
    }

    SubproblemSolution {
        converged: kkt <= tol,
        beta,
        iterations,
        kkt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossKind;
    use crate::solvers::kkt_residual;
    use approx::assert_relative_eq;

    fn wide_problem(seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(12, 40, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(12, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); 5.0 * z });
        (x, y)
    }

    #[test]
    fn feature_sign_solves_wide_problem_exactly() {
        for seed in 0..5 {
            let (x, y) = wide_problem(seed);
            let gram = LeastSquaresGram::new(&x, &y);
            let gamma = 1e-4;
            let mut beta = DVector::zeros(40);
            feature_sign(&gram, gamma, &mut beta, 1e-10, 10_000);
            let kkt = kkt_residual(&beta, &x, &y, LossKind::LeastSquares, 1, gamma).unwrap();
            assert!(kkt < 1e-8, "seed {seed}: kkt {kkt}");
            assert!(beta.iter().filter(|v| **v != 0.0).count() <= 12);
        }
    }

    #[test]
    fn wide_problem_converges_from_dense_warm_start() {
        let (x, y) = wide_problem(9);
        let warm = DVector::from_element(40, 0.3);
        let gram = LeastSquaresGram::new(&x, &y);
        let sol = lasso_gram(&gram, 1e-3, &SolverOptions::default(), Some(&warm));
        assert!(sol.converged, "kkt {}", sol.kkt);
    }

    #[test]
    fn large_penalty_gives_zero() {
        let x = DMatrix::from_fn(8, 3, |i, j| ((i + 2 * j) as f64).sin());
        let y = DVector::from_fn(8, |i, _| (i as f64).cos());
        let gamma = 2.0 * x.tr_mul(&y).amax();
        let sol = solve_lasso_ls(&x, &y, gamma, &SolverOptions::default()).unwrap();
        assert_eq!(sol.beta, DVector::zeros(3));
        assert!(sol.converged);
    }

    #[test]
    fn scalar_example() {
        // (β − 2)² + 2|β| is minimized at β = 1.
        let sol = solve_lasso_ls(
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 2.0),
            2.0,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(sol.beta[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let x = DMatrix::from_fn(10, 6, |i, j| ((i * 3 + j * j) as f64).sin() + 0.9 * ((i + j) as f64).cos());
        let y = DVector::from_fn(10, |i, _| i as f64);
        let opts = SolverOptions { tol: 1e-14, max_inner_iters: 1 };
        let sol = solve_lasso_ls(&x, &y, 0.01, &opts).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
        let exact = kkt_residual(&sol.beta, &x, &y, LossKind::LeastSquares, 1, 0.01).unwrap();
        assert!(exact > 1e-14);
    }

    #[test]
    fn zero_column_stays_zero() {
        let mut x = DMatrix::from_fn(5, 3, |i, j| ((i + j) as f64).sin());
        x.column_mut(1).fill(0.0);
        let y = DVector::from_fn(5, |i, _| i as f64);
        let sol = solve_lasso_ls(&x, &y, 0.1, &SolverOptions::default()).unwrap();
        assert_eq!(sol.beta[1], 0.0);
        assert!(sol.converged);
    }
}
