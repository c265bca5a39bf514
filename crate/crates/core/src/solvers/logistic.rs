use nalgebra::{DMatrix, DVector};

use super::{check_subproblem, l1_violation, l2_violation, soft_threshold, SolverOptions, SubproblemSolution};
use crate::error::Result;
use crate::loss::{check_labels, loss_and_gradient_unchecked, loss_unchecked, sigmoid, LossKind};

const ARMIJO: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const INITIAL_STEP: f64 = 1.0;
const MIN_STEP: f64 = 1e-20;

fn warm_or_zero(warm: Option<&DVector<f64>>, d: usize) -> DVector<f64> {
    match warm {
        Some(w) if w.len() == d && w.iter().all(|v| v.is_finite()) => w.clone(),
        _ => DVector::zeros(d),
    }
}

fn prepare(x: &DMatrix<f64>, y: &DVector<f64>, gamma: f64, opts: &SolverOptions) -> Result<()> {
    check_subproblem(x, y, gamma)?;
    check_labels(y)?;
    opts.validate()
}

/// `Xᵀ diag(w) X` with `w_i = σ(m_i) σ(−m_i)` at margins `m = y ∘ Xβ`.
fn logistic_hessian(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let scores = x * beta;
    let mut weighted = x.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        let m = y[i] * scores[i];
        row *= (sigmoid(m) * sigmoid(-m)).sqrt();
    }
    weighted.tr_mul(&weighted)
}

/// Solves `H δ = rhs`, adding diagonal damping if `H` is numerically singular.
fn damped_solve(h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1e-300);
    let mut damping = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        for j in 0..m.nrows() {
            m[(j, j)] += damping;
        }
        if let Some(ch) = m.cholesky() {
            return Some(ch.solve(rhs));
        }
        damping = if damping == 0.0 { 1e-12 * scale } else { damping * 100.0 };
    }
    None
}

/// Minimizer of the logistic loss plus `γ ||β||²`, by damped Newton with
/// Armijo backtracking. Stops when the gradient norm is at most `tol`.
pub fn solve_logistic_l2(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma1: f64,
    opts: &SolverOptions,
) -> Result<SubproblemSolution> {
    logistic_l2_warm(x, y, gamma1, opts, None)
}

pub(crate) fn logistic_l2_warm(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: f64,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<SubproblemSolution> {
    prepare(x, y, gamma, opts)?;
    let d = x.ncols();
    let objective = |b: &DVector<f64>| loss_unchecked(b, x, y, LossKind::Logistic) + gamma * b.norm_squared();
    let mut beta = warm_or_zero(warm, d);
    let mut iterations = 0;
    let mut kkt;
    loop {
        let (loss, grad_loss) = loss_and_gradient_unchecked(&beta, x, y, LossKind::Logistic);
        kkt = l2_violation(&grad_loss, &beta, gamma);
        if kkt <= opts.tol || iterations >= opts.max_inner_iters {
            break;
        }
        iterations += 1;
        let grad = grad_loss + &beta * (2.0 * gamma);
        let mut h = logistic_hessian(x, y, &beta);
        for j in 0..d {
            h[(j, j)] += 2.0 * gamma;
        }
        let Some(step) = damped_solve(h, &(-&grad)) else { break };
        let current = loss + gamma * beta.norm_squared();
        let slope = grad.dot(&step);
        let mut t = INITIAL_STEP;
        let mut accepted = false;
        while t > MIN_STEP {
            let candidate = &beta + &step * t;
            if objective(&candidate) <= current + ARMIJO * t * slope {
                beta = candidate;
                accepted = true;
                break;
            }
            t *= SHRINK;
        }
        if !accepted {
            break;
        }
    }
    Ok(SubproblemSolution {
        converged: kkt <= opts.tol,
        beta,
        iterations,
        kkt,
    })
}

/// Minimizer of the logistic loss plus `γ ||β||_1` by proximal gradient with
/// backtracking. Once the signed support has been stable for a few steps, a
/// Newton step restricted to that orthant is tried; it is kept only if it
/// lowers the objective, so the objective never increases.
pub fn solve_logistic_l1(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma1: f64,
    opts: &SolverOptions,
) -> Result<SubproblemSolution> {
    logistic_l1_warm(x, y, gamma1, opts, None)
}

/// Objective values after every accepted step; used by the descent test.
#[cfg(test)]
pub(crate) fn logistic_l1_trace(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: f64,
    opts: &SolverOptions,
) -> Result<(SubproblemSolution, Vec<f64>)> {
    prepare(x, y, gamma, opts)?;
    let mut trace = Vec::new();
    let sol = logistic_l1_core(x, y, gamma, opts, None, Some(&mut trace));
    Ok((sol, trace))
}

pub(crate) fn logistic_l1_warm(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: f64,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<SubproblemSolution> {
    prepare(x, y, gamma, opts)?;
    Ok(logistic_l1_core(x, y, gamma, opts, warm, None))
}

fn signs(beta: &DVector<f64>) -> Vec<i8> {
    beta.iter()
        .map(|&b| if b > 0.0 { 1 } else if b < 0.0 { -1 } else { 0 })
        .collect()
}

fn logistic_l1_core(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: f64,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
    mut trace: Option<&mut Vec<f64>>,
) -> SubproblemSolution {
    let d = x.ncols();
    let smooth = |b: &DVector<f64>| loss_unchecked(b, x, y, LossKind::Logistic);
    let composite = |b: &DVector<f64>| smooth(b) + gamma * b.lp_norm(1);

    let mut beta = warm_or_zero(warm, d);
    let mut step = INITIAL_STEP;
    let mut iterations = 0;
    let mut stable_support = 0;
    let mut kkt;
    loop {
        let (f, grad) = loss_and_gradient_unchecked(&beta, x, y, LossKind::Logistic);
        kkt = l1_violation(&grad, &beta, gamma);
        if kkt <= opts.tol || iterations >= opts.max_inner_iters {
            break;
        }
        iterations += 1;

        if stable_support >= 3 {
            stable_support = 0;
            if let Some(polished) = orthant_newton(x, y, gamma, &beta, &grad, &composite) {
                beta = polished;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(composite(&beta));
                }
                continue;
            }
        }

        let before = signs(&beta);
        loop {
            let candidate = beta.zip_map(&grad, |b, g| soft_threshold(b - step * g, step * gamma));
            let diff = &candidate - &beta;
            let bound = f + grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if smooth(&candidate) <= bound || step < MIN_STEP {
                beta = candidate;
                break;
            }
            step *= SHRINK;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(composite(&beta));
        }
        step = (2.0 * step).min(INITIAL_STEP);
        if signs(&beta) == before && beta.iter().any(|&b| b != 0.0) {
            stable_support += 1;
        } else {
            stable_support = 0;
        }
    }
    SubproblemSolution {
        converged: kkt <= opts.tol,
        beta,
        iterations,
        kkt,
    }
}

/// Newton step on the smooth problem `f(β) + γ sᵀβ` over the current
/// nonzero coordinates with signs `s`, projected back onto that orthant.
fn orthant_newton(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: f64,
    beta: &DVector<f64>,
    grad: &DVector<f64>,
    composite: &impl Fn(&DVector<f64>) -> f64,
) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let xs = x.select_columns(&support);
    let beta_s = DVector::from_iterator(support.len(), support.iter().map(|&j| beta[j]));
    let g_s = DVector::from_iterator(
        support.len(),
        support.iter().map(|&j| grad[j] + gamma * beta[j].signum()),
    );
    let h = logistic_hessian(&xs, y, &beta_s);
    let dir = damped_solve(h, &(-&g_s))?;
    let slope = g_s.dot(&dir);
    if !(slope < 0.0) {
        return None;
    }
    let current = composite(beta);
    let mut t = 1.0;
    while t > 1e-10 {
        let mut candidate = beta.clone();
        for (i, &j) in support.iter().enumerate() {
            let v = beta[j] + t * dir[i];
            candidate[j] = if v * beta[j] > 0.0 { v } else { 0.0 };
        }
        let value = composite(&candidate);
        if value <= current + ARMIJO * t * slope {
            return Some(candidate);
        }
        t *= SHRINK;
    }
    None
}
