//! The three equivalent objectives: multiplicative `(c, B)`, joint row
//! penalty on `A`, and the variational form with auxiliary `σ`.

use nalgebra::{DMatrix, DVector};

use crate::data::MultitaskDataset;
use crate::error::{ensure_finite, Error, Result};
use crate::loss::{check_labels, loss_unchecked, LossKind};
use crate::regularizer::RegularizerSpec;

/// `(Σ_t |v_t|^p)^{1/q}`.
pub fn row_operator_norm(v: &[f64], p: f64, q: f64) -> Result<f64> {
    if !(p > 0.0 && q > 0.0) {
        return Err(Error::invalid(format!("exponents must be positive, got p={p}, q={q}")));
    }
    ensure_finite("row vector", v)?;
    Ok(row_power_sum(v.iter().copied(), p).powf(1.0 / q))
}

/// `Σ_t |v_t|^p`, specialised for the two exponents in use.
#[inline]
pub(crate) fn row_power_sum(v: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p == 2.0 {
        v.map(|x| x * x).sum()
    } else if p == 1.0 {
        v.map(f64::abs).sum()
    } else {
        v.map(|x| x.abs().powf(p)).sum()
    }
}

pub(crate) fn matrix_row_power_sums(a: &DMatrix<f64>, p: f64) -> Vec<f64> {
    (0..a.nrows())
        .map(|j| row_power_sum(a.row(j).iter().copied(), p))
        .collect()
}

/// Shared feature gates `c` (length `d`, nonnegative) and task-specific
/// weights `B` (`d × T`). The task models are `A = diag(c) B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    c: DVector<f64>,
    b: DMatrix<f64>,
}

impl Decomposition {
    pub fn new(c: DVector<f64>, b: DMatrix<f64>) -> Result<Self> {
        if c.len() != b.nrows() {
            return Err(Error::dims(format!(
                "c has {} entries but B has {} rows",
                c.len(),
                b.nrows()
            )));
        }
        ensure_finite("c", c.iter())?;
        ensure_finite("B", b.iter())?;
        if let Some(j) = c.iter().position(|&v| v < 0.0) {
            return Err(Error::invalid(format!("c[{j}] = {} is negative", c[j])));
        }
        Ok(Decomposition { c, b })
    }

    /// Splits `A` given gates `c`: `β_j^t = α_j^t / c_j`, and 0 where `c_j = 0`.
    pub fn from_alpha(c: DVector<f64>, a: &DMatrix<f64>) -> Result<Self> {
        if c.len() != a.nrows() {
            return Err(Error::dims(format!("c has {} entries but A has {} rows", c.len(), a.nrows())));
        }
        let b = DMatrix::from_fn(a.nrows(), a.ncols(), |j, t| {
            if c[j] > 0.0 {
                a[(j, t)] / c[j]
            } else {
                0.0
            }
        });
        Decomposition::new(c, b)
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n_features(&self) -> usize {
        self.c.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.b.ncols()
    }

    /// `A = diag(c) B`.
    pub fn alpha(&self) -> DMatrix<f64> {
        let mut a = self.b.clone();
        for (j, mut row) in a.row_iter_mut().enumerate() {
            row *= self.c[j];
        }
        a
    }
}

fn check_model_shape(a: &DMatrix<f64>, data: &MultitaskDataset) -> Result<()> {
    if a.nrows() != data.n_features() || a.ncols() != data.n_tasks() {
        return Err(Error::dims(format!(
            "parameter matrix is {}x{}, dataset has d={} and T={}",
            a.nrows(),
            a.ncols(),
            data.n_features(),
            data.n_tasks()
        )));
    }
    Ok(())
}

/// `Σ_t L(α_t; X_t, y_t)`.
pub fn data_loss(a: &DMatrix<f64>, data: &MultitaskDataset, loss: LossKind) -> Result<f64> {
    check_model_shape(a, data)?;
    ensure_finite("parameter matrix", a.iter())?;
    if loss == LossKind::Logistic {
        for task in data.tasks() {
            check_labels(&task.y)?;
        }
    }
    Ok(data_loss_unchecked(a, data, loss))
}

pub(crate) fn data_loss_unchecked(a: &DMatrix<f64>, data: &MultitaskDataset, loss: LossKind) -> f64 {
    data.tasks()
        .iter()
        .enumerate()
        .map(|(t, task)| loss_unchecked(&a.column(t).into_owned(), &task.x, &task.y, loss))
        .sum()
}

/// `w_β γ1 Σ_t Σ_j |β_j^t|^p + w_c γ2 Σ_j c_j^k`.
pub fn multiplicative_penalty(dec: &Decomposition, spec: &RegularizerSpec) -> f64 {
    let (wb, wc) = spec.penalty_weights();
    let beta_term = row_power_sum(dec.b.iter().copied(), spec.pf());
    let c_term = row_power_sum(dec.c.iter().copied(), spec.kf());
    wb * spec.gamma1() * beta_term + wc * spec.gamma2() * c_term
}

/// Multiplicative objective: loss of `A = diag(c) B` plus the two penalties.
pub fn multiplicative_objective(
    dec: &Decomposition,
    data: &MultitaskDataset,
    spec: &RegularizerSpec,
) -> Result<f64> {
    let a = dec.alpha();
    Ok(data_loss(&a, data, spec.loss())? + multiplicative_penalty(dec, spec))
}

/// `λ Σ_j (Σ_t |α_j^t|^p)^{1/(2q)}`.
pub fn joint_penalty(a: &DMatrix<f64>, p: f64, q: f64, lambda: f64) -> f64 {
    lambda
        * matrix_row_power_sums(a, p)
            .into_iter()
            .map(|s| s.powf(1.0 / (2.0 * q)))
            .sum::<f64>()
}

/// Joint row-penalty objective with `(q, λ)` taken from `spec`.
pub fn joint_objective(a: &DMatrix<f64>, data: &MultitaskDataset, spec: &RegularizerSpec) -> Result<f64> {
    Ok(data_loss(a, data, spec.loss())? + joint_penalty(a, spec.pf(), spec.q(), spec.lambda()))
}

/// `μ1 Σ_j σ_j^{-1} (Σ_t |α_j^t|^p)^{1/q} + μ2 Σ_j σ_j`.
pub fn variational_penalty(
    a: &DMatrix<f64>,
    sigma: &DVector<f64>,
    p: f64,
    q: f64,
    mu1: f64,
    mu2: f64,
) -> Result<f64> {
    if sigma.len() != a.nrows() {
        return Err(Error::dims(format!("sigma has {} entries, A has {} rows", sigma.len(), a.nrows())));
    }
    if let Some(j) = sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!("sigma[{j}] = {} must be positive", sigma[j])));
    }
    if !(mu1 > 0.0 && mu2 > 0.0) {
        return Err(Error::invalid("mu1 and mu2 must be positive"));
    }
    let rows = matrix_row_power_sums(a, p);
    Ok(rows
        .iter()
        .zip(sigma.iter())
        .map(|(s, sig)| mu1 * s.powf(1.0 / q) / sig + mu2 * sig)
        .sum())
}

/// Variational objective with the auxiliary row scales `σ`.
pub fn variational_objective(
    a: &DMatrix<f64>,
    sigma: &DVector<f64>,
    data: &MultitaskDataset,
    spec: &RegularizerSpec,
    mu1: f64,
    mu2: f64,
) -> Result<f64> {
    let penalty = variational_penalty(a, sigma, spec.pf(), spec.q(), mu1, mu2)?;
    Ok(data_loss(a, data, spec.loss())? + penalty)
}

/// The `σ` at which the variational penalty meets its lower bound:
/// `σ_j = √(μ1/μ2) · (Σ_t |α_j^t|^p)^{1/(2q)}`.
pub fn optimal_sigma(a: &DMatrix<f64>, p: f64, q: f64, mu1: f64, mu2: f64) -> DVector<f64> {
    let scale = (mu1 / mu2).sqrt();
    DVector::from_iterator(
        a.nrows(),
        matrix_row_power_sums(a, p)
            .into_iter()
            .map(|s| scale * s.powf(1.0 / (2.0 * q))),
    )
}
