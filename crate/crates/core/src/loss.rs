//! Empirical losses. Both are plain sums over examples with no `1/2` or
//! `1/ℓ` factor, so regularization weights are on the scale of the data.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `Σ (x·w − y)²`
    LeastSquares,
    /// `Σ log(1 + exp(−y x·w))` with labels in {−1, +1}
    Logistic,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::LeastSquares => "least-squares",
            LossKind::Logistic => "logistic",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "least-squares" | "ls" => Ok(LossKind::LeastSquares),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::invalid(format!("unknown loss {other:?}"))),
        }
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_labels(y: &DVector<f64>) -> Result<()> {
    match y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        Some(bad) => Err(Error::invalid(format!(
            "label {bad} outside {{-1, +1}} for logistic loss"
        ))),
        None => Ok(()),
    }
}

fn check_dims(w: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.ncols() != w.len() || x.nrows() != y.len() {
        return Err(Error::dims(format!(
            "X is {}x{}, w has {} entries, y has {}",
            x.nrows(),
            x.ncols(),
            w.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Loss value only; skips validation, for use on already-checked inputs.
pub(crate) fn loss_unchecked(
    w: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kind: LossKind,
) -> f64 {
    let scores = x * w;
    match kind {
        LossKind::LeastSquares => scores
            .iter()
            .zip(y.iter())
            .map(|(s, t)| (s - t) * (s - t))
            .sum(),
        LossKind::Logistic => scores
            .iter()
            .zip(y.iter())
            .map(|(s, t)| softplus(-t * s))
            .sum(),
    }
}

pub(crate) fn loss_and_gradient_unchecked(
    w: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kind: LossKind,
) -> (f64, DVector<f64>) {
    let scores = x * w;
    match kind {
        LossKind::LeastSquares => {
            let r = scores - y;
            let value = r.norm_squared();
            (value, x.tr_mul(&r) * 2.0)
        }
        LossKind::Logistic => {
            let mut value = 0.0;
            let coef = DVector::from_iterator(
                y.len(),
                scores.iter().zip(y.iter()).map(|(s, t)| {
                    value += softplus(-t * s);
                    -t * sigmoid(-t * s)
                }),
            );
            (value, x.tr_mul(&coef))
        }
    }
}

/// Loss `L(w; X, y)` and its gradient with respect to `w`.
pub fn loss_and_gradient(
    w: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kind: LossKind,
) -> Result<(f64, DVector<f64>)> {
    check_dims(w, x, y)?;
    ensure_finite("weight vector", w.iter())?;
    if kind == LossKind::Logistic {
        check_labels(y)?;
    }
    Ok(loss_and_gradient_unchecked(w, x, y, kind))
}
