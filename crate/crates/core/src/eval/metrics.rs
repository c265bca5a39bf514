use nalgebra::{DMatrix, DVector};

use crate::data::MultitaskDataset;
use crate::error::{Error, Result};
use crate::loss::LossKind;

/// Coefficient of determination `1 − Σ(y − ŷ)² / Σ(y − ȳ)²`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dims(format!("{} targets vs {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.len() < 2 {
        return Err(Error::invalid("R² needs at least two examples"));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let total: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if total == 0.0 {
        return Err(Error::invalid("R² is undefined for constant targets"));
    }
    let residual: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - residual / total)
}

/// Harmonic mean of precision and recall for ±1 labels, positive class +1.
/// Returns 0 when precision and recall are both 0, including the case of
/// no true and no predicted positives.
pub fn f1_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dims(format!("{} labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if (t != 1.0 && t != -1.0) || (p != 1.0 && p != -1.0) {
            return Err(Error::invalid("F1 expects labels in {-1, +1}"));
        }
        match (t > 0.0, p > 0.0) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Linear scores, or signs for classification (a zero score predicts +1).
pub fn predict(x: &DMatrix<f64>, weights: &DVector<f64>, loss: LossKind) -> DVector<f64> {
    let scores = x * weights;
    match loss {
        LossKind::LeastSquares => scores,
        LossKind::Logistic => scores.map(|s| if s >= 0.0 { 1.0 } else { -1.0 }),
    }
}

/// Task-averaged R² (least squares) or F1 (logistic) of `A` on `data`.
pub fn score_model(a: &DMatrix<f64>, data: &MultitaskDataset, loss: LossKind) -> Result<f64> {
    if a.nrows() != data.n_features() || a.ncols() != data.n_tasks() {
        return Err(Error::dims("model shape does not match dataset"));
    }
    let mut total = 0.0;
    for (t, task) in data.tasks().iter().enumerate() {
        let pred = predict(&task.x, &a.column(t).into_owned(), loss);
        total += match loss {
            LossKind::LeastSquares => r_squared(task.y.as_slice(), pred.as_slice())?,
            LossKind::Logistic => f1_score(task.y.as_slice(), pred.as_slice())?,
        };
    }
    Ok(total / data.n_tasks() as f64)
}
