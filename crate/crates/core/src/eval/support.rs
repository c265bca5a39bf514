use serde::{Deserialize, Serialize};

use crate::datagen::GroundTruth;
use crate::error::{Error, Result};

/// Gate-based feature selection quality against the generating support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub precision: f64,
    pub recall: f64,
    /// Fraction of the truly irrelevant features left unselected.
    pub irrelevant_rejection: f64,
    pub selected: usize,
}

/// Feature `j` counts as selected when `c_j ≥ threshold · max(c)`; a feature
/// is relevant when any task uses it. All-zero gates select nothing and
/// report precision 1 with recall 0.
pub fn support_recovery_metrics(c: &[f64], truth: &GroundTruth, threshold: f64) -> Result<SupportMetrics> {
    if c.len() != truth.support.nrows() {
        return Err(Error::dims(format!(
            "{} gates for a support with {} features",
            c.len(),
            truth.support.nrows()
        )));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("gates must be finite and nonnegative"));
    }
    let c_max = c.iter().copied().fold(0.0, f64::max);
    let relevant = truth.relevant_features();
    let is_selected = |j: usize| c_max > 0.0 && c[j] >= threshold * c_max;
    let selected = (0..c.len()).filter(|&j| is_selected(j)).count();
    let hits = relevant.iter().filter(|&&j| is_selected(j)).count();
    let precision = if selected == 0 { 1.0 } else { hits as f64 / selected as f64 };
    let recall = if relevant.is_empty() { 1.0 } else { hits as f64 / relevant.len() as f64 };
    let irrelevant = &truth.irrelevant_features;
    let rejected = irrelevant.iter().filter(|&&j| !is_selected(j)).count();
    let irrelevant_rejection = if irrelevant.is_empty() { 1.0 } else { rejected as f64 / irrelevant.len() as f64 };
    Ok(SupportMetrics { precision, recall, irrelevant_rejection, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn truth() -> GroundTruth {
        // Features 0 and 4 are unused, 1..=3 are used by some task.
        let support = DMatrix::from_row_slice(5, 2, &[false, false, true, false, false, true, true, true, false, false]);
        GroundTruth {
            alpha: support.map(|s| if s { 1.0 } else { 0.0 }),
            support,
            irrelevant_features: vec![0, 4],
            task_groups: Vec::new(),
        }
    }

    #[test]
    fn counts() {
        let c = [0.0, 0.5, 1e-5, 2.0, 0.0];
        let m = support_recovery_metrics(&c, &truth(), 1e-3).unwrap();
        assert_eq!(m.selected, 2);
        assert_eq!(m.precision, 1.0);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.irrelevant_rejection, 1.0);
    }

    #[test]
    fn threshold_is_relative_and_inclusive() {
        let c = [1e-3, 1.0, 1.0, 1.0, 0.5];
        let m = support_recovery_metrics(&c, &truth(), 1e-3).unwrap();
        assert_eq!(m.selected, 5);
        assert_eq!(m.precision, 0.6);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.irrelevant_rejection, 0.0);
    }

    #[test]
    fn all_zero_gates() {
        let m = support_recovery_metrics(&[0.0; 5], &truth(), 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.selected), (1.0, 0.0, 0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(support_recovery_metrics(&[1.0; 4], &truth(), 0.5).is_err());
        assert!(support_recovery_metrics(&[1.0; 5], &truth(), 0.0).is_err());
        assert!(support_recovery_metrics(&[1.0; 5], &truth(), 1.0).is_err());
        assert!(support_recovery_metrics(&[1.0, -1.0, 1.0, 1.0, 1.0], &truth(), 0.5).is_err());
    }
}
