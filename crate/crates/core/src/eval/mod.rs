//! Metrics, splits, cross-validation and the repeated-split benchmark.

mod method;
mod metrics;
mod split;
mod support;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MultitaskDataset;
use crate::error::{Error, Result};
use crate::io::format_f64;
use crate::loss::LossKind;
use crate::optimizer::{FitOptions, FitResult, Termination};

pub use method::Method;
pub use metrics::{f1_score, predict, r_squared, score_model};
pub(crate) use split::derive_seed;
pub use split::{kfold_indices, random_split, random_split_indices, SplitIndices};
pub use support::{support_recovery_metrics, SupportMetrics};

/// Six log-spaced values from 1e-3 to 1e2.
pub const DEFAULT_GAMMA_VALUES: [f64; 6] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2];

/// Cartesian product of `values` with itself, as `[γ1, γ2]` pairs.
pub fn gamma_grid(values: &[f64]) -> Vec<[f64; 2]> {
    values.iter().flat_map(|&g1| values.iter().map(move |&g2| [g1, g2])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub train_fractions: Vec<f64>,
    pub repeats: usize,
    pub cv_folds: usize,
    pub methods: Vec<Method>,
    pub gamma_grid: Vec<[f64; 2]>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            train_fractions: vec![0.25, 0.33, 0.5],
            repeats: 15,
            cv_folds: 3,
            methods: Method::all(),
            gamma_grid: gamma_grid(&DEFAULT_GAMMA_VALUES),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.train_fractions.is_empty() || self.methods.is_empty() || self.gamma_grid.is_empty() {
            return Err(Error::invalid("experiment plan needs fractions, methods and a γ grid"));
        }
        if self.train_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::invalid("train fractions must lie in (0, 1)"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be positive"));
        }
        if self.cv_folds < 2 {
            return Err(Error::invalid("cv_folds must be at least 2"));
        }
        if self.gamma_grid.iter().flatten().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::invalid("γ grid values must be positive and finite"));
        }
        Ok(())
    }
}

/// Name of the metric reported for a loss.
pub fn metric_name(loss: LossKind) -> &'static str {
    match loss {
        LossKind::LeastSquares => "r2",
        LossKind::Logistic => "f1",
    }
}

/// Convergence record of a group of fits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub fits: usize,
    /// Fits that hit the iteration cap.
    pub nonconverged: usize,
    /// Fits stopped by a stalled objective rather than by `max |Δα|`.
    pub stalled: usize,
    /// Largest relative rise of any objective trace.
    pub worst_trace_increase: f64,
    pub max_iterations: usize,
}

impl FitDiagnostics {
    pub fn record(&mut self, fit: &FitResult) {
        self.fits += 1;
        if !fit.converged {
            self.nonconverged += 1;
        }
        if fit.termination == Termination::ObjectiveChange {
            self.stalled += 1;
        }
        self.worst_trace_increase = self.worst_trace_increase.max(fit.max_relative_increase());
        self.max_iterations = self.max_iterations.max(fit.iterations);
    }

    pub fn merge(&mut self, other: &FitDiagnostics) {
        self.fits += other.fits;
        self.nonconverged += other.nonconverged;
        self.stalled += other.stalled;
        self.worst_trace_increase = self.worst_trace_increase.max(other.worst_trace_increase);
        self.max_iterations = self.max_iterations.max(other.max_iterations);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Mean metric over the folds that fitted; `None` when every fold failed.
    pub score: Option<f64>,
    /// Standard error of the fold scores; `None` with fewer than two.
    pub std_error: Option<f64>,
    pub failed_folds: usize,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub method: Method,
    /// Grid point with the best mean score.
    pub gamma1: f64,
    pub gamma2: f64,
    pub score: f64,
    pub grid: Vec<GridScore>,
    /// All fold fits over the grid.
    pub diagnostics: FitDiagnostics,
}

/// Grid points that give distinct models. Methods without a second
/// hyperparameter only vary γ1.
fn candidates(method: Method, grid: &[[f64; 2]]) -> Vec<[f64; 2]> {
    if method.uses_gamma2() {
        return grid.to_vec();
    }
    let mut g1: Vec<f64> = grid.iter().map(|g| g[0]).collect();
    g1.sort_by(f64::total_cmp);
    g1.dedup();
    g1.into_iter().map(|g| [g, 1.0]).collect()
}

/// K-fold cross-validation over `grid`, maximizing the task-averaged metric.
/// Ties go to the larger `γ1 + γ2`.
pub fn cross_validate(
    train: &MultitaskDataset,
    method: Method,
    loss: LossKind,
    grid: &[[f64; 2]],
    folds: usize,
    opts: &FitOptions,
    seed: u64,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("empty γ grid"));
    }
    let splits = kfold_indices(train, folds, seed)?;
    let parts: Vec<(MultitaskDataset, MultitaskDataset)> = splits
        .iter()
        .map(|s| Ok((train.select_rows(&s.train)?, train.select_rows(&s.test)?)))
        .collect::<Result<_>>()?;

    let evaluated: Vec<(GridScore, Vec<String>)> = candidates(method, grid)
        .into_par_iter()
        .map(|[g1, g2]| {
            let mut scores = Vec::with_capacity(parts.len());
            let mut errors = Vec::new();
            let mut diagnostics = FitDiagnostics::default();
            for (fold_train, fold_test) in &parts {
                let scored = method.fit(fold_train, g1, g2, loss, opts).and_then(|fit| {
                    diagnostics.record(&fit);
                    score_model(&fit.alpha(), fold_test, loss)
                });
                match scored {
                    Ok(s) if s.is_finite() => scores.push(s),
                    Ok(s) => errors.push(format!("{method} at ({g1}, {g2}): non-finite score {s}")),
                    Err(e) => errors.push(format!("{method} at ({g1}, {g2}): {e}")),
                }
            }
            let score = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
            let std_error = (scores.len() > 1).then(|| mean_std(&scores).1 / (scores.len() as f64).sqrt());
            let failed_folds = errors.len();
            (GridScore { gamma1: g1, gamma2: g2, score, std_error, failed_folds, diagnostics }, errors)
        })
        .collect();

    let mut best: Option<&GridScore> = None;
    for (g, _) in &evaluated {
        let Some(s) = g.score else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bs = b.score.expect("best has a score");
                s > bs || (s == bs && g.gamma1 + g.gamma2 > b.gamma1 + b.gamma2)
            }
        };
        if better {
            best = Some(g);
        }
    }
    let Some(best) = best else {
        return Err(Error::AllFoldsFailed(evaluated.into_iter().flat_map(|(_, e)| e).collect()));
    };
    let mut diagnostics = FitDiagnostics::default();
    for (g, _) in &evaluated {
        diagnostics.merge(&g.diagnostics);
    }
    Ok(CvOutcome {
        method,
        gamma1: best.gamma1,
        gamma2: best.gamma2,
        score: best.score.expect("best has a score"),
        grid: evaluated.iter().map(|(g, _)| g.clone()).collect(),
        diagnostics,
    })
}

impl CvOutcome {
    /// The most strongly regularized grid point whose mean score is within
    /// one standard error of the best; favours sparser models at little
    /// cost in fit. Returns `(γ1, γ2)`.
    pub fn one_standard_error(&self) -> Result<(f64, f64)> {
        let best = self
            .grid
            .iter()
            .find(|g| g.gamma1 == self.gamma1 && g.gamma2 == self.gamma2)
            .ok_or_else(|| Error::invalid("selected point missing from the grid"))?;
        let floor = self.score - best.std_error.unwrap_or(0.0);
        let mut pick = (self.method.strength(self.gamma1, self.gamma2)?, self.gamma1, self.gamma2);
        for g in &self.grid {
            if g.score.is_some_and(|s| s >= floor) {
                let strength = self.method.strength(g.gamma1, g.gamma2)?;
                if (strength, g.gamma1 + g.gamma2) > (pick.0, pick.1 + pick.2) {
                    pick = (strength, g.gamma1, g.gamma2);
                }
            }
        }
        Ok((pick.1, pick.2))
    }
}

/// Result of selecting hyperparameters on `train`, refitting and scoring on `test`.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub cv: CvOutcome,
    pub fit: FitResult,
    pub score: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_split(
    train: &MultitaskDataset,
    test: &MultitaskDataset,
    method: Method,
    loss: LossKind,
    grid: &[[f64; 2]],
    folds: usize,
    opts: &FitOptions,
    cv_seed: u64,
) -> Result<SplitOutcome> {
    let cv = cross_validate(train, method, loss, grid, folds, opts, cv_seed)?;
    let fit = method.fit(train, cv.gamma1, cv.gamma2, loss, opts)?;
    let score = score_model(&fit.alpha(), test, loss)?;
    Ok(SplitOutcome { cv, fit, score })
}

/// One `(dataset, method, fraction)` cell of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: Method,
    pub fraction: f64,
    /// Mean and sample standard deviation over the repeats that completed.
    pub mean: f64,
    pub std: f64,
    pub scores: Vec<f64>,
    pub selected_gammas: Vec<[f64; 2]>,
    pub failures: Vec<String>,
    /// Cross-validation and final fits of every repeat.
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metric: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn row(&self, dataset: &str, method: Method, fraction: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.dataset == dataset && r.method == method && r.fraction == fraction)
    }

    /// Appends the rows of `other`, which must report the same metric.
    pub fn merge(&mut self, other: ExperimentReport) -> Result<()> {
        if other.metric != self.metric {
            return Err(Error::invalid(format!("cannot merge {} and {} reports", self.metric, other.metric)));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    /// Summary table with header `dataset,method,fraction,mean,std`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "dataset",
            "method",
            "fraction",
            "mean",
            "std",
            "fits",
            "nonconverged_fits",
            "stalled_fits",
            "worst_trace_increase",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.dataset.clone(),
                r.method.to_string(),
                format_f64(r.fraction),
                format_f64(r.mean),
                format_f64(r.std),
                r.diagnostics.fits.to_string(),
                r.diagnostics.nonconverged.to_string(),
                r.diagnostics.stalled.to_string(),
                format_f64(r.diagnostics.worst_trace_increase),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Default)]
struct Cell {
    scores: Vec<f64>,
    gammas: Vec<[f64; 2]>,
    failures: Vec<String>,
    diagnostics: FitDiagnostics,
}

/// Repeated random splits of one dataset. Every method sees the same train/test
/// splits and the same CV folds, so differences between methods are paired.
/// A failed repeat is recorded in its cell and excluded from that cell's mean.
pub fn run_benchmark(
    name: &str,
    data: &MultitaskDataset,
    loss: LossKind,
    plan: &ExperimentPlan,
    opts: &FitOptions,
    seed: u64,
) -> Result<ExperimentReport> {
    plan.validate()?;
    opts.validate()?;
    if loss == LossKind::Logistic {
        data.ensure_labels()?;
    }
    let mut rows = Vec::new();
    for (fi, &fraction) in plan.train_fractions.iter().enumerate() {
        let mut cells: Vec<Cell> = vec![Cell::default(); plan.methods.len()];
        for rep in 0..plan.repeats {
            let split_seed = derive_seed(seed, &[fi as u64, rep as u64, 0]);
            let cv_seed = derive_seed(seed, &[fi as u64, rep as u64, 1]);
            let (train, test) = random_split(data, fraction, split_seed)?;
            for (mi, &method) in plan.methods.iter().enumerate() {
                let cell = &mut cells[mi];
                match evaluate_split(&train, &test, method, loss, &plan.gamma_grid, plan.cv_folds, opts, cv_seed) {
                    Ok(out) => {
                        cell.scores.push(out.score);
                        cell.gammas.push([out.cv.gamma1, out.cv.gamma2]);
                        cell.diagnostics.merge(&out.cv.diagnostics);
                        cell.diagnostics.record(&out.fit);
                    }
                    Err(e) => cell.failures.push(format!("repeat {rep}: {e}")),
                }
            }
        }
        for (method, cell) in plan.methods.iter().zip(cells) {
            let (mean, std) = mean_std(&cell.scores);
            rows.push(ReportRow {
                dataset: name.to_string(),
                method: *method,
                fraction,
                mean,
                std,
                scores: cell.scores,
                selected_gammas: cell.gammas,
                failures: cell.failures,
                diagnostics: cell.diagnostics,
            });
        }
    }
    Ok(ExperimentReport { metric: metric_name(loss).to_string(), seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_candidates() {
        let grid = gamma_grid(&[1.0, 2.0, 3.0]);
        assert_eq!(grid.len(), 9);
        assert_eq!(candidates(Method::Stl, &grid), vec![[1.0, 1.0], [2.0, 1.0], [3.0, 1.0]]);
        assert_eq!(candidates(Method::Mmtfl { p: 1, k: 1 }, &grid).len(), 9);
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn default_plan_is_valid() {
        let plan = ExperimentPlan::default();
        plan.validate().unwrap();
        assert_eq!(plan.gamma_grid.len(), 36);
        let mut bad = plan.clone();
        bad.train_fractions = vec![1.5];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_header() {
        let report = ExperimentReport {
            metric: "r2".into(),
            seed: 0,
            rows: vec![ReportRow {
                dataset: "D1".into(),
                method: Method::Stl,
                fraction: 0.5,
                mean: 0.8,
                std: 0.01,
                scores: vec![],
                selected_gammas: vec![],
                failures: vec![],
                diagnostics: FitDiagnostics { fits: 3, ..Default::default() },
            }],
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "dataset,method,fraction,mean,std,fits,nonconverged_fits,stalled_fits,worst_trace_increase\nD1,STL,0.5,0.8,0.01,3,0,0,0\n");
    }

    fn grid_score(g1: f64, g2: f64, score: f64, se: f64) -> GridScore {
        GridScore {
            gamma1: g1,
            gamma2: g2,
            score: Some(score),
            std_error: Some(se),
            failed_folds: 0,
            diagnostics: FitDiagnostics::default(),
        }
    }

    #[test]
    fn one_standard_error_prefers_stronger_regularization() {
        let method = Method::Mmtfl { p: 2, k: 1 };
        let mut cv = CvOutcome {
            method,
            gamma1: 10.0,
            gamma2: 10.0,
            score: 0.92,
            grid: vec![
                grid_score(10.0, 10.0, 0.92, 0.02),
                grid_score(100.0, 10.0, 0.91, 0.03),
                grid_score(100.0, 100.0, 0.80, 0.01),
                grid_score(1.0, 1.0, 0.85, 0.01),
            ],
            diagnostics: FitDiagnostics::default(),
        };
        assert_eq!(cv.one_standard_error().unwrap(), (100.0, 10.0));
        cv.grid[0].std_error = Some(0.0);
        assert_eq!(cv.one_standard_error().unwrap(), (10.0, 10.0));
    }
}
