//! Numerical certificates for the equivalences between the multiplicative,
//! joint and variational forms, and for the closed-form gate update.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{MultitaskDataset, TaskData};
use crate::error::{Error, Result};
use crate::eval::derive_seed;
use crate::objective::{
    joint_objective, joint_penalty, multiplicative_objective, optimal_sigma, row_power_sum, variational_penalty,
    Decomposition,
};
use crate::optimizer::{closed_form_c_from_b, fit, sigma_to_c, update_sigma_with, FitOptions, FitResult};
use crate::regularizer::{RegularizerSpec, SigmaExponent};

/// Slack for algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-10;
/// Slack for identities evaluated at a fitted point.
pub const FIT_TOL: f64 = 1e-6;
/// Agreement required between a closed form and the grid oracle.
pub const ORACLE_TOL: f64 = 1e-3;

const CELLS: [(u8, u8); 4] = [(2, 2), (1, 1), (2, 1), (1, 2)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst_residual: f64,
    pub trials: usize,
    /// Offending inputs, capped to a few entries.
    pub details: Vec<String>,
}

impl CheckResult {
    fn new(name: impl Into<String>) -> Self {
        CheckResult { name: name.into(), passed: true, worst_residual: 0.0, trials: 0, details: Vec::new() }
    }

    fn record(&mut self, residual: f64, limit: f64, detail: impl FnOnce() -> String) {
        self.trials += 1;
        if residual.is_nan() || residual > self.worst_residual {
            self.worst_residual = residual;
        }
        if !(residual <= limit) {
            self.passed = false;
            if self.details.len() < 10 {
                self.details.push(detail());
            }
        }
    }

    fn fail(&mut self, detail: String) {
        self.passed = false;
        self.worst_residual = f64::INFINITY;
        if self.details.len() < 10 {
            self.details.push(detail);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub sigma_exponent: SigmaExponent,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random `σ` draws per cell for the variational lower bound.
    pub sigma_trials: usize,
    /// Random draws per cell for the closed-form gate checks.
    pub oracle_draws: usize,
    /// Small fitted problems for the equivalence check, spread over the cells.
    pub equivalence_problems: usize,
    pub sigma_exponent: SigmaExponent,
    pub fit: FitOptions,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            sigma_trials: 1000,
            oracle_draws: 100,
            equivalence_problems: 20,
            sigma_exponent: SigmaExponent::Derived,
            fit: FitOptions::default(),
        }
    }
}

/// Search interval and resolution for [`brute_force_c_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGrid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

/// `h(c) = w_β γ1 S c^{−p} + w_c γ2 c^k` with `S = Σ_t |a^t|^p`: the
/// multiplicative penalty of one feature as a function of its gate, with the
/// row `a` of `A` held fixed and `β = a / c`.
fn gate_penalty(s: f64, c: f64, spec: &RegularizerSpec) -> f64 {
    let (wb, wc) = spec.penalty_weights();
    wb * spec.gamma1() * s * c.powf(-spec.pf()) + wc * spec.gamma2() * c.powf(spec.kf())
}

/// Grid covering `[0, 2·max(reference, bracket)]`, where `bracket` is the
/// first power of two past which the gate penalty increases.
pub fn default_oracle_grid(a_row: &[f64], spec: &RegularizerSpec, reference: f64) -> OracleGrid {
    let s = row_power_sum(a_row.iter().copied(), spec.pf());
    let mut bracket: f64 = 1.0;
    if s > 0.0 {
        while bracket < 1e150 && gate_penalty(s, 2.0 * bracket, spec) < gate_penalty(s, bracket, spec) {
            bracket *= 2.0;
        }
        bracket *= 2.0;
    }
    let reference = if reference.is_finite() { reference } else { 0.0 };
    OracleGrid { lo: 0.0, hi: 2.0 * bracket.max(reference), steps: 4000 }
}

/// Minimizer over `c_j ≥ 0` of the gate penalty for a fixed row of `A`, by
/// dense grid search followed by golden-section refinement. A zero row gives 0.
pub fn brute_force_c_oracle(a_row: &[f64], spec: &RegularizerSpec, grid: OracleGrid) -> Result<f64> {
    if !(grid.lo >= 0.0 && grid.hi > grid.lo && grid.steps >= 2) {
        return Err(Error::invalid("oracle grid must satisfy 0 ≤ lo < hi with at least 2 steps"));
    }
    let s = row_power_sum(a_row.iter().copied(), spec.pf());
    if s == 0.0 {
        return Ok(0.0);
    }
    let h = |c: f64| if c > 0.0 { gate_penalty(s, c, spec) } else { f64::INFINITY };
    let width = (grid.hi - grid.lo) / grid.steps as f64;
    let point = |i: usize| grid.lo + width * i as f64;
    let best = (0..=grid.steps)
        .min_by(|&i, &j| h(point(i)).total_cmp(&h(point(j))))
        .expect("grid is non-empty");
    if best == grid.steps {
        return Err(Error::invalid(format!(
            "oracle minimum lies at the upper grid edge {}; widen the grid",
            grid.hi
        )));
    }
    let (mut a, mut b) = (point(best.saturating_sub(1)), point(best + 1));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (h(x1), h(x2));
    while b - a > 1e-12 * (1.0 + b.abs()) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = h(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = h(x2);
        }
    }
    Ok(0.5 * (a + b))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn random_spec(rng: &mut ChaCha8Rng, p: u8, k: u8) -> Result<RegularizerSpec> {
    let g1 = log_uniform(rng, 1e-2, 1e2);
    let g2 = log_uniform(rng, 1e-2, 1e2);
    RegularizerSpec::least_squares(p, k, g1, g2)
}

fn cell_name(prefix: &str, p: u8, k: u8) -> String {
    format!("{prefix}(p={p},k={k})")
}

/// The variational penalty dominates the joint penalty with `λ = 2√(μ1μ2)`
/// for every positive `σ`, with equality at the optimal `σ`.
pub fn check_cauchy_schwarz_bound(a: &DMatrix<f64>, spec: &RegularizerSpec, trials: usize, seed: u64) -> Result<CheckResult> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let (p, q) = (spec.pf(), spec.q());
    let (mu1, mu2) = spec.variational_weights();
    let lambda = 2.0 * (mu1 * mu2).sqrt();
    let joint = joint_penalty(a, p, q, lambda);
    let scale = joint.abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = CheckResult::new(cell_name("variational_bound", spec.p(), spec.k()));

    let lambda_gap = (lambda - spec.lambda()).abs() / spec.lambda();
    check.record(lambda_gap, ALGEBRAIC_TOL, || format!("λ = {} but 2√(μ1μ2) = {lambda}", spec.lambda()));

    for _ in 0..trials {
        let sigma = DVector::from_fn(a.nrows(), |_, _| log_uniform(&mut rng, 1e-3, 1e3));
        let variational = variational_penalty(a, &sigma, p, q, mu1, mu2)?;
        let shortfall = (joint - variational) / scale;
        check.record(shortfall.max(0.0), ALGEBRAIC_TOL, || {
            format!("σ = {:?} gives {variational} < {joint}", sigma.as_slice())
        });
    }
    let star = optimal_sigma(a, p, q, mu1, mu2);
    if star.iter().all(|s| *s > 0.0) {
        let at_star = variational_penalty(a, &star, p, q, mu1, mu2)?;
        check.record((at_star - joint).abs() / scale, ALGEBRAIC_TOL, || {
            format!("at the optimal σ the variational penalty is {at_star}, joint {joint}")
        });
    }
    Ok(check)
}

/// At a fitted decomposition the multiplicative and joint objectives agree,
/// and no ±1% change of a single gate (with `B` fixed) lowers the
/// multiplicative objective.
pub fn check_theorem1_equivalence(fit: &FitResult, data: &MultitaskDataset, spec: &RegularizerSpec) -> Result<CheckResult> {
    let mut check = CheckResult::new(cell_name("objective_equivalence", spec.p(), spec.k()));
    if !fit.converged {
        check.fail(format!("fit did not converge ({:?})", fit.termination));
        return Ok(check);
    }
    equivalence_at(&fit.decomposition, data, spec, &mut check)?;
    Ok(check)
}

fn equivalence_at(dec: &Decomposition, data: &MultitaskDataset, spec: &RegularizerSpec, check: &mut CheckResult) -> Result<()> {
    let j1 = multiplicative_objective(dec, data, spec)?;
    let j2 = joint_objective(&dec.alpha(), data, spec)?;
    let scale = j2.abs().max(1.0);
    check.record((j1 - j2).abs() / scale, FIT_TOL, || format!("multiplicative {j1} vs joint {j2}"));

    let c = dec.c();
    for j in (0..c.len()).filter(|&j| c[j] > 0.0) {
        for factor in [0.99, 1.01] {
            let mut perturbed = c.clone();
            perturbed[j] *= factor;
            let moved = Decomposition::new(perturbed, dec.b().clone())?;
            let value = multiplicative_objective(&moved, data, spec)?;
            let gain = (j1 - value) / scale;
            check.record(gain.max(0.0), FIT_TOL, || format!("scaling c[{j}] by {factor} lowers the objective to {value}"));
        }
    }
    Ok(())
}

/// Gates from `B` by the closed form agree with the oracle applied to the
/// rows of `A = diag(c) B`.
pub fn check_closed_form_c(p: u8, k: u8, draws: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = CheckResult::new(cell_name("closed_form_gates", p, k));
    for draw in 0..draws {
        let spec = random_spec(&mut rng, p, k)?;
        let b = random_matrix(&mut rng, 20, 5);
        let c = closed_form_c_from_b(&b, &spec);
        let a = Decomposition::new(c.clone(), b)?.alpha();
        for j in 0..a.nrows() {
            let row: Vec<f64> = a.row(j).iter().copied().collect();
            let oracle = brute_force_c_oracle(&row, &spec, default_oracle_grid(&row, &spec, c[j]))?;
            check.record((oracle - c[j]).abs(), ORACLE_TOL, || {
                format!("draw {draw}, feature {j}: closed form {} vs oracle {oracle}", c[j])
            });
        }
    }
    Ok(check)
}

/// The gate update `c = σ^{1/k}` computed from `A` with the chosen `γ2`
/// exponent agrees with the oracle.
pub fn check_sigma_update(p: u8, k: u8, draws: usize, exponent: SigmaExponent, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = CheckResult::new(cell_name("sigma_update", p, k));
    for draw in 0..draws {
        let spec = random_spec(&mut rng, p, k)?;
        let a = random_matrix(&mut rng, 20, 5);
        let c = sigma_to_c(&update_sigma_with(&a, &spec, exponent), k)?;
        for j in 0..a.nrows() {
            let row: Vec<f64> = a.row(j).iter().copied().collect();
            let oracle = brute_force_c_oracle(&row, &spec, default_oracle_grid(&row, &spec, c[j]))?;
            check.record((oracle - c[j]).abs(), ORACLE_TOL, || {
                format!(
                    "draw {draw}, feature {j} (γ1 = {}, γ2 = {}): update {} vs oracle {oracle}",
                    spec.gamma1(),
                    spec.gamma2(),
                    c[j]
                )
            });
        }
    }
    Ok(check)
}

/// A small least-squares problem with half of the rows of `A` zero.
fn small_problem(rng: &mut ChaCha8Rng, d: usize, tasks: usize, n: usize) -> Result<MultitaskDataset> {
    let keep: Vec<bool> = (0..d).map(|j| j % 2 == 0).collect();
    let alpha = DMatrix::from_fn(d, tasks, |j, _| {
        if keep[j] {
            let v: f64 = StandardNormal.sample(rng);
            2.0 * v
        } else {
            0.0
        }
    });
    let tasks = (0..tasks)
        .map(|t| {
            let x = random_matrix(rng, n, d);
            let noise = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            let y = &x * alpha.column(t) + noise;
            TaskData::new(format!("task_{:03}", t + 1), x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    MultitaskDataset::new(tasks)
}

pub fn run_suite(config: &VerifyConfig) -> Result<VerificationReport> {
    config.fit.validate()?;
    let mut checks = Vec::new();
    for (cell, &(p, k)) in CELLS.iter().enumerate() {
        let tag = cell as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0, tag]));
        let spec = random_spec(&mut rng, p, k)?;
        let a = random_matrix(&mut rng, 20, 5);
        checks.push(check_cauchy_schwarz_bound(&a, &spec, config.sigma_trials, derive_seed(config.seed, &[1, tag]))?);
        checks.push(check_closed_form_c(p, k, config.oracle_draws, derive_seed(config.seed, &[2, tag]))?);
        checks.push(check_sigma_update(
            p,
            k,
            config.oracle_draws,
            config.sigma_exponent,
            derive_seed(config.seed, &[3, tag]),
        )?);
    }

    for (cell, &(p, k)) in CELLS.iter().enumerate() {
        let mut check = CheckResult::new(cell_name("objective_equivalence", p, k));
        let problems = (cell..config.equivalence_problems).step_by(CELLS.len());
        for problem in problems {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[4, problem as u64]));
            let data = small_problem(&mut rng, 15, 4, 50)?;
            let spec = RegularizerSpec::least_squares(p, k, log_uniform(&mut rng, 0.1, 10.0), log_uniform(&mut rng, 0.1, 10.0))?;
            let result = fit(&data, &spec, &config.fit)?;
            if !result.converged {
                check.fail(format!("problem {problem}: fit did not converge ({:?})", result.termination));
                continue;
            }
            equivalence_at(&result.decomposition, &data, &spec, &mut check)?;
        }
        checks.push(check);
    }

    Ok(VerificationReport {
        seed: config.seed,
        sigma_exponent: config.sigma_exponent,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(p: u8, k: u8, g1: f64, g2: f64) -> RegularizerSpec {
        RegularizerSpec::least_squares(p, k, g1, g2).unwrap()
    }

    #[test]
    fn oracle_three_four_row() {
        // 25 c^{-2} + c^2 is minimized at c = √5.
        let s = spec(2, 2, 1.0, 1.0);
        let row = [3.0, 4.0];
        let c = brute_force_c_oracle(&row, &s, default_oracle_grid(&row, &s, 0.0)).unwrap();
        assert_relative_eq!(c, 5f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn oracle_zero_row_and_edge() {
        let s = spec(1, 2, 1.0, 1.0);
        let grid = OracleGrid { lo: 0.0, hi: 1.0, steps: 100 };
        assert_eq!(brute_force_c_oracle(&[0.0, 0.0], &s, grid).unwrap(), 0.0);
        assert!(brute_force_c_oracle(&[100.0], &s, grid).is_err());
    }

    #[test]
    fn bound_holds_for_zero_matrix_at_every_sigma() {
        let s = spec(2, 1, 0.5, 2.0);
        let check = check_cauchy_schwarz_bound(&DMatrix::zeros(3, 2), &s, 50, 1).unwrap();
        assert!(check.passed);
        assert_eq!(check.trials, 51);
    }

    #[test]
    fn corrupted_gate_fails_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = small_problem(&mut rng, 6, 2, 30).unwrap();
        let s = spec(2, 2, 1.0, 1.0);
        let result = fit(&data, &s, &FitOptions::default()).unwrap();
        assert!(check_theorem1_equivalence(&result, &data, &s).unwrap().passed);

        let j = (0..6).find(|&j| result.decomposition.c()[j] > 0.0).unwrap();
        let mut c = result.decomposition.c().clone();
        c[j] *= 2.0;
        let bad = Decomposition::new(c, result.decomposition.b().clone()).unwrap();
        let mut check = CheckResult::new("corrupted");
        equivalence_at(&bad, &data, &s, &mut check).unwrap();
        assert!(!check.passed);
    }

    #[test]
    fn typeset_exponent_disagrees_unless_gamma2_is_one() {
        let derived = check_sigma_update(2, 2, 5, SigmaExponent::Derived, 4).unwrap();
        assert!(derived.passed, "{:?}", derived.details);
        let typeset = check_sigma_update(2, 2, 5, SigmaExponent::Typeset, 4).unwrap();
        assert!(!typeset.passed);
    }

    #[test]
    fn small_suite_passes_and_is_reproducible() {
        let config = VerifyConfig { seed: 5, sigma_trials: 20, oracle_draws: 3, equivalence_problems: 4, ..Default::default() };
        let a = run_suite(&config).unwrap();
        assert!(a.passed, "{:#?}", a.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        assert_eq!(a, run_suite(&config).unwrap());
        assert_eq!(a.checks.len(), 16);
    }
}
