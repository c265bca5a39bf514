//! Alternating minimization over the task-specific weights `B` and the
//! shared gates `c`.
//!
//! Each outer iteration solves the `T` per-task subproblems on the
//! column-scaled designs `X_t diag(c)`, forms `A = diag(c_old) B_new`, and
//! then resets `c` in closed form from the rows of `A`. The returned
//! decomposition is re-split as `B = diag(c)⁺ A` so that `A = diag(c) B`
//! holds for the final `c`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MultitaskDataset;
use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::objective::{data_loss_unchecked, matrix_row_power_sums, multiplicative_penalty, Decomposition};
use crate::regularizer::{RegularizerSpec, SigmaExponent};
use crate::solvers::{lasso_gram, ridge_gram, solve_subproblem, LeastSquaresGram, SolverOptions, SubproblemSolution};

/// Plain iterations before gate extrapolation starts, so that the support
/// found by the first passes settles.
const EXTRAPOLATE_AFTER: usize = 3;

/// Largest extrapolation multiple of a single step.
const MAX_OMEGA: f64 = 64.0;

/// Largest log-factor by which one proposal may move a gate.
const MAX_LOG_JUMP: f64 = 2.3;

/// Past gate maps kept for Anderson mixing.
const ANDERSON_MEMORY: usize = 10;

/// Proposes gates between plain iterations. Every proposal is checked by
/// the caller, which calls [`Extrapolation::reject`] when the pass that
/// used it raised the objective.
enum Extrapolation {
    PerGate(PerGate),
    Anderson(Anderson),
}

impl Extrapolation {
    /// Anderson mixing for a convex joint penalty, where the gate map is a
    /// smooth contraction near the solution; per-gate steps otherwise,
    /// where gates collapse to zero one at a time.
    fn for_spec(spec: &RegularizerSpec) -> Self {
        let (p, k) = (spec.pf(), spec.kf());
        if p * k / (p + k) >= 1.0 {
            Extrapolation::Anderson(Anderson::default())
        } else {
            Extrapolation::PerGate(PerGate { damping: 1.0, last_step: None })
        }
    }

    /// Records the map `c_used → c` and returns the gates to try next.
    fn propose(&mut self, c: &DVector<f64>, c_used: &DVector<f64>) -> DVector<f64> {
        match self {
            Extrapolation::PerGate(e) => e.propose(c, c_used),
            Extrapolation::Anderson(e) => e.propose(c, c_used),
        }
    }

    /// Records the map `c_used → c` without proposing anything.
    fn observe(&mut self, c: &DVector<f64>, c_used: &DVector<f64>) {
        match self {
            Extrapolation::PerGate(e) => e.last_step = Some(PerGate::log_step(c, c_used)),
            Extrapolation::Anderson(e) => e.record(c, c_used),
        }
    }

    fn accept(&mut self) {
        if let Extrapolation::PerGate(e) = self {
            e.damping = (2.0 * e.damping).min(1.0);
        }
    }

    fn reject(&mut self) {
        match self {
            Extrapolation::PerGate(e) => {
                e.damping *= 0.5;
                e.last_step = None;
            }
            Extrapolation::Anderson(e) => e.history.clear(),
        }
    }
}

/// Bounds a proposed gate to within a factor `e^MAX_LOG_JUMP` of `c`; zero
/// gates stay zero.
fn bounded_move(proposed: f64, c: f64) -> f64 {
    if !proposed.is_finite() {
        return c;
    }
    let factor = MAX_LOG_JUMP.exp();
    proposed.clamp(c / factor, c * factor)
}

/// Per-gate geometric extrapolation in log space. With `Δ_j` the log-ratio
/// of the gates a pass produced to the gates it solved with, a gate whose
/// successive steps shrink by `ρ_j = Δ_j / Δ_j^{prev}` has
/// `Δ_j ρ_j / (1 − ρ_j)` left to travel, so the proposal moves it by
/// `θ ω_j Δ_j` with `ω_j = ρ_j / (1 − ρ_j)` capped at [`MAX_OMEGA`]. Gates
/// heading to zero keep `ρ_j ≥ 1` and take the capped step. The damping `θ`
/// halves after a rejected trial and doubles, up to one, after an accepted one.
struct PerGate {
    damping: f64,
    last_step: Option<DVector<f64>>,
}

impl PerGate {
    fn log_step(c: &DVector<f64>, c_used: &DVector<f64>) -> DVector<f64> {
        c.zip_map(c_used, |now, before| if now > 0.0 && before > 0.0 { (now / before).ln() } else { 0.0 })
    }

    fn propose(&mut self, c: &DVector<f64>, c_used: &DVector<f64>) -> DVector<f64> {
        let step = Self::log_step(c, c_used);
        let proposal = match &self.last_step {
            Some(prev) => DVector::from_fn(c.len(), |j, _| {
                if step[j] == 0.0 || prev[j] == 0.0 || step[j].signum() != prev[j].signum() {
                    return c[j];
                }
                let rho = step[j] / prev[j];
                let omega = if rho >= 1.0 { MAX_OMEGA } else { (rho / (1.0 - rho)).min(MAX_OMEGA) };
                c[j] * (self.damping * omega * step[j]).clamp(-MAX_LOG_JUMP, MAX_LOG_JUMP).exp()
            }),
            None => c.clone(),
        };
        self.last_step = Some(step);
        proposal
    }
}

/// Anderson mixing on the gate map `G`: with residuals `f_i = G(x_i) − x_i`
/// over the last few maps, pick `γ` minimizing `||f_k − ΔF γ||` and propose
/// `G(x_k) − ΔG γ`.
#[derive(Default)]
struct Anderson {
    /// `(x_i, G(x_i))`, oldest first.
    history: std::collections::VecDeque<(DVector<f64>, DVector<f64>)>,
}

impl Anderson {
    fn record(&mut self, c: &DVector<f64>, c_used: &DVector<f64>) {
        self.history.push_back((c_used.clone(), c.clone()));
        if self.history.len() > ANDERSON_MEMORY + 1 {
            self.history.pop_front();
        }
    }

    fn propose(&mut self, c: &DVector<f64>, c_used: &DVector<f64>) -> DVector<f64> {
        self.record(c, c_used);
        let h = self.history.len();
        if h < 2 {
            return c.clone();
        }
        let residual = |i: usize| &self.history[i].1 - &self.history[i].0;
        let mut df = DMatrix::zeros(c.len(), h - 1);
        let mut dg = DMatrix::zeros(c.len(), h - 1);
        for i in 0..h - 1 {
            df.set_column(i, &(residual(i + 1) - residual(i)));
            dg.set_column(i, &(&self.history[i + 1].1 - &self.history[i].1));
        }
        let cutoff = 1e-12 * df.amax().max(f64::MIN_POSITIVE);
        let Ok(gamma) = df.svd(true, true).solve(&residual(h - 1), cutoff) else {
            return c.clone();
        };
        let mixed = c - dg * gamma;
        c.zip_map(&mixed, |now, proposed| bounded_move(proposed, now))
    }
}

/// Consecutive stalled iterations that end a fit. The objective flattens
/// quadratically in `Δα`, so a single stalled step comes well before the
/// parameter rule would fire.
const STALL_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Stop once `max |Δα| < epsilon` between outer iterations.
    pub epsilon: f64,
    pub max_outer_iters: usize,
    /// Stop when the objective changes by less than this relative amount on
    /// each of the last few iterations.
    pub objective_rel_tol: f64,
    pub solver_opts: SolverOptions,
    /// Starting gates; all ones when absent.
    pub initial_c: Option<Vec<f64>>,
    /// Try extrapolated gates between plain iterations, keeping them only
    /// when they lower the objective.
    pub extrapolate: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            epsilon: 1e-6,
            max_outer_iters: 500,
            objective_rel_tol: 1e-12,
            solver_opts: SolverOptions::default(),
            initial_c: None,
            extrapolate: true,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.objective_rel_tol >= 0.0) {
            return Err(Error::invalid("objective_rel_tol must be nonnegative"));
        }
        if let Some(c) = &self.initial_c {
            if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("initial_c entries must be finite and nonnegative"));
            }
        }
        self.solver_opts.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// `max |Δα| < epsilon`.
    ParameterChange,
    /// Relative objective change below `objective_rel_tol` for a sustained run.
    ObjectiveChange,
    MaxIterations,
    /// Zero outer iterations requested: one subproblem pass with `c` frozen.
    FrozenGates,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub decomposition: Decomposition,
    /// Multiplicative objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_delta: f64,
    pub termination: Termination,
    /// Subproblem solves that stopped before reaching their tolerance.
    pub inner_failures: usize,
    /// Largest subproblem residual reported across all solves.
    pub worst_kkt: f64,
}

impl FitResult {
    pub fn alpha(&self) -> DMatrix<f64> {
        self.decomposition.alpha()
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    /// Largest step-to-step rise of the objective trace, relative to
    /// `max(1, |J|)`; zero for a non-increasing trace.
    pub fn max_relative_increase(&self) -> f64 {
        self.objective_trace
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Column `j` of the result is `c_j` times column `j` of `x`.
pub fn scale_features(x: &DMatrix<f64>, c: &DVector<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != c.len() {
        return Err(Error::dims(format!("X has {} columns, c has {} entries", x.ncols(), c.len())));
    }
    if let Some(j) = c.iter().position(|&v| v < 0.0) {
        return Err(Error::invalid(format!("c[{j}] is negative")));
    }
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= c[j];
    }
    Ok(out)
}

/// Optimal `σ` of the variational problem for fixed `A`:
/// `σ_j = γ1^{1−p/(2kq)} γ2^{p/(2kq)−1} (Σ_t |α_j^t|^p)^{1/(2q)}`.
pub fn update_sigma(a: &DMatrix<f64>, spec: &RegularizerSpec) -> DVector<f64> {
    update_sigma_with(a, spec, SigmaExponent::Derived)
}

/// [`update_sigma`] with a selectable `γ2` exponent.
pub fn update_sigma_with(a: &DMatrix<f64>, spec: &RegularizerSpec, exponent: SigmaExponent) -> DVector<f64> {
    let (p, k, q) = (spec.pf(), spec.kf(), spec.q());
    let scale = spec.gamma1().powf(1.0 - p / (2.0 * k * q))
        * spec.gamma2().powf(exponent.gamma2_exponent(p, k, q));
    DVector::from_iterator(
        a.nrows(),
        matrix_row_power_sums(a, p)
            .into_iter()
            .map(|s| scale * s.powf(1.0 / (2.0 * q))),
    )
}

/// `c_j = σ_j^{1/k}`.
pub fn sigma_to_c(sigma: &DVector<f64>, k: u8) -> Result<DVector<f64>> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if let Some(j) = sigma.iter().position(|&s| !(s >= 0.0)) {
        return Err(Error::invalid(format!("sigma[{j}] = {} is negative", sigma[j])));
    }
    let inv = 1.0 / k as f64;
    Ok(sigma.map(|s| match k {
        1 => s,
        2 => s.sqrt(),
        _ => s.powf(inv),
    }))
}

/// Closed-form optimal gates in terms of the task-specific rows:
/// `c_j = (γ1/γ2)^{1/k} (Σ_t |β_j^t|^p)^{1/(2kq−p)}`.
pub fn closed_form_c_from_b(b: &DMatrix<f64>, spec: &RegularizerSpec) -> DVector<f64> {
    let (p, k, q) = (spec.pf(), spec.kf(), spec.q());
    let ratio = (spec.gamma1() / spec.gamma2()).powf(1.0 / k);
    let expo = 1.0 / (2.0 * k * q - p);
    DVector::from_iterator(
        b.nrows(),
        matrix_row_power_sums(b, p)
            .into_iter()
            .map(|s| ratio * s.powf(expo)),
    )
}

/// Per-task data prepared once per fit.
enum TaskSystem<'a> {
    Gram(LeastSquaresGram),
    Raw { x: &'a DMatrix<f64>, y: &'a DVector<f64> },
}

impl TaskSystem<'_> {
    fn solve(
        &self,
        c: &DVector<f64>,
        spec: &RegularizerSpec,
        opts: &SolverOptions,
        warm: &DVector<f64>,
    ) -> Result<SubproblemSolution> {
        let gamma = spec.subproblem_weight();
        match self {
            TaskSystem::Gram(gram) => {
                let scaled = gram.scaled(c);
                Ok(match spec.p() {
                    2 => ridge_gram(&scaled, gamma),
                    _ => lasso_gram(&scaled, gamma, opts, Some(warm)),
                })
            }
            TaskSystem::Raw { x, y } => {
                let xs = scale_features(x, c)?;
                solve_subproblem(&xs, y, spec.loss(), spec.p(), gamma, opts, Some(warm))
            }
        }
    }
}

struct Sweep {
    b: DMatrix<f64>,
    failures: usize,
    worst_kkt: f64,
}

fn solve_all(
    systems: &[TaskSystem<'_>],
    c: &DVector<f64>,
    warm: &DMatrix<f64>,
    spec: &RegularizerSpec,
    opts: &SolverOptions,
) -> Result<Sweep> {
    let solutions = systems
        .par_iter()
        .enumerate()
        .map(|(t, sys)| sys.solve(c, spec, opts, &warm.column(t).into_owned()))
        .collect::<Result<Vec<_>>>()?;
    let mut b = DMatrix::zeros(c.len(), systems.len());
    let mut failures = 0;
    let mut worst_kkt: f64 = 0.0;
    for (t, sol) in solutions.into_iter().enumerate() {
        if !sol.converged {
            failures += 1;
        }
        worst_kkt = worst_kkt.max(sol.kkt);
        b.set_column(t, &sol.beta);
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("subproblem produced non-finite weights".into()));
    }
    Ok(Sweep { b, failures, worst_kkt })
}

fn scale_rows(b: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let mut a = b.clone();
    for (j, mut row) in a.row_iter_mut().enumerate() {
        row *= c[j];
    }
    a
}

fn objective_at(dec: &Decomposition, data: &MultitaskDataset, spec: &RegularizerSpec) -> f64 {
    data_loss_unchecked(&dec.alpha(), data, spec.loss()) + multiplicative_penalty(dec, spec)
}

/// Fits the multiplicative model by alternating minimization.
///
/// With `max_outer_iters = 0` the gates stay at their initial value and a
/// single pass of per-task fits is returned, which is single-task learning
/// when the gates start at one.
pub fn fit(data: &MultitaskDataset, spec: &RegularizerSpec, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    if spec.loss() == LossKind::Logistic {
        data.ensure_labels()?;
    }
    let d = data.n_features();
    let n_tasks = data.n_tasks();
    let mut c = match &opts.initial_c {
        Some(init) if init.len() != d => {
            return Err(Error::dims(format!("initial_c has {} entries, expected {d}", init.len())))
        }
        Some(init) => DVector::from_column_slice(init),
        None => DVector::from_element(d, 1.0),
    };

    let systems: Vec<TaskSystem<'_>> = data
        .tasks()
        .iter()
        .map(|task| match spec.loss() {
            LossKind::LeastSquares => TaskSystem::Gram(LeastSquaresGram::new(&task.x, &task.y)),
            LossKind::Logistic => TaskSystem::Raw { x: &task.x, y: &task.y },
        })
        .collect();

    let mut warm = DMatrix::zeros(d, n_tasks);
    let mut inner_failures = 0;
    let mut worst_kkt: f64 = 0.0;

    if opts.max_outer_iters == 0 {
        let sweep = solve_all(&systems, &c, &warm, spec, &opts.solver_opts)?;
        let dec = Decomposition::new(c, sweep.b)?;
        let objective = objective_at(&dec, data, spec);
        return Ok(FitResult {
            max_delta: dec.alpha().amax(),
            decomposition: dec,
            objective_trace: vec![objective],
            iterations: 0,
            converged: sweep.failures == 0,
            termination: Termination::FrozenGates,
            inner_failures: sweep.failures,
            worst_kkt: sweep.worst_kkt,
        });
    }

    let mut alpha_prev = DMatrix::<f64>::zeros(d, n_tasks);
    let mut trace = Vec::with_capacity(opts.max_outer_iters.min(1024));
    let mut best: Option<(f64, Decomposition, f64)> = None;
    let mut last: Option<(Decomposition, f64)> = None;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut stall_run = 0;
    let mut extrapolation = Extrapolation::for_spec(spec);
    let mut accepted_c: Option<DVector<f64>> = None;
    let mut trial = false;

    while iterations < opts.max_outer_iters {
        iterations += 1;
        let sweep = solve_all(&systems, &c, &warm, spec, &opts.solver_opts)?;
        inner_failures += sweep.failures;
        worst_kkt = worst_kkt.max(sweep.worst_kkt);

        let alpha = scale_rows(&sweep.b, &c);
        let c_new = sigma_to_c(&update_sigma(&alpha, spec), spec.k())?;
        let dec = Decomposition::from_alpha(c_new.clone(), &alpha)?;
        let objective = objective_at(&dec, data, spec);

        let previous = trace.last().copied();
        if trial && previous.is_some_and(|prev| objective > prev) {
            // The extrapolated gates did worse than the plain step would
            // have; restart from the last accepted iterate.
            extrapolation.reject();
            trial = false;
            let (accepted, _) = last.as_ref().expect("a trial follows an accepted iterate");
            c = accepted_c.clone().expect("a trial follows an accepted iterate");
            warm = accepted.b().clone();
            continue;
        }
        if trial {
            extrapolation.accept();
        }

        let delta = (&alpha - &alpha_prev).amax();
        trace.push(objective);
        alpha_prev = alpha;
        accepted_c = Some(c_new.clone());
        if best.as_ref().is_none_or(|(v, _, _)| objective < *v) {
            best = Some((objective, dec.clone(), delta));
        }

        let stalled = previous
            .is_some_and(|prev| (prev - objective).abs() < opts.objective_rel_tol * objective.abs().max(1.0));
        stall_run = if stalled { stall_run + 1 } else { 0 };
        let done = if delta < opts.epsilon {
            Some(Termination::ParameterChange)
        } else if stall_run >= STALL_ITERS {
            Some(Termination::ObjectiveChange)
        } else {
            None
        };

        trial = opts.extrapolate && done.is_none() && trace.len() > EXTRAPOLATE_AFTER;
        c = if trial {
            extrapolation.propose(&c_new, &c)
        } else {
            extrapolation.observe(&c_new, &c);
            c_new
        };
        warm = Decomposition::from_alpha(c.clone(), &alpha_prev)?.b().clone();
        last = Some((dec, delta));

        if let Some(reason) = done {
            termination = reason;
            break;
        }
    }

    let converged = termination != Termination::MaxIterations;
    let (decomposition, max_delta) = if converged {
        last.expect("at least one iteration ran")
    } else {
        let (_, dec, delta) = best.expect("at least one iteration ran");
        (dec, delta)
    };
    Ok(FitResult {
        decomposition,
        objective_trace: trace,
        iterations,
        converged,
        max_delta,
        termination,
        inner_failures,
        worst_kkt,
    })
}

/// Single-task baseline: per-task fits with all gates frozen at one.
pub fn fit_single_task(data: &MultitaskDataset, spec: &RegularizerSpec, opts: &FitOptions) -> Result<FitResult> {
    let frozen = FitOptions {
        max_outer_iters: 0,
        initial_c: None,
        ..opts.clone()
    };
    fit(data, spec, &frozen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(p: u8, k: u8, g1: f64, g2: f64) -> RegularizerSpec {
        RegularizerSpec::least_squares(p, k, g1, g2).unwrap()
    }

    #[test]
    fn scale_features_examples() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 5.0, 3.0]);
        assert_eq!(scale_features(&x, &DVector::from_element(3, 1.0)).unwrap(), x);
        assert_eq!(scale_features(&x, &DVector::zeros(3)).unwrap(), DMatrix::zeros(1, 3));
        let scaled = scale_features(&x, &DVector::from_vec(vec![2.0, 0.0, 1.0])).unwrap();
        assert_eq!(scaled.as_slice(), &[2.0, 0.0, 3.0]);
        assert!(scale_features(&x, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn update_sigma_examples() {
        let a = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert_relative_eq!(update_sigma(&a, &spec(2, 2, 1.0, 1.0))[0], 5.0, epsilon = 1e-14);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        assert_relative_eq!(update_sigma(&a, &spec(1, 1, 1.0, 1.0))[0], 2.0, epsilon = 1e-14);
        // Σα² = 8 with (p, k) = (2, 1), γ1 = 8, γ2 = 1.
        let a = DMatrix::from_row_slice(1, 2, &[2.0, 2.0]);
        assert_relative_eq!(update_sigma(&a, &spec(2, 1, 8.0, 1.0))[0], 4.0, epsilon = 1e-13);
        let zero = DMatrix::zeros(2, 3);
        assert_eq!(update_sigma(&zero, &spec(1, 2, 0.3, 7.0)), DVector::zeros(2));
    }

    #[test]
    fn update_sigma_matches_brute_force_minimization() {
        // σ ↦ μ1 S^{1/q}/σ + μ2 σ minimized by a dense scan.
        let s = spec(2, 1, 8.0, 1.0);
        let (mu1, mu2) = s.variational_weights();
        let row_sum: f64 = 8.0;
        let f = |sig: f64| mu1 * row_sum.powf(1.0 / s.q()) / sig + mu2 * sig;
        let (mut best, mut best_val) = (0.0, f64::INFINITY);
        for i in 1..=400_000 {
            let sig = i as f64 * 2e-5;
            if f(sig) < best_val {
                best_val = f(sig);
                best = sig;
            }
        }
        assert_relative_eq!(best, 4.0, epsilon = 1e-4);
    }

    #[test]
    fn sigma_to_c_examples() {
        let sigma = DVector::from_vec(vec![4.0, 0.0]);
        assert_eq!(sigma_to_c(&sigma, 2).unwrap().as_slice(), &[2.0, 0.0]);
        assert_eq!(sigma_to_c(&sigma, 1).unwrap().as_slice(), &[4.0, 0.0]);
        assert!(sigma_to_c(&DVector::from_element(1, -1.0), 2).is_err());
    }

    #[test]
    fn closed_form_c_table_cells() {
        let b = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        assert_relative_eq!(closed_form_c_from_b(&b, &spec(2, 2, 1.0, 1.0))[0], 5.0, epsilon = 1e-14);
        let b = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 3.0]);
        assert_relative_eq!(closed_form_c_from_b(&b, &spec(1, 1, 2.0, 1.0))[0], 12.0, epsilon = 1e-13);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert_relative_eq!(closed_form_c_from_b(&b, &spec(2, 1, 1.0, 2.0))[0], 2.5, epsilon = 1e-14);
        // (1, 2): √(γ1/γ2) √(Σ|β|)
        let b = DMatrix::from_row_slice(1, 2, &[1.0, -3.0]);
        assert_relative_eq!(closed_form_c_from_b(&b, &spec(1, 2, 2.0, 8.0))[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn options_validation() {
        assert!(FitOptions { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(FitOptions { initial_c: Some(vec![1.0, -1.0]), ..Default::default() }.validate().is_err());
        let parsed: FitOptions = serde_json::from_str(r#"{"epsilon": 1e-5}"#).unwrap();
        assert_eq!(parsed.max_outer_iters, 500);
        assert!(serde_json::from_str::<FitOptions>(r#"{"eps": 1e-5}"#).is_err());
    }

    #[test]
    fn anderson_solves_a_coupled_linear_map() {
        // G(x) = M x + b contracts slowly (spectral radius 0.95) to x* = (1, 2, 3).
        let m = DMatrix::from_row_slice(3, 3, &[0.9, 0.05, 0.0, 0.05, 0.9, 0.0, 0.0, 0.0, 0.5]);
        let target = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = &target - &m * &target;
        let mut anderson = Anderson::default();
        let mut x = DVector::from_element(3, 1.5);
        for _ in 0..6 {
            let gx = &m * &x + &b;
            x = anderson.propose(&gx, &x);
        }
        assert!((&x - &target).amax() < 1e-8, "{x}");
    }

    #[test]
    fn per_gate_steps_toward_the_limit_of_a_geometric_sequence() {
        // Log-steps -1, -0.5 leave -0.5 to travel.
        let mut e = PerGate { damping: 1.0, last_step: None };
        let c0 = DVector::from_vec(vec![1.0, 0.0]);
        let c1 = c0.map(|v| v * (-1f64).exp());
        let c2 = c1.map(|v| v * (-0.5f64).exp());
        e.propose(&c1, &c0);
        let next = e.propose(&c2, &c1);
        assert!((next[0] - (-2f64).exp()).abs() < 1e-12);
        assert_eq!(next[1], 0.0);
    }

    #[test]
    fn extrapolation_choice_follows_convexity() {
        assert!(matches!(Extrapolation::for_spec(&spec(2, 2, 1.0, 1.0)), Extrapolation::Anderson(_)));
        for (p, k) in [(1, 1), (2, 1), (1, 2)] {
            assert!(matches!(Extrapolation::for_spec(&spec(p, k, 1.0, 1.0)), Extrapolation::PerGate(_)));
        }
    }
}
