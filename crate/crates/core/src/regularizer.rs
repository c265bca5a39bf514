//! Regularizer configuration `(p, k, γ1, γ2)` and its correspondence with
//! the joint row-penalty form `(q, λ)` and the variational form `(μ1, μ2)`.
//!
//! The multiplicative objective is
//!
//! ```text
//! Σ_t L(diag(c) β_t) + w_β γ1 Σ_t ||β_t||_p^p + w_c γ2 ||c||_k^k
//! ```
//!
//! with balancing weights `w_β = 2k/(p+k)` and `w_c = 2p/(p+k)`. Both are 1
//! when `p = k`. With them the closed-form shared component
//! `c_j = (γ1/γ2)^{1/k} (Σ_t |β_j^t|^p)^{1/k}` is the exact minimizer along
//! every row, and the joint weight is `λ = 2 √(γ1^{2−p/(kq)} γ2^{p/(kq)})`
//! with `q = (k+p)/(2k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossKind;

/// Which `γ2` exponent to use in the closed-form `σ` update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaExponent {
    /// `p/(2kq) − 1`, obtained by substituting `μ1, μ2` into the optimal `σ`.
    #[default]
    Derived,
    /// `1/2 − p/(2kp)`, a misprinted variant. Kept only to show that it
    /// disagrees with the brute-force oracle.
    Typeset,
}

impl SigmaExponent {
    pub fn gamma2_exponent(self, p: f64, k: f64, q: f64) -> f64 {
        match self {
            SigmaExponent::Derived => p / (2.0 * k * q) - 1.0,
            SigmaExponent::Typeset => 0.5 - p / (2.0 * k * p),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    p: u8,
    k: u8,
    gamma1: f64,
    gamma2: f64,
    #[serde(default = "default_loss")]
    loss: LossKind,
}

fn default_loss() -> LossKind {
    LossKind::LeastSquares
}

/// Validated `(p, k, γ1, γ2, loss)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct RegularizerSpec {
    p: u8,
    k: u8,
    gamma1: f64,
    gamma2: f64,
    loss: LossKind,
}

impl TryFrom<RawSpec> for RegularizerSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        RegularizerSpec::new(raw.p, raw.k, raw.gamma1, raw.gamma2, raw.loss)
    }
}

impl From<RegularizerSpec> for RawSpec {
    fn from(s: RegularizerSpec) -> Self {
        RawSpec {
            p: s.p,
            k: s.k,
            gamma1: s.gamma1,
            gamma2: s.gamma2,
            loss: s.loss,
        }
    }
}

fn check_exponent(name: &str, v: u8) -> Result<()> {
    if v == 1 || v == 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be 1 or 2, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RegularizerSpec {
    pub fn new(p: u8, k: u8, gamma1: f64, gamma2: f64, loss: LossKind) -> Result<Self> {
        check_exponent("p", p)?;
        check_exponent("k", k)?;
        check_positive("gamma1", gamma1)?;
        check_positive("gamma2", gamma2)?;
        Ok(RegularizerSpec {
            p,
            k,
            gamma1,
            gamma2,
            loss,
        })
    }

    pub fn least_squares(p: u8, k: u8, gamma1: f64, gamma2: f64) -> Result<Self> {
        Self::new(p, k, gamma1, gamma2, LossKind::LeastSquares)
    }

    pub fn with_gammas(&self, gamma1: f64, gamma2: f64) -> Result<Self> {
        Self::new(self.p, self.k, gamma1, gamma2, self.loss)
    }

    pub fn p(&self) -> u8 {
        self.p
    }

    pub fn k(&self) -> u8 {
        self.k
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub(crate) fn pf(&self) -> f64 {
        self.p as f64
    }

    pub(crate) fn kf(&self) -> f64 {
        self.k as f64
    }

    /// `q = (k+p)/(2k)`.
    pub fn q(&self) -> f64 {
        q_from(self.pf(), self.kf())
    }

    /// Joint-form weight `λ`.
    pub fn lambda(&self) -> f64 {
        lambda_from(self.pf(), self.kf(), self.q(), self.gamma1, self.gamma2)
    }

    /// Variational-form weights `(μ1, μ2)` with `2√(μ1 μ2) = λ`.
    pub fn variational_weights(&self) -> (f64, f64) {
        let (p, k, q) = (self.pf(), self.kf(), self.q());
        let kq = k * q;
        let mu1 = self.gamma1.powf((2.0 * kq - p) / kq) * self.gamma2.powf((p - kq) / kq);
        (mu1, self.gamma2)
    }

    /// `(w_β, w_c) = (2k/(p+k), 2p/(p+k))`.
    pub fn penalty_weights(&self) -> (f64, f64) {
        let (p, k) = (self.pf(), self.kf());
        (2.0 * k / (p + k), 2.0 * p / (p + k))
    }

    /// Weight on `||β_t||_p^p` in each per-task subproblem.
    pub fn subproblem_weight(&self) -> f64 {
        self.penalty_weights().0 * self.gamma1
    }

    /// Short label such as `MMTFL(2,1)`.
    pub fn label(&self) -> String {
        format!("MMTFL({},{})", self.p, self.k)
    }
}

pub(crate) fn q_from(p: f64, k: f64) -> f64 {
    (k + p) / (2.0 * k)
}

pub(crate) fn lambda_from(p: f64, k: f64, q: f64, gamma1: f64, gamma2: f64) -> f64 {
    let e = p / (k * q);
    2.0 * (gamma1.powf(2.0 - e) * gamma2.powf(e)).sqrt()
}

/// `(p, k, γ1, γ2) → (q, λ)`.
pub fn map_multiplicative_to_joint(p: u8, k: u8, gamma1: f64, gamma2: f64) -> Result<(f64, f64)> {
    check_exponent("p", p)?;
    check_exponent("k", k)?;
    check_positive("gamma1", gamma1)?;
    check_positive("gamma2", gamma2)?;
    let (p, k) = (p as f64, k as f64);
    let q = q_from(p, k);
    Ok((q, lambda_from(p, k, q, gamma1, gamma2)))
}

/// `(p, q, λ) → (k, γ1, γ2)`.
///
/// The inverse is underdetermined by one degree of freedom; `ratio = γ1/γ2`
/// pins it down (use 1.0 for `γ1 = γ2`).
pub fn map_joint_to_multiplicative(p: u8, q: f64, lambda: f64, ratio: f64) -> Result<(f64, f64, f64)> {
    check_exponent("p", p)?;
    if !(q.is_finite() && q > 0.5) {
        return Err(Error::invalid(format!("q must exceed 1/2, got {q}")));
    }
    check_positive("lambda", lambda)?;
    check_positive("ratio", ratio)?;
    let p = p as f64;
    let k = p / (2.0 * q - 1.0);
    // λ/2 = √(γ1^a γ2^(2−a)) with γ1 = ratio·γ2  ⇒  γ2 = λ / (2 ratio^{a/2})
    let a = 2.0 - p / (k * q);
    let gamma2 = lambda / (2.0 * ratio.powf(a / 2.0));
    Ok((k, ratio * gamma2, gamma2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn forward_mapping_examples() {
        let (q, l) = map_multiplicative_to_joint(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(q, 1.0);
        assert_relative_eq!(l, 2.0);
        let (q, l) = map_multiplicative_to_joint(2, 1, 8.0, 1.0).unwrap();
        assert_eq!(q, 1.5);
        assert_relative_eq!(l, 4.0, epsilon = 1e-12);
        let (q, l) = map_multiplicative_to_joint(1, 2, 1.0, 8.0).unwrap();
        assert_eq!(q, 0.75);
        assert_relative_eq!(l, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn new_formulations_match_closed_lambda() {
        // λ = 2 γ1^{1/3} γ2^{2/3} for (2,1) and 2 γ1^{2/3} γ2^{1/3} for (1,2)
        let (g1, g2) = (0.7, 3.1);
        let (_, l21) = map_multiplicative_to_joint(2, 1, g1, g2).unwrap();
        assert_relative_eq!(l21, 2.0 * g1.powf(1.0 / 3.0) * g2.powf(2.0 / 3.0), max_relative = 1e-14);
        let (_, l12) = map_multiplicative_to_joint(1, 2, g1, g2).unwrap();
        assert_relative_eq!(l12, 2.0 * g1.powf(2.0 / 3.0) * g2.powf(1.0 / 3.0), max_relative = 1e-14);
    }

    #[test]
    fn inverse_mapping_examples() {
        let (k, g1, g2) = map_joint_to_multiplicative(2, 1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(k, 2.0);
        assert_relative_eq!(g1, 1.0);
        assert_relative_eq!(g2, 1.0);
        let (k, g1, g2) = map_joint_to_multiplicative(1, 1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(k, 1.0);
        assert_relative_eq!(g1, 1.0);
        assert_relative_eq!(g2, 1.0);
    }

    /// Bisection on log γ2 of `λ(γ1 = ratio·γ2, γ2) = target`; independent of
    /// the closed-form inverse.
    fn solve_gamma2_by_bisection(p: f64, k: f64, lambda: f64, ratio: f64) -> f64 {
        let q = q_from(p, k);
        let f = |lg2: f64| {
            let g2 = lg2.exp();
            lambda_from(p, k, q, ratio * g2, g2) - lambda
        };
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }

    #[test]
    fn inverse_mapping_matches_numeric_solve() {
        let oracle_g2 = solve_gamma2_by_bisection(2.0, 1.0, 4.0, 8.0);
        assert_relative_eq!(oracle_g2, 1.0, max_relative = 1e-10);
        let (k, g1, g2) = map_joint_to_multiplicative(2, 1.5, 4.0, 8.0).unwrap();
        assert_relative_eq!(k, 1.0);
        assert_relative_eq!(g2, oracle_g2, max_relative = 1e-10);
        assert_relative_eq!(g1, 8.0 * oracle_g2, max_relative = 1e-10);
        let (_, l) = map_multiplicative_to_joint(2, 1, g1, g2).unwrap();
        assert_relative_eq!(l, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(map_joint_to_multiplicative(2, 0.5, 1.0, 1.0).is_err());
        assert!(map_joint_to_multiplicative(2, 0.3, 1.0, 1.0).is_err());
        assert!(map_multiplicative_to_joint(3, 1, 1.0, 1.0).is_err());
        assert!(RegularizerSpec::least_squares(2, 2, 0.0, 1.0).is_err());
        assert!(RegularizerSpec::least_squares(2, 2, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn variational_weights_reproduce_lambda() {
        for (p, k) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            let s = RegularizerSpec::least_squares(p, k, 0.3, 5.0).unwrap();
            let (mu1, mu2) = s.variational_weights();
            assert_relative_eq!(2.0 * (mu1 * mu2).sqrt(), s.lambda(), max_relative = 1e-13);
        }
    }

    #[test]
    fn penalty_weights_are_unit_on_diagonal() {
        assert_eq!(RegularizerSpec::least_squares(2, 2, 1.0, 1.0).unwrap().penalty_weights(), (1.0, 1.0));
        assert_eq!(RegularizerSpec::least_squares(1, 1, 1.0, 1.0).unwrap().penalty_weights(), (1.0, 1.0));
        let (wb, wc) = RegularizerSpec::least_squares(2, 1, 1.0, 1.0).unwrap().penalty_weights();
        assert_relative_eq!(wb, 2.0 / 3.0);
        assert_relative_eq!(wc, 4.0 / 3.0);
    }

    #[test]
    fn serde_rejects_unknown_and_invalid() {
        let ok: RegularizerSpec = serde_json::from_str(r#"{"p":2,"k":1,"gamma1":1.0,"gamma2":2.0}"#).unwrap();
        assert_eq!(ok.loss(), LossKind::LeastSquares);
        assert!(serde_json::from_str::<RegularizerSpec>(r#"{"p":2,"k":1,"gamma1":1.0,"gamma2":2.0,"x":1}"#).is_err());
        assert!(serde_json::from_str::<RegularizerSpec>(r#"{"p":3,"k":1,"gamma1":1.0,"gamma2":2.0}"#).is_err());
    }

    proptest! {
        #[test]
        fn mapping_roundtrip(
            p in 1u8..=2,
            k in 1u8..=2,
            lg1 in -6.0f64..6.0,
            lg2 in -6.0f64..6.0,
        ) {
            let (g1, g2) = (lg1.exp(), lg2.exp());
            let (q, lambda) = map_multiplicative_to_joint(p, k, g1, g2).unwrap();
            let (k2, h1, h2) = map_joint_to_multiplicative(p, q, lambda, g1 / g2).unwrap();
            prop_assert!((k2 - k as f64).abs() <= 1e-12);
            prop_assert!((h1 - g1).abs() <= 1e-12 * g1);
            prop_assert!((h2 - g2).abs() <= 1e-12 * g2);
        }
    }
}
