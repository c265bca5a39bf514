use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::MultitaskDataset;
use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::optimizer::{fit, fit_single_task, FitOptions, FitResult};
use crate::regularizer::RegularizerSpec;

/// A learner compared in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Independent per-task fits with a squared ℓ2 penalty.
    Stl,
    Mmtfl { p: u8, k: u8 },
}

impl Method {
    /// The four multiplicative variants and the single-task baseline.
    pub fn all() -> Vec<Method> {
        vec![
            Method::Stl,
            Method::Mmtfl { p: 2, k: 2 },
            Method::Mmtfl { p: 1, k: 1 },
            Method::Mmtfl { p: 2, k: 1 },
            Method::Mmtfl { p: 1, k: 2 },
        ]
    }

    /// Whether the second hyperparameter changes the fit.
    pub fn uses_gamma2(self) -> bool {
        matches!(self, Method::Mmtfl { .. })
    }

    /// Overall regularization strength at `(γ1, γ2)`: the ridge weight for
    /// STL and the joint-form `λ` otherwise.
    pub fn strength(self, gamma1: f64, gamma2: f64) -> Result<f64> {
        match self {
            Method::Stl => Ok(gamma1),
            Method::Mmtfl { .. } => Ok(self.spec(gamma1, gamma2, LossKind::LeastSquares)?.lambda()),
        }
    }

    pub fn spec(self, gamma1: f64, gamma2: f64, loss: LossKind) -> Result<RegularizerSpec> {
        match self {
            Method::Stl => RegularizerSpec::new(2, 2, gamma1, gamma2, loss),
            Method::Mmtfl { p, k } => RegularizerSpec::new(p, k, gamma1, gamma2, loss),
        }
    }

    pub fn fit(self, data: &MultitaskDataset, gamma1: f64, gamma2: f64, loss: LossKind, opts: &FitOptions) -> Result<FitResult> {
        let spec = self.spec(gamma1, gamma2, loss)?;
        match self {
            Method::Stl => fit_single_task(data, &spec, opts),
            Method::Mmtfl { .. } => fit(data, &spec, opts),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Stl => f.pad("STL"),
            Method::Mmtfl { p, k } => f.pad(&format!("MMTFL({p},{k})")),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let upper = compact.to_ascii_uppercase();
        if upper == "STL" {
            return Ok(Method::Stl);
        }
        let inner = upper
            .strip_prefix("MMTFL(")
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))?;
        let (p, k) = inner
            .split_once(',')
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))?;
        let parse = |v: &str| match v {
            "1" => Ok(1u8),
            "2" => Ok(2u8),
            _ => Err(Error::invalid(format!("method '{s}': p and k must be 1 or 2"))),
        };
        Ok(Method::Mmtfl { p: parse(p)?, k: parse(k)? })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}
