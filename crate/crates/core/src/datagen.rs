//! Synthetic regression benchmarks with known feature-sharing structure.
//!
//! * **D1**: the first 40% of features are irrelevant to every task; every
//!   remaining feature is used by every task.
//! * **D2**: tasks are split into groups. A few features are irrelevant, a
//!   common block is used by all tasks, and the rest form a staircase: each
//!   group owns a private block and shares an overlap block with the next
//!   group only.
//!
//! Nonzero weights are `±u · weight_scale` with `u ~ U[0.5, 1.5]` and the
//! sign fixed per feature. Features and noise are standard normal.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{MultitaskDataset, TaskData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    D1,
    D2,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::D1 => "d1",
            Pattern::D2 => "d2",
        })
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(Pattern::D1),
            "d2" => Ok(Pattern::D2),
            other => Err(Error::invalid(format!("unknown pattern {other:?} (expected d1 or d2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub pattern: Pattern,
    pub tasks: usize,
    /// Examples per task.
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub weight_scale: f64,
    /// D1: fraction of features irrelevant to all tasks.
    pub irrelevant_fraction: f64,
    /// D2: number of task groups.
    pub groups: usize,
    /// D2: features irrelevant to all tasks.
    pub irrelevant: usize,
    /// D2: features used by every task.
    pub common: usize,
    /// D2: features shared by each pair of neighboring groups.
    pub overlap: usize,
}

impl SyntheticSpec {
    pub fn d1(seed: u64) -> Self {
        SyntheticSpec {
            pattern: Pattern::D1,
            tasks: 10,
            n: 200,
            d: 100,
            seed,
            weight_scale: 2.0,
            irrelevant_fraction: 0.4,
            groups: 6,
            irrelevant: 5,
            common: 10,
            overlap: 7,
        }
    }

    pub fn d2(seed: u64) -> Self {
        SyntheticSpec {
            pattern: Pattern::D2,
            tasks: 20,
            ..SyntheticSpec::d1(seed)
        }
    }

    pub fn for_pattern(pattern: Pattern, seed: u64) -> Self {
        match pattern {
            Pattern::D1 => Self::d1(seed),
            Pattern::D2 => Self::d2(seed),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.tasks == 0 || self.n == 0 || self.d == 0 {
            return Err(Error::invalid("tasks, n and d must all be at least 1"));
        }
        if !(self.weight_scale > 0.0 && self.weight_scale.is_finite()) {
            return Err(Error::invalid("weight_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `d × T` weights used to generate the targets.
    pub alpha: DMatrix<f64>,
    /// `support[(j, t)] ⇔ alpha[(j, t)] ≠ 0`.
    pub support: DMatrix<bool>,
    pub irrelevant_features: Vec<usize>,
    /// D2: group index of each task. Empty for D1.
    pub task_groups: Vec<usize>,
}

impl GroundTruth {
    /// Features used by at least one task.
    pub fn relevant_features(&self) -> Vec<usize> {
        (0..self.support.nrows())
            .filter(|&j| self.support.row(j).iter().any(|&s| s))
            .collect()
    }

    /// Number of features used by both tasks `s` and `t`.
    pub fn shared_features(&self, s: usize, t: usize) -> usize {
        (0..self.support.nrows())
            .filter(|&j| self.support[(j, s)] && self.support[(j, t)])
            .count()
    }
}

/// Splits `total` into `parts` nearly equal sizes, larger ones first.
pub fn balanced_sizes(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Layout of the D2 staircase: `(group sizes, exclusive block sizes)`.
pub fn d2_layout(spec: &SyntheticSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if spec.groups < 2 {
        return Err(Error::invalid("D2 needs at least 2 groups"));
    }
    if spec.tasks < spec.groups {
        return Err(Error::invalid(format!(
            "D2 needs at least as many tasks as groups ({} < {})",
            spec.tasks, spec.groups
        )));
    }
    let overlaps = spec.overlap * (spec.groups - 1);
    let fixed = spec.irrelevant + spec.common + overlaps;
    if spec.d < fixed {
        return Err(Error::invalid(format!(
            "D2 with {} groups needs at least {fixed} features, got {}",
            spec.groups, spec.d
        )));
    }
    Ok((
        balanced_sizes(spec.tasks, spec.groups),
        balanced_sizes(spec.d - fixed, spec.groups),
    ))
}

fn support_d1(spec: &SyntheticSpec) -> (DMatrix<bool>, Vec<usize>) {
    let zero_rows = (spec.irrelevant_fraction * spec.d as f64).floor() as usize;
    let support = DMatrix::from_fn(spec.d, spec.tasks, |j, _| j >= zero_rows);
    (support, Vec::new())
}

fn support_d2(spec: &SyntheticSpec) -> Result<(DMatrix<bool>, Vec<usize>)> {
    let (group_sizes, exclusive) = d2_layout(spec)?;
    let task_groups: Vec<usize> = group_sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &size)| std::iter::repeat_n(g, size))
        .collect();
    // groups using each feature, in feature order
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); spec.irrelevant];
    users.extend(std::iter::repeat_n((0..spec.groups).collect(), spec.common));
    for g in 0..spec.groups {
        users.extend(std::iter::repeat_n(vec![g], exclusive[g]));
        if g + 1 < spec.groups {
            users.extend(std::iter::repeat_n(vec![g, g + 1], spec.overlap));
        }
    }
    debug_assert_eq!(users.len(), spec.d);
    let support = DMatrix::from_fn(spec.d, spec.tasks, |j, t| users[j].contains(&task_groups[t]));
    Ok((support, task_groups))
}

fn draw_weights(support: &DMatrix<bool>, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (d, n_tasks) = support.shape();
    let signs: Vec<f64> = (0..d)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut alpha = DMatrix::zeros(d, n_tasks);
    for j in 0..d {
        for t in 0..n_tasks {
            if support[(j, t)] {
                alpha[(j, t)] = signs[j] * scale * rng.random_range(0.5..=1.5);
            }
        }
    }
    alpha
}

fn draw_tasks(spec: &SyntheticSpec, alpha: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<MultitaskDataset> {
    let tasks = (0..spec.tasks)
        .map(|t| {
            let values: Vec<f64> = (0..spec.n * spec.d).map(|_| rng.sample(StandardNormal)).collect();
            let x = DMatrix::from_row_slice(spec.n, spec.d, &values);
            let noise = DVector::from_iterator(spec.n, (0..spec.n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let y = &x * alpha.column(t) + noise;
            TaskData::new(format!("task_{:03}", t + 1), x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    MultitaskDataset::new(tasks)
}

fn generate_with(
    spec: &SyntheticSpec,
    support: DMatrix<bool>,
    task_groups: Vec<usize>,
) -> Result<(MultitaskDataset, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let alpha = draw_weights(&support, spec.weight_scale, &mut rng);
    let data = draw_tasks(spec, &alpha, &mut rng)?;
    let irrelevant_features = (0..spec.d)
        .filter(|&j| support.row(j).iter().all(|&s| !s))
        .collect();
    Ok((
        data,
        GroundTruth {
            alpha,
            support,
            irrelevant_features,
            task_groups,
        },
    ))
}

pub fn generate_d1(spec: &SyntheticSpec) -> Result<(MultitaskDataset, GroundTruth)> {
    if spec.pattern != Pattern::D1 {
        return Err(Error::invalid("generate_d1 requires pattern d1"));
    }
    spec.validate()?;
    let (support, groups) = support_d1(spec);
    generate_with(spec, support, groups)
}

pub fn generate_d2(spec: &SyntheticSpec) -> Result<(MultitaskDataset, GroundTruth)> {
    if spec.pattern != Pattern::D2 {
        return Err(Error::invalid("generate_d2 requires pattern d2"));
    }
    spec.validate()?;
    let (support, groups) = support_d2(spec)?;
    generate_with(spec, support, groups)
}

pub fn generate(spec: &SyntheticSpec) -> Result<(MultitaskDataset, GroundTruth)> {
    match spec.pattern {
        Pattern::D1 => generate_d1(spec),
        Pattern::D2 => generate_d2(spec),
    }
}
