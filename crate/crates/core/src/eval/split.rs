use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::MultitaskDataset;
use crate::error::{Error, Result};

/// SplitMix64 step, used to derive independent seeds from a base seed.
pub(crate) fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut z = seed;
    for &tag in tags {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Train/test row indices for each task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
}

/// Per-task uniform split without replacement; `round(fraction · ℓ_t)`
/// examples go to training. Every task must keep at least two training and
/// two test examples.
pub fn random_split_indices(data: &MultitaskDataset, fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(data.n_tasks());
    let mut test = Vec::with_capacity(data.n_tasks());
    for task in data.tasks() {
        let n = task.n_samples();
        let n_train = (fraction * n as f64).round() as usize;
        if n_train < 2 || n - n_train < 2 {
            return Err(Error::invalid(format!(
                "task {} with {n} examples is too small for a {fraction} split",
                task.id
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut tr = order[..n_train].to_vec();
        let mut te = order[n_train..].to_vec();
        tr.sort_unstable();
        te.sort_unstable();
        train.push(tr);
        test.push(te);
    }
    Ok(SplitIndices { train, test })
}

pub fn random_split(data: &MultitaskDataset, fraction: f64, seed: u64) -> Result<(MultitaskDataset, MultitaskDataset)> {
    let idx = random_split_indices(data, fraction, seed)?;
    Ok((data.select_rows(&idx.train)?, data.select_rows(&idx.test)?))
}

/// Per-task fold assignment: `folds[f]` is the split holding out fold `f`.
pub fn kfold_indices(data: &MultitaskDataset, folds: usize, seed: u64) -> Result<Vec<SplitIndices>> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_task: Vec<Vec<usize>> = Vec::with_capacity(data.n_tasks());
    for task in data.tasks() {
        let n = task.n_samples();
        if n < 2 * folds {
            return Err(Error::invalid(format!(
                "task {} has {n} examples, too few for {folds}-fold cross-validation",
                task.id
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % folds;
        }
        per_task.push(assignment);
    }
    Ok((0..folds)
        .map(|f| SplitIndices {
            train: per_task
                .iter()
                .map(|a| (0..a.len()).filter(|&i| a[i] != f).collect())
                .collect(),
            test: per_task
                .iter()
                .map(|a| (0..a.len()).filter(|&i| a[i] == f).collect())
                .collect(),
        })
        .collect())
}
