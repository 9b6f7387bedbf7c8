//! Random train/test splits and k-fold partitions.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::rng;

pub const TRAIN_FRACTION: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(seed));
    idx
}

/// `ceil(train_fraction * n)` rows drawn without replacement for training.
/// Index lists are returned sorted.
pub fn random_split(n: usize, train_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if n < 4 {
        return Err(Error::param(format!("random split needs n >= 4, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param("train fraction must lie in (0, 1)"));
    }
    let n_train = ((train_fraction * n as f64).ceil() as usize).min(n - 1);
    let idx = shuffled(n, seed);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        seed,
        train_indices: train,
        test_indices: test,
    })
}

/// Shuffled k-fold partition; the first `n % k` folds get one extra row.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n {
        return Err(Error::param(format!(
            "k-fold needs 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    let idx = shuffled(n, seed);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let mut test = idx[start..start + size].to_vec();
        let mut train: Vec<usize> = idx[..start]
            .iter()
            .chain(&idx[start + size..])
            .copied()
            .collect();
        test.sort_unstable();
        train.sort_unstable();
        out.push((train, test));
        start += size;
    }
    Ok(out)
}
