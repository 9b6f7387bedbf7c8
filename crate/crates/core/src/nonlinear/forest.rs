//! Bagged regression trees grown on variance reduction.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means every feature.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 10,
            max_features: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub n_trees: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub n_features: usize,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Seed of the random stream used by tree `index`.
pub fn tree_seed(forest_seed: u64, index: usize) -> u64 {
    derive_seed(forest_seed, index as u64)
}

/// Size-`n` draw with replacement; the first draws of a tree's stream.
pub fn bootstrap_sample<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

struct Grower<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    max_features: usize,
    min_split: usize,
    min_leaf: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

impl Grower<'_> {
    fn grow<R: Rng>(&self, idx: &mut [usize], rng: &mut R) -> TreeNode {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        if n < self.min_split || sse <= 0.0 {
            return TreeNode::Leaf { value: mean };
        }
        let Some(best) = self.best_split(idx, sum, sse, rng) else {
            return TreeNode::Leaf { value: mean };
        };
        let f = best.feature;
        let x = self.x;
        idx.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
        let (l, r) = idx.split_at_mut(best.n_left);
        TreeNode::Split {
            feature: f,
            threshold: best.threshold,
            left: Box::new(self.grow(l, rng)),
            right: Box::new(self.grow(r, rng)),
        }
    }

    fn best_split<R: Rng>(
        &self,
        idx: &[usize],
        sum: f64,
        sse: f64,
        rng: &mut R,
    ) -> Option<BestSplit> {
        let p = self.x.ncols();
        let n = idx.len();
        let mut features: Vec<usize> = if self.max_features >= p {
            (0..p).collect()
        } else {
            sample(rng, p, self.max_features).into_vec()
        };
        // ascending order makes ties resolve to the lowest feature index
        features.sort_unstable();

        let parent_term = sum * sum / n as f64;
        let min_gain = 1e-12 * sse;
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for &f in &features {
            let col = self.x.column(f);
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.y[order[k - 1]];
                let (lo, hi) = (col[order[k - 1]], col[order[k]]);
                if lo == hi || k < self.min_leaf || n - k < self.min_leaf {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64
                    - parent_term;
                if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                        n_left: k,
                    });
                }
            }
        }
        best
    }
}

/// Fits `n_trees` regression trees, each on its own bootstrap sample when
/// `bootstrap` is set. Identical parameters give an identical forest.
pub fn fit_random_forest(
    x: &DMatrix<f64>,
    y: &[f64],
    params: &ForestParams,
) -> Result<ForestModel> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::param("random forest needs a non-empty design"));
    }
    if y.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: y.len(),
        });
    }
    if params.n_trees == 0 {
        return Err(Error::param("n_trees must be >= 1"));
    }
    if params.min_samples_split < 2 || params.min_samples_leaf < 1 {
        return Err(Error::param(
            "min_samples_split must be >= 2 and min_samples_leaf >= 1",
        ));
    }
    let max_features = params.max_features.unwrap_or(p);
    if max_features == 0 || max_features > p {
        return Err(Error::param(format!("max_features must lie in 1..={p}")));
    }
    let grower = Grower {
        x,
        y,
        max_features,
        min_split: params.min_samples_split,
        min_leaf: params.min_samples_leaf,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng(tree_seed(params.seed, t));
            let mut idx = if params.bootstrap {
                bootstrap_sample(n, &mut r)
            } else {
                (0..n).collect()
            };
            grower.grow(&mut idx, &mut r)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_trees: params.n_trees,
        bootstrap: params.bootstrap,
        seed: params.seed,
        n_features: p,
    })
}
