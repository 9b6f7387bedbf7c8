//! Penalised linear regression written from first principles.
//!
//! Every solver works on a [`Design`]: the feature matrix z-scored with the
//! fitting data's own statistics and the target centred, so the intercept is
//! never penalised. The fitted [`LinearModel`] carries the statistics needed
//! to predict on raw inputs:
//!
//! ```text
//! y_hat(x) = intercept + sum_j coef_j * (x_j - mean_j) / scale_j
//! ```
//!
//! Constant columns get scale 1 and a coefficient pinned to zero.

mod cd;
mod ic;
mod lars;

pub use cd::{
    alpha_grid, alpha_max, coordinate_descent, elastic_net_path, en_kkt_violation, en_objective,
    fit_elastic_net, fit_lasso, solve_elastic_net, CdOutcome, CdSettings,
};
pub use ic::{ic_select, information_criterion, Criterion, CriterionScore};
pub use lars::{lars_path, lars_path_design, LarsMode, RegPath};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// How raw features are transformed before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Standardization {
    /// Centre and scale each column, centre the target, fit an intercept.
    ZScore,
    /// Use the raw matrix and target as given; intercept fixed at zero.
    None,
}

/// Relative spread below which a column counts as constant.
const CONSTANT_COLUMN_RTOL: f64 = 1e-10;

/// Prepared solver input.
#[derive(Debug, Clone)]
pub struct Design {
    z: DMatrix<f64>,
    y: DVector<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    y_offset: f64,
    constant: Vec<bool>,
}

impl Design {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, mode: Standardization) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 {
            return Err(Error::param("design matrix has no rows"));
        }
        if y.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: y.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("design contains non-finite values"));
        }
        let nf = n as f64;
        let mut z = x.clone();
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        let mut constant = vec![false; p];
        let y_offset;
        let mut yc = y.clone();
        match mode {
            Standardization::ZScore => {
                for j in 0..p {
                    let col = x.column(j);
                    let mean = col.sum() / nf;
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
                    let sd = var.sqrt();
                    means[j] = mean;
                    if sd <= CONSTANT_COLUMN_RTOL * mean.abs().max(1.0) {
                        constant[j] = true;
                        z.column_mut(j).fill(0.0);
                    } else {
                        scales[j] = sd;
                        z.column_mut(j).apply(|v| *v = (*v - mean) / sd);
                    }
                }
                y_offset = y.sum() / nf;
                yc.add_scalar_mut(-y_offset);
            }
            Standardization::None => {
                for j in 0..p {
                    constant[j] = x.column(j).iter().all(|v| *v == 0.0);
                }
                y_offset = 0.0;
            }
        }
        Ok(Design {
            z,
            y: yc,
            means,
            scales,
            y_offset,
            constant,
        })
    }

    pub fn zscore(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        Self::new(x, y, Standardization::ZScore)
    }

    pub fn n_samples(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.z.ncols()
    }

    /// Transformed feature matrix.
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Centred target.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.constant[j]
    }

    fn informative_columns(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&j| !self.constant[j])
            .collect()
    }

    /// Wraps standardised-space coefficients into a predictive model.
    pub fn model(&self, mut coefficients: DVector<f64>, alpha: f64, l1_ratio: f64) -> LinearModel {
        for (j, c) in coefficients.iter_mut().enumerate() {
            if self.constant[j] {
                *c = 0.0;
            }
        }
        LinearModel {
            coefficients: coefficients.iter().copied().collect(),
            intercept: self.y_offset,
            feature_means: self.means.clone(),
            feature_scales: self.scales.clone(),
            alpha,
            l1_ratio,
            converged: true,
            n_iter: 0,
        }
    }

    /// Residual `y - z w` in the transformed space.
    pub fn residual(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.z * w
    }
}

/// Fitted linear predictor in standardised coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub alpha: f64,
    pub l1_ratio: f64,
    /// False when an iterative solver hit its iteration cap.
    pub converged: bool,
    pub n_iter: usize,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .zip(self.feature_means.iter().zip(&self.feature_scales))
                .map(|((w, x), (m, s))| w * (x - m) / s)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        let mut row = vec![0.0; x.ncols()];
        Ok(DVector::from_fn(x.nrows(), |i, _| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = x[(i, j)];
            }
            self.predict_row(&row)
        }))
    }

    pub fn nonzero_count(&self) -> usize {
        self.coefficients.iter().filter(|c| **c != 0.0).count()
    }

    /// Coefficients mapped back to raw feature units, with the matching intercept.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let raw: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.feature_scales)
            .map(|(w, s)| w / s)
            .collect();
        let shift: f64 = raw
            .iter()
            .zip(&self.feature_means)
            .map(|(w, m)| w * m)
            .sum();
        (raw, self.intercept - shift)
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimum-norm least squares on the informative columns.
fn min_norm_lstsq(design: &Design) -> DVector<f64> {
    let cols = design.informative_columns();
    let mut w = DVector::zeros(design.n_features());
    if cols.is_empty() {
        return w;
    }
    let za = design.z.select_columns(&cols);
    let dim = za.nrows().max(za.ncols()) as f64;
    let svd = za.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * dim * f64::EPSILON;
    let sol = svd
        .solve(&design.y, eps)
        .expect("U and V were requested from the SVD");
    for (k, &j) in cols.iter().enumerate() {
        w[j] = sol[k];
    }
    w
}

pub fn solve_ols(design: &Design) -> LinearModel {
    design.model(min_norm_lstsq(design), 0.0, 0.0)
}

/// Ordinary least squares; rank deficiency resolves to the minimum-norm solution.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearModel> {
    Ok(solve_ols(&Design::zscore(x, y)?))
}

/// Solves `(ZᵀZ + alpha I) w = Zᵀy` by Cholesky.
pub fn solve_ridge(design: &Design, alpha: f64) -> Result<LinearModel> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::param(format!(
            "ridge alpha must be >= 0, got {alpha}"
        )));
    }
    let cols = design.informative_columns();
    let mut w = DVector::zeros(design.n_features());
    if !cols.is_empty() {
        let za = design.z.select_columns(&cols);
        let mut gram = za.transpose() * &za;
        for d in 0..cols.len() {
            gram[(d, d)] += alpha;
        }
        let rhs = za.transpose() * &design.y;
        match gram.cholesky() {
            Some(ch) => {
                let sol = ch.solve(&rhs);
                for (k, &j) in cols.iter().enumerate() {
                    w[j] = sol[k];
                }
            }
            // Only reachable at alpha = 0 with a singular Gram matrix.
            None => w = min_norm_lstsq(design),
        }
    }
    Ok(design.model(w, alpha, 0.0))
}

pub fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<LinearModel> {
    solve_ridge(&Design::zscore(x, y)?, alpha)
}
