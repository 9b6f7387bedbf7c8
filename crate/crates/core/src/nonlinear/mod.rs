//! Tree ensembles and kernel regression, plus the prediction surface shared
//! by every fitted estimator.

mod forest;
mod svr;

pub use forest::{
    bootstrap_sample, fit_random_forest, tree_seed, ForestModel, ForestParams, TreeNode,
};
pub use svr::{
    fit_svr, fit_svr_traced, rbf_kernel, svr_kkt_violation, SvrModel, SvrParams, SvrSolution,
};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear::LinearModel;

/// Any fitted regressor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Model {
    Linear(LinearModel),
    Forest(ForestModel),
    Svr(SvrModel),
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Linear(m) => m.n_features(),
            Model::Forest(m) => m.n_features,
            Model::Svr(m) => m.n_features(),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict_row(row),
            Model::Forest(m) => m.predict_row(row),
            Model::Svr(m) => m.predict_row(row),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        predict(self, x)
    }
}

impl From<LinearModel> for Model {
    fn from(m: LinearModel) -> Self {
        Model::Linear(m)
    }
}

impl From<ForestModel> for Model {
    fn from(m: ForestModel) -> Self {
        Model::Forest(m)
    }
}

impl From<SvrModel> for Model {
    fn from(m: SvrModel) -> Self {
        Model::Svr(m)
    }
}

/// Row-wise prediction; the column count must match the training width.
pub fn predict(model: &Model, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = model.n_features();
    if x.ncols() != p {
        return Err(Error::Shape {
            expected: p,
            got: x.ncols(),
        });
    }
    let mut row = vec![0.0; p];
    Ok(DVector::from_fn(x.nrows(), |i, _| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        model.predict_row(&row)
    }))
}
