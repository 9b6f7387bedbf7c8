//! AIC / BIC selection along a regularisation path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LinearModel, RegPath};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "AIC")]
    Aic,
    #[serde(rename = "BIC")]
    Bic,
}

impl Criterion {
    /// Cost per effective degree of freedom.
    pub fn penalty(self, n: usize) -> f64 {
        match self {
            Criterion::Aic => 2.0,
            Criterion::Bic => (n as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionScore {
    pub kind: Criterion,
    /// `-inf` when the residual sum of squares is exactly zero.
    pub value: f64,
    pub df: usize,
}

/// `n ln(RSS / n) + penalty * df`.
pub fn information_criterion(rss: f64, n: usize, df: usize, kind: Criterion) -> f64 {
    if rss <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    nf * (rss / nf).ln() + kind.penalty(n) * df as f64
}

/// Scores every path model on `(x, y)` and returns the minimiser.
/// Ties go to the earlier (larger-alpha) model.
pub fn ic_select(
    path: &RegPath,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kind: Criterion,
) -> Result<(LinearModel, CriterionScore)> {
    if path.is_empty() {
        return Err(Error::param("regularisation path is empty"));
    }
    if x.nrows() != y.len() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let n = y.len();
    let mut best: Option<(usize, CriterionScore)> = None;
    for (k, model) in path.models.iter().enumerate() {
        let pred = model.predict(x)?;
        let rss = (y - pred).norm_squared();
        let df = model.nonzero_count();
        let value = information_criterion(rss, n, df, kind);
        let score = CriterionScore { kind, value, df };
        match best {
            Some((_, b)) if b.value <= value => {}
            _ => best = Some((k, score)),
        }
    }
    let (k, score) = best.expect("path is non-empty");
    Ok((path.models[k].clone(), score))
}
