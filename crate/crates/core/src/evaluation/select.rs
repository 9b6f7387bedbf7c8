//! Hyperparameter selection by k-fold cross-validated MSE.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::metrics::mse_vec;
use super::split::kfold_split;
use crate::error::{Error, Result};
use crate::linear::{
    alpha_grid, elastic_net_path, lars_path_design, solve_ridge, CdSettings, Design, LarsMode,
    LinearModel,
};
use crate::nonlinear::{fit_svr, SvrParams};

pub const CV_FOLDS: usize = 5;
pub const PATH_ALPHAS: usize = 100;
pub const PATH_EPS: f64 = 1e-3;
pub const RIDGE_ALPHAS: [f64; 6] = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];
pub const L1_RATIO_GRID: [f64; 8] = [0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99, 1.0];
pub const SVR_C_GRID: [f64; 5] = [1.0, 10.0, 100.0, 1e3, 1e4];
pub const SVR_GAMMA_GRID: [f64; 5] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4];

/// How candidate models along an alpha grid are produced inside each fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathFamily {
    /// Warm-started coordinate descent (LASSO when the l1 grid is `[1.0]`).
    ElasticNet,
    /// LARS path interpolated at the grid.
    Lars,
    /// LASSO-mode LARS path interpolated at the grid.
    LassoLars,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvCell {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub cv_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvSelection {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub cv_mse: f64,
    /// Every evaluated candidate, in evaluation order.
    pub table: Vec<CvCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvrCell {
    pub c: f64,
    pub gamma: f64,
    pub cv_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvrSelection {
    pub c: f64,
    pub gamma: f64,
    pub cv_mse: f64,
    pub table: Vec<SvrCell>,
}

pub fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |r, j| x[(idx[r], j)])
}

pub fn select_entries(y: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |r, _| y[idx[r]])
}

/// Design for one fold, standardised with that fold's training rows only.
pub fn fold_design(x: &DMatrix<f64>, y: &DVector<f64>, train: &[usize]) -> Result<Design> {
    Design::zscore(&select_rows(x, train), &select_entries(y, train))
}

type Folds = [(Vec<usize>, Vec<usize>)];

/// Per-fold models at each grid alpha, fitted on the fold's training rows.
pub fn fold_paths(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: &Folds,
    family: PathFamily,
    l1_ratio: f64,
    alphas: &[f64],
    settings: &CdSettings,
) -> Result<Vec<Vec<LinearModel>>> {
    folds
        .iter()
        .map(|(train, _)| {
            let design = fold_design(x, y, train)?;
            match family {
                PathFamily::ElasticNet => elastic_net_path(&design, l1_ratio, alphas, settings),
                PathFamily::Lars | PathFamily::LassoLars => {
                    let mode = if family == PathFamily::Lars {
                        LarsMode::Lars
                    } else {
                        LarsMode::Lasso
                    };
                    let path = lars_path_design(&design, mode);
                    Ok(alphas.iter().map(|&a| path.model_at(a)).collect())
                }
            }
        })
        .collect()
}

fn fold_mse(
    model: &LinearModel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    test: &[usize],
) -> Result<f64> {
    let pred = model.predict(&select_rows(x, test))?;
    Ok(mse_vec(&select_entries(y, test), &pred))
}

fn better_linear(cell: &CvCell, best: Option<&CvCell>) -> bool {
    let Some(b) = best else { return true };
    cell.cv_mse < b.cv_mse
        || (cell.cv_mse == b.cv_mse
            && (cell.alpha > b.alpha || (cell.alpha == b.alpha && cell.l1_ratio > b.l1_ratio)))
}

fn pick_linear(table: Vec<CvCell>) -> Result<CvSelection> {
    let mut best: Option<CvCell> = None;
    for cell in table.iter().filter(|c| c.cv_mse.is_finite()) {
        if better_linear(cell, best.as_ref()) {
            best = Some(*cell);
        }
    }
    let b = best
        .ok_or_else(|| Error::Selection("every candidate produced a non-finite CV error".into()))?;
    Ok(CvSelection {
        alpha: b.alpha,
        l1_ratio: b.l1_ratio,
        cv_mse: b.cv_mse,
        table,
    })
}

/// Mean out-of-fold MSE over every (l1 ratio, alpha) candidate; returns the
/// minimiser, ties going to the larger alpha and then the larger ratio.
///
/// Each ratio's alpha grid is computed once from the full input. The LARS
/// families use the ratio-1 grid and ignore `l1_grid` values other than 1.
pub fn cv_select_linear(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    family: PathFamily,
    l1_grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvSelection> {
    if l1_grid.is_empty() {
        return Err(Error::param("l1 ratio grid is empty"));
    }
    let folds = kfold_split(x.nrows(), k, seed)?;
    let settings = CdSettings::default();
    let ratios: &[f64] = match family {
        PathFamily::ElasticNet => l1_grid,
        _ => &[1.0],
    };
    let mut table = Vec::new();
    for &rho in ratios {
        let alphas = alpha_grid(x, y, rho, PATH_ALPHAS, PATH_EPS)?;
        let paths = fold_paths(x, y, &folds, family, rho, &alphas, &settings)?;
        for (a, &alpha) in alphas.iter().enumerate() {
            let mut total = 0.0;
            for (f, (_, test)) in folds.iter().enumerate() {
                total += fold_mse(&paths[f][a], x, y, test)?;
            }
            table.push(CvCell {
                alpha,
                l1_ratio: rho,
                cv_mse: total / folds.len() as f64,
            });
        }
    }
    pick_linear(table)
}

/// Ridge over a fixed alpha set; ties go to the larger alpha.
pub fn cv_select_ridge(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alphas: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvSelection> {
    if alphas.is_empty() {
        return Err(Error::param("ridge alpha set is empty"));
    }
    let folds = kfold_split(x.nrows(), k, seed)?;
    let designs: Vec<Design> = folds
        .iter()
        .map(|(train, _)| fold_design(x, y, train))
        .collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut total = 0.0;
        for (design, (_, test)) in designs.iter().zip(&folds) {
            total += fold_mse(&solve_ridge(design, alpha)?, x, y, test)?;
        }
        table.push(CvCell {
            alpha,
            l1_ratio: 0.0,
            cv_mse: total / folds.len() as f64,
        });
    }
    pick_linear(table)
}

/// Exhaustive (C, gamma) grid; ties go to the smaller C, then the smaller gamma.
pub fn grid_search_svr(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    c_grid: &[f64],
    gamma_grid: &[f64],
    k: usize,
    seed: u64,
    base: &SvrParams,
) -> Result<SvrSelection> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::param("svr grid is empty"));
    }
    let folds = kfold_split(x.nrows(), k, seed)?;
    let parts: Vec<_> = folds
        .iter()
        .map(|(train, test)| {
            (
                select_rows(x, train),
                select_entries(y, train),
                select_rows(x, test),
                select_entries(y, test),
            )
        })
        .collect();
    let mut table = Vec::with_capacity(c_grid.len() * gamma_grid.len());
    for &c in c_grid {
        for &gamma in gamma_grid {
            let params = SvrParams { c, gamma, ..*base };
            let mut total = 0.0;
            for (xtr, ytr, xte, yte) in &parts {
                let model = fit_svr(xtr, ytr, &params)?;
                let pred = DVector::from_fn(xte.nrows(), |i, _| {
                    let row: Vec<f64> = xte.row(i).iter().copied().collect();
                    model.predict_row(&row)
                });
                total += mse_vec(yte, &pred);
            }
            table.push(SvrCell {
                c,
                gamma,
                cv_mse: total / parts.len() as f64,
            });
        }
    }
    let mut best: Option<SvrCell> = None;
    for cell in table.iter().filter(|c| c.cv_mse.is_finite()) {
        let take = match &best {
            None => true,
            Some(b) => {
                cell.cv_mse < b.cv_mse
                    || (cell.cv_mse == b.cv_mse
                        && (cell.c < b.c || (cell.c == b.c && cell.gamma < b.gamma)))
            }
        };
        if take {
            best = Some(*cell);
        }
    }
    let b = best
        .ok_or_else(|| Error::Selection("every SVR cell produced a non-finite CV error".into()))?;
    Ok(SvrSelection {
        c: b.c,
        gamma: b.gamma,
        cv_mse: b.cv_mse,
        table,
    })
}
