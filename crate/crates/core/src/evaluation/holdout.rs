//! Repeated random 75/25 hold-out with per-split hyperparameter selection.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mae, mse, pcc};
use super::select::{
    cv_select_linear, cv_select_ridge, grid_search_svr, select_entries, select_rows, PathFamily,
    CV_FOLDS, L1_RATIO_GRID, RIDGE_ALPHAS, SVR_C_GRID, SVR_GAMMA_GRID,
};
use super::split::{random_split, TRAIN_FRACTION};
use crate::dataset::{EncodedTask, MonthKey};
use crate::error::{Error, Result};
use crate::linear::{
    fit_elastic_net, fit_ols, fit_ridge, ic_select, lars_path, Criterion, LarsMode,
};
use crate::nonlinear::{fit_random_forest, fit_svr, ForestParams, Model, SvrParams};
use crate::seed::derive_seed;

/// Elastic-net mixing used in the nine-way comparison.
pub const COMPARISON_L1_RATIO: f64 = 0.5;
/// Largest tolerated share of failed repeats.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

const CD_TOL: f64 = 1e-6;
const CD_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "EN")]
    ElasticNet,
    #[serde(rename = "LASSO")]
    Lasso,
    #[serde(rename = "RR")]
    Ridge,
    #[serde(rename = "LARS")]
    Lars,
    #[serde(rename = "LASSO-LARS")]
    LassoLars,
    #[serde(rename = "LASSO-LARS-AIC")]
    LassoLarsAic,
    #[serde(rename = "LASSO-LARS-BIC")]
    LassoLarsBic,
    #[serde(rename = "RF")]
    RandomForest,
    #[serde(rename = "SVR")]
    Svr,
    #[serde(rename = "OLS")]
    Ols,
    /// Elastic net with the mixing ratio selected as well.
    #[serde(rename = "EN-TUNED")]
    TunedElasticNet,
}

impl Estimator {
    /// The nine estimators of the comparison grid.
    pub const COMPARISON: [Estimator; 9] = [
        Estimator::ElasticNet,
        Estimator::Lasso,
        Estimator::Ridge,
        Estimator::Lars,
        Estimator::LassoLars,
        Estimator::LassoLarsAic,
        Estimator::LassoLarsBic,
        Estimator::RandomForest,
        Estimator::Svr,
    ];

    pub const ALL: [Estimator; 11] = [
        Estimator::ElasticNet,
        Estimator::Lasso,
        Estimator::Ridge,
        Estimator::Lars,
        Estimator::LassoLars,
        Estimator::LassoLarsAic,
        Estimator::LassoLarsBic,
        Estimator::RandomForest,
        Estimator::Svr,
        Estimator::Ols,
        Estimator::TunedElasticNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::ElasticNet => "EN",
            Estimator::Lasso => "LASSO",
            Estimator::Ridge => "RR",
            Estimator::Lars => "LARS",
            Estimator::LassoLars => "LASSO-LARS",
            Estimator::LassoLarsAic => "LASSO-LARS-AIC",
            Estimator::LassoLarsBic => "LASSO-LARS-BIC",
            Estimator::RandomForest => "RF",
            Estimator::Svr => "SVR",
            Estimator::Ols => "OLS",
            Estimator::TunedElasticNet => "EN-TUNED",
        }
    }

    /// True for estimators whose selected model carries an alpha.
    pub fn has_alpha(self) -> bool {
        !matches!(
            self,
            Estimator::RandomForest | Estimator::Svr | Estimator::Ols
        )
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let want = s.trim().to_ascii_uppercase();
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == want)
            .ok_or_else(|| {
                let names: Vec<&str> = Estimator::ALL.iter().map(|e| e.name()).collect();
                Error::param(format!(
                    "unknown estimator '{s}'; valid: {}",
                    names.join(", ")
                ))
            })
    }
}

/// Selected model plus the hyperparameters that produced it.
#[derive(Debug, Clone)]
pub struct SelectedFit {
    pub model: Model,
    pub params: BTreeMap<String, f64>,
    pub converged: bool,
}

/// Runs the estimator's own selection on `(x, y)` and refits on all of it.
/// `seed` drives fold assignment and any estimator randomness.
pub fn fit_selected(
    estimator: Estimator,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    seed: u64,
) -> Result<SelectedFit> {
    let fold_seed = derive_seed(seed, 1);
    let mut params = BTreeMap::new();
    let linear = |m: crate::linear::LinearModel, params: &mut BTreeMap<String, f64>| {
        params.insert("alpha".to_string(), m.alpha);
        let converged = m.converged;
        (Model::Linear(m), converged)
    };
    let (model, converged) = match estimator {
        Estimator::ElasticNet | Estimator::Lasso | Estimator::TunedElasticNet => {
            let grid: &[f64] = match estimator {
                Estimator::ElasticNet => &[COMPARISON_L1_RATIO],
                Estimator::Lasso => &[1.0],
                _ => &L1_RATIO_GRID,
            };
            let s = cv_select_linear(x, y, PathFamily::ElasticNet, grid, CV_FOLDS, fold_seed)?;
            params.insert("l1_ratio".to_string(), s.l1_ratio);
            params.insert("cv_mse".to_string(), s.cv_mse);
            let m = fit_elastic_net(x, y, s.alpha, s.l1_ratio, CD_TOL, CD_MAX_ITER)?;
            linear(m, &mut params)
        }
        Estimator::Ridge => {
            let s = cv_select_ridge(x, y, &RIDGE_ALPHAS, CV_FOLDS, fold_seed)?;
            params.insert("cv_mse".to_string(), s.cv_mse);
            linear(fit_ridge(x, y, s.alpha)?, &mut params)
        }
        Estimator::Lars | Estimator::LassoLars => {
            let (family, mode) = if estimator == Estimator::Lars {
                (PathFamily::Lars, LarsMode::Lars)
            } else {
                (PathFamily::LassoLars, LarsMode::Lasso)
            };
            let s = cv_select_linear(x, y, family, &[1.0], CV_FOLDS, fold_seed)?;
            params.insert("cv_mse".to_string(), s.cv_mse);
            let m = lars_path(x, y, mode)?.model_at(s.alpha);
            linear(m, &mut params)
        }
        Estimator::LassoLarsAic | Estimator::LassoLarsBic => {
            let kind = if estimator == Estimator::LassoLarsAic {
                Criterion::Aic
            } else {
                Criterion::Bic
            };
            let path = lars_path(x, y, LarsMode::Lasso)?;
            let (m, score) = ic_select(&path, x, y, kind)?;
            params.insert("criterion".to_string(), score.value);
            params.insert("df".to_string(), score.df as f64);
            linear(m, &mut params)
        }
        Estimator::Ols => (Model::Linear(fit_ols(x, y)?), true),
        Estimator::RandomForest => {
            let fp = ForestParams {
                seed: derive_seed(seed, 2),
                ..ForestParams::default()
            };
            params.insert("n_trees".to_string(), fp.n_trees as f64);
            params.insert("max_features".to_string(), x.ncols() as f64);
            let f = fit_random_forest(x, y.as_slice(), &fp)?;
            (Model::Forest(f), true)
        }
        Estimator::Svr => {
            let base = SvrParams::default();
            let s = grid_search_svr(
                x,
                y,
                &SVR_C_GRID,
                &SVR_GAMMA_GRID,
                CV_FOLDS,
                fold_seed,
                &base,
            )?;
            params.insert("C".to_string(), s.c);
            params.insert("gamma".to_string(), s.gamma);
            params.insert("cv_mse".to_string(), s.cv_mse);
            let m = fit_svr(
                x,
                y,
                &SvrParams {
                    c: s.c,
                    gamma: s.gamma,
                    ..base
                },
            )?;
            let converged = m.converged;
            (Model::Svr(m), converged)
        }
    };
    Ok(SelectedFit {
        model,
        params,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub estimator: Estimator,
    pub task: usize,
    pub repeat: usize,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub mae: f64,
    pub mse: f64,
    /// Missing when either side of the held-out pairs is constant.
    pub pcc: Option<f64>,
    pub chosen_params: BTreeMap<String, f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatFailure {
    pub repeat: usize,
    pub split_seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub estimator: Estimator,
    pub task: usize,
    pub master_seed: u64,
    /// Successful repeats, equal to `reports.len()`.
    pub n_repeats: usize,
    pub n_failed: usize,
    pub mae_mean: f64,
    pub mae_sd: f64,
    pub mse_mean: f64,
    pub mse_sd: f64,
    pub pcc_mean: Option<f64>,
    pub pcc_sd: Option<f64>,
    pub n_pcc_defined: usize,
    pub alpha_mean: Option<f64>,
    pub alpha_sd: Option<f64>,
    pub l1ratio_median: Option<f64>,
    pub l1ratio_iqr: Option<f64>,
    /// Times each instance landed in the held-out part.
    pub hotest_hit_counts: Vec<u32>,
    /// Mean held-out prediction per instance; missing when never held out.
    pub mean_holdout_prediction: Vec<Option<f64>>,
    pub instance_keys: Vec<MonthKey>,
    pub y_true: Vec<f64>,
    pub reports: Vec<FitReport>,
    pub failures: Vec<RepeatFailure>,
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

struct RepeatOutcome {
    report: FitReport,
    test: Vec<usize>,
    pred: Vec<f64>,
}

fn run_repeat(
    task: &EncodedTask,
    estimator: Estimator,
    repeat: usize,
    seed: u64,
) -> Result<RepeatOutcome> {
    let plan = random_split(task.n_instances(), TRAIN_FRACTION, seed)?;
    let xtr = select_rows(&task.x, &plan.train_indices);
    let ytr = select_entries(&task.y, &plan.train_indices);
    let fit = fit_selected(estimator, &xtr, &ytr, seed)?;
    let xte = select_rows(&task.x, &plan.test_indices);
    let yte: Vec<f64> = plan.test_indices.iter().map(|&i| task.y[i]).collect();
    let pred: Vec<f64> = fit.model.predict(&xte)?.iter().copied().collect();
    let report = FitReport {
        estimator,
        task: task.lag_depth,
        repeat,
        split_seed: seed,
        n_train: plan.train_indices.len(),
        n_test: plan.test_indices.len(),
        mae: mae(&yte, &pred)?,
        mse: mse(&yte, &pred)?,
        pcc: pcc(&yte, &pred).ok(),
        chosen_params: fit.params,
        converged: fit.converged,
    };
    Ok(RepeatOutcome {
        report,
        test: plan.test_indices,
        pred,
    })
}

/// Repeat `r` uses split seed `derive_seed(master_seed, r)`. Repeats run in
/// parallel and are collected by index, so the report does not depend on
/// the thread count.
pub fn repeat_holdout(
    task: &EncodedTask,
    estimator: Estimator,
    n_repeats: usize,
    master_seed: u64,
) -> Result<AggregateReport> {
    let n = task.n_instances();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "repeated hold-out needs >= 8 instances, task has {n}"
        )));
    }
    if n_repeats == 0 {
        return Err(Error::param("n_repeats must be >= 1"));
    }
    let outcomes: Vec<(usize, u64, Result<RepeatOutcome>)> = (0..n_repeats)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(master_seed, r as u64);
            (r, seed, run_repeat(task, estimator, r, seed))
        })
        .collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut hits = vec![0u32; n];
    let mut pred_sum = vec![0.0; n];
    for (repeat, split_seed, out) in outcomes {
        match out {
            Ok(o) => {
                for (&i, &p) in o.test.iter().zip(&o.pred) {
                    hits[i] += 1;
                    pred_sum[i] += p;
                }
                reports.push(o.report);
            }
            Err(e) => failures.push(RepeatFailure {
                repeat,
                split_seed,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * n_repeats as f64 || reports.is_empty() {
        return Err(Error::Aggregate(format!(
            "{} of {n_repeats} repeats failed for {estimator} on task {}; first: {}",
            failures.len(),
            task.lag_depth,
            failures.first().map_or("", |f| f.message.as_str())
        )));
    }
    aggregate(
        task,
        estimator,
        master_seed,
        reports,
        failures,
        hits,
        pred_sum,
    )
}

fn aggregate(
    task: &EncodedTask,
    estimator: Estimator,
    master_seed: u64,
    reports: Vec<FitReport>,
    failures: Vec<RepeatFailure>,
    hits: Vec<u32>,
    pred_sum: Vec<f64>,
) -> Result<AggregateReport> {
    let maes: Vec<f64> = reports.iter().map(|r| r.mae).collect();
    let mses: Vec<f64> = reports.iter().map(|r| r.mse).collect();
    let pccs: Vec<f64> = reports.iter().filter_map(|r| r.pcc).collect();
    let param = |key: &str| -> Vec<f64> {
        reports
            .iter()
            .filter_map(|r| r.chosen_params.get(key).copied())
            .collect()
    };
    let alphas = param("alpha");
    let ratios = param("l1_ratio");
    let opt = |v: &[f64], f: fn(&[f64]) -> f64| (!v.is_empty()).then(|| f(v));
    Ok(AggregateReport {
        estimator,
        task: task.lag_depth,
        master_seed,
        n_repeats: reports.len(),
        n_failed: failures.len(),
        mae_mean: mean(&maes),
        mae_sd: std_dev(&maes),
        mse_mean: mean(&mses),
        mse_sd: std_dev(&mses),
        pcc_mean: opt(&pccs, mean),
        pcc_sd: opt(&pccs, std_dev),
        n_pcc_defined: pccs.len(),
        alpha_mean: opt(&alphas, mean),
        alpha_sd: opt(&alphas, std_dev),
        l1ratio_median: opt(&ratios, |v| quantile(v, 0.5)),
        l1ratio_iqr: opt(&ratios, |v| quantile(v, 0.75) - quantile(v, 0.25)),
        mean_holdout_prediction: hits
            .iter()
            .zip(&pred_sum)
            .map(|(&h, &s)| (h > 0).then(|| s / h as f64))
            .collect(),
        hotest_hit_counts: hits,
        instance_keys: task.instance_keys.clone(),
        y_true: task.y.iter().copied().collect(),
        reports,
        failures,
    })
}
