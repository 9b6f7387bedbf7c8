//! Final elastic-net forecaster: train on every training month, predict the
//! validation months, score them per year and against an asymmetric
//! tolerance band, and flag anomalous months.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{encode_task, lag_window, split_train_validation, Dataset, MonthKey, MAX_LAG};
use crate::error::{Error, Result};
use crate::evaluation::{mae, mean, mse, pcc, std_dev, AggregateReport, Estimator};
use crate::linear::{fit_elastic_net, LinearModel};

pub const TOLERANCE_UPPER: f64 = 0.1;
pub const TOLERANCE_LOWER: f64 = -0.05;
pub const NOVELTY_WINDOW_SDS: f64 = 3.0;
/// Contiguous blocks used to get out-of-sample training residuals.
pub const HISTORY_FOLDS: usize = 5;

const CD_TOL: f64 = 1e-6;
const CD_MAX_ITER: usize = 10_000;
const SD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    pub alpha: f64,
    pub l1_ratio: f64,
}

fn default_upper() -> f64 {
    TOLERANCE_UPPER
}

fn default_lower() -> f64 {
    TOLERANCE_LOWER
}

fn default_window() -> f64 {
    NOVELTY_WINDOW_SDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LempsConfig {
    /// Lag depth to elastic-net parameters.
    pub tasks: BTreeMap<usize, TaskParams>,
    pub boundary: MonthKey,
    #[serde(default = "default_upper")]
    pub tolerance_upper: f64,
    #[serde(default = "default_lower")]
    pub tolerance_lower: f64,
    #[serde(default = "default_window")]
    pub novelty_window_sds: f64,
}

impl LempsConfig {
    pub fn validate(&self) -> Result<()> {
        for m in 1..=MAX_LAG {
            let Some(p) = self.tasks.get(&m) else {
                return Err(Error::param(format!(
                    "tasks: lag depth {m} is not configured"
                )));
            };
            if !(p.alpha >= 0.0 && p.alpha.is_finite()) {
                return Err(Error::param(format!(
                    "tasks.{m}.alpha must be >= 0, got {}",
                    p.alpha
                )));
            }
            if !(0.0..=1.0).contains(&p.l1_ratio) {
                return Err(Error::param(format!(
                    "tasks.{m}.l1_ratio must lie in [0, 1], got {}",
                    p.l1_ratio
                )));
            }
        }
        if let Some(m) = self.tasks.keys().find(|m| !(1..=MAX_LAG).contains(*m)) {
            return Err(Error::param(format!(
                "tasks: lag depth {m} outside 1..={MAX_LAG}"
            )));
        }
        if !(self.tolerance_upper > 0.0 && self.tolerance_lower < 0.0) {
            return Err(Error::param(
                "tolerance_upper must be > 0 and tolerance_lower < 0",
            ));
        }
        if !(self.novelty_window_sds > 0.0) {
            return Err(Error::param("novelty_window_sds must be > 0"));
        }
        Ok(())
    }

    fn task(&self, m: usize) -> Result<TaskParams> {
        self.tasks
            .get(&m)
            .copied()
            .ok_or_else(|| Error::param(format!("tasks: lag depth {m} is not configured")))
    }
}

/// Per task, the mean selected alpha and the median selected l1 ratio of the
/// tuned elastic-net aggregates (falling back to the fixed-ratio ones).
pub fn config_from_aggregates(
    reports: &[AggregateReport],
    boundary: MonthKey,
) -> Result<LempsConfig> {
    let mut tasks = BTreeMap::new();
    for m in 1..=MAX_LAG {
        let pick = |e: Estimator| reports.iter().find(|r| r.task == m && r.estimator == e);
        let report = pick(Estimator::TunedElasticNet)
            .or_else(|| pick(Estimator::ElasticNet))
            .ok_or_else(|| Error::param(format!("no elastic-net aggregate for lag depth {m}")))?;
        let (Some(alpha), Some(l1_ratio)) = (report.alpha_mean, report.l1ratio_median) else {
            return Err(Error::param(format!(
                "aggregate for lag depth {m} carries no alpha/l1 ratio"
            )));
        };
        tasks.insert(m, TaskParams { alpha, l1_ratio });
    }
    let config = LempsConfig {
        tasks,
        boundary,
        tolerance_upper: TOLERANCE_UPPER,
        tolerance_lower: TOLERANCE_LOWER,
        novelty_window_sds: NOVELTY_WINDOW_SDS,
    };
    config.validate()?;
    Ok(config)
}

/// Fits the task-`m` elastic net on every encodable training month.
/// No horizon month is used, so validation data never reaches the fit.
pub fn train_final(train: &Dataset, config: &LempsConfig, m: usize) -> Result<LinearModel> {
    let p = config.task(m)?;
    let task = encode_task(train, m, None)?;
    fit_elastic_net(&task.x, &task.y, p.alpha, p.l1_ratio, CD_TOL, CD_MAX_ITER)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Rainy,
    Dry,
}

impl Season {
    /// Rainy from April to November.
    pub fn of(key: MonthKey) -> Season {
        if (4..=11).contains(&key.month()) {
            Season::Rainy
        } else {
            Season::Dry
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Season::Rainy => "rainy",
            Season::Dry => "dry",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Novelty {
    Normal,
    Flagged,
    InsufficientHistory,
    /// Truth unavailable, nothing to judge.
    Unscored,
}

impl fmt::Display for Novelty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Novelty::Normal => "normal",
            Novelty::Flagged => "flagged",
            Novelty::InsufficientHistory => "insufficient-history",
            Novelty::Unscored => "unscored",
        })
    }
}

/// One next-month forecast. `target` is the month being predicted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyPrediction {
    pub instance: MonthKey,
    pub target: MonthKey,
    pub y_true: Option<f64>,
    /// Clamped to [0, 1].
    pub y_pred: f64,
    pub y_pred_raw: f64,
    pub clamped: bool,
    pub in_band: Option<bool>,
    pub season: Season,
    pub novelty: Novelty,
    /// Residual z-score against the same calendar month's history.
    pub novelty_z: Option<f64>,
}

impl MonthlyPrediction {
    pub fn residual(&self) -> Option<f64> {
        self.y_true.map(|y| y - self.y_pred)
    }
}

/// Forecasts every month from the last training month through the last
/// validation month. Lag windows may reach back into training months; the
/// final forecast has no truth and is left unscored.
pub fn predict_validation(
    model: &LinearModel,
    train: &Dataset,
    validation: &Dataset,
    m: usize,
) -> Result<Vec<MonthlyPrediction>> {
    let all = train.concat(validation)?;
    let recs = all.records();
    let start = train.len() - 1;
    let mut out = Vec::with_capacity(validation.len() + 1);
    for end in start..recs.len() {
        let Some(row) = lag_window(recs, end, m) else {
            continue;
        };
        let raw = model.predict_row(&row);
        let y_pred = raw.clamp(0.0, 1.0);
        let target = recs[end].key.succ();
        out.push(MonthlyPrediction {
            instance: recs[end].key,
            target,
            y_true: recs.get(end + 1).map(|r| r.prev),
            y_pred,
            y_pred_raw: raw,
            clamped: y_pred != raw,
            in_band: None,
            season: Season::of(target),
            novelty: Novelty::Unscored,
            novelty_z: None,
        });
    }
    Ok(out)
}

/// Closed band `[y + lower, y + upper]`.
pub fn in_band(y: f64, y_pred: f64, lower: f64, upper: f64) -> bool {
    y_pred >= y + lower && y_pred <= y + upper
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandCount {
    pub n: usize,
    pub n_in_band: usize,
    /// Missing when `n` is zero.
    pub fraction: Option<f64>,
}

impl BandCount {
    fn add(&mut self, hit: bool) {
        self.n += 1;
        self.n_in_band += usize::from(hit);
        self.fraction = Some(self.n_in_band as f64 / self.n as f64);
    }

    fn empty() -> Self {
        BandCount {
            n: 0,
            n_in_band: 0,
            fraction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSummary {
    pub overall: BandCount,
    pub rainy: BandCount,
    pub dry: BandCount,
    /// One flag per input pair.
    pub flags: Vec<bool>,
}

/// `(target month, truth, prediction)` triples against the tolerance band.
pub fn tolerance_band_eval(pairs: &[(MonthKey, f64, f64)], lower: f64, upper: f64) -> BandSummary {
    let mut s = BandSummary {
        overall: BandCount::empty(),
        rainy: BandCount::empty(),
        dry: BandCount::empty(),
        flags: Vec::with_capacity(pairs.len()),
    };
    for &(key, y, f) in pairs {
        let hit = in_band(y, f, lower, upper);
        s.overall.add(hit);
        match Season::of(key) {
            Season::Rainy => s.rainy.add(hit),
            Season::Dry => s.dry.add(hit),
        }
        s.flags.push(hit);
    }
    s
}

/// Signed residuals `y - y_hat` keyed by the month they refer to.
pub type ResidualHistory = [(MonthKey, f64)];

/// Out-of-sample residuals on the training months: the encoded training
/// task is cut into contiguous blocks and each block is predicted by a fit
/// on the others, with the same elastic-net parameters.
pub fn training_residuals(
    train: &Dataset,
    params: TaskParams,
    m: usize,
) -> Result<Vec<(MonthKey, f64)>> {
    let task = encode_task(train, m, None)?;
    let n = task.n_instances();
    let k = HISTORY_FOLDS.min(n);
    if k < 2 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let test: Vec<usize> = (start..start + size).collect();
        let fit_rows: Vec<usize> = (0..start).chain(start + size..n).collect();
        let x = DMatrix::from_fn(fit_rows.len(), task.n_features(), |r, j| {
            task.x[(fit_rows[r], j)]
        });
        let y = nalgebra::DVector::from_fn(fit_rows.len(), |r, _| task.y[fit_rows[r]]);
        let model = fit_elastic_net(&x, &y, params.alpha, params.l1_ratio, CD_TOL, CD_MAX_ITER)?;
        for &i in &test {
            let row: Vec<f64> = task.x.row(i).iter().copied().collect();
            let pred = model.predict_row(&row).clamp(0.0, 1.0);
            out.push((task.instance_keys[i].succ(), task.y[i] - pred));
        }
        start += size;
    }
    Ok(out)
}

/// Marks each scored prediction by the z-score of its residual against the
/// residuals of the same calendar month in earlier years: the training
/// history plus earlier validation years. A month is flagged when
/// `|r - mean| / sd > window_sds`; fewer than two history values leave it
/// as insufficient history. Returns the updated predictions.
pub fn novelty_flag(
    predictions: &[MonthlyPrediction],
    training_history: &ResidualHistory,
    window_sds: f64,
) -> Vec<MonthlyPrediction> {
    predictions
        .iter()
        .map(|p| {
            let mut p = p.clone();
            let Some(r) = p.residual() else {
                p.novelty = Novelty::Unscored;
                p.novelty_z = None;
                return p;
            };
            let month = p.target.month();
            let year = p.target.year();
            let history: Vec<f64> = training_history
                .iter()
                .filter(|(k, _)| k.month() == month && k.year() < year)
                .map(|(_, v)| *v)
                .chain(
                    predictions
                        .iter()
                        .filter(|q| q.target.month() == month && q.target.year() < year)
                        .filter_map(MonthlyPrediction::residual),
                )
                .collect();
            if history.len() < 2 {
                p.novelty = Novelty::InsufficientHistory;
                p.novelty_z = None;
                return p;
            }
            let z = (r - mean(&history)).abs() / std_dev(&history).max(SD_FLOOR);
            p.novelty_z = Some(z);
            p.novelty = if z > window_sds {
                Novelty::Flagged
            } else {
                Novelty::Normal
            };
            p
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearMetrics {
    pub year: i32,
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    pub pcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskValidation {
    pub task: usize,
    pub alpha: f64,
    pub l1_ratio: f64,
    pub converged: bool,
    pub predictions: Vec<MonthlyPrediction>,
    /// Grouped by the year of the predicted month.
    pub yearly: Vec<YearMetrics>,
    pub band: BandSummary,
    /// MAE of predicting next month's prevalence as this month's.
    pub persistence_mae: f64,
    pub mae: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedMonth {
    pub task: usize,
    pub month: MonthKey,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub boundary: MonthKey,
    pub tolerance_lower: f64,
    pub tolerance_upper: f64,
    pub novelty_window_sds: f64,
    pub tasks: Vec<TaskValidation>,
    pub n_scored: usize,
    pub n_in_band: usize,
    pub overall_in_band_fraction: f64,
    pub rainy_in_band_fraction: Option<f64>,
    pub dry_in_band_fraction: Option<f64>,
    pub novelty_flags: Vec<FlaggedMonth>,
}

fn yearly_metrics(preds: &[MonthlyPrediction]) -> Result<Vec<YearMetrics>> {
    let mut by_year: BTreeMap<i32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in preds {
        if let Some(y) = p.y_true {
            let e = by_year.entry(p.target.year()).or_default();
            e.0.push(y);
            e.1.push(p.y_pred);
        }
    }
    by_year
        .into_iter()
        .map(|(year, (y, f))| {
            Ok(YearMetrics {
                year,
                n: y.len(),
                mae: mae(&y, &f)?,
                mse: mse(&y, &f)?,
                pcc: pcc(&y, &f).ok(),
            })
        })
        .collect()
}

/// Runs one lag depth end to end.
pub fn validate_task(
    train: &Dataset,
    validation: &Dataset,
    config: &LempsConfig,
    m: usize,
) -> Result<TaskValidation> {
    let params = config.task(m)?;
    let model = train_final(train, config, m)?;
    let preds = predict_validation(&model, train, validation, m)?;
    let history = training_residuals(train, params, m)?;
    let mut preds = novelty_flag(&preds, &history, config.novelty_window_sds);

    let scored: Vec<(MonthKey, f64, f64)> = preds
        .iter()
        .filter_map(|p| p.y_true.map(|y| (p.target, y, p.y_pred)))
        .collect();
    if scored.is_empty() {
        return Err(Error::InsufficientData(
            "validation has no scored month".into(),
        ));
    }
    let band = tolerance_band_eval(&scored, config.tolerance_lower, config.tolerance_upper);
    let mut flags = band.flags.iter();
    for p in preds.iter_mut().filter(|p| p.y_true.is_some()) {
        p.in_band = flags.next().copied();
    }

    let all = train.concat(validation)?;
    let (ys, fs): (Vec<f64>, Vec<f64>) = scored.iter().map(|(_, y, f)| (*y, *f)).unzip();
    let persistence: Vec<f64> = preds
        .iter()
        .filter(|p| p.y_true.is_some())
        .map(|p| all.get(p.instance).map_or(f64::NAN, |r| r.prev))
        .collect();
    Ok(TaskValidation {
        task: m,
        alpha: params.alpha,
        l1_ratio: params.l1_ratio,
        converged: model.converged,
        yearly: yearly_metrics(&preds)?,
        band,
        persistence_mae: mae(&ys, &persistence)?,
        mae: mae(&ys, &fs)?,
        mse: mse(&ys, &fs)?,
        predictions: preds,
    })
}

/// Splits `data` at the configured boundary and validates every configured task.
pub fn run_validation(data: &Dataset, config: &LempsConfig) -> Result<ValidationReport> {
    config.validate()?;
    let (train, validation) = split_train_validation(data, config.boundary)?;
    let tasks: Vec<TaskValidation> = config
        .tasks
        .keys()
        .copied()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|m| validate_task(&train, &validation, config, m))
        .collect::<Result<_>>()?;

    let (mut n, mut hits) = (0, 0);
    let (mut rainy, mut dry) = (BandCount::empty(), BandCount::empty());
    let mut novelty_flags = Vec::new();
    for t in &tasks {
        n += t.band.overall.n;
        hits += t.band.overall.n_in_band;
        for p in &t.predictions {
            if let Some(hit) = p.in_band {
                match p.season {
                    Season::Rainy => rainy.add(hit),
                    Season::Dry => dry.add(hit),
                }
            }
            if p.novelty == Novelty::Flagged {
                novelty_flags.push(FlaggedMonth {
                    task: t.task,
                    month: p.target,
                    z: p.novelty_z.unwrap_or(f64::NAN),
                });
            }
        }
    }
    Ok(ValidationReport {
        boundary: config.boundary,
        tolerance_lower: config.tolerance_lower,
        tolerance_upper: config.tolerance_upper,
        novelty_window_sds: config.novelty_window_sds,
        tasks,
        n_scored: n,
        n_in_band: hits,
        overall_in_band_fraction: hits as f64 / n as f64,
        rainy_in_band_fraction: rainy.fraction,
        dry_in_band_fraction: dry.fraction,
        novelty_flags,
    })
}

/// Header of [`validation_csv`].
pub const VALIDATION_CSV_HEADER: &str = "task,year,month,y_true,y_pred,in_band,season,novelty";

/// Flat per-month rows; `year`/`month` name the predicted month and empty
/// cells mark missing truth.
pub fn validation_csv(report: &ValidationReport) -> String {
    let mut out = String::from(VALIDATION_CSV_HEADER);
    out.push('\n');
    for t in &report.tasks {
        for p in &t.predictions {
            let y = p.y_true.map_or(String::new(), |v| v.to_string());
            let band = p.in_band.map_or(String::new(), |b| b.to_string());
            out.push_str(&format!(
                "{},{},{},{y},{},{band},{},{}\n",
                t.task,
                p.target.year(),
                p.target.month(),
                p.y_pred,
                p.season,
                p.novelty
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split_train_validation;
    use crate::linear::fit_ols;
    use crate::synth::{generate, Shock, SynthSpec};

    fn config(alpha: f64, l1_ratio: f64, boundary: MonthKey) -> LempsConfig {
        LempsConfig {
            tasks: (1..=MAX_LAG)
                .map(|m| (m, TaskParams { alpha, l1_ratio }))
                .collect(),
            boundary,
            tolerance_upper: TOLERANCE_UPPER,
            tolerance_lower: TOLERANCE_LOWER,
            novelty_window_sds: NOVELTY_WINDOW_SDS,
        }
    }

    fn data(seed: u64) -> (Dataset, Dataset, MonthKey) {
        let d = generate(&SynthSpec {
            seed,
            ..SynthSpec::default()
        })
        .unwrap();
        let b = MonthKey::new(2014, 12).unwrap();
        let (t, v) = split_train_validation(&d, b).unwrap();
        (t, v, b)
    }

    #[test]
    fn band_examples() {
        assert!(in_band(0.30, 0.38, TOLERANCE_LOWER, TOLERANCE_UPPER));
        assert!(!in_band(0.30, 0.24, TOLERANCE_LOWER, TOLERANCE_UPPER));
        assert!(in_band(0.30, 0.40, TOLERANCE_LOWER, TOLERANCE_UPPER));
        assert!(in_band(0.30, 0.30 + 0.07, TOLERANCE_LOWER, TOLERANCE_UPPER));
        assert!(!in_band(
            0.30,
            0.30 - 0.07,
            TOLERANCE_LOWER,
            TOLERANCE_UPPER
        ));
    }

    #[test]
    fn band_summary_counts_by_season() {
        let k = |m| MonthKey::new(2015, m).unwrap();
        let pairs = [
            (k(1), 0.3, 0.3),
            (k(5), 0.3, 0.2),
            (k(6), 0.3, 0.35),
            (k(12), 0.3, 0.5),
        ];
        let s = tolerance_band_eval(&pairs, TOLERANCE_LOWER, TOLERANCE_UPPER);
        assert_eq!(s.flags, vec![true, false, true, false]);
        assert_eq!((s.overall.n, s.overall.n_in_band), (4, 2));
        assert_eq!(
            (s.rainy.n, s.rainy.n_in_band, s.dry.n, s.dry.n_in_band),
            (2, 1, 2, 1)
        );
        assert_eq!(s.overall.fraction, Some(0.5));
    }

    #[test]
    fn unpenalised_fit_matches_ols() {
        let (train, _, b) = data(1);
        let cfg = config(0.0, 1.0, b);
        let en = train_final(&train, &cfg, 1).unwrap();
        let task = encode_task(&train, 1, None).unwrap();
        let ols = fit_ols(&task.x, &task.y).unwrap();
        let d = (en.predict(&task.x).unwrap() - ols.predict(&task.x).unwrap()).amax();
        assert!(d < 1e-6, "{d}");
        assert_eq!(en, train_final(&train, &cfg, 1).unwrap());
    }

    #[test]
    fn huge_alpha_predicts_training_mean() {
        let (train, _, b) = data(2);
        let en = train_final(&train, &config(1e6, 0.5, b), 2).unwrap();
        let task = encode_task(&train, 2, None).unwrap();
        assert_eq!(en.nonzero_count(), 0);
        assert!((en.intercept - task.y.mean()).abs() < 1e-15);
    }

    #[test]
    fn validation_windows_cross_the_boundary() {
        let (train, val, b) = data(3);
        let model = train_final(&train, &config(1e-3, 0.5, b), 6).unwrap();
        let preds = predict_validation(&model, &train, &val, 6).unwrap();
        assert_eq!(preds.len(), 37);
        assert_eq!(preds[0].instance, b);
        assert_eq!(preds[0].target, MonthKey::new(2015, 1).unwrap());
        assert_eq!(preds.iter().filter(|p| p.y_true.is_some()).count(), 36);
        assert_eq!(preds.last().unwrap().y_true, None);
        // January's window: five training months plus the boundary month
        let all = train.concat(&val).unwrap();
        let end = all.len() - val.len() - 1;
        let row = lag_window(all.records(), end, 6).unwrap();
        assert!((preds[0].y_pred_raw - model.predict_row(&row)).abs() == 0.0);
        let gap = generate(&SynthSpec {
            seed: 3,
            start_year: 2016,
            n_years: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        assert!(matches!(
            predict_validation(&model, &train, &gap, 6),
            Err(Error::Continuity { .. })
        ));
    }

    #[test]
    fn validation_months_never_reach_training() {
        let (train, val, b) = data(4);
        let cfg = config(1e-3, 0.7, b);
        let base: Vec<LinearModel> = (1..=6)
            .map(|m| train_final(&train, &cfg, m).unwrap())
            .collect();
        let mut recs = val.records().to_vec();
        for (i, r) in recs.iter_mut().enumerate() {
            r.prev = (i as f64 * 0.37).fract();
        }
        let perturbed = Dataset::new(recs).unwrap();
        let joined = train.concat(&perturbed).unwrap();
        let (train2, _) = split_train_validation(&joined, b).unwrap();
        for m in 1..=6 {
            assert_eq!(base[m - 1], train_final(&train2, &cfg, m).unwrap());
        }
    }

    fn pred(year: i32, month: u32, y: f64, f: f64) -> MonthlyPrediction {
        let target = MonthKey::new(year, month).unwrap();
        MonthlyPrediction {
            instance: target.pred(),
            target,
            y_true: Some(y),
            y_pred: f,
            y_pred_raw: f,
            clamped: false,
            in_band: None,
            season: Season::of(target),
            novelty: Novelty::Unscored,
            novelty_z: None,
        }
    }

    #[test]
    fn novelty_rules() {
        let k = |y, m| MonthKey::new(y, m).unwrap();
        let history = vec![(k(2012, 3), 0.01), (k(2013, 3), -0.01), (k(2014, 3), 0.03)];
        let mean_r = 0.01;
        let preds = vec![
            pred(2015, 3, 0.3, 0.3 - mean_r),
            pred(2016, 3, 0.3, 0.0),
            pred(2015, 4, 0.3, 0.3),
        ];
        let out = novelty_flag(&preds, &history, 3.0);
        assert_eq!(out[0].novelty, Novelty::Normal);
        assert!(out[0].novelty_z.unwrap() < 1e-12);
        // 0.3 is ten times every historical residual
        assert_eq!(out[1].novelty, Novelty::Flagged);
        assert_eq!(out[2].novelty, Novelty::InsufficientHistory);
        let mut unscored = pred(2017, 3, 0.0, 0.1);
        unscored.y_true = None;
        assert_eq!(
            novelty_flag(&[unscored], &history, 3.0)[0].novelty,
            Novelty::Unscored
        );
    }

    #[test]
    fn shock_month_z_score_recomputed_by_hand() {
        let shock = MonthKey::new(2017, 9).unwrap();
        let spec = SynthSpec {
            seed: 11,
            shock_months: vec![Shock {
                month: shock,
                screening_multiplier: 0.3,
                prevalence_delta: -0.15,
            }],
            ..SynthSpec::default()
        };
        let d = generate(&spec).unwrap();
        let b = MonthKey::new(2014, 12).unwrap();
        let cfg = config(1e-3, 0.5, b);
        let (train, val) = split_train_validation(&d, b).unwrap();
        let t = validate_task(&train, &val, &cfg, 1).unwrap();
        let p = t.predictions.iter().find(|p| p.target == shock).unwrap();
        assert_eq!(p.novelty, Novelty::Flagged);
        let hist: Vec<f64> = training_residuals(&train, cfg.tasks[&1], 1)
            .unwrap()
            .into_iter()
            .filter(|(k, _)| k.month() == 9)
            .map(|(_, r)| r)
            .chain(
                t.predictions
                    .iter()
                    .filter(|q| q.target.month() == 9 && q.target.year() < 2017)
                    .map(|q| q.y_true.unwrap() - q.y_pred),
            )
            .collect();
        let n = hist.len() as f64;
        let mu = hist.iter().sum::<f64>() / n;
        let sd = (hist.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
        let z = ((p.y_true.unwrap() - p.y_pred) - mu).abs() / sd;
        assert!((z - p.novelty_z.unwrap()).abs() < 1e-9);
        assert!(z > 3.0);
    }

    #[test]
    fn full_report_structure() {
        let d = generate(&SynthSpec {
            seed: 5,
            ..SynthSpec::default()
        })
        .unwrap();
        let b = MonthKey::new(2014, 12).unwrap();
        let r = run_validation(&d, &config(1e-3, 0.5, b)).unwrap();
        assert_eq!(r.tasks.len(), 6);
        assert_eq!(r.n_scored, 216);
        for t in &r.tasks {
            assert_eq!(
                t.yearly.iter().map(|y| y.year).collect::<Vec<_>>(),
                vec![2015, 2016, 2017]
            );
            for ym in &t.yearly {
                let (y, f): (Vec<f64>, Vec<f64>) = t
                    .predictions
                    .iter()
                    .filter(|p| p.target.year() == ym.year && p.y_true.is_some())
                    .map(|p| (p.y_true.unwrap(), p.y_pred))
                    .unzip();
                assert_eq!(ym.mae, mae(&y, &f).unwrap());
                assert_eq!(ym.mse, mse(&y, &f).unwrap());
            }
        }
        let hits = r
            .tasks
            .iter()
            .flat_map(|t| &t.predictions)
            .filter(|p| p.in_band == Some(true))
            .count();
        assert_eq!(r.overall_in_band_fraction, hits as f64 / 216.0);
        let csv = validation_csv(&r);
        assert_eq!(csv.lines().count(), 1 + 6 * 37);
        assert!(csv.starts_with(VALIDATION_CSV_HEADER));
    }

    #[test]
    fn config_checks() {
        let b = MonthKey::new(2014, 12).unwrap();
        let mut c = config(0.1, 0.5, b);
        assert!(c.validate().is_ok());
        c.tasks.remove(&4);
        assert!(c.validate().unwrap_err().to_string().contains("4"));
        let mut c = config(0.1, 1.5, b);
        assert!(c.validate().is_err());
        c = config(0.1, 0.5, b);
        c.tolerance_lower = 0.01;
        assert!(c.validate().is_err());
        let text = r#"{"boundary":"2014-12","tasks":{"1":{"alpha":0.1,"l1_ratio":0.5}}}"#;
        let parsed: LempsConfig = serde_json::from_str(text).unwrap();
        assert_eq!(parsed.tolerance_upper, TOLERANCE_UPPER);
        assert!(parsed.validate().is_err());
    }
}
