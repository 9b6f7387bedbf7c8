use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use lemps_core::dataset::{encode_task, split_train_validation, Dataset, MonthKey, MAX_LAG};
use lemps_core::evaluation::{repeat_holdout, AggregateReport, Estimator};
use lemps_core::json::to_stable_json;
use lemps_core::pipeline::{config_from_aggregates, run_validation, validation_csv, LempsConfig};
use lemps_core::synth::{generate, SynthSpec};
use serde::{de::DeserializeOwned, Serialize};

use crate::manifest::{self, FileDigest, RunManifest};
use crate::CliError;

pub struct Holdout {
    pub data: PathBuf,
    pub boundary: String,
    pub repeats: usize,
    pub seed: u64,
    pub out: PathBuf,
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))
}

fn write_output(path: &Path, text: &str) -> Result<FileDigest, CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
    Ok(FileDigest::of(path, text.as_bytes()))
}

/// Deserialises JSON, naming the offending field on failure.
fn parse_json<T: DeserializeOwned>(what: &str, text: &[u8]) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_slice(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Usage(format!("{what}: field `{path}`: {}", e.inner()))
    })
}

fn parse_boundary(s: &str) -> Result<MonthKey, CliError> {
    s.parse()
        .map_err(|e: lemps_core::Error| CliError::Usage(format!("--boundary: {e}")))
}

fn load_data(path: &Path, manifest: &mut RunManifest) -> Result<Dataset, CliError> {
    let bytes = read_input(path)?;
    let data = Dataset::from_reader(&bytes[..])
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    manifest.inputs.push(FileDigest::of(path, &bytes));
    Ok(data)
}

fn parse_estimators(names: &[String]) -> Result<Vec<Estimator>, CliError> {
    if names.is_empty() {
        return Ok(Estimator::COMPARISON.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let e: Estimator = n.parse()?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    Ok(out)
}

fn check_tasks(tasks: &[usize]) -> Result<Vec<usize>, CliError> {
    let mut seen = BTreeSet::new();
    for &m in tasks {
        if !(1..=MAX_LAG).contains(&m) {
            return Err(CliError::Usage(format!(
                "--tasks: lag depth {m} outside 1..={MAX_LAG}"
            )));
        }
        if !seen.insert(m) {
            return Err(CliError::Usage(format!("--tasks: lag depth {m} repeated")));
        }
    }
    if tasks.is_empty() {
        return Err(CliError::Usage("--tasks: empty list".into()));
    }
    Ok(tasks.to_vec())
}

fn holdout_grid(
    data: &Dataset,
    boundary: MonthKey,
    tasks: &[usize],
    estimators: &[Estimator],
    repeats: usize,
    seed: u64,
) -> Result<Vec<AggregateReport>, CliError> {
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be >= 1".into()));
    }
    let (train, _) = split_train_validation(data, boundary)?;
    let encoded = tasks
        .iter()
        .map(|&m| encode_task(&train, m, None))
        .collect::<lemps_core::Result<Vec<_>>>()?;
    let mut reports = Vec::with_capacity(tasks.len() * estimators.len());
    for &e in estimators {
        for task in &encoded {
            reports.push(repeat_holdout(task, e, repeats, seed)?);
        }
    }
    Ok(reports)
}

fn finish<T: Serialize>(mut manifest: RunManifest, out: &Path, value: &T) -> Result<(), CliError> {
    let text = to_stable_json(value)?;
    manifest.outputs.push(write_output(out, &text)?);
    manifest::write(&manifest, out)
}

pub fn synth(config: &Path, out: &Path, argv: Vec<String>) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("synth", argv);
    let bytes = read_input(config)?;
    let spec: SynthSpec = parse_json("synth spec", &bytes)?;
    manifest.inputs.push(FileDigest::of(config, &bytes));
    manifest.seed = Some(spec.seed);
    manifest.param("spec", &spec);
    let data = generate(&spec)?;
    let csv = data.to_csv_string();
    manifest.outputs.push(write_output(out, &csv)?);
    manifest::write(&manifest, out)
}

#[derive(Serialize)]
struct SelectOutput<'a> {
    boundary: MonthKey,
    master_seed: u64,
    repeats: usize,
    tasks: &'a [usize],
    estimators: Vec<Estimator>,
    reports: Vec<AggregateReport>,
}

pub fn select(
    args: &Holdout,
    tasks: &[usize],
    estimators: &[String],
    argv: Vec<String>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("select", argv);
    let estimators = parse_estimators(estimators)?;
    let tasks = check_tasks(tasks)?;
    let boundary = parse_boundary(&args.boundary)?;
    let data = load_data(&args.data, &mut manifest)?;
    manifest.seed = Some(args.seed);
    manifest.param("boundary", boundary);
    manifest.param("repeats", args.repeats);
    manifest.param("tasks", &tasks);
    manifest.param("estimators", &estimators);

    let reports = holdout_grid(
        &data,
        boundary,
        &tasks,
        &estimators,
        args.repeats,
        args.seed,
    )?;
    let output = SelectOutput {
        boundary,
        master_seed: args.seed,
        repeats: args.repeats,
        tasks: &tasks,
        estimators,
        reports,
    };
    finish(manifest, &args.out, &output)
}

#[derive(Serialize)]
struct InstanceSummary {
    /// Last month of the lag window; the target is the month after.
    instance: MonthKey,
    y_true: f64,
    mean_holdout_prediction: Option<f64>,
    hotest_hits: u32,
}

#[derive(Serialize)]
struct TaskSummary {
    task: usize,
    n_repeats: usize,
    n_failed: usize,
    alpha_mean: Option<f64>,
    alpha_sd: Option<f64>,
    l1ratio_median: Option<f64>,
    l1ratio_iqr: Option<f64>,
    mae_mean: f64,
    mse_mean: f64,
    pcc_mean: Option<f64>,
    instances: Vec<InstanceSummary>,
}

impl TaskSummary {
    fn of(a: &AggregateReport) -> Self {
        let instances = a
            .instance_keys
            .iter()
            .zip(&a.y_true)
            .zip(a.mean_holdout_prediction.iter().zip(&a.hotest_hit_counts))
            .map(|((&instance, &y_true), (&pred, &hits))| InstanceSummary {
                instance,
                y_true,
                mean_holdout_prediction: pred,
                hotest_hits: hits,
            })
            .collect();
        TaskSummary {
            task: a.task,
            n_repeats: a.n_repeats,
            n_failed: a.n_failed,
            alpha_mean: a.alpha_mean,
            alpha_sd: a.alpha_sd,
            l1ratio_median: a.l1ratio_median,
            l1ratio_iqr: a.l1ratio_iqr,
            mae_mean: a.mae_mean,
            mse_mean: a.mse_mean,
            pcc_mean: a.pcc_mean,
            instances,
        }
    }
}

#[derive(Serialize)]
struct TuneOutput {
    boundary: MonthKey,
    master_seed: u64,
    repeats: usize,
    /// Ready for `validate --config`.
    config: LempsConfig,
    tasks: Vec<TaskSummary>,
    aggregates: Vec<AggregateReport>,
}

pub fn tune_en(args: &Holdout, argv: Vec<String>) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("tune-en", argv);
    let boundary = parse_boundary(&args.boundary)?;
    let data = load_data(&args.data, &mut manifest)?;
    manifest.seed = Some(args.seed);
    manifest.param("boundary", boundary);
    manifest.param("repeats", args.repeats);

    let tasks: Vec<usize> = (1..=MAX_LAG).collect();
    let aggregates = holdout_grid(
        &data,
        boundary,
        &tasks,
        &[Estimator::TunedElasticNet],
        args.repeats,
        args.seed,
    )?;
    let config = config_from_aggregates(&aggregates, boundary)?;
    let output = TuneOutput {
        boundary,
        master_seed: args.seed,
        repeats: args.repeats,
        config,
        tasks: aggregates.iter().map(TaskSummary::of).collect(),
        aggregates,
    };
    finish(manifest, &args.out, &output)
}

/// A config file, or a tune-en output carrying one under `config`.
fn load_config(path: &Path, manifest: &mut RunManifest) -> Result<LempsConfig, CliError> {
    let bytes = read_input(path)?;
    let value: serde_json::Value = parse_json("config", &bytes)?;
    let inner = match value.get("config") {
        Some(c) if value.get("aggregates").is_some() => c.clone(),
        _ => value,
    };
    let config: LempsConfig = serde_path_to_error::deserialize(inner)
        .map_err(|e| CliError::Usage(format!("config: field `{}`: {}", e.path(), e.inner())))?;
    manifest.inputs.push(FileDigest::of(path, &bytes));
    Ok(config)
}

pub fn validate(
    data: &Path,
    boundary: Option<&str>,
    config: &Path,
    out: &Path,
    out_csv: &Path,
    argv: Vec<String>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("validate", argv);
    let dataset = load_data(data, &mut manifest)?;
    let mut config = load_config(config, &mut manifest)?;
    if let Some(b) = boundary {
        config.boundary = parse_boundary(b)?;
        manifest.param("boundary_override", config.boundary);
    }
    config.validate()?;
    manifest.param("config", &config);

    let report = run_validation(&dataset, &config)?;
    let csv = validation_csv(&report);
    manifest.outputs.push(write_output(out_csv, &csv)?);
    finish(manifest, out, &report)
}
