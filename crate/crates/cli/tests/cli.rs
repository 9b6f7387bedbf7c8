use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lemps(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lemps"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Last stderr line parsed as the machine-readable error record.
fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().expect("stderr line")).expect("json error line")
}

fn synth(dir: &Path, spec: &str, out: &str) -> Output {
    std::fs::write(dir.join("spec.json"), spec).unwrap();
    lemps(dir, &["synth", "--config", "spec.json", "--out", out])
}

fn full_config(boundary: &str) -> String {
    let tasks: Vec<String> = (1..=6)
        .map(|m| format!("\"{m}\": {{\"alpha\": 0.001, \"l1_ratio\": 0.5}}"))
        .collect();
    format!(
        "{{\"boundary\": \"{boundary}\", \"tasks\": {{{}}}}}",
        tasks.join(", ")
    )
}

#[test]
fn synth_writes_loadable_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), "{\"seed\": 3, \"n_years\": 4}", "a.csv");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let data = lemps_core::dataset::Dataset::load_csv(dir.path().join("a.csv")).unwrap();
    assert_eq!(data.len(), 48);

    let manifest = read_json(&dir.path().join("a.csv.manifest.json"));
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["inputs"][0]["path"], "spec.json");
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest.get("threads").is_none());

    lemps(
        dir.path(),
        &["synth", "--config", "spec.json", "--out", "b.csv"],
    );
    assert_eq!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn malformed_spec_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = synth(dir.path(), "{\"seed\": 1, \"noise_sd\": \"loud\"}", "x.csv");
    assert_eq!(out.status.code(), Some(2));
    let err = error_record(&out);
    assert_eq!(err["error"], "usage");
    assert_eq!(err["exit"], 2);
    assert!(err["message"].as_str().unwrap().contains("noise_sd"));

    let out = synth(dir.path(), "{\"noise_sd\": -1.0}", "x.csv");
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"]
        .as_str()
        .unwrap()
        .contains("noise_sd"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn select_single_cell_and_unknown_estimator() {
    let dir = tempfile::tempdir().unwrap();
    synth(
        dir.path(),
        "{\"seed\": 5, \"n_years\": 6, \"start_year\": 2010}",
        "d.csv",
    );
    let out = lemps(
        dir.path(),
        &[
            "select",
            "--data",
            "d.csv",
            "--boundary",
            "2014-12",
            "--tasks",
            "1",
            "--estimators",
            "EN",
            "--repeats",
            "2",
            "--out",
            "s.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = read_json(&dir.path().join("s.json"));
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["estimator"], "EN");
    assert_eq!(reports[0]["n_repeats"], 2);
    assert_eq!(reports[0]["reports"].as_array().unwrap().len(), 2);

    let out = lemps(
        dir.path(),
        &[
            "select",
            "--data",
            "d.csv",
            "--boundary",
            "2014-12",
            "--estimators",
            "EN,XGB",
            "--out",
            "s2.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let msg = error_record(&out)["message"].as_str().unwrap().to_string();
    for name in ["EN", "LASSO", "RR", "LARS", "LASSO-LARS-AIC", "RF", "SVR"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn select_rejects_bad_flags_and_short_data() {
    let dir = tempfile::tempdir().unwrap();
    synth(
        dir.path(),
        "{\"seed\": 5, \"n_years\": 2, \"start_year\": 2013}",
        "d.csv",
    );
    let run = |extra: &[&str]| {
        let mut args = vec!["select", "--data", "d.csv", "--out", "s.json"];
        args.extend_from_slice(extra);
        lemps(dir.path(), &args)
    };
    // boundary leaves only 6 training months
    let out = run(&["--boundary", "2013-06", "--tasks", "6", "--repeats", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"]
        .as_str()
        .unwrap()
        .contains("insufficient data"));

    assert_eq!(run(&["--boundary", "2013/12"]).status.code(), Some(2));
    assert_eq!(
        run(&["--boundary", "2013-12", "--tasks", "7"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["--boundary", "2013-12", "--repeats", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lemps(dir.path(), &["select", "--data", "d.csv"])
            .status
            .code(),
        Some(2)
    );
    let missing = lemps(
        dir.path(),
        &[
            "select",
            "--data",
            "nope.csv",
            "--boundary",
            "2013-12",
            "--out",
            "s.json",
        ],
    );
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn tune_en_single_repeat_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    synth(
        dir.path(),
        "{\"seed\": 8, \"n_years\": 8, \"start_year\": 2008}",
        "d.csv",
    );
    let args = [
        "tune-en",
        "--data",
        "d.csv",
        "--boundary",
        "2013-12",
        "--repeats",
        "1",
        "--seed",
        "4",
        "--out",
        "t.json",
    ];
    let out = lemps(dir.path(), &args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = read_json(&dir.path().join("t.json"));
    let tasks = v["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 6);
    for (i, t) in tasks.iter().enumerate() {
        assert_eq!(t["task"], i + 1);
        assert_eq!(t["alpha_sd"].as_f64(), Some(0.0));
        assert_eq!(t["l1ratio_iqr"].as_f64(), Some(0.0));
        assert!(t["alpha_mean"].as_f64().unwrap() > 0.0);
        let inst = t["instances"].as_array().unwrap();
        assert_eq!(inst.len(), 12 * 6 - 1 - i);
        let held_out = inst.iter().filter(|x| x["hotest_hits"] == 1).count();
        let predicted = inst
            .iter()
            .filter(|x| x["mean_holdout_prediction"].is_f64())
            .count();
        assert_eq!(held_out, predicted);
    }
    let cfg = &v["config"]["tasks"];
    assert_eq!(cfg.as_object().unwrap().len(), 6);
    assert_eq!(cfg["3"]["alpha"], tasks[2]["alpha_mean"]);

    // same seed, same bytes; the output feeds validate directly
    lemps(dir.path(), &[&args[..10], &["t2.json"]].concat());
    assert_eq!(
        std::fs::read(dir.path().join("t.json")).unwrap(),
        std::fs::read(dir.path().join("t2.json")).unwrap()
    );
    let out = lemps(
        dir.path(),
        &[
            "validate", "--data", "d.csv", "--config", "t.json", "--out", "v.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("v.csv").exists());
}

#[test]
fn validate_covers_three_years_of_six_tasks() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "{\"seed\": 21}", "d.csv");
    std::fs::write(dir.path().join("cfg.json"), full_config("2014-12")).unwrap();
    let out = lemps(
        dir.path(),
        &[
            "validate",
            "--data",
            "d.csv",
            "--config",
            "cfg.json",
            "--out",
            "v.json",
            "--out-csv",
            "plot.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = read_json(&dir.path().join("v.json"));
    let tasks = v["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 6);
    for t in tasks {
        let years: Vec<i64> = t["yearly"]
            .as_array()
            .unwrap()
            .iter()
            .map(|y| y["year"].as_i64().unwrap())
            .collect();
        assert_eq!(years, vec![2015, 2016, 2017]);
    }
    assert_eq!(v["n_scored"], 216);
    let frac = v["overall_in_band_fraction"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&frac));

    let csv = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 * 37);
    let manifest = read_json(&dir.path().join("v.json.manifest.json"));
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn validate_flags_an_injected_shock() {
    let dir = tempfile::tempdir().unwrap();
    synth(
        dir.path(),
        "{\"seed\": 11, \"shock_months\": [{\"month\": \"2016-07\", \"screening_multiplier\": 0.4, \"prevalence_delta\": 0.25}]}",
        "d.csv",
    );
    std::fs::write(dir.path().join("cfg.json"), full_config("2014-12")).unwrap();
    let out = lemps(
        dir.path(),
        &[
            "validate", "--data", "d.csv", "--config", "cfg.json", "--out", "v.json",
        ],
    );
    assert!(out.status.success());
    let v = read_json(&dir.path().join("v.json"));
    let flagged: Vec<&Value> = v["novelty_flags"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["month"] == "2016-07")
        .collect();
    assert!(!flagged.is_empty());
}

#[test]
fn validate_rejects_incomplete_config() {
    let dir = tempfile::tempdir().unwrap();
    synth(
        dir.path(),
        "{\"seed\": 2, \"n_years\": 6, \"start_year\": 2010}",
        "d.csv",
    );
    std::fs::write(
        dir.path().join("cfg.json"),
        "{\"boundary\": \"2014-12\", \"tasks\": {\"1\": {\"alpha\": 0.01, \"l1_ratio\": 0.5}}}",
    )
    .unwrap();
    let out = lemps(
        dir.path(),
        &[
            "validate", "--data", "d.csv", "--config", "cfg.json", "--out", "v.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"]
        .as_str()
        .unwrap()
        .contains("lag depth 2"));

    std::fs::write(
        dir.path().join("cfg.json"),
        "{\"boundary\": \"2014-12\", \"task\": {}}",
    )
    .unwrap();
    let out = lemps(
        dir.path(),
        &[
            "validate", "--data", "d.csv", "--config", "cfg.json", "--out", "v.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_setting_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), "{}").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lemps"))
        .current_dir(dir.path())
        .env("LEMPS_THREADS", "many")
        .args(["synth", "--config", "spec.json", "--out", "a.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"]
        .as_str()
        .unwrap()
        .contains("LEMPS_THREADS"));
}
