//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_confattr"))
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn role_preset_config(out_dir: &Path, extra: serde_json::Value) -> serde_json::Value {
    let mut cfg = serde_json::json!({
        "dataset": { "dgp": { "kind": "role_preset", "p": 4, "n": 60, "seed": 0 } },
        "backend": { "kind": "knn_regressor", "k": null },
        "estimator": { "method": "exact" },
        "seeds": [0],
        "output_dir": out_dir,
    });
    if let (Some(base), Some(add)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in add {
            base.insert(k.clone(), v.clone());
        }
    }
    cfg
}

#[test]
fn dgp_writes_dataset_roles_and_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let cfg = write_config(tmp.path(), "cfg.json", role_preset_config(&out, serde_json::json!({})));
    let result = bin().args(["dgp", "--config"]).arg(&cfg).output().unwrap();
    assert!(result.status.success(), "{}", stderr(&result));
    assert!(stdout(&result).contains("n=60 p=4"));

    let dataset = fs::read_to_string(out.join("seed_0/dataset.csv")).unwrap();
    assert!(dataset.starts_with("x1,x2,x3,x4,a,y\n"));
    assert_eq!(dataset.lines().count(), 61);

    let roles = fs::read_to_string(out.join("seed_0/roles.csv")).unwrap();
    assert!(roles.starts_with("name,role\n"));
    assert!(roles.contains("x2,confounder"));

    let tau = fs::read_to_string(out.join("seed_0/tau.csv")).unwrap();
    assert_eq!(tau.lines().count(), 61);
}

#[test]
fn dgp_rejects_csv_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cfg.json",
        serde_json::json!({
            "dataset": { "csv": { "path": tmp.path().join("none.csv") } },
            "output_dir": tmp.path().join("runs"),
        }),
    );
    let result = bin().args(["dgp", "--config"]).arg(&cfg).output().unwrap();
    assert!(!result.status.success());
    assert!(stderr(&result).contains("generator dataset source"));
}

fn cancellation_config(out_dir: &Path) -> serde_json::Value {
    serde_json::json!({
        "dataset": { "dgp": { "kind": "cancellation_exact", "reps": 1 } },
        "backend": { "kind": "exact_cell_mean", "max_cardinality": 16 },
        "estimator": { "method": "exact" },
        "seeds": [0],
        "output_dir": out_dir,
    })
}

fn manifest_without_wall_time(path: &Path) -> serde_json::Value {
    let mut value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    value.as_object_mut().unwrap().remove("wall_time_ms");
    value
}

#[test]
fn attribute_writes_ranked_outputs_and_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let cfg = write_config(tmp.path(), "cfg.json", cancellation_config(&out_a));

    let first = bin().args(["attribute", "--config"]).arg(&cfg).output().unwrap();
    assert!(first.status.success(), "{}", stderr(&first));
    let second = bin()
        .args(["attribute", "--config"])
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&out_b)
        .env("THREADS", "2")
        .output()
        .unwrap();
    assert!(second.status.success(), "{}", stderr(&second));

    let csv_a = fs::read(out_a.join("seed_0/attributions.csv")).unwrap();
    let csv_b = fs::read(out_b.join("seed_0/attributions.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "attribution CSVs must be byte-identical");
    let log_a = fs::read(out_a.join("seed_0/coalitions.jsonl")).unwrap();
    let log_b = fs::read(out_b.join("seed_0/coalitions.jsonl")).unwrap();
    assert_eq!(log_a, log_b, "coalition logs must be byte-identical");

    let man_a = manifest_without_wall_time(&out_a.join("seed_0/manifest.json"));
    let man_b = manifest_without_wall_time(&out_b.join("seed_0/manifest.json"));
    let mut man_b_fixed = man_b.clone();
    // The second run pointed at a different output directory; everything
    // else must match exactly.
    man_b_fixed["config"]["output_dir"] = man_a["config"]["output_dir"].clone();
    assert_eq!(man_a, man_b_fixed);

    assert_eq!(man_a["schema_version"], 1);
    assert_eq!(man_a["method"], "exact");
    assert_eq!(man_a["method_effective"], "exact");
    // Full power set at p = 2: one pseudo-outcome fit plus four coalitions.
    assert_eq!(man_a["eval_count"], 5);

    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "covariate,phi,abs_phi,rank");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn attribute_marks_exhaustive_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let mut cfg_json = cancellation_config(&out);
    cfg_json["estimator"] = serde_json::json!({ "method": "msr", "budget": 4 });
    let cfg = write_config(tmp.path(), "cfg.json", cfg_json);
    let result = bin().args(["attribute", "--config"]).arg(&cfg).output().unwrap();
    assert!(result.status.success(), "{}", stderr(&result));
    let manifest = manifest_without_wall_time(&out.join("seed_0/manifest.json"));
    assert_eq!(manifest["method"], "msr");
    assert_eq!(manifest["method_effective"], "exact-fallback");
    assert_eq!(manifest["exact_fallback"], true);
}

#[test]
fn attribute_failure_removes_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let mut cfg_json = cancellation_config(&out);
    cfg_json["estimator"] = serde_json::json!({ "method": "msr", "budget": 3 });
    let cfg = write_config(tmp.path(), "cfg.json", cfg_json);
    let result = bin().args(["attribute", "--config"]).arg(&cfg).output().unwrap();
    assert!(!result.status.success());
    assert!(stderr(&result).contains("budget"));
    assert!(!out.join("seed_0").exists(), "failed runs must leave no seed directory");
}

#[test]
fn invalid_role_counts_name_the_offending_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "cfg.json",
        serde_json::json!({
            "dataset": { "dgp": {
                "kind": "role",
                "n_instruments": 1, "n_confounders": 0, "n_modifiers": 1,
                "n_outcome_only": 1, "n_noise": 0, "n": 40, "seed": 0,
            } },
            "estimator": { "method": "exact" },
            "output_dir": tmp.path().join("runs"),
        }),
    );
    let result = bin().args(["attribute", "--config"]).arg(&cfg).output().unwrap();
    assert!(!result.status.success());
    assert!(stderr(&result).contains("n_confounders"), "got: {}", stderr(&result));
}

#[test]
fn emit_config_prints_resolved_overrides_without_running() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let cfg = write_config(tmp.path(), "cfg.json", cancellation_config(&out));
    let result = bin()
        .args(["attribute", "--config"])
        .arg(&cfg)
        .args(["--method", "msr", "--budget", "99", "--emit-config"])
        .output()
        .unwrap();
    assert!(result.status.success(), "{}", stderr(&result));
    let resolved: serde_json::Value = serde_json::from_str(&stdout(&result)).unwrap();
    assert_eq!(resolved["estimator"]["method"], "msr");
    assert_eq!(resolved["estimator"]["budget"], 99);
    assert!(!out.exists(), "--emit-config must not run the command");
}

#[test]
fn benchmark_writes_one_row_per_metric_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench");
    let cfg = write_config(
        tmp.path(),
        "cfg.json",
        role_preset_config(
            &out,
            serde_json::json!({
                "seeds": [0, 1],
                "benchmark": { "dims": [4], "budgets": [16], "methods": ["msr"], "n": 60 },
            }),
        ),
    );
    let result = bin().args(["benchmark", "--config"]).arg(&cfg).output().unwrap();
    assert!(result.status.success(), "{}", stderr(&result));
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "experiment_id,seed,metric,value");
    // 1 dim × 1 budget × 1 method × 2 seeds × 2 metrics.
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        assert!(line.starts_with("p4_b16_msr,"));
        let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&value), "metric out of range: {line}");
    }
}

#[test]
fn metrics_aggregates_stored_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let cfg = write_config(
        tmp.path(),
        "cfg.json",
        role_preset_config(
            &out,
            serde_json::json!({
                "estimator": { "method": "msr", "budget": 16 },
                "seeds": [0, 1, 2],
            }),
        ),
    );
    let result = bin().args(["attribute", "--config"]).arg(&cfg).output().unwrap();
    assert!(result.status.success(), "{}", stderr(&result));

    let report = tmp.path().join("report");
    let result = bin()
        .arg("metrics")
        .arg(out.join("seed_0/attributions.csv"))
        .arg(out.join("seed_1/attributions.csv"))
        .arg(out.join("seed_2/attributions.csv"))
        .arg("--output-dir")
        .arg(&report)
        .output()
        .unwrap();
    assert!(result.status.success(), "{}", stderr(&result));

    let stability = fs::read_to_string(report.join("rank_stability.csv")).unwrap();
    assert_eq!(stability.lines().count(), 1 + 16, "4 covariates × 4 ranks plus header");
    let values = fs::read_to_string(report.join("values.csv")).unwrap();
    assert_eq!(values.lines().count(), 1 + 12, "3 runs × 4 covariates plus header");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_runs"], 3);
    assert_eq!(summary["covariates"].as_array().unwrap().len(), 4);
}

#[test]
fn metrics_rejects_mismatched_covariate_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    fs::write(&a, "covariate,phi,abs_phi,rank\nx1,0.5,0.5,1\nx2,0.1,0.1,2\n").unwrap();
    fs::write(&b, "covariate,phi,abs_phi,rank\nx1,0.5,0.5,1\nx9,0.1,0.1,2\n").unwrap();
    let result = bin()
        .arg("metrics")
        .arg(&a)
        .arg(&b)
        .arg("--output-dir")
        .arg(tmp.path().join("report"))
        .output()
        .unwrap();
    assert!(!result.status.success());
    assert!(stderr(&result).contains("different covariate set"));

    let result = bin()
        .arg("metrics")
        .arg(&a)
        .arg("--output-dir")
        .arg(tmp.path().join("report"))
        .output()
        .unwrap();
    assert!(!result.status.success());
    assert!(stderr(&result).contains("at least two"));
}
