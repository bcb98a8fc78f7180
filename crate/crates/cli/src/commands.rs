//! Subcommand implementations. Every command writes its primary outputs
//! under the configured output directory, one `seed_<s>/` subdirectory per
//! run seed, and removes a seed directory again if that run fails partway.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use confattr::data::{write_csv, write_roles_csv, CovariateRole, Dataset};
use confattr::game::{GameConfig, GameHandle};
use confattr::metrics::{
    confounder_mass, confounder_recovery, rank_by_magnitude, rank_stability, write_metrics_csv,
    MetricRow,
};
use confattr::shapley::{attribution_csv, estimate, Attribution, EstimatorConfig};

use crate::config::{BenchmarkGrid, DatasetSource, RunConfig};
use crate::{config, CliError};

pub const SCHEMA_VERSION: u32 = 1;

fn seed_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!("seed_{seed}"))
}

/// Run `work` inside a fresh per-seed directory, deleting the directory
/// again when the run fails so no partial outputs survive.
fn in_seed_dir(
    cfg: &RunConfig,
    seed: u64,
    work: impl FnOnce(&Path) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let dir = seed_dir(cfg, seed);
    fs::create_dir_all(&dir)?;
    match work(&dir) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_dir_all(&dir);
            Err(e)
        }
    }
}

pub fn cmd_dgp(cfg: &RunConfig) -> Result<(), CliError> {
    if matches!(cfg.dataset, DatasetSource::Csv { .. }) {
        return Err(CliError::Config(
            "the dgp command requires a generator dataset source".into(),
        ));
    }
    for &seed in &cfg.seeds {
        let data = config::build_data(&cfg.dataset, seed)?;
        in_seed_dir(cfg, seed, |dir| {
            write_csv(&data.dataset, dir.join("dataset.csv"))?;
            write_roles_csv(&data.dataset, dir.join("roles.csv"))?;
            if let Some(tau) = &data.tau_true {
                let mut w = csv::Writer::from_path(dir.join("tau.csv"))?;
                w.write_record(["tau"])?;
                for v in tau {
                    w.write_record([v.to_string()])?;
                }
                w.flush()?;
            }
            Ok(())
        })?;
        let ds = &data.dataset;
        let arm1: usize = ds.a().iter().filter(|&&a| a == 1).count();
        println!(
            "seed={seed} n={} p={} arm0={} arm1={} -> {}",
            ds.n(),
            ds.p(),
            ds.n() - arm1,
            arm1,
            seed_dir(cfg, seed).display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'static str,
    config: &'a RunConfig,
    seed: u64,
    method: &'a str,
    /// The configured method, or "exact-fallback" when the budget covered
    /// the whole power set and the estimator enumerated it.
    method_effective: String,
    eval_count: usize,
    budget_used: usize,
    wall_time_ms: u128,
    base_value: f64,
    efficiency_gap: f64,
    exact_fallback: bool,
    phi: &'a [f64],
    covariates: &'a [String],
}

fn method_effective(attr: &Attribution) -> String {
    if attr.exact_fallback {
        "exact-fallback".to_string()
    } else {
        attr.method.as_str().to_string()
    }
}

fn run_attribution(
    cfg: &RunConfig,
    dataset: Dataset,
    seed: u64,
) -> Result<(GameHandle, Attribution, u128), CliError> {
    let game_cfg = GameConfig {
        value_mode: cfg.value_mode,
        compute_locals: cfg.estimator.locals,
        cross_fit: cfg.cross_fit,
    };
    let game = GameHandle::build(dataset, cfg.backend.clone(), game_cfg)?;
    let est_cfg = EstimatorConfig { seed, ..cfg.estimator.clone() };
    let start = Instant::now();
    let attr = estimate(&game, &est_cfg)?;
    let wall_time_ms = start.elapsed().as_millis();
    Ok((game, attr, wall_time_ms))
}

fn write_locals_csv(path: &Path, names: &[String], locals: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for row in locals {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_attribute(cfg: &RunConfig) -> Result<(), CliError> {
    for &seed in &cfg.seeds {
        let data = config::build_data(&cfg.dataset, seed)?;
        let names = data.dataset.names().to_vec();
        let (game, attr, wall_time_ms) = run_attribution(cfg, data.dataset, seed)?;
        in_seed_dir(cfg, seed, |dir| {
            fs::write(dir.join("attributions.csv"), attribution_csv(&attr, &names))?;
            game.write_log(dir.join("coalitions.jsonl"))?;
            if let Some(locals) = &attr.local_phi {
                write_locals_csv(&dir.join("locals.csv"), &names, locals)?;
            }
            let manifest = Manifest {
                schema_version: SCHEMA_VERSION,
                command: "attribute",
                config: cfg,
                seed,
                method: attr.method.as_str(),
                method_effective: method_effective(&attr),
                eval_count: game.eval_count(),
                budget_used: attr.budget_used,
                wall_time_ms,
                base_value: attr.base_value,
                efficiency_gap: attr.efficiency_gap,
                exact_fallback: attr.exact_fallback,
                phi: &attr.phi,
                covariates: &names,
            };
            let mut text = serde_json::to_string_pretty(&manifest)?;
            text.push('\n');
            fs::write(dir.join("manifest.json"), text)?;
            Ok(())
        })?;
        println!(
            "seed={seed} method={} eval_count={} efficiency_gap={:+.3e} -> {}",
            method_effective(&attr),
            game.eval_count(),
            attr.efficiency_gap,
            seed_dir(cfg, seed).display()
        );
    }
    Ok(())
}

fn confounder_indices(ds: &Dataset) -> Result<Vec<usize>, CliError> {
    let roles = ds.roles().ok_or_else(|| {
        CliError::Config("benchmark requires role-annotated data".into())
    })?;
    Ok(roles
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == CovariateRole::Confounder)
        .map(|(j, _)| j)
        .collect())
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<(), CliError> {
    let grid: &BenchmarkGrid = cfg.benchmark.as_ref().ok_or_else(|| {
        CliError::Config("benchmark requires a `benchmark` grid in the config".into())
    })?;
    let mut budgets = grid.budgets.clone();
    budgets.sort_unstable();
    let mut rows: Vec<MetricRow> = Vec::new();
    for &p in &grid.dims {
        for &seed in &cfg.seeds {
            let choice = crate::config::DgpChoice::RolePreset { p, n: grid.n, seed };
            let generated = choice.generate()?;
            let confounders = confounder_indices(&generated.dataset)?;
            let game_cfg = GameConfig {
                value_mode: cfg.value_mode,
                compute_locals: false,
                cross_fit: cfg.cross_fit,
            };
            // One game per (p, seed): nested budgets share the coalition
            // cache because smaller query lists are prefixes of larger ones.
            let game = GameHandle::build(generated.dataset, cfg.backend.clone(), game_cfg)?;
            for &budget in &budgets {
                for &method in &grid.methods {
                    let est_cfg = EstimatorConfig {
                        method,
                        budget: Some(budget),
                        seed,
                        ..cfg.estimator.clone()
                    };
                    let attr = estimate(&game, &est_cfg)?;
                    let id = format!("p{p}_b{budget}_{method}");
                    rows.push(MetricRow {
                        experiment_id: id.clone(),
                        seed,
                        metric: "confounder_mass".into(),
                        value: confounder_mass(&attr.phi, &confounders)?,
                    });
                    rows.push(MetricRow {
                        experiment_id: id,
                        seed,
                        metric: "confounder_recovery".into(),
                        value: confounder_recovery(&attr.phi, &confounders)?,
                    });
                }
            }
            println!(
                "p={p} seed={seed} eval_count={} (shared across budgets)",
                game.eval_count()
            );
        }
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("metrics.csv");
    write_metrics_csv(&path, &rows)?;
    println!("wrote {} metric rows -> {}", rows.len(), path.display());
    Ok(())
}

/// One stored attribution file: covariate names mapped to phi.
fn read_attribution_csv(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let name = record
            .get(0)
            .ok_or_else(|| CliError::Config(format!("{}: missing covariate cell", path.display())))?
            .to_string();
        let phi: f64 = record
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|_| CliError::Config(format!("{}: non-numeric phi", path.display())))?;
        out.insert(name, phi);
    }
    Ok(out)
}

pub fn cmd_metrics(inputs: &[PathBuf], output_dir: &Path) -> Result<(), CliError> {
    if inputs.len() < 2 {
        return Err(CliError::MissingRuns(inputs.len()));
    }
    let parsed: Vec<BTreeMap<String, f64>> = inputs
        .iter()
        .map(|p| read_attribution_csv(p))
        .collect::<Result<_, _>>()?;
    let names: Vec<String> = parsed[0].keys().cloned().collect();
    for (i, run) in parsed.iter().enumerate() {
        if run.keys().cloned().collect::<Vec<_>>() != names {
            return Err(CliError::Config(format!(
                "{} names a different covariate set than {}",
                inputs[i].display(),
                inputs[0].display()
            )));
        }
    }
    let runs: Vec<Vec<f64>> =
        parsed.iter().map(|run| names.iter().map(|n| run[n]).collect()).collect();

    let table = rank_stability(&runs)?;
    fs::create_dir_all(output_dir)?;

    let mut w = csv::Writer::from_path(output_dir.join("rank_stability.csv"))?;
    w.write_record(["covariate", "rank", "count", "n_runs"])?;
    for (j, name) in names.iter().enumerate() {
        for (r, count) in table.counts[j].iter().enumerate() {
            w.write_record([
                name.clone(),
                (r + 1).to_string(),
                count.to_string(),
                table.n_runs.to_string(),
            ])?;
        }
    }
    w.flush()?;

    // Long-format per-run values: the underlying numbers for stability
    // boxplots.
    let mut w = csv::Writer::from_path(output_dir.join("values.csv"))?;
    w.write_record(["run", "covariate", "phi", "abs_phi", "rank"])?;
    for (run_idx, run) in runs.iter().enumerate() {
        let order = rank_by_magnitude(run);
        let mut rank_of = vec![0usize; names.len()];
        for (r, &j) in order.iter().enumerate() {
            rank_of[j] = r + 1;
        }
        for (j, name) in names.iter().enumerate() {
            w.write_record([
                run_idx.to_string(),
                name.clone(),
                run[j].to_string(),
                run[j].abs().to_string(),
                rank_of[j].to_string(),
            ])?;
        }
    }
    w.flush()?;

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "n_runs": table.n_runs,
        "covariates": names.iter().enumerate().map(|(j, name)| {
            let mean_abs = runs.iter().map(|r| r[j].abs()).sum::<f64>() / runs.len() as f64;
            json!({
                "name": name,
                "mean_abs_phi": mean_abs,
                "top1_count": table.counts[j][0],
            })
        }).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(output_dir.join("summary.json"), text)?;

    println!(
        "aggregated {} runs over {} covariates -> {}",
        runs.len(),
        names.len(),
        output_dir.display()
    );
    Ok(())
}
