//! Evaluation metrics and experimental protocols: attribution mass on the
//! true confounders, confounder recovery, PEHE, rank stability across runs,
//! and the feature-drop PEHE protocol.
//!
//! Every ranking in this module orders covariates by descending |φ| and
//! breaks ties by ascending covariate index, so all metrics are
//! deterministic functions of their inputs.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::regression::{fit, RegressionBackend, RegressionError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("attribution vector has zero total mass")]
    ZeroTotalMass,
    #[error("confounder set is empty")]
    EmptyConfounderSet,
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("run 0 has width {expected} but run {run} has width {got}")]
    InconsistentWidth { run: usize, expected: usize, got: usize },
    #[error("rank stability needs at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("no ground-truth effects available for this dataset")]
    NoGroundTruth,
    #[error("k = {k} must be below the covariate count {p}")]
    KTooLarge { k: usize, p: usize },
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidTestFraction(f64),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

fn check_confounders(p: usize, confounders: &[usize]) -> Result<BTreeSet<usize>, MetricsError> {
    let set: BTreeSet<usize> = confounders.iter().copied().collect();
    if let Some(&j) = set.iter().find(|&&j| j >= p) {
        return Err(DataError::IndexOutOfRange { index: j, width: p }.into());
    }
    Ok(set)
}

/// Fraction of total absolute attribution assigned to the true confounders:
/// Σ_{j∈C}|φⱼ| / Σⱼ|φⱼ|. Scale-invariant.
pub fn confounder_mass(phi: &[f64], confounders: &[usize]) -> Result<f64, MetricsError> {
    let set = check_confounders(phi.len(), confounders)?;
    let total: f64 = phi.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Err(MetricsError::ZeroTotalMass);
    }
    let mass: f64 = set.iter().map(|&j| phi[j].abs()).sum();
    Ok(mass / total)
}

/// Descending-|φ| ranking with ties broken by ascending covariate index.
/// Element r of the result is the covariate placed at rank r.
pub fn rank_by_magnitude(phi: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..phi.len()).collect();
    order.sort_by(|&i, &j| phi[j].abs().total_cmp(&phi[i].abs()).then(i.cmp(&j)));
    order
}

/// Fraction of true confounders recovered among the top-|C| ranked
/// covariates. Depends only on the ordering of |φ|.
pub fn confounder_recovery(phi: &[f64], confounders: &[usize]) -> Result<f64, MetricsError> {
    let set = check_confounders(phi.len(), confounders)?;
    if set.is_empty() {
        return Err(MetricsError::EmptyConfounderSet);
    }
    let order = rank_by_magnitude(phi);
    let hits = order[..set.len()].iter().filter(|j| set.contains(j)).count();
    Ok(hits as f64 / set.len() as f64)
}

/// Root-mean-square error between estimated and true heterogeneous effects.
pub fn pehe(tau_hat: ArrayView1<f64>, tau_true: ArrayView1<f64>) -> Result<f64, MetricsError> {
    if tau_hat.len() != tau_true.len() {
        return Err(MetricsError::LengthMismatch { a: tau_hat.len(), b: tau_true.len() });
    }
    let mse = tau_hat
        .iter()
        .zip(tau_true.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / tau_hat.len() as f64;
    Ok(mse.sqrt())
}

/// Entry (j, r) counts the runs that placed covariate j at rank r of the
/// absolute-value ordering; every row and column sums to `n_runs`.
#[derive(Debug, Clone, Serialize)]
pub struct RankStabilityTable {
    pub counts: Vec<Vec<u64>>,
    pub n_runs: usize,
}

impl RankStabilityTable {
    /// How often covariate j landed in the top k ranks, as a fraction of runs.
    pub fn top_k_frequency(&self, j: usize, k: usize) -> f64 {
        let hits: u64 = self.counts[j][..k.min(self.counts.len())].iter().sum();
        hits as f64 / self.n_runs as f64
    }
}

/// Aggregate per-run rankings into a covariate × rank contingency table.
pub fn rank_stability(runs: &[Vec<f64>]) -> Result<RankStabilityTable, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::TooFewRuns(runs.len()));
    }
    let p = runs[0].len();
    for (i, run) in runs.iter().enumerate() {
        if run.len() != p {
            return Err(MetricsError::InconsistentWidth { run: i, expected: p, got: run.len() });
        }
    }
    let mut counts = vec![vec![0u64; p]; p];
    for run in runs {
        for (rank, &j) in rank_by_magnitude(run).iter().enumerate() {
            counts[j][rank] += 1;
        }
    }
    Ok(RankStabilityTable { counts, n_runs: runs.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropStrategy {
    /// Drop the k covariates ranked highest by |φ|.
    TopK,
    /// Drop k covariates chosen uniformly at random (seeded per k).
    Random,
    /// Drop the k covariates ranked lowest by |φ|.
    BottomK,
}

impl DropStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            DropStrategy::TopK => "top_k",
            DropStrategy::Random => "random",
            DropStrategy::BottomK => "bottom_k",
        }
    }
}

impl std::fmt::Display for DropStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureDropConfig {
    pub backend: RegressionBackend,
    /// Held-out fraction used for PEHE evaluation.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Seeds the train/test split and the Random strategy draws.
    #[serde(default)]
    pub seed: u64,
}

fn default_test_fraction() -> f64 {
    0.3
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureDropRow {
    pub k: usize,
    pub strategy: DropStrategy,
    pub pehe: f64,
}

/// Seeded stream for the Random drop strategy at a given k; separate from
/// the split stream so adding k values never perturbs the split.
fn random_drop(seed: u64, k: usize, p: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x1000 + k as u64);
    rand::seq::index::sample(&mut rng, p, k).into_vec()
}

/// For each (k, strategy) cell: drop the chosen covariates, refit the
/// plug-in effect learner on the training split of the reduced data, and
/// report PEHE of τ̂ = m̂₁ − m̂₀ against the true effects on the held-out
/// rows. All cells share one split so the numbers are comparable.
pub fn feature_drop_pehe(
    dataset: &Dataset,
    tau_true: Option<&Array1<f64>>,
    phi: &[f64],
    k_values: &[usize],
    strategies: &[DropStrategy],
    cfg: &FeatureDropConfig,
) -> Result<Vec<FeatureDropRow>, MetricsError> {
    let tau_true = tau_true.ok_or(MetricsError::NoGroundTruth)?;
    let n = dataset.n();
    let p = dataset.p();
    if phi.len() != p {
        return Err(MetricsError::LengthMismatch { a: phi.len(), b: p });
    }
    if tau_true.len() != n {
        return Err(MetricsError::LengthMismatch { a: tau_true.len(), b: n });
    }
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(MetricsError::InvalidTestFraction(cfg.test_fraction));
    }
    for &k in k_values {
        if k >= p {
            return Err(MetricsError::KTooLarge { k, p });
        }
    }

    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rows.shuffle(&mut rng);
    let n_test = ((n as f64 * cfg.test_fraction).round() as usize).clamp(1, n - 1);
    let (test_rows, train_rows) = rows.split_at(n_test);

    let ranking = rank_by_magnitude(phi);
    let cells: Vec<(usize, DropStrategy)> = k_values
        .iter()
        .flat_map(|&k| strategies.iter().map(move |&s| (k, s)))
        .collect();

    cells
        .into_par_iter()
        .map(|(k, strategy)| -> Result<FeatureDropRow, MetricsError> {
            let drop: Vec<usize> = match strategy {
                DropStrategy::TopK => ranking[..k].to_vec(),
                DropStrategy::BottomK => ranking[p - k..].to_vec(),
                DropStrategy::Random => random_drop(cfg.seed, k, p),
            };
            let reduced = dataset.drop_columns(&drop)?;
            let mut models = Vec::with_capacity(2);
            for arm in [0u8, 1u8] {
                let arm_train: Vec<usize> = train_rows
                    .iter()
                    .copied()
                    .filter(|&i| reduced.a()[i] == arm)
                    .collect();
                let x = reduced.x().select(ndarray::Axis(0), &arm_train);
                let y = reduced.y().select(ndarray::Axis(0), &arm_train);
                models.push(fit(&cfg.backend, x.view(), y.view())?);
            }
            let x_test = reduced.x().select(ndarray::Axis(0), test_rows);
            let m0 = models[0].predict(x_test.view())?;
            let m1 = models[1].predict(x_test.view())?;
            let tau_hat = &m1 - &m0;
            let truth = tau_true.select(ndarray::Axis(0), test_rows);
            let value = pehe(tau_hat.view(), truth.view())?;
            Ok(FeatureDropRow { k, strategy, pehe: value })
        })
        .collect()
}

/// One serialized metric observation, keyed the way experiment outputs are
/// aggregated downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub experiment_id: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Write metric rows as CSV with an (experiment_id, seed, metric, value)
/// header.
pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
