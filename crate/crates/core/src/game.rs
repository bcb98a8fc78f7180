//! The residual-confounding coalition game.
//!
//! An initial pass fits per-arm outcome models on all covariates and stores
//! the plug-in pseudo-outcomes τ̂ᵢ and their mean τ̄. Each coalition S is
//! then valued by refitting per-arm models on the selected columns: the
//! observational contrast δ̂_S minus the projected effect measures residual
//! bias, and the coalition value is its negation, so more complete
//! adjustment sets earn higher value. Coalition records are memoized with
//! first-writer-wins semantics, and the evaluation counter is defined as
//! 1 + (#cached coalitions): the leading 1 is the initial fit.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CoalitionMask, DataError, Dataset};
use crate::regression::{fit, FittedModel, RegressionBackend, RegressionError};

#[derive(Debug, Error)]
pub enum GameError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error("non-finite value produced for coalition {mask}")]
    NonFinite { mask: String },
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// How per-unit residual bias aggregates into a coalition value. `Signed`
/// is the default and the only mode the global shortcut applies to; the
/// alternatives penalize bias magnitude regardless of direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    #[default]
    Signed,
    Absolute,
    Squared,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GameConfig {
    #[serde(default)]
    pub value_mode: ValueMode,
    /// Fit the projection ĝ_S and store per-unit local values on every
    /// evaluation (otherwise locals are computed lazily on request).
    #[serde(default)]
    pub compute_locals: bool,
    /// Optional fold count for cross-fitted nuisance estimation: unit i is
    /// predicted by models trained without fold i mod k.
    #[serde(default)]
    pub cross_fit: Option<usize>,
}

/// Plug-in pseudo-outcomes from the initial full-covariate fits.
#[derive(Debug, Clone)]
pub struct PseudoOutcomes {
    /// τ̂ᵢ = m̂(xᵢ, 1) − m̂(xᵢ, 0).
    pub tau_hat: Array1<f64>,
    /// Plug-in ATE τ̄ (mean of τ̂ in row order).
    pub tau_bar: f64,
}

/// Everything computed for one coalition.
#[derive(Debug, Clone)]
pub struct CoalitionValue {
    /// ν̂(S).
    pub global_value: f64,
    /// Per-unit ν̂_x(S), present when locals were requested or the value
    /// mode needs them.
    pub local_values: Option<Array1<f64>>,
    /// Per-unit observational contrast δ̂_S.
    pub delta_s: Array1<f64>,
    /// Per-unit projection ĝ_S, fitted only when locals are needed.
    pub g_s: Option<Array1<f64>>,
}

struct CacheEntry {
    value: Arc<CoalitionValue>,
    hits: AtomicU64,
}

pub struct GameHandle {
    dataset: Dataset,
    backend: RegressionBackend,
    config: GameConfig,
    pseudo: PseudoOutcomes,
    arm_rows: [Vec<usize>; 2],
    cache: DashMap<CoalitionMask, CacheEntry>,
}

/// Mean in fixed (row) order; the deterministic final reduction.
fn row_mean(v: &Array1<f64>) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl GameHandle {
    /// Fit the full-covariate per-arm models and precompute pseudo-outcomes.
    /// Counts as the first evaluation unit.
    pub fn build(
        dataset: Dataset,
        backend: RegressionBackend,
        config: GameConfig,
    ) -> Result<Self, GameError> {
        if let Some(k) = config.cross_fit {
            if k < 2 {
                return Err(GameError::InvalidConfig("cross_fit needs at least 2 folds".into()));
            }
        }
        let arm_rows = [dataset.arm_indices(0), dataset.arm_indices(1)];
        let mut game = GameHandle {
            pseudo: PseudoOutcomes { tau_hat: Array1::zeros(0), tau_bar: 0.0 },
            dataset,
            backend,
            config,
            arm_rows,
            cache: DashMap::new(),
        };
        let full = CoalitionMask::full(game.dataset.p())?;
        let xs = game.dataset.subset_columns(&full)?;
        let tau_hat = game.arm_contrast(&xs)?;
        if tau_hat.iter().any(|v| !v.is_finite()) {
            return Err(GameError::NonFinite { mask: full.to_string() });
        }
        let tau_bar = row_mean(&tau_hat);
        game.pseudo = PseudoOutcomes { tau_hat, tau_bar };
        Ok(game)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn backend(&self) -> &RegressionBackend {
        &self.backend
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn p(&self) -> usize {
        self.dataset.p()
    }

    pub fn pseudo(&self) -> &PseudoOutcomes {
        &self.pseudo
    }

    /// Total model-fitting passes so far: 1 for the pseudo-outcome fit plus
    /// one per distinct coalition evaluated.
    pub fn eval_count(&self) -> usize {
        1 + self.cache.len()
    }

    pub fn cached_coalitions(&self) -> usize {
        self.cache.len()
    }

    /// ν̂(S) under the configured value mode. In signed mode this is the
    /// global shortcut τ̄ − mean(δ̂_S); no projection fit is performed.
    pub fn global_value(&self, mask: CoalitionMask) -> Result<f64, GameError> {
        Ok(self.coalition(mask)?.global_value)
    }

    /// Per-unit local values ν̂_x(S); fits the projection ĝ_S if the cached
    /// record does not hold locals yet.
    pub fn local_values(&self, mask: CoalitionMask) -> Result<Array1<f64>, GameError> {
        let record = self.coalition_with_locals(mask)?;
        Ok(record.local_values.as_ref().expect("locals just ensured").clone())
    }

    /// δ̂_S per unit.
    pub fn observational_contrast(&self, mask: CoalitionMask) -> Result<Array1<f64>, GameError> {
        Ok(self.coalition(mask)?.delta_s.clone())
    }

    /// ĝ_S per unit (regression of τ̂ on X_S).
    pub fn cate_projection(&self, mask: CoalitionMask) -> Result<Array1<f64>, GameError> {
        let record = self.coalition_with_locals(mask)?;
        Ok(record.g_s.as_ref().expect("projection just ensured").clone())
    }

    /// Full cached record for a coalition, evaluating it on first request.
    pub fn coalition(&self, mask: CoalitionMask) -> Result<Arc<CoalitionValue>, GameError> {
        self.check_mask(&mask)?;
        if let Some(entry) = self.cache.get(&mask) {
            entry.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(entry.value.clone());
        }
        // Computed outside the map lock; concurrent racers produce identical
        // bits and the first insert wins.
        let value = Arc::new(self.evaluate(&mask)?);
        let entry = self
            .cache
            .entry(mask)
            .or_insert_with(|| CacheEntry { value, hits: AtomicU64::new(0) });
        Ok(entry.value.clone())
    }

    fn coalition_with_locals(&self, mask: CoalitionMask) -> Result<Arc<CoalitionValue>, GameError> {
        let record = self.coalition(mask)?;
        if record.local_values.is_some() && record.g_s.is_some() {
            return Ok(record);
        }
        // Upgrade in place: add the projection and locals to the cached
        // record. Deterministic, so concurrent upgrades agree bitwise.
        let xs = self.dataset.subset_columns(&mask)?;
        let g = self.projection(&xs)?;
        let locals = self.locals_from(&record.delta_s, &g);
        let upgraded = Arc::new(CoalitionValue {
            global_value: record.global_value,
            local_values: Some(locals),
            delta_s: record.delta_s.clone(),
            g_s: Some(g),
        });
        if let Some(mut entry) = self.cache.get_mut(&mask) {
            if entry.value.local_values.is_none() {
                entry.value = upgraded.clone();
            }
            return Ok(entry.value.clone());
        }
        Ok(upgraded)
    }

    fn check_mask(&self, mask: &CoalitionMask) -> Result<(), GameError> {
        if mask.width() != self.dataset.p() {
            return Err(GameError::Data(DataError::WidthMismatch {
                mask: mask.width(),
                data: self.dataset.p(),
            }));
        }
        Ok(())
    }

    fn evaluate(&self, mask: &CoalitionMask) -> Result<CoalitionValue, GameError> {
        let xs = self.dataset.subset_columns(mask)?;
        let delta = self.arm_contrast(&xs)?;
        let needs_g = self.config.compute_locals || self.config.value_mode != ValueMode::Signed;
        let g = if needs_g { Some(self.projection(&xs)?) } else { None };
        let local_values = g.as_ref().map(|g| self.locals_from(&delta, g));
        let global_value = match self.config.value_mode {
            ValueMode::Signed => self.pseudo.tau_bar - row_mean(&delta),
            _ => row_mean(local_values.as_ref().expect("modes beyond signed carry locals")),
        };
        if !global_value.is_finite()
            || local_values.as_ref().is_some_and(|l| l.iter().any(|v| !v.is_finite()))
        {
            return Err(GameError::NonFinite { mask: mask.to_string() });
        }
        Ok(CoalitionValue { global_value, local_values, delta_s: delta, g_s: g })
    }

    fn locals_from(&self, delta: &Array1<f64>, g: &Array1<f64>) -> Array1<f64> {
        match self.config.value_mode {
            ValueMode::Signed => delta.iter().zip(g).map(|(d, g)| -(d - g)).collect(),
            ValueMode::Absolute => delta.iter().zip(g).map(|(d, g)| -(d - g).abs()).collect(),
            ValueMode::Squared => delta.iter().zip(g).map(|(d, g)| -((d - g) * (d - g))).collect(),
        }
    }

    /// δ̂ over all units from per-arm fits on the given feature matrix.
    fn arm_contrast(&self, xs: &Array2<f64>) -> Result<Array1<f64>, GameError> {
        let n = self.dataset.n();
        let mut per_arm = [Array1::zeros(n), Array1::zeros(n)];
        for arm in 0..2usize {
            per_arm[arm] = self.fit_predict(xs, &self.arm_rows[arm], self.dataset.y())?;
        }
        Ok(&per_arm[1] - &per_arm[0])
    }

    /// ĝ from regressing pseudo-outcomes on the given feature matrix (all
    /// rows are training rows).
    fn projection(&self, xs: &Array2<f64>) -> Result<Array1<f64>, GameError> {
        let all: Vec<usize> = (0..self.dataset.n()).collect();
        self.fit_predict(xs, &all, &self.pseudo.tau_hat)
    }

    /// Fits on `train_rows` of xs against `targets`, predicting every unit.
    /// Under cross-fitting, unit i is predicted by the model trained on
    /// `train_rows` outside fold i mod k.
    fn fit_predict(
        &self,
        xs: &Array2<f64>,
        train_rows: &[usize],
        targets: &Array1<f64>,
    ) -> Result<Array1<f64>, GameError> {
        let n = self.dataset.n();
        match self.config.cross_fit {
            None => {
                let x_train = xs.select(Axis(0), train_rows);
                let y_train: Array1<f64> =
                    train_rows.iter().map(|&i| targets[i]).collect();
                let model = fit(&self.backend, x_train.view(), y_train.view())?;
                Ok(model.predict(xs.view())?)
            }
            Some(k) => {
                let mut out = Array1::zeros(n);
                for fold in 0..k {
                    let fold_train: Vec<usize> =
                        train_rows.iter().copied().filter(|i| i % k != fold).collect();
                    let eval_rows: Vec<usize> = (0..n).filter(|i| i % k == fold).collect();
                    if eval_rows.is_empty() {
                        continue;
                    }
                    let x_train = xs.select(Axis(0), &fold_train);
                    let y_train: Array1<f64> =
                        fold_train.iter().map(|&i| targets[i]).collect();
                    let model: FittedModel =
                        fit(&self.backend, x_train.view(), y_train.view())?;
                    let preds = model.predict(xs.select(Axis(0), &eval_rows).view())?;
                    for (slot, &i) in preds.iter().zip(&eval_rows) {
                        out[i] = *slot;
                    }
                }
                Ok(out)
            }
        }
    }

    /// One JSON line per evaluated coalition, mask-ascending:
    /// {"mask_bits_hex", "global_value", "n_cache_hits"}.
    pub fn write_log(&self, path: impl AsRef<std::path::Path>) -> Result<(), GameError> {
        #[derive(Serialize)]
        struct Line<'a> {
            mask_bits_hex: &'a str,
            global_value: f64,
            n_cache_hits: u64,
        }
        let mut rows: Vec<(CoalitionMask, f64, u64)> = self
            .cache
            .iter()
            .map(|e| (*e.key(), e.value().value.global_value, e.value().hits.load(Ordering::Relaxed)))
            .collect();
        rows.sort_by_key(|(mask, _, _)| *mask);
        let mut out = String::new();
        for (mask, global_value, n_cache_hits) in rows {
            let hex = mask.bits_hex();
            let line =
                serde_json::to_string(&Line { mask_bits_hex: &hex, global_value, n_cache_hits })?;
            out.push_str(&line);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
