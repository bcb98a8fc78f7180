//! Exact and budgeted Shapley decomposition of a coalition value function.
//!
//! The exact path streams every mask once through the subset-sum form of the
//! Shapley formula. Budgeted estimators share one sampling law (coalition
//! sizes from the Shapley-kernel distribution, uniform membership given
//! size, sequential draws so a smaller budget's query list is a prefix of a
//! larger one) and always evaluate the two anchors ∅ and [p]. Whenever the
//! budget covers the whole power set, each estimator runs its own algorithm
//! exhaustively, which provably reproduces the exact values.
//!
//! Determinism contract: identical (game, config) produce bit-identical
//! attributions regardless of thread count — query lists are pre-generated,
//! coalition evaluations are pure, and reductions run in a fixed order.

use std::collections::HashMap;

use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CoalitionMask, DataError};
use crate::game::{GameError, GameHandle};

#[derive(Debug, Error)]
pub enum ShapleyError {
    #[error("dimension {p} exceeds the exact-enumeration limit {max}")]
    DimensionTooLarge { p: usize, max: usize },
    #[error("budget {budget} is below the minimum {min} (2p + 2 with both anchors)")]
    BudgetTooSmall { budget: usize, min: usize },
    #[error("weighted least squares system is singular even after ridge regularization")]
    SingularSystem,
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Anything that can value coalitions. Implementations must be pure: the
/// same mask always yields the same bits.
pub trait ValueFunction: Sync {
    fn width(&self) -> usize;
    fn global(&self, mask: CoalitionMask) -> Result<f64, ShapleyError>;
    /// Per-unit local values for the mask, when the game tracks units.
    fn locals(&self, _mask: CoalitionMask) -> Result<Option<Array1<f64>>, ShapleyError> {
        Ok(None)
    }
}

impl ValueFunction for GameHandle {
    fn width(&self) -> usize {
        self.p()
    }

    fn global(&self, mask: CoalitionMask) -> Result<f64, ShapleyError> {
        Ok(self.global_value(mask)?)
    }

    fn locals(&self, mask: CoalitionMask) -> Result<Option<Array1<f64>>, ShapleyError> {
        Ok(Some(self.local_values(mask)?))
    }
}

/// A fully tabulated game, indexed by mask bits. Handy for oracle-derived
/// population games and axiom tests.
#[derive(Debug, Clone)]
pub struct TableGame {
    p: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(p: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), 1 << p, "table must cover the full power set");
        TableGame { p, values }
    }
}

impl ValueFunction for TableGame {
    fn width(&self) -> usize {
        self.p
    }

    fn global(&self, mask: CoalitionMask) -> Result<f64, ShapleyError> {
        Ok(self.values[mask.bits() as usize])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    Msr,
    KernelShap,
    RegressionMsr,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Msr => "msr",
            Method::KernelShap => "kernel_shap",
            Method::RegressionMsr => "regression_msr",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_max_exact_p() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub method: Method,
    /// Coalition-query budget for the sampled methods; ignored by Exact.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Guard for exact enumeration (2^p coalition evaluations).
    #[serde(default = "default_max_exact_p")]
    pub max_exact_p: usize,
    /// Compute per-unit local Shapley values (exact mode only).
    #[serde(default)]
    pub locals: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: Method::Exact,
            budget: None,
            seed: 0,
            max_exact_p: default_max_exact_p(),
            locals: false,
        }
    }
}

/// Shapley decomposition of a coalition game.
#[derive(Debug, Clone, Serialize)]
pub struct Attribution {
    /// Global Shapley value per covariate.
    pub phi: Vec<f64>,
    /// Per-unit Shapley values (n × p, row-major), exact mode only.
    pub local_phi: Option<Vec<Vec<f64>>>,
    /// ν̂(∅).
    pub base_value: f64,
    pub method: Method,
    /// True when a budgeted method covered the full power set and ran
    /// exhaustively.
    pub exact_fallback: bool,
    /// Distinct coalitions this run evaluated, anchors included.
    pub budget_used: usize,
    pub seed: u64,
    /// Σφ − (ν([p]) − ν(∅)): zero up to float error for estimators that
    /// enforce efficiency, a live diagnostic for plain MSR.
    pub efficiency_gap: f64,
}

/// Dispatch on the configured method, applying exhaustive fallback for
/// budgeted methods whose budget covers the whole power set.
pub fn estimate(game: &impl ValueFunction, cfg: &EstimatorConfig) -> Result<Attribution, ShapleyError> {
    match cfg.method {
        Method::Exact => exact_shapley(game, cfg),
        Method::Msr => msr_estimate(game, cfg),
        Method::KernelShap => kernelshap_estimate(game, cfg),
        Method::RegressionMsr => regression_msr_estimate(game, cfg),
    }
}

/// Exact Shapley weight on coalitions of size s not containing the player:
/// w(s) = 1 / (p · C(p−1, s)).
fn exact_weights(p: usize) -> Vec<f64> {
    (0..p).map(|s| 1.0 / (p as f64 * binomial(p - 1, s))).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c as f64
}

const EXACT_CHUNK: u128 = 1 << 16;

/// Exact Shapley values via a single streaming pass over all 2^p masks:
/// each mask contributes +w(|m|−1) to members and −w(|m|) to non-members,
/// which regroups the marginal-contribution sum by evaluated coalition.
pub fn exact_shapley(
    game: &impl ValueFunction,
    cfg: &EstimatorConfig,
) -> Result<Attribution, ShapleyError> {
    let p = game.width();
    if p > cfg.max_exact_p {
        return Err(ShapleyError::DimensionTooLarge { p, max: cfg.max_exact_p });
    }
    let w = exact_weights(p);
    let total: u128 = 1u128 << p;
    let n_chunks = total.div_ceil(EXACT_CHUNK);

    struct Partial {
        phi: Vec<f64>,
        local_phi: Option<Vec<Vec<f64>>>,
        base: Option<f64>,
        full: Option<f64>,
        local_anchor: Option<(Option<Array1<f64>>, Option<Array1<f64>>)>,
    }

    let partials: Vec<Partial> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<Partial, ShapleyError> {
            let start = c as u128 * EXACT_CHUNK;
            let end = (start + EXACT_CHUNK).min(total);
            let mut phi = vec![0.0; p];
            let mut local_phi: Option<Vec<Vec<f64>>> = None;
            let mut base = None;
            let mut full = None;
            let mut local_empty = None;
            let mut local_full = None;
            for bits in start..end {
                let mask = CoalitionMask::from_bits(p, bits)?;
                let size = mask.count();
                let value = game.global(mask)?;
                for j in 0..p {
                    if bits >> j & 1 == 1 {
                        phi[j] += value * w[size - 1];
                    } else {
                        phi[j] -= value * w[size];
                    }
                }
                if cfg.locals {
                    if let Some(lv) = game.locals(mask)? {
                        let acc = local_phi
                            .get_or_insert_with(|| vec![vec![0.0; p]; lv.len()]);
                        for (i, v) in lv.iter().enumerate() {
                            for (j, row) in acc[i].iter_mut().enumerate() {
                                if bits >> j & 1 == 1 {
                                    *row += v * w[size - 1];
                                } else {
                                    *row -= v * w[size];
                                }
                            }
                        }
                        if bits == 0 {
                            local_empty = Some(lv.clone());
                        }
                        if bits == total - 1 {
                            local_full = Some(lv);
                        }
                    }
                }
                if bits == 0 {
                    base = Some(value);
                }
                if bits == total - 1 {
                    full = Some(value);
                }
            }
            Ok(Partial {
                phi,
                local_phi,
                base,
                full,
                local_anchor: Some((local_empty, local_full)),
            })
        })
        .collect::<Result<_, _>>()?;

    // Fixed-order combine across chunks keeps the result independent of
    // scheduling.
    let mut phi = vec![0.0; p];
    let mut local_phi: Option<Vec<Vec<f64>>> = None;
    let mut base_value = 0.0;
    let mut full_value = 0.0;
    for part in partials {
        for j in 0..p {
            phi[j] += part.phi[j];
        }
        if let Some(lp) = part.local_phi {
            match &mut local_phi {
                None => local_phi = Some(lp),
                Some(acc) => {
                    for (row, add) in acc.iter_mut().zip(lp) {
                        for (slot, v) in row.iter_mut().zip(add) {
                            *slot += v;
                        }
                    }
                }
            }
        }
        if let Some(b) = part.base {
            base_value = b;
        }
        if let Some(f) = part.full {
            full_value = f;
        }
        let _ = part.local_anchor;
    }

    let efficiency_gap = phi.iter().sum::<f64>() - (full_value - base_value);
    Ok(Attribution {
        phi,
        local_phi,
        base_value,
        method: Method::Exact,
        exact_fallback: false,
        budget_used: usize::try_from(total).unwrap_or(usize::MAX),
        seed: cfg.seed,
        efficiency_gap,
    })
}

/// Cumulative distribution over interior sizes 1..p−1, σ(s) ∝
/// (p−1)/(s(p−s)) — the Shapley-kernel size law.
fn interior_size_cdf(p: usize) -> Vec<f64> {
    let raw: Vec<f64> =
        (1..p).map(|s| (p - 1) as f64 / ((s * (p - s)) as f64)).collect();
    let total: f64 = raw.iter().sum();
    let mut acc = 0.0;
    raw.iter()
        .map(|v| {
            acc += v / total;
            acc
        })
        .collect()
}

fn draw_interior_mask(rng: &mut ChaCha8Rng, p: usize, cdf: &[f64]) -> u128 {
    let u: f64 = rng.gen();
    let size = cdf.partition_point(|&c| c < u) + 1;
    let size = size.min(p - 1);
    let idx = rand::seq::index::sample(rng, p, size);
    let mut bits = 0u128;
    for j in idx {
        bits |= 1 << j;
    }
    bits
}

/// Sequentially drawn distinct interior coalitions: the budget counts
/// distinct evaluations (each costs two model fits), so repeated draws are
/// rejected and redrawn. The accept/reject sequence depends only on the
/// draws so far, hence the first k accepted coalitions are identical for
/// every budget ≥ k at the same seed — nested budgets share a prefix (and a
/// game cache). `paired` follows each draw with its complement.
fn sample_interior(p: usize, count: usize, seed: u64, paired: bool) -> Vec<u128> {
    debug_assert!(
        (p as u32) >= u128::BITS || (count as u128) <= (1u128 << p) - 2,
        "more distinct interior coalitions requested than exist"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cdf = interior_size_cdf(p);
    let full = (1u128 << p) - 1;
    let mut seen = std::collections::HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let bits = draw_interior_mask(&mut rng, p, &cdf);
        if seen.insert(bits) {
            out.push(bits);
        }
        if paired && out.len() < count {
            let comp = full ^ bits;
            if seen.insert(comp) {
                out.push(comp);
            }
        }
    }
    out
}

/// Validated budget, or the exhaustive mask list when the budget covers the
/// power set.
enum BudgetPlan {
    Sampled(usize),
    Exhaustive,
}

fn plan_budget(p: usize, cfg: &EstimatorConfig) -> Result<(usize, BudgetPlan), ShapleyError> {
    // Exhaustive coverage satisfies any floor, so small p caps it at 2^p.
    let exhaustive_at =
        if (p as u32) < usize::BITS { Some(1usize << p) } else { None };
    let min = exhaustive_at.map_or(2 * p + 2, |e| e.min(2 * p + 2));
    let budget = cfg.budget.unwrap_or(0);
    if budget < min {
        return Err(ShapleyError::BudgetTooSmall { budget, min });
    }
    if exhaustive_at.is_some_and(|e| budget >= e) {
        return Ok((budget, BudgetPlan::Exhaustive));
    }
    Ok((budget, BudgetPlan::Sampled(budget)))
}

/// The query list for one budgeted run: anchors first, then distinct sampled
/// interior coalitions, exactly `budget` masks in total.
fn query_list(p: usize, plan: &BudgetPlan, seed: u64, paired: bool) -> Vec<u128> {
    match plan {
        BudgetPlan::Exhaustive => (0..(1u128 << p)).collect(),
        BudgetPlan::Sampled(budget) => {
            let full = (1u128 << p) - 1;
            let mut list = vec![0u128, full];
            list.extend(sample_interior(p, budget - 2, seed, paired));
            list
        }
    }
}

/// Evaluate each distinct mask once (in parallel), returning values keyed by
/// bits. Deterministic: values depend only on their own mask.
fn evaluate_distinct(
    game: &impl ValueFunction,
    list: &[u128],
) -> Result<HashMap<u128, f64>, ShapleyError> {
    let p = game.width();
    let mut distinct: Vec<u128> = list.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let values: Vec<(u128, f64)> = distinct
        .par_iter()
        .map(|&bits| -> Result<(u128, f64), ShapleyError> {
            let mask = CoalitionMask::from_bits(p, bits)?;
            Ok((bits, game.global(mask)?))
        })
        .collect::<Result<_, _>>()?;
    Ok(values.into_iter().collect())
}

/// Per-size stratified in/out accumulator. Under exhaustive coverage the
/// covered-cell means reproduce the subset-sum Shapley formula exactly;
/// under a sampled budget each stratum mean is a Monte-Carlo estimate and
/// per-feature averages renormalize over the covered strata.
struct MsrAccumulator {
    p: usize,
    sum_in: Vec<Vec<f64>>,
    cnt_in: Vec<Vec<u64>>,
    sum_out: Vec<Vec<f64>>,
    cnt_out: Vec<Vec<u64>>,
}

impl MsrAccumulator {
    fn new(p: usize) -> Self {
        MsrAccumulator {
            p,
            sum_in: vec![vec![0.0; p + 1]; p],
            cnt_in: vec![vec![0; p + 1]; p],
            sum_out: vec![vec![0.0; p + 1]; p],
            cnt_out: vec![vec![0; p + 1]; p],
        }
    }

    fn add(&mut self, bits: u128, value: f64) {
        let size = bits.count_ones() as usize;
        for j in 0..self.p {
            if bits >> j & 1 == 1 {
                self.sum_in[j][size] += value;
                self.cnt_in[j][size] += 1;
            } else {
                self.sum_out[j][size] += value;
                self.cnt_out[j][size] += 1;
            }
        }
    }

    fn phi(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| {
                let mut in_mean = 0.0;
                let mut in_cells = 0u64;
                for t in 1..=self.p {
                    if self.cnt_in[j][t] > 0 {
                        in_mean += self.sum_in[j][t] / self.cnt_in[j][t] as f64;
                        in_cells += 1;
                    }
                }
                let mut out_mean = 0.0;
                let mut out_cells = 0u64;
                for s in 0..self.p {
                    if self.cnt_out[j][s] > 0 {
                        out_mean += self.sum_out[j][s] / self.cnt_out[j][s] as f64;
                        out_cells += 1;
                    }
                }
                // Anchors guarantee at least one covered cell per side.
                in_mean / in_cells as f64 - out_mean / out_cells as f64
            })
            .collect()
    }
}

/// Maximum-sample-reuse estimator: every queried coalition updates all p
/// per-feature strata. Draws are complement-paired, which keeps each
/// feature's in/out counts balanced (the kernel size law is symmetric, so
/// the marginal distribution is unchanged). Does not enforce efficiency;
/// the gap is recorded as a diagnostic.
pub fn msr_estimate(
    game: &impl ValueFunction,
    cfg: &EstimatorConfig,
) -> Result<Attribution, ShapleyError> {
    let p = game.width();
    let (_, plan) = plan_budget(p, cfg)?;
    let list = query_list(p, &plan, cfg.seed, true);
    let values = evaluate_distinct(game, &list)?;
    let mut acc = MsrAccumulator::new(p);
    for &bits in &list {
        acc.add(bits, values[&bits]);
    }
    let phi = acc.phi();
    let full = (1u128 << p) - 1;
    let base_value = values[&0];
    let efficiency_gap = phi.iter().sum::<f64>() - (values[&full] - base_value);
    Ok(Attribution {
        phi,
        local_phi: None,
        base_value,
        method: Method::Msr,
        exact_fallback: matches!(plan, BudgetPlan::Exhaustive),
        budget_used: values.len(),
        seed: cfg.seed,
        efficiency_gap,
    })
}

/// Shapley kernel weight for an interior coalition of size s.
fn kernel_weight(p: usize, s: usize) -> f64 {
    (p - 1) as f64 / (binomial(p, s) * (s * (p - s)) as f64)
}

/// Gaussian elimination with partial pivoting; None on a vanishing pivot.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Constrained weighted least squares with Shapley kernel weights and paired
/// complement sampling. The intercept is pinned to ν(∅) and Σφ to
/// ν([p]) − ν(∅) through a KKT system, so efficiency holds at every budget.
pub fn kernelshap_estimate(
    game: &impl ValueFunction,
    cfg: &EstimatorConfig,
) -> Result<Attribution, ShapleyError> {
    let p = game.width();
    let (_, plan) = plan_budget(p, cfg)?;
    let list = query_list(p, &plan, cfg.seed, true);
    let values = evaluate_distinct(game, &list)?;
    let full = (1u128 << p) - 1;
    let base_value = values[&0];
    let delta = values[&full] - base_value;

    // Normal equations over interior queries for the centered target
    // ν(S) − ν(∅), weighted by the Shapley kernel.
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for &bits in &list {
        if bits == 0 || bits == full {
            continue;
        }
        let s = bits.count_ones() as usize;
        let w = kernel_weight(p, s);
        let y = values[&bits] - base_value;
        for j in 0..p {
            if bits >> j & 1 == 0 {
                continue;
            }
            b[j] += w * y;
            for k in j..p {
                if bits >> k & 1 == 1 {
                    a[j][k] += w;
                }
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[j][k] = a[k][j];
        }
    }

    let solve_kkt = |a: &Vec<Vec<f64>>| -> Option<Vec<f64>> {
        let mut m = vec![vec![0.0; p + 1]; p + 1];
        let mut rhs = vec![0.0; p + 1];
        for j in 0..p {
            m[j][..p].copy_from_slice(&a[j][..p]);
            m[j][p] = 1.0;
            m[p][j] = 1.0;
            rhs[j] = b[j];
        }
        rhs[p] = delta;
        solve_linear(m, rhs).map(|mut x| {
            x.truncate(p);
            x
        })
    };

    let phi = match solve_kkt(&a) {
        Some(phi) => phi,
        None => {
            log::warn!(
                "kernel least squares near-singular at p={p}; retrying with ridge 1e-10"
            );
            let mut ridged = a.clone();
            for (j, row) in ridged.iter_mut().enumerate() {
                row[j] += 1e-10;
            }
            solve_kkt(&ridged).ok_or(ShapleyError::SingularSystem)?
        }
    };

    let efficiency_gap = phi.iter().sum::<f64>() - delta;
    Ok(Attribution {
        phi,
        local_phi: None,
        base_value,
        method: Method::KernelShap,
        exact_fallback: matches!(plan, BudgetPlan::Exhaustive),
        budget_used: values.len(),
        seed: cfg.seed,
        efficiency_gap,
    })
}

/// Two-stage estimator: an additive-in-membership proxy fitted to the
/// queried values captures the bulk of the game (its Shapley values are its
/// coefficients, by linearity); plain MSR then decomposes the residual game
/// over the same queries. The proxy is anchored — intercept pinned to ν(∅)
/// and Σ coefficients constrained to ν(full) − ν(∅) through a KKT
/// multiplier — so only the residual decomposition can drift from
/// efficiency, and that remaining gap is projected out by an equal split.
/// Queries are complement-paired like the other budgeted estimators, so
/// all three share one prefix-stable stream (and one game cache) per seed.
pub fn regression_msr_estimate(
    game: &impl ValueFunction,
    cfg: &EstimatorConfig,
) -> Result<Attribution, ShapleyError> {
    let p = game.width();
    let (_, plan) = plan_budget(p, cfg)?;
    let list = query_list(p, &plan, cfg.seed, true);
    let values = evaluate_distinct(game, &list)?;
    let full = (1u128 << p) - 1;
    let base_value = values[&0];
    let delta = values[&full] - base_value;

    // Stage 1: anchored OLS for ν̃(S) = ν(∅) + Σ_{j∈S} c_j over the interior
    // queries, constrained to Σ_j c_j = ν(full) − ν(∅) through one KKT
    // multiplier. The proxy then matches the game exactly at both anchors
    // and contributes nothing to the efficiency gap.
    let mut gram = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    for &bits in &list {
        if bits == 0 || bits == full {
            continue;
        }
        let y = values[&bits] - base_value;
        for j in 0..p {
            if bits >> j & 1 == 0 {
                continue;
            }
            rhs[j] += y;
            for k in j..p {
                if bits >> k & 1 == 1 {
                    gram[j][k] += 1.0;
                }
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            gram[j][k] = gram[k][j];
        }
    }
    let solve_kkt = |gram: &Vec<Vec<f64>>| -> Option<Vec<f64>> {
        let mut m = vec![vec![0.0; p + 1]; p + 1];
        let mut kkt_rhs = vec![0.0; p + 1];
        for j in 0..p {
            m[j][..p].copy_from_slice(&gram[j][..p]);
            m[j][p] = 1.0;
            m[p][j] = 1.0;
            kkt_rhs[j] = rhs[j];
        }
        kkt_rhs[p] = delta;
        solve_linear(m, kkt_rhs).map(|mut x| {
            x.truncate(p);
            x
        })
    };
    let coef = match solve_kkt(&gram) {
        Some(c) => c,
        None => {
            log::warn!(
                "additive proxy normal equations near-singular at p={p}; ridge 1e-10 applied"
            );
            let mut ridged = gram.clone();
            for (j, row) in ridged.iter_mut().enumerate() {
                row[j] += 1e-10;
            }
            solve_kkt(&ridged).ok_or(ShapleyError::SingularSystem)?
        }
    };

    // Stage 2: MSR on the residual game over the same queries (the residual
    // vanishes at both anchors by construction).
    let mut acc = MsrAccumulator::new(p);
    for &bits in &list {
        let proxy = base_value
            + (0..p)
                .filter(|j| bits >> j & 1 == 1)
                .map(|j| coef[j])
                .sum::<f64>();
        acc.add(bits, values[&bits] - proxy);
    }
    let resid_phi = acc.phi();
    let mut phi: Vec<f64> = (0..p).map(|j| coef[j] + resid_phi[j]).collect();

    // Efficiency projection: spread the remaining gap equally.
    let gap = delta - phi.iter().sum::<f64>();
    for v in &mut phi {
        *v += gap / p as f64;
    }
    let efficiency_gap = phi.iter().sum::<f64>() - delta;
    Ok(Attribution {
        phi,
        local_phi: None,
        base_value,
        method: Method::RegressionMsr,
        exact_fallback: matches!(plan, BudgetPlan::Exhaustive),
        budget_used: values.len(),
        seed: cfg.seed,
        efficiency_gap,
    })
}

/// Ranked CSV rendering: covariate, phi, abs_phi, rank — sorted by |φ|
/// descending, ties by ascending covariate index.
pub fn attribution_csv(attribution: &Attribution, names: &[String]) -> String {
    assert_eq!(names.len(), attribution.phi.len(), "one name per covariate");
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&i, &j| {
        attribution.phi[j]
            .abs()
            .total_cmp(&attribution.phi[i].abs())
            .then(i.cmp(&j))
    });
    let mut out = String::from("covariate,phi,abs_phi,rank\n");
    for (rank, &j) in order.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            names[j],
            attribution.phi[j],
            attribution.phi[j].abs(),
            rank + 1
        ));
    }
    out
}
