//! Pluggable regression backends for the per-arm and per-coalition outcome
//! models.
//!
//! All backends share three contracts that the coalition engine leans on:
//! determinism (bit-for-bit reproducible fits and predictions), permutation
//! invariance (training-row order never matters; internal accumulations run
//! in a canonical sort order), and a constant-mean model when the feature
//! width is zero (the empty-coalition regression).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

use crate::data::canonical_bits;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("feature matrix has {x_rows} rows but target has {y_len}")]
    LengthMismatch { x_rows: usize, y_len: usize },
    #[error("model trained on width {trained}, queried with width {queried}")]
    WidthMismatch { trained: usize, queried: usize },
    #[error("column {col} has {distinct} distinct values, exceeding the cell-mean limit {max}")]
    CellCardinalityExceeded { col: usize, distinct: usize, max: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("singular design matrix")]
    SingularDesign,
}

fn default_max_cardinality() -> usize {
    16
}

fn default_max_depth() -> usize {
    6
}

fn default_min_leaf() -> usize {
    5
}

/// Backend choice plus hyperparameters. `Auto` applies the default policy:
/// exact cell means when every column is low-cardinality, otherwise k-NN
/// with k = ⌈√n⌉.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionBackend {
    ExactCellMean {
        #[serde(default = "default_max_cardinality")]
        max_cardinality: usize,
    },
    KnnRegressor {
        /// None picks k = ⌈√n⌉ at fit time.
        #[serde(default)]
        k: Option<usize>,
    },
    PiecewiseConstantTree {
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
    /// Ordinary least squares with intercept; the natural choice when the
    /// outcome surfaces are linear in the covariates.
    LinearRegressor,
    Auto {
        #[serde(default = "default_max_cardinality")]
        max_cardinality: usize,
    },
}

impl Default for RegressionBackend {
    fn default() -> Self {
        RegressionBackend::Auto { max_cardinality: default_max_cardinality() }
    }
}

/// Trained state. Immutable after fit; safe to query concurrently.
#[derive(Debug, Clone)]
pub struct FittedModel {
    width: usize,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Constant(f64),
    CellMean(CellMeanModel),
    Knn(KnnModel),
    Tree(TreeModel),
    Linear(LinearModel),
}

impl FittedModel {
    /// Feature width the model was trained on.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, RegressionError> {
        if x.ncols() != self.width {
            return Err(RegressionError::WidthMismatch { trained: self.width, queried: x.ncols() });
        }
        let out = match &self.inner {
            Inner::Constant(c) => Array1::from_elem(x.nrows(), *c),
            Inner::CellMean(m) => m.predict(x),
            Inner::Knn(m) => m.predict(x),
            Inner::Tree(m) => m.predict(x),
            Inner::Linear(m) => m.predict(x),
        };
        Ok(out)
    }
}

pub fn fit(
    backend: &RegressionBackend,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<FittedModel, RegressionError> {
    let n = x.nrows();
    if n == 0 {
        return Err(RegressionError::EmptyTrainingSet);
    }
    if y.len() != n {
        return Err(RegressionError::LengthMismatch { x_rows: n, y_len: y.len() });
    }
    let d = x.ncols();
    if d == 0 {
        return Ok(FittedModel { width: 0, inner: Inner::Constant(canonical_mean(y.iter().copied())) });
    }
    let inner = match backend {
        RegressionBackend::ExactCellMean { max_cardinality } => {
            Inner::CellMean(CellMeanModel::fit(x, y, *max_cardinality)?)
        }
        RegressionBackend::KnnRegressor { k } => Inner::Knn(KnnModel::fit(x, y, *k)?),
        RegressionBackend::PiecewiseConstantTree { max_depth, min_leaf } => {
            Inner::Tree(TreeModel::fit(x, y, *max_depth, *min_leaf)?)
        }
        RegressionBackend::LinearRegressor => Inner::Linear(LinearModel::fit(x, y)?),
        RegressionBackend::Auto { max_cardinality } => {
            let low_card =
                (0..d).all(|j| distinct_count(x.column(j)) <= *max_cardinality);
            if low_card {
                Inner::CellMean(CellMeanModel::fit(x, y, *max_cardinality)?)
            } else {
                Inner::Knn(KnnModel::fit(x, y, None)?)
            }
        }
    };
    Ok(FittedModel { width: d, inner })
}

fn distinct_count(col: ArrayView1<'_, f64>) -> usize {
    col.iter().map(|v| canonical_bits(*v)).collect::<BTreeSet<_>>().len()
}

/// Mean over a canonical (value-sorted) order so row permutations cannot
/// change the float result. All-equal inputs return that value exactly.
fn canonical_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    debug_assert!(!v.is_empty());
    v.sort_unstable_by(f64::total_cmp);
    if v[0].to_bits() == v[v.len() - 1].to_bits() {
        return v[0];
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sum in a canonical (value-sorted) order so row permutations cannot
/// change the float result.
fn canonical_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_unstable_by(f64::total_cmp);
    v.iter().sum()
}

/// Gaussian elimination with partial pivoting on a dense square system.
/// Returns None when a pivot vanishes or the inputs are not finite.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        let pivot = a[pivot_row][col];
        if !pivot.is_finite() || pivot.abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let tail: f64 = (col + 1..n).map(|k| a[col][k] * x[k]).sum();
        x[col] = (b[col] - tail) / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Ordinary least squares on the intercept-augmented design, solved from
/// normal equations accumulated in canonical order. Rank-deficient designs
/// (constant or duplicated columns) retry with a tiny relative ridge.
#[derive(Debug, Clone)]
struct LinearModel {
    intercept: f64,
    coef: Vec<f64>,
}

impl LinearModel {
    fn fit(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Self, RegressionError> {
        let n = x.nrows();
        let d = x.ncols();
        let dim = d + 1;
        let entry = |j: usize, i: usize| if j == 0 { 1.0 } else { x[(i, j - 1)] };
        let mut xtx = vec![vec![0.0f64; dim]; dim];
        let mut xty = vec![0.0f64; dim];
        for a in 0..dim {
            for b in a..dim {
                let s = canonical_sum((0..n).map(|i| entry(a, i) * entry(b, i)));
                xtx[a][b] = s;
                xtx[b][a] = s;
            }
            xty[a] = canonical_sum((0..n).map(|i| entry(a, i) * y[i]));
        }
        let solution = solve_dense(xtx.clone(), xty.clone()).or_else(|| {
            let scale = 1e-10 * xtx.iter().enumerate().map(|(a, r)| r[a]).fold(1.0, f64::max);
            let mut ridged = xtx;
            for (a, row) in ridged.iter_mut().enumerate().skip(1) {
                row[a] += scale;
            }
            solve_dense(ridged, xty)
        });
        let Some(beta) = solution else {
            return Err(RegressionError::SingularDesign);
        };
        Ok(LinearModel { intercept: beta[0], coef: beta[1..].to_vec() })
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                self.intercept
                    + row.iter().zip(&self.coef).map(|(v, c)| v * c).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct CellMeanModel {
    cells: HashMap<Vec<u64>, f64>,
    global_mean: f64,
}

impl CellMeanModel {
    fn fit(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        max_cardinality: usize,
    ) -> Result<Self, RegressionError> {
        if max_cardinality == 0 {
            return Err(RegressionError::InvalidHyperparameter("max_cardinality must be positive".into()));
        }
        for j in 0..x.ncols() {
            let distinct = distinct_count(x.column(j));
            if distinct > max_cardinality {
                return Err(RegressionError::CellCardinalityExceeded {
                    col: j,
                    distinct,
                    max: max_cardinality,
                });
            }
        }
        let mut groups: std::collections::BTreeMap<Vec<u64>, Vec<f64>> = Default::default();
        for (row, &target) in x.rows().into_iter().zip(y.iter()) {
            let key: Vec<u64> = row.iter().map(|v| canonical_bits(*v)).collect();
            groups.entry(key).or_default().push(target);
        }
        let cells = groups
            .into_iter()
            .map(|(key, targets)| (key, canonical_mean(targets.into_iter())))
            .collect();
        Ok(CellMeanModel { cells, global_mean: canonical_mean(y.iter().copied()) })
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let preds: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|row| {
                let key: Vec<u64> = row.iter().map(|v| canonical_bits(*v)).collect();
                *self.cells.get(&key).unwrap_or(&self.global_mean)
            })
            .collect();
        Array1::from_vec(preds)
    }
}

#[derive(Debug, Clone)]
struct KnnModel {
    /// Standardized training features.
    z: Array2<f64>,
    y: Vec<f64>,
    center: Vec<f64>,
    /// 1/sd per column; 0 for zero-variance columns, which then carry no
    /// distance signal.
    inv_scale: Vec<f64>,
    k: usize,
}

impl KnnModel {
    fn fit(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        k: Option<usize>,
    ) -> Result<Self, RegressionError> {
        let n = x.nrows();
        let k = match k {
            Some(0) => {
                return Err(RegressionError::InvalidHyperparameter("k must be positive".into()))
            }
            Some(k) => k.min(n),
            None => (n as f64).sqrt().ceil() as usize,
        };
        let d = x.ncols();
        let mut center = Vec::with_capacity(d);
        let mut inv_scale = Vec::with_capacity(d);
        for j in 0..d {
            let mean = canonical_mean(x.column(j).iter().copied());
            let mut sq: Vec<f64> = x.column(j).iter().map(|v| (v - mean) * (v - mean)).collect();
            sq.sort_unstable_by(f64::total_cmp);
            let var = sq.iter().sum::<f64>() / n as f64;
            let sd = var.sqrt();
            center.push(mean);
            inv_scale.push(if sd > 0.0 { 1.0 / sd } else { 0.0 });
        }
        let mut z = x.to_owned();
        for j in 0..d {
            z.column_mut(j).mapv_inplace(|v| (v - center[j]) * inv_scale[j]);
        }
        Ok(KnnModel { z, y: y.to_vec(), center, inv_scale, k })
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let n = self.z.nrows();
        let d = self.z.ncols();
        let preds: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|row| {
                let zq: Vec<f64> =
                    (0..d).map(|j| (row[j] - self.center[j]) * self.inv_scale[j]).collect();
                let mut dist: Vec<f64> = (0..n)
                    .map(|i| {
                        let mut acc = 0.0;
                        for j in 0..d {
                            let diff = zq[j] - self.z[(i, j)];
                            acc += diff * diff;
                        }
                        acc
                    })
                    .collect();
                let mut order = dist.clone();
                let (_, kth, _) = order.select_nth_unstable_by(self.k - 1, f64::total_cmp);
                let radius = *kth;
                // Radius-inclusive: every training point tied with the k-th
                // distance participates, so row order cannot matter.
                let mut included: Vec<(f64, f64)> = dist
                    .drain(..)
                    .zip(self.y.iter().copied())
                    .filter(|(dd, _)| *dd <= radius)
                    .collect();
                included.sort_unstable_by(|a, b| {
                    a.0.total_cmp(&b.0).then_with(|| a.1.total_cmp(&b.1))
                });
                canonical_mean_sorted(included.iter().map(|(_, t)| *t))
            })
            .collect();
        Array1::from_vec(preds)
    }
}

/// Like canonical_mean but for inputs already in canonical order.
fn canonical_mean_sorted(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    debug_assert!(!v.is_empty());
    if v[0].to_bits() == v[v.len() - 1].to_bits() {
        return v[0];
    }
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone)]
enum TreeNode {
    Leaf(f64),
    Split { col: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct TreeModel {
    nodes: Vec<TreeNode>,
}

impl TreeModel {
    fn fit(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        max_depth: usize,
        min_leaf: usize,
    ) -> Result<Self, RegressionError> {
        if min_leaf == 0 {
            return Err(RegressionError::InvalidHyperparameter("min_leaf must be positive".into()));
        }
        let mut model = TreeModel { nodes: Vec::new() };
        let rows: Vec<usize> = (0..x.nrows()).collect();
        model.grow(&x, &y, rows, 0, max_depth, min_leaf);
        Ok(model)
    }

    fn grow(
        &mut self,
        x: &ArrayView2<'_, f64>,
        y: &ArrayView1<'_, f64>,
        rows: Vec<usize>,
        depth: usize,
        max_depth: usize,
        min_leaf: usize,
    ) -> usize {
        let targets = canonical_mean(rows.iter().map(|&i| y[i]));
        let n = rows.len();
        let constant = {
            let first = canonical_bits(y[rows[0]]);
            rows.iter().all(|&i| canonical_bits(y[i]) == first)
        };
        if depth >= max_depth || n < 2 * min_leaf || constant {
            return self.push(TreeNode::Leaf(targets));
        }
        let Some((col, threshold)) = best_split(x, y, &rows, min_leaf) else {
            return self.push(TreeNode::Leaf(targets));
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| x[(i, col)] <= threshold);
        let placeholder = self.push(TreeNode::Leaf(f64::NAN));
        let left = self.grow(x, y, left_rows, depth + 1, max_depth, min_leaf);
        let right = self.grow(x, y, right_rows, depth + 1, max_depth, min_leaf);
        self.nodes[placeholder] = TreeNode::Split { col, threshold, left, right };
        placeholder
    }

    fn push(&mut self, node: TreeNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let preds: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|row| {
                let mut at = 0;
                loop {
                    match &self.nodes[at] {
                        TreeNode::Leaf(v) => return *v,
                        TreeNode::Split { col, threshold, left, right } => {
                            at = if row[*col] <= *threshold { *left } else { *right };
                        }
                    }
                }
            })
            .collect();
        Array1::from_vec(preds)
    }
}

/// Greedy SSE-minimizing split: the (column, threshold) maximizing
/// S_L²/n_L + S_R²/n_R, scanned columns-ascending then thresholds-ascending
/// so exact score ties keep the first candidate. Rows are sorted by
/// (feature, target) before the prefix scan, making the choice independent
/// of row order.
fn best_split(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    rows: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let n = rows.len();
    let base = {
        let mut ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        ys.sort_unstable_by(f64::total_cmp);
        let s: f64 = ys.iter().sum();
        s * s / n as f64
    };
    let mut best: Option<(f64, usize, f64)> = None;
    for col in 0..x.ncols() {
        let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&i| (x[(i, col)], y[i])).collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.total_cmp(&b.1)));
        let total: f64 = {
            let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            ys.sort_unstable_by(f64::total_cmp);
            ys.iter().sum()
        };
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += pairs[i].1;
            let (a, b) = (pairs[i].0, pairs[i + 1].0);
            if !(a < b) {
                continue;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / n_left as f64
                + right_sum * right_sum / n_right as f64;
            if score > base && best.as_ref().map_or(true, |(s, _, _)| score > *s) {
                // Midpoint, nudged down to the left value when rounding
                // would otherwise land on (or past) the right value.
                let mut threshold = a + (b - a) / 2.0;
                if !(threshold >= a && threshold < b) {
                    threshold = a;
                }
                best = Some((score, col, threshold));
            }
        }
    }
    best.map(|(_, col, threshold)| (col, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array2};

    fn fit_ok(backend: &RegressionBackend, x: &Array2<f64>, y: &[f64]) -> FittedModel {
        fit(backend, x.view(), arr1(y).view()).unwrap()
    }

    #[test]
    fn zero_width_fits_constant_mean() {
        let x = Array2::<f64>::zeros((3, 0));
        for backend in [
            RegressionBackend::default(),
            RegressionBackend::ExactCellMean { max_cardinality: 16 },
            RegressionBackend::KnnRegressor { k: None },
            RegressionBackend::PiecewiseConstantTree { max_depth: 4, min_leaf: 1 },
            RegressionBackend::LinearRegressor,
        ] {
            let model = fit_ok(&backend, &x, &[1.0, 2.0, 3.0]);
            let preds = model.predict(Array2::<f64>::zeros((5, 0)).view()).unwrap();
            assert!(preds.iter().all(|&v| v == 2.0));
        }
    }

    #[test]
    fn cell_mean_recovers_noiseless_cells_exactly() {
        // Treated rows of the noiseless cancellation design: four cells with
        // repeated identical targets. The constant-cell path must return the
        // stored target bit-for-bit.
        let m = [0.0, -1.5, -4.0 / 3.0, -7.0 / 6.0];
        let counts = [10usize, 9, 3, 27];
        let cells = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for c in 0..4 {
            for _ in 0..counts[c] {
                rows.push(cells[c]);
                y.push(m[c]);
            }
        }
        let x = Array2::from_shape_vec((rows.len(), 2), rows.concat()).unwrap();
        let model = fit_ok(&RegressionBackend::ExactCellMean { max_cardinality: 16 }, &x, &y);
        let queries = arr2(&cells);
        let preds = model.predict(queries.view()).unwrap();
        for c in 0..4 {
            assert_eq!(preds[c].to_bits(), m[c].to_bits());
        }
    }

    #[test]
    fn cell_mean_interpolates_unique_cells_and_falls_back() {
        let x = arr2(&[[0.0], [1.0], [2.0]]);
        let model = fit_ok(&RegressionBackend::ExactCellMean { max_cardinality: 16 }, &x, &[5.0, 7.0, 9.0]);
        let preds = model.predict(arr2(&[[0.0], [1.0], [2.0], [3.0]]).view()).unwrap();
        assert_eq!(preds.to_vec(), vec![5.0, 7.0, 9.0, 7.0]);
    }

    #[test]
    fn cell_mean_rejects_high_cardinality() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64);
        let err = fit(
            &RegressionBackend::ExactCellMean { max_cardinality: 16 },
            x.view(),
            Array1::zeros(20).view(),
        )
        .unwrap_err();
        match err {
            RegressionError::CellCardinalityExceeded { col, distinct, max } => {
                assert_eq!((col, distinct, max), (0, 20, 16));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn knn_k1_returns_the_matching_target() {
        let x = arr2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]]);
        let y = [10.0, 20.0, 30.0, 40.0];
        let model = fit_ok(&RegressionBackend::KnnRegressor { k: Some(1) }, &x, &y);
        let preds = model.predict(x.view()).unwrap();
        assert_eq!(preds.to_vec(), y.to_vec());
    }

    #[test]
    fn knn_with_k_equal_n_is_the_global_mean() {
        // Integer targets keep every summation order exact, so each query
        // must produce the identical global mean.
        let x = arr2(&[[0.0], [1.0], [2.0], [7.0]]);
        let y = [1.0, 2.0, 3.0, 10.0];
        let model = fit_ok(&RegressionBackend::KnnRegressor { k: Some(4) }, &x, &y);
        let preds = model.predict(arr2(&[[0.0], [5.0], [100.0]]).view()).unwrap();
        assert!(preds.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn knn_includes_all_ties_at_the_kth_radius() {
        // Symmetric design: ±1 tie at the near radius, ±3 at the far one.
        let x = arr2(&[[-1.0], [1.0], [3.0], [-3.0]]);
        let y = [10.0, 20.0, 40.0, 80.0];
        for k in [1, 2] {
            let model = fit_ok(&RegressionBackend::KnnRegressor { k: Some(k) }, &x, &y);
            let preds = model.predict(arr2(&[[0.0]]).view()).unwrap();
            assert_eq!(preds[0], 15.0, "k={k} should average the ±1 tie");
        }
        let model = fit_ok(&RegressionBackend::KnnRegressor { k: Some(3) }, &x, &y);
        let preds = model.predict(arr2(&[[0.0]]).view()).unwrap();
        assert_eq!(preds[0], 37.5, "the far tie joins at k=3");
    }

    #[test]
    fn knn_ignores_zero_variance_columns() {
        let x = arr2(&[[5.0, 0.0], [5.0, 1.0], [5.0, 2.0]]);
        let y = [0.0, 10.0, 20.0];
        let model = fit_ok(&RegressionBackend::KnnRegressor { k: Some(1) }, &x, &y);
        // Wild first coordinate; only the second drives the neighbor choice.
        let preds = model.predict(arr2(&[[999.0, 1.9]]).view()).unwrap();
        assert_eq!(preds[0], 20.0);
    }

    #[test]
    fn tree_recovers_a_step_function() {
        let x = Array2::from_shape_fn((8, 1), |(i, _)| i as f64);
        let y = [0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0];
        let model =
            fit_ok(&RegressionBackend::PiecewiseConstantTree { max_depth: 3, min_leaf: 1 }, &x, &y);
        let preds = model.predict(arr2(&[[3.4], [3.6], [-2.0], [9.0]]).view()).unwrap();
        assert_eq!(preds.to_vec(), vec![0.0, 10.0, 0.0, 10.0]);
    }

    #[test]
    fn tree_depth_zero_is_constant() {
        let x = Array2::from_shape_fn((4, 1), |(i, _)| i as f64);
        let y = [0.0, 4.0, 4.0, 0.0];
        let model =
            fit_ok(&RegressionBackend::PiecewiseConstantTree { max_depth: 0, min_leaf: 1 }, &x, &y);
        let preds = model.predict(x.view()).unwrap();
        assert!(preds.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn tree_respects_min_leaf() {
        // One outlier target at the edge; min_leaf=2 forbids isolating it.
        let x = Array2::from_shape_fn((6, 1), |(i, _)| i as f64);
        let y = [0.0, 0.0, 0.0, 0.0, 0.0, 12.0];
        let model =
            fit_ok(&RegressionBackend::PiecewiseConstantTree { max_depth: 4, min_leaf: 2 }, &x, &y);
        let preds = model.predict(arr2(&[[5.0]]).view()).unwrap();
        assert_eq!(preds[0], 6.0, "the outlier leaf must keep two rows");
    }

    #[test]
    fn linear_recovers_exact_coefficients() {
        // Noiseless plane y = 1 + 2x₁ − 3x₂: OLS must reproduce it, including
        // at query points far outside the training hull.
        let x = arr2(&[
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [2.0, 1.0],
            [-1.0, 3.0],
            [0.5, -2.0],
        ]);
        let y: Vec<f64> = x.rows().into_iter().map(|r| 1.0 + 2.0 * r[0] - 3.0 * r[1]).collect();
        let model = fit_ok(&RegressionBackend::LinearRegressor, &x, &y);
        let preds = model.predict(arr2(&[[10.0, -4.0], [0.25, 0.75]]).view()).unwrap();
        assert!((preds[0] - 33.0).abs() < 1e-10);
        assert!((preds[1] - -0.75).abs() < 1e-10);
    }

    #[test]
    fn linear_rank_deficient_design_still_predicts() {
        // A duplicated column makes the normal equations exactly singular;
        // the ridge retry must still fit the underlying line.
        let x = arr2(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
        let y = [0.0, 2.0, 4.0, 6.0];
        let model = fit_ok(&RegressionBackend::LinearRegressor, &x, &y);
        let preds = model.predict(arr2(&[[4.0, 4.0]]).view()).unwrap();
        assert!((preds[0] - 8.0).abs() < 1e-6);

        // Same for a zero-variance column, which is collinear with the
        // intercept.
        let x = arr2(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]);
        let y = [10.0, 20.0, 30.0];
        let model = fit_ok(&RegressionBackend::LinearRegressor, &x, &y);
        let preds = model.predict(arr2(&[[4.0, 5.0]]).view()).unwrap();
        assert!((preds[0] - 40.0).abs() < 1e-6);
    }

    #[test]
    fn auto_matches_the_policy_it_advertises() {
        // Low-cardinality columns: Auto must behave exactly like cell means.
        let x = arr2(&[[0.0, 1.0], [0.0, 0.0], [1.0, 1.0], [1.0, 0.0]]);
        let y = [1.0, 2.0, 3.0, 4.0];
        let auto = fit_ok(&RegressionBackend::Auto { max_cardinality: 16 }, &x, &y);
        let cm = fit_ok(&RegressionBackend::ExactCellMean { max_cardinality: 16 }, &x, &y);
        let q = arr2(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert_eq!(auto.predict(q.view()).unwrap(), cm.predict(q.view()).unwrap());

        // A high-cardinality column flips Auto to k-NN with k = ⌈√n⌉.
        let xc = Array2::from_shape_fn((20, 1), |(i, _)| i as f64 * 1.1);
        let yc: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let auto = fit_ok(&RegressionBackend::Auto { max_cardinality: 16 }, &xc, &yc);
        let knn = fit_ok(&RegressionBackend::KnnRegressor { k: Some(5) }, &xc, &yc);
        let q = arr2(&[[3.0], [17.9]]);
        assert_eq!(auto.predict(q.view()).unwrap(), knn.predict(q.view()).unwrap());
    }

    #[test]
    fn contract_errors() {
        let x = arr2(&[[0.0], [1.0]]);
        assert!(matches!(
            fit(&RegressionBackend::default(), Array2::<f64>::zeros((0, 2)).view(), arr1(&[]).view()),
            Err(RegressionError::EmptyTrainingSet)
        ));
        assert!(matches!(
            fit(&RegressionBackend::default(), x.view(), arr1(&[1.0]).view()),
            Err(RegressionError::LengthMismatch { x_rows: 2, y_len: 1 })
        ));
        assert!(matches!(
            fit(&RegressionBackend::KnnRegressor { k: Some(0) }, x.view(), arr1(&[1.0, 2.0]).view()),
            Err(RegressionError::InvalidHyperparameter(_))
        ));
        assert!(matches!(
            fit(
                &RegressionBackend::PiecewiseConstantTree { max_depth: 2, min_leaf: 0 },
                x.view(),
                arr1(&[1.0, 2.0]).view()
            ),
            Err(RegressionError::InvalidHyperparameter(_))
        ));
        let model = fit(&RegressionBackend::default(), x.view(), arr1(&[1.0, 2.0]).view()).unwrap();
        assert!(matches!(
            model.predict(Array2::<f64>::zeros((1, 3)).view()),
            Err(RegressionError::WidthMismatch { trained: 1, queried: 3 })
        ));
    }

    #[test]
    fn backend_serialization_uses_kind_tags() {
        let backend = RegressionBackend::KnnRegressor { k: Some(7) };
        let json = serde_json::to_string(&backend).unwrap();
        assert_eq!(json, r#"{"kind":"knn_regressor","k":7}"#);
        let parsed: RegressionBackend = serde_json::from_str(r#"{"kind":"auto"}"#).unwrap();
        assert_eq!(parsed, RegressionBackend::Auto { max_cardinality: 16 });
        let parsed: RegressionBackend =
            serde_json::from_str(r#"{"kind":"piecewise_constant_tree"}"#).unwrap();
        assert_eq!(parsed, RegressionBackend::PiecewiseConstantTree { max_depth: 6, min_leaf: 5 });
        let parsed: RegressionBackend =
            serde_json::from_str(r#"{"kind":"linear_regressor"}"#).unwrap();
        assert_eq!(parsed, RegressionBackend::LinearRegressor);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn backends() -> Vec<RegressionBackend> {
            vec![
                RegressionBackend::ExactCellMean { max_cardinality: 64 },
                RegressionBackend::KnnRegressor { k: Some(3) },
                RegressionBackend::PiecewiseConstantTree { max_depth: 3, min_leaf: 1 },
                RegressionBackend::LinearRegressor,
                RegressionBackend::Auto { max_cardinality: 4 },
            ]
        }

        fn arb_training() -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<f64>)> {
            proptest::collection::vec(
                ((0i32..6), (-3i32..4), (-40i32..40)),
                3..=24,
            )
            .prop_map(|raw| {
                let xs: Vec<[f64; 2]> = raw
                    .iter()
                    .map(|(a, b, _)| [*a as f64 * 0.5, *b as f64 * 1.25])
                    .collect();
                let ys: Vec<f64> = raw.iter().map(|(_, _, c)| *c as f64 / 8.0).collect();
                (xs, ys)
            })
        }

        fn to_matrix(rows: &[[f64; 2]]) -> Array2<f64> {
            Array2::from_shape_vec((rows.len(), 2), rows.concat()).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn permuting_training_rows_never_changes_predictions(
                (xs, ys) in arb_training(),
                seed in 0u64..1000,
            ) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut order: Vec<usize> = (0..xs.len()).collect();
                order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let xs_p: Vec<[f64; 2]> = order.iter().map(|&i| xs[i]).collect();
                let ys_p: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
                let queries = to_matrix(&xs);
                for backend in backends() {
                    let a = fit(&backend, to_matrix(&xs).view(), arr1(&ys).view()).unwrap();
                    let b = fit(&backend, to_matrix(&xs_p).view(), arr1(&ys_p).view()).unwrap();
                    let pa = a.predict(queries.view()).unwrap();
                    let pb = b.predict(queries.view()).unwrap();
                    for (u, v) in pa.iter().zip(pb.iter()) {
                        prop_assert_eq!(u.to_bits(), v.to_bits());
                    }
                }
            }

            #[test]
            fn refitting_is_bitwise_deterministic((xs, ys) in arb_training()) {
                let queries = to_matrix(&xs);
                for backend in backends() {
                    let a = fit(&backend, to_matrix(&xs).view(), arr1(&ys).view()).unwrap();
                    let b = fit(&backend, to_matrix(&xs).view(), arr1(&ys).view()).unwrap();
                    let pa = a.predict(queries.view()).unwrap();
                    let pb = b.predict(queries.view()).unwrap();
                    for (u, v) in pa.iter().zip(pb.iter()) {
                        prop_assert_eq!(u.to_bits(), v.to_bits());
                    }
                }
            }

            #[test]
            fn target_shifts_move_predictions_by_the_shift(
                (xs, ys) in arb_training(),
                c in -4i32..=4,
            ) {
                // Exact in real arithmetic; float summation leaves ulp-level
                // residue, so compare at a tight relative tolerance.
                let c = c as f64 * 2.5;
                let shifted: Vec<f64> = ys.iter().map(|v| v + c).collect();
                let queries = to_matrix(&xs);
                for backend in [
                    RegressionBackend::ExactCellMean { max_cardinality: 64 },
                    RegressionBackend::KnnRegressor { k: Some(3) },
                ] {
                    let a = fit(&backend, to_matrix(&xs).view(), arr1(&ys).view()).unwrap();
                    let b = fit(&backend, to_matrix(&xs).view(), arr1(&shifted).view()).unwrap();
                    let pa = a.predict(queries.view()).unwrap();
                    let pb = b.predict(queries.view()).unwrap();
                    for (u, v) in pa.iter().zip(pb.iter()) {
                        let scale = 1.0 + u.abs().max(v.abs());
                        prop_assert!(((u + c) - v).abs() <= 1e-9 * scale);
                    }
                }
            }
        }
    }
}
