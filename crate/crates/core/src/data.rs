//! Observational data model: covariate matrix, binary treatment, outcome,
//! optional role labels, coalition masks, and CSV ingestion.
//!
//! `Dataset` and `CoalitionMask` are immutable after construction and safe to
//! share across threads. Construction rejects any invariant violation; there
//! is no silent repair.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum coalition width supported by the bitset representation.
pub const MAX_MASK_WIDTH: usize = 128;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset must contain at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("dataset must contain at least one covariate")]
    NoCovariates,
    #[error("treatment vector contains a value other than 0 and 1")]
    NonBinaryTreatment,
    #[error("treatment arm a={0} is empty")]
    EmptyArm(u8),
    #[error("non-finite value at data row {row}, column '{col}'")]
    NonFinite { row: usize, col: String },
    #[error("duplicate covariate name '{0}'")]
    DuplicateName(String),
    #[error("got {names} covariate names for {p} covariate columns")]
    NameCount { names: usize, p: usize },
    #[error("got {roles} role labels for {p} covariate columns")]
    RoleCount { roles: usize, p: usize },
    #[error("vector length {len} does not match row count {n}")]
    LengthMismatch { len: usize, n: usize },
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("treatment and outcome columns must be distinct, both are '{0}'")]
    TreatmentOutcomeSame(String),
    #[error("cell at data row {row}, column '{col}' is not numeric")]
    NonNumericCell { row: usize, col: String },
    #[error("data row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("coalition mask width {mask} does not match width {data}")]
    WidthMismatch { mask: usize, data: usize },
    #[error("mask width must be in 1..={MAX_MASK_WIDTH}, got {0}")]
    MaskWidth(usize),
    #[error("mask bits exceed width {0}")]
    MaskBits(usize),
    #[error("covariate index {index} out of range for width {width}")]
    IndexOutOfRange { index: usize, width: usize },
    #[error("unknown covariate role '{0}'")]
    UnknownRole(String),
    #[error("role file references unknown covariate '{0}'")]
    UnknownCovariate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Ground-truth generator role of a covariate. Metadata only: the bias game
/// never reads roles; only data generators and metrics consume them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateRole {
    Instrument,
    Confounder,
    EffectModifier,
    OutcomeOnly,
    Noise,
    Unknown,
}

impl CovariateRole {
    pub fn as_str(self) -> &'static str {
        match self {
            CovariateRole::Instrument => "instrument",
            CovariateRole::Confounder => "confounder",
            CovariateRole::EffectModifier => "effect_modifier",
            CovariateRole::OutcomeOnly => "outcome_only",
            CovariateRole::Noise => "noise",
            CovariateRole::Unknown => "unknown",
        }
    }
}

impl fmt::Display for CovariateRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CovariateRole {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, DataError> {
        match s.trim() {
            "instrument" => Ok(CovariateRole::Instrument),
            "confounder" => Ok(CovariateRole::Confounder),
            "effect_modifier" => Ok(CovariateRole::EffectModifier),
            "outcome_only" => Ok(CovariateRole::OutcomeOnly),
            "noise" => Ok(CovariateRole::Noise),
            "unknown" => Ok(CovariateRole::Unknown),
            other => Err(DataError::UnknownRole(other.to_string())),
        }
    }
}

/// Subset S of the covariate index set, as a fixed-width bitset. Bit j set
/// means covariate j is in the coalition. Masks are totally ordered by
/// (width, bit pattern) so logs and caches have one canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoalitionMask {
    width: u8,
    bits: u128,
}

impl CoalitionMask {
    pub fn empty(width: usize) -> Result<Self, DataError> {
        if width == 0 || width > MAX_MASK_WIDTH {
            return Err(DataError::MaskWidth(width));
        }
        Ok(CoalitionMask { width: width as u8, bits: 0 })
    }

    pub fn full(width: usize) -> Result<Self, DataError> {
        let empty = Self::empty(width)?;
        Ok(empty.complement())
    }

    pub fn from_bits(width: usize, bits: u128) -> Result<Self, DataError> {
        let mut mask = Self::empty(width)?;
        if width < MAX_MASK_WIDTH && bits >> width != 0 {
            return Err(DataError::MaskBits(width));
        }
        mask.bits = bits;
        Ok(mask)
    }

    pub fn from_indices<I>(width: usize, indices: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut mask = Self::empty(width)?;
        for j in indices {
            if j >= width {
                return Err(DataError::IndexOutOfRange { index: j, width });
            }
            mask.bits |= 1u128 << j;
        }
        Ok(mask)
    }

    pub fn width(self) -> usize {
        self.width as usize
    }

    pub fn bits(self) -> u128 {
        self.bits
    }

    /// Lowercase hex rendering of the bit pattern, used in coalition logs.
    pub fn bits_hex(self) -> String {
        format!("{:x}", self.bits)
    }

    /// |S|: the number of covariates in the coalition.
    pub fn count(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn is_full(self) -> bool {
        self.count() == self.width()
    }

    pub fn contains(self, j: usize) -> bool {
        j < self.width() && self.bits >> j & 1 == 1
    }

    pub fn with(self, j: usize) -> Result<Self, DataError> {
        if j >= self.width() {
            return Err(DataError::IndexOutOfRange { index: j, width: self.width() });
        }
        Ok(CoalitionMask { width: self.width, bits: self.bits | 1u128 << j })
    }

    pub fn without(self, j: usize) -> Result<Self, DataError> {
        if j >= self.width() {
            return Err(DataError::IndexOutOfRange { index: j, width: self.width() });
        }
        Ok(CoalitionMask { width: self.width, bits: self.bits & !(1u128 << j) })
    }

    /// Bitwise complement within the mask width.
    pub fn complement(self) -> Self {
        let all = if self.width() == MAX_MASK_WIDTH {
            u128::MAX
        } else {
            (1u128 << self.width()) - 1
        };
        CoalitionMask { width: self.width, bits: all & !self.bits }
    }

    /// Member covariate indices in ascending order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.width()).filter(move |j| bits >> j & 1 == 1)
    }
}

impl fmt::Display for CoalitionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:x}/{}", self.bits, self.width)
    }
}

/// Immutable observational sample: covariates x (n×p), binary treatment a,
/// outcome y, unique covariate names, and optional per-covariate roles.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    a: Vec<u8>,
    y: Array1<f64>,
    names: Vec<String>,
    roles: Option<Vec<CovariateRole>>,
}

impl Dataset {
    pub fn new(
        x: Array2<f64>,
        a: Vec<u8>,
        y: Array1<f64>,
        names: Vec<String>,
        roles: Option<Vec<CovariateRole>>,
    ) -> Result<Self, DataError> {
        let n = x.nrows();
        let p = x.ncols();
        if n < 2 {
            return Err(DataError::TooFewRows(n));
        }
        if p == 0 {
            return Err(DataError::NoCovariates);
        }
        if p > MAX_MASK_WIDTH {
            return Err(DataError::MaskWidth(p));
        }
        if a.len() != n {
            return Err(DataError::LengthMismatch { len: a.len(), n });
        }
        if y.len() != n {
            return Err(DataError::LengthMismatch { len: y.len(), n });
        }
        if names.len() != p {
            return Err(DataError::NameCount { names: names.len(), p });
        }
        if let Some(roles) = &roles {
            if roles.len() != p {
                return Err(DataError::RoleCount { roles: roles.len(), p });
            }
        }
        for (j, name) in names.iter().enumerate() {
            if names[..j].contains(name) {
                return Err(DataError::DuplicateName(name.clone()));
            }
        }
        if a.iter().any(|&v| v > 1) {
            return Err(DataError::NonBinaryTreatment);
        }
        for arm in [0u8, 1u8] {
            if !a.contains(&arm) {
                return Err(DataError::EmptyArm(arm));
            }
        }
        for i in 0..n {
            for j in 0..p {
                if !x[[i, j]].is_finite() {
                    return Err(DataError::NonFinite { row: i + 1, col: names[j].clone() });
                }
            }
            if !y[i].is_finite() {
                return Err(DataError::NonFinite { row: i + 1, col: "<outcome>".to_string() });
            }
        }
        Ok(Dataset { x, a, y, names, roles })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> Option<&[CovariateRole]> {
        self.roles.as_deref()
    }

    /// Row indices belonging to treatment arm `arm`, in dataset order.
    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.a[i] == arm).collect()
    }

    /// Extracts the columns selected by `mask`, in ascending covariate-index
    /// order. The empty mask yields an n×0 matrix.
    pub fn subset_columns(&self, mask: &CoalitionMask) -> Result<Array2<f64>, DataError> {
        if mask.width() != self.p() {
            return Err(DataError::WidthMismatch { mask: mask.width(), data: self.p() });
        }
        Ok(select_columns_unchecked(&self.x, mask))
    }

    pub fn with_roles(mut self, roles: Vec<CovariateRole>) -> Result<Self, DataError> {
        if roles.len() != self.p() {
            return Err(DataError::RoleCount { roles: roles.len(), p: self.p() });
        }
        self.roles = Some(roles);
        Ok(self)
    }

    /// Attaches roles given (name, role) pairs, e.g. from a sidecar file.
    /// Covariates absent from `pairs` keep role `Unknown`.
    pub fn with_named_roles(self, pairs: &[(String, CovariateRole)]) -> Result<Self, DataError> {
        let mut roles = vec![CovariateRole::Unknown; self.p()];
        for (name, role) in pairs {
            let j = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| DataError::UnknownCovariate(name.clone()))?;
            roles[j] = *role;
        }
        self.with_roles(roles)
    }

    /// Per-column affine transform to mean 0, sd 1 (population sd). Columns
    /// with zero variance are centered only.
    pub fn standardized(&self) -> Dataset {
        let cols: Vec<usize> = (0..self.p()).collect();
        self.standardized_columns(&cols)
    }

    /// Standardizes only columns with more than two distinct values, leaving
    /// binary and constant columns untouched.
    pub fn standardized_continuous(&self) -> Dataset {
        let cols: Vec<usize> = (0..self.p())
            .filter(|&j| column_distinct_exceeds(&self.x, j, 2))
            .collect();
        self.standardized_columns(&cols)
    }

    fn standardized_columns(&self, cols: &[usize]) -> Dataset {
        let mut x = self.x.clone();
        let n = self.n() as f64;
        for &j in cols {
            let mean = x.column(j).sum() / n;
            let var = x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
            for v in x.column_mut(j).iter_mut() {
                *v = (*v - mean) * scale;
            }
        }
        Dataset { x, ..self.clone() }
    }

    /// Dataset restricted to the given rows. Fails if a treatment arm
    /// becomes empty or fewer than two rows remain.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Dataset, DataError> {
        let mut x = Array2::zeros((rows.len(), self.p()));
        let mut a = Vec::with_capacity(rows.len());
        let mut y = Array1::zeros(rows.len());
        for (out, &i) in rows.iter().enumerate() {
            x.row_mut(out).assign(&self.x.row(i));
            a.push(self.a[i]);
            y[out] = self.y[i];
        }
        Dataset::new(x, a, y, self.names.clone(), self.roles.clone())
    }

    /// Dataset without the listed covariate columns.
    pub fn drop_columns(&self, drop: &[usize]) -> Result<Dataset, DataError> {
        for &j in drop {
            if j >= self.p() {
                return Err(DataError::IndexOutOfRange { index: j, width: self.p() });
            }
        }
        let keep: Vec<usize> = (0..self.p()).filter(|j| !drop.contains(j)).collect();
        if keep.is_empty() {
            return Err(DataError::NoCovariates);
        }
        let mask = CoalitionMask::from_indices(self.p(), keep.iter().copied())?;
        let x = select_columns_unchecked(&self.x, &mask);
        let names = keep.iter().map(|&j| self.names[j].clone()).collect();
        let roles = self
            .roles
            .as_ref()
            .map(|r| keep.iter().map(|&j| r[j]).collect());
        Dataset::new(x, self.a.clone(), self.y.clone(), names, roles)
    }
}

/// Column subset of an arbitrary matrix; the mask width must equal the
/// column count. Selected columns appear in ascending index order.
pub fn select_columns(m: &Array2<f64>, mask: &CoalitionMask) -> Result<Array2<f64>, DataError> {
    if mask.width() != m.ncols() {
        return Err(DataError::WidthMismatch { mask: mask.width(), data: m.ncols() });
    }
    Ok(select_columns_unchecked(m, mask))
}

fn select_columns_unchecked(m: &Array2<f64>, mask: &CoalitionMask) -> Array2<f64> {
    let cols: Vec<usize> = mask.indices().collect();
    let mut out = Array2::zeros((m.nrows(), cols.len()));
    for (k, &j) in cols.iter().enumerate() {
        out.column_mut(k).assign(&m.column(j));
    }
    out
}

fn column_distinct_exceeds(x: &Array2<f64>, j: usize, limit: usize) -> bool {
    let mut seen: Vec<u64> = Vec::with_capacity(limit + 1);
    for v in x.column(j).iter() {
        let bits = canonical_bits(*v);
        if !seen.contains(&bits) {
            seen.push(bits);
            if seen.len() > limit {
                return true;
            }
        }
    }
    false
}

/// Bit pattern of a finite f64 with -0.0 folded into 0.0, for use as an
/// exact-equality key.
pub(crate) fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0.0f64.to_bits()
    } else {
        v.to_bits()
    }
}

/// Loads an observational dataset from a headered CSV file. Covariates are
/// every column except the named treatment and outcome columns, in header
/// order. Any missing or non-numeric cell rejects the file; imputation is a
/// preprocessing concern.
pub fn load_csv(
    path: impl AsRef<Path>,
    treatment_col: &str,
    outcome_col: &str,
) -> Result<Dataset, DataError> {
    if treatment_col == outcome_col {
        return Err(DataError::TreatmentOutcomeSame(treatment_col.to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let a_col = headers
        .iter()
        .position(|h| h == treatment_col)
        .ok_or_else(|| DataError::MissingColumn(treatment_col.to_string()))?;
    let y_col = headers
        .iter()
        .position(|h| h == outcome_col)
        .ok_or_else(|| DataError::MissingColumn(outcome_col.to_string()))?;
    let cov_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != a_col && j != y_col).collect();
    if cov_cols.is_empty() {
        return Err(DataError::NoCovariates);
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() != headers.len() {
            return Err(DataError::RaggedRow { row, found: record.len(), expected: headers.len() });
        }
        let parse = |j: usize| -> Result<f64, DataError> {
            let cell = record.get(j).unwrap_or("");
            let v: f64 = cell
                .parse()
                .map_err(|_| DataError::NonNumericCell { row, col: headers[j].clone() })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite { row, col: headers[j].clone() });
            }
            Ok(v)
        };
        let a_val = parse(a_col)?;
        if a_val == 0.0 {
            a.push(0u8);
        } else if a_val == 1.0 {
            a.push(1u8);
        } else {
            return Err(DataError::NonBinaryTreatment);
        }
        y.push(parse(y_col)?);
        let mut xr = Vec::with_capacity(cov_cols.len());
        for &j in &cov_cols {
            xr.push(parse(j)?);
        }
        rows.push(xr);
    }

    let n = rows.len();
    let p = cov_cols.len();
    if n < 2 {
        return Err(DataError::TooFewRows(n));
    }
    let mut x = Array2::zeros((n, p));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            x[[i, j]] = *v;
        }
    }
    let names: Vec<String> = cov_cols.iter().map(|&j| headers[j].clone()).collect();
    Dataset::new(x, a, Array1::from_vec(y), names, None)
}

/// Writes a dataset as CSV with header `names...,a,y`, mirroring `load_csv`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = ds.names().to_vec();
    header.push("a".to_string());
    header.push("y".to_string());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = (0..ds.p()).map(|j| ds.x()[[i, j]].to_string()).collect();
        rec.push(ds.a()[i].to_string());
        rec.push(ds.y()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a role sidecar CSV with columns (name, role).
pub fn read_roles_csv(path: impl AsRef<Path>) -> Result<Vec<(String, CovariateRole)>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record?;
        let name = record.get(0).unwrap_or("").to_string();
        let role: CovariateRole = record.get(1).unwrap_or("").parse()?;
        pairs.push((name, role));
    }
    Ok(pairs)
}

/// Writes a role sidecar CSV with columns (name, role).
pub fn write_roles_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let roles = ds.roles().unwrap_or(&[]);
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["name", "role"])?;
    for (j, name) in ds.names().iter().enumerate() {
        let role = roles.get(j).copied().unwrap_or(CovariateRole::Unknown);
        w.write_record([name.as_str(), role.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write as _;

    fn tiny() -> Dataset {
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0], [0.5, 0.0, 1.5]];
        Dataset::new(
            x,
            vec![0, 1, 0, 1],
            array![1.0, 2.0, 3.0, 4.0],
            vec!["x1".into(), "x2".into(), "x3".into()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn construction_rejects_invariant_violations() {
        let x = array![[1.0], [2.0]];
        let names = vec!["x1".to_string()];
        let err = Dataset::new(x.clone(), vec![0, 2], array![0.0, 0.0], names.clone(), None);
        assert!(matches!(err, Err(DataError::NonBinaryTreatment)));
        let err = Dataset::new(x.clone(), vec![1, 1], array![0.0, 0.0], names.clone(), None);
        assert!(matches!(err, Err(DataError::EmptyArm(0))));
        let err = Dataset::new(x.clone(), vec![0, 1], array![0.0, f64::NAN], names.clone(), None);
        assert!(matches!(err, Err(DataError::NonFinite { .. })));
        let err = Dataset::new(
            array![[1.0, 2.0], [3.0, 4.0]],
            vec![0, 1],
            array![0.0, 0.0],
            vec!["x1".to_string(), "x1".to_string()],
            None,
        );
        assert!(matches!(err, Err(DataError::DuplicateName(_))));
        let err = Dataset::new(array![[1.0]], vec![0], array![0.0], names, None);
        assert!(matches!(err, Err(DataError::TooFewRows(1))));
    }

    #[test]
    fn subset_columns_examples() {
        let ds = tiny();
        let m101 = CoalitionMask::from_bits(3, 0b101).unwrap();
        let sub = ds.subset_columns(&m101).unwrap();
        assert_eq!(sub, array![[1.0, 3.0], [4.0, 6.0], [7.0, 9.0], [0.5, 1.5]]);
        let full = ds.subset_columns(&CoalitionMask::full(3).unwrap()).unwrap();
        assert_eq!(full, *ds.x());
        let empty = ds.subset_columns(&CoalitionMask::empty(3).unwrap()).unwrap();
        assert_eq!(empty.dim(), (4, 0));
        let wrong = CoalitionMask::empty(2).unwrap();
        assert!(matches!(ds.subset_columns(&wrong), Err(DataError::WidthMismatch { .. })));
    }

    #[test]
    fn mask_ordering_and_ops() {
        let masks: Vec<CoalitionMask> =
            (0..8u128).map(|b| CoalitionMask::from_bits(3, b).unwrap()).collect();
        let mut sorted = masks.clone();
        sorted.sort();
        assert_eq!(masks, sorted);
        let m = CoalitionMask::from_indices(5, [0, 3]).unwrap();
        assert_eq!(m.count(), 2);
        assert!(m.contains(3) && !m.contains(1));
        assert_eq!(m.complement().bits(), 0b10110);
        assert_eq!(m.indices().collect::<Vec<_>>(), vec![0, 3]);
        assert!(CoalitionMask::from_bits(3, 0b1000).is_err());
        assert!(CoalitionMask::empty(0).is_err());
        assert!(CoalitionMask::empty(129).is_err());
    }

    #[test]
    fn load_csv_minimal_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x1,x2,a,y\n0,1,0,1.5\n1,0,1,2.5\n0,0,0,0.5\n1,1,1,3.5").unwrap();
        let ds = load_csv(f.path(), "a", "y").unwrap();
        assert_eq!((ds.n(), ds.p()), (4, 2));
        assert_eq!(ds.names(), ["x1", "x2"]);
        assert_eq!(ds.a(), &[0, 1, 0, 1]);
        assert_eq!(ds.y(), &array![1.5, 2.5, 0.5, 3.5]);
    }

    #[test]
    fn load_csv_rejects_contract_violations() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x1,a,y\n0,2,1\n1,0,2").unwrap();
        assert!(matches!(load_csv(f.path(), "a", "y"), Err(DataError::NonBinaryTreatment)));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x1,a,y\n0,1,1\n1,1,2").unwrap();
        assert!(matches!(load_csv(f.path(), "a", "y"), Err(DataError::EmptyArm(0))));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x1,a,y\n0,0,1\n1,1,2").unwrap();
        assert!(matches!(load_csv(f.path(), "b", "y"), Err(DataError::MissingColumn(_))));

        // A missing cell is rejected, not imputed or dropped.
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x1,a,y\n,0,1\n1,1,2").unwrap();
        let err = load_csv(f.path(), "a", "y");
        assert!(
            matches!(err, Err(DataError::NonNumericCell { row: 1, ref col }) if col == "x1"),
            "{err:?}"
        );

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x1,a,y\n0,0,1\nfoo,1,2").unwrap();
        let err = load_csv(f.path(), "a", "y");
        assert!(matches!(err, Err(DataError::NonNumericCell { row: 2, .. })), "{err:?}");
    }

    #[test]
    fn csv_round_trip_is_deterministic() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_csv(&ds, &p1).unwrap();
        let re = load_csv(&p1, "a", "y").unwrap();
        write_csv(&re, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(re.x(), ds.x());
        assert_eq!(re.a(), ds.a());
        assert_eq!(re.y(), ds.y());
    }

    #[test]
    fn roles_sidecar_round_trip() {
        let ds = tiny()
            .with_roles(vec![
                CovariateRole::Instrument,
                CovariateRole::Confounder,
                CovariateRole::Noise,
            ])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roles.csv");
        write_roles_csv(&ds, &path).unwrap();
        let pairs = read_roles_csv(&path).unwrap();
        let re = tiny().with_named_roles(&pairs).unwrap();
        assert_eq!(re.roles(), ds.roles());

        let bad = vec![("nope".to_string(), CovariateRole::Noise)];
        assert!(matches!(tiny().with_named_roles(&bad), Err(DataError::UnknownCovariate(_))));
    }

    #[test]
    fn standardization_statistics() {
        let ds = tiny().standardized();
        for j in 0..ds.p() {
            let col = ds.x().column(j);
            let mean = col.sum() / ds.n() as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ds.n() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
        // Binary columns are untouched by the continuous variant.
        let x = array![[0.0, 10.0], [1.0, 20.0], [0.0, 30.0], [1.0, 40.0]];
        let ds = Dataset::new(
            x,
            vec![0, 1, 0, 1],
            array![0.0, 0.0, 0.0, 0.0],
            vec!["b".into(), "c".into()],
            None,
        )
        .unwrap()
        .standardized_continuous();
        assert_eq!(ds.x().column(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert!((ds.x().column(1).sum()).abs() < 1e-12);
    }

    #[test]
    fn row_and_column_subsets() {
        let ds = tiny();
        let sub = ds.subset_rows(&[0, 1]).unwrap();
        assert_eq!(sub.n(), 2);
        assert!(matches!(ds.subset_rows(&[0, 2]), Err(DataError::EmptyArm(1))));
        let dropped = ds.drop_columns(&[1]).unwrap();
        assert_eq!(dropped.names(), ["x1", "x3"]);
        assert_eq!(dropped.x().column(1).to_vec(), vec![3.0, 6.0, 9.0, 1.5]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Extracting through the full mask then sub-selecting equals
            // direct extraction.
            #[test]
            fn subset_composition(bits in 0u128..8, rows in 2usize..6) {
                let x = Array2::from_shape_fn((rows, 3), |(i, j)| (i * 3 + j) as f64);
                let mut a = vec![0u8; rows];
                a[rows - 1] = 1;
                let ds = Dataset::new(
                    x,
                    a,
                    Array1::zeros(rows),
                    vec!["x1".into(), "x2".into(), "x3".into()],
                    None,
                ).unwrap();
                let mask = CoalitionMask::from_bits(3, bits).unwrap();
                let direct = ds.subset_columns(&mask).unwrap();
                let full = ds.subset_columns(&CoalitionMask::full(3).unwrap()).unwrap();
                let composed = select_columns(&full, &mask).unwrap();
                prop_assert_eq!(direct, composed);
            }

            #[test]
            fn mask_popcount_matches_indices(bits in 0u128..(1 << 10), width in 10usize..12) {
                let mask = CoalitionMask::from_bits(width, bits).unwrap();
                prop_assert_eq!(mask.count(), mask.indices().count());
                prop_assert_eq!(mask.complement().count(), width - mask.count());
            }
        }
    }
}
