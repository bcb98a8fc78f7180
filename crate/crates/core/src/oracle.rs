//! Exact-rational population oracles for finite discrete data-generating
//! processes: ground-truth partially adjusted bias, coalition values, a
//! brute-force permutation Shapley, and the covariance identity that links
//! bias to treatment/outcome alignment.
//!
//! Everything here is exact rational arithmetic; floating point appears only
//! at comparison boundaries in callers. These oracles are deliberately
//! independent of the estimation engine so they can vouch for it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use num::bigint::BigInt;
use num::{BigRational, Integer, One, ToPrimitive, Zero};
use serde::Deserialize;
use thiserror::Error;

use crate::data::CoalitionMask;

/// Ceiling on brute-force permutation enumeration (p! growth).
pub const MAX_BRUTE_FORCE_P: usize = 12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("coalition mask width {mask} does not match table width {table}")]
    WidthMismatch { mask: usize, table: usize },
    #[error("subgroup value has {got} coordinates, mask selects {want}")]
    SubgroupArity { got: usize, want: usize },
    #[error("subgroup has zero probability mass")]
    ZeroMassSubgroup,
    #[error("conditional treatment probability is degenerate (0 or 1)")]
    DegenerateArm,
    #[error("value table is missing coalition bits {0:#x}")]
    IncompleteTable(u128),
    #[error("dimension {0} exceeds the brute-force limit {MAX_BRUTE_FORCE_P}")]
    DimensionTooLarge(usize),
    #[error("cannot parse rational from '{0}'")]
    ParseRational(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One atom of a finite discrete joint distribution over (X, A, Y(0), Y(1)):
/// a covariate tuple with its probability, treatment probability π, and both
/// potential-outcome means.
#[derive(Debug, Clone)]
pub struct Cell {
    pub x: Vec<i64>,
    pub prob: BigRational,
    pub pi: BigRational,
    pub mu0: BigRational,
    pub mu1: BigRational,
}

/// Finite discrete joint distribution with exact-rational parameters.
/// Invariants: cell probabilities are positive and sum to exactly 1;
/// 0 < π < 1 in every cell (positivity); covariate tuples are distinct.
#[derive(Debug, Clone)]
pub struct DiscreteJoint {
    p: usize,
    cells: Vec<Cell>,
}

impl DiscreteJoint {
    pub fn new(p: usize, cells: Vec<Cell>) -> Result<Self, OracleError> {
        if p == 0 {
            return Err(OracleError::InvalidTable("width must be positive".into()));
        }
        if cells.is_empty() {
            return Err(OracleError::InvalidTable("no cells".into()));
        }
        let mut total = BigRational::zero();
        let mut seen: BTreeSet<&[i64]> = BTreeSet::new();
        for cell in &cells {
            if cell.x.len() != p {
                return Err(OracleError::InvalidTable(format!(
                    "cell {:?} has {} coordinates, expected {p}",
                    cell.x,
                    cell.x.len()
                )));
            }
            if !seen.insert(&cell.x) {
                return Err(OracleError::InvalidTable(format!("duplicate cell {:?}", cell.x)));
            }
            if cell.prob <= BigRational::zero() {
                return Err(OracleError::InvalidTable(format!(
                    "cell {:?} has non-positive probability",
                    cell.x
                )));
            }
            if cell.pi <= BigRational::zero() || cell.pi >= BigRational::one() {
                return Err(OracleError::InvalidTable(format!(
                    "cell {:?} violates positivity: pi must lie strictly in (0,1)",
                    cell.x
                )));
            }
            total += &cell.prob;
        }
        if total != BigRational::one() {
            return Err(OracleError::InvalidTable(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteJoint { p, cells })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    fn check_mask(&self, mask: &CoalitionMask) -> Result<(), OracleError> {
        if mask.width() != self.p {
            return Err(OracleError::WidthMismatch { mask: mask.width(), table: self.p });
        }
        Ok(())
    }

    /// Distinct realizable values of X_S, in canonical order.
    pub fn support(&self, mask: &CoalitionMask) -> Result<Vec<Vec<i64>>, OracleError> {
        self.check_mask(mask)?;
        let mut out: BTreeSet<Vec<i64>> = BTreeSet::new();
        for cell in &self.cells {
            out.insert(restrict(&cell.x, mask));
        }
        Ok(out.into_iter().collect())
    }

    fn subgroup(&self, mask: &CoalitionMask, x_s: &[i64]) -> Result<Vec<&Cell>, OracleError> {
        self.check_mask(mask)?;
        if x_s.len() != mask.count() {
            return Err(OracleError::SubgroupArity { got: x_s.len(), want: mask.count() });
        }
        let cells: Vec<&Cell> =
            self.cells.iter().filter(|c| restrict(&c.x, mask) == x_s).collect();
        if cells.is_empty() {
            return Err(OracleError::ZeroMassSubgroup);
        }
        Ok(cells)
    }
}

fn restrict(x: &[i64], mask: &CoalitionMask) -> Vec<i64> {
    mask.indices().map(|j| x[j]).collect()
}

/// Conditional moments of a subgroup {X_S = x_S}.
struct SubgroupStats {
    mass: BigRational,
    /// e_S = E[π | X_S]
    e: BigRational,
    /// E[μ_a | X_S]
    mean_mu: [BigRational; 2],
    /// Cov(π, μ_a | X_S)
    cov: [BigRational; 2],
    /// E[μ1 − μ0 | X_S]
    tau: BigRational,
}

fn subgroup_stats(cells: &[&Cell]) -> SubgroupStats {
    let mut mass = BigRational::zero();
    let mut e_num = BigRational::zero();
    let mut mu_num = [BigRational::zero(), BigRational::zero()];
    let mut pi_mu_num = [BigRational::zero(), BigRational::zero()];
    for c in cells {
        mass += &c.prob;
        e_num += &c.prob * &c.pi;
        mu_num[0] += &c.prob * &c.mu0;
        mu_num[1] += &c.prob * &c.mu1;
        pi_mu_num[0] += &c.prob * &c.pi * &c.mu0;
        pi_mu_num[1] += &c.prob * &c.pi * &c.mu1;
    }
    let e = &e_num / &mass;
    let mean_mu = [&mu_num[0] / &mass, &mu_num[1] / &mass];
    let cov = [
        &pi_mu_num[0] / &mass - &e * &mean_mu[0],
        &pi_mu_num[1] / &mass - &e * &mean_mu[1],
    ];
    let tau = &mean_mu[1] - &mean_mu[0];
    SubgroupStats { mass, e, mean_mu, cov, tau }
}

/// Partially adjusted bias b_S(x_S) = δ_S(x_S) − τ_S(x_S): the observational
/// treated-minus-untreated contrast within the subgroup, minus the projected
/// treatment effect.
pub fn population_bias(
    dist: &DiscreteJoint,
    mask: &CoalitionMask,
    x_s: &[i64],
) -> Result<BigRational, OracleError> {
    let cells = dist.subgroup(mask, x_s)?;
    Ok(bias_of(&subgroup_stats(&cells)))
}

fn bias_of(stats: &SubgroupStats) -> BigRational {
    // δ_S = E[μ1|A=1,X_S] − E[μ0|A=0,X_S], written through conditional
    // covariances so the decomposition below is available for free:
    // δ_S = E[μ1] + Cov(π,μ1)/e − E[μ0] + Cov(π,μ0)/(1−e).
    let one = BigRational::one();
    let delta = &stats.mean_mu[1] + &stats.cov[1] / &stats.e
        - &stats.mean_mu[0]
        + &stats.cov[0] / (&one - &stats.e);
    delta - &stats.tau
}

/// Population coalition value ν(S) = −Σ_{x_S} Pr(X_S = x_S) · b_S(x_S).
pub fn population_value(
    dist: &DiscreteJoint,
    mask: &CoalitionMask,
) -> Result<BigRational, OracleError> {
    dist.check_mask(mask)?;
    let mut groups: BTreeMap<Vec<i64>, Vec<&Cell>> = BTreeMap::new();
    for cell in &dist.cells {
        groups.entry(restrict(&cell.x, mask)).or_default().push(cell);
    }
    let mut value = BigRational::zero();
    for cells in groups.values() {
        let stats = subgroup_stats(cells);
        value -= &stats.mass * bias_of(&stats);
    }
    Ok(value)
}

/// Population mean outcome in one treatment arm, E[Y | A = arm].
pub fn population_arm_mean(dist: &DiscreteJoint, arm: u8) -> BigRational {
    let one = BigRational::one();
    let mut num = BigRational::zero();
    let mut den = BigRational::zero();
    for c in &dist.cells {
        let w = if arm == 1 { &c.prob * &c.pi } else { &c.prob * (&one - &c.pi) };
        num += &w * if arm == 1 { &c.mu1 } else { &c.mu0 };
        den += w;
    }
    num / den
}

/// Both sides of the bias decomposition
/// b_S(x_S) = Cov(π, μ1 | X_S)/e_S + Cov(π, μ0 | X_S)/(1 − e_S),
/// computed independently: the left from the contrast definition, the right
/// from conditional covariances. They must agree exactly.
pub fn covariance_identity(
    dist: &DiscreteJoint,
    mask: &CoalitionMask,
    x_s: &[i64],
) -> Result<(BigRational, BigRational), OracleError> {
    let cells = dist.subgroup(mask, x_s)?;
    let stats = subgroup_stats(&cells);
    if stats.e.is_zero() || stats.e == BigRational::one() {
        return Err(OracleError::DegenerateArm);
    }
    let lhs = bias_of(&stats);
    let one = BigRational::one();
    let rhs = &stats.cov[1] / &stats.e + &stats.cov[0] / (&one - &stats.e);
    Ok((lhs, rhs))
}

/// The population coalition game: ν(S) for every mask over the table's
/// covariates, keyed by mask bits.
pub fn population_game(dist: &DiscreteJoint) -> Result<BTreeMap<u128, BigRational>, OracleError> {
    let p = dist.p();
    let mut out = BTreeMap::new();
    for bits in 0..(1u128 << p) {
        let mask = CoalitionMask::from_bits(p, bits).expect("bits within width");
        out.insert(bits, population_value(dist, &mask)?);
    }
    Ok(out)
}

/// Shapley values by direct averaging of marginal contributions over all p!
/// player orderings, in exact arithmetic. Quadratic-blowup oracle: requires
/// the full 2^p value table and p ≤ 12.
pub fn brute_force_shapley(
    values: &BTreeMap<u128, BigRational>,
    p: usize,
) -> Result<Vec<BigRational>, OracleError> {
    if p > MAX_BRUTE_FORCE_P {
        return Err(OracleError::DimensionTooLarge(p));
    }
    let size = 1usize << p;
    let mut table: Vec<&BigRational> = Vec::with_capacity(size);
    for bits in 0..size as u128 {
        table.push(values.get(&bits).ok_or(OracleError::IncompleteTable(bits))?);
    }
    if p == 0 {
        return Ok(Vec::new());
    }

    let factorial: i128 = (1..=p as i128).product();
    if let Some(scaled) = scale_to_i128(&table, factorial) {
        let (acc, denom) = permutation_sums_i128(&scaled.values, p);
        return Ok(acc
            .into_iter()
            .map(|a| BigRational::new(BigInt::from(a), &scaled.denom * BigInt::from(denom)))
            .collect());
    }

    // Exact fallback when the common denominator or the accumulators exceed
    // the machine-integer fast path.
    let mut acc = vec![BigRational::zero(); p];
    for_each_permutation(p, |perm| {
        let mut mask = 0usize;
        for &j in perm {
            let next = mask | (1 << j);
            acc[j] += table[next] - table[mask];
            mask = next;
        }
    });
    let denom = BigRational::from_integer(BigInt::from(factorial));
    Ok(acc.into_iter().map(|a| a / &denom).collect())
}

struct ScaledTable {
    values: Vec<i128>,
    denom: BigInt,
}

/// Rescales the table onto a common denominator so marginal sums run in
/// i128. Returns None when any scaled value or the worst-case accumulator
/// would overflow.
fn scale_to_i128(table: &[&BigRational], factorial: i128) -> Option<ScaledTable> {
    let mut denom = BigInt::one();
    for v in table {
        denom = denom.lcm(v.denom());
    }
    let mut values = Vec::with_capacity(table.len());
    let mut max_abs: i128 = 0;
    for v in table {
        let scaled = (v.numer() * (&denom / v.denom())).to_i128()?;
        max_abs = max_abs.max(scaled.checked_abs()?);
        values.push(scaled);
    }
    // Each player accumulates one marginal contribution (|·| ≤ 2·max) per
    // permutation.
    factorial.checked_mul(2)?.checked_mul(max_abs)?;
    Some(ScaledTable { values, denom })
}

fn permutation_sums_i128(table: &[i128], p: usize) -> (Vec<i128>, i128) {
    let mut acc = vec![0i128; p];
    for_each_permutation(p, |perm| {
        let mut mask = 0usize;
        for &j in perm {
            let next = mask | (1 << j);
            acc[j] += table[next] - table[mask];
            mask = next;
        }
    });
    let factorial: i128 = (1..=p as i128).product();
    (acc, factorial)
}

/// Heap's algorithm; visits every permutation of 0..p exactly once.
fn for_each_permutation(p: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..p).collect();
    let mut c = vec![0usize; p];
    visit(&perm);
    let mut i = 0;
    while i < p {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// The two-binary-covariate table in which the two partially adjusted biases
/// point in opposite directions and cancel: the unadjusted contrast is 0 and
/// the fully adjusted bias is 0, yet every singleton adjustment set leaves
/// nonzero residual bias.
pub fn cancellation_example() -> DiscreteJoint {
    let cell = |x1: i64, x2: i64, pi: (i64, i64), m: (i64, i64)| Cell {
        x: vec![x1, x2],
        prob: ratio(1, 4),
        pi: ratio(pi.0, pi.1),
        mu0: ratio(m.0, m.1),
        mu1: ratio(m.0, m.1),
    };
    DiscreteJoint::new(
        2,
        vec![
            cell(0, 0, (1, 3), (0, 1)),
            cell(0, 1, (3, 10), (-3, 2)),
            cell(1, 0, (1, 10), (-4, 3)),
            cell(1, 1, (9, 10), (-7, 6)),
        ],
    )
    .expect("table is valid by construction")
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses "a/b", "a", or "-a/b" into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, OracleError> {
    let parse_int = |t: &str| -> Result<BigInt, OracleError> {
        t.trim().parse::<BigInt>().map_err(|_| OracleError::ParseRational(s.to_string()))
    };
    match s.split_once('/') {
        Some((num, den)) => {
            let den = parse_int(den)?;
            if den.is_zero() {
                return Err(OracleError::ParseRational(s.to_string()));
            }
            Ok(BigRational::new(parse_int(num)?, den))
        }
        None => Ok(BigRational::from_integer(parse_int(s)?)),
    }
}

#[derive(Deserialize)]
struct JointFile {
    cells: Vec<CellFile>,
}

#[derive(Deserialize)]
struct CellFile {
    x: Vec<i64>,
    prob: RationalRepr,
    pi: RationalRepr,
    mu0: RationalRepr,
    mu1: RationalRepr,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RationalRepr {
    Int(i64),
    Str(String),
}

impl RationalRepr {
    fn to_rational(&self) -> Result<BigRational, OracleError> {
        match self {
            RationalRepr::Int(v) => Ok(BigRational::from_integer(BigInt::from(*v))),
            RationalRepr::Str(s) => parse_rational(s),
        }
    }
}

/// Loads a DiscreteJoint from JSON: `{"cells": [{"x": [0,0], "prob": "1/4",
/// "pi": "1/3", "mu0": 0, "mu1": "0"}, ...]}`. Rational fields accept
/// integers or "a/b" strings.
pub fn load_json(path: impl AsRef<Path>) -> Result<DiscreteJoint, OracleError> {
    let text = std::fs::read_to_string(path)?;
    let file: JointFile = serde_json::from_str(&text)?;
    let p = file.cells.first().map(|c| c.x.len()).unwrap_or(0);
    let cells = file
        .cells
        .iter()
        .map(|c| {
            Ok(Cell {
                x: c.x.clone(),
                prob: c.prob.to_rational()?,
                pi: c.pi.to_rational()?,
                mu0: c.mu0.to_rational()?,
                mu1: c.mu1.to_rational()?,
            })
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    DiscreteJoint::new(p, cells)
}
