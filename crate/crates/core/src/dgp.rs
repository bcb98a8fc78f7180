//! Synthetic and semi-synthetic data generators with known ground truth.
//!
//! Every generator is a pure function of its spec (seed included): identical
//! specs produce bit-identical datasets. Randomness is organized into
//! per-purpose ChaCha streams keyed by (seed, stream id) so that, for
//! example, enlarging the noise block of a role-based design does not
//! perturb the confounder draws.

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{canonical_bits, CovariateRole, DataError, Dataset};

#[derive(Debug, Error)]
pub enum DgpError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("{indices} confounder indices but {alpha} alpha and {beta} beta coefficients")]
    LengthMismatch { indices: usize, alpha: usize, beta: usize },
    #[error("treatment arm {0} stayed empty after {1} resampling attempts")]
    EmptyArm(u8, usize),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Unit-level ground truth attached to a generated dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// True propensity e(x_i).
    pub propensity: Array1<f64>,
    /// Noiseless untreated surface μ0(x_i).
    pub mu0: Array1<f64>,
    /// Noiseless treated surface μ1(x_i).
    pub mu1: Array1<f64>,
    /// True conditional effect τ(x_i) = μ1 − μ0.
    pub tau: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

const STREAM_TREATMENT: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_LATENT: u64 = 3;
const STREAM_INSTRUMENTS: u64 = 0x100;
const STREAM_CONFOUNDERS: u64 = 0x200;
const STREAM_MODIFIERS: u64 = 0x300;
const STREAM_OUTCOME_ONLY: u64 = 0x400;
const STREAM_NOISE_BLOCK: u64 = 0x500;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_column(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    StandardNormal.sample_iter(stream_rng(seed, stream)).take(n).collect()
}

fn uniform_column(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    Uniform::new(0.0f64, 1.0).sample_iter(rng).take(n).collect()
}

/// Numerically stable logit⁻¹.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn default_xi() -> f64 {
    3.0
}

fn default_gamma_z() -> f64 {
    1.0
}

fn default_sigma() -> f64 {
    1.0
}

/// Role-partitioned synthetic design: independent standard-normal covariates
/// split into instrument, confounder, effect-modifier, outcome-only, and
/// noise blocks, with sum-of-squares outcome surfaces and a logistic
/// propensity driven by the confounder block (strength `xi`) plus an
/// instrument term (strength `gamma_z`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleDgpSpec {
    pub n_instruments: usize,
    pub n_confounders: usize,
    pub n_modifiers: usize,
    pub n_outcome_only: usize,
    pub n_noise: usize,
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_gamma_z")]
    pub gamma_z: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
}

impl RoleDgpSpec {
    pub fn p(&self) -> usize {
        self.n_instruments + self.n_confounders + self.n_modifiers + self.n_outcome_only + self.n_noise
    }

    /// Benchmark role composition for dimension `p`. Dimensions 4, 11, 17,
    /// and 100 use the published splits; any other dimension assigns 40% of
    /// covariates (rounded) to confounders and divides the rest evenly over
    /// instruments, modifiers, outcome-only, and noise, earlier blocks
    /// absorbing the remainder.
    pub fn preset(p: usize, n: usize, seed: u64) -> Result<RoleDgpSpec, DgpError> {
        let (z, c, m, o, nn) = match p {
            0 => return Err(DgpError::InvalidSpec("p must be positive".into())),
            4 => (1, 1, 1, 1, 0),
            11 => (2, 3, 3, 2, 1),
            17 => (3, 5, 3, 4, 2),
            100 => (15, 40, 15, 15, 15),
            p => {
                let c = ((0.4 * p as f64).round() as usize).clamp(1, p);
                let rest = p - c;
                let base = rest / 4;
                let extra = rest % 4;
                let bump = |i: usize| base + usize::from(i < extra);
                (bump(0), c, bump(1), bump(2), bump(3))
            }
        };
        let spec = RoleDgpSpec {
            n_instruments: z,
            n_confounders: c,
            n_modifiers: m,
            n_outcome_only: o,
            n_noise: nn,
            xi: default_xi(),
            gamma_z: default_gamma_z(),
            sigma: default_sigma(),
            n,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), DgpError> {
        if self.p() == 0 {
            return Err(DgpError::InvalidSpec("at least one covariate required".into()));
        }
        if self.n < 2 {
            return Err(DgpError::InvalidSpec("n must be at least 2".into()));
        }
        if self.xi != 0.0 && self.n_confounders == 0 {
            return Err(DgpError::InvalidSpec(
                "nonzero xi requires n_confounders >= 1".into(),
            ));
        }
        for (name, v) in [("xi", self.xi), ("gamma_z", self.gamma_z), ("sigma", self.sigma)] {
            if !v.is_finite() {
                return Err(DgpError::InvalidSpec(format!("{name} must be finite")));
            }
        }
        if self.sigma < 0.0 {
            return Err(DgpError::InvalidSpec("sigma must be nonnegative".into()));
        }
        Ok(())
    }
}

pub fn generate_role_dgp(spec: &RoleDgpSpec) -> Result<Generated, DgpError> {
    spec.validate()?;
    let n = spec.n;
    let p = spec.p();
    let blocks = [
        (CovariateRole::Instrument, spec.n_instruments, STREAM_INSTRUMENTS),
        (CovariateRole::Confounder, spec.n_confounders, STREAM_CONFOUNDERS),
        (CovariateRole::EffectModifier, spec.n_modifiers, STREAM_MODIFIERS),
        (CovariateRole::OutcomeOnly, spec.n_outcome_only, STREAM_OUTCOME_ONLY),
        (CovariateRole::Noise, spec.n_noise, STREAM_NOISE_BLOCK),
    ];
    let mut x = Array2::<f64>::zeros((n, p));
    let mut roles = Vec::with_capacity(p);
    let mut col = 0;
    for (role, count, base_stream) in blocks {
        for j in 0..count {
            let draws = normal_column(spec.seed, base_stream + j as u64, n);
            for (i, v) in draws.into_iter().enumerate() {
                x[(i, col)] = v;
            }
            roles.push(role);
            col += 1;
        }
    }

    let z_cols: Vec<usize> =
        (0..p).filter(|&j| roles[j] == CovariateRole::Instrument).collect();
    let c_cols: Vec<usize> =
        (0..p).filter(|&j| roles[j] == CovariateRole::Confounder).collect();
    let m_cols: Vec<usize> =
        (0..p).filter(|&j| roles[j] == CovariateRole::EffectModifier).collect();
    let o_cols: Vec<usize> =
        (0..p).filter(|&j| roles[j] == CovariateRole::OutcomeOnly).collect();

    // Empty blocks contribute zero to their term; with xi = 0 (the only way
    // the confounder block may be empty) the m_C term vanishes anyway.
    let block_mean = |i: usize, cols: &[usize], square: bool| -> f64 {
        if cols.is_empty() {
            return 0.0;
        }
        let s: f64 =
            cols.iter().map(|&j| if square { x[(i, j)] * x[(i, j)] } else { x[(i, j)] }).sum();
        s / cols.len() as f64
    };

    let m_c: Vec<f64> = (0..n).map(|i| block_mean(i, &c_cols, true)).collect();
    let omega = median(&m_c);
    let z: Vec<f64> = (0..n).map(|i| block_mean(i, &z_cols, false)).collect();

    let propensity: Array1<f64> = (0..n)
        .map(|i| logistic(spec.xi * (m_c[i] - omega) + spec.gamma_z * z[i]))
        .collect();
    let mu0: Array1<f64> = (0..n)
        .map(|i| c_cols.iter().chain(&o_cols).map(|&j| x[(i, j)] * x[(i, j)]).sum())
        .collect();
    let tau: Array1<f64> =
        (0..n).map(|i| m_cols.iter().map(|&j| x[(i, j)] * x[(i, j)]).sum()).collect();
    let mu1 = &mu0 + &tau;

    let noise = normal_column(spec.seed, STREAM_NOISE, n);
    let u = uniform_column(&mut stream_rng(spec.seed, STREAM_TREATMENT), n);
    let a: Vec<u8> = (0..n).map(|i| u8::from(u[i] < propensity[i])).collect();
    let y: Array1<f64> = (0..n)
        .map(|i| {
            let mu = if a[i] == 1 { mu1[i] } else { mu0[i] };
            mu + spec.sigma * noise[i]
        })
        .collect();

    let names = default_names(p);
    let dataset = Dataset::new(x, a, y, names, Some(roles))?;
    Ok(Generated { dataset, truth: GroundTruth { propensity, mu0, mu1, tau } })
}

/// Sample median; even lengths take the midpoint of the central pair.
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Treatment-probability table of the two-binary-covariate cancellation
/// design, indexed by cell (x1, x2) ∈ {(0,0), (0,1), (1,0), (1,1)}.
const CANCEL_PI: [f64; 4] = [1.0 / 3.0, 0.3, 0.1, 0.9];
/// Outcome means of the cancellation design, same cell order.
const CANCEL_M: [f64; 4] = [0.0, -1.5, -4.0 / 3.0, -7.0 / 6.0];

/// Two binary covariates whose partially adjusted biases cancel: the
/// unadjusted contrast and the fully adjusted bias are both zero, yet each
/// singleton adjustment leaves nonzero bias. Zero treatment effect.
pub fn generate_cancellation(n: usize, sigma: f64, seed: u64) -> Result<Generated, DgpError> {
    if n < 8 {
        return Err(DgpError::InvalidSpec("cancellation design needs n >= 8".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(DgpError::InvalidSpec("sigma must be finite and nonnegative".into()));
    }
    let u1 = uniform_column(&mut stream_rng(seed, STREAM_CONFOUNDERS), n);
    let u2 = uniform_column(&mut stream_rng(seed, STREAM_CONFOUNDERS + 1), n);
    let mut x = Array2::<f64>::zeros((n, 2));
    let mut cell = Vec::with_capacity(n);
    for i in 0..n {
        let x1 = u8::from(u1[i] < 0.5);
        let x2 = u8::from(u2[i] < 0.5);
        x[(i, 0)] = f64::from(x1);
        x[(i, 1)] = f64::from(x2);
        cell.push((x1 * 2 + x2) as usize);
    }
    let propensity: Array1<f64> = cell.iter().map(|&c| CANCEL_PI[c]).collect();
    let mu: Array1<f64> = cell.iter().map(|&c| CANCEL_M[c]).collect();
    let noise = normal_column(seed, STREAM_NOISE, n);
    let u = uniform_column(&mut stream_rng(seed, STREAM_TREATMENT), n);
    let a: Vec<u8> = (0..n).map(|i| u8::from(u[i] < propensity[i])).collect();
    let y: Array1<f64> = (0..n).map(|i| mu[i] + sigma * noise[i]).collect();
    let dataset = Dataset::new(x, a, y, default_names(2), None)?;
    let truth = GroundTruth {
        propensity,
        mu0: mu.clone(),
        mu1: mu.clone(),
        tau: Array1::zeros(n),
    };
    Ok(Generated { dataset, truth })
}

/// Deterministic cancellation design whose empirical frequencies equal the
/// population table exactly: `reps` blocks of 120 rows, 30 per cell, with
/// treated counts (10, 9, 3, 27) so the within-cell treated fractions are
/// exactly (1/3, 3/10, 1/10, 9/10). Noiseless (y is the cell mean), so
/// per-cell regressions reproduce the outcome table bit-for-bit.
pub fn generate_cancellation_exact(reps: usize) -> Result<Generated, DgpError> {
    if reps == 0 {
        return Err(DgpError::InvalidSpec("reps must be positive".into()));
    }
    const TREATED_PER_30: [usize; 4] = [10, 9, 3, 27];
    let n = 120 * reps;
    let mut x = Array2::<f64>::zeros((n, 2));
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut propensity = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut i = 0;
    for c in 0..4 {
        let rows = 30 * reps;
        let treated = TREATED_PER_30[c] * reps;
        for r in 0..rows {
            x[(i, 0)] = f64::from(c as u8 / 2);
            x[(i, 1)] = f64::from(c as u8 % 2);
            a.push(u8::from(r < treated));
            y.push(CANCEL_M[c]);
            propensity.push(CANCEL_PI[c]);
            mu.push(CANCEL_M[c]);
            i += 1;
        }
    }
    let dataset = Dataset::new(x, a, Array1::from_vec(y), default_names(2), None)?;
    let mu = Array1::from_vec(mu);
    let truth = GroundTruth {
        propensity: Array1::from_vec(propensity),
        mu0: mu.clone(),
        mu1: mu,
        tau: Array1::zeros(n),
    };
    Ok(Generated { dataset, truth })
}

/// Four-covariate design in which the confounder and outcome-only variable
/// share a prognostic component that cancels out of the treatment effect:
/// μ0 = 2C + O + O²/2, τ = 1 + 3M², propensity logit⁻¹(3C + Z), noise sd
/// 0.5. Roles: instrument, confounder, effect modifier, outcome-only.
pub fn generate_cancelling_confounder(n: usize, seed: u64) -> Result<Generated, DgpError> {
    if n < 2 {
        return Err(DgpError::InvalidSpec("n must be at least 2".into()));
    }
    let z = normal_column(seed, STREAM_INSTRUMENTS, n);
    let c = normal_column(seed, STREAM_CONFOUNDERS, n);
    let m = normal_column(seed, STREAM_MODIFIERS, n);
    let o = normal_column(seed, STREAM_OUTCOME_ONLY, n);
    let mut x = Array2::<f64>::zeros((n, 4));
    for i in 0..n {
        x[(i, 0)] = z[i];
        x[(i, 1)] = c[i];
        x[(i, 2)] = m[i];
        x[(i, 3)] = o[i];
    }
    let mu0: Array1<f64> = (0..n).map(|i| 2.0 * c[i] + o[i] + 0.5 * o[i] * o[i]).collect();
    let tau: Array1<f64> = (0..n).map(|i| 1.0 + 3.0 * m[i] * m[i]).collect();
    let mu1 = &mu0 + &tau;
    let propensity: Array1<f64> = (0..n).map(|i| logistic(3.0 * c[i] + z[i])).collect();
    let noise = normal_column(seed, STREAM_NOISE, n);
    let u = uniform_column(&mut stream_rng(seed, STREAM_TREATMENT), n);
    let a: Vec<u8> = (0..n).map(|i| u8::from(u[i] < propensity[i])).collect();
    let y: Array1<f64> =
        (0..n).map(|i| if a[i] == 1 { mu1[i] } else { mu0[i] } + 0.5 * noise[i]).collect();
    let roles = vec![
        CovariateRole::Instrument,
        CovariateRole::Confounder,
        CovariateRole::EffectModifier,
        CovariateRole::OutcomeOnly,
    ];
    let dataset = Dataset::new(x, a, y, default_names(4), Some(roles))?;
    Ok(Generated { dataset, truth: GroundTruth { propensity, mu0, mu1, tau } })
}

/// Latent-confounder proxy design: U drives treatment only through its noisy
/// proxy X1 and the outcome only through the noisy proxy X2, while X3 = U
/// itself enters neither mechanism. Both arms share the outcome function, so
/// the true effect is zero everywhere.
pub fn generate_proxy_confounder(
    n: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<Generated, DgpError> {
    generate_proxy_confounder_with(n, noise_sd, 2.0, 2.0, seed)
}

pub fn generate_proxy_confounder_with(
    n: usize,
    noise_sd: f64,
    treatment_coef: f64,
    outcome_slope: f64,
    seed: u64,
) -> Result<Generated, DgpError> {
    if n < 2 {
        return Err(DgpError::InvalidSpec("n must be at least 2".into()));
    }
    if !(noise_sd.is_finite() && noise_sd > 0.0) {
        return Err(DgpError::InvalidSpec("noise_sd must be positive".into()));
    }
    if !treatment_coef.is_finite() || !outcome_slope.is_finite() {
        return Err(DgpError::InvalidSpec("coefficients must be finite".into()));
    }
    let latent = normal_column(seed, STREAM_LATENT, n);
    let e1 = normal_column(seed, STREAM_INSTRUMENTS, n);
    let e2 = normal_column(seed, STREAM_OUTCOME_ONLY, n);
    let mut x = Array2::<f64>::zeros((n, 3));
    for i in 0..n {
        x[(i, 0)] = latent[i] + noise_sd * e1[i];
        x[(i, 1)] = latent[i] + noise_sd * e2[i];
        x[(i, 2)] = latent[i];
    }
    let propensity: Array1<f64> =
        (0..n).map(|i| logistic(treatment_coef * x[(i, 0)])).collect();
    let mu: Array1<f64> = (0..n).map(|i| outcome_slope * x[(i, 1)]).collect();
    let u = uniform_column(&mut stream_rng(seed, STREAM_TREATMENT), n);
    let a: Vec<u8> = (0..n).map(|i| u8::from(u[i] < propensity[i])).collect();
    let roles = vec![
        CovariateRole::Instrument,
        CovariateRole::OutcomeOnly,
        CovariateRole::Confounder,
    ];
    let dataset = Dataset::new(x, a, mu.clone(), default_names(3), Some(roles))?;
    let truth =
        GroundTruth { propensity, mu0: mu.clone(), mu1: mu, tau: Array1::zeros(n) };
    Ok(Generated { dataset, truth })
}

/// Semi-synthetic mechanism over real covariates: a designated confounder
/// block drives both a logistic treatment assignment and a linear outcome
/// with constant effect `tau`; the remaining covariates are carried along
/// untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiSynthSpec {
    pub confounder_indices: Vec<usize>,
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub tau: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl SemiSynthSpec {
    /// Published reference parameterization for a five-confounder block.
    pub fn reference(confounder_indices: Vec<usize>, seed: u64) -> Result<Self, DgpError> {
        if confounder_indices.len() != 5 {
            return Err(DgpError::InvalidSpec(
                "reference parameterization needs exactly 5 confounders".into(),
            ));
        }
        Ok(SemiSynthSpec {
            confounder_indices,
            alpha0: -0.2,
            alpha: vec![0.2, -0.8, 0.9, 0.5, -0.9],
            beta0: 0.0,
            beta: vec![0.1, -0.5, 0.5, 0.25, -0.55],
            tau: 0.45,
            sigma: 0.35,
            seed,
        })
    }

    fn validate(&self) -> Result<(), DgpError> {
        let k = self.confounder_indices.len();
        if self.alpha.len() != k || self.beta.len() != k {
            return Err(DgpError::LengthMismatch {
                indices: k,
                alpha: self.alpha.len(),
                beta: self.beta.len(),
            });
        }
        if k == 0 {
            return Err(DgpError::InvalidSpec("confounder_indices must be nonempty".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(DgpError::InvalidSpec("sigma must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

const SEMISYNTH_MAX_RESAMPLES: usize = 100;

pub fn generate_semisynth(
    covariates: &Array2<f64>,
    spec: &SemiSynthSpec,
) -> Result<Generated, DgpError> {
    spec.validate()?;
    let (n, p) = covariates.dim();
    if n < 2 {
        return Err(DgpError::InvalidSpec("need at least 2 rows of covariates".into()));
    }
    if p == 0 {
        return Err(DgpError::InvalidSpec("need at least one covariate".into()));
    }
    if covariates.iter().any(|v| !v.is_finite()) {
        return Err(DgpError::InvalidSpec("covariates must be finite".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &j in &spec.confounder_indices {
        if j >= p {
            return Err(DgpError::InvalidSpec(format!(
                "confounder index {j} out of range for {p} covariates"
            )));
        }
        if !seen.insert(j) {
            return Err(DgpError::InvalidSpec(format!("duplicate confounder index {j}")));
        }
    }

    // Continuous covariates (more than two distinct values) are standardized
    // before entering the mechanisms; the returned feature matrix is the
    // standardized one so the observed data match what generated them.
    let mut x = covariates.clone();
    for j in 0..p {
        let distinct = x
            .column(j)
            .iter()
            .map(|v| canonical_bits(*v))
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        if distinct <= 2 {
            continue;
        }
        let mean = x.column(j).sum() / n as f64;
        let var = x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        x.column_mut(j).mapv_inplace(|v| (v - mean) / sd);
    }

    let eta: Vec<f64> = (0..n)
        .map(|i| {
            spec.alpha0
                + spec
                    .confounder_indices
                    .iter()
                    .zip(&spec.alpha)
                    .map(|(&j, coef)| coef * x[(i, j)])
                    .sum::<f64>()
        })
        .collect();
    let propensity: Array1<f64> = eta.iter().map(|&v| logistic(v)).collect();
    let mu0: Array1<f64> = (0..n)
        .map(|i| {
            spec.beta0
                + spec
                    .confounder_indices
                    .iter()
                    .zip(&spec.beta)
                    .map(|(&j, coef)| coef * x[(i, j)])
                    .sum::<f64>()
        })
        .collect();
    let mu1: Array1<f64> = mu0.iter().map(|v| v + spec.tau).collect();

    // Degenerate draws are resampled from the same stream a bounded number
    // of times; persistent emptiness fails loudly.
    let mut treat_rng = stream_rng(spec.seed, STREAM_TREATMENT);
    let mut a: Option<Vec<u8>> = None;
    for _ in 0..SEMISYNTH_MAX_RESAMPLES {
        let u = uniform_column(&mut treat_rng, n);
        let draw: Vec<u8> = (0..n).map(|i| u8::from(u[i] < propensity[i])).collect();
        let treated: usize = draw.iter().map(|&v| v as usize).sum();
        if treated > 0 && treated < n {
            a = Some(draw);
            break;
        }
    }
    let Some(a) = a else {
        let arm = if propensity.iter().sum::<f64>() * 2.0 < n as f64 { 1 } else { 0 };
        return Err(DgpError::EmptyArm(arm, SEMISYNTH_MAX_RESAMPLES));
    };

    let noise = normal_column(spec.seed, STREAM_NOISE, n);
    let y: Array1<f64> = (0..n)
        .map(|i| {
            let mu = if a[i] == 1 { mu1[i] } else { mu0[i] };
            mu + spec.sigma * noise[i]
        })
        .collect();
    let roles: Vec<CovariateRole> = (0..p)
        .map(|j| {
            if spec.confounder_indices.contains(&j) {
                CovariateRole::Confounder
            } else {
                CovariateRole::Unknown
            }
        })
        .collect();
    let tau = Array1::from_elem(n, spec.tau);
    let dataset = Dataset::new(x, a, y, default_names(p), Some(roles))?;
    Ok(Generated { dataset, truth: GroundTruth { propensity, mu0, mu1, tau } })
}
