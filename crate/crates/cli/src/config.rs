//! Run configuration: a single JSON file, optionally overridden by CLI
//! flags. The `seeds` list defines experimental replicates: each run seed
//! replaces both the generator seed and the estimator seed, so one config
//! describes a whole family of reproducible runs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use confattr::dgp::{
    generate_cancellation, generate_cancellation_exact, generate_cancelling_confounder,
    generate_proxy_confounder, generate_role_dgp, generate_semisynth, Generated, RoleDgpSpec,
    SemiSynthSpec,
};
use confattr::game::ValueMode;
use confattr::shapley::{EstimatorConfig, Method};
use confattr::regression::RegressionBackend;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Exactly one dataset source: an on-disk CSV or a synthetic generator.
    pub dataset: DatasetSource,
    #[serde(default)]
    pub backend: RegressionBackend,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub value_mode: ValueMode,
    /// k-fold cross-fitting inside coalition evaluations, off by default.
    #[serde(default)]
    pub cross_fit: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Grid settings consumed by the benchmark command only.
    #[serde(default)]
    pub benchmark: Option<BenchmarkGrid>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        #[serde(default = "default_treatment")]
        treatment: String,
        #[serde(default = "default_outcome")]
        outcome: String,
        /// Optional (name, role) sidecar CSV.
        #[serde(default)]
        roles: Option<PathBuf>,
        /// Optional semisynthetic overlay: covariates are kept, treatment
        /// and outcome are re-simulated with known ground truth.
        #[serde(default)]
        semisynth: Option<SemiSynthSpec>,
    },
    Dgp(DgpChoice),
}

fn default_treatment() -> String {
    "a".into()
}

fn default_outcome() -> String {
    "y".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpChoice {
    /// Role-block generator with preset role counts for the given p.
    RolePreset {
        p: usize,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Role-block generator with explicit role counts.
    Role {
        #[serde(flatten)]
        spec: RoleDgpSpec,
    },
    /// Two discrete covariates whose per-cell biases cancel in aggregate.
    Cancellation {
        n: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Noiseless, exactly balanced version of the cancellation table.
    CancellationExact { reps: usize },
    /// One confounder among an instrument, a modifier, and an outcome-only
    /// covariate.
    CancellingConfounder {
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Noisy proxies of a latent confounder alongside the real thing.
    ProxyConfounder {
        n: usize,
        noise_sd: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_sigma() -> f64 {
    1.0
}

impl DgpChoice {
    /// The same generator with its seed replaced by the run seed (the
    /// exactly balanced table is seedless and passes through unchanged).
    pub fn with_seed(&self, seed: u64) -> DgpChoice {
        let mut choice = self.clone();
        match &mut choice {
            DgpChoice::RolePreset { seed: s, .. }
            | DgpChoice::Cancellation { seed: s, .. }
            | DgpChoice::CancellingConfounder { seed: s, .. }
            | DgpChoice::ProxyConfounder { seed: s, .. } => *s = seed,
            DgpChoice::Role { spec } => spec.seed = seed,
            DgpChoice::CancellationExact { .. } => {}
        }
        choice
    }

    pub fn generate(&self) -> Result<Generated, CliError> {
        let generated = match self {
            DgpChoice::RolePreset { p, n, seed } => {
                generate_role_dgp(&RoleDgpSpec::preset(*p, *n, *seed)?)?
            }
            DgpChoice::Role { spec } => generate_role_dgp(spec)?,
            DgpChoice::Cancellation { n, sigma, seed } => {
                generate_cancellation(*n, *sigma, *seed)?
            }
            DgpChoice::CancellationExact { reps } => generate_cancellation_exact(*reps)?,
            DgpChoice::CancellingConfounder { n, seed } => {
                generate_cancelling_confounder(*n, *seed)?
            }
            DgpChoice::ProxyConfounder { n, noise_sd, seed } => {
                generate_proxy_confounder(*n, *noise_sd, *seed)?
            }
        };
        Ok(generated)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkGrid {
    /// Covariate counts; each uses the preset role split.
    pub dims: Vec<usize>,
    pub budgets: Vec<usize>,
    pub methods: Vec<Method>,
    /// Sample size per generated dataset.
    #[serde(default = "default_bench_n")]
    pub n: usize,
}

fn default_bench_n() -> usize {
    1000
}

/// Flag-level overrides applied on top of the JSON config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub method: Option<Method>,
    pub budget: Option<usize>,
    pub locals: bool,
    pub value_mode: Option<ValueMode>,
    pub cross_fit: Option<usize>,
}

pub fn load_config(path: &std::path::Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
    if let Some(dir) = &overrides.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seeds) = &overrides.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(method) = overrides.method {
        cfg.estimator.method = method;
    }
    if let Some(budget) = overrides.budget {
        cfg.estimator.budget = Some(budget);
    }
    if overrides.locals {
        cfg.estimator.locals = true;
    }
    if let Some(mode) = overrides.value_mode {
        cfg.value_mode = mode;
    }
    if let Some(k) = overrides.cross_fit {
        cfg.cross_fit = Some(k);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Materialized dataset for one run seed: the CSV source is fixed data
/// (optionally re-simulated through the semisynthetic overlay); generator
/// sources are regenerated with the run seed.
pub struct RunData {
    pub dataset: confattr::data::Dataset,
    pub tau_true: Option<confattr::ndarray::Array1<f64>>,
}

pub fn build_data(source: &DatasetSource, seed: u64) -> Result<RunData, CliError> {
    match source {
        DatasetSource::Csv { path, treatment, outcome, roles, semisynth } => {
            let mut dataset = confattr::data::load_csv(path, treatment, outcome)?;
            if let Some(role_path) = roles {
                let pairs = confattr::data::read_roles_csv(role_path)?;
                dataset = dataset.with_named_roles(&pairs)?;
            }
            if let Some(spec) = semisynth {
                let mut spec = spec.clone();
                spec.seed = seed;
                let generated = generate_semisynth(dataset.x(), &spec)?;
                return Ok(RunData {
                    tau_true: Some(generated.truth.tau.clone()),
                    dataset: generated.dataset,
                });
            }
            Ok(RunData { dataset, tau_true: None })
        }
        DatasetSource::Dgp(choice) => {
            let generated = choice.with_seed(seed).generate()?;
            Ok(RunData {
                tau_true: Some(generated.truth.tau.clone()),
                dataset: generated.dataset,
            })
        }
    }
}
