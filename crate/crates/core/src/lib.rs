//! Attributes observed confounding strength to individual covariates.
//!
//! The pipeline: fit observational contrasts under every covariate coalition
//! (or a sampled subset), turn residual confounding bias into a cooperative
//! game over covariates, and decompose it with exact or budgeted Shapley
//! estimators. Synthetic generators with known ground truth, exact-rational
//! population oracles, and ranking metrics round out the toolkit.

pub use ndarray;

pub mod data;
pub mod dgp;
pub mod game;
pub mod metrics;
pub mod oracle;
pub mod regression;
pub mod shapley;
