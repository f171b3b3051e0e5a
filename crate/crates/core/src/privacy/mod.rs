//! The privacy barrier: per-example clipping, noise masks that sum to one
//! central Gaussian draw, the noisy-histogram clip-bound selection, and the
//! noise-correction recurrence together with its matrix form.

mod clip;
mod correction;
mod histogram;
mod masks;
mod matrix_mechanism;

use serde::{Deserialize, Serialize};

use crate::tensor::TensorError;

pub use clip::{clip_and_sum, clip_gradient};
pub use correction::{per_step_sigma, NoiseCorrectionState};
pub use histogram::{
    aggregate_histograms, bin_index, build_norm_histogram, log_spaced_edges, select_clip_bound,
    NormHistogram, DEFAULT_BIN_COUNT,
};
pub use masks::{generate_masks, MaskSet};
pub use matrix_mechanism::{correction_matrices, matrix_mechanism_outputs};

pub const DEFAULT_BLINDING_FACTOR: f64 = 100.0;

pub(crate) fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}

#[derive(Debug, thiserror::Error)]
pub enum PrivacyError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Noise, clipping and correction parameters for one session.
///
/// `sigma` is the effective noise multiplier of the corrected scheme; the
/// admin draws each step with [`per_step_sigma`]`(sigma, lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub sigma: f64,
    pub clip_bound: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_unclipped_fraction")]
    pub target_unclipped_fraction: f64,
    #[serde(default)]
    pub sigma_g: f64,
    /// Empty means "derive the default log-spaced edges from `clip_bound`".
    #[serde(default)]
    pub bin_edges: Vec<f64>,
    #[serde(default = "default_blinding")]
    pub blinding_factor: f64,
}

fn default_unclipped_fraction() -> f64 {
    0.75
}

fn default_blinding() -> f64 {
    DEFAULT_BLINDING_FACTOR
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        let bad = |m: &str| Err(PrivacyError::Config(m.to_string()));
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad("sigma must be finite and >= 0");
        }
        if !(self.clip_bound > 0.0) || !self.clip_bound.is_finite() {
            return bad("clip_bound must be finite and > 0");
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1)");
        }
        if !(self.target_unclipped_fraction > 0.0 && self.target_unclipped_fraction <= 1.0) {
            return bad("target_unclipped_fraction must lie in (0, 1]");
        }
        if !(self.sigma_g >= 0.0) || !self.sigma_g.is_finite() {
            return bad("sigma_g must be finite and >= 0");
        }
        if !(self.blinding_factor >= 0.0) || !self.blinding_factor.is_finite() {
            return bad("blinding_factor must be finite and >= 0");
        }
        histogram::validate_edges(&self.bin_edges_or_default())
    }

    pub fn bin_edges_or_default(&self) -> Vec<f64> {
        if self.bin_edges.is_empty() {
            log_spaced_edges(self.clip_bound, DEFAULT_BIN_COUNT)
        } else {
            self.bin_edges.clone()
        }
    }
}
