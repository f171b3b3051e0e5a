use super::standard_normal;
use rand::Rng;

use super::PrivacyError;
use crate::tensor::ParameterVector;

/// Per-step noise multiplier whose corrected scheme has effective scale `target_sigma`.
pub fn per_step_sigma(target_sigma: f64, lambda: f64) -> Result<f64, PrivacyError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(PrivacyError::Config(format!(
            "lambda {lambda} outside [0, 1)"
        )));
    }
    Ok(target_sigma / (1.0 - lambda))
}

/// The admin's private memory of the previous draw `xi_{t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCorrectionState {
    prev_noise: Option<ParameterVector>,
    lambda: f64,
    step_sigma: f64,
}

impl NoiseCorrectionState {
    pub fn new(lambda: f64, step_sigma: f64) -> Result<Self, PrivacyError> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(PrivacyError::Config(format!(
                "lambda {lambda} outside [0, 1)"
            )));
        }
        if !(step_sigma >= 0.0) || !step_sigma.is_finite() {
            return Err(PrivacyError::Config(
                "step sigma must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            prev_noise: None,
            lambda,
            step_sigma,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn step_sigma(&self) -> f64 {
        self.step_sigma
    }

    pub fn prev_noise(&self) -> Option<&ParameterVector> {
        self.prev_noise.as_ref()
    }

    /// Draw `xi_t ~ N(0, step_sigma^2 C^2 I)` and return `xi_t - lambda * xi_{t-1}`
    /// (just `xi_1` on the first call).
    pub fn next_effective_noise<R: Rng + ?Sized>(
        &mut self,
        dim: usize,
        clip_bound: f64,
        rng: &mut R,
    ) -> Result<ParameterVector, PrivacyError> {
        if dim == 0 {
            return Err(PrivacyError::Config("noise dim must be positive".into()));
        }
        if let Some(prev) = &self.prev_noise {
            if prev.dim() != dim {
                return Err(PrivacyError::Config(format!(
                    "noise dim changed from {} to {dim}",
                    prev.dim()
                )));
            }
        }
        let scale = self.step_sigma * clip_bound;
        let fresh = if scale == 0.0 {
            ParameterVector::zeros(dim)
        } else {
            ParameterVector::new((0..dim).map(|_| scale * standard_normal(rng)).collect())?
        };
        let effective = match &self.prev_noise {
            Some(prev) if self.lambda != 0.0 => ParameterVector::new(
                fresh
                    .as_slice()
                    .iter()
                    .zip(prev.as_slice())
                    .map(|(x, p)| x - self.lambda * p)
                    .collect(),
            )?,
            _ => fresh.clone(),
        };
        self.prev_noise = Some(fresh);
        Ok(effective)
    }
}
