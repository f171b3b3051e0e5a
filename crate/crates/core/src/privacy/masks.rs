use super::standard_normal;
use rand::Rng;

use super::PrivacyError;
use crate::tensor::ParameterVector;

/// Per-worker masks whose sum is the admin's noise draw for the round.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub masks: Vec<ParameterVector>,
    pub realized_noise: ParameterVector,
}

impl MaskSet {
    pub fn sum(&self) -> ParameterVector {
        ParameterVector::sum(&self.masks).expect("masks share one dim")
    }
}

/// Split `effective_noise` into `n` masks.
///
/// `mask_i = (u_i - mean(u)) + effective_noise / n` with `u_i ~ N(0, blinding_std^2 I)`.
/// The zero-sum blinding term hides each worker's share while leaving the
/// total equal to `effective_noise`.
pub fn generate_masks<R: Rng + ?Sized>(
    n: usize,
    effective_noise: &ParameterVector,
    blinding_std: f64,
    rng: &mut R,
) -> Result<MaskSet, PrivacyError> {
    if n == 0 {
        return Err(PrivacyError::Config(
            "mask set needs at least one worker".into(),
        ));
    }
    if !(blinding_std >= 0.0) || !blinding_std.is_finite() {
        return Err(PrivacyError::Config(
            "blinding_std must be finite and >= 0".into(),
        ));
    }
    let dim = effective_noise.dim();
    let share = 1.0 / n as f64;
    let mut blind: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    if blinding_std == 0.0 {
                        0.0
                    } else {
                        blinding_std * standard_normal(rng)
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..dim {
        let mean = blind.iter().map(|u| u[k]).sum::<f64>() / n as f64;
        for u in &mut blind {
            u[k] -= mean;
        }
    }
    let noise = effective_noise.as_slice();
    let masks = blind
        .into_iter()
        .map(|z| {
            let m = z
                .into_iter()
                .zip(noise)
                .map(|(zk, xk)| zk + xk * share)
                .collect();
            ParameterVector::new(m)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MaskSet {
        masks,
        realized_noise: effective_noise.clone(),
    })
}
