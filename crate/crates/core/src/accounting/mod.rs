//! Tight `(ε, δ)` accounting for compositions of Gaussian mechanisms.
//!
//! Every event handled here is a plain Gaussian mechanism, so a whole
//! ledger collapses to one Gaussian with noise-to-sensitivity ratio `1/μ`,
//! `μ² = Σ count · (Δ/σ)²`.

mod calibrate;
mod gaussian;
mod ledger;
mod sequence;

use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate_sigma, session_ledger};
pub use gaussian::{
    delta_for_mu, gaussian_delta, integrate, ln_normal_cdf, normal_cdf, plrv_delta_for_mu,
    plrv_delta_oracle,
};
pub use ledger::{
    budget_spent, corrected_training_bound, effective_mu, epsilon_for_mu, ledger_delta,
    CompositionLedger, GaussianEvent, HISTOGRAM_SENSITIVITY,
};
pub use sequence::{sequence_epsilon, sequence_sensitivity};

#[derive(Debug, thiserror::Error)]
pub enum AccountingError {
    #[error("invalid accounting parameter: {0}")]
    InvalidParameter(String),
    #[error("privacy budget infeasible: {dominating} alone exceeds it")]
    Infeasible { dominating: String },
    #[error(
        "numerical integration did not converge: achieved {achieved:e}, requested {requested:e}"
    )]
    Integration { achieved: f64, requested: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsDelta {
    pub epsilon: f64,
    pub delta: f64,
}

/// Target guarantee for a training session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EpsDelta", into = "EpsDelta")]
pub struct Budget {
    target: EpsDelta,
}

impl Budget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, AccountingError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AccountingError::InvalidParameter(format!(
                "budget delta {delta} must lie in (0, 1)"
            )));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(AccountingError::InvalidParameter(format!(
                "budget epsilon {epsilon} must be finite and positive"
            )));
        }
        Ok(Self {
            target: EpsDelta { epsilon, delta },
        })
    }

    pub fn target(&self) -> EpsDelta {
        self.target
    }
}

impl TryFrom<EpsDelta> for Budget {
    type Error = AccountingError;

    fn try_from(v: EpsDelta) -> Result<Self, Self::Error> {
        Budget::new(v.epsilon, v.delta)
    }
}

impl From<Budget> for EpsDelta {
    fn from(b: Budget) -> Self {
        b.target
    }
}
