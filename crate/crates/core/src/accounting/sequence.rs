use super::gaussian::delta_for_mu;
use super::ledger::epsilon_for_mu;
use super::AccountingError;

fn check(n: u64, lambda: f64) -> Result<(), AccountingError> {
    if n == 0 {
        return Err(AccountingError::InvalidParameter(
            "sequence length must be >= 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(AccountingError::InvalidParameter(format!(
            "lambda {lambda} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Sensitivity of `n` consecutive corrected updates once decoded:
/// `sqrt(Σ_{l<n} s_l²)` with partial sums `s_l = 1 + λ + … + λ^l`.
pub fn sequence_sensitivity(n: u64, lambda: f64) -> Result<f64, AccountingError> {
    check(n, lambda)?;
    let mut partial = 0.0;
    let mut power = 1.0;
    let mut total = 0.0;
    for _ in 0..n {
        partial += power;
        power *= lambda;
        total += partial * partial;
    }
    Ok(total.sqrt())
}

/// `ε` at `delta` for an adversary holding `n` consecutive updates, each
/// drawn with per-step noise `sigma_step`.
pub fn sequence_epsilon(
    n: u64,
    lambda: f64,
    sigma_step: f64,
    delta: f64,
) -> Result<f64, AccountingError> {
    if !(sigma_step > 0.0) {
        return Err(AccountingError::InvalidParameter(
            "sigma_step must be > 0".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountingError::InvalidParameter(
            "delta must lie in (0, 1)".into(),
        ));
    }
    let mu = sequence_sensitivity(n, lambda)? / sigma_step;
    if delta_for_mu(0.0, mu) <= delta {
        return Ok(0.0);
    }
    Ok(epsilon_for_mu(delta, mu))
}
