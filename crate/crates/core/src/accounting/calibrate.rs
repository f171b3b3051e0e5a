use super::gaussian::delta_for_mu;
use super::ledger::{CompositionLedger, GaussianEvent, HISTOGRAM_SENSITIVITY};
use super::{ledger_delta, AccountingError, EpsDelta};

/// Ledger of a session: `t` corrected steps at `sigma_step` plus `n_g`
/// histogram aggregations at raw count noise `sigma_g`.
pub fn session_ledger(
    t: u64,
    sigma_step: f64,
    lambda: f64,
    n_g: u64,
    sigma_g: f64,
) -> Result<CompositionLedger, AccountingError> {
    let mut ledger = CompositionLedger::new();
    if t > 0 {
        ledger.push(GaussianEvent::new(1.0, (1.0 - lambda) * sigma_step, t)?);
    }
    if n_g > 0 {
        ledger.push(GaussianEvent::new(HISTOGRAM_SENSITIVITY, sigma_g, n_g)?);
    }
    Ok(ledger)
}

/// Smallest per-step noise multiplier for which `t` corrected steps plus
/// `n_g` histogram rounds stay within `target`.
pub fn calibrate_sigma(
    t: u64,
    n_g: u64,
    sigma_g: f64,
    target: EpsDelta,
    lambda: f64,
) -> Result<f64, AccountingError> {
    if t == 0 {
        return Err(AccountingError::InvalidParameter(
            "need at least one step".into(),
        ));
    }
    if !(target.delta > 0.0 && target.delta < 1.0) || !(target.epsilon > 0.0) {
        return Err(AccountingError::InvalidParameter(
            "target needs epsilon > 0 and delta in (0, 1)".into(),
        ));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(AccountingError::InvalidParameter(format!(
            "lambda {lambda} outside [0, 1)"
        )));
    }
    let clip_mu2 = if n_g == 0 {
        0.0
    } else {
        if !(sigma_g > 0.0) {
            return Err(AccountingError::Infeasible {
                dominating: format!(
                    "histogram aggregation term (n_g = {n_g}, sigma_g = {sigma_g})"
                ),
            });
        }
        GaussianEvent::new(HISTOGRAM_SENSITIVITY, sigma_g, n_g)?.mu_squared()
    };
    let within = |mu: f64| delta_for_mu(target.epsilon, mu) <= target.delta;
    if !within(clip_mu2.sqrt()) || delta_for_mu(target.epsilon, clip_mu2.sqrt()) >= target.delta {
        return Err(AccountingError::Infeasible {
            dominating: format!("histogram aggregation term (n_g = {n_g}, sigma_g = {sigma_g})"),
        });
    }

    // Largest total μ that still meets the target.
    let mut lo = clip_mu2.sqrt();
    let mut hi = lo.max(1.0);
    while within(hi) {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if within(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let training_mu2 = lo * lo - clip_mu2;
    if !(training_mu2 > 0.0) {
        return Err(AccountingError::Infeasible {
            dominating: format!("histogram aggregation term (n_g = {n_g}, sigma_g = {sigma_g})"),
        });
    }
    let mut sigma_step = (t as f64 / training_mu2).sqrt() / (1.0 - lambda);
    // Rounding in the μ -> σ conversion may land a hair on the wrong side.
    for _ in 0..64 {
        let ledger = session_ledger(t, sigma_step, lambda, n_g, sigma_g)?;
        if ledger_delta(target.epsilon, &ledger)? <= target.delta {
            return Ok(sigma_step);
        }
        sigma_step *= 1.0 + 1e-14;
    }
    Ok(sigma_step)
}
