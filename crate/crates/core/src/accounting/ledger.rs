use serde::{Deserialize, Serialize};

use super::gaussian::delta_for_mu;
use super::{AccountingError, Budget};

/// L2 sensitivity of a count histogram under replacement of one example.
pub const HISTOGRAM_SENSITIVITY: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianEvent {
    pub sensitivity: f64,
    pub sigma: f64,
    pub count: u64,
}

impl GaussianEvent {
    pub fn new(sensitivity: f64, sigma: f64, count: u64) -> Result<Self, AccountingError> {
        if !(sensitivity > 0.0 && sensitivity.is_finite())
            || !(sigma > 0.0 && sigma.is_finite())
            || count == 0
        {
            return Err(AccountingError::InvalidParameter(format!(
                "event needs sensitivity > 0, sigma > 0, count >= 1 (got {sensitivity}, {sigma}, {count})"
            )));
        }
        Ok(Self {
            sensitivity,
            sigma,
            count,
        })
    }

    pub fn mu_squared(&self) -> f64 {
        let ratio = self.sensitivity / self.sigma;
        self.count as f64 * ratio * ratio
    }
}

/// Append-only record of the Gaussian mechanisms released so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositionLedger {
    events: Vec<GaussianEvent>,
}

impl CompositionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: GaussianEvent) {
        self.events.push(event);
    }

    /// Add `event` to an existing entry with the same sensitivity and noise, or
    /// append it. Repeated releases then compose with a single multiplication,
    /// exactly as a precomputed `count`-fold event would.
    pub fn merge(&mut self, event: GaussianEvent) {
        match self
            .events
            .iter_mut()
            .find(|e| e.sensitivity == event.sensitivity && e.sigma == event.sigma)
        {
            Some(e) => e.count += event.count,
            None => self.events.push(event),
        }
    }

    pub fn merged_with(&self, extra: &[GaussianEvent]) -> Self {
        let mut next = self.clone();
        for e in extra {
            next.merge(*e);
        }
        next
    }

    pub fn events(&self) -> &[GaussianEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Neumaier-compensated sum of every event's `count · (Δ/σ)²`.
    pub fn mu_squared(&self) -> f64 {
        let (mut sum, mut carry) = (0.0f64, 0.0f64);
        for term in self.events.iter().map(GaussianEvent::mu_squared) {
            let next = sum + term;
            carry += if sum.abs() >= term.abs() {
                (sum - next) + term
            } else {
                (term - next) + sum
            };
            sum = next;
        }
        sum + carry
    }

    /// The ledger with `extra` appended, leaving `self` untouched.
    pub fn with(&self, extra: &[GaussianEvent]) -> Self {
        let mut next = self.clone();
        next.events.extend_from_slice(extra);
        next
    }
}

impl FromIterator<GaussianEvent> for CompositionLedger {
    fn from_iter<I: IntoIterator<Item = GaussianEvent>>(iter: I) -> Self {
        Self {
            events: iter.into_iter().collect(),
        }
    }
}


/// `μ = sqrt(Σ count · (Δ/σ)²)`; zero for an empty ledger.
pub fn effective_mu(ledger: &CompositionLedger) -> f64 {
    ledger.mu_squared().sqrt()
}

pub fn ledger_delta(epsilon: f64, ledger: &CompositionLedger) -> Result<f64, AccountingError> {
    if !(epsilon >= 0.0) {
        return Err(AccountingError::InvalidParameter(
            "epsilon must be >= 0".into(),
        ));
    }
    Ok(delta_for_mu(epsilon, effective_mu(ledger)))
}

const EPSILON_BRACKET: f64 = 1e6;
const BISECTION_STEPS: usize = 200;

/// Smallest `ε` with `δ(ε) <= delta` for the single Gaussian of ratio `mu`.
pub fn epsilon_for_mu(delta: f64, mu: f64) -> f64 {
    if delta_for_mu(0.0, mu) <= delta {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, EPSILON_BRACKET);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delta_for_mu(mid, mu) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `ε` spent at the budget's `δ`, and whether it overshoots the budget's `ε`.
pub fn budget_spent(ledger: &CompositionLedger, budget: &Budget) -> (f64, bool) {
    let target = budget.target();
    let mu = effective_mu(ledger);
    let exhausted = delta_for_mu(target.epsilon, mu) > target.delta;
    let epsilon = epsilon_for_mu(target.delta, mu);
    // The bisection answer can sit an ulp above an exactly spent budget.
    let epsilon = if exhausted {
        epsilon.max(target.epsilon)
    } else {
        epsilon.min(target.epsilon)
    };
    (epsilon, exhausted)
}

/// Final-model bound after `t` corrected steps: `t` Gaussians of unit
/// sensitivity at the effective scale `(1 - λ) · sigma_step`.
pub fn corrected_training_bound(
    t: u64,
    sigma_step: f64,
    lambda: f64,
    epsilon: f64,
) -> Result<f64, AccountingError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(AccountingError::InvalidParameter(format!(
            "lambda {lambda} outside [0, 1)"
        )));
    }
    let ledger: CompositionLedger =
        std::iter::once(GaussianEvent::new(1.0, (1.0 - lambda) * sigma_step, t)?).collect();
    ledger_delta(epsilon, &ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::gaussian_delta;

    fn ev(d: f64, s: f64, c: u64) -> GaussianEvent {
        GaussianEvent::new(d, s, c).unwrap()
    }

    #[test]
    fn mu_examples() {
        let one: CompositionLedger = [ev(1.0, 2.0, 1)].into_iter().collect();
        assert_eq!(effective_mu(&one), 0.5);
        let mixed: CompositionLedger = [ev(1.0, 1.0, 4), ev(2f64.sqrt(), 10.0, 2)]
            .into_iter()
            .collect();
        assert!((effective_mu(&mixed) - 4.04f64.sqrt()).abs() < 1e-15);
        assert_eq!(effective_mu(&CompositionLedger::new()), 0.0);
    }

    #[test]
    fn repeated_events_equal_scaled_sensitivity() {
        let repeated: CompositionLedger = [ev(1.0, 1.0, 9)].into_iter().collect();
        let single: CompositionLedger = [ev(3.0, 1.0, 1)].into_iter().collect();
        assert_eq!(effective_mu(&repeated), effective_mu(&single));
    }

    #[test]
    fn empty_ledger_has_no_loss() {
        let empty = CompositionLedger::new();
        assert_eq!(ledger_delta(0.5, &empty).unwrap(), 0.0);
        let b = Budget::new(1.0, 1e-5).unwrap();
        assert_eq!(budget_spent(&empty, &b), (0.0, false));
    }

    #[test]
    fn composed_closed_form() {
        // T Gaussians of (1, σ) give Φ(-εσ/√T + √T/2σ) - e^ε Φ(-εσ/√T - √T/2σ).
        let (t, sigma, eps) = (50u64, 4.0, 1.5);
        let ledger: CompositionLedger = [ev(1.0, sigma, t)].into_iter().collect();
        let st = (t as f64).sqrt();
        let a = -eps * sigma / st + st / (2.0 * sigma);
        let b = -eps * sigma / st - st / (2.0 * sigma);
        let closed =
            crate::accounting::normal_cdf(a) - eps.exp() * crate::accounting::normal_cdf(b);
        assert!((ledger_delta(eps, &ledger).unwrap() - closed).abs() < 1e-14);
    }

    #[test]
    fn epsilon_inverse() {
        let mu = 0.8;
        let eps = epsilon_for_mu(1e-5, mu);
        let d = crate::accounting::delta_for_mu(eps, mu);
        assert!(d <= 1e-5 && d > 1e-5 * (1.0 - 1e-9));
        assert_eq!(epsilon_for_mu(0.99, mu), 0.0);
    }

    #[test]
    fn corrected_bound_reduces_to_plain_at_zero_lambda() {
        let plain = gaussian_delta(2.0, 30.0, 1000f64.sqrt()).unwrap();
        let corrected = corrected_training_bound(1000, 30.0, 0.0, 2.0).unwrap();
        assert!((plain - corrected).abs() <= 1e-15);
        assert!(corrected_training_bound(10, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn corrected_bound_decreases_with_step_sigma() {
        let mut prev = 1.0;
        for s in [10.0, 20.0, 40.0, 80.0] {
            let d = corrected_training_bound(1000, s, 0.7, 4.0).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn event_validation() {
        assert!(GaussianEvent::new(0.0, 1.0, 1).is_err());
        assert!(GaussianEvent::new(1.0, 0.0, 1).is_err());
        assert!(GaussianEvent::new(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn budget_validation() {
        assert!(Budget::new(1.0, 0.0).is_err());
        assert!(Budget::new(1.0, 1.0).is_err());
        assert!(Budget::new(0.0, 1e-5).is_err());
        let b: Budget = serde_json::from_str(r#"{"epsilon": 8.0, "delta": 1e-5}"#).unwrap();
        assert_eq!(b.target().epsilon, 8.0);
        assert!(serde_json::from_str::<Budget>(r#"{"epsilon": 8.0, "delta": 2.0}"#).is_err());
    }
}
