use libm::erfc;

use super::AccountingError;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Φ(x)`, accurate deep into the lower tail where `Φ` underflows.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > -35.0 {
        normal_cdf(x).ln()
    } else {
        ln_normal_cdf_tail(x)
    }
}

fn ln_normal_cdf_tail(x: f64) -> f64 {
    // Asymptotic expansion of the Mills ratio:
    // Φ(x) = φ(x)/|x| · Σ_k (-1)^k (2k-1)!! / x^(2k)
    let inv_x2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..=10 {
        term *= -((2 * k - 1) as f64) * inv_x2;
        series += term;
    }
    -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + series.ln()
}

/// Tight `δ(ε)` of a Gaussian mechanism whose noise-to-sensitivity ratio is `1/mu`.
///
/// `δ = Φ(-ε/μ + μ/2) - e^ε Φ(-ε/μ - μ/2)`, evaluated in log space so that
/// large `ε` neither overflows `e^ε` nor loses the second term.
pub fn delta_for_mu(epsilon: f64, mu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    if !mu.is_finite() {
        return 1.0;
    }
    let a = -epsilon / mu + mu / 2.0;
    let b = -epsilon / mu - mu / 2.0;
    let ln_a = ln_normal_cdf(a);
    let ln_b = ln_normal_cdf(b);
    let ratio = epsilon + ln_b - ln_a;
    let delta = ln_a.exp() * -ratio.exp_m1();
    delta.clamp(0.0, 1.0)
}

fn check_mechanism(epsilon: f64, sigma: f64, sensitivity: f64) -> Result<(), AccountingError> {
    if !(sigma > 0.0) || !(sensitivity > 0.0) || !(epsilon >= 0.0) {
        return Err(AccountingError::InvalidParameter(format!(
            "need sigma > 0, sensitivity > 0, epsilon >= 0 (got {sigma}, {sensitivity}, {epsilon})"
        )));
    }
    Ok(())
}

/// `δ(ε)` of the Gaussian mechanism with noise scale `sigma` and L2 sensitivity `sensitivity`.
pub fn gaussian_delta(epsilon: f64, sigma: f64, sensitivity: f64) -> Result<f64, AccountingError> {
    check_mechanism(epsilon, sigma, sensitivity)?;
    Ok(delta_for_mu(epsilon, sensitivity / sigma))
}

// 15-point Gauss-Kronrod rule with its embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod quadrature. Returns the estimate or the achieved
/// error bound when `abs_tol` cannot be met within the subdivision budget.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
) -> Result<f64, AccountingError> {
    const MAX_INTERVALS: usize = 4096;
    let (v, e) = kronrod15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if err <= abs_tol {
            return Ok(total);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(AccountingError::Integration {
                achieved: err,
                requested: abs_tol,
            });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// `δ(ε) = E[1 - e^(ε - Y)]_+` for the Gaussian privacy-loss variable
/// `Y ~ N(μ²/2, μ²)`, computed by direct quadrature over the density of `Y`.
pub fn plrv_delta_for_mu(epsilon: f64, mu: f64) -> Result<f64, AccountingError> {
    if !(mu >= 0.0) || !(epsilon >= 0.0) {
        return Err(AccountingError::InvalidParameter(
            "need mu >= 0, epsilon >= 0".into(),
        ));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    let mean = 0.5 * mu * mu;
    let sd = mu;
    // Substitute y = mean + sd * z; the integrand vanishes for y < ε.
    let lower = ((epsilon - mean) / sd).max(-40.0);
    let upper = lower.max(0.0) + 40.0;
    if lower >= 39.0 {
        return Ok(0.0);
    }
    let inv_sqrt_2pi = (-LN_SQRT_2PI).exp();
    let integrand = |z: f64| {
        let density = (-0.5 * z * z).exp() * inv_sqrt_2pi;
        let tilt = (epsilon - mean - sd * z - 0.5 * z * z).exp() * inv_sqrt_2pi;
        (density - tilt).max(0.0)
    };
    integrate(integrand, lower, upper, 1e-13).map(|d| d.clamp(0.0, 1.0))
}

/// Quadrature counterpart of [`gaussian_delta`].
pub fn plrv_delta_oracle(
    epsilon: f64,
    sigma: f64,
    sensitivity: f64,
) -> Result<f64, AccountingError> {
    check_mechanism(epsilon, sigma, sensitivity)?;
    plrv_delta_for_mu(epsilon, sensitivity / sigma)
}
