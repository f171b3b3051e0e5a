use super::standard_normal;
use rand::Rng;

use super::PrivacyError;
use crate::tensor::PerExampleGrads;

pub const DEFAULT_BIN_COUNT: usize = 64;

/// Counts of gradient norms per bin. Bin `i` covers `(B_{i-1}, B_i]` with
/// `B_{-1} = 0`; norms beyond the last edge are counted in the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct NormHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<f64>,
    pub total: usize,
}

impl NormHistogram {
    pub fn num_bins(&self) -> usize {
        self.bin_edges.len()
    }
}

pub(crate) fn validate_edges(edges: &[f64]) -> Result<(), PrivacyError> {
    if edges.is_empty() {
        return Err(PrivacyError::Config(
            "at least one bin edge required".into(),
        ));
    }
    if !(edges[0] > 0.0) || edges.iter().any(|e| !e.is_finite()) {
        return Err(PrivacyError::Config(
            "bin edges must be finite and positive".into(),
        ));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PrivacyError::Config(
            "bin edges must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `count` edges spaced geometrically over `[clip_bound / 100, 10 * clip_bound]`.
pub fn log_spaced_edges(clip_bound: f64, count: usize) -> Vec<f64> {
    let (lo, hi) = (clip_bound / 100.0, clip_bound * 10.0);
    if count == 1 {
        return vec![hi];
    }
    let ratio = (hi / lo).ln();
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo * (ratio * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Index of the bin holding `norm`.
pub fn bin_index(bin_edges: &[f64], norm: f64) -> usize {
    bin_edges
        .partition_point(|&e| e < norm)
        .min(bin_edges.len() - 1)
}

pub fn build_norm_histogram(
    grads: &PerExampleGrads,
    bin_edges: &[f64],
) -> Result<NormHistogram, PrivacyError> {
    validate_edges(bin_edges)?;
    let mut counts = vec![0.0; bin_edges.len()];
    for norm in grads.norms() {
        counts[bin_index(bin_edges, norm)] += 1.0;
    }
    Ok(NormHistogram {
        bin_edges: bin_edges.to_vec(),
        counts,
        total: grads.len(),
    })
}

/// Elementwise sum of the workers' histograms plus `N(0, sigma_g^2)` on every bin.
pub fn aggregate_histograms<R: Rng + ?Sized>(
    hists: &[NormHistogram],
    sigma_g: f64,
    rng: &mut R,
) -> Result<NormHistogram, PrivacyError> {
    let first = hists
        .first()
        .ok_or_else(|| PrivacyError::Protocol("no histograms to aggregate".into()))?;
    if !(sigma_g >= 0.0) || !sigma_g.is_finite() {
        return Err(PrivacyError::Config(
            "sigma_g must be finite and >= 0".into(),
        ));
    }
    let mut counts = vec![0.0; first.num_bins()];
    let mut total = 0;
    for h in hists {
        if h.bin_edges != first.bin_edges || h.counts.len() != counts.len() {
            return Err(PrivacyError::Protocol(
                "histograms use different bin edges".into(),
            ));
        }
        for (c, v) in counts.iter_mut().zip(&h.counts) {
            *c += v;
        }
        total += h.total;
    }
    if sigma_g > 0.0 {
        for c in &mut counts {
            *c += sigma_g * standard_normal(rng);
        }
    }
    Ok(NormHistogram {
        bin_edges: first.bin_edges.clone(),
        counts,
        total,
    })
}

/// Upper edge of the first bin at which the cumulative (clamped) mass reaches
/// fraction `r`. An all-zero histogram yields the largest edge.
pub fn select_clip_bound(noisy: &NormHistogram, r: f64) -> f64 {
    debug_assert!(r > 0.0 && r <= 1.0);
    let clamped: Vec<f64> = noisy.counts.iter().map(|c| c.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let last = *noisy.bin_edges.last().expect("validated edges");
    if total <= 0.0 {
        return last;
    }
    let threshold = r * total;
    let mut cumulative = 0.0;
    for (count, edge) in clamped.iter().zip(&noisy.bin_edges) {
        cumulative += count;
        if cumulative >= threshold {
            return *edge;
        }
    }
    last
}
