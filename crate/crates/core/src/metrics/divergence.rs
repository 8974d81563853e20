use super::{Histogram, MetricsError};

/// Add-epsilon smoothing with `eps = 1 / (10 N)`, renormalized.
fn smoothed(h: &Histogram) -> Vec<f64> {
    let eps = 1.0 / (10.0 * h.total_count() as f64);
    let norm = 1.0 + eps * h.bin_count() as f64;
    h.masses().iter().map(|&m| (m + eps) / norm).collect()
}

/// `sum p ln(p / q)` with `p` the measured and `q` the model distribution.
///
/// Both histograms are smoothed so that empty model bins stay finite; the
/// smoothing vanishes as the sample counts grow.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64, MetricsError> {
    if !p.same_edges(q) {
        return Err(MetricsError::BinMismatch);
    }
    let ps = smoothed(p);
    let qs = smoothed(q);
    let kl: f64 = ps
        .iter()
        .zip(&qs)
        .map(|(&a, &b)| if a == b { 0.0 } else { a * (a / b).ln() })
        .sum();
    // Gibbs' inequality; only rounding can push it below zero.
    Ok(kl.max(0.0))
}

/// Mean over bins of the squared difference of cumulative masses.
pub fn mse_cdf(p: &Histogram, q: &Histogram) -> Result<f64, MetricsError> {
    if !p.same_edges(q) {
        return Err(MetricsError::BinMismatch);
    }
    let (cp, cq) = (p.cdf(), q.cdf());
    Ok(cp
        .iter()
        .zip(&cq)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / cp.len() as f64)
}
