use super::DisentangleError;
use crate::numerics::{digamma, Rng};

/// Kozachenko-Leonenko differential entropy of 1-D samples, in nats:
/// `psi(M) - psi(k) + ln 2 + mean(ln eps_i)` with `eps_i` the distance from
/// sample `i` to its `k`-th nearest neighbor.
pub fn knn_entropy(samples: &[f64], k: usize) -> Result<f64, DisentangleError> {
    knn_entropy_seeded(samples, k, 0)
}

/// As [`knn_entropy`]; `seed` drives the jitter applied when duplicate
/// samples would give zero neighbor distances.
pub fn knn_entropy_seeded(samples: &[f64], k: usize, seed: u64) -> Result<f64, DisentangleError> {
    let m = samples.len();
    if k == 0 {
        return Err(DisentangleError::Domain("k must be at least 1".into()));
    }
    if m <= k {
        return Err(DisentangleError::InsufficientSamples { m, k });
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(DisentangleError::Domain(format!("non-finite sample {v}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut log_eps = kth_log_distances(&sorted, k);
    if log_eps.is_none() {
        let mean = sorted.iter().sum::<f64>() / m as f64;
        let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
        let scale = if sd > 0.0 { sd } else { mean.abs().max(1.0) };
        let mut rng = Rng::new(seed);
        let mut jittered: Vec<f64> = samples
            .iter()
            .map(|&v| v + 1e-10 * scale * rng.uniform_range(-1.0, 1.0))
            .collect();
        jittered.sort_by(f64::total_cmp);
        log_eps = kth_log_distances(&jittered, k);
    }
    let sum_log = log_eps.ok_or_else(|| {
        DisentangleError::Domain("samples too concentrated for the jitter to separate".into())
    })?;
    let psi_m = digamma(m as f64).expect("m > 0");
    let psi_k = digamma(k as f64).expect("k > 0");
    Ok(psi_m - psi_k + std::f64::consts::LN_2 + sum_log / m as f64)
}

/// Sum of `ln eps_i` over sorted samples, or `None` if any distance is zero.
/// The `k` nearest neighbors of a point in sorted 1-D data form a contiguous
/// window of `k + 1` points around it.
fn kth_log_distances(sorted: &[f64], k: usize) -> Option<f64> {
    let n = sorted.len();
    let mut total = 0.0;
    for i in 0..n {
        let lo_min = i.saturating_sub(k);
        let lo_max = i.min(n - 1 - k);
        let mut eps = f64::INFINITY;
        for lo in lo_min..=lo_max {
            let d = (sorted[i] - sorted[lo]).max(sorted[lo + k] - sorted[i]);
            eps = eps.min(d);
        }
        if !(eps > 0.0) {
            return None;
        }
        total += eps.ln();
    }
    Some(total)
}
