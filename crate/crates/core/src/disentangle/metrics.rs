use super::DisentangleError;

/// Coefficient of determination `1 - SS_res / SS_tot`; negative for
/// predictors worse than the mean.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64, DisentangleError> {
    if y_true.len() != y_pred.len() {
        return Err(DisentangleError::Shape(format!(
            "{} targets, {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 2 {
        return Err(DisentangleError::InsufficientSamples {
            m: y_true.len(),
            k: 1,
        });
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(DisentangleError::DegenerateTarget);
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// `1 - H(rho) / ln P` where `rho` is the importance column normalized to
/// sum one. An all-zero column scores 0.
pub fn completeness(importance: &[f64]) -> Result<f64, DisentangleError> {
    let p = importance.len();
    if p < 2 {
        return Err(DisentangleError::Domain(format!(
            "completeness needs at least two dimensions, got {p}"
        )));
    }
    if let Some(v) = importance.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(DisentangleError::Domain(format!("importance {v} is not a nonnegative number")));
    }
    let total: f64 = importance.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let h: f64 = importance
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| {
            let rho = r / total;
            -rho * rho.ln()
        })
        .sum();
    Ok((1.0 - h / (p as f64).ln()).clamp(0.0, 1.0))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or fewer than two pairs are given.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}
