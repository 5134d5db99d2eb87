use super::NumericsError;

pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Proximal operator of `lam * |.|`.
pub fn soft_threshold(z: f64, lam: f64) -> f64 {
    debug_assert!(lam >= 0.0);
    if z > lam {
        z - lam
    } else if z < -lam {
        z + lam
    } else {
        0.0
    }
}

/// Digamma for positive arguments: shift upward until `x >= 6`, then the
/// asymptotic series in `1/x^2`.
pub fn digamma(x: f64) -> Result<f64, NumericsError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(NumericsError::Domain(format!("digamma({x})")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    // B_2n / (2n) for n = 1..=7.
    const C: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ];
    let inv2 = 1.0 / (x * x);
    let mut series = 0.0;
    for c in C.iter().rev() {
        series = series * inv2 + c;
    }
    Ok(acc + x.ln() - 0.5 / x - series * inv2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
    }

    #[test]
    fn digamma_constants() {
        assert!((digamma(1.0).unwrap() + EULER_MASCHERONI).abs() < 1e-12);
        assert!((digamma(2.0).unwrap() - (1.0 - EULER_MASCHERONI)).abs() < 1e-12);
        // psi(1/2) = -gamma - 2 ln 2
        let half = -EULER_MASCHERONI - 2.0 * std::f64::consts::LN_2;
        assert!((digamma(0.5).unwrap() - half).abs() < 1e-12);
    }

    #[test]
    fn digamma_domain() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.5).is_err());
        assert!(digamma(f64::NAN).is_err());
    }

    #[test]
    fn digamma_matches_independent_implementation() {
        // Log-spaced grid over [1e-3, 1e6].
        for i in 0..=90 {
            let x = 10f64.powf(-3.0 + 9.0 * i as f64 / 90.0);
            let ours = digamma(x).unwrap();
            let theirs = statrs::function::gamma::digamma(x);
            let tol = 1e-10 * ours.abs().max(1.0);
            assert!((ours - theirs).abs() <= tol, "x={x}: {ours} vs {theirs}");
        }
    }

    #[test]
    fn digamma_recurrence_on_grid() {
        for i in 0..=120 {
            let x = 10f64.powf(-3.0 + 9.0 * i as f64 / 120.0);
            let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            let tol = 1e-10 * (1.0 / x).max(1.0);
            assert!((lhs - 1.0 / x).abs() <= tol, "x={x}");
        }
    }

    proptest! {
        #[test]
        fn soft_threshold_identity_at_zero(z in -1e6f64..1e6) {
            prop_assert_eq!(soft_threshold(z, 0.0), z);
        }

        #[test]
        fn soft_threshold_nonexpansive(a in -100f64..100.0, b in -100f64..100.0, lam in 0f64..50.0) {
            let d = (soft_threshold(a, lam) - soft_threshold(b, lam)).abs();
            prop_assert!(d <= (a - b).abs() + 1e-12);
        }

        #[test]
        fn digamma_recurrence(x in 1e-3f64..1e3) {
            let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            prop_assert!((lhs - 1.0 / x).abs() <= 1e-10 * (1.0 / x).max(1.0));
        }
    }
}
