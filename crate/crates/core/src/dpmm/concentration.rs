//! Calibration of the DP concentration from a target cluster count.

use crate::error::{Error, Result};

/// Prior expected number of clusters among `n` items: sum of a/(a+i-1).
pub fn expected_clusters(n: usize, alpha: f64) -> f64 {
    (0..n).map(|i| alpha / (alpha + i as f64)).sum()
}

/// Concentration whose prior expected cluster count is `k_target`.
///
/// `n == 1` has E[K] = 1 for every alpha; it returns 1 with a warning.
pub fn solve_alpha(n: usize, k_target: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("cannot calibrate alpha for an empty corpus"));
    }
    if n == 1 {
        log::warn!("single item: E[K] = 1 for any alpha, using alpha = 1");
        return Ok(1.0);
    }
    if !(k_target > 1.0 && k_target < n as f64) {
        return Err(Error::invalid(format!(
            "target cluster count {k_target} must lie strictly between 1 and n = {n}"
        )));
    }
    let f = |a: f64| expected_clusters(n, a) - k_target;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() < 1e-12 {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Newton on the exact sum; derivative is sum of i/(a+i)^2.
    fn newton(n: usize, k: f64) -> f64 {
        let mut a = 1.0f64;
        for _ in 0..100 {
            let g: f64 = (0..n).map(|i| a / (a + i as f64)).sum::<f64>() - k;
            let dg: f64 = (0..n).map(|i| i as f64 / (a + i as f64).powi(2)).sum();
            a = (a - g / dg).max(a / 10.0);
        }
        a
    }

    #[test]
    fn three_items_at_unit_alpha() {
        assert!((expected_clusters(3, 1.0) - 11.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn matches_newton_oracle() {
        for (n, k) in [(1851, 5.0), (100, 3.0), (20, 19.5), (2, 1.5)] {
            let a = solve_alpha(n, k).unwrap();
            assert!((expected_clusters(n, a) - k).abs() < 1e-8);
            assert!((a - newton(n, k)).abs() < 1e-7 * a.max(1.0), "n={n} k={k}");
        }
        let a = solve_alpha(1851, 5.0).unwrap();
        assert!((a - 0.53668).abs() < 1e-4, "{a}");
    }

    #[test]
    fn guards() {
        assert_eq!(solve_alpha(1, 1.0).unwrap(), 1.0);
        assert!(solve_alpha(10, 10.0).is_err());
        assert!(solve_alpha(10, 1.0).is_err());
        assert!(solve_alpha(0, 1.0).is_err());
    }
}
