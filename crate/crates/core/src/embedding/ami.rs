use crate::error::{Error, Result};

/// Delay is the first lag whose mutual information drops below `1/e` nats.
pub const AMI_THRESHOLD: f64 = 0.367_879_441_171_442_3;

/// Mutual information (nats) between `x_t` and `x_{t+tau}` from an
/// equal-width `bins x bins` histogram spanning the signal's range.
pub fn average_mutual_information(x: &[f64], tau: usize, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::invalid("need at least two histogram bins"));
    }
    let needed = tau + 2 * bins;
    if x.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: x.len(),
        });
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return Ok(0.0);
    }
    let scale = bins as f64 / (hi - lo);
    let bin = |v: f64| (((v - lo) * scale) as usize).min(bins - 1);
    let binned: Vec<usize> = x.iter().map(|&v| bin(v)).collect();
    Ok(mi_from_bins(&binned, tau, bins))
}

fn mi_from_bins(binned: &[usize], tau: usize, bins: usize) -> f64 {
    let pairs = binned.len() - tau;
    let mut joint = vec![0u32; bins * bins];
    let mut left = vec![0u32; bins];
    let mut right = vec![0u32; bins];
    for t in 0..pairs {
        let (a, b) = (binned[t], binned[t + tau]);
        joint[a * bins + b] += 1;
        left[a] += 1;
        right[b] += 1;
    }
    let n = pairs as f64;
    let mut mi = 0.0;
    for a in 0..bins {
        if left[a] == 0 {
            continue;
        }
        for b in 0..bins {
            let c = joint[a * bins + b];
            if c == 0 {
                continue;
            }
            let pab = c as f64 / n;
            mi += pab * (c as f64 * n / (left[a] as f64 * right[b] as f64)).ln();
        }
    }
    mi.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySelection {
    pub tau: usize,
    pub ami: f64,
    /// No lag in `1..=tau_max` crossed the threshold; `tau` is the argmin.
    pub fallback: bool,
}

/// Smallest `tau >= 1` with AMI below `1/e`; argmin over `1..=tau_max` otherwise.
pub fn select_delay(x: &[f64], tau_max: usize, bins: usize) -> Result<DelaySelection> {
    if tau_max == 0 {
        return Err(Error::invalid("tau_max must be at least 1"));
    }
    let needed = tau_max + 2 * bins;
    if x.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: x.len(),
        });
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return Ok(DelaySelection {
            tau: 1,
            ami: 0.0,
            fallback: false,
        });
    }
    let scale = bins as f64 / (hi - lo);
    let binned: Vec<usize> = x
        .iter()
        .map(|&v| (((v - lo) * scale) as usize).min(bins - 1))
        .collect();
    let mut best = DelaySelection {
        tau: 1,
        ami: f64::INFINITY,
        fallback: true,
    };
    for tau in 1..=tau_max {
        let ami = mi_from_bins(&binned, tau, bins);
        if ami < AMI_THRESHOLD {
            return Ok(DelaySelection {
                tau,
                ami,
                fallback: false,
            });
        }
        if ami < best.ami {
            best.tau = tau;
            best.ami = ami;
        }
    }
    log::debug!("no delay below 1/e up to {tau_max}; using argmin {}", best.tau);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn threshold_is_inverse_e() {
        assert!((AMI_THRESHOLD - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn iid_noise_has_small_ami() {
        let x = noise(100_000, 1);
        for tau in [1, 5, 40] {
            let ami = average_mutual_information(&x, tau, 64).unwrap();
            assert!(ami < 0.05, "tau {tau}: {ami}");
        }
        let sel = select_delay(&x, 100, 64).unwrap();
        assert_eq!(sel.tau, 1);
        assert!(!sel.fallback);
    }

    #[test]
    fn periodic_signal_at_its_period_gives_entropy() {
        let period = 50;
        let x: Vec<f64> = (0..10_000)
            .map(|i| (2.0 * std::f64::consts::PI * (i % period) as f64 / period as f64).sin())
            .collect();
        let ami = average_mutual_information(&x, period, 16).unwrap();
        // Histogram entropy of the first len - period samples, same binning.
        let (lo, hi) = (-1.0f64, 1.0f64);
        let mut counts = [0usize; 16];
        let lo_obs = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi_obs = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo_obs - lo).abs() < 1e-2 && (hi_obs - hi).abs() < 1e-2);
        for &v in &x[..x.len() - period] {
            let b = (((v - lo_obs) * 16.0 / (hi_obs - lo_obs)) as usize).min(15);
            counts[b] += 1;
        }
        let n = (x.len() - period) as f64;
        let h: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| -(c as f64 / n) * (c as f64 / n).ln())
            .sum();
        assert!((ami - h).abs() < 1e-10, "{ami} vs {h}");
    }

    #[test]
    fn constant_signal_is_zero() {
        assert_eq!(average_mutual_information(&[0.25; 500], 3, 8).unwrap(), 0.0);
    }

    #[test]
    fn slow_sine_falls_back() {
        let x: Vec<f64> = (0..20_000).map(|i| (i as f64 * 1e-4).sin()).collect();
        let sel = select_delay(&x, 20, 64).unwrap();
        assert!(sel.fallback);
        assert_eq!(sel.tau, 20);
    }

    proptest::proptest! {
        #[test]
        fn ami_is_nonnegative(seed in 0u64..200, tau in 1usize..10) {
            let x = noise(400, seed);
            proptest::prop_assert!(average_mutual_information(&x, tau, 8).unwrap() >= 0.0);
        }

        #[test]
        fn selected_delay_is_the_first_crossing(seed in 0u64..50, period in 8usize..60) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..4000)
                .map(|i| (i as f64 * 2.0 * std::f64::consts::PI / period as f64).sin()
                    + 0.1 * rng.random_range(-1.0..1.0))
                .collect();
            let sel = select_delay(&x, 80, 16).unwrap();
            if !sel.fallback {
                for t in 1..sel.tau {
                    proptest::prop_assert!(average_mutual_information(&x, t, 16).unwrap() >= AMI_THRESHOLD);
                }
                proptest::prop_assert!(sel.ami < AMI_THRESHOLD);
            }
        }
    }
}
