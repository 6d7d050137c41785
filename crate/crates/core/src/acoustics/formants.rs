//! Linear-prediction formant tracking.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Band-limited resampling by truncating or zero-extending the spectrum.
pub fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || x.is_empty() {
        return x.to_vec();
    }
    let n = x.len();
    let m = ((n as f64 * to as f64 / from as f64).round() as usize).max(1);
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut out = vec![Complex::new(0.0, 0.0); m];
    // Positive frequencies strictly below both Nyquists, then their mirrors.
    let keep = (n.min(m) - 1) / 2;
    out[0] = spec[0];
    for k in 1..=keep {
        out[k] = spec[k];
        out[m - k] = spec[n - k];
    }
    planner.plan_fft_inverse(m).process(&mut out);
    out.iter().map(|c| c.re / n as f64).collect()
}

/// Levinson-Durbin recursion. Returns a[0..=order] with a[0] = 1 for the
/// predictor polynomial A(z) = 1 + sum a_k z^-k, or None for a degenerate frame.
pub fn levinson(r: &[f64], order: usize) -> Option<Vec<f64>> {
    if r.len() <= order || !(r[0] > 0.0) {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order {
        let acc: f64 = r[i] + (1..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            return None;
        }
    }
    Some(a)
}

/// Roots of z^p + a1 z^(p-1) + ... + ap via the companion matrix.
pub fn polynomial_roots(a: &[f64]) -> Vec<Complex<f64>> {
    let p = a.len() - 1;
    if p == 0 {
        return Vec::new();
    }
    let mut c = DMatrix::zeros(p, p);
    for j in 0..p {
        c[(0, j)] = -a[j + 1] / a[0];
    }
    for i in 1..p {
        c[(i, i - 1)] = 1.0;
    }
    c.complex_eigenvalues().iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormantLimits {
    pub order: usize,
    pub max_bandwidth: f64,
    pub min_freq: f64,
    pub max_freq: f64,
}

/// Resonance frequencies of one frame, ascending. The frame is pre-emphasized
/// and Hamming-windowed before autocorrelation.
pub fn frame_formants(frame: &[f64], sample_rate: f64, lim: &FormantLimits) -> Vec<f64> {
    let n = frame.len();
    if n <= lim.order + 1 {
        return Vec::new();
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        let pre = frame[i] - if i > 0 { 0.97 * frame[i - 1] } else { 0.0 };
        let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos();
        x[i] = pre * w;
    }
    let r: Vec<f64> = (0..=lim.order)
        .map(|k| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum())
        .collect();
    let Some(a) = levinson(&r, lim.order) else {
        return Vec::new();
    };
    let mut out: Vec<f64> = polynomial_roots(&a)
        .into_iter()
        .filter(|z| z.im > 0.0)
        .filter_map(|z| {
            let f = z.arg() * sample_rate / (2.0 * PI);
            let bw = -z.norm().ln() * sample_rate / PI;
            (bw < lim.max_bandwidth && f > lim.min_freq && f < lim.max_freq).then_some(f)
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levinson_recovers_ar2() {
        // x[n] = 1.3 x[n-1] - 0.6 x[n-2] + e; exact autocorrelation via Yule-Walker.
        let (a1, a2) = (1.3, -0.6);
        let r1 = a1 / (1.0 - a2);
        let r2 = a1 * r1 + a2;
        let a = levinson(&[1.0, r1, r2], 2).unwrap();
        assert!((a[1] + a1).abs() < 1e-12 && (a[2] + a2).abs() < 1e-12);
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (z - 2)(z^2 + 1) = z^3 - 2 z^2 + z - 2
        let mut r: Vec<_> = polynomial_roots(&[1.0, -2.0, 1.0, -2.0]);
        r.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((r[0] - Complex::new(0.0, -1.0)).norm() < 1e-10);
        assert!((r[1] - Complex::new(2.0, 0.0)).norm() < 1e-10);
        assert!((r[2] - Complex::new(0.0, 1.0)).norm() < 1e-10);
    }

    #[test]
    fn resample_preserves_low_tone() {
        let x: Vec<f64> = (0..4410).map(|i| (2.0 * PI * 500.0 * i as f64 / 44100.0).sin()).collect();
        let y = resample(&x, 44100, 16000);
        assert_eq!(y.len(), 1600);
        for (i, v) in y.iter().enumerate().skip(100).take(1400) {
            let want = (2.0 * PI * 500.0 * i as f64 / 16000.0).sin();
            assert!((v - want).abs() < 1e-9, "{i}: {v} vs {want}");
        }
    }
}
