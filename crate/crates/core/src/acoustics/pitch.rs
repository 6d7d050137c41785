//! YIN-style periodicity analysis, harmonicity at the pitch lag, and the
//! modulation rate of the F0 contour.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

const ABSOLUTE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodEstimate {
    /// Fractional lag in samples.
    pub lag: f64,
    /// 1 - d'(lag), clamped to [0, 1].
    pub confidence: f64,
}

/// Cumulative-mean-normalized difference function d'(tau) for tau in
/// `0..=tau_max`, with d'(0) = 1.
pub fn cmnd(frame: &[f64], tau_max: usize) -> Vec<f64> {
    let w = frame.len() - tau_max;
    let mut d = vec![1.0; tau_max + 1];
    let mut running = 0.0;
    for tau in 1..=tau_max {
        let diff: f64 = frame[..w]
            .iter()
            .zip(&frame[tau..tau + w])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        running += diff;
        d[tau] = if running > 0.0 { diff * tau as f64 / running } else { 1.0 };
    }
    d
}

/// Picks the first dip under the absolute threshold (followed down to its
/// local minimum), else the global minimum in `tau_min..=tau_max`.
pub fn yin(frame: &[f64], tau_min: usize, tau_max: usize) -> Option<PeriodEstimate> {
    if tau_min < 2 || tau_max <= tau_min || frame.len() <= tau_max + 1 {
        return None;
    }
    let d = cmnd(frame, tau_max);
    let mut best = None;
    let mut tau = tau_min;
    while tau <= tau_max {
        if d[tau] < ABSOLUTE_THRESHOLD {
            while tau < tau_max && d[tau + 1] < d[tau] {
                tau += 1;
            }
            best = Some(tau);
            break;
        }
        tau += 1;
    }
    let tau = best.unwrap_or_else(|| (tau_min..=tau_max).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap());
    let (lag, value) = if tau > 1 && tau < tau_max {
        parabolic_min(d[tau - 1], d[tau], d[tau + 1], tau as f64)
    } else {
        (tau as f64, d[tau])
    };
    Some(PeriodEstimate {
        lag,
        confidence: (1.0 - value).clamp(0.0, 1.0),
    })
}

/// Vertex of the parabola through (x-1, a), (x, b), (x+1, c); falls back to
/// the centre point when the three are collinear or the vertex is a maximum.
fn parabolic_min(a: f64, b: f64, c: f64, x: f64) -> (f64, f64) {
    let den = a - 2.0 * b + c;
    if den <= 0.0 {
        return (x, b);
    }
    let off = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
    (x + off, b - 0.25 * (a - c) * off)
}

fn normalized_autocorrelation(frame: &[f64], lag: usize) -> f64 {
    let n = frame.len() - lag;
    let (a, b) = (&frame[..n], &frame[lag..]);
    let num: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let ea: f64 = a.iter().map(|x| x * x).sum();
    let eb: f64 = b.iter().map(|x| x * x).sum();
    let den = (ea * eb).sqrt();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Harmonics-to-noise ratio 10 log10(r / (1 - r)) from the normalized
/// autocorrelation peak near `lag`, interpolated and clipped to (0, 1).
pub fn harmonicity_db(frame: &[f64], lag: f64) -> f64 {
    let t = lag.round() as usize;
    let r = if t >= 2 && t + 1 < frame.len() {
        let (a, b, c) = (
            normalized_autocorrelation(frame, t - 1),
            normalized_autocorrelation(frame, t),
            normalized_autocorrelation(frame, t + 1),
        );
        let (_, v) = parabolic_min(-a, -b, -c, t as f64);
        -v
    } else {
        0.0
    };
    let r = r.clamp(1e-6, 1.0 - 1e-6);
    10.0 * (r / (1.0 - r)).log10()
}

/// Dominant modulation frequency of an F0 contour sampled at `rate` Hz.
/// Gaps (None) inside the voiced span are linearly interpolated; the span is
/// detrended and Hann-windowed before a zero-padded FFT. Returns None when
/// fewer than `min_points` frames are voiced or the detrended contour is flat.
pub fn modulation_rate(contour: &[Option<f64>], rate: f64, band: (f64, f64), min_points: usize) -> Option<f64> {
    let first = contour.iter().position(Option::is_some)?;
    let last = contour.iter().rposition(Option::is_some)?;
    if contour.iter().filter(|c| c.is_some()).count() < min_points.max(4) {
        return None;
    }
    let span = &contour[first..=last];
    let mut y = vec![0.0; span.len()];
    let mut prev = 0usize;
    y[0] = span[0].unwrap();
    for i in 1..span.len() {
        if let Some(v) = span[i] {
            y[i] = v;
            let gap = i - prev;
            for k in prev + 1..i {
                let t = (k - prev) as f64 / gap as f64;
                y[k] = y[prev] + t * (v - y[prev]);
            }
            prev = i;
        }
    }
    detrend(&mut y);
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
    if !(rms > 1e-3) {
        return None;
    }
    let n = y.len();
    let size = (n * 8).next_power_of_two().max(4096);
    let mut buf: Vec<Complex<f64>> = (0..size)
        .map(|i| {
            if i < n {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos();
                Complex::new(y[i] * w, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    let df = rate / size as f64;
    let lo = (band.0 / df).ceil().max(1.0) as usize;
    let hi = ((band.1 / df).floor() as usize).min(size / 2 - 1);
    if hi <= lo {
        return None;
    }
    let mag: Vec<f64> = buf[..=size / 2].iter().map(|c| c.norm()).collect();
    let k = (lo..=hi).max_by(|&a, &b| mag[a].total_cmp(&mag[b]))?;
    let (peak, _) = parabolic_min(-mag[k - 1], -mag[k], -mag[k + 1], k as f64);
    Some(peak * df)
}

/// Removes the least-squares line.
fn detrend(y: &mut [f64]) {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    for (i, v) in y.iter_mut().enumerate() {
        *v -= my + slope * (i as f64 - mx);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sine(f: f64, sr: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / sr).sin()).collect()
    }

    #[test]
    fn cmnd_of_periodic_signal_vanishes_at_period() {
        // Period of exactly 50 samples.
        let x = sine(882.0, 44100.0, 1000);
        let d = cmnd(&x, 200);
        assert!(d[50] < 1e-12 && d[100] < 1e-12);
        assert!(d[25] > 1.0);
    }

    #[test]
    fn yin_finds_fractional_period() {
        let x = sine(440.0, 44100.0, 1764);
        let est = yin(&x, 44, 441).unwrap();
        assert!((44100.0 / est.lag - 440.0).abs() < 0.5, "{}", 44100.0 / est.lag);
        assert!(est.confidence > 0.99);
    }

    #[test]
    fn noise_has_low_confidence() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1764).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(yin(&x, 44, 441).unwrap().confidence < 0.5);
        assert!(harmonicity_db(&x, 100.0) < 0.0);
    }

    #[test]
    fn sine_harmonicity_is_high() {
        let x = sine(440.0, 44100.0, 1764);
        assert!(harmonicity_db(&x, 44100.0 / 440.0) > 40.0);
    }

    #[test]
    fn detrend_removes_line() {
        let mut y: Vec<f64> = (0..10).map(|i| 3.0 + 0.5 * i as f64).collect();
        detrend(&mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn modulation_of_sampled_vibrato() {
        let c: Vec<Option<f64>> = (0..200)
            .map(|i| Some(300.0 + 30.0 * (2.0 * PI * 6.0 * i as f64 / 100.0).sin() + 0.2 * i as f64))
            .collect();
        let f = modulation_rate(&c, 100.0, (0.5, 20.0), 10).unwrap();
        assert!((f - 6.0).abs() < 0.1, "{f}");
        let flat = vec![Some(440.0); 50];
        assert_eq!(modulation_rate(&flat, 100.0, (0.5, 20.0), 10), None);
        assert_eq!(modulation_rate(&[None, Some(1.0)], 100.0, (0.5, 20.0), 10), None);
    }
}
