//! Short-time spectra: the power spectrogram surface and framewise-mean MFCCs.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corpus::AudioClip;
use crate::error::{Error, Result};

/// Floor applied to mel filter energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub spec_window_seconds: f64,
    pub spec_overlap_fraction: f64,
    /// Gaussian window standard deviation as a fraction of the window length.
    pub gaussian_sigma_fraction: f64,
    /// Store the spectrogram in decibels instead of linear power.
    pub spec_db: bool,
    pub mfcc_window_seconds: f64,
    pub mfcc_overlap_fraction: f64,
    pub n_mfcc: usize,
    pub n_mel_filters: usize,
    pub fmin: f64,
    /// Upper mel band edge; `None` means Nyquist.
    pub fmax: Option<f64>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            spec_window_seconds: 0.0116,
            spec_overlap_fraction: 0.90,
            gaussian_sigma_fraction: 1.0 / 6.0,
            spec_db: false,
            mfcc_window_seconds: 0.025,
            mfcc_overlap_fraction: 0.40,
            n_mfcc: 12,
            n_mel_filters: 26,
            fmin: 0.0,
            fmax: None,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("spec_overlap_fraction", self.spec_overlap_fraction),
            ("mfcc_overlap_fraction", self.mfcc_overlap_fraction),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.n_mfcc == 0 || self.n_mfcc >= self.n_mel_filters {
            // c0 is dropped, so coefficients 1..=n_mfcc must exist.
            return Err(Error::invalid(format!(
                "n_mfcc ({}) must be in 1..n_mel_filters ({})",
                self.n_mfcc, self.n_mel_filters
            )));
        }
        if self.gaussian_sigma_fraction <= 0.0 {
            return Err(Error::invalid("gaussian_sigma_fraction must be positive"));
        }
        Ok(())
    }

    pub fn spec_window_len(&self, sample_rate: u32) -> usize {
        (self.spec_window_seconds * sample_rate as f64).round() as usize
    }

    pub fn spec_hop(&self, sample_rate: u32) -> usize {
        hop_for(self.spec_window_len(sample_rate), self.spec_overlap_fraction)
    }

    pub fn mfcc_window_len(&self, sample_rate: u32) -> usize {
        (self.mfcc_window_seconds * sample_rate as f64).round() as usize
    }

    pub fn mfcc_hop(&self, sample_rate: u32) -> usize {
        hop_for(self.mfcc_window_len(sample_rate), self.mfcc_overlap_fraction)
    }
}

fn hop_for(window: usize, overlap: f64) -> usize {
    // Small epsilon so that e.g. 0.6 * 1000 does not floor to 599.
    ((window as f64 * (1.0 - overlap)) + 1e-9).floor().max(1.0) as usize
}

/// Power spectrogram, row-major `[frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub time_step: f64,
    pub freq_step: f64,
}

impl Spectrogram {
    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.n_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    pub fn total_energy(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn gaussian_window(len: usize, sigma_fraction: f64) -> Vec<f64> {
    let sigma = len as f64 * sigma_fraction;
    let centre = (len as f64 - 1.0) / 2.0;
    (0..len)
        .map(|n| (-0.5 * ((n as f64 - centre) / sigma).powi(2)).exp())
        .collect()
}

pub fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len as f64 - 1.0)).cos())
        .collect()
}

/// Magnitude-squared STFT frames (bins `0..=len/2`), no zero padding, last
/// partial frame dropped.
pub fn power_frames(samples: &[f64], window: &[f64], hop: usize) -> Vec<Vec<f64>> {
    let len = window.len();
    if samples.len() < len || len == 0 {
        return Vec::new();
    }
    let n_frames = (samples.len() - len) / hop + 1;
    let n_bins = len / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    (0..n_frames)
        .map(|f| {
            let start = f * hop;
            for (b, (&s, &w)) in buf.iter_mut().zip(samples[start..start + len].iter().zip(window)) {
                *b = Complex::new(s * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf[..n_bins].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect()
}

pub fn spectrogram(clip: &AudioClip, cfg: &SpectralConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let len = cfg.spec_window_len(clip.sample_rate);
    if len < 2 {
        return Err(Error::invalid(format!("spectrogram window of {len} samples is too short")));
    }
    if clip.samples.len() < len {
        return Err(Error::TooShort {
            needed: len,
            got: clip.samples.len(),
        });
    }
    let hop = cfg.spec_hop(clip.sample_rate);
    let window = gaussian_window(len, cfg.gaussian_sigma_fraction);
    let frames = power_frames(&clip.samples, &window, hop);
    let n_frames = frames.len();
    let n_bins = len / 2 + 1;
    let mut values: Vec<f64> = frames.into_iter().flatten().collect();
    if cfg.spec_db {
        for v in &mut values {
            *v = 10.0 * (*v + LOG_FLOOR).log10();
        }
    }
    Ok(Spectrogram {
        values,
        n_frames,
        n_bins,
        time_step: hop as f64 / clip.sample_rate as f64,
        freq_step: clip.sample_rate as f64 / len as f64,
    })
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters evaluated at FFT bin centre frequencies.
pub fn mel_filterbank(
    n_filters: usize,
    fft_len: usize,
    sample_rate: f64,
    fmin: f64,
    fmax: f64,
) -> Vec<Vec<f64>> {
    let n_bins = fft_len / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    (0..n_filters)
        .map(|m| {
            let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / fft_len as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= centre {
                        (f - lo) / (centre - lo)
                    } else {
                        (hi - f) / (hi - centre)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II coefficient `k` of `x`.
fn dct2_ortho(x: &[f64], k: usize) -> f64 {
    let m = x.len() as f64;
    let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
    scale
        * x.iter()
            .enumerate()
            .map(|(n, &v)| v * (PI * k as f64 * (n as f64 + 0.5) / m).cos())
            .sum::<f64>()
}

/// Per-frame MFCCs (coefficients `1..=n_mfcc`).
pub fn mfcc_frames(clip: &AudioClip, cfg: &SpectralConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let len = cfg.mfcc_window_len(clip.sample_rate);
    if len < 2 {
        return Err(Error::invalid(format!("MFCC window of {len} samples is too short")));
    }
    if clip.samples.len() < len {
        return Err(Error::TooShort {
            needed: len,
            got: clip.samples.len(),
        });
    }
    let sr = clip.sample_rate as f64;
    let fmax = cfg.fmax.unwrap_or(sr / 2.0).min(sr / 2.0);
    let bank = mel_filterbank(cfg.n_mel_filters, len, sr, cfg.fmin, fmax);
    let frames = power_frames(&clip.samples, &hamming_window(len), cfg.mfcc_hop(clip.sample_rate));
    Ok(frames
        .iter()
        .map(|spec| {
            let log_energies: Vec<f64> = bank
                .iter()
                .map(|filter| {
                    let e: f64 = filter.iter().zip(spec).map(|(w, p)| w * p).sum();
                    e.max(LOG_FLOOR).ln()
                })
                .collect();
            (1..=cfg.n_mfcc).map(|k| dct2_ortho(&log_energies, k)).collect()
        })
        .collect())
}

/// Framewise mean of the MFCCs; length `n_mfcc` for any clip duration.
pub fn mfcc_mean(clip: &AudioClip, cfg: &SpectralConfig) -> Result<Vec<f64>> {
    let frames = mfcc_frames(clip, cfg)?;
    Ok(mean_rows(&frames, cfg.n_mfcc))
}

pub(crate) fn mean_rows(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut mean = vec![0.0; width];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = rows.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn clip(samples: Vec<f64>, sr: u32) -> AudioClip {
        AudioClip::from_samples("t", 2, sr, samples).unwrap()
    }

    fn sine(freq: f64, sr: u32, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect()
    }

    #[test]
    fn window_and_hop_at_44k() {
        let cfg = SpectralConfig::default();
        assert_eq!(cfg.spec_window_len(44100), 512);
        assert_eq!(cfg.spec_hop(44100), 51);
        assert_eq!(cfg.mfcc_window_len(44100), 1103);
        assert_eq!(cfg.mfcc_hop(44100), 661);
    }

    #[test]
    fn sine_peaks_at_nearest_bin() {
        let sr = 44100;
        let s = spectrogram(&clip(sine(1000.0, sr, sr as usize), sr), &SpectralConfig::default())
            .unwrap();
        let expected = (1000.0 / s.freq_step).round() as usize;
        for f in 1..s.n_frames - 1 {
            let row = s.frame(f);
            let argmax = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            assert_eq!(argmax, expected, "frame {f}");
        }
    }

    #[test]
    fn zero_clip_gives_zero_spectrogram() {
        let s = spectrogram(&clip(vec![0.0; 2000], 44100), &SpectralConfig::default()).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert!(!s.values.is_empty());
    }

    #[test]
    fn too_short_is_rejected() {
        let err = spectrogram(&clip(vec![0.1; 100], 44100), &SpectralConfig::default());
        assert!(matches!(err, Err(Error::TooShort { needed: 512, got: 100 })));
        let err = mfcc_mean(&clip(vec![0.1; 100], 44100), &SpectralConfig::default());
        assert!(matches!(err, Err(Error::TooShort { .. })));
    }

    #[test]
    fn energy_scales_quadratically() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = gaussian_window(512, 1.0 / 6.0);
        let e1: f64 = power_frames(&x, &w, 51).iter().flatten().sum();
        let scaled: Vec<f64> = x.iter().map(|v| v * 0.3).collect();
        let e2: f64 = power_frames(&scaled, &w, 51).iter().flatten().sum();
        assert!((e2 / e1 - 0.09).abs() < 1e-10);
    }

    #[test]
    fn time_reversal_reverses_frames() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        // (len - 512) divisible by hop so frames align after reversal.
        let n = 512 + 51 * 40;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut r = x.clone();
        r.reverse();
        let cfg = SpectralConfig::default();
        let a = spectrogram(&clip(x, 44100), &cfg).unwrap();
        let b = spectrogram(&clip(r, 44100), &cfg).unwrap();
        assert_eq!(a.n_frames, b.n_frames);
        for f in 0..a.n_frames {
            for (u, v) in a.frame(f).iter().zip(b.frame(a.n_frames - 1 - f)) {
                assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn mfcc_has_twelve_coefficients() {
        let sr = 16000;
        for n in [400, 1000, 16000] {
            let m = mfcc_mean(&clip(sine(440.0, sr, n), sr), &SpectralConfig::default()).unwrap();
            assert_eq!(m.len(), 12);
            assert!(m.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn mfcc_mean_of_self_concatenation() {
        let sr = 16000;
        let cfg = SpectralConfig {
            mfcc_overlap_fraction: 0.0,
            ..SpectralConfig::default()
        };
        let len = cfg.mfcc_window_len(sr);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..len * 7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xx: Vec<f64> = x.iter().chain(x.iter()).copied().collect();
        let a = mfcc_mean(&clip(x, sr), &cfg).unwrap();
        let b = mfcc_mean(&clip(xx, sr), &cfg).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn noise_and_sawtooth_are_distinguishable() {
        let sr = 16000;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let noise: Vec<f64> = (0..sr).map(|_| rng.random_range(-1.0..1.0)).collect();
        let saw: Vec<f64> = (0..sr)
            .map(|i| 2.0 * ((300.0 * i as f64 / sr as f64) % 1.0) - 1.0)
            .collect();
        let cfg = SpectralConfig::default();
        let a = mfcc_mean(&clip(noise, sr as u32), &cfg).unwrap();
        let b = mfcc_mean(&clip(saw, sr as u32), &cfg).unwrap();
        let d: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        assert!(d > 0.0);
    }

    #[test]
    fn silent_frames_hit_the_log_floor() {
        let m = mfcc_mean(&clip(vec![0.0; 4000], 16000), &SpectralConfig::default()).unwrap();
        // Constant log energies have no non-DC cosine content.
        assert!(m.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn mel_scale_round_trips() {
        for f in [0.0, 100.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn frame_mean_is_permutation_invariant(
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), 1..20),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = mean_rows(&rows, 3);
            let b = mean_rows(&shuffled, 3);
            for (u, v) in a.iter().zip(&b) {
                proptest::prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
