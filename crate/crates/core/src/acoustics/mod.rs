//! Per-clip acoustic descriptors used to profile clusters.
//!
//! Everything is computed on 40 ms frames with a 10 ms hop and aggregated
//! per clip: medians for pitch and formants, the voiced-frame share, and
//! frame means for the rest.

pub mod formants;
pub mod pitch;
pub mod spectrum;

use std::f64::consts::PI;
use std::io::Write;

use serde::Deserialize;

use crate::corpus::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::power_frames;

use formants::FormantLimits;

/// Column names of the descriptors, in [`AcousticProfile::values`] order.
pub const DESCRIPTOR_COLUMNS: [&str; 12] = [
    "duration", "pitch", "f1", "f2", "f3", "voiced", "sc", "entropy", "hnr", "fm", "loudness", "roughness",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcousticConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub pitch_min: f64,
    pub pitch_max: f64,
    pub voicing_threshold: f64,
    pub lpc_rate: u32,
    pub lpc_order: usize,
    pub max_bandwidth: f64,
    pub formant_min: f64,
    pub formant_max: f64,
    /// Width of the bands the power is pooled into for the entropy.
    pub entropy_band_hz: f64,
    pub fm_band: (f64, f64),
    /// Frames quieter than this fraction of the loudest frame's RMS are silent.
    pub silence_ratio: f64,
    pub roughness_floor: f64,
    pub roughness_peaks: usize,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        AcousticConfig {
            frame_ms: 40.0,
            hop_ms: 10.0,
            pitch_min: 100.0,
            pitch_max: 1000.0,
            voicing_threshold: 0.5,
            lpc_rate: 16_000,
            lpc_order: 18,
            max_bandwidth: 700.0,
            formant_min: 200.0,
            formant_max: 8000.0,
            entropy_band_hz: 100.0,
            fm_band: (0.5, 20.0),
            silence_ratio: 1e-3,
            roughness_floor: 0.05,
            roughness_peaks: 20,
        }
    }
}

impl AcousticConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.frame_ms > 0.0
            && self.hop_ms > 0.0
            && self.pitch_min > 0.0
            && self.pitch_max > self.pitch_min
            && (0.0..=1.0).contains(&self.voicing_threshold)
            && self.lpc_rate > 0
            && self.lpc_order > 0
            && self.formant_max > self.formant_min
            && self.entropy_band_hz > 0.0
            && self.fm_band.1 > self.fm_band.0
            && self.fm_band.0 > 0.0
            && self.roughness_peaks > 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid acoustic settings: {self:?}")))
        }
    }
}

/// Missing values are `None`: pitch, formants and fm when no frame is voiced.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticProfile {
    pub duration: f64,
    pub pitch: Option<f64>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f3: Option<f64>,
    pub voiced: f64,
    pub spectral_centroid: f64,
    pub entropy: f64,
    pub hnr: f64,
    pub fm: Option<f64>,
    pub loudness: f64,
    pub roughness: f64,
}

impl AcousticProfile {
    pub fn values(&self) -> [Option<f64>; 12] {
        [
            Some(self.duration),
            self.pitch,
            self.f1,
            self.f2,
            self.f3,
            Some(self.voiced),
            Some(self.spectral_centroid),
            Some(self.entropy),
            Some(self.hnr),
            self.fm,
            Some(self.loudness),
            Some(self.roughness),
        ]
    }
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn frame_starts(len: usize, frame: usize, hop: usize) -> impl Iterator<Item = usize> {
    let n = if len >= frame { (len - frame) / hop + 1 } else { 0 };
    (0..n).map(move |i| i * hop)
}

pub fn profile(clip: &AudioClip, cfg: &AcousticConfig) -> Result<AcousticProfile> {
    cfg.validate()?;
    let sr = clip.sample_rate as f64;
    let x = &clip.samples;
    let min_len = (0.1 * sr).ceil() as usize;
    if x.len() < min_len {
        return Err(Error::TooShort {
            needed: min_len,
            got: x.len(),
        });
    }
    let frame = (cfg.frame_ms * 1e-3 * sr).round() as usize;
    let hop = ((cfg.hop_ms * 1e-3 * sr).round() as usize).max(1);
    let tau_min = ((sr / cfg.pitch_max).floor() as usize).max(2);
    let tau_max = ((sr / cfg.pitch_min).ceil() as usize).min(frame.saturating_sub(2) / 2);
    if tau_max <= tau_min {
        return Err(Error::invalid("pitch range does not fit the analysis frame"));
    }

    let starts: Vec<usize> = frame_starts(x.len(), frame, hop).collect();
    let rms: Vec<f64> = starts
        .iter()
        .map(|&s| (x[s..s + frame].iter().map(|v| v * v).sum::<f64>() / frame as f64).sqrt())
        .collect();
    let loudest = rms.iter().cloned().fold(0.0, f64::max);
    if !(loudest > 0.0) {
        return Err(Error::invalid(format!("clip `{}` is silent", clip.id)));
    }
    let active: Vec<bool> = rms.iter().map(|&r| r > cfg.silence_ratio * loudest).collect();

    // Periodicity per frame.
    let mut contour = vec![None; starts.len()];
    let mut hnr = Vec::new();
    for (i, &s) in starts.iter().enumerate() {
        if !active[i] {
            continue;
        }
        let f = &x[s..s + frame];
        if let Some(est) = pitch::yin(f, tau_min, tau_max) {
            hnr.push(pitch::harmonicity_db(f, est.lag));
            if est.confidence >= cfg.voicing_threshold {
                contour[i] = Some(sr / est.lag);
            }
        }
    }
    let n_voiced = contour.iter().filter(|c| c.is_some()).count();
    let mut f0s: Vec<f64> = contour.iter().flatten().copied().collect();
    let fm = pitch::modulation_rate(&contour, 1000.0 / cfg.hop_ms, cfg.fm_band, 10);

    // Spectral descriptors on Hann-windowed frames.
    let hann: Vec<f64> = (0..frame)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (frame as f64 - 1.0)).cos())
        .collect();
    let norm = 1.0 / (frame as f64 * hann.iter().map(|w| w * w).sum::<f64>());
    let df = sr / frame as f64;
    let (mut sc, mut ent, mut loud, mut rough) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, mut p) in power_frames(x, &hann, hop).into_iter().enumerate() {
        let last = p.len() - 1;
        for (k, v) in p.iter_mut().enumerate() {
            *v *= if k == 0 || (k == last && frame % 2 == 0) { norm } else { 2.0 * norm };
        }
        loud.push(spectrum::loudness_sone(&p, df));
        if !active[i] {
            continue;
        }
        sc.push(spectrum::centroid(&p, df));
        ent.push(spectrum::band_entropy(&p, df, cfg.entropy_band_hz));
        rough.push(spectrum::roughness_percent(
            &p,
            df,
            cfg.roughness_floor,
            cfg.roughness_peaks,
        ));
    }

    let (f1, f2, f3) = if n_voiced > 0 {
        voiced_formants(clip, cfg, &contour)
    } else {
        (None, None, None)
    };

    Ok(AcousticProfile {
        duration: clip.duration_seconds(),
        pitch: median(&mut f0s),
        f1,
        f2,
        f3,
        voiced: 100.0 * n_voiced as f64 / starts.len() as f64,
        spectral_centroid: mean(&sc),
        entropy: mean(&ent),
        hnr: mean(&hnr),
        fm,
        loudness: mean(&loud),
        roughness: mean(&rough),
    })
}

/// Median F1-F3 over voiced frames in which at least three resonances pass
/// the bandwidth and range limits. Each frame's three lowest are sorted, so
/// the medians keep F1 <= F2 <= F3.
fn voiced_formants(
    clip: &AudioClip,
    cfg: &AcousticConfig,
    contour: &[Option<f64>],
) -> (Option<f64>, Option<f64>, Option<f64>) {
    let rate = cfg.lpc_rate as f64;
    let y = formants::resample(&clip.samples, clip.sample_rate, cfg.lpc_rate);
    let frame = (cfg.frame_ms * 1e-3 * rate).round() as usize;
    let hop = ((cfg.hop_ms * 1e-3 * rate).round() as usize).max(1);
    let lim = FormantLimits {
        order: cfg.lpc_order,
        max_bandwidth: cfg.max_bandwidth,
        min_freq: cfg.formant_min,
        max_freq: cfg.formant_max.min(rate / 2.0),
    };
    let mut tracks: [Vec<f64>; 3] = Default::default();
    for (i, s) in frame_starts(y.len(), frame, hop).enumerate() {
        if !matches!(contour.get(i), Some(Some(_))) {
            continue;
        }
        let f = formants::frame_formants(&y[s..s + frame], rate, &lim);
        if f.len() >= 3 {
            for (t, v) in tracks.iter_mut().zip(f) {
                t.push(v);
            }
        }
    }
    let [mut a, mut b, mut c] = tracks;
    (median(&mut a), median(&mut b), median(&mut c))
}

/// Writes `id,cluster,<descriptors>`; missing values are empty fields.
pub fn write_profiles_csv<W: Write>(out: W, rows: &[(String, u32, AcousticProfile)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id", "cluster"];
    header.extend(DESCRIPTOR_COLUMNS);
    w.write_record(&header)?;
    for (id, cluster, p) in rows {
        let mut rec = vec![id.clone(), cluster.to_string()];
        rec.extend(p.values().iter().map(|v| v.map(|v| format!("{v:.6}")).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    const SR: u32 = 44_100;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip {
            id: "t".into(),
            month: 1,
            sample_rate: SR,
            samples,
        }
    }

    fn sine(f: f64, secs: f64) -> Vec<f64> {
        let n = (secs * SR as f64) as usize;
        (0..n).map(|i| (2.0 * PI * f * i as f64 / SR as f64).sin()).collect()
    }

    fn noise(secs: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 0.3).unwrap();
        (0..(secs * SR as f64) as usize).map(|_| d.sample(&mut rng)).collect()
    }

    fn vibrato(carrier: f64, depth: f64, rate: f64, secs: f64) -> Vec<f64> {
        let n = (secs * SR as f64) as usize;
        (0..n)
            .map(|i| {
                let t = i as f64 / SR as f64;
                let phase = 2.0 * PI * carrier * t - depth / rate * (2.0 * PI * rate * t).cos();
                phase.sin()
            })
            .collect()
    }

    /// Impulse train through three two-pole resonators.
    fn vowel(f0: f64, formants: [f64; 3], secs: f64) -> Vec<f64> {
        let n = (secs * SR as f64) as usize;
        let period = SR as f64 / f0;
        let mut x: Vec<f64> = (0..n)
            .map(|i| if (i as f64 % period) < 1.0 { 1.0 } else { 0.0 })
            .collect();
        for f in formants {
            let r = (-PI * 80.0 / SR as f64).exp();
            let th = 2.0 * PI * f / SR as f64;
            let (a1, a2) = (2.0 * r * th.cos(), -r * r);
            let (mut y1, mut y2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let y = *v + a1 * y1 + a2 * y2;
                y2 = y1;
                y1 = y;
                *v = y;
            }
        }
        x
    }

    #[test]
    fn pure_tone_profile() {
        let p = profile(&clip(sine(440.0, 1.0)), &AcousticConfig::default()).unwrap();
        assert!((p.pitch.unwrap() - 440.0).abs() <= 5.0, "{p:?}");
        assert!(p.voiced >= 95.0);
        assert!((p.spectral_centroid - 440.0).abs() <= 20.0, "{}", p.spectral_centroid);
        assert!(p.hnr >= 40.0, "{}", p.hnr);
        assert!(p.entropy <= 0.1, "{}", p.entropy);
        assert!((p.duration - 1.0).abs() < 1e-12);
        assert!(p.roughness < 1.0, "{}", p.roughness);
    }

    #[test]
    fn white_noise_profile() {
        let p = profile(&clip(noise(1.0, 5)), &AcousticConfig::default()).unwrap();
        assert!(p.voiced <= 10.0, "{}", p.voiced);
        assert!(p.entropy >= 0.9, "{}", p.entropy);
        assert!(p.hnr < 10.0);
        assert!(p.values().iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn vibrato_rate() {
        let p = profile(&clip(vibrato(300.0, 30.0, 5.0, 1.0)), &AcousticConfig::default()).unwrap();
        let fm = p.fm.unwrap();
        assert!((fm - 5.0).abs() <= 0.5, "{fm}");
        assert!((p.pitch.unwrap() - 300.0).abs() < 15.0);
    }

    #[test]
    fn synthetic_vowel_formants() {
        let target = [700.0, 1200.0, 2600.0];
        let p = profile(&clip(vowel(250.0, target, 0.5)), &AcousticConfig::default()).unwrap();
        let got = [p.f1.unwrap(), p.f2.unwrap(), p.f3.unwrap()];
        for (g, t) in got.iter().zip(target) {
            assert!((g - t).abs() / t < 0.1, "{got:?}");
        }
        assert!((p.pitch.unwrap() - 250.0).abs() < 5.0);
    }

    #[test]
    fn amplitude_scaling() {
        let x: Vec<f64> = vowel(300.0, [600.0, 1500.0, 3000.0], 0.6)
            .iter()
            .zip(noise(0.6, 9))
            .map(|(a, b)| a + 0.05 * b)
            .collect();
        let cfg = AcousticConfig::default();
        let base = profile(&clip(x.clone()), &cfg).unwrap();
        let scaled = profile(&clip(x.iter().map(|v| v * 0.25).collect()), &cfg).unwrap();
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= 0.01 * a.abs().max(1e-9),
            (None, None) => true,
            _ => false,
        };
        for (i, (a, b)) in base.values().iter().zip(scaled.values()).enumerate() {
            if DESCRIPTOR_COLUMNS[i] == "loudness" {
                assert!(a.unwrap() > b.unwrap());
            } else {
                assert!(close(*a, b), "{}: {a:?} vs {b:?}", DESCRIPTOR_COLUMNS[i]);
            }
        }
    }

    #[test]
    fn time_reversal() {
        let x: Vec<f64> = sine(523.0, 0.8).iter().zip(noise(0.8, 2)).map(|(a, b)| a + 0.2 * b).collect();
        let cfg = AcousticConfig::default();
        let a = profile(&clip(x.clone()), &cfg).unwrap();
        let b = profile(&clip(x.into_iter().rev().collect()), &cfg).unwrap();
        assert_eq!(a.duration, b.duration);
        assert!((a.spectral_centroid - b.spectral_centroid).abs() <= 0.01 * a.spectral_centroid);
        assert!((a.entropy - b.entropy).abs() <= 0.01 * a.entropy);
    }

    #[test]
    fn short_and_silent_clips() {
        let cfg = AcousticConfig::default();
        assert!(matches!(
            profile(&clip(sine(440.0, 0.09)), &cfg),
            Err(Error::TooShort { .. })
        ));
        assert!(profile(&clip(vec![0.0; 8820]), &cfg).is_err());
        assert!(profile(&clip(sine(440.0, 0.1)), &cfg).is_ok());
    }

    #[test]
    fn csv_marks_missing_fields() {
        let p = profile(&clip(noise(0.5, 1)), &AcousticConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_profiles_csv(&mut buf, &[("n".into(), 2, p.clone())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "id,cluster,duration,pitch,f1,f2,f3,voiced,sc,entropy,hnr,fm,loudness,roughness"
        );
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 14);
        assert_eq!(fields[3].is_empty(), p.pitch.is_none());
    }
}
