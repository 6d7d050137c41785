//! A small synthetic corpus with three generative families, used by the
//! smoke tests and the `synth` subcommand.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::write_wav_i16;
use crate::error::Result;

pub const SAMPLE_RATE: u32 = 44_100;
/// Month 3 is deliberately left empty so reports show a gap.
pub const MONTHS: [u8; 3] = [1, 2, 4];
pub const FAMILIES: [&str; 3] = ["sweep", "burst", "am"];

#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub id: String,
    pub month: u8,
    pub family: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest: PathBuf,
    pub clips: Vec<SyntheticClip>,
}

/// Rising sine sweep in the 2-3.5 kHz range.
fn sweep(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let f0 = rng.random_range(2000.0..2500.0);
    let f1 = rng.random_range(3000.0..3500.0);
    let dur = n as f64 / SAMPLE_RATE as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            (2.0 * PI * (f0 * t + 0.5 * (f1 - f0) / dur * t * t)).sin()
        })
        .collect()
}

/// A few Hann-shaped bursts of white noise.
fn bursts(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let k = rng.random_range(3..=6);
    let mut env = vec![0.02f64; n];
    let width = n / (2 * k);
    for b in 0..k {
        let start = b * n / k + rng.random_range(0..width / 2 + 1);
        for j in 0..width.min(n - start) {
            let w = 0.5 - 0.5 * (2.0 * PI * j as f64 / width as f64).cos();
            env[start + j] = env[start + j].max(w);
        }
    }
    env.iter().map(|e| e * normal.sample(rng)).collect()
}

/// Low harmonic tone with slow amplitude modulation.
fn am_tone(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let fc = rng.random_range(250.0..350.0);
    let fm = rng.random_range(8.0..12.0);
    (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let carrier = (2.0 * PI * fc * t).sin() + 0.5 * (4.0 * PI * fc * t).sin();
            (1.0 + 0.8 * (2.0 * PI * fm * t).sin()) * carrier
        })
        .collect()
}

/// Writes `per_family` clips of each family (cycled over [`MONTHS`]) plus
/// `manifest.csv` into `dir`.
pub fn generate(dir: &Path, per_family: usize, seed: u64) -> Result<SyntheticCorpus> {
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hiss = Normal::new(0.0, 1e-3).unwrap();
    let mut clips = Vec::new();
    let mut manifest = csv::Writer::from_path(dir.join("manifest.csv"))?;
    manifest.write_record(["id", "path", "month"])?;
    for i in 0..per_family {
        for (family, name) in FAMILIES.iter().enumerate() {
            let id = format!("{name}_{i:03}");
            let month = MONTHS[i % MONTHS.len()];
            let n = (rng.random_range(0.6..1.2) * SAMPLE_RATE as f64) as usize;
            let mut x = match family {
                0 => sweep(&mut rng, n),
                1 => bursts(&mut rng, n),
                _ => am_tone(&mut rng, n),
            };
            let gain = rng.random_range(0.3..0.9);
            let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for v in &mut x {
                *v = (*v / peak * gain + hiss.sample(&mut rng)).clamp(-1.0, 1.0);
            }
            let file = format!("{id}.wav");
            write_wav_i16(&dir.join(&file), SAMPLE_RATE, &[&x])?;
            manifest.write_record([id.as_str(), file.as_str(), &month.to_string()])?;
            clips.push(SyntheticClip { id, month, family });
        }
    }
    manifest.flush()?;
    Ok(SyntheticCorpus {
        manifest: dir.join("manifest.csv"),
        clips,
    })
}
