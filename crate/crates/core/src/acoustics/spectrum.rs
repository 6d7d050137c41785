//! Per-frame spectral descriptors computed from a one-sided power spectrum.

/// Zwicker critical-band edges in Hz.
const BARK_EDGES: [f64; 25] = [
    0.0, 100.0, 200.0, 300.0, 400.0, 510.0, 630.0, 770.0, 920.0, 1080.0, 1270.0, 1480.0, 1720.0, 2000.0, 2320.0,
    2700.0, 3150.0, 3700.0, 4400.0, 5300.0, 6400.0, 7700.0, 9500.0, 12000.0, 15500.0,
];

/// Level assigned to a full-scale (unit RMS) signal.
const FULL_SCALE_DB: f64 = 90.0;

/// Amplitude-weighted mean frequency.
pub fn centroid(power: &[f64], df: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, p) in power.iter().enumerate() {
        let a = p.sqrt();
        num += a * k as f64 * df;
        den += a;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Shannon entropy of the power pooled into equal-width bands of `band_hz`,
/// divided by ln(number of bands).
pub fn band_entropy(power: &[f64], df: f64, band_hz: f64) -> f64 {
    let nyquist = (power.len() - 1) as f64 * df;
    let n_bands = ((nyquist / band_hz).floor() as usize + 1).max(2);
    let mut bands = vec![0.0; n_bands];
    for (k, p) in power.iter().enumerate() {
        let b = ((k as f64 * df / band_hz) as usize).min(n_bands - 1);
        bands[b] += p;
    }
    let total: f64 = bands.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let h: f64 = bands
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    (h / (n_bands as f64).ln()).clamp(0.0, 1.0)
}

/// Sum of per-band sones. `power` must be scaled so its sum is the frame's
/// mean square; band levels are read as phons (no equal-loudness weighting).
pub fn loudness_sone(power: &[f64], df: f64) -> f64 {
    let mut bands = [0.0; BARK_EDGES.len()];
    for (k, p) in power.iter().enumerate() {
        let f = k as f64 * df;
        let b = BARK_EDGES.partition_point(|&e| e <= f) - 1;
        bands[b] += p;
    }
    bands
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let level = 10.0 * p.log10() + FULL_SCALE_DB;
            if level >= 40.0 {
                2f64.powf((level - 40.0) / 10.0)
            } else if level > 0.0 {
                (level / 40.0).powf(2.642)
            } else {
                0.0
            }
        })
        .sum()
}

/// Sethares' parametrization of the Plomp-Levelt dissonance curve.
fn dissonance(f1: f64, f2: f64) -> f64 {
    let s = 0.24 / (0.0207 * f1.min(f2) + 18.96);
    let x = s * (f1 - f2).abs();
    (-3.51 * x).exp() - (-5.75 * x).exp()
}

fn max_dissonance() -> f64 {
    let x = (5.75f64 / 3.51).ln() / (5.75 - 3.51);
    (-3.51 * x).exp() - (-5.75 * x).exp()
}

/// Amplitude-weighted mean pairwise dissonance between spectral peaks, as a
/// percentage of the curve maximum. Peaks are local maxima at least
/// `floor` times the largest amplitude; at most `max_peaks` are used.
pub fn roughness_percent(power: &[f64], df: f64, floor: f64, max_peaks: usize) -> f64 {
    let amp: Vec<f64> = power.iter().map(|p| p.sqrt()).collect();
    let top = amp.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        return 0.0;
    }
    let mut peaks: Vec<(f64, f64)> = (1..amp.len().saturating_sub(1))
        .filter(|&k| amp[k] > amp[k - 1] && amp[k] >= amp[k + 1] && amp[k] >= floor * top)
        .map(|k| (k as f64 * df, amp[k]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks.truncate(max_peaks);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..peaks.len() {
        for j in i + 1..peaks.len() {
            let w = peaks[i].1 * peaks[j].1;
            num += w * dissonance(peaks[i].0, peaks[j].0);
            den += w;
        }
    }
    if den > 0.0 {
        100.0 * num / (den * max_dissonance())
    } else {
        0.0
    }
}
