//! Audio clip decoding, normalization, corpus filtering and per-month counts.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Clips strictly longer than this are excluded from the corpus.
pub const MAX_DURATION_SECONDS: f64 = 10.0;

/// A mono clip with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub id: String,
    pub month: u8,
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl AudioClip {
    /// Builds a clip from raw mono samples, peak-normalizing them.
    pub fn from_samples(
        id: impl Into<String>,
        month: u8,
        sample_rate: u32,
        samples: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if sample_rate == 0 {
            return Err(Error::invalid(format!("clip `{id}`: sample rate must be positive")));
        }
        check_month(month).map_err(|m| Error::invalid(format!("clip `{id}`: {m}")))?;
        if samples.is_empty() {
            return Err(Error::EmptyClip(id));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("decoding of clip `{id}`")));
        }
        let mut samples = samples;
        peak_normalize(&mut samples);
        Ok(AudioClip {
            id,
            month,
            sample_rate,
            samples,
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }
}

fn check_month(month: u8) -> std::result::Result<(), String> {
    if (1..=12).contains(&month) {
        Ok(())
    } else {
        Err(format!("month {month} outside 1..=12"))
    }
}

/// Divides by the maximum absolute value. All-zero input is left untouched.
pub fn peak_normalize(samples: &mut [f64]) {
    let peak = samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        for s in samples.iter_mut() {
            *s /= peak;
        }
        // Division can leave the peak one ulp off 1.0; pin it.
        for s in samples.iter_mut() {
            if s.abs() > 1.0 {
                *s = s.signum();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub month: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Reads a CSV manifest with header `id,path,month`. Relative paths are
    /// resolved against the manifest's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let mut manifest = Self::from_reader(file)?;
        for entry in &mut manifest.entries {
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
        }
        Ok(manifest)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for required in ["id", "path", "month"] {
            if !headers.iter().any(|h| h == required) {
                return Err(Error::Manifest(format!("missing column `{required}`")));
            }
        }
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (line, row) in rdr.deserialize::<ManifestEntry>().enumerate() {
            let entry = row.map_err(|e| Error::Manifest(format!("row {}: {e}", line + 1)))?;
            check_month(entry.month)
                .map_err(|m| Error::Manifest(format!("clip `{}`: {m}", entry.id)))?;
            if !seen.insert(entry.id.clone()) {
                return Err(Error::Manifest(format!("duplicate id `{}`", entry.id)));
            }
            entries.push(entry);
        }
        Ok(Manifest { entries })
    }

    pub fn months(&self) -> Vec<u8> {
        let mut m: Vec<u8> = self.entries.iter().map(|e| e.month).collect();
        m.sort_unstable();
        m.dedup();
        m
    }
}

/// Decodes a PCM WAV file (integer 8/16/24/32-bit or float32, any channel
/// count), averages channels to mono and peak-normalizes.
pub fn load_clip(path: &Path, entry: &ManifestEntry) -> Result<AudioClip> {
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let reader = hound::WavReader::open(path).map_err(|e| decode_err(e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(decode_err("zero channels".into()));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(decode_err(format!(
                    "unsupported float width {}",
                    spec.bits_per_sample
                )));
            }
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| decode_err(e.to_string()))?
        }
        hound::SampleFormat::Int => {
            let bits = spec.bits_per_sample;
            if !matches!(bits, 8 | 16 | 24 | 32) {
                return Err(decode_err(format!("unsupported integer width {bits}")));
            }
            let full_scale = (1_i64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full_scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| decode_err(e.to_string()))?
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(decode_err("truncated final frame".into()));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(Error::EmptyClip(entry.id.clone()));
    }
    AudioClip::from_samples(entry.id.clone(), entry.month, spec.sample_rate, mono)
}

/// Splits clips into (kept, excluded) by the duration rule. Order is preserved.
pub fn partition_by_duration(clips: Vec<AudioClip>) -> (Vec<AudioClip>, Vec<AudioClip>) {
    clips
        .into_iter()
        .partition(|c| c.duration_seconds() <= MAX_DURATION_SECONDS)
}

/// Drops clips longer than [`MAX_DURATION_SECONDS`].
pub fn filter_corpus(clips: Vec<AudioClip>) -> Vec<AudioClip> {
    let (kept, excluded) = partition_by_duration(clips);
    if !excluded.is_empty() {
        log::info!(
            "excluded {} clip(s) longer than {MAX_DURATION_SECONDS} s",
            excluded.len()
        );
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthCounts {
    pub month: u8,
    pub count: usize,
    pub mean_duration: f64,
    /// Population standard deviation (divides by n).
    pub std_duration: f64,
}

pub fn corpus_counts(clips: &[AudioClip]) -> Vec<MonthCounts> {
    let mut by_month: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for clip in clips {
        by_month.entry(clip.month).or_default().push(clip.duration_seconds());
    }
    by_month
        .into_iter()
        .map(|(month, durations)| {
            let n = durations.len() as f64;
            let mean = durations.iter().sum::<f64>() / n;
            let var = durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
            MonthCounts {
                month,
                count: durations.len(),
                mean_duration: mean,
                std_duration: var.sqrt(),
            }
        })
        .collect()
}

/// Writes a mono or stereo PCM WAV. Used by the synthetic corpus generator and tests.
pub fn write_wav_i16(path: &Path, sample_rate: u32, channels: &[&[f64]]) -> Result<()> {
    let n_ch = channels.len();
    if n_ch == 0 {
        return Err(Error::invalid("no channels to write"));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("channels differ in length"));
    }
    let spec = hound::WavSpec {
        channels: n_ch as u16,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| Error::Io(std::io::Error::other(e.to_string()));
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for i in 0..len {
        for ch in channels {
            let v = (ch[i].clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v).map_err(to_io)?;
        }
    }
    writer.finalize().map_err(to_io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, month: u8) -> ManifestEntry {
        ManifestEntry {
            id: id.into(),
            path: PathBuf::new(),
            month,
        }
    }

    fn clip_of(seconds: f64, month: u8) -> AudioClip {
        let sr = 100;
        let n = (seconds * sr as f64).round() as usize;
        AudioClip::from_samples(format!("c{seconds}"), month, sr, vec![0.5; n]).unwrap()
    }

    #[test]
    fn stereo_cancellation_gives_silence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let left = vec![0.5; 100];
        let right = vec![-0.5; 100];
        write_wav_i16(&path, 44100, &[&left, &right]).unwrap();
        let clip = load_clip(&path, &entry("a", 2)).unwrap();
        assert!(clip.is_silent());
        assert_eq!(clip.sample_rate, 44100);
    }

    #[test]
    fn half_scale_ramp_is_rescaled_to_unit_peak() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..=64 {
            let v = (i * 256) as i16; // peaks at 16384
            w.write_sample(v).unwrap();
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_clip(&path, &entry("ramp", 3)).unwrap();
        assert_eq!(clip.samples.len(), 65);
        assert_eq!(*clip.samples.last().unwrap(), 1.0);
        assert!((clip.samples[32] - 0.5).abs() < 1e-12);
        assert_eq!(clip.sample_rate, 44100);
    }

    #[test]
    fn decodes_float_and_24_bit() {
        let dir = tempfile::tempdir().unwrap();
        for (bits, fmt) in [(32, hound::SampleFormat::Float), (24, hound::SampleFormat::Int)] {
            let path = dir.path().join(format!("f{bits}.wav"));
            let spec = hound::WavSpec {
                channels: 1,
                sample_rate: 8000,
                bits_per_sample: bits,
                sample_format: fmt,
            };
            let mut w = hound::WavWriter::create(&path, spec).unwrap();
            for i in 0..10 {
                match fmt {
                    hound::SampleFormat::Float => w.write_sample(i as f32 * -0.01).unwrap(),
                    hound::SampleFormat::Int => w.write_sample(i * -1000).unwrap(),
                }
            }
            w.finalize().unwrap();
            let clip = load_clip(&path, &entry("f", 5)).unwrap();
            assert_eq!(clip.samples[9], -1.0);
        }
    }

    #[test]
    fn garbled_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.wav");
        std::fs::write(&path, b"RIFF0000garbage").unwrap();
        match load_clip(&path, &entry("junk", 2)) {
            Err(Error::Decode { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn zero_length_audio_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        write_wav_i16(&path, 44100, &[&[]]).unwrap();
        assert!(matches!(
            load_clip(&path, &entry("empty", 2)),
            Err(Error::EmptyClip(_))
        ));
    }

    #[test]
    fn duration_filter_uses_strict_rule() {
        let kept = filter_corpus(vec![clip_of(10.5, 2), clip_of(10.0, 2)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].duration_seconds(), 10.0);

        let kept = filter_corpus(vec![clip_of(2.0, 2), clip_of(3.0, 2), clip_of(12.0, 2)]);
        let d: Vec<f64> = kept.iter().map(AudioClip::duration_seconds).collect();
        assert_eq!(d, vec![2.0, 3.0]);
        assert_eq!(filter_corpus(kept.clone()), kept);
    }

    #[test]
    fn monthly_counts_use_population_std() {
        let rows = corpus_counts(&[clip_of(4.0, 2)]);
        assert_eq!(
            rows,
            vec![MonthCounts {
                month: 2,
                count: 1,
                mean_duration: 4.0,
                std_duration: 0.0
            }]
        );
        let rows = corpus_counts(&[clip_of(1.0, 6), clip_of(3.0, 6)]);
        assert_eq!(rows[0].count, 2);
        assert!((rows[0].mean_duration - 2.0).abs() < 1e-12);
        assert!((rows[0].std_duration - 1.0).abs() < 1e-12);
    }

    #[test]
    fn manifest_rejects_duplicates_and_bad_months() {
        let ok = "id,path,month\na,a.wav,2\nb,b.wav,12\n";
        let m = Manifest::from_reader(ok.as_bytes()).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.months(), vec![2, 12]);
        let dup = "id,path,month\na,a.wav,2\na,b.wav,3\n";
        assert!(Manifest::from_reader(dup.as_bytes()).is_err());
        let bad = "id,path,month\na,a.wav,13\n";
        assert!(Manifest::from_reader(bad.as_bytes()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn normalized_peak_is_one(v in proptest::collection::vec(-5.0f64..5.0, 1..200)) {
            let clip = AudioClip::from_samples("p", 2, 100, v.clone()).unwrap();
            let peak = clip.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            if v.iter().any(|&s| s != 0.0) {
                proptest::prop_assert_eq!(peak, 1.0);
            } else {
                proptest::prop_assert_eq!(peak, 0.0);
            }
        }
    }
}
