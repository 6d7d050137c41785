//! End-to-end orchestration: features, clustering and reporting, with every
//! intermediate written to the output directory.

pub mod report;
pub mod synth;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::acoustics::{self, AcousticConfig, AcousticProfile, DESCRIPTOR_COLUMNS};
use crate::corpus::{self, AudioClip, Manifest, ManifestEntry, MAX_DURATION_SECONDS};
use crate::dpmm::{self, ChainConfig, DpmmPriors, Partition};
use crate::embedding::{self, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::features::{self, DiagramFeatures, FeatureVector, PcaModel};
use crate::glm::{self, ContrastSummary};
use crate::par;
use crate::persistence::{alpha_persistence, sublevel_cubical_persistence};
use crate::spectral::{self, SpectralConfig};

use report::{ClusterMedians, ProportionTable};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    #[default]
    All,
    /// Stop after `features.csv`.
    FeaturesOnly,
    /// Read `features.csv`, run the chain, stop after `partition.csv`.
    ClusterOnly,
    /// Read `features.csv` and `partition.csv`, then profile and report.
    ReportOnly,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpmmSettings {
    /// Prior expected number of clusters used to calibrate alpha.
    pub k_target: f64,
    /// Fixed concentration; overrides `k_target` when set.
    pub alpha: Option<f64>,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub recompute_every: usize,
    pub max_init_clusters: usize,
}

impl Default for DpmmSettings {
    fn default() -> Self {
        let c = ChainConfig::default();
        DpmmSettings {
            k_target: 5.0,
            alpha: None,
            iters: c.iters,
            burnin: c.burnin,
            thin: c.thin,
            seed: c.seed,
            recompute_every: c.recompute_every,
            max_init_clusters: c.max_init_clusters,
        }
    }
}

impl DpmmSettings {
    pub fn chain(&self) -> ChainConfig {
        ChainConfig {
            iters: self.iters,
            burnin: self.burnin,
            thin: self.thin,
            seed: self.seed,
            recompute_every: self.recompute_every,
            max_init_clusters: self.max_init_clusters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub alpha_level: f64,
    /// Clusters smaller than this fraction of N are annotated as candidate garbage.
    pub garbage_fraction: f64,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            alpha_level: 0.05,
            garbage_fraction: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub stage: Stage,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub dpmm: DpmmSettings,
    #[serde(default)]
    pub acoustics: AcousticConfig,
    #[serde(default)]
    pub report: ReportSettings,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file; relative paths resolve against its directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.spectral.validate().map_err(wrap)?;
        self.embedding.validate().map_err(wrap)?;
        self.acoustics.validate()?;
        self.dpmm.chain().validate()?;
        if !(self.dpmm.k_target > 1.0) {
            return Err(Error::Config("dpmm.k_target must exceed 1".into()));
        }
        if let Some(a) = self.dpmm.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config("dpmm.alpha must be positive".into()));
            }
        }
        if !(self.report.alpha_level > 0.0 && self.report.alpha_level < 1.0) {
            return Err(Error::Config("report.alpha_level must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.report.garbage_fraction) {
            return Err(Error::Config("report.garbage_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A clip left out of the analysis, with the stage that rejected it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipRecord {
    pub id: String,
    pub stage: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FeatureStage {
    pub features: Vec<FeatureVector>,
    pub skipped: Vec<SkipRecord>,
    pub pca_spectrogram: PcaModel,
    pub pca_embedding: PcaModel,
}

#[derive(Debug, Clone)]
pub struct ClusterStage {
    pub alpha: f64,
    /// Point-estimate labels, cluster 0 the largest.
    pub labels: Vec<u32>,
    pub partition: Partition,
    pub vi_loss: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone)]
pub struct ClusterReport {
    pub ids: Vec<String>,
    /// Cluster of each clip, aligned with `ids`.
    pub labels: Vec<u32>,
    pub table_counts: Vec<corpus::MonthCounts>,
    pub table_cluster_by_month: ProportionTable,
    pub table_month_by_cluster: ProportionTable,
    pub table_medians: Vec<ClusterMedians>,
    pub garbage: Vec<u32>,
    pub contrasts: Vec<ContrastSummary>,
    pub figure: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub features: Option<FeatureStage>,
    pub cluster: Option<ClusterStage>,
    pub report: Option<ClusterReport>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn run(cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let out = &cfg.output_dir;
    let manifest = || Manifest::from_path(&cfg.manifest).map_err(|e| e.in_stage("corpus", None));
    let read_features = || -> Result<Vec<FeatureVector>> {
        let f = File::open(out.join("features.csv"))?;
        features::read_features_csv(f)
    };
    let mut result = RunOutput::default();

    let feats = match cfg.stage {
        Stage::All | Stage::FeaturesOnly => {
            let m = manifest()?;
            let stage = extract_features(&m, cfg)?;
            let feats = stage.features.clone();
            result.features = Some(stage);
            feats
        }
        Stage::ClusterOnly | Stage::ReportOnly => read_features().map_err(|e| e.in_stage("features", None))?,
    };
    if cfg.stage == Stage::FeaturesOnly {
        return Ok(result);
    }

    let partition = match cfg.stage {
        Stage::ReportOnly => read_partition(&out.join("partition.csv"), &feats).map_err(|e| e.in_stage("cluster", None))?,
        _ => {
            let c = cluster(&feats, cfg).map_err(|e| e.in_stage("cluster", None))?;
            let l = c.labels.clone();
            result.cluster = Some(c);
            l
        }
    };
    if cfg.stage == Stage::ClusterOnly {
        return Ok(result);
    }

    let m = manifest()?;
    result.report = Some(build_report(&m, &feats, &partition, cfg).map_err(|e| e.in_stage("report", None))?);
    Ok(result)
}

struct ClipDiagrams {
    mfcc: Vec<f64>,
    spectrogram: DiagramFeatures,
    embedding: DiagramFeatures,
}

fn clip_diagrams(clip: &AudioClip, cfg: &PipelineConfig) -> std::result::Result<ClipDiagrams, SkipRecord> {
    let skip = |stage: &'static str| {
        move |e: Error| SkipRecord {
            id: clip.id.clone(),
            stage,
            reason: e.to_string(),
        }
    };
    let spec = spectral::spectrogram(clip, &cfg.spectral).map_err(skip("spectral"))?;
    let mfcc = spectral::mfcc_mean(clip, &cfg.spectral).map_err(skip("spectral"))?;
    let emb = embedding::embed_signal(&clip.samples, clip.sample_rate, &cfg.embedding).map_err(skip("embedding"))?;
    let alpha = alpha_persistence(&emb.cloud, cfg.embedding.rng_seed).map_err(skip("persistence"))?;
    Ok(ClipDiagrams {
        mfcc,
        spectrogram: DiagramFeatures::from_diagram(&sublevel_cubical_persistence(&spec)),
        embedding: DiagramFeatures::from_diagram(&alpha),
    })
}

fn load_checked(entry: &ManifestEntry) -> std::result::Result<AudioClip, SkipRecord> {
    let skip = |reason: String| SkipRecord {
        id: entry.id.clone(),
        stage: "corpus",
        reason,
    };
    let clip = corpus::load_clip(&entry.path, entry).map_err(|e| skip(e.to_string()))?;
    if clip.duration_seconds() > MAX_DURATION_SECONDS {
        return Err(skip(format!(
            "duration {:.3} s exceeds {MAX_DURATION_SECONDS} s",
            clip.duration_seconds()
        )));
    }
    if clip.is_silent() {
        return Err(skip("clip is pure silence".into()));
    }
    Ok(clip)
}

/// Per-clip diagrams in parallel, then one PCA per diagram source. Clips
/// that fail anywhere are recorded in the skip log and left out.
pub fn extract_features(manifest: &Manifest, cfg: &PipelineConfig) -> Result<FeatureStage> {
    if manifest.entries.is_empty() {
        return Err(Error::Manifest("manifest has no entries".into()).in_stage("corpus", None));
    }
    let per_clip = par::map(&manifest.entries, |entry| {
        let clip = load_checked(entry)?;
        clip_diagrams(&clip, cfg).map(|d| (entry.id.clone(), entry.month, d))
    });
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for r in per_clip {
        match r {
            Ok(v) => ok.push(v),
            Err(s) => {
                log::warn!("skipping clip `{}` at {}: {}", s.id, s.stage, s.reason);
                skipped.push(s);
            }
        }
    }
    let stage_err = |e: Error| e.in_stage("features", None);
    if ok.len() < 2 {
        return Err(stage_err(Error::invalid(format!(
            "only {} clip(s) survived feature extraction",
            ok.len()
        ))));
    }
    let spec_rows: Vec<DiagramFeatures> = ok.iter().map(|(_, _, d)| d.spectrogram.clone()).collect();
    let emb_rows: Vec<DiagramFeatures> = ok.iter().map(|(_, _, d)| d.embedding.clone()).collect();
    let (pca_spectrogram, s_spec) = features::fit_persistent_variable(&spec_rows).map_err(stage_err)?;
    let (pca_embedding, s_emb) = features::fit_persistent_variable(&emb_rows).map_err(stage_err)?;

    let mut feats = Vec::with_capacity(ok.len());
    for (i, (id, month, d)) in ok.iter().enumerate() {
        match features::assemble(&d.mfcc, s_spec[i], s_emb[i], id, *month) {
            Ok(f) => feats.push(f),
            Err(e) => {
                log::warn!("skipping clip `{id}` at features: {e}");
                skipped.push(SkipRecord {
                    id: id.clone(),
                    stage: "features",
                    reason: e.to_string(),
                });
            }
        }
    }

    let out = &cfg.output_dir;
    (|| -> Result<()> {
        features::write_features_csv(create(out, "features.csv")?, &feats)?;
        write_skip_log(create(out, "skipped.csv")?, &skipped)?;
        let mut w = create(out, "pca.csv")?;
        writeln!(w, "source,kept_columns,pc1_ratio,pc2_ratio")?;
        for (name, m) in [("spectrogram", &pca_spectrogram), ("embedding", &pca_embedding)] {
            let r2 = m.all_ratios.get(1).copied().unwrap_or(0.0);
            writeln!(w, "{name},{},{:.6},{:.6}", m.kept.len(), m.explained_variance_ratio, r2)?;
        }
        w.flush()?;
        Ok(())
    })()
    .map_err(stage_err)?;
    log::info!("features: {} clip(s) kept, {} skipped", feats.len(), skipped.len());
    Ok(FeatureStage {
        features: feats,
        skipped,
        pca_spectrogram,
        pca_embedding,
    })
}

pub fn write_skip_log<W: Write>(out: W, rows: &[SkipRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "stage", "reason"])?;
    for r in rows {
        w.write_record([r.id.as_str(), r.stage, r.reason.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Labels numbered by decreasing block size (ties by first occurrence).
fn by_size(p: &Partition) -> Vec<u32> {
    let sizes = p.block_sizes();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut rank = vec![0u32; sizes.len()];
    for (r, &b) in order.iter().enumerate() {
        rank[b] = r as u32;
    }
    p.labels().iter().map(|&l| rank[l as usize]).collect()
}

pub fn cluster(feats: &[FeatureVector], cfg: &PipelineConfig) -> Result<ClusterStage> {
    let x: Vec<Vec<f64>> = feats.iter().map(|f| f.values().to_vec()).collect();
    let n = x.len();
    let alpha = match cfg.dpmm.alpha {
        Some(a) => a,
        None => {
            if cfg.dpmm.k_target >= n as f64 {
                return Err(Error::Config(format!(
                    "dpmm.k_target ({}) must be below the number of clips ({n})",
                    cfg.dpmm.k_target
                )));
            }
            dpmm::solve_alpha(n, cfg.dpmm.k_target)?
        }
    };
    log::info!("clustering {n} clips with alpha = {alpha:.6}");
    let priors = DpmmPriors::empirical(&x, alpha)?;
    let chain = dpmm::run_chain(&x, &priors, &cfg.dpmm.chain())?;
    let (point, vi_loss) = dpmm::vi_point_estimate(&chain.samples)?;
    let labels = by_size(&point);
    let sim = dpmm::posterior_similarity(&chain.samples)?;

    let out = &cfg.output_dir;
    dpmm::write_trace_csv(create(out, "chain_trace.csv")?, &chain.trace)?;
    dpmm::write_run_length(create(out, "samples.rle")?, &chain.samples)?;
    let mut w = create(out, "similarity.bin")?;
    for v in &sim {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    write_partition(create(out, "partition.csv")?, feats, &labels)?;
    let mut w = create(out, "cluster_summary.csv")?;
    writeln!(w, "n,alpha,samples,k,vi_loss")?;
    writeln!(
        w,
        "{n},{alpha:.10},{},{},{vi_loss:.10}",
        chain.samples.len(),
        point.num_blocks()
    )?;
    w.flush()?;
    log::info!("point estimate has {} clusters (expected VI loss {vi_loss:.4})", point.num_blocks());
    Ok(ClusterStage {
        alpha,
        labels,
        partition: point,
        vi_loss,
        n_samples: chain.samples.len(),
    })
}

fn write_partition<W: Write>(out: W, feats: &[FeatureVector], labels: &[u32]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "month", "cluster"])?;
    for (f, l) in feats.iter().zip(labels) {
        w.write_record([f.id.clone(), f.month.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn read_partition(path: &Path, feats: &[FeatureVector]) -> Result<Vec<u32>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut by_id: HashMap<String, u32> = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        let l: u32 = rec[2]
            .parse()
            .map_err(|_| Error::invalid(format!("bad cluster label for `{}`", &rec[0])))?;
        by_id.insert(rec[0].to_owned(), l);
    }
    feats
        .iter()
        .map(|f| {
            by_id
                .get(&f.id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("clip `{}` missing from partition.csv", f.id)))
        })
        .collect()
}

pub fn build_report(
    manifest: &Manifest,
    feats: &[FeatureVector],
    labels: &[u32],
    cfg: &PipelineConfig,
) -> Result<ClusterReport> {
    if labels.len() != feats.len() {
        return Err(Error::invalid("partition and features differ in length"));
    }
    let out = &cfg.output_dir;
    let entries: HashMap<&str, &ManifestEntry> = manifest.entries.iter().map(|e| (e.id.as_str(), e)).collect();
    let months: Vec<u8> = feats.iter().map(|f| f.month).collect();

    let loaded = par::map(feats, |f| -> Option<(f64, Option<AcousticProfile>)> {
        let entry = entries.get(f.id.as_str())?;
        let clip = corpus::load_clip(&entry.path, entry).ok()?;
        let prof = match acoustics::profile(&clip, &cfg.acoustics) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("no acoustic profile for `{}`: {e}", f.id);
                None
            }
        };
        Some((clip.duration_seconds(), prof))
    });
    let mut durations = Vec::with_capacity(feats.len());
    let mut profiles = Vec::with_capacity(feats.len());
    for (f, l) in feats.iter().zip(loaded) {
        let (d, p) = l.ok_or_else(|| Error::invalid(format!("clip `{}` could not be reloaded", f.id)))?;
        durations.push(d);
        profiles.push(p);
    }

    let rows: Vec<(String, u32, AcousticProfile)> = feats
        .iter()
        .zip(labels)
        .zip(&profiles)
        .filter_map(|((f, &l), p)| p.clone().map(|p| (f.id.clone(), l, p)))
        .collect();
    acoustics::write_profiles_csv(create(out, "profiles.csv")?, &rows)?;

    // Clip-count table per month (population std).
    let stub: Vec<AudioClip> = feats
        .iter()
        .zip(&durations)
        .map(|(f, &d)| AudioClip {
            id: f.id.clone(),
            month: f.month,
            sample_rate: 1000,
            samples: vec![0.0; (d * 1000.0).round() as usize],
        })
        .collect();
    let table_counts = corpus::corpus_counts(&stub);
    let mut w = create(out, "table_counts.csv")?;
    writeln!(w, "month,count,mean_duration,std_duration")?;
    for c in &table_counts {
        writeln!(w, "{},{},{:.4},{:.4}", c.month, c.count, c.mean_duration, c.std_duration)?;
    }
    w.flush()?;

    let cbm = report::cluster_by_month(labels, &months);
    let mbc = report::month_by_cluster(labels, &months);
    cbm.write_csv(create(out, "table_cluster_by_month.csv")?)?;
    mbc.write_csv(create(out, "table_month_by_cluster.csv")?)?;
    let garbage = report::garbage_clusters(labels, cfg.report.garbage_fraction);
    for g in &garbage {
        log::warn!("cluster {g} is below {:.2}% of the corpus; annotated as candidate garbage", 100.0 * cfg.report.garbage_fraction);
    }
    let medians = report::median_table(labels, &profiles, &garbage);
    report::write_medians_csv(create(out, "table_medians.csv")?, &medians)?;
    let figure = report::emit_figure(&mbc);
    std::fs::write(out.join("figure.svg"), &figure)?;

    // Contrasts over the clips that have a profile.
    let names: Vec<String> = DESCRIPTOR_COLUMNS.iter().map(|s| s.to_string()).collect();
    let x = glm::impute_median(&rows.iter().map(|(_, _, p)| p.values().to_vec()).collect::<Vec<_>>());
    let y: Vec<u32> = rows.iter().map(|(_, l, _)| *l).collect();
    let distinct = y.iter().collect::<std::collections::BTreeSet<_>>().len();
    let fits = if distinct >= 2 {
        glm::fit_all_references(&x, &y, &names)?
    } else {
        log::warn!("a single cluster; no multinomial contrasts to fit");
        Vec::new()
    };
    glm::write_fits_csv(create(out, "glm_coefficients.csv")?, &fits)?;
    let contrasts = glm::contrast_report(&fits, cfg.report.alpha_level);
    let mut w = create(out, "contrasts.csv")?;
    writeln!(w, "reference,highlighted")?;
    for c in &contrasts {
        writeln!(w, "{},{}", c.reference, c.highlighted.join(";"))?;
    }
    w.flush()?;

    Ok(ClusterReport {
        ids: feats.iter().map(|f| f.id.clone()).collect(),
        labels: labels.to_vec(),
        table_counts,
        table_cluster_by_month: cbm,
        table_month_by_cluster: mbc,
        table_medians: medians,
        garbage,
        contrasts,
        figure,
    })
}
