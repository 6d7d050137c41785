//! Diagram vectorization, the per-source persistent variable, and the 14-D
//! feature vector.
//!
//! Capped essential points carry a finite death (the cap), so they count as
//! ordinary lifetimes here.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::persistence::{DiagramSource, PersistenceDiagram};

pub const N_MFCC: usize = 12;
pub const FEATURE_DIM: usize = N_MFCC + 2;
/// Descriptors computed for each homology dimension.
pub const PER_DIM: usize = 8;
pub const DESCRIPTOR_NAMES: [&str; PER_DIM] = [
    "entropy",
    "p_norm",
    "betti",
    "lifetime_count",
    "lifetime_mean",
    "lifetime_std",
    "lifetime_max",
    "lifetime_sum",
];
/// Column of the H0 lifetime sum in a flattened row; fixes the PC1 sign.
const H0_LIFETIME_SUM: usize = 7;

fn positive_lifetimes(d: &PersistenceDiagram, dim: usize) -> Vec<f64> {
    d.lifetimes(dim).into_iter().filter(|&l| l > 0.0).collect()
}

/// Shannon entropy (nats) of the normalized lifetimes in `dim`.
pub fn persistent_entropy(d: &PersistenceDiagram, dim: usize) -> f64 {
    let ls = positive_lifetimes(d, dim);
    if ls.len() < 2 {
        return 0.0;
    }
    let total: f64 = ls.iter().sum();
    -ls.iter()
        .map(|&l| {
            let q = l / total;
            q * q.ln()
        })
        .sum::<f64>()
}

pub fn diagram_p_norm(d: &PersistenceDiagram, dim: usize, p: f64) -> f64 {
    let s: f64 = d.lifetimes(dim).iter().map(|l| l.abs().powf(p)).sum();
    s.powf(1.0 / p)
}

/// Number of classes in `dim` alive at `r`: birth <= r < death.
pub fn persistent_betti(d: &PersistenceDiagram, dim: usize, r: f64) -> usize {
    d.in_dim(dim).filter(|p| p.birth <= r && r < p.death).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LifetimeStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub sum: f64,
}

pub fn lifetime_stats(d: &PersistenceDiagram, dim: usize) -> LifetimeStats {
    let ls = d.lifetimes(dim);
    if ls.is_empty() {
        return LifetimeStats::default();
    }
    let n = ls.len() as f64;
    let sum: f64 = ls.iter().sum();
    let mean = sum / n;
    let var = ls.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    LifetimeStats {
        count: ls.len(),
        mean,
        std: var.sqrt(),
        max: ls.iter().copied().fold(0.0, f64::max),
        sum,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimFeatures {
    pub entropy: f64,
    pub p_norm: f64,
    pub betti: usize,
    pub lifetimes: LifetimeStats,
}

impl DimFeatures {
    pub fn to_array(&self) -> [f64; PER_DIM] {
        let l = &self.lifetimes;
        [
            self.entropy,
            self.p_norm,
            self.betti as f64,
            l.count as f64,
            l.mean,
            l.std,
            l.max,
            l.sum,
        ]
    }
}

/// Descriptors for every homology dimension a source can carry.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagramFeatures {
    pub source: DiagramSource,
    pub dims: Vec<DimFeatures>,
}

impl DiagramFeatures {
    /// Betti numbers are taken at the midpoint of the filtration range.
    pub fn from_diagram(d: &PersistenceDiagram) -> Self {
        let r = 0.5 * (d.min_value + d.cap_value);
        let dims = (0..=d.source.max_dim())
            .map(|dim| DimFeatures {
                entropy: persistent_entropy(d, dim),
                p_norm: diagram_p_norm(d, dim, 2.0),
                betti: persistent_betti(d, dim, r),
                lifetimes: lifetime_stats(d, dim),
            })
            .collect();
        DiagramFeatures {
            source: d.source,
            dims,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.dims.iter().flat_map(|f| f.to_array()).collect()
    }
}

/// Standardization plus first principal axis over the kept columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Indices of the columns with nonzero variance.
    pub kept: Vec<usize>,
    /// Unit-norm PC1 over `kept`; empty when no column varies.
    pub axis: Vec<f64>,
    pub explained_variance_ratio: f64,
    /// Ratios of every component, largest first.
    pub all_ratios: Vec<f64>,
}

impl PcaModel {
    pub fn project(&self, row: &[f64]) -> f64 {
        self.kept
            .iter()
            .zip(&self.axis)
            .map(|(&c, a)| (row[c] - self.mean[c]) / self.scale[c] * a)
            .sum()
    }
}

/// Fits PC1 over standardized rows of one source and returns the model with
/// each row's projection.
pub fn fit_persistent_variable(rows: &[DiagramFeatures]) -> Result<(PcaModel, Vec<f64>)> {
    let flat: Vec<Vec<f64>> = rows.iter().map(DiagramFeatures::flatten).collect();
    fit_pc1(&flat)
}

pub fn fit_pc1(rows: &[Vec<f64>]) -> Result<(PcaModel, Vec<f64>)> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 rows, got {n}")));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("feature rows differ in length"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("diagram features".into()));
    }
    let mut mean = vec![0.0; p];
    let mut scale = vec![1.0; p];
    let mut kept = Vec::new();
    for c in 0..p {
        let m = rows.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / n as f64;
        mean[c] = m;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + m.abs()) {
            scale[c] = sd;
            kept.push(c);
        } else {
            log::warn!("feature column {c} has zero variance; dropped from PCA");
        }
    }
    if kept.is_empty() {
        log::warn!("no feature column varies; persistent variable is identically zero");
        let model = PcaModel {
            mean,
            scale,
            kept,
            axis: Vec::new(),
            explained_variance_ratio: 0.0,
            all_ratios: Vec::new(),
        };
        return Ok((model, vec![0.0; n]));
    }
    let q = kept.len();
    let z = DMatrix::from_fn(n, q, |i, j| {
        let c = kept[j];
        (rows[i][c] - mean[c]) / scale[c]
    });
    let cov = z.transpose() * &z / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = vals.iter().sum();
    let all_ratios: Vec<f64> = vals.iter().map(|v| v / total).collect();
    let mut axis: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();

    let anchor = kept
        .iter()
        .position(|&c| c == H0_LIFETIME_SUM)
        .filter(|&j| axis[j].abs() > 1e-12)
        .or_else(|| axis.iter().position(|a| a.abs() > 1e-12));
    if let Some(j) = anchor {
        if axis[j] < 0.0 {
            axis.iter_mut().for_each(|a| *a = -*a);
        }
    }
    let model = PcaModel {
        mean,
        scale,
        kept,
        axis,
        explained_variance_ratio: all_ratios[0],
        all_ratios,
    };
    let scores = rows.iter().map(|r| model.project(r)).collect();
    Ok((model, scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub id: String,
    pub month: u8,
    pub mfcc: [f64; N_MFCC],
    pub persvar_spectrogram: f64,
    pub persvar_embedding: f64,
}

impl FeatureVector {
    pub fn values(&self) -> [f64; FEATURE_DIM] {
        let mut v = [0.0; FEATURE_DIM];
        v[..N_MFCC].copy_from_slice(&self.mfcc);
        v[N_MFCC] = self.persvar_spectrogram;
        v[N_MFCC + 1] = self.persvar_embedding;
        v
    }
}

pub fn assemble(mfcc: &[f64], s_spec: f64, s_emb: f64, id: &str, month: u8) -> Result<FeatureVector> {
    if mfcc.len() != N_MFCC {
        return Err(Error::invalid(format!("expected {N_MFCC} MFCCs, got {}", mfcc.len())));
    }
    if mfcc.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("mfcc (clip {id})")));
    }
    if !s_spec.is_finite() {
        return Err(Error::NonFinite(format!("spectrogram persistent variable (clip {id})")));
    }
    if !s_emb.is_finite() {
        return Err(Error::NonFinite(format!("embedding persistent variable (clip {id})")));
    }
    let mut m = [0.0; N_MFCC];
    m.copy_from_slice(mfcc);
    Ok(FeatureVector {
        id: id.to_owned(),
        month,
        mfcc: m,
        persvar_spectrogram: s_spec,
        persvar_embedding: s_emb,
    })
}

pub fn feature_header() -> Vec<String> {
    let mut h = vec!["id".to_owned(), "month".to_owned()];
    h.extend((1..=N_MFCC).map(|k| format!("mfcc{k}")));
    h.push("pers_spec".into());
    h.push("pers_emb".into());
    h
}

pub fn write_features_csv<W: Write>(out: W, rows: &[FeatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(feature_header())?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.month.to_string()];
        rec.extend(r.values().iter().map(|v| format!("{v:.12e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_features_csv`].
pub fn read_features_csv<R: std::io::Read>(input: R) -> Result<Vec<FeatureVector>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != feature_header() {
        return Err(Error::invalid("features CSV header does not match the 14-column schema"));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::invalid(format!("features CSV row {}: bad {what}", line + 1));
        let month: u8 = rec[1].parse().map_err(|_| bad("month"))?;
        let vals: Vec<f64> = (2..2 + FEATURE_DIM)
            .map(|i| rec[i].parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<_>>()?;
        out.push(assemble(&vals[..N_MFCC], vals[N_MFCC], vals[N_MFCC + 1], &rec[0], month)?);
    }
    Ok(out)
}
