//! Delay-coordinate reconstruction of a clip and its reduction to a 3-D cloud.

mod ami;
mod cao;
mod reduce;
mod takens;

pub use ami::{average_mutual_information, select_delay, DelaySelection, AMI_THRESHOLD};
pub use cao::{cao_embedding_dimension, cao_statistics, CaoResult};
pub use reduce::{fit_ab, reduce_to_3d, subsample, Reduction, ReductionMethod};
pub use takens::{takens_embed, PointCloud};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Histogram bins per axis for the mutual-information estimate.
    pub ami_bins: usize,
    /// Upper bound on the searched delay, in samples. `None` uses
    /// `min(len / 4, round(tau_max_seconds * sample_rate))`. Either way the
    /// bound never exceeds what Cao's statistics can use at `cao_dmax`.
    pub tau_max: Option<usize>,
    pub tau_max_seconds: f64,
    pub cao_threshold: f64,
    pub cao_min_e1: f64,
    pub cao_dmax: usize,
    /// Number of reference delay vectors used by Cao's statistics.
    pub cao_max_points: usize,
    pub subsample_target: usize,
    pub reduce_neighbors: usize,
    pub reduce_min_dist: f64,
    pub reduce_epochs: Option<usize>,
    pub rng_seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            ami_bins: 64,
            tau_max: None,
            tau_max_seconds: 0.05,
            cao_threshold: 0.05,
            cao_min_e1: 0.8,
            cao_dmax: 20,
            cao_max_points: 2000,
            subsample_target: 2000,
            reduce_neighbors: 15,
            reduce_min_dist: 0.1,
            reduce_epochs: None,
            rng_seed: 0x5eed,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ami_bins < 2 {
            return Err(Error::invalid("ami_bins must be at least 2"));
        }
        for (name, v) in [
            ("cao_threshold", self.cao_threshold),
            ("cao_min_e1", self.cao_min_e1),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.cao_dmax < 2 {
            return Err(Error::invalid("cao_dmax must be at least 2"));
        }
        if self.cao_max_points < 3 || self.subsample_target < 1 || self.reduce_neighbors < 2 {
            return Err(Error::invalid("point budgets and neighbour count are too small"));
        }
        if self.reduce_min_dist < 0.0 {
            return Err(Error::invalid("reduce_min_dist must be nonnegative"));
        }
        Ok(())
    }

    pub fn tau_max_for(&self, len: usize, sample_rate: u32) -> usize {
        let t = self.tau_max.unwrap_or_else(|| {
            (len / 4).min((self.tau_max_seconds * sample_rate as f64).round() as usize)
        });
        t.min(len.saturating_sub(3) / (self.cao_dmax + 1))
    }
}

/// Everything learned while reconstructing one clip.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub tau: usize,
    pub dim: usize,
    pub tau_fallback: bool,
    pub dim_fallback: bool,
    pub reduction: ReductionMethod,
    pub cloud: PointCloud,
}

/// Delay selection, Cao dimension, Takens embedding, stride subsampling and
/// reduction to three dimensions.
pub fn embed_signal(x: &[f64], sample_rate: u32, cfg: &EmbeddingConfig) -> Result<Embedding> {
    cfg.validate()?;
    let tau_max = cfg.tau_max_for(x.len(), sample_rate).max(1);
    let delay = select_delay(x, tau_max, cfg.ami_bins)?;
    let cao = cao_embedding_dimension(x, delay.tau, cfg)?;
    let full = takens_embed(x, delay.tau, cao.dim)?;
    let cloud = subsample(&full, cfg.subsample_target);
    let reduced = reduce_to_3d(&cloud, cfg)?;
    Ok(Embedding {
        tau: delay.tau,
        dim: cao.dim,
        tau_fallback: delay.fallback,
        dim_fallback: cao.fallback,
        reduction: reduced.method,
        cloud: reduced.cloud,
    })
}
