//! Topologically augmented clustering of short vocalization clips.
//!
//! Each clip is mapped to a 14-dimensional representation (twelve mean MFCCs
//! plus one synthetic persistent variable for each of two persistence
//! diagrams: the spectrogram surface under a sublevel filtration, and the
//! delay-embedded signal under an alpha filtration). The representations are
//! clustered with a Dirichlet-process Gaussian mixture sampled by collapsed
//! Gibbs, and clusters are profiled with acoustic descriptors and
//! multinomial-logit contrasts.

pub mod acoustics;
pub mod corpus;
pub mod dpmm;
pub mod embedding;
pub mod error;
pub mod features;
pub mod glm;
pub mod par;
pub mod persistence;
pub mod pipeline;
pub mod spectral;

pub use error::{Error, Result};
