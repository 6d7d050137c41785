//! Persistence diagrams of the spectrogram surface (cubical, sublevel) and of
//! the reduced delay cloud (alpha complex).

mod alpha;
mod cubical;
mod delaunay;
mod reduction;
mod union_find;

pub use alpha::{alpha_filtration, alpha_persistence, diagram_from_filtration, AlphaFiltration, AlphaSimplex};
pub use cubical::{sublevel_cubical_persistence, sublevel_grid_persistence};
pub use delaunay::{delaunay_tetrahedra, Point3};
pub use reduction::{persistence_pairs, FilteredSimplex};

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagramSource {
    Spectrogram,
    Embedding,
}

impl DiagramSource {
    pub fn max_dim(self) -> usize {
        match self {
            DiagramSource::Spectrogram => 1,
            DiagramSource::Embedding => 2,
        }
    }
}

impl fmt::Display for DiagramSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagramSource::Spectrogram => "spectrogram",
            DiagramSource::Embedding => "embedding",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramPoint {
    pub birth: f64,
    pub death: f64,
    pub dim: usize,
    /// Never dies in the filtration; `death` holds the cap.
    pub essential: bool,
}

impl DiagramPoint {
    pub fn lifetime(&self) -> f64 {
        self.death - self.birth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    pub points: Vec<DiagramPoint>,
    /// Finite value substituted for infinite deaths: the largest filtration value.
    pub cap_value: f64,
    /// Smallest filtration value of the object.
    pub min_value: f64,
    pub source: DiagramSource,
}

impl PersistenceDiagram {
    pub fn new(source: DiagramSource, min_value: f64, cap_value: f64) -> Self {
        PersistenceDiagram {
            points: Vec::new(),
            cap_value,
            min_value,
            source,
        }
    }

    pub fn in_dim(&self, dim: usize) -> impl Iterator<Item = &DiagramPoint> {
        self.points.iter().filter(move |p| p.dim == dim)
    }

    /// Lifetimes (death - birth) of the points in `dim`, capped deaths included.
    pub fn lifetimes(&self, dim: usize) -> Vec<f64> {
        self.in_dim(dim).map(DiagramPoint::lifetime).collect()
    }

    /// Checks birth <= death <= cap and the homology-dimension bound.
    pub fn check_invariants(&self) -> Result<(), String> {
        for p in &self.points {
            if !(p.birth <= p.death) {
                return Err(format!("birth {} exceeds death {}", p.birth, p.death));
            }
            if p.death > self.cap_value {
                return Err(format!("death {} above cap {}", p.death, self.cap_value));
            }
            if p.dim > self.source.max_dim() {
                return Err(format!("dimension {} not allowed for {}", p.dim, self.source));
            }
        }
        Ok(())
    }

    /// Sorts points by (dim, birth, death) for stable output.
    pub fn sort(&mut self) {
        self.points.sort_by(|a, b| {
            a.dim
                .cmp(&b.dim)
                .then(a.birth.total_cmp(&b.birth))
                .then(a.death.total_cmp(&b.death))
        });
    }
}
