//! Alpha-complex filtration on the Delaunay tetrahedralization.
//!
//! Filtration values are squared radii: a simplex enters at the squared radius
//! of its smallest circumscribing ball when that ball is empty of the
//! vertices of its cofaces, otherwise at the smallest value among its cofaces.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::delaunay::{delaunay_tetrahedra, Point3};
use super::reduction::{persistence_pairs, FilteredSimplex};
use super::{DiagramPoint, DiagramSource, PersistenceDiagram};
use crate::embedding::PointCloud;
use crate::error::{Error, Result};

/// Relative jitter magnitude applied before triangulating.
pub const JITTER: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSimplex {
    /// Sorted vertex indices.
    pub vertices: Vec<u32>,
    pub value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AlphaFiltration {
    pub vertices: usize,
    pub edges: Vec<AlphaSimplex>,
    pub triangles: Vec<AlphaSimplex>,
    pub tetrahedra: Vec<AlphaSimplex>,
}

impl AlphaFiltration {
    pub fn max_value(&self) -> f64 {
        self.edges
            .iter()
            .chain(&self.triangles)
            .chain(&self.tetrahedra)
            .map(|s| s.value)
            .fold(0.0, f64::max)
    }
}

fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dist2(a: &Point3, b: &Point3) -> f64 {
    let d = sub(a, b);
    dot(&d, &d)
}

/// Centre and squared radius of the smallest sphere through `pts` (2..=4 points).
fn smallest_sphere(pts: &[Point3]) -> (Point3, f64) {
    let a = pts[0];
    let centre = match pts.len() {
        2 => [(a[0] + pts[1][0]) / 2.0, (a[1] + pts[1][1]) / 2.0, (a[2] + pts[1][2]) / 2.0],
        3 => {
            let (u, v) = (sub(&pts[1], &a), sub(&pts[2], &a));
            let w = cross(&u, &v);
            let den = 2.0 * dot(&w, &w);
            let t1 = cross(&v, &w);
            let t2 = cross(&w, &u);
            let (uu, vv) = (dot(&u, &u), dot(&v, &v));
            [
                a[0] + (uu * t1[0] + vv * t2[0]) / den,
                a[1] + (uu * t1[1] + vv * t2[1]) / den,
                a[2] + (uu * t1[2] + vv * t2[2]) / den,
            ]
        }
        4 => {
            let (u, v, w) = (sub(&pts[1], &a), sub(&pts[2], &a), sub(&pts[3], &a));
            let vw = cross(&v, &w);
            let wu = cross(&w, &u);
            let uv = cross(&u, &v);
            let den = 2.0 * dot(&u, &vw);
            let (uu, vv, ww) = (dot(&u, &u), dot(&v, &v), dot(&w, &w));
            [
                a[0] + (uu * vw[0] + vv * wu[0] + ww * uv[0]) / den,
                a[1] + (uu * vw[1] + vv * wu[1] + ww * uv[1]) / den,
                a[2] + (uu * vw[2] + vv * wu[2] + ww * uv[2]) / den,
            ]
        }
        _ => unreachable!("simplex of unsupported size"),
    };
    (centre, dist2(&centre, &a))
}

/// Alpha filtration of distinct points. Four or more points must span 3-D.
pub fn alpha_filtration(points: &[Point3]) -> AlphaFiltration {
    let n = points.len();
    let mut filt = AlphaFiltration {
        vertices: n,
        ..AlphaFiltration::default()
    };
    if n < 2 {
        return filt;
    }
    let tets: Vec<[u32; 4]> = if n >= 4 { delaunay_tetrahedra(points) } else { Vec::new() };

    let mut tri_index: HashMap<[u32; 3], usize> = HashMap::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut tri_cofaces: Vec<Vec<(usize, u32)>> = Vec::new();
    let mut tet_values = Vec::with_capacity(tets.len());
    for (ti, t) in tets.iter().enumerate() {
        let pts: Vec<Point3> = t.iter().map(|&v| points[v as usize]).collect();
        tet_values.push(smallest_sphere(&pts).1);
        for k in 0..4 {
            let f: [u32; 3] = match k {
                0 => [t[1], t[2], t[3]],
                1 => [t[0], t[2], t[3]],
                2 => [t[0], t[1], t[3]],
                _ => [t[0], t[1], t[2]],
            };
            let idx = *tri_index.entry(f).or_insert_with(|| {
                triangles.push(f);
                tri_cofaces.push(Vec::new());
                triangles.len() - 1
            });
            tri_cofaces[idx].push((ti, t[k]));
        }
    }
    if n == 3 {
        triangles.push([0, 1, 2]);
        tri_cofaces.push(Vec::new());
    }
    // Flat slivers can overflow; give them the largest finite tet value.
    let finite_max = tet_values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    for v in &mut tet_values {
        if !v.is_finite() {
            *v = finite_max;
        }
    }

    let attached_value = |verts: &[u32], cofaces: &[(usize, u32)], values: &[f64]| -> f64 {
        let pts: Vec<Point3> = verts.iter().map(|&v| points[v as usize]).collect();
        let (centre, r2) = smallest_sphere(&pts);
        let attached = cofaces
            .iter()
            .any(|&(_, opp)| dist2(&centre, &points[opp as usize]) < r2);
        let coface_min = cofaces.iter().map(|&(c, _)| values[c]).fold(f64::INFINITY, f64::min);
        if attached || !r2.is_finite() {
            coface_min
        } else {
            r2.min(coface_min)
        }
    };

    let tri_values: Vec<f64> = triangles
        .iter()
        .zip(&tri_cofaces)
        .map(|(t, cof)| attached_value(t, cof, &tet_values))
        .collect();

    let mut edge_index: HashMap<[u32; 2], usize> = HashMap::new();
    let mut edges: Vec<[u32; 2]> = Vec::new();
    let mut edge_cofaces: Vec<Vec<(usize, u32)>> = Vec::new();
    for (ti, t) in triangles.iter().enumerate() {
        for (e, opp) in [([t[1], t[2]], t[0]), ([t[0], t[2]], t[1]), ([t[0], t[1]], t[2])] {
            let idx = *edge_index.entry(e).or_insert_with(|| {
                edges.push(e);
                edge_cofaces.push(Vec::new());
                edges.len() - 1
            });
            edge_cofaces[idx].push((ti, opp));
        }
    }
    if n == 2 {
        edges.push([0, 1]);
        edge_cofaces.push(Vec::new());
    }
    let edge_values: Vec<f64> = edges
        .iter()
        .zip(&edge_cofaces)
        .map(|(e, cof)| attached_value(e, cof, &tri_values))
        .collect();

    filt.edges = edges
        .iter()
        .zip(edge_values)
        .map(|(e, value)| AlphaSimplex {
            vertices: e.to_vec(),
            value,
        })
        .collect();
    filt.triangles = triangles
        .iter()
        .zip(tri_values)
        .map(|(t, value)| AlphaSimplex {
            vertices: t.to_vec(),
            value,
        })
        .collect();
    filt.tetrahedra = tets
        .iter()
        .zip(tet_values)
        .map(|(t, value)| AlphaSimplex {
            vertices: t.to_vec(),
            value,
        })
        .collect();
    filt
}

/// Alpha persistence (H0, H1, H2) of a 3-D cloud. Exact duplicates are
/// merged, then coordinates get a seeded jitter of `JITTER * diameter`.
pub fn alpha_persistence(cloud: &PointCloud, seed: u64) -> Result<PersistenceDiagram> {
    if cloud.dim() != 3 {
        return Err(Error::invalid(format!("alpha persistence needs 3-D points, got {}", cloud.dim())));
    }
    let mut pts: Vec<Point3> = cloud.points().map(|p| [p[0], p[1], p[2]]).collect();
    pts.sort_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    pts.dedup();
    if pts.len() == 1 {
        if cloud.len() > 1 {
            log::warn!("all {} points coincide; alpha diagram is a single class", cloud.len());
        }
        let mut d = PersistenceDiagram::new(DiagramSource::Embedding, 0.0, 0.0);
        d.points.push(DiagramPoint {
            birth: 0.0,
            death: 0.0,
            dim: 0,
            essential: true,
        });
        return Ok(d);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &pts {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diameter = dist2(&lo, &hi).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = JITTER * diameter;
    for p in &mut pts {
        for c in p.iter_mut() {
            *c += rng.random_range(-amp..=amp);
        }
    }
    let filt = alpha_filtration(&pts);
    Ok(diagram_from_filtration(&filt))
}

/// Persistence of an alpha filtration, with no jitter applied.
pub fn diagram_from_filtration(filt: &AlphaFiltration) -> PersistenceDiagram {
    let n = filt.vertices;
    let mut cells: Vec<FilteredSimplex> = (0..n)
        .map(|_| FilteredSimplex {
            dim: 0,
            value: 0.0,
            boundary: Vec::new(),
        })
        .collect();
    let mut edge_pos: HashMap<&[u32], usize> = HashMap::new();
    for e in &filt.edges {
        edge_pos.insert(&e.vertices, cells.len());
        cells.push(FilteredSimplex {
            dim: 1,
            value: e.value,
            boundary: e.vertices.iter().map(|&v| v as usize).collect(),
        });
    }
    let mut tri_pos: HashMap<&[u32], usize> = HashMap::new();
    for t in &filt.triangles {
        let v = &t.vertices;
        let boundary = [[v[1], v[2]], [v[0], v[2]], [v[0], v[1]]]
            .iter()
            .map(|e| edge_pos[&e[..]])
            .collect();
        tri_pos.insert(v, cells.len());
        cells.push(FilteredSimplex {
            dim: 2,
            value: t.value,
            boundary,
        });
    }
    for t in &filt.tetrahedra {
        let v = &t.vertices;
        let boundary = [
            [v[1], v[2], v[3]],
            [v[0], v[2], v[3]],
            [v[0], v[1], v[3]],
            [v[0], v[1], v[2]],
        ]
        .iter()
        .map(|f| tri_pos[&f[..]])
        .collect();
        cells.push(FilteredSimplex {
            dim: 3,
            value: t.value,
            boundary,
        });
    }
    let cap = filt.max_value();
    let mut diagram = PersistenceDiagram::new(DiagramSource::Embedding, 0.0, cap);
    for (dim, birth, death) in persistence_pairs(&cells) {
        if dim > 2 {
            continue;
        }
        match death {
            Some(d) if d > birth => diagram.points.push(DiagramPoint {
                birth,
                death: d,
                dim,
                essential: false,
            }),
            Some(_) => {}
            None => diagram.points.push(DiagramPoint {
                birth,
                death: cap,
                dim,
                essential: true,
            }),
        }
    }
    diagram.sort();
    diagram
}
