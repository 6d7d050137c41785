//! Sublevel persistence of a function on a 2-D grid.
//!
//! Vertex-based (lower-star) cubical complex with 4-connectivity: vertices are
//! grid cells, edges join horizontal/vertical neighbours, squares are 2x2
//! blocks, and every cell takes the maximum of its vertex values. H0 comes from
//! a union-find sweep over edges in increasing order (elder rule). H1 comes
//! from the dual sweep: squares plus one outer cell, joined across edges in
//! decreasing order. Each dual merge is a primal cycle born at that edge and
//! killed by the younger component's highest square.

use super::union_find::UnionFind;
use super::{DiagramPoint, DiagramSource, PersistenceDiagram};
use crate::spectral::Spectrogram;

pub fn sublevel_cubical_persistence(spec: &Spectrogram) -> PersistenceDiagram {
    sublevel_grid_persistence(&spec.values, spec.n_frames, spec.n_bins)
}

/// Row-major `rows x cols` grid. Zero-persistence pairs are dropped; the one
/// essential H0 class is kept with death equal to the grid maximum.
pub fn sublevel_grid_persistence(values: &[f64], rows: usize, cols: usize) -> PersistenceDiagram {
    assert_eq!(values.len(), rows * cols, "grid shape mismatch");
    assert!(!values.is_empty(), "empty grid");
    let cap = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut diagram = PersistenceDiagram::new(DiagramSource::Spectrogram, min, cap);

    let n_h = rows * cols.saturating_sub(1);
    let n_v = rows.saturating_sub(1) * cols;
    let endpoints = |e: usize| -> (usize, usize) {
        if e < n_h {
            let (r, c) = (e / (cols - 1), e % (cols - 1));
            (r * cols + c, r * cols + c + 1)
        } else {
            let k = e - n_h;
            (k, k + cols)
        }
    };
    let edge_value = |e: usize| {
        let (u, v) = endpoints(e);
        values[u].max(values[v])
    };
    let mut order: Vec<u32> = (0..(n_h + n_v) as u32).collect();
    let keys: Vec<f64> = (0..n_h + n_v).map(edge_value).collect();
    order.sort_unstable_by(|&a, &b| keys[a as usize].total_cmp(&keys[b as usize]).then(a.cmp(&b)));

    // H0: each root is the elder (smallest (value, index)) vertex of its component.
    let vkey = |v: u32| (values[v as usize], v);
    let older = |a: u32, b: u32| {
        let (ka, kb) = (vkey(a), vkey(b));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).is_lt()
    };
    let mut uf = UnionFind::new(rows * cols);
    for &e in &order {
        let (u, v) = endpoints(e as usize);
        let (ru, rv) = (uf.find(u as u32), uf.find(v as u32));
        if ru == rv {
            continue;
        }
        let (keep, die) = if older(ru, rv) { (ru, rv) } else { (rv, ru) };
        let birth = values[die as usize];
        let death = keys[e as usize];
        if death > birth {
            diagram.points.push(DiagramPoint {
                birth,
                death,
                dim: 0,
                essential: false,
            });
        }
        uf.attach(die, keep);
    }
    diagram.points.push(DiagramPoint {
        birth: min,
        death: cap,
        dim: 0,
        essential: true,
    });

    // H1 via the dual graph.
    if rows >= 2 && cols >= 2 {
        let sq_cols = cols - 1;
        let n_sq = (rows - 1) * sq_cols;
        let outer = n_sq as u32;
        let sq_value: Vec<f64> = (0..n_sq)
            .map(|s| {
                let (r, c) = (s / sq_cols, s % sq_cols);
                let tl = r * cols + c;
                values[tl]
                    .max(values[tl + 1])
                    .max(values[tl + cols])
                    .max(values[tl + cols + 1])
            })
            .collect();
        // Dual roots are the highest square of their component; the outer cell
        // is highest of all.
        let higher = |a: u32, b: u32| -> bool {
            if a == outer {
                return true;
            }
            if b == outer {
                return false;
            }
            sq_value[a as usize]
                .total_cmp(&sq_value[b as usize])
                .then(a.cmp(&b))
                .is_gt()
        };
        let adjacent = |e: usize| -> (u32, u32) {
            if e < n_h {
                let (r, c) = (e / (cols - 1), e % (cols - 1));
                let above = if r >= 1 { (r - 1) * sq_cols + c } else { n_sq };
                let below = if r + 1 < rows { r * sq_cols + c } else { n_sq };
                (above as u32, below as u32)
            } else {
                let k = e - n_h;
                let (r, c) = (k / cols, k % cols);
                let left = if c >= 1 { r * sq_cols + c - 1 } else { n_sq };
                let right = if c + 1 < cols { r * sq_cols + c } else { n_sq };
                (left as u32, right as u32)
            }
        };
        let mut duf = UnionFind::new(n_sq + 1);
        for &e in order.iter().rev() {
            let (a, b) = adjacent(e as usize);
            let (ra, rb) = (duf.find(a), duf.find(b));
            if ra == rb {
                continue;
            }
            let (keep, die) = if higher(ra, rb) { (ra, rb) } else { (rb, ra) };
            let birth = keys[e as usize];
            let death = sq_value[die as usize];
            if death > birth {
                diagram.points.push(DiagramPoint {
                    birth,
                    death,
                    dim: 1,
                    essential: false,
                });
            }
            duf.attach(die, keep);
        }
    }
    diagram.sort();
    diagram
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persistence::reduction::{persistence_pairs, FilteredSimplex};
    use rand::{Rng, SeedableRng};

    /// Full cubical complex + boundary-matrix reduction, no duality tricks.
    fn oracle(values: &[f64], rows: usize, cols: usize) -> Vec<(usize, f64, f64)> {
        let mut cells: Vec<(Vec<usize>, f64, usize)> = Vec::new(); // (vertices, value, dim)
        for v in 0..rows * cols {
            cells.push((vec![v], values[v], 0));
        }
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    cells.push((vec![v, v + 1], values[v].max(values[v + 1]), 1));
                }
                if r + 1 < rows {
                    cells.push((vec![v, v + cols], values[v].max(values[v + cols]), 1));
                }
            }
        }
        for r in 0..rows.saturating_sub(1) {
            for c in 0..cols.saturating_sub(1) {
                let v = r * cols + c;
                let vs = vec![v, v + 1, v + cols, v + cols + 1];
                let val = vs.iter().map(|&u| values[u]).fold(f64::NEG_INFINITY, f64::max);
                cells.push((vs, val, 2));
            }
        }
        let edge_id = |a: usize, b: usize, cells: &[(Vec<usize>, f64, usize)]| {
            cells
                .iter()
                .position(|(vs, _, d)| *d == 1 && vs.contains(&a) && vs.contains(&b))
                .unwrap()
        };
        let boundaries: Vec<Vec<usize>> = cells
            .iter()
            .map(|(vs, _, d)| match d {
                0 => vec![],
                1 => vs.clone(),
                _ => {
                    let (a, b, c, d) = (vs[0], vs[1], vs[2], vs[3]);
                    vec![
                        edge_id(a, b, &cells),
                        edge_id(c, d, &cells),
                        edge_id(a, c, &cells),
                        edge_id(b, d, &cells),
                    ]
                }
            })
            .collect();
        let simplices: Vec<FilteredSimplex> = cells
            .iter()
            .zip(boundaries)
            .map(|((_, value, dim), boundary)| FilteredSimplex {
                dim: *dim,
                value: *value,
                boundary,
            })
            .collect();
        let cap = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<(usize, f64, f64)> = persistence_pairs(&simplices)
            .into_iter()
            .map(|(dim, b, d)| (dim, b, d.unwrap_or(cap)))
            .filter(|&(_, b, d)| d > b)
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    fn finite_pairs(d: &PersistenceDiagram) -> Vec<(usize, f64, f64)> {
        let mut v: Vec<_> = d
            .points
            .iter()
            .filter(|p| p.death > p.birth)
            .map(|p| (p.dim, p.birth, p.death))
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn constant_grid() {
        let d = sublevel_grid_persistence(&[3.0; 12], 3, 4);
        assert_eq!(d.points.len(), 1);
        assert_eq!((d.points[0].birth, d.points[0].death, d.points[0].dim), (3.0, 3.0, 0));
        assert!(d.points[0].essential);
    }

    #[test]
    fn two_basins_merge_at_saddle() {
        let d = sublevel_grid_persistence(&[1.0, 5.0, 2.0], 1, 3);
        let pts: Vec<(f64, f64)> = d.points.iter().map(|p| (p.birth, p.death)).collect();
        assert_eq!(pts, vec![(1.0, 5.0), (2.0, 5.0)]);
        assert_eq!(d.cap_value, 5.0);
    }

    #[test]
    fn ring_around_plug() {
        // A background strip of zeros on top, then a ring of ones around a 2x2 plug.
        let mut g = vec![1.0; 5 * 4];
        g[..4].fill(0.0);
        for (r, c) in [(2, 1), (2, 2), (3, 1), (3, 2)] {
            g[r * 4 + c] = 9.0;
        }
        let d = sublevel_grid_persistence(&g, 5, 4);
        let h1: Vec<(f64, f64)> = d.in_dim(1).map(|p| (p.birth, p.death)).collect();
        assert_eq!(h1, vec![(1.0, 9.0)]);
    }

    #[test]
    fn matches_boundary_reduction_on_random_grids() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let (rows, cols) = (rng.random_range(1..8), rng.random_range(1..8));
            let values: Vec<f64> = if trial % 2 == 0 {
                (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect()
            } else {
                // Integer values exercise ties.
                (0..rows * cols).map(|_| rng.random_range(0..4) as f64).collect()
            };
            let d = sublevel_grid_persistence(&values, rows, cols);
            d.check_invariants().unwrap();
            assert_eq!(finite_pairs(&d), oracle(&values, rows, cols), "trial {trial}");
        }
    }
}
