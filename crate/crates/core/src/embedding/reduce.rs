//! Reduction of delay clouds to three dimensions.
//!
//! Clouds of dimension above three go through a neighbourhood-graph layout:
//! a k-nearest-neighbour graph with fuzzy membership weights, symmetrized by
//! probabilistic union, then laid out in 3-D by stochastic gradient descent
//! on the fuzzy cross-entropy with negative sampling (the UMAP procedure).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingConfig, PointCloud};
use crate::error::Result;
use crate::par;

const TARGET_DIM: usize = 3;
const NEGATIVE_SAMPLE_RATE: f64 = 5.0;
const INIT_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionMethod {
    Identity,
    ZeroPad,
    NeighborGraph,
    /// Too few points for the neighbour graph; top principal components used.
    PcaFallback,
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub cloud: PointCloud,
    pub method: ReductionMethod,
}

/// Keeps every `ceil(n / target)`-th point, starting from the first.
pub fn subsample(cloud: &PointCloud, target: usize) -> PointCloud {
    let n = cloud.len();
    if n <= target || target == 0 {
        return cloud.clone();
    }
    let stride = n.div_ceil(target);
    let coords: Vec<f64> = (0..n)
        .step_by(stride)
        .flat_map(|i| cloud.point(i).iter().copied())
        .collect();
    PointCloud::new(cloud.dim(), coords).expect("subsample of a valid cloud")
}

pub fn reduce_to_3d(cloud: &PointCloud, cfg: &EmbeddingConfig) -> Result<Reduction> {
    let dim = cloud.dim();
    if dim == TARGET_DIM {
        return Ok(Reduction {
            cloud: cloud.clone(),
            method: ReductionMethod::Identity,
        });
    }
    if dim < TARGET_DIM {
        let coords: Vec<f64> = cloud
            .points()
            .flat_map(|p| p.iter().copied().chain(std::iter::repeat_n(0.0, TARGET_DIM - dim)))
            .collect();
        return Ok(Reduction {
            cloud: PointCloud::new(TARGET_DIM, coords)?,
            method: ReductionMethod::ZeroPad,
        });
    }
    let cloud = subsample(cloud, cfg.subsample_target);
    if cloud.len() < cfg.reduce_neighbors + 1 {
        log::debug!(
            "{} points is too few for a {}-neighbour graph; projecting on principal axes",
            cloud.len(),
            cfg.reduce_neighbors
        );
        return Ok(Reduction {
            cloud: pca_project(&cloud, TARGET_DIM),
            method: ReductionMethod::PcaFallback,
        });
    }
    let layout = neighbor_graph_layout(&cloud, cfg);
    Ok(Reduction {
        cloud: layout,
        method: ReductionMethod::NeighborGraph,
    })
}

/// Projection onto the top `k` principal axes (centred).
fn pca_project(cloud: &PointCloud, k: usize) -> PointCloud {
    let (n, d) = (cloud.len(), cloud.dim());
    let mut mean = vec![0.0; d];
    for p in cloud.points() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in cloud.points() {
        for a in 0..d {
            for b in 0..=a {
                cov[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut coords = Vec::with_capacity(n * k);
    for p in cloud.points() {
        for c in 0..k {
            if c < d {
                let axis = eig.eigenvectors.column(order[c]);
                // Fix the sign so the largest-magnitude loading is positive.
                let sign = axis
                    .iter()
                    .copied()
                    .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                    .map_or(1.0, f64::signum);
                coords.push(sign * (0..d).map(|j| (p[j] - mean[j]) * axis[j]).sum::<f64>());
            } else {
                coords.push(0.0);
            }
        }
    }
    PointCloud::new(k, coords).expect("projection of finite points is finite")
}

/// Least-squares fit of `1 / (1 + a x^(2b))` to the offset-exponential
/// membership curve defined by `min_dist` and `spread`.
pub fn fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // Gauss-Newton normal equations with Levenberg damping.
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let r = 1.0 / den - y;
            let ja = -p / (den * den);
            let jb = -a * p * 2.0 * x.ln() / (den * den);
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r;
            jtr[1] += jb * r;
        }
        jtj[1][0] = jtj[0][1];
        let mut improved = false;
        for _ in 0..30 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det == 0.0 {
                lambda *= 10.0;
                continue;
            }
            let da = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let db = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, nb) = (a + da, b + db);
            let c = if na > 0.0 && nb > 0.0 { sse(na, nb) } else { f64::INFINITY };
            if c < cost {
                let done = (cost - c) < 1e-15 * cost.max(1e-300);
                a = na;
                b = nb;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

struct Knn {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

fn knn(cloud: &PointCloud, k: usize) -> Knn {
    let n = cloud.len();
    let rows: Vec<Vec<(f64, usize)>> = par::map_range(n, |i| {
        let pi = cloud.point(i);
        let mut all: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = pi.iter().zip(cloud.point(j)).map(|(a, b)| (a - b).powi(2)).sum();
                (d2.sqrt(), j)
            })
            .collect();
        all.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all
    });
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        for (d, j) in row {
            indices.push(j);
            distances.push(d);
        }
    }
    Knn {
        k,
        indices,
        distances,
    }
}

/// Per-point (rho, sigma) so that the memberships sum to `log2(n_neighbors)`.
fn smooth_knn(dists: &[f64], target: f64) -> (f64, f64) {
    let rho = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
    let (mut lo, mut hi, mut mid) = (0.0, f64::INFINITY, 1.0);
    for _ in 0..64 {
        let s: f64 = dists.iter().map(|&d| (-(d - rho).max(0.0) / mid).exp()).sum();
        if (s - target).abs() < 1e-5 {
            break;
        }
        if s > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    (rho, mid.max(1e-3 * mean).max(f64::MIN_POSITIVE))
}

fn neighbor_graph_layout(cloud: &PointCloud, cfg: &EmbeddingConfig) -> PointCloud {
    let n = cloud.len();
    let k = cfg.reduce_neighbors.saturating_sub(1).clamp(1, n - 1);
    let graph = knn(cloud, k);
    let target = (cfg.reduce_neighbors as f64).log2();

    // Directed memberships, then fuzzy union w = a + b - ab.
    let mut directed = std::collections::BTreeMap::<(usize, usize), f64>::new();
    for i in 0..n {
        let dists = &graph.distances[i * graph.k..(i + 1) * graph.k];
        let (rho, sigma) = smooth_knn(dists, target);
        for (slot, &d) in dists.iter().enumerate() {
            let j = graph.indices[i * graph.k + slot];
            let w = (-(d - rho).max(0.0) / sigma).exp();
            directed.insert((i, j), w);
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (&(i, j), &w) in &directed {
        let back = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let sym = w + back - w * back;
        edges.push((i, j, sym));
        if back == 0.0 {
            edges.push((j, i, sym));
        }
    }
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let n_epochs = cfg.reduce_epochs.unwrap_or(if n <= 10_000 { 500 } else { 200 });
    let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    edges.retain(|e| e.2 >= max_w / n_epochs as f64);
    let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let epochs_per_neg: Vec<f64> = epochs_per_sample.iter().map(|e| e / NEGATIVE_SAMPLE_RATE).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_neg = epochs_per_neg.clone();

    let (a, b) = fit_ab(cfg.reduce_min_dist, 1.0);
    let mut y = initial_layout(cloud);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let clip = |v: f64| v.clamp(-4.0, 4.0);

    for epoch in 0..n_epochs {
        let lr = 1.0 - epoch as f64 / n_epochs as f64;
        let now = epoch as f64;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let d2 = dist2(&y, i, j);
            let coeff = if d2 > 0.0 {
                let pb = d2.powf(b);
                -2.0 * a * b * (pb / d2) / (a * pb + 1.0)
            } else {
                0.0
            };
            for c in 0..TARGET_DIM {
                let g = clip(coeff * (y[i * 3 + c] - y[j * 3 + c]));
                y[i * 3 + c] += g * lr;
                y[j * 3 + c] -= g * lr;
            }
            next_sample[e] += epochs_per_sample[e];

            let n_neg = ((now - next_neg[e]) / epochs_per_neg[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let kk = rng.random_range(0..n);
                if kk == i {
                    continue;
                }
                let d2 = dist2(&y, i, kk);
                let coeff = if d2 > 0.0 {
                    2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else {
                    0.0
                };
                for c in 0..TARGET_DIM {
                    let g = if coeff > 0.0 {
                        clip(coeff * (y[i * 3 + c] - y[kk * 3 + c]))
                    } else {
                        4.0
                    };
                    y[i * 3 + c] += g * lr;
                }
            }
            next_neg[e] += n_neg as f64 * epochs_per_neg[e];
        }
    }
    PointCloud::new(TARGET_DIM, y).expect("layout stays finite under clipped updates")
}

fn dist2(y: &[f64], i: usize, j: usize) -> f64 {
    (0..TARGET_DIM).map(|c| (y[i * 3 + c] - y[j * 3 + c]).powi(2)).sum()
}

/// Principal-axis initialization rescaled so the largest coordinate is 10.
fn initial_layout(cloud: &PointCloud) -> Vec<f64> {
    let proj = pca_project(cloud, TARGET_DIM);
    let max = proj.coords().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max > 0.0 { INIT_SCALE / max } else { 1.0 };
    proj.coords().iter().map(|v| v * scale).collect()
}
