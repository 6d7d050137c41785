//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

/// Sublevel H0 of a 4-connected grid by flood fill at every distinct level.
/// Returns finite (birth, death) pairs with positive persistence plus the
/// single essential birth.
pub fn flood_fill_h0(values: &[f64], rows: usize, cols: usize) -> (Vec<(f64, f64)>, f64) {
    let mut levels = values.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    // Birth of the component each cell belonged to at the previous level.
    let mut owner: Vec<Option<usize>> = vec![None; values.len()];
    let mut births: Vec<f64> = Vec::new();
    let mut pairs = Vec::new();
    for &t in &levels {
        let mut seen = vec![false; values.len()];
        let mut next_owner = vec![None; values.len()];
        for start in 0..values.len() {
            if seen[start] || values[start] > t {
                continue;
            }
            let mut stack = vec![start];
            let mut members = Vec::new();
            seen[start] = true;
            while let Some(c) = stack.pop() {
                members.push(c);
                let (r, k) = (c / cols, c % cols);
                let mut nb = Vec::with_capacity(4);
                if r > 0 {
                    nb.push(c - cols);
                }
                if r + 1 < rows {
                    nb.push(c + cols);
                }
                if k > 0 {
                    nb.push(c - 1);
                }
                if k + 1 < cols {
                    nb.push(c + 1);
                }
                for n in nb {
                    if !seen[n] && values[n] <= t {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
            let mut old: Vec<usize> = members.iter().filter_map(|&m| owner[m]).collect();
            old.sort_unstable();
            old.dedup();
            let id = if old.is_empty() {
                births.push(t);
                births.len() - 1
            } else {
                // Elder rule: the oldest component survives.
                let elder = *old.iter().min_by(|&&a, &&b| births[a].total_cmp(&births[b])).unwrap();
                for &o in &old {
                    if o != elder && births[o] < t {
                        pairs.push((births[o], t));
                    }
                }
                elder
            };
            for m in members {
                next_owner[m] = Some(id);
            }
        }
        owner = next_owner;
    }
    let essential = levels[0];
    (pairs, essential)
}

/// Prim's minimum spanning tree; returns the edge lengths.
pub fn mst_lengths(points: &[[f64; 3]]) -> Vec<f64> {
    let n = points.len();
    let d = |a: usize, b: usize| {
        let p = points[a];
        let q = points[b];
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    };
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n {
        let u = (0..n)
            .filter(|&i| !in_tree[i])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .unwrap();
        in_tree[u] = true;
        if step > 0 {
            out.push(best[u]);
        }
        for v in 0..n {
            if !in_tree[v] {
                best[v] = best[v].min(d(u, v));
            }
        }
    }
    out
}

/// Bottleneck distance between two finite diagrams under the L-infinity
/// ground metric, with points free to match the diagonal.
pub fn bottleneck(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let linf = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).abs().max((p.1 - q.1).abs());
    let half = |p: (f64, f64)| 0.5 * (p.1 - p.0);
    let mut candidates: Vec<f64> = vec![0.0];
    candidates.extend(a.iter().map(|&p| half(p)));
    candidates.extend(b.iter().map(|&p| half(p)));
    for &p in a {
        candidates.extend(b.iter().map(|&q| linf(p, q)));
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching(a, b, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// Left: a's points then diagonal slots for b. Right: b's points then
/// diagonal slots for a.
fn perfect_matching(a: &[(f64, f64)], b: &[(f64, f64)], delta: f64) -> bool {
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let linf = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).abs().max((p.1 - q.1).abs());
    let half = |p: (f64, f64)| 0.5 * (p.1 - p.0);
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|l| {
            if l < na {
                let mut v: Vec<usize> = (0..nb).filter(|&r| linf(a[l], b[r]) <= delta).collect();
                if half(a[l]) <= delta {
                    v.push(nb + l);
                }
                v
            } else {
                let j = l - na;
                let mut v = Vec::new();
                if half(b[j]) <= delta {
                    v.push(j);
                }
                v.extend(nb..nb + na);
                v
            }
        })
        .collect();
    let mut matched: Vec<Option<usize>> = vec![None; n];
    fn augment(l: usize, adj: &[Vec<usize>], seen: &mut [bool], matched: &mut [Option<usize>]) -> bool {
        for &r in &adj[l] {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            if matched[r].is_none() || augment(matched[r].unwrap(), adj, seen, matched) {
                matched[r] = Some(l);
                return true;
            }
        }
        false
    }
    (0..n).all(|l| augment(l, &adj, &mut vec![false; n], &mut matched))
}

/// x-coordinate of the Lorenz system (sigma 10, rho 28, beta 8/3) by RK4,
/// after discarding `skip` transient steps.
pub fn lorenz(n: usize, dt: f64, skip: usize) -> Vec<f64> {
    let f = |s: [f64; 3]| {
        [
            10.0 * (s[1] - s[0]),
            s[0] * (28.0 - s[2]) - s[1],
            s[0] * s[1] - 8.0 / 3.0 * s[2],
        ]
    };
    let mut s = [1.0, 1.0, 1.0];
    let mut out = Vec::with_capacity(n);
    for i in 0..n + skip {
        let step = |k: [f64; 3], h: f64| [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]];
        let k1 = f(s);
        let k2 = f(step(k1, dt / 2.0));
        let k3 = f(step(k2, dt / 2.0));
        let k4 = f(step(k3, dt));
        for j in 0..3 {
            s[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if i >= skip {
            out.push(s[0]);
        }
    }
    out
}

/// Adjusted Rand index from the contingency table.
pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Prints one result line and returns the verdict for the assertion.
pub fn report(name: &str, ok: bool, detail: impl std::fmt::Display) -> bool {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}
