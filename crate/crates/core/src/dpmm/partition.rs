//! Partitions, co-clustering frequencies, and the variation-of-information
//! point estimate.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::par;

/// Labels are canonical: blocks are numbered by first occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<u32>,
    k: usize,
}

impl Partition {
    pub fn from_labels<L: Copy + Eq + std::hash::Hash>(raw: &[L]) -> Self {
        let mut map: HashMap<L, u32> = HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len() as u32;
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition { labels, k: map.len() }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.k
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }

    pub fn entropy(&self) -> f64 {
        let n = self.len() as f64;
        -self
            .block_sizes()
            .into_iter()
            .map(|c| {
                let q = c as f64 / n;
                q * q.ln()
            })
            .sum::<f64>()
    }
}

fn contingency(a: &Partition, b: &Partition) -> Vec<u32> {
    assert_eq!(a.len(), b.len(), "partitions of different sizes");
    let mut t = vec![0u32; a.k * b.k];
    for (&x, &y) in a.labels.iter().zip(&b.labels) {
        t[x as usize * b.k + y as usize] += 1;
    }
    t
}

fn mutual_information(a: &Partition, b: &Partition) -> f64 {
    let n = a.len() as f64;
    let t = contingency(a, b);
    let (sa, sb) = (a.block_sizes(), b.block_sizes());
    let mut mi = 0.0;
    for i in 0..a.k {
        for j in 0..b.k {
            let c = t[i * b.k + j];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (sa[i] as f64 * sb[j] as f64)).ln();
            }
        }
    }
    mi
}

/// VI(a, b) = H(a) + H(b) - 2 I(a, b), in nats.
pub fn variation_of_information(a: &Partition, b: &Partition) -> f64 {
    (a.entropy() + b.entropy() - 2.0 * mutual_information(a, b)).max(0.0)
}

pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> f64 {
    let pairs = |c: f64| c * (c - 1.0) / 2.0;
    let t = contingency(a, b);
    let index: f64 = t.iter().map(|&c| pairs(c as f64)).sum();
    let sa: f64 = a.block_sizes().iter().map(|&c| pairs(c as f64)).sum();
    let sb: f64 = b.block_sizes().iter().map(|&c| pairs(c as f64)).sum();
    let total = pairs(a.len() as f64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Row-major N x N matrix of co-clustering frequencies.
pub fn posterior_similarity(samples: &[Partition]) -> Result<Vec<f64>> {
    let first = samples.first().ok_or_else(|| Error::invalid("no partition samples"))?;
    let n = first.len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(Error::invalid("partition samples differ in size"));
    }
    let m = samples.len() as f64;
    let mut out = vec![0.0; n * n];
    par::for_each_chunk_mut(&mut out, n.max(1), |i, row| {
        let mut counts = vec![0u32; n];
        for s in samples {
            let l = s.labels();
            let li = l[i];
            for (c, &lj) in counts.iter_mut().zip(l) {
                *c += (lj == li) as u32;
            }
        }
        for (r, c) in row.iter_mut().zip(counts) {
            *r = c as f64 / m;
        }
    });
    Ok(out)
}

/// Distinct partitions in first-seen order with their multiplicities.
pub fn unique_with_counts(samples: &[Partition]) -> Vec<(&Partition, usize)> {
    let mut index: HashMap<&Partition, usize> = HashMap::new();
    let mut out: Vec<(&Partition, usize)> = Vec::new();
    for s in samples {
        match index.get(s) {
            Some(&k) => out[k].1 += 1,
            None => {
                index.insert(s, out.len());
                out.push((s, 1));
            }
        }
    }
    out
}

/// The sampled partition with the smallest mean VI to all samples, and that mean.
/// Ties go to the candidate seen first.
pub fn vi_point_estimate(samples: &[Partition]) -> Result<(Partition, f64)> {
    if samples.is_empty() {
        return Err(Error::invalid("no partition samples"));
    }
    let uniq = unique_with_counts(samples);
    let m = samples.len() as f64;
    let losses = par::map(&uniq, |(c, _)| {
        uniq.iter()
            .map(|(u, w)| *w as f64 * variation_of_information(c, u))
            .sum::<f64>()
            / m
    });
    let best = (0..uniq.len())
        .min_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)))
        .unwrap();
    Ok((uniq[best].0.clone(), losses[best]))
}

/// Writes samples one per line as `repeat label*run label*run ...`, where
/// `repeat` counts identical consecutive samples.
pub fn write_run_length<W: Write>(mut out: W, samples: &[Partition]) -> Result<()> {
    let mut i = 0;
    while i < samples.len() {
        let mut rep = 1;
        while i + rep < samples.len() && samples[i + rep] == samples[i] {
            rep += 1;
        }
        let mut line = rep.to_string();
        let l = samples[i].labels();
        let mut j = 0;
        while j < l.len() {
            let mut run = 1;
            while j + run < l.len() && l[j + run] == l[j] {
                run += 1;
            }
            line.push_str(&format!(" {}*{}", l[j], run));
            j += run;
        }
        writeln!(out, "{line}")?;
        i += rep;
    }
    Ok(())
}

pub fn read_run_length<R: BufRead>(input: R) -> Result<Vec<Partition>> {
    let bad = |line: usize| Error::invalid(format!("malformed run-length line {line}"));
    let mut out = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        let mut tok = line.split_whitespace();
        let Some(rep) = tok.next() else { continue };
        let rep: usize = rep.parse().map_err(|_| bad(no + 1))?;
        let mut labels: Vec<u32> = Vec::new();
        for t in tok {
            let (l, r) = t.split_once('*').ok_or_else(|| bad(no + 1))?;
            let l: u32 = l.parse().map_err(|_| bad(no + 1))?;
            let r: usize = r.parse().map_err(|_| bad(no + 1))?;
            labels.extend(std::iter::repeat_n(l, r));
        }
        let p = Partition::from_labels(&labels);
        out.extend(std::iter::repeat_n(p, rep));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(l: &[u32]) -> Partition {
        Partition::from_labels(l)
    }

    /// Entropies from explicit pair counting over the item set.
    fn brute_vi(a: &[u32], b: &[u32]) -> f64 {
        let n = a.len() as f64;
        let h = |f: &dyn Fn(usize) -> (u32, u32)| {
            let mut m: HashMap<(u32, u32), f64> = HashMap::new();
            for i in 0..a.len() {
                *m.entry(f(i)).or_default() += 1.0;
            }
            -m.values().map(|c| c / n * (c / n).ln()).sum::<f64>()
        };
        let ha = h(&|i| (a[i], 0));
        let hb = h(&|i| (0, b[i]));
        let hab = h(&|i| (a[i], b[i]));
        2.0 * hab - ha - hb
    }

    #[test]
    fn canonical_labels() {
        let a = p(&[5, 5, 2, 9, 2]);
        assert_eq!(a.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(a.num_blocks(), 3);
        assert_eq!(a, p(&[1, 1, 0, 7, 0]));
    }

    #[test]
    fn singletons_vs_one_block() {
        let v = variation_of_information(&p(&[0, 1, 2, 3]), &p(&[0, 0, 0, 0]));
        assert!((v - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn similarity_examples() {
        let a = p(&[0, 0, 1]);
        let s = posterior_similarity(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(s, vec![1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let s = posterior_similarity(&[p(&[0, 0, 1]), p(&[0, 1, 1])]).unwrap();
        assert_eq!(s[1], 0.5);
        assert_eq!(s[3 + 2], 0.5);
        let permuted = posterior_similarity(&[p(&[1, 1, 0]), p(&[2, 0, 0])]).unwrap();
        assert_eq!(s, permuted);
        assert!(posterior_similarity(&[]).is_err());
    }

    #[test]
    fn point_estimate_prefers_majority() {
        let a = p(&[0, 0, 1, 1]);
        let b = p(&[0, 1, 0, 1]);
        let v = variation_of_information(&a, &b);
        assert!(v > 0.0);
        let mut samples = vec![a.clone(); 9];
        samples.push(b);
        let (best, loss) = vi_point_estimate(&samples).unwrap();
        assert_eq!(best, a);
        assert!((loss - 0.1 * v).abs() < 1e-12);
        let (same, zero) = vi_point_estimate(&[a.clone(), a.clone()]).unwrap();
        assert_eq!((same, zero), (a, 0.0));
    }

    #[test]
    fn ari_examples() {
        assert!((adjusted_rand_index(&p(&[0, 0, 1, 1]), &p(&[1, 1, 0, 0])) - 1.0).abs() < 1e-12);
        // Sklearn reference value for this pair.
        let v = adjusted_rand_index(&p(&[0, 0, 0, 1, 1, 1]), &p(&[0, 0, 1, 1, 2, 2]));
        assert!((v - 0.24242424242424246).abs() < 1e-12, "{v}");
    }

    #[test]
    fn run_length_round_trip() {
        let s = vec![p(&[0, 0, 1, 1, 0]), p(&[0, 0, 1, 1, 0]), p(&[0, 1, 2, 3, 4]), p(&[0; 5])];
        let mut buf = Vec::new();
        write_run_length(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "2 0*2 1*2 0*1");
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_run_length(buf.as_slice()).unwrap(), s);
    }

    proptest! {
        #[test]
        fn vi_is_a_metric(
            a in prop::collection::vec(0u32..4, 12),
            b in prop::collection::vec(0u32..4, 12),
            c in prop::collection::vec(0u32..4, 12),
        ) {
            let (pa, pb, pc) = (p(&a), p(&b), p(&c));
            let ab = variation_of_information(&pa, &pb);
            prop_assert!(variation_of_information(&pa, &pa).abs() < 1e-12);
            prop_assert!((ab - variation_of_information(&pb, &pa)).abs() < 1e-12);
            prop_assert!((ab - brute_vi(&a, &b)).abs() < 1e-10);
            prop_assert!(
                variation_of_information(&pa, &pc)
                    <= ab + variation_of_information(&pb, &pc) + 1e-12
            );
        }
    }
}
