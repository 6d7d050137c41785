//! Multinomial logit contrasts between clusters.
//!
//! Predictors are z-scored and an intercept is prepended. Each fit treats one
//! cluster as the reference; coefficients are reported on the standardized
//! scale with Wald tests from the inverse observed information.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::par;

const RIDGE: f64 = 1e-6;
const MAX_ITER: usize = 100;
/// Standardized coefficients this large imply fitted probabilities within
/// ~1e-13 of 0 or 1, which only happens under separation.
const DIVERGED: f64 = 30.0;

/// Classes are indexed 0..k with 0 the reference. `beta` is row-major
/// (k-1) x p, one row per non-reference class.
#[derive(Debug, Clone)]
pub struct MultinomialProblem {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub k: usize,
}

impl MultinomialProblem {
    pub fn n_params(&self) -> usize {
        (self.k - 1) * self.p()
    }

    fn p(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Class probabilities for one row, softmax with the reference at 0.
    pub fn probabilities(&self, beta: &[f64], row: &[f64]) -> Vec<f64> {
        let p = self.p();
        let mut eta = vec![0.0; self.k];
        for l in 1..self.k {
            eta[l] = beta[(l - 1) * p..l * p].iter().zip(row).map(|(b, x)| b * x).sum();
        }
        let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for e in &mut eta {
            *e = (*e - m).exp();
            s += *e;
        }
        eta.iter_mut().for_each(|e| *e /= s);
        eta
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        let p = self.p();
        self.x
            .iter()
            .zip(&self.y)
            .map(|(row, &y)| {
                let mut eta = vec![0.0; self.k];
                for l in 1..self.k {
                    eta[l] = beta[(l - 1) * p..l * p].iter().zip(row).map(|(b, x)| b * x).sum();
                }
                let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + eta.iter().map(|e| (e - m).exp()).sum::<f64>().ln();
                eta[y] - lse
            })
            .sum()
    }

    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let p = self.p();
        let mut g = vec![0.0; self.n_params()];
        for (row, &y) in self.x.iter().zip(&self.y) {
            let pi = self.probabilities(beta, row);
            for l in 1..self.k {
                let r = (y == l) as u8 as f64 - pi[l];
                for (a, x) in row.iter().enumerate() {
                    g[(l - 1) * p + a] += r * x;
                }
            }
        }
        g
    }

    /// Observed information (negative Hessian of the log-likelihood).
    pub fn information(&self, beta: &[f64]) -> DMatrix<f64> {
        let p = self.p();
        let q = self.n_params();
        let mut h = DMatrix::zeros(q, q);
        for row in &self.x {
            let pi = self.probabilities(beta, row);
            for l in 1..self.k {
                for m in l..self.k {
                    let w = pi[l] * ((l == m) as u8 as f64 - pi[m]);
                    for a in 0..p {
                        for b in 0..p {
                            h[((l - 1) * p + a, (m - 1) * p + b)] += w * row[a] * row[b];
                        }
                    }
                }
            }
        }
        for i in 0..q {
            for j in 0..i {
                h[(i, j)] = h[(j, i)];
            }
        }
        h
    }

    /// Newton ascent on ll(beta) - ridge/2 |beta|^2 with step halving.
    /// Returns (beta, penalized log-likelihood per iteration, converged).
    pub fn newton(&self, ridge: f64) -> (Vec<f64>, Vec<f64>, bool) {
        let q = self.n_params();
        let obj = |b: &[f64]| self.log_likelihood(b) - 0.5 * ridge * b.iter().map(|v| v * v).sum::<f64>();
        let mut beta = vec![0.0; q];
        let mut cur = obj(&beta);
        let mut history = vec![cur];
        for _ in 0..MAX_ITER {
            let mut g = DVector::from_vec(self.gradient(&beta));
            g -= DVector::from_column_slice(&beta) * ridge;
            let mut info = self.information(&beta);
            for i in 0..q {
                info[(i, i)] += ridge;
            }
            let step = match info.clone().cholesky() {
                Some(c) => c.solve(&g),
                None => {
                    for i in 0..q {
                        info[(i, i)] += RIDGE;
                    }
                    match info.cholesky() {
                        Some(c) => c.solve(&g),
                        None => return (beta, history, false),
                    }
                }
            };
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
                let v = obj(&trial);
                if v >= cur {
                    accepted = Some((trial, v));
                    break;
                }
                t *= 0.5;
            }
            let Some((next, v)) = accepted else {
                return (beta, history, true);
            };
            let gain = v - cur;
            beta = next;
            cur = v;
            history.push(cur);
            if gain <= 1e-12 * (1.0 + cur.abs()) && step.amax() * t < 1e-8 {
                return (beta, history, true);
            }
            if beta.iter().any(|b| b.abs() > DIVERGED) && ridge == 0.0 {
                return (beta, history, false);
            }
        }
        (beta, history, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub outcome: u32,
    /// "(intercept)" or a descriptor name.
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

#[derive(Debug, Clone)]
pub struct MultinomialFit {
    pub reference: u32,
    /// Non-reference clusters, ascending; one coefficient row each.
    pub outcomes: Vec<u32>,
    pub terms: Vec<String>,
    pub coefficients: Vec<Coefficient>,
    pub converged: bool,
    /// Set when separation forced the 1e-6 ridge penalty.
    pub ridge: bool,
    pub log_likelihood: f64,
}

impl MultinomialFit {
    pub fn coefficient(&self, outcome: u32, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.outcome == outcome && c.term == term)
    }
}

/// Replaces missing entries by their column median (0 for an all-missing column).
pub fn impute_median(rows: &[Vec<Option<f64>>]) -> Vec<Vec<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    let medians: Vec<f64> = (0..d)
        .map(|j| {
            let mut v: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            v.sort_by(f64::total_cmp);
            match v.len() {
                0 => 0.0,
                n if n % 2 == 1 => v[n / 2],
                n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
            }
        })
        .collect();
    rows.iter()
        .map(|r| r.iter().zip(&medians).map(|(v, m)| v.unwrap_or(*m)).collect())
        .collect()
}

/// Fits cluster ~ descriptors with `reference` as the baseline. Clusters
/// with a single member are dropped with a warning. Constant columns are
/// left out of the design and reported with estimate 0 and p = 1.
pub fn fit_multinomial(x: &[Vec<f64>], labels: &[u32], reference: u32, names: &[String]) -> Result<MultinomialFit> {
    if x.len() != labels.len() {
        return Err(Error::invalid("profiles and labels differ in length"));
    }
    let d = names.len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("profile rows must match the descriptor names"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("glm input".into()));
    }
    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_default() += 1;
    }
    for (&c, _) in sizes.iter().filter(|(_, &s)| s < 2) {
        log::warn!("cluster {c} has a single member and is excluded from the contrasts");
    }
    sizes.retain(|_, s| *s >= 2);
    if !sizes.contains_key(&reference) {
        return Err(Error::invalid(format!("reference cluster {reference} has fewer than 2 members")));
    }
    if sizes.len() < 2 {
        return Err(Error::invalid("multinomial fit needs at least 2 clusters"));
    }
    let outcomes: Vec<u32> = sizes.keys().copied().filter(|&c| c != reference).collect();
    let class_of = |l: u32| -> Option<usize> {
        if l == reference {
            Some(0)
        } else {
            outcomes.iter().position(|&c| c == l).map(|i| i + 1)
        }
    };
    let rows: Vec<usize> = (0..x.len()).filter(|&i| class_of(labels[i]).is_some()).collect();
    let n = rows.len() as f64;

    // Standardize the non-constant columns.
    let mut kept = Vec::new();
    let mut stats = Vec::new();
    for j in 0..d {
        let mean = rows.iter().map(|&i| x[i][j]).sum::<f64>() / n;
        let sd = (rows.iter().map(|&i| (x[i][j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            kept.push(j);
            stats.push((mean, sd));
        }
    }
    let problem = MultinomialProblem {
        x: rows
            .iter()
            .map(|&i| {
                std::iter::once(1.0)
                    .chain(kept.iter().zip(&stats).map(|(&j, (m, s))| (x[i][j] - m) / s))
                    .collect()
            })
            .collect(),
        y: rows.iter().map(|&i| class_of(labels[i]).unwrap()).collect(),
        k: outcomes.len() + 1,
    };

    let (mut beta, _, mut converged) = problem.newton(0.0);
    let mut ridge = false;
    if !converged || beta.iter().any(|b| b.abs() > DIVERGED) {
        log::warn!("separation in the fit with reference {reference}; refitting with ridge {RIDGE:e}");
        let (b, _, c) = problem.newton(RIDGE);
        beta = b;
        converged = c;
        ridge = true;
    }
    let mut info = problem.information(&beta);
    if ridge {
        for i in 0..info.nrows() {
            info[(i, i)] += RIDGE;
        }
    }
    let cov = info.clone().try_inverse().unwrap_or_else(|| {
        for i in 0..info.nrows() {
            info[(i, i)] += RIDGE;
        }
        ridge = true;
        info.try_inverse().unwrap_or_else(|| DMatrix::from_element(beta.len(), beta.len(), f64::NAN))
    });

    let mut terms = vec!["(intercept)".to_string()];
    terms.extend(names.iter().cloned());
    let p = kept.len() + 1;
    let mut coefficients = Vec::with_capacity(outcomes.len() * terms.len());
    for (l, &outcome) in outcomes.iter().enumerate() {
        for (t, term) in terms.iter().enumerate() {
            let col = if t == 0 { Some(0) } else { kept.iter().position(|&j| j == t - 1).map(|i| i + 1) };
            let c = match col {
                Some(c) => {
                    let idx = l * p + c;
                    let est = beta[idx];
                    let se = cov[(idx, idx)].max(0.0).sqrt();
                    let z = est / se;
                    let pv = if z.is_finite() { erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0) } else { 1.0 };
                    Coefficient {
                        outcome,
                        term: term.clone(),
                        estimate: est,
                        se,
                        z: if z.is_finite() { z } else { 0.0 },
                        p: pv,
                    }
                }
                None => Coefficient {
                    outcome,
                    term: term.clone(),
                    estimate: 0.0,
                    se: f64::INFINITY,
                    z: 0.0,
                    p: 1.0,
                },
            };
            coefficients.push(c);
        }
    }
    Ok(MultinomialFit {
        reference,
        outcomes,
        terms,
        coefficients,
        converged,
        ridge,
        log_likelihood: problem.log_likelihood(&beta),
    })
}

/// One fit per cluster (with at least 2 members) as reference, in parallel.
pub fn fit_all_references(x: &[Vec<f64>], labels: &[u32], names: &[String]) -> Result<Vec<MultinomialFit>> {
    let mut refs: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in labels {
        *refs.entry(l).or_default() += 1;
    }
    let refs: Vec<u32> = refs.into_iter().filter(|(_, s)| *s >= 2).map(|(c, _)| c).collect();
    par::map(&refs, |&r| fit_multinomial(x, labels, r, names)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSummary {
    pub reference: u32,
    /// Descriptors significant against a strict majority of the other clusters.
    pub highlighted: Vec<String>,
}

pub fn contrast_report(fits: &[MultinomialFit], alpha_level: f64) -> Vec<ContrastSummary> {
    fits.iter()
        .map(|fit| {
            let others = fit.outcomes.len();
            let highlighted = fit
                .terms
                .iter()
                .skip(1)
                .filter(|term| {
                    let hits = fit
                        .coefficients
                        .iter()
                        .filter(|c| &c.term == *term && c.p < alpha_level)
                        .count();
                    2 * hits > others
                })
                .cloned()
                .collect();
            ContrastSummary {
                reference: fit.reference,
                highlighted,
            }
        })
        .collect()
}

/// CSV with one row per (reference, outcome, term).
pub fn write_fits_csv<W: Write>(out: W, fits: &[MultinomialFit]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["reference", "outcome", "term", "estimate", "se", "z", "p", "converged", "ridge"])?;
    for f in fits {
        for c in &f.coefficients {
            w.write_record([
                f.reference.to_string(),
                c.outcome.to_string(),
                c.term.clone(),
                format!("{:.8e}", c.estimate),
                format!("{:.8e}", c.se),
                format!("{:.6}", c.z),
                format!("{:.6e}", c.p),
                f.converged.to_string(),
                f.ridge.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
