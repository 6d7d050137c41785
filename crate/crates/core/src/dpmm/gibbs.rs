//! Collapsed CRP Gibbs sampler with instantiated cluster parameters for the
//! hyperparameter updates.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::niw::{
    log_marginal, posterior, predictive, sample_inverse_wishart, sample_normal, sample_normal_canonical, sample_wishart,
    spd_inverse, ClusterStats, NiwHyper, StudentT,
};
use super::partition::Partition;
use super::DpmmPriors;
use crate::error::{Error, Result};

/// Hyperparameter-only passes made on the starting partition.
const WARMUP_PASSES: usize = 20;

/// Parameters drawn from a cluster's posterior NIW.
#[derive(Debug, Clone)]
pub struct ClusterParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct GibbsState {
    pub z: Vec<usize>,
    pub clusters: Vec<ClusterStats>,
    pub hyper: NiwHyper,
    /// Refreshed at the end of every sweep; aligned with `clusters`.
    pub params: Vec<ClusterParams>,
    rng: ChaCha8Rng,
    predictive: Vec<StudentT>,
    prior_predictive: StudentT,
}

fn check_data(x: &[Vec<f64>]) -> Result<usize> {
    let p = x.first().map(Vec::len).ok_or_else(|| Error::invalid("no data rows"))?;
    if p == 0 {
        return Err(Error::invalid("data rows have no columns"));
    }
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("data rows differ in length"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clustering input".into()));
    }
    Ok(p)
}

impl GibbsState {
    /// Builds a state for every k-means partition with 1..=`max_init_clusters`
    /// blocks, settles each one's hyperparameters on it, and keeps the one with
    /// the highest collapsed log posterior (fewest blocks on ties).
    pub fn new(x: &[Vec<f64>], priors: &DpmmPriors, seed: u64, max_init_clusters: usize) -> Result<Self> {
        let p = check_data(x)?;
        if priors.dim() != p {
            return Err(Error::invalid(format!("priors are {}-dimensional, data {p}", priors.dim())));
        }
        let mut seeding = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<(f64, GibbsState)> = None;
        for k in 1..=max_init_clusters.clamp(1, x.len()) {
            let labels = kmeans_labels(x, k, &mut seeding);
            let rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            let state = GibbsState::from_labels(x, priors, &labels, rng)?;
            let score = state.log_posterior(priors.alpha)?;
            log::debug!("initial partition with {} blocks scores {score:.3}", state.num_clusters());
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, state));
            }
        }
        Ok(best.expect("at least one candidate").1)
    }

    /// State with the given starting labels (contiguous from 0), after
    /// hyperparameter-only passes on that partition.
    pub fn from_labels(x: &[Vec<f64>], priors: &DpmmPriors, labels: &[usize], rng: ChaCha8Rng) -> Result<Self> {
        let p = check_data(x)?;
        let hyper = priors.initial_hyper();
        let prior_predictive = predictive(&ClusterStats::empty(p), &hyper)?;
        let mut state = GibbsState {
            z: Vec::with_capacity(x.len()),
            clusters: Vec::new(),
            hyper,
            params: Vec::new(),
            rng,
            predictive: Vec::new(),
            prior_predictive,
        };
        let canonical = Partition::from_labels(labels);
        for (xi, &j) in x.iter().zip(canonical.labels()) {
            state.z.push(j as usize);
            state.seat(j as usize, xi)?;
        }
        // The prior-mean Sigma0 is far too broad for any real partition.
        for _ in 0..WARMUP_PASSES {
            state.instantiate()?;
            resample_hyperparameters(&mut state, priors)?;
        }
        state.refresh_predictives()?;
        state.instantiate()?;
        Ok(state)
    }

    /// Collapsed log posterior of the current partition given the current
    /// hyperparameters: CRP prior plus per-cluster marginal likelihoods.
    pub fn log_posterior(&self, alpha: f64) -> Result<f64> {
        let n = self.z.len() as f64;
        let mut lp = ln_gamma(alpha) - ln_gamma(alpha + n);
        for c in &self.clusters {
            lp += alpha.ln() + ln_gamma(c.count as f64) + log_marginal(c, &self.hyper)?;
        }
        Ok(lp)
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.z)
    }

    fn dim(&self) -> usize {
        self.hyper.m0.len()
    }

    /// Reassignment probabilities over the existing clusters followed by a new one.
    pub fn assignment_probabilities(&self, xi: &[f64], alpha: f64) -> Vec<f64> {
        let mut w: Vec<f64> = self
            .clusters
            .iter()
            .zip(&self.predictive)
            .map(|(c, t)| (c.count as f64).ln() + t.ln_pdf(xi))
            .collect();
        w.push(alpha.ln() + self.prior_predictive.ln_pdf(xi));
        let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in &mut w {
            *v = (*v - top).exp();
            total += *v;
        }
        for v in &mut w {
            *v /= total;
        }
        debug_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        w
    }

    fn choose(&mut self, xi: &[f64], alpha: f64) -> usize {
        let probs = self.assignment_probabilities(xi, alpha);
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (j, q) in probs.iter().enumerate() {
            acc += q;
            if u < acc {
                return j;
            }
        }
        probs.len() - 1
    }

    fn seat(&mut self, j: usize, xi: &[f64]) -> Result<()> {
        if j == self.clusters.len() {
            self.clusters.push(ClusterStats::empty(self.dim()));
            self.predictive.push(self.prior_predictive.clone());
        }
        self.clusters[j].add(xi);
        self.predictive[j] = predictive(&self.clusters[j], &self.hyper)?;
        Ok(())
    }

    fn unseat(&mut self, i: usize, xi: &[f64]) -> Result<()> {
        let c = self.z[i];
        self.clusters[c].remove(xi);
        if self.clusters[c].count > 0 {
            self.predictive[c] = predictive(&self.clusters[c], &self.hyper)?;
            return Ok(());
        }
        let last = self.clusters.len() - 1;
        self.clusters.swap_remove(c);
        self.predictive.swap_remove(c);
        if c != last {
            for l in &mut self.z {
                if *l == last {
                    *l = c;
                }
            }
        }
        Ok(())
    }

    /// Draws (mu_j, Sigma_j) for every cluster from its posterior.
    fn instantiate(&mut self) -> Result<()> {
        let mut params = Vec::with_capacity(self.clusters.len());
        for c in &self.clusters {
            let post = posterior(c, &self.hyper);
            let (sigma, precision) = sample_inverse_wishart(&mut self.rng, post.nu, &post.psi)?;
            let mu = sample_normal(&mut self.rng, &post.m, &(&sigma / post.k))?;
            params.push(ClusterParams { mu, sigma, precision });
        }
        self.params = params;
        Ok(())
    }

    fn refresh_predictives(&mut self) -> Result<()> {
        self.prior_predictive = predictive(&ClusterStats::empty(self.dim()), &self.hyper)?;
        self.predictive = self
            .clusters
            .iter()
            .map(|c| predictive(c, &self.hyper))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Rebuilds the sufficient statistics from scratch and returns the largest
    /// deviation from the incrementally maintained ones.
    pub fn recompute_stats(&mut self, x: &[Vec<f64>]) -> Result<f64> {
        let p = self.dim();
        let mut fresh = vec![ClusterStats::empty(p); self.clusters.len()];
        for (xi, &j) in x.iter().zip(&self.z) {
            fresh[j].add(xi);
        }
        let drift = fresh
            .iter()
            .zip(&self.clusters)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max);
        self.clusters = fresh;
        self.refresh_predictives()?;
        Ok(drift)
    }

    /// Complete-data log-likelihood under the instantiated parameters.
    pub fn log_likelihood(&self) -> f64 {
        let p = self.dim();
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        self.clusters
            .iter()
            .zip(&self.params)
            .map(|(c, th)| {
                let n = c.count as f64;
                let log_det = th.sigma.clone().cholesky().map(|ch| 2.0 * ch.l().diagonal().map(f64::ln).sum()).unwrap_or(f64::NAN);
                // tr(W (outer - mu s^T - s mu^T + n mu mu^T))
                let mut tr = 0.0;
                for a in 0..p {
                    for b in 0..p {
                        let m = c.outer[a * p + b] - th.mu[a] * c.sum[b] - c.sum[a] * th.mu[b] + n * th.mu[a] * th.mu[b];
                        tr += th.precision[(b, a)] * m;
                    }
                }
                -0.5 * n * (p as f64 * ln2pi + log_det) - 0.5 * tr
            })
            .sum()
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Lloyd's algorithm from k-means++ seeds in the raw coordinates. Returns
/// contiguous labels (empty clusters are dropped).
fn kmeans_labels<R: Rng + ?Sized>(x: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let n = x.len();
    if k >= n {
        return (0..n).collect();
    }
    let p = x[0].len();
    let y: &[Vec<f64>] = x;
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>();

    let mut centres: Vec<Vec<f64>> = vec![y[rng.random_range(0..n)].clone()];
    let mut best: Vec<f64> = y.iter().map(|r| dist2(r, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = best.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &b) in best.iter().enumerate() {
            if u < b {
                pick = i;
                break;
            }
            u -= b;
        }
        centres.push(y[pick].clone());
        for (b, r) in best.iter_mut().zip(y) {
            *b = b.min(dist2(r, &y[pick]));
        }
    }
    let mut labels = vec![0usize; n];
    for _ in 0..50 {
        let mut changed = false;
        for (l, r) in labels.iter_mut().zip(y) {
            let j = (0..centres.len())
                .min_by(|&a, &b| dist2(r, &centres[a]).total_cmp(&dist2(r, &centres[b])))
                .unwrap();
            changed |= *l != j;
            *l = j;
        }
        let mut sums = vec![vec![0.0; p]; centres.len()];
        let mut counts = vec![0usize; centres.len()];
        for (&l, r) in labels.iter().zip(y) {
            counts[l] += 1;
            sums[l].iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        for ((c, s), &m) in centres.iter_mut().zip(sums).zip(&counts) {
            if m > 0 {
                *c = s.into_iter().map(|v| v / m as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    Partition::from_labels(&labels).labels().iter().map(|&l| l as usize).collect()
}

/// One full pass: reassign every item, instantiate cluster parameters, then
/// resample the hyperparameters.
pub fn gibbs_sweep(state: &mut GibbsState, x: &[Vec<f64>], priors: &DpmmPriors) -> Result<()> {
    for (i, xi) in x.iter().enumerate() {
        state.unseat(i, xi)?;
        let j = state.choose(xi, priors.alpha);
        state.z[i] = j;
        state.seat(j, xi)?;
    }
    state.instantiate()?;
    resample_hyperparameters(state, priors)?;
    state.refresh_predictives()
}

/// Mean and covariance of the Gaussian full conditional of m0.
pub fn m0_conditional(params: &[ClusterParams], k0: f64, priors: &DpmmPriors) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (prec, b) = m0_canonical(params, k0, priors)?;
    let cov = spd_inverse(&prec, "m0 conditional precision")?;
    Ok((&cov * b, cov))
}

fn m0_canonical(params: &[ClusterParams], k0: f64, priors: &DpmmPriors) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let s1_inv = spd_inverse(&priors.s1, "S1")?;
    let mut prec = s1_inv.clone();
    let mut b = &s1_inv * &priors.m1;
    for th in params {
        prec += &th.precision * k0;
        b += (&th.precision * &th.mu) * k0;
    }
    Ok(((&prec + prec.transpose()) * 0.5, b))
}

/// Gibbs updates m0 | k0, then k0 | m0, then Sigma0, all given the
/// instantiated cluster parameters.
pub fn resample_hyperparameters(state: &mut GibbsState, priors: &DpmmPriors) -> Result<()> {
    let k = state.params.len();
    if k == 0 {
        return Err(Error::invalid("hyperparameter update needs at least one cluster"));
    }
    let p = state.dim() as f64;
    let params = std::mem::take(&mut state.params);

    let (prec, b) = m0_canonical(&params, state.hyper.k0, priors)?;
    let m0 = sample_normal_canonical(state.rng(), &prec, &b)?;

    let quad: f64 = params
        .iter()
        .map(|th| {
            let d = &th.mu - &m0;
            (d.transpose() * &th.precision * &d)[(0, 0)]
        })
        .sum();
    let shape = priors.tau1 + 0.5 * k as f64 * p;
    let rate = priors.xi1 + 0.5 * quad;
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::invalid(e.to_string()))?;
    let k0 = gamma.sample(state.rng()).max(f64::MIN_POSITIVE);

    let mut scale_inv = spd_inverse(&priors.sigma1, "Sigma1")?;
    for th in &params {
        scale_inv += &th.precision;
    }
    let scale = spd_inverse(&((&scale_inv + scale_inv.transpose()) * 0.5), "Sigma0 conditional scale")?;
    let sigma0 = sample_wishart(state.rng(), priors.nu1 + k as f64 * priors.nu0, &scale)?;

    state.hyper.m0 = m0;
    state.hyper.k0 = k0;
    state.hyper.sigma0 = sigma0;
    state.params = params;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Total sweeps, burn-in included.
    pub iters: usize,
    pub burnin: usize,
    /// Keep every `thin`-th post-burn-in sweep.
    pub thin: usize,
    pub seed: u64,
    /// Sweeps between full recomputations of the sufficient statistics.
    pub recompute_every: usize,
    /// Largest k-means partition considered as the starting state.
    pub max_init_clusters: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iters: 10_000,
            burnin: 4_000,
            thin: 1,
            seed: 20_240_611,
            recompute_every: 100,
            max_init_clusters: 10,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters <= self.burnin {
            return Err(Error::Config(format!(
                "iters ({}) must exceed burnin ({}); no samples would be kept",
                self.iters, self.burnin
            )));
        }
        if self.thin == 0 || self.recompute_every == 0 {
            return Err(Error::Config("thin and recompute_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub k: usize,
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Vec<Partition>,
    /// One row per sweep, burn-in included.
    pub trace: Vec<TraceRow>,
    pub final_state: GibbsState,
}

pub fn run_chain(x: &[Vec<f64>], priors: &DpmmPriors, cfg: &ChainConfig) -> Result<ChainOutput> {
    cfg.validate()?;
    check_data(x)?;
    if x.len() < 2 {
        return Err(Error::invalid("clustering needs at least 2 items"));
    }
    priors.validate()?;
    let mut state = GibbsState::new(x, priors, cfg.seed, cfg.max_init_clusters)?;
    let mut samples = Vec::with_capacity((cfg.iters - cfg.burnin).div_ceil(cfg.thin));
    let mut trace = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        gibbs_sweep(&mut state, x, priors)?;
        if (it + 1) % cfg.recompute_every == 0 {
            let drift = state.recompute_stats(x)?;
            if drift > 1e-6 {
                log::warn!("sufficient statistics drifted by {drift:.3e} at sweep {}", it + 1);
            }
        }
        trace.push(TraceRow {
            iter: it + 1,
            k: state.num_clusters(),
            loglik: state.log_likelihood(),
        });
        if it >= cfg.burnin && (it - cfg.burnin) % cfg.thin == 0 {
            samples.push(state.partition());
        }
        if (it + 1) % 1000 == 0 {
            log::info!("sweep {}: K = {}", it + 1, state.num_clusters());
        }
    }
    Ok(ChainOutput {
        samples,
        trace,
        final_state: state,
    })
}

pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "K", "loglik"])?;
    for r in trace {
        w.write_record([r.iter.to_string(), r.k.to_string(), format!("{:.10e}", r.loglik)])?;
    }
    w.flush()?;
    Ok(())
}
