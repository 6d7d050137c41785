//! Normal-inverse-Wishart pieces: sufficient statistics, the Student-t
//! posterior predictive, and the samplers used to instantiate cluster
//! parameters and hyperparameters.
//!
//! Convention: Sigma ~ IW(nu, Psi) means Sigma^-1 ~ Wishart(nu, Psi^-1), and
//! mu | Sigma ~ N(m, Sigma / k).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Count, sum and raw second moment of the points in one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub count: usize,
    pub sum: Vec<f64>,
    /// Row-major p x p sum of x x^T.
    pub outer: Vec<f64>,
}

impl ClusterStats {
    pub fn empty(p: usize) -> Self {
        ClusterStats {
            count: 0,
            sum: vec![0.0; p],
            outer: vec![0.0; p * p],
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn add(&mut self, x: &[f64]) {
        self.update(x, 1.0);
        self.count += 1;
    }

    pub fn remove(&mut self, x: &[f64]) {
        debug_assert!(self.count > 0);
        self.update(x, -1.0);
        self.count -= 1;
    }

    fn update(&mut self, x: &[f64], sign: f64) {
        let p = self.dim();
        for i in 0..p {
            self.sum[i] += sign * x[i];
            let row = &mut self.outer[i * p..(i + 1) * p];
            let xi = sign * x[i];
            for j in 0..p {
                row[j] += xi * x[j];
            }
        }
    }

    pub fn from_points<'a>(p: usize, points: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut s = ClusterStats::empty(p);
        for x in points {
            s.add(x);
        }
        s
    }

    /// Largest absolute difference between the two sets of statistics.
    pub fn max_abs_diff(&self, other: &ClusterStats) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let c = (self.count as f64 - other.count as f64).abs();
        c.max(d(&self.sum, &other.sum)).max(d(&self.outer, &other.outer))
    }
}

/// Base-measure hyperparameters that the sampler resamples.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwHyper {
    pub m0: DVector<f64>,
    pub k0: f64,
    pub nu0: f64,
    /// Inverse-Wishart scale of the cluster covariances.
    pub sigma0: DMatrix<f64>,
}

/// Posterior NIW parameters after observing `stats`.
#[derive(Debug, Clone)]
pub struct NiwPosterior {
    pub m: DVector<f64>,
    pub k: f64,
    pub nu: f64,
    pub psi: DMatrix<f64>,
}

pub fn posterior(stats: &ClusterStats, h: &NiwHyper) -> NiwPosterior {
    let p = stats.dim();
    let n = stats.count as f64;
    let k = h.k0 + n;
    let m = DVector::from_fn(p, |i, _| (h.k0 * h.m0[i] + stats.sum[i]) / k);
    let psi = DMatrix::from_fn(p, p, |i, j| {
        h.sigma0[(i, j)] + stats.outer[i * p + j] + h.k0 * h.m0[i] * h.m0[j] - k * m[i] * m[j]
    });
    // Symmetrize away rounding.
    let psi = (&psi + psi.transpose()) * 0.5;
    NiwPosterior { m, k, nu: h.nu0 + n, psi }
}

/// In-place lower Cholesky of a row-major p x p matrix; false if not SPD.
pub(crate) fn cholesky_in_place(a: &mut [f64], p: usize) -> bool {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
        for k in j + 1..p {
            a[j * p + k] = 0.0;
        }
    }
    true
}

/// Multivariate Student-t with a cached Cholesky factor of its scale.
#[derive(Debug, Clone)]
pub struct StudentT {
    pub loc: Vec<f64>,
    chol: Vec<f64>,
    pub df: f64,
    norm: f64,
}

impl StudentT {
    pub fn new(loc: Vec<f64>, scale: &DMatrix<f64>, df: f64) -> Result<Self> {
        let p = loc.len();
        let mut chol: Vec<f64> = (0..p * p).map(|k| scale[(k / p, k % p)]).collect();
        if !cholesky_in_place(&mut chol, p) {
            return Err(Error::NotPositiveDefinite("predictive scale"));
        }
        let log_det_half: f64 = (0..p).map(|i| chol[i * p + i].ln()).sum();
        let pf = p as f64;
        let norm = ln_gamma((df + pf) / 2.0)
            - ln_gamma(df / 2.0)
            - 0.5 * pf * (df * std::f64::consts::PI).ln()
            - log_det_half;
        Ok(StudentT { loc, chol, df, norm })
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let p = self.loc.len();
        // Forward substitution L y = x - loc, accumulating |y|^2.
        let mut y = [0.0f64; 32];
        let mut heap;
        let y: &mut [f64] = if p <= 32 {
            &mut y[..p]
        } else {
            heap = vec![0.0; p];
            &mut heap
        };
        let mut q = 0.0;
        for i in 0..p {
            let row = &self.chol[i * p..i * p + i];
            let mut s = x[i] - self.loc[i];
            for (k, l) in row.iter().enumerate() {
                s -= l * y[k];
            }
            let v = s / self.chol[i * p + i];
            y[i] = v;
            q += v * v;
        }
        self.norm - 0.5 * (self.df + p as f64) * (q / self.df).ln_1p()
    }
}

/// Posterior predictive of a cluster (or of a new cluster when `stats` is empty).
pub fn predictive(stats: &ClusterStats, h: &NiwHyper) -> Result<StudentT> {
    let p = stats.dim() as f64;
    let post = posterior(stats, h);
    let df = post.nu - p + 1.0;
    if !(df > 0.0) {
        return Err(Error::invalid(format!("predictive degrees of freedom {df} not positive")));
    }
    let scale = &post.psi * ((post.k + 1.0) / (post.k * df));
    StudentT::new(post.m.iter().copied().collect(), &scale, df)
}

pub fn log_predictive(x: &[f64], stats: &ClusterStats, h: &NiwHyper) -> Result<f64> {
    Ok(predictive(stats, h)?.ln_pdf(x))
}

fn ln_multigamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * std::f64::consts::PI.ln() + (0..p).map(|j| ln_gamma(a - j as f64 / 2.0)).sum::<f64>()
}

fn ln_det_spd(m: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    let c = m.clone().cholesky().ok_or(Error::NotPositiveDefinite(what))?;
    Ok(2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Log marginal likelihood of the points summarized by `stats` with the
/// cluster parameters integrated out.
pub fn log_marginal(stats: &ClusterStats, h: &NiwHyper) -> Result<f64> {
    let p = stats.dim();
    let n = stats.count as f64;
    let post = posterior(stats, h);
    Ok(-0.5 * n * p as f64 * std::f64::consts::PI.ln() + ln_multigamma(p, post.nu / 2.0)
        - ln_multigamma(p, h.nu0 / 2.0)
        + 0.5 * h.nu0 * ln_det_spd(&h.sigma0, "Sigma0")?
        - 0.5 * post.nu * ln_det_spd(&post.psi, "posterior scale")?
        + 0.5 * p as f64 * (h.k0 / post.k).ln())
}

pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite(what))
}

/// Wishart(nu, V) draw via the Bartlett decomposition.
pub fn sample_wishart<R: Rng + ?Sized>(rng: &mut R, nu: f64, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v.nrows();
    if !(nu > p as f64 - 1.0) {
        return Err(Error::invalid(format!("Wishart degrees of freedom {nu} too small for p = {p}")));
    }
    let l = v.clone().cholesky().ok_or(Error::NotPositiveDefinite("Wishart scale"))?.unpack();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(nu - i as f64).map_err(|e| Error::invalid(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = l * a;
    let w = &la * la.transpose();
    Ok((&w + w.transpose()) * 0.5)
}

/// Draws (Sigma, Sigma^-1) from IW(nu, psi).
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    rng: &mut R,
    nu: f64,
    psi: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let precision = sample_wishart(rng, nu, &spd_inverse(psi, "inverse-Wishart scale")?)?;
    let sigma = spd_inverse(&precision, "inverse-Wishart draw")?;
    Ok(((&sigma + sigma.transpose()) * 0.5, precision))
}

/// N(mean, cov) draw.
pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    let l = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite("normal covariance"))?.unpack();
    let e = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + l * e)
}

/// N(P^-1 b, P^-1) draw given the precision P.
pub fn sample_normal_canonical<R: Rng + ?Sized>(
    rng: &mut R,
    precision: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    let chol = precision.clone().cholesky().ok_or(Error::NotPositiveDefinite("conditional precision"))?;
    let mean = chol.solve(b);
    let e = DVector::from_fn(b.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    // P = L L^T, so L^-T e has covariance P^-1.
    let z = chol
        .l()
        .transpose()
        .solve_upper_triangular(&e)
        .ok_or(Error::NotPositiveDefinite("conditional precision"))?;
    Ok(mean + z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper(p: usize) -> NiwHyper {
        NiwHyper {
            m0: DVector::from_element(p, 0.5),
            k0: 0.7,
            nu0: p as f64,
            sigma0: DMatrix::from_fn(p, p, |i, j| if i == j { 1.5 } else { 0.2 }),
        }
    }

    #[test]
    fn predictive_is_symmetric_about_the_prior_mean() {
        let h = hyper(1);
        let e = ClusterStats::empty(1);
        for d in [0.1, 1.0, 7.0] {
            let a = log_predictive(&[0.5 + d], &e, &h).unwrap();
            let b = log_predictive(&[0.5 - d], &e, &h).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_predictive_integrates_to_one() {
        let h = hyper(1);
        let stats = ClusterStats::from_points(1, [[0.3].as_slice(), &[1.1], &[0.8]]);
        for s in [&stats, &ClusterStats::empty(1)] {
            let t = predictive(s, &h).unwrap();
            // Substitute x = loc + tan(u) to fold the heavy tails into (-pi/2, pi/2).
            let n = 200_000;
            let du = std::f64::consts::PI / n as f64;
            let total: f64 = (0..n)
                .map(|k| {
                    let u = -std::f64::consts::FRAC_PI_2 + (k as f64 + 0.5) * du;
                    let x = t.loc[0] + u.tan();
                    t.ln_pdf(&[x]).exp() / u.cos().powi(2) * du
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-3, "{total}");
        }
    }

    #[test]
    fn extra_point_at_the_mean_raises_density_there() {
        let h = hyper(2);
        let mut s = ClusterStats::from_points(2, [[1.0, 2.0].as_slice(), &[3.0, 0.0]]);
        let mean = [2.0, 1.0];
        let before = log_predictive(&mean, &s, &h).unwrap();
        s.add(&mean);
        assert!(log_predictive(&mean, &s, &h).unwrap() > before);
    }

    #[test]
    fn matches_direct_student_t() {
        // p = 2 against an explicit inverse-and-determinant evaluation.
        let h = hyper(2);
        let s = ClusterStats::from_points(2, [[1.0, 2.0].as_slice(), &[3.0, -1.0], &[0.0, 0.5]]);
        let post = posterior(&s, &h);
        let df = post.nu - 1.0;
        let scale = &post.psi * ((post.k + 1.0) / (post.k * df));
        let x = DVector::from_vec(vec![0.4, -0.9]);
        let d = &x - &post.m;
        let q = (d.transpose() * scale.clone().try_inverse().unwrap() * &d)[(0, 0)];
        let want = ln_gamma((df + 2.0) / 2.0)
            - ln_gamma(df / 2.0)
            - (df * std::f64::consts::PI).ln()
            - 0.5 * scale.determinant().ln()
            - 0.5 * (df + 2.0) * (1.0 + q / df).ln();
        assert!((log_predictive(x.as_slice(), &s, &h).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn posterior_scatter_matches_centered_form() {
        let h = hyper(3);
        let pts = [[1.0, 2.0, 0.0], [3.0, -1.0, 1.0], [0.0, 0.5, 2.0], [2.0, 2.0, 2.0]];
        let s = ClusterStats::from_points(3, pts.iter().map(|p| p.as_slice()));
        let post = posterior(&s, &h);
        let n = pts.len() as f64;
        let xbar = DVector::from_fn(3, |i, _| pts.iter().map(|p| p[i]).sum::<f64>() / n);
        let mut scatter = DMatrix::zeros(3, 3);
        for p in &pts {
            let d = DVector::from_column_slice(p) - &xbar;
            scatter += &d * d.transpose();
        }
        let dm = &xbar - &h.m0;
        let want = &h.sigma0 + scatter + (&dm * dm.transpose()) * (h.k0 * n / (h.k0 + n));
        assert!((post.psi - want).abs().max() < 1e-12);
    }

    #[test]
    fn marginal_is_the_product_of_sequential_predictives() {
        let h = hyper(3);
        let pts = [[1.0, 2.0, 0.0], [3.0, -1.0, 1.0], [0.0, 0.5, 2.0], [2.0, 2.0, 2.0], [-1.0, 0.0, 0.3]];
        let mut s = ClusterStats::empty(3);
        let mut chain = 0.0;
        for x in &pts {
            chain += log_predictive(x, &s, &h).unwrap();
            s.add(x);
        }
        assert!((log_marginal(&s, &h).unwrap() - chain).abs() < 1e-9);
        assert_eq!(log_marginal(&ClusterStats::empty(3), &h).unwrap(), 0.0);
    }

    #[test]
    fn wishart_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let n = 20_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            acc += sample_wishart(&mut rng, 5.0, &v).unwrap();
        }
        let mean = acc / n as f64;
        assert!((mean - &v * 5.0).abs().max() < 0.15);
    }

    #[test]
    fn canonical_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let prec = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let cov = prec.clone().try_inverse().unwrap();
        let mean = &cov * &b;
        let n = 40_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| sample_normal_canonical(&mut rng, &prec, &b).unwrap()).collect();
        let m = draws.iter().fold(DVector::zeros(2), |a, d| a + d) / n as f64;
        let c = draws.iter().fold(DMatrix::zeros(2, 2), |a, d| {
            let e = d - &m;
            a + &e * e.transpose()
        }) / n as f64;
        assert!((m - mean).abs().max() < 0.01);
        assert!((c - cov).abs().max() < 0.01);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2));
        let mut b = vec![4.0, 2.0, 2.0, 3.0];
        assert!(cholesky_in_place(&mut b, 2));
        assert_eq!(b, vec![2.0, 0.0, 1.0, 2f64.sqrt()]);
    }
}
