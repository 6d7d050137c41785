//! Dirichlet-process Gaussian mixture with a normal-inverse-Wishart base
//! measure and hyperpriors on its location, precision scaling and scale.
//!
//! Model:
//!   z ~ CRP(alpha); Sigma_j ~ IW(nu0, Sigma0); mu_j | Sigma_j ~ N(m0, Sigma_j / k0)
//!   m0 ~ N(m1, S1); k0 ~ Gamma(tau1, rate xi1); Sigma0 ~ Wishart(nu1, Sigma1)

mod concentration;
mod gibbs;
mod niw;
mod partition;

pub use concentration::{expected_clusters, solve_alpha};
pub use gibbs::{
    gibbs_sweep, m0_conditional, resample_hyperparameters, run_chain, write_trace_csv, ChainConfig, ChainOutput,
    ClusterParams, GibbsState, TraceRow,
};
pub use niw::{
    log_marginal, log_predictive, posterior, predictive, sample_inverse_wishart, sample_wishart, ClusterStats, NiwHyper,
    NiwPosterior, StudentT,
};
pub use partition::{
    adjusted_rand_index, posterior_similarity, read_run_length, unique_with_counts, variation_of_information,
    vi_point_estimate, write_run_length, Partition,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DpmmPriors {
    pub alpha: f64,
    pub nu0: f64,
    pub m1: DVector<f64>,
    pub s1: DMatrix<f64>,
    pub tau1: f64,
    pub xi1: f64,
    pub nu1: f64,
    pub sigma1: DMatrix<f64>,
}

impl DpmmPriors {
    /// Empirical-Bayes calibration: m1 is the column mean, S1 the sample
    /// covariance (ridged by 1e-6 * trace when near-singular), nu0 = p,
    /// nu1 = p + 2, Sigma1 = S1 / 2, tau1 = xi1 = 1.
    pub fn empirical(x: &[Vec<f64>], alpha: f64) -> Result<Self> {
        let n = x.len();
        if n < 2 {
            return Err(Error::invalid("empirical priors need at least 2 rows"));
        }
        let p = x[0].len();
        if p == 0 || x.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("data rows must share a positive length"));
        }
        let m1 = DVector::from_fn(p, |i, _| x.iter().map(|r| r[i]).sum::<f64>() / n as f64);
        let mut s1 = DMatrix::zeros(p, p);
        for r in x {
            let d = DVector::from_column_slice(r) - &m1;
            s1 += &d * d.transpose();
        }
        s1 /= (n - 1) as f64;
        let trace = s1.trace();
        let min_eig = s1.clone().symmetric_eigenvalues().min();
        if !(min_eig > 1e-6 * trace) {
            let ridge = if trace > 0.0 { 1e-6 * trace } else { 1e-6 };
            log::warn!("corpus covariance is near-singular; adding ridge {ridge:.3e}");
            for i in 0..p {
                s1[(i, i)] += ridge;
            }
        }
        let pf = p as f64;
        let priors = DpmmPriors {
            alpha,
            nu0: pf,
            sigma1: &s1 / 2.0,
            m1,
            s1,
            tau1: 1.0,
            xi1: 1.0,
            nu1: pf + 2.0,
        };
        priors.validate()?;
        Ok(priors)
    }

    pub fn dim(&self) -> usize {
        self.m1.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim() as f64;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.nu0 >= p && self.nu1 >= p) {
            return Err(Error::invalid("nu0 and nu1 must be at least the dimension"));
        }
        if !(self.tau1 > 0.0 && self.xi1 > 0.0) {
            return Err(Error::invalid("tau1 and xi1 must be positive"));
        }
        if self.s1.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("S1"));
        }
        if self.sigma1.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("Sigma1"));
        }
        Ok(())
    }

    /// Starting hyperparameters: prior means of m0, k0 and Sigma0.
    pub fn initial_hyper(&self) -> NiwHyper {
        NiwHyper {
            m0: self.m1.clone(),
            k0: self.tau1 / self.xi1,
            nu0: self.nu0,
            sigma0: &self.sigma1 * self.nu1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_priors() {
        let x = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![2.0, 5.0]];
        let p = DpmmPriors::empirical(&x, 0.5).unwrap();
        assert_eq!(p.m1.as_slice(), &[2.0, 3.0]);
        assert!((p.s1[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((p.s1[(1, 1)] - 3.0).abs() < 1e-12);
        assert_eq!((p.nu0, p.nu1, p.tau1, p.xi1), (2.0, 4.0, 1.0, 1.0));
        assert!((&p.sigma1 * 2.0 - &p.s1).abs().max() < 1e-15);
    }

    #[test]
    fn singular_covariance_gets_ridge() {
        let x = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let p = DpmmPriors::empirical(&x, 1.0).unwrap();
        assert!(p.s1.clone().cholesky().is_some());
    }
}
