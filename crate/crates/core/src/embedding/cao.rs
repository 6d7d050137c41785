use super::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::par;

/// Relative distance (to the signal range) below which delay vectors coincide.
const COINCIDENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CaoResult {
    pub dim: usize,
    /// `e1[d - 1]` holds E1(d) for d = 1..=dmax.
    pub e1: Vec<f64>,
    /// Saturation never detected; `dim` was capped at `dmax`.
    pub fallback: bool,
}

/// Cao's E(d) for d = 1..=dmax+1 using maximum-norm nearest neighbours.
///
/// Reference vectors are the delay-vector start indices `0, s, 2s, ...` with
/// the stride `s` chosen so at most `max_points` are used. Nearest-neighbour
/// ties go to the lowest index; coincident points (max-norm distance at most
/// 1e-9 of the signal range) are skipped.
pub fn cao_statistics(x: &[f64], tau: usize, dmax: usize, max_points: usize) -> Result<Vec<f64>> {
    if tau == 0 || dmax == 0 {
        return Err(Error::invalid("tau and dmax must be at least 1"));
    }
    let span = (dmax + 1) * tau;
    if x.len() <= span + 2 {
        return Err(Error::TooShort {
            needed: span + 3,
            got: x.len(),
        });
    }
    let available = x.len() - span;
    let stride = available.div_ceil(max_points).max(1);
    let starts: Vec<usize> = (0..available).step_by(stride).collect();
    let m = starts.len();
    if m < 3 {
        return Err(Error::TooShort {
            needed: span + 3,
            got: x.len(),
        });
    }

    // Distances this small are floating-point noise on an exactly repeating
    // trajectory; such pairs count as coincident.
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let tol = COINCIDENT * (hi - lo);

    // dist[i * m + j] holds the max-norm distance in the current dimension.
    let mut dist = vec![0.0f64; m * m];
    let mut e = Vec::with_capacity(dmax + 1);
    for d in 1..=dmax + 1 {
        let offset = (d - 1) * tau;
        par::for_each_chunk_mut(&mut dist, m, |i, row| {
            let xi = x[starts[i] + offset];
            for (j, r) in row.iter_mut().enumerate() {
                *r = r.max((xi - x[starts[j] + offset]).abs());
            }
        });
        let next = d * tau;
        let ratios: Vec<Option<f64>> = par::map_range(m, |i| {
            let row = &dist[i * m..(i + 1) * m];
            let mut best: Option<(usize, f64)> = None;
            for (j, &r) in row.iter().enumerate() {
                if j == i || r <= tol {
                    continue;
                }
                if best.is_none_or(|(_, b)| r < b) {
                    best = Some((j, r));
                }
            }
            best.map(|(j, r)| {
                let extra = (x[starts[i] + next] - x[starts[j] + next]).abs();
                r.max(extra) / r
            })
        });
        let valid: Vec<f64> = ratios.into_iter().flatten().collect();
        if valid.is_empty() {
            return Err(Error::invalid("all delay vectors coincide; Cao statistics undefined"));
        }
        e.push(valid.iter().sum::<f64>() / valid.len() as f64);
    }
    Ok(e)
}

/// Smallest `d` with `|E1(d+1) - E1(d)| < threshold` and `E1(d) > min_e1`,
/// capped at `dmax` (flagged) when no such `d` exists.
pub fn cao_embedding_dimension(x: &[f64], tau: usize, cfg: &EmbeddingConfig) -> Result<CaoResult> {
    let e = cao_statistics(x, tau, cfg.cao_dmax, cfg.cao_max_points)?;
    let e1: Vec<f64> = e.windows(2).map(|w| w[1] / w[0]).collect();
    let found = (0..e1.len() - 1)
        .find(|&k| (e1[k + 1] - e1[k]).abs() < cfg.cao_threshold && e1[k] > cfg.cao_min_e1);
    Ok(match found {
        Some(k) => CaoResult {
            dim: k + 1,
            e1,
            fallback: false,
        },
        None => {
            log::debug!("Cao E1 never saturated; capping dimension at {}", cfg.cao_dmax);
            CaoResult {
                dim: cfg.cao_dmax,
                e1,
                fallback: true,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_signals() {
        let cfg = EmbeddingConfig::default();
        assert!(matches!(
            cao_embedding_dimension(&[0.0; 30], 2, &cfg),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn e1_has_dmax_entries() {
        let x: Vec<f64> = (0..3000).map(|i| (i as f64 * 0.07).sin()).collect();
        let cfg = EmbeddingConfig {
            cao_dmax: 6,
            ..EmbeddingConfig::default()
        };
        let r = cao_embedding_dimension(&x, 20, &cfg).unwrap();
        assert_eq!(r.e1.len(), 6);
    }

    #[test]
    fn sine_saturates_at_two() {
        let x: Vec<f64> = (0..10_000)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 44_100.0).sin())
            .collect();
        let r = cao_embedding_dimension(&x, 25, &EmbeddingConfig::default()).unwrap();
        assert_eq!(r.dim, 2);
        assert!(!r.fallback);
    }

    #[test]
    fn white_noise_does_not_saturate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cfg = EmbeddingConfig {
            cao_dmax: 6,
            ..EmbeddingConfig::default()
        };
        let r = cao_embedding_dimension(&x, 1, &cfg).unwrap();
        assert!(r.fallback && r.dim == 6, "{r:?}");
    }
}
