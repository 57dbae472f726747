//! Reference estimator: gamma mixture EM whose M-step is the exact weighted
//! gamma maximum-likelihood fit, found numerically.

use crate::em::{fit_multi, fit_once, ComponentUpdate, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::mixture::WeightedStats;
use crate::root::newton_bisect;
use crate::special::{ln_minus_digamma, trigamma_pos};

pub const MLE_RESIDUAL_TOL: f64 = 1e-10;
const MLE_MAX_ITER: usize = 100;

pub(crate) fn mle_from_stats(stats: &WeightedStats) -> Result<(f64, f64)> {
    if !(stats.sum_w > 0.0) {
        return Err(Error::InvalidInput("component weights sum to zero".into()));
    }
    let mean = stats.weighted_mean();
    let s = mean.ln() - stats.weighted_mean_ln();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Degenerate(format!(
            "log-mean gap is {s:e}; all weight sits on one value"
        )));
    }
    // 1/(2a) < ln a − ψ(a) < 1/a brackets the root inside (1/(2s), 1/s).
    let start = (3.0 - s + ((s - 3.0) * (s - 3.0) + 24.0 * s).sqrt()) / (12.0 * s);
    let root = newton_bisect(
        |t| {
            let a = t.exp();
            (ln_minus_digamma(a) - s, 1.0 - a * trigamma_pos(a))
        },
        (0.25 / s).ln(),
        (2.0 / s).ln(),
        start.ln(),
        MLE_RESIDUAL_TOL,
        MLE_MAX_ITER,
    )?;
    let shape = root.x.exp();
    Ok((shape, mean / shape))
}

/// Weighted gamma MLE: solves ln a − ψ(a) = ln x̄_w − (ln x)‾_w for the shape;
/// scale = x̄_w / a.
pub fn weighted_gamma_mle(data: &[f64], z_column: &[f64]) -> Result<(f64, f64)> {
    let stats = WeightedStats::from_weights(data, z_column)?;
    mle_from_stats(&stats)
}

struct NumericalMle;

impl ComponentUpdate for NumericalMle {
    fn update(&self, component: usize, stats: &WeightedStats) -> Result<(f64, f64)> {
        mle_from_stats(stats).map_err(|e| Error::DegenerateComponent {
            component,
            reason: e.to_string(),
        })
    }
}

/// Numerical-MLE gamma mixture EM (single start, with divergence restarts).
pub fn baseline_em_fit(data: &[f64], k: usize, config: &FitConfig) -> Result<FitResult> {
    fit_once(data, k, config, &NumericalMle)
}

/// Numerical-MLE gamma mixture EM with `config.restarts` random starts.
pub fn baseline_multi_restart_fit(data: &[f64], k: usize, config: &FitConfig) -> Result<FitResult> {
    fit_multi(data, k, config, &NumericalMle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::{gamma_sample, GammaParams};
    use crate::special::digamma;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_shape() {
        let p = GammaParams::new(8.0, 1.0 / 3.0).unwrap();
        let x = gamma_sample(&p, &mut ChaCha8Rng::seed_from_u64(12), 100_000);
        let (a, b) = weighted_gamma_mle(&x, &vec![1.0; x.len()]).unwrap();
        assert!((a / 8.0 - 1.0).abs() < 0.02, "{a}");
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!((a * b - mean).abs() < 1e-12 * mean);
    }

    #[test]
    fn residual_agrees_with_bisection() {
        let x = [0.3, 0.9, 1.4, 2.2, 5.0, 0.05];
        let z = [0.2, 1.0, 0.7, 0.4, 0.9, 0.3];
        let (a, _) = weighted_gamma_mle(&x, &z).unwrap();
        let sw: f64 = z.iter().sum();
        let mean = x.iter().zip(&z).map(|(x, z)| x * z).sum::<f64>() / sw;
        let mean_ln = x.iter().zip(&z).map(|(x, z)| x.ln() * z).sum::<f64>() / sw;
        let s = mean.ln() - mean_ln;
        let g = |a: f64| a.ln() - digamma(a).unwrap() - s;
        assert!(g(a).abs() <= 1e-10);
        // plain bisection on [1e-3, 1e3]; g is decreasing
        let (mut lo, mut hi) = (1e-3, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((a - lo).abs() < 1e-8 * a, "{a} vs {lo}");
    }

    #[test]
    fn point_mass_is_degenerate() {
        assert!(weighted_gamma_mle(&[3.0, 3.0], &[1.0, 1.0]).is_err());
    }
}
