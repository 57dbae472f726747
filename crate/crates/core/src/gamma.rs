//! Shape–scale gamma and Stacy generalized gamma densities, modes,
//! method-of-moments estimation and random variate generation.

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_gamma_pos;

/// Gamma distribution with density x^{a−1} e^{−x/b} / (b^a Γ(a)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    shape: f64,
    scale: f64,
}

impl GammaParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gamma shape must be finite and > 0, got {shape}"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gamma scale must be finite and > 0, got {scale}"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    /// Mode (a − 1)·b, or `f64::NEG_INFINITY` when a < 1 (no interior mode).
    pub fn mode(&self) -> f64 {
        gamma_mode(self)
    }

    /// x-independent part of the log density: −a ln b − ln Γ(a).
    pub(crate) fn log_norm(&self) -> f64 {
        -self.shape * self.scale.ln() - ln_gamma_pos(self.shape)
    }
}

/// Stacy's generalized gamma: γ x^{aγ−1} e^{−(x/b)^γ} / (b^{aγ} Γ(a)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenGammaParams {
    shape: f64,
    scale: f64,
    power: f64,
}

impl GenGammaParams {
    pub fn new(shape: f64, scale: f64, power: f64) -> Result<Self> {
        for (name, v) in [("shape", shape), ("scale", scale), ("power", power)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "generalized gamma {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self {
            shape,
            scale,
            power,
        })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn power(&self) -> f64 {
        self.power
    }
}

fn check_support(x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "gamma density is supported on x > 0, got {x}"
        )))
    }
}

/// Log density of the shape–scale gamma at `x`.
pub fn gamma_log_density(x: f64, p: &GammaParams) -> Result<f64> {
    check_support(x)?;
    Ok(gamma_log_density_unchecked(
        x,
        x.ln(),
        p.shape,
        p.scale,
        p.log_norm(),
    ))
}

#[inline]
pub(crate) fn gamma_log_density_unchecked(
    x: f64,
    ln_x: f64,
    shape: f64,
    scale: f64,
    log_norm: f64,
) -> f64 {
    (shape - 1.0) * ln_x - x / scale + log_norm
}

/// Log density of the generalized gamma at `x`.
pub fn gen_gamma_log_density(x: f64, p: &GenGammaParams) -> Result<f64> {
    check_support(x)?;
    let GenGammaParams {
        shape: a,
        scale: b,
        power: g,
    } = *p;
    Ok(g.ln() + (a * g - 1.0) * x.ln() - (x / b).powf(g) - a * g * b.ln() - ln_gamma_pos(a))
}

/// Mode of a gamma distribution under the scale parameterization.
///
/// Returns `f64::NEG_INFINITY` for shape < 1, where the density is unbounded
/// at the origin. That sentinel compares below every finite bound.
pub fn gamma_mode(p: &GammaParams) -> f64 {
    if p.shape < 1.0 {
        f64::NEG_INFINITY
    } else {
        (p.shape - 1.0) * p.scale
    }
}

/// Method-of-moments fit: shape = mean²/var, scale = var/mean, with the
/// unbiased (n − 1) sample variance.
pub fn mom_estimate(values: &[f64]) -> Result<GammaParams> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "method of moments needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) || !(mean > 0.0) || !var.is_finite() {
        return Err(Error::Degenerate(format!(
            "method of moments needs positive mean and variance (mean {mean}, variance {var})"
        )));
    }
    GammaParams::new(mean * mean / var, var / mean)
}

/// Draw one standard (unit-scale) gamma variate.
///
/// Marsaglia–Tsang squeeze/rejection for shape ≥ 1; for shape < 1 a draw at
/// shape + 1 is multiplied by U^{1/shape}.
pub(crate) fn standard_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.sample(Open01);
        return standard_gamma(shape + 1.0, rng) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let t = 1.0 + c * z;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.sample(Open01);
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 {
            return d * v;
        }
        if u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// `n` i.i.d. gamma draws.
pub fn gamma_sample<R: Rng + ?Sized>(p: &GammaParams, rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| standard_gamma(p.shape, rng) * p.scale)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gp(a: f64, b: f64) -> GammaParams {
        GammaParams::new(a, b).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(GammaParams::new(0.0, 1.0).is_err());
        assert!(GammaParams::new(1.0, -1.0).is_err());
        assert!(GammaParams::new(f64::NAN, 1.0).is_err());
        assert!(GammaParams::new(1.0, f64::INFINITY).is_err());
        assert!(GenGammaParams::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn log_density_examples() {
        assert!((gamma_log_density(1.0, &gp(1.0, 1.0)).unwrap() + 1.0).abs() < 1e-15);
        let want = 2f64.ln() - 2.0;
        assert!((gamma_log_density(2.0, &gp(2.0, 1.0)).unwrap() - want).abs() < 1e-14);
        assert!(gamma_log_density(0.0, &gp(1.0, 1.0)).is_err());
        assert!(gamma_log_density(-1.0, &gp(1.0, 1.0)).is_err());
    }

    #[test]
    fn density_peaks_at_mode_of_two_component_design() {
        let p = gp(8.0, 1.0 / 3.0);
        let mode = gamma_mode(&p);
        assert!((mode - 7.0 / 3.0).abs() < 1e-14);
        let at_mode = gamma_log_density(mode, &p).unwrap();
        for i in 1..=4000 {
            let x = i as f64 * 0.0025;
            assert!(
                gamma_log_density(x, &p).unwrap() <= at_mode + 1e-12,
                "x = {x}"
            );
        }
    }

    #[test]
    fn gen_gamma_examples() {
        let v = gen_gamma_log_density(1.0, &GenGammaParams::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        assert!((v - (2f64.ln() - 1.0)).abs() < 1e-15);
        let v = gen_gamma_log_density(0.5, &GenGammaParams::new(2.0, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(v, gamma_log_density(0.5, &gp(2.0, 1.0)).unwrap());
    }

    #[test]
    fn mode_examples() {
        assert_eq!(gamma_mode(&gp(0.5, 2.0)), f64::NEG_INFINITY);
        assert_eq!(gamma_mode(&gp(1.0, 5.0)), 0.0);
        assert!(gamma_mode(&gp(0.999, 5.0)) < -1e300);
    }

    #[test]
    fn mom_examples() {
        let p = mom_estimate(&[1.0, 2.0, 3.0]).unwrap();
        assert!((p.shape() - 4.0).abs() < 1e-14);
        assert!((p.scale() - 0.5).abs() < 1e-15);
        // mean 2, sample variance 2
        let p = mom_estimate(&[1.0, 3.0]).unwrap();
        assert!((p.shape() - 2.0).abs() < 1e-14 && (p.scale() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mom_rejects_degenerate() {
        assert!(matches!(mom_estimate(&[1.0]), Err(Error::Degenerate(_))));
        assert!(matches!(
            mom_estimate(&[2.0, 2.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn mom_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = gamma_sample(&gp(8.0, 1.0 / 3.0), &mut rng, 10_000);
        let p = mom_estimate(&x).unwrap();
        assert!((p.shape() / 8.0 - 1.0).abs() < 0.10);
        assert!((p.scale() * 3.0 - 1.0).abs() < 0.10);
    }

    fn moments(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn sampler_moments() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gamma_sample(&gp(2.0, 3.0), &mut rng, n);
        let (m, _) = moments(&x);
        let se = (2.0f64 * 9.0 / n as f64).sqrt();
        assert!((m - 6.0).abs() < 3.0 * se, "mean {m}");

        let x = gamma_sample(&gp(0.5, 0.5), &mut rng, n);
        assert!(x.iter().all(|v| *v > 0.0));
        let (m, v) = moments(&x);
        let var = 0.125;
        assert!((m - 0.25).abs() < 3.0 * (var / n as f64).sqrt(), "mean {m}");
        // Var of sample variance: (μ4 − σ⁴)/n with μ4 = 3σ⁴(1 + 2/a) for gamma.
        let mu4 = 3.0 * var * var * (1.0 + 2.0 / 0.5);
        assert!(
            (v - var).abs() < 3.0 * ((mu4 - var * var) / n as f64).sqrt(),
            "var {v}"
        );
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = gp(0.7, 1.3);
        let a = gamma_sample(&p, &mut ChaCha8Rng::seed_from_u64(5), 500);
        let b = gamma_sample(&p, &mut ChaCha8Rng::seed_from_u64(5), 500);
        assert_eq!(a, b);
    }
}
