//! Mode-constrained closed-form EM.
//!
//! After every closed-form M-step each component's mode (a − 1)·b is checked
//! against its interval. A component whose mode falls outside is moved onto
//! the nearest violated boundary m: the scale solves the boundary score
//! equation (shape eliminated through a = m/b + 1) and the shape follows.

use serde::{Deserialize, Serialize};

use crate::em::{closed_form_update, fit_multi, fit_once, ComponentUpdate, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::mixture::{MixtureModel, WeightedStats};
use crate::root::newton_bisect;
use crate::special::{digamma_pos, trigamma_pos};

/// Per-unit-weight residual tolerance of the boundary scale solve.
pub const BOUNDARY_RESIDUAL_TOL: f64 = 1e-8;
const BOUNDARY_MAX_ITER: usize = 200;
/// The boundary solve searches b in [mean·1e-12, mean·1e12].
const BRACKET_SPAN: f64 = 1e12;

/// Closed interval for one component's mode. `lower` may be −∞ (which also
/// admits components with no mode, shape < 1) and `upper` may be +∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeInterval {
    #[serde(with = "extended_real")]
    pub lower: f64,
    #[serde(with = "extended_real")]
    pub upper: f64,
}

impl ModeInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let interval = Self { lower, upper };
        interval.validate()?;
        Ok(interval)
    }

    pub fn unbounded() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    fn validate(&self) -> Result<()> {
        let Self { lower, upper } = *self;
        if lower.is_nan() || upper.is_nan() || lower == f64::INFINITY || upper == f64::NEG_INFINITY
        {
            return Err(Error::InvalidBounds(format!(
                "({lower}, {upper}) is not a valid interval"
            )));
        }
        if lower >= upper {
            return Err(Error::InvalidBounds(format!(
                "lower bound {lower} must be below upper bound {upper}"
            )));
        }
        for b in [lower, upper] {
            if b.is_finite() && b < 0.0 {
                return Err(Error::InvalidBounds(format!(
                    "finite mode bound {b} is negative; gamma modes are >= 0 (use -inf to admit components without a mode)"
                )));
            }
        }
        Ok(())
    }

    /// Whether `mode` (possibly −∞) satisfies the closed interval.
    pub fn contains(&self, mode: f64) -> bool {
        if mode == f64::NEG_INFINITY {
            return self.lower == f64::NEG_INFINITY;
        }
        self.lower <= mode && mode <= self.upper
    }

    /// The boundary a violating mode is projected onto, or `None` when the
    /// mode is admissible.
    pub fn projection_target(&self, mode: f64) -> Option<f64> {
        if self.contains(mode) {
            None
        } else if mode < self.lower {
            Some(self.lower)
        } else {
            Some(self.upper)
        }
    }
}

/// One mode interval per mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBounds(Vec<ModeInterval>);

impl ModeBounds {
    pub fn new(intervals: Vec<ModeInterval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidBounds(
                "at least one interval is required".into(),
            ));
        }
        for i in &intervals {
            i.validate()?;
        }
        Ok(Self(intervals))
    }

    /// Builds bounds from (lower, upper) pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(l, u)| ModeInterval { lower: l, upper: u })
                .collect(),
        )
    }

    pub fn unbounded(k: usize) -> Self {
        Self(vec![ModeInterval::unbounded(); k])
    }

    pub fn intervals(&self) -> &[ModeInterval] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether every component's mode satisfies its interval.
    pub fn admits(&self, model: &MixtureModel) -> bool {
        self.0.len() == model.k()
            && self
                .0
                .iter()
                .zip(model.components())
                .all(|(i, c)| i.contains(c.mode()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub shape: f64,
    pub scale: f64,
    pub was_projected: bool,
}

/// Residual of the boundary score equation per unit weight, and its
/// derivative with respect to ln b.
fn boundary_residual(stats: &WeightedStats, mode: f64, scale: f64) -> (f64, f64) {
    let ratio = mode / scale;
    let value = mode + scale - mode * scale.ln() - mode * digamma_pos(ratio + 1.0)
        + mode * stats.weighted_mean_ln()
        - stats.weighted_mean();
    let d_ln_scale = scale - mode + mode * ratio * trigamma_pos(ratio + 1.0);
    (value, d_ln_scale)
}

pub(crate) fn solve_boundary_scale(stats: &WeightedStats, mode: f64, start: f64) -> Result<f64> {
    if !(stats.sum_w > 0.0) {
        return Err(Error::InvalidInput("component weights sum to zero".into()));
    }
    if !(mode.is_finite() && mode >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "boundary mode must be finite and >= 0, got {mode}"
        )));
    }
    let mean = stats.weighted_mean();
    if mode == 0.0 {
        // The residual reduces to b − mean.
        return Ok(mean);
    }
    let lo = (mean / BRACKET_SPAN).ln();
    let hi = (mean * BRACKET_SPAN).ln();
    let root = newton_bisect(
        |t| boundary_residual(stats, mode, t.exp()),
        lo,
        hi,
        start.ln(),
        BOUNDARY_RESIDUAL_TOL,
        BOUNDARY_MAX_ITER,
    )?;
    if !root.within_tolerance {
        log::debug!(
            "boundary solve stopped at machine precision with residual {:e}",
            root.residual
        );
    }
    Ok(root.x.exp())
}

/// Solves the boundary score equation for the scale at a fixed mode `m ≥ 0`:
/// Σ z_i (m + b − m ln b − m ψ(m/b + 1) + m ln x_i − x_i) = 0.
pub fn newton_solve_b(data: &[f64], z_column: &[f64], mode: f64) -> Result<f64> {
    let stats = WeightedStats::from_weights(data, z_column)?;
    let start = closed_form_update(&stats)
        .map(|(_, b)| b)
        .unwrap_or_else(|_| stats.weighted_mean());
    solve_boundary_scale(&stats, mode, start)
}

pub(crate) fn project_with_stats(
    stats: &WeightedStats,
    shape: f64,
    scale: f64,
    interval: &ModeInterval,
) -> Result<Projection> {
    let mode = if shape < 1.0 {
        f64::NEG_INFINITY
    } else {
        (shape - 1.0) * scale
    };
    match interval.projection_target(mode) {
        None => Ok(Projection {
            shape,
            scale,
            was_projected: false,
        }),
        Some(target) => {
            let b = solve_boundary_scale(stats, target, scale)?;
            Ok(Projection {
                shape: target / b + 1.0,
                scale: b,
                was_projected: true,
            })
        }
    }
}

/// Keeps (shape, scale) when its mode lies in `interval`; otherwise moves the
/// mode onto the nearest violated boundary and re-solves scale and shape
/// against the weighted data.
pub fn check_and_project(
    data: &[f64],
    z_column: &[f64],
    shape: f64,
    scale: f64,
    interval: &ModeInterval,
) -> Result<Projection> {
    interval.validate()?;
    let stats = WeightedStats::from_weights(data, z_column)?;
    project_with_stats(&stats, shape, scale, interval)
}

struct Constrained<'a> {
    bounds: &'a ModeBounds,
}

impl ComponentUpdate for Constrained<'_> {
    fn update(&self, component: usize, stats: &WeightedStats) -> Result<(f64, f64)> {
        let (shape, scale) = closed_form_update(stats).map_err(|e| match e {
            Error::DegenerateComponent { reason, .. } => {
                Error::DegenerateComponent { component, reason }
            }
            other => other,
        })?;
        let p =
            project_with_stats(stats, shape, scale, &self.bounds.0[component]).map_err(|e| {
                Error::ConstrainedUpdate {
                    component,
                    reason: e.to_string(),
                }
            })?;
        Ok((p.shape, p.scale))
    }

    /// Canonical order when it keeps every component inside the interval at
    /// its new position; otherwise the bound order is kept.
    fn arrange(&self, model: MixtureModel) -> MixtureModel {
        let canonical = model.canonical();
        if self.bounds.admits(&canonical) {
            canonical
        } else {
            model
        }
    }
}

fn check_bounds(k: usize, bounds: &ModeBounds) -> Result<()> {
    if bounds.len() != k {
        return Err(Error::InvalidBounds(format!(
            "{} intervals given for {k} components",
            bounds.len()
        )));
    }
    for i in bounds.intervals() {
        i.validate()?;
    }
    Ok(())
}

/// Mode-constrained closed-form EM (single start, with divergence restarts).
pub fn constrained_em_fit(
    data: &[f64],
    k: usize,
    bounds: &ModeBounds,
    config: &FitConfig,
) -> Result<FitResult> {
    check_bounds(k, bounds)?;
    fit_once(data, k, config, &Constrained { bounds })
}

/// Mode-constrained closed-form EM with `config.restarts` random starts.
pub fn constrained_multi_restart_fit(
    data: &[f64],
    k: usize,
    bounds: &ModeBounds,
    config: &FitConfig,
) -> Result<FitResult> {
    check_bounds(k, bounds)?;
    fit_multi(data, k, config, &Constrained { bounds })
}

/// Serializes ±∞ as the strings "inf" / "-inf" so JSON stays valid.
mod extended_real {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!(
                    "invalid extended real {other:?}"
                ))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::{gamma_sample, GammaParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draws(shape: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
        gamma_sample(
            &GammaParams::new(shape, scale).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(seed),
            n,
        )
    }

    #[test]
    fn interval_validation() {
        assert!(ModeInterval::new(0.0, 5.0).is_ok());
        assert!(ModeInterval::new(f64::NEG_INFINITY, 0.0).is_ok());
        assert!(ModeInterval::new(5.0, f64::INFINITY).is_ok());
        assert!(ModeInterval::new(5.0, 5.0).is_err());
        assert!(ModeInterval::new(6.0, 5.0).is_err());
        assert!(ModeInterval::new(-1.0, 5.0).is_err());
        assert!(ModeInterval::new(f64::NEG_INFINITY, -2.0).is_err());
        assert!(ModeInterval::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn no_mode_sentinel_needs_open_lower_bound() {
        let open = ModeInterval::new(f64::NEG_INFINITY, 0.0).unwrap();
        let closed = ModeInterval::new(0.0, 5.0).unwrap();
        assert!(open.contains(f64::NEG_INFINITY));
        assert!(!closed.contains(f64::NEG_INFINITY));
        assert_eq!(closed.projection_target(f64::NEG_INFINITY), Some(0.0));
        assert_eq!(closed.projection_target(7.0), Some(5.0));
        assert_eq!(open.projection_target(0.5), Some(0.0));
    }

    #[test]
    fn interior_mode_is_unchanged() {
        let x = draws(8.0, 1.0 / 3.0, 100, 1);
        let z = vec![1.0; x.len()];
        let p = check_and_project(
            &x,
            &z,
            8.0,
            1.0 / 3.0,
            &ModeInterval::new(0.0, 5.0).unwrap(),
        )
        .unwrap();
        assert_eq!(
            p,
            Projection {
                shape: 8.0,
                scale: 1.0 / 3.0,
                was_projected: false
            }
        );
        let p = check_and_project(
            &x,
            &z,
            0.5,
            2.0,
            &ModeInterval::new(f64::NEG_INFINITY, 0.0).unwrap(),
        )
        .unwrap();
        assert!(!p.was_projected);
    }

    #[test]
    fn projection_onto_zero_gives_exponential() {
        let x = draws(3.0, 1.0, 500, 2);
        let z: Vec<f64> = (0..x.len()).map(|i| 0.1 + (i % 7) as f64 * 0.1).collect();
        let mean = x.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / z.iter().sum::<f64>();
        let p = check_and_project(
            &x,
            &z,
            3.0,
            1.0,
            &ModeInterval::new(f64::NEG_INFINITY, 0.0).unwrap(),
        )
        .unwrap();
        assert!(p.was_projected);
        assert_eq!(p.shape, 1.0);
        assert!((p.scale - mean).abs() < 1e-12 * mean);
        assert_eq!(newton_solve_b(&x, &z, 0.0).unwrap(), p.scale);
    }

    #[test]
    fn projection_lands_on_boundary() {
        let x = draws(8.0, 1.0 / 3.0, 2000, 3);
        let z = vec![1.0; x.len()];
        let interval = ModeInterval::new(3.0, 5.0).unwrap();
        let p = check_and_project(&x, &z, 8.0, 1.0 / 3.0, &interval).unwrap();
        assert!(p.was_projected);
        assert!(((p.shape - 1.0) * p.scale - 3.0).abs() < 1e-10 * 3.0);
    }

    #[test]
    fn boundary_solve_recovers_true_scale_at_true_mode() {
        let x = draws(8.0, 1.0 / 3.0, 10_000, 4);
        let b = newton_solve_b(&x, &vec![1.0; x.len()], 7.0 / 3.0).unwrap();
        assert!((b * 3.0 - 1.0).abs() < 0.05, "{b}");
    }

    #[test]
    fn bounds_serialize_infinities() {
        let b = ModeBounds::from_pairs(&[(f64::NEG_INFINITY, 0.0), (0.0, f64::INFINITY)]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(
            s,
            r#"[{"lower":"-inf","upper":0.0},{"lower":0.0,"upper":"inf"}]"#
        );
        let back: ModeBounds = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn bounds_count_must_match() {
        let x = draws(2.0, 1.0, 100, 5);
        let b = ModeBounds::unbounded(3);
        assert!(matches!(
            constrained_em_fit(&x, 2, &b, &FitConfig::default()),
            Err(Error::InvalidBounds(_))
        ));
    }
}
