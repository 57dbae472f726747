//! Mixture model types, the E-step and the mixture log-likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::GammaParams;

/// Tolerance on Σλ = 1 when validating a model.
const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaComponent {
    pub shape: f64,
    pub scale: f64,
    pub weight: f64,
}

impl GammaComponent {
    pub fn params(&self) -> Result<GammaParams> {
        GammaParams::new(self.shape, self.scale)
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    /// Mode (a − 1)·b, or −∞ for shape < 1.
    pub fn mode(&self) -> f64 {
        if self.shape < 1.0 {
            f64::NEG_INFINITY
        } else {
            (self.shape - 1.0) * self.scale
        }
    }

    fn is_valid(&self) -> bool {
        self.shape.is_finite()
            && self.shape > 0.0
            && self.scale.is_finite()
            && self.scale > 0.0
            && (0.0..=1.0).contains(&self.weight)
    }
}

/// A K-component gamma mixture Σ_k λ_k Gamma(a_k, b_k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    components: Vec<GammaComponent>,
}

impl MixtureModel {
    pub fn new(components: Vec<GammaComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput(
                "a mixture needs at least one component".into(),
            ));
        }
        if let Some((k, c)) = components.iter().enumerate().find(|(_, c)| !c.is_valid()) {
            return Err(Error::InvalidInput(format!(
                "component {k} is invalid: {c:?}"
            )));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self { components })
    }

    /// Builds a model from parallel weight/shape/scale slices.
    pub fn from_parts(weights: &[f64], shapes: &[f64], scales: &[f64]) -> Result<Self> {
        if weights.len() != shapes.len() || shapes.len() != scales.len() {
            return Err(Error::InvalidInput(
                "weights, shapes and scales differ in length".into(),
            ));
        }
        Self::new(
            weights
                .iter()
                .zip(shapes)
                .zip(scales)
                .map(|((&weight, &shape), &scale)| GammaComponent {
                    shape,
                    scale,
                    weight,
                })
                .collect(),
        )
    }

    pub fn components(&self) -> &[GammaComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Mixture mean Σ λ_k a_k b_k.
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean()).sum()
    }

    /// Permutation that sorts components ascending by mean, then by weight.
    pub(crate) fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.k()).collect();
        idx.sort_by(|&i, &j| {
            let (a, b) = (&self.components[i], &self.components[j]);
            a.mean()
                .total_cmp(&b.mean())
                .then(a.weight.total_cmp(&b.weight))
        });
        idx
    }

    pub(crate) fn permuted(&self, order: &[usize]) -> Self {
        Self {
            components: order.iter().map(|&i| self.components[i]).collect(),
        }
    }

    /// Returns the model with components in canonical order.
    pub fn canonical(&self) -> Self {
        self.permuted(&self.canonical_order())
    }
}

/// Positive data with cached logarithms.
#[derive(Debug, Clone)]
pub(crate) struct Sample {
    pub x: Vec<f64>,
    pub ln_x: Vec<f64>,
    pub x_ln_x: Vec<f64>,
}

impl Sample {
    pub fn new(data: &[f64]) -> Result<Self> {
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "observation {i} is {v}; gamma mixtures need finite positive data"
            )));
        }
        let ln_x: Vec<f64> = data.iter().map(|v| v.ln()).collect();
        let x_ln_x = data.iter().zip(&ln_x).map(|(x, l)| x * l).collect();
        Ok(Self {
            x: data.to_vec(),
            ln_x,
            x_ln_x,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }
}

/// Posterior membership probabilities z_ik, stored row-major (n × K).
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    values: Vec<f64>,
    n: usize,
    k: usize,
    underflow_rows: usize,
}

impl Responsibilities {
    pub(crate) fn zeros(n: usize, k: usize) -> Self {
        Self {
            values: vec![0.0; n * k],
            n,
            k,
            underflow_rows: 0,
        }
    }

    /// Builds responsibilities from explicit rows; each row must be a
    /// probability vector (entries in [0, 1] summing to 1 within 1e-12).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map(Vec::len).unwrap_or(0);
        if k == 0 {
            return Err(Error::InvalidInput(
                "responsibilities need at least one row and column".into(),
            ));
        }
        let mut values = Vec::with_capacity(rows.len() * k);
        for (i, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.len() != k
                || row.iter().any(|z| !(0.0..=1.0).contains(z))
                || (sum - 1.0).abs() > WEIGHT_SUM_TOL
            {
                return Err(Error::InvalidInput(format!(
                    "row {i} is not a probability vector: {row:?}"
                )));
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            values,
            n: rows.len(),
            k,
            underflow_rows: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.k)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    /// Σ_i z_ik for every k: the effective component counts.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for row in self.rows() {
            for (s, z) in sums.iter_mut().zip(row) {
                *s += z;
            }
        }
        sums
    }

    /// Rows where every component density underflowed; these were set uniform.
    pub fn underflow_rows(&self) -> usize {
        self.underflow_rows
    }
}

/// Per-component log weight plus density normalizer, hoisted out of the row loop.
struct ComponentTerms {
    shape_m1: f64,
    inv_scale: f64,
    offset: f64,
}

fn component_terms(model: &MixtureModel) -> Vec<ComponentTerms> {
    model
        .components()
        .iter()
        .map(|c| ComponentTerms {
            shape_m1: c.shape - 1.0,
            inv_scale: 1.0 / c.scale,
            offset: c.weight.ln() - c.shape * c.scale.ln() - crate::special::ln_gamma_pos(c.shape),
        })
        .collect()
}

/// Fills `z` with responsibilities under `model` and returns the observed
/// log-likelihood at `model`. Rows are normalized in log space after
/// subtracting the row maximum.
pub(crate) fn e_step(sample: &Sample, model: &MixtureModel, z: &mut Responsibilities) -> f64 {
    let k = model.k();
    debug_assert_eq!(z.k, k);
    debug_assert_eq!(z.n, sample.len());
    let terms = component_terms(model);
    let mut loglik = 0.0;
    let mut underflow = 0;
    for ((&x, &ln_x), row) in sample
        .x
        .iter()
        .zip(&sample.ln_x)
        .zip(z.values.chunks_exact_mut(k))
    {
        let mut max = f64::NEG_INFINITY;
        for (slot, t) in row.iter_mut().zip(&terms) {
            let lp = t.shape_m1 * ln_x - x * t.inv_scale + t.offset;
            *slot = lp;
            if lp > max {
                max = lp;
            }
        }
        if !max.is_finite() {
            // No component gives this point any density; fall back to uniform.
            row.fill(1.0 / k as f64);
            underflow += 1;
            loglik = f64::NEG_INFINITY;
            continue;
        }
        let mut sum = 0.0;
        for slot in row.iter_mut() {
            *slot = (*slot - max).exp();
            sum += *slot;
        }
        let inv = 1.0 / sum;
        for slot in row.iter_mut() {
            *slot *= inv;
        }
        loglik += max + sum.ln();
    }
    if underflow > 0 {
        log::warn!("{underflow} observation(s) had zero density under every component");
    }
    z.underflow_rows = underflow;
    loglik
}

/// Posterior membership probabilities of each observation.
pub fn responsibilities(data: &[f64], model: &MixtureModel) -> Result<Responsibilities> {
    let sample = Sample::new(data)?;
    let mut z = Responsibilities::zeros(sample.len(), model.k());
    e_step(&sample, model, &mut z);
    Ok(z)
}

/// Observed-data log-likelihood Σ_i ln Σ_k λ_k f(x_i | a_k, b_k).
///
/// Returns −∞ when some observation has zero density under every component.
pub fn log_likelihood(data: &[f64], model: &MixtureModel) -> Result<f64> {
    let sample = Sample::new(data)?;
    Ok(log_likelihood_sample(&sample, model))
}

pub(crate) fn log_likelihood_sample(sample: &Sample, model: &MixtureModel) -> f64 {
    let terms = component_terms(model);
    let mut total = 0.0;
    for (&x, &ln_x) in sample.x.iter().zip(&sample.ln_x) {
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for t in &terms {
            let lp = t.shape_m1 * ln_x - x * t.inv_scale + t.offset;
            if lp > max {
                sum = sum * (max - lp).exp() + 1.0;
                max = lp;
            } else {
                sum += (lp - max).exp();
            }
        }
        if !max.is_finite() {
            return f64::NEG_INFINITY;
        }
        total += max + sum.ln();
    }
    total
}

/// z-weighted sufficient statistics for one component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WeightedStats {
    /// Σ z
    pub sum_w: f64,
    /// Σ z·x
    pub sum_wx: f64,
    /// Σ z·ln x
    pub sum_wlnx: f64,
    /// Σ z·x·ln x
    pub sum_wxlnx: f64,
}

impl WeightedStats {
    /// Statistics of `data` weighted by `weights` (one weight per observation).
    pub fn from_weights(data: &[f64], weights: &[f64]) -> Result<Self> {
        if data.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} observations but {} weights",
                data.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "weights must be finite and >= 0, got {w}"
            )));
        }
        let sample = Sample::new(data)?;
        let mut s = Self::default();
        for (i, &w) in weights.iter().enumerate() {
            s.add(w, sample.x[i], sample.ln_x[i], sample.x_ln_x[i]);
        }
        Ok(s)
    }

    #[inline]
    fn add(&mut self, w: f64, x: f64, ln_x: f64, x_ln_x: f64) {
        self.sum_w += w;
        self.sum_wx += w * x;
        self.sum_wlnx += w * ln_x;
        self.sum_wxlnx += w * x_ln_x;
    }

    pub fn weighted_mean(&self) -> f64 {
        self.sum_wx / self.sum_w
    }

    pub fn weighted_mean_ln(&self) -> f64 {
        self.sum_wlnx / self.sum_w
    }

    /// One pass over the data accumulating the statistics of every column.
    pub(crate) fn for_all_components(sample: &Sample, z: &Responsibilities) -> Vec<Self> {
        let mut stats = vec![Self::default(); z.k];
        for (i, row) in z.rows().enumerate() {
            let (x, l, xl) = (sample.x[i], sample.ln_x[i], sample.x_ln_x[i]);
            for (s, &w) in stats.iter_mut().zip(row) {
                s.add(w, x, l, xl);
            }
        }
        stats
    }
}

/// Weighted gamma log-likelihood Σ z_i ln f(x_i | a, b) from sufficient statistics.
pub fn weighted_gamma_loglik(stats: &WeightedStats, shape: f64, scale: f64) -> f64 {
    (shape - 1.0) * stats.sum_wlnx - stats.sum_wx / scale
        + stats.sum_w * (-shape * scale.ln() - crate::special::ln_gamma_pos(shape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::gamma_log_density;

    fn model(parts: &[(f64, f64, f64)]) -> MixtureModel {
        MixtureModel::new(
            parts
                .iter()
                .map(|&(weight, shape, scale)| GammaComponent {
                    shape,
                    scale,
                    weight,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_models() {
        assert!(MixtureModel::new(vec![]).is_err());
        assert!(MixtureModel::from_parts(&[0.5, 0.6], &[1.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(MixtureModel::from_parts(&[1.0], &[-1.0], &[1.0]).is_err());
    }

    #[test]
    fn single_component_responsibilities_are_one() {
        let z = responsibilities(&[0.1, 1.0, 5.0], &model(&[(1.0, 2.0, 1.0)])).unwrap();
        assert!(z.rows().all(|r| r == [1.0]));
    }

    #[test]
    fn identical_components_split_evenly() {
        let z = responsibilities(
            &[0.1, 1.0, 5.0],
            &model(&[(0.5, 2.0, 1.0), (0.5, 2.0, 1.0)]),
        )
        .unwrap();
        for r in z.rows() {
            assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn exponential_and_shape_two_tie_at_one() {
        // f1(1) = e^-1 and f2(1) = 1·e^-1
        let z = responsibilities(&[1.0], &model(&[(0.5, 1.0, 1.0), (0.5, 2.0, 1.0)])).unwrap();
        assert!((z.row(0)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loglik_examples() {
        let data = [0.5, 1.0, 2.0, 3.5];
        let ll = log_likelihood(&data, &model(&[(1.0, 1.0, 1.0)])).unwrap();
        assert!((ll + 7.0).abs() < 1e-14);

        let doubled: Vec<f64> = data.iter().chain(data.iter()).copied().collect();
        let m = model(&[(0.4, 0.7, 1.3), (0.6, 5.0, 0.4)]);
        let a = log_likelihood(&data, &m).unwrap();
        let b = log_likelihood(&doubled, &m).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);

        // 50-digit brute-force per-point density sums
        let ll = log_likelihood(&[0.5, 1.0, 2.0], &m).unwrap();
        assert!((ll - -3.67204780969999).abs() < 1e-12, "{ll}");
    }

    #[test]
    fn loglik_matches_direct_density_sum() {
        let m = model(&[(0.3, 0.5, 0.5), (0.7, 8.0, 1.0 / 3.0)]);
        let data = [0.01, 0.3, 1.7, 2.4, 6.0];
        let direct: f64 = data
            .iter()
            .map(|&x| {
                m.components()
                    .iter()
                    .map(|c| c.weight * gamma_log_density(x, &c.params().unwrap()).unwrap().exp())
                    .sum::<f64>()
                    .ln()
            })
            .sum();
        let ll = log_likelihood(&data, &m).unwrap();
        assert!((ll - direct).abs() < 1e-12);
    }

    #[test]
    fn extreme_points_stay_normalized() {
        let m = model(&[(0.5, 400.0, 0.01), (0.5, 900.0, 0.01)]);
        let z = responsibilities(&[1e-9, 1e9], &m).unwrap();
        for r in z.rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(log_likelihood(&[1e-9], &m).unwrap().is_finite());
    }

    #[test]
    fn zero_weight_component_gets_no_mass() {
        let m = model(&[(1.0, 2.0, 1.0), (0.0, 3.0, 1.0)]);
        let z = responsibilities(&[0.5, 2.0], &m).unwrap();
        assert!(z.rows().all(|r| r[1] == 0.0 && r[0] == 1.0));
    }

    #[test]
    fn canonical_order_sorts_by_mean() {
        let m = model(&[(0.2, 8.0, 1.0), (0.5, 6.0, 1.0 / 3.0), (0.3, 0.5, 2.0)]);
        let c = m.canonical();
        let means: Vec<f64> = c.components().iter().map(|c| c.mean()).collect();
        assert_eq!(means, vec![1.0, 2.0, 8.0]);
    }

    #[test]
    fn weighted_stats_match_definition() {
        let s = WeightedStats::from_weights(&[1.0, 2.0, 3.0], &[1.0, 0.5, 0.0]).unwrap();
        assert_eq!(s.sum_w, 1.5);
        assert_eq!(s.sum_wx, 2.0);
        assert!((s.sum_wlnx - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!(WeightedStats::from_weights(&[1.0], &[-1.0]).is_err());
        assert!(WeightedStats::from_weights(&[1.0, 2.0], &[1.0]).is_err());
    }
}
