//! The closed-form EM loop: initialization, closed-form M-step, convergence
//! control, divergence restarts and multi-start selection.
//!
//! The driver is shared with the constrained and numerical-MLE estimators;
//! they differ only in how one component's (shape, scale) is recomputed from
//! its z-weighted statistics.

use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::mom_estimate;
use crate::mixture::{
    e_step, GammaComponent, MixtureModel, Responsibilities, Sample, WeightedStats,
};

/// A component whose effective count falls below this fraction of n is
/// treated as collapsed.
pub const EMPTY_COMPONENT_FRACTION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Maximum number of EM iterations per run.
    pub max_iterations: usize,
    /// Stop once |ℓ(t) − ℓ(t−1)| / n falls to or below this.
    pub tolerance: f64,
    /// Independent initializations tried by the multi-start fit.
    pub restarts: usize,
    /// Fresh re-initializations allowed after a run diverges.
    pub max_divergence_retries: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: 1e-8,
            restarts: 5,
            max_divergence_retries: 10,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidInput("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidInput("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// Every divergence retry was used up.
    Diverged {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: MixtureModel,
    pub converged: bool,
    pub status: FitStatus,
    pub iterations: usize,
    /// ℓ at the initial parameters followed by ℓ after every iteration.
    pub loglik_trajectory: Vec<f64>,
    pub final_loglik: f64,
    pub wall_time: Duration,
    pub restarts_used: usize,
    pub divergence_restarts: usize,
}

/// How one component's parameters are re-estimated in the M-step.
pub(crate) trait ComponentUpdate {
    fn update(&self, component: usize, stats: &WeightedStats) -> Result<(f64, f64)>;

    /// Reorders the fitted model for output.
    fn arrange(&self, model: MixtureModel) -> MixtureModel {
        model.canonical()
    }
}

pub(crate) struct ClosedForm;

impl ComponentUpdate for ClosedForm {
    fn update(&self, component: usize, stats: &WeightedStats) -> Result<(f64, f64)> {
        closed_form_update(stats).map_err(|e| match e {
            Error::DegenerateComponent { reason, .. } => {
                Error::DegenerateComponent { component, reason }
            }
            other => other,
        })
    }
}

/// Closed-form shape and scale from z-weighted statistics:
/// â = Σz·Σzx / D and b̂ = D / (Σz)², with D = Σz·Σzx·ln x − Σz·ln x·Σzx.
pub(crate) fn closed_form_update(s: &WeightedStats) -> Result<(f64, f64)> {
    let denom = s.sum_w * s.sum_wxlnx - s.sum_wlnx * s.sum_wx;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::DegenerateComponent {
            component: 0,
            reason: format!("closed-form shape denominator is {denom:e}"),
        });
    }
    let shape = s.sum_w * s.sum_wx / denom;
    let scale = denom / (s.sum_w * s.sum_w);
    Ok((shape, scale))
}

/// Closed-form (shape, scale) for one component given its per-point weights.
pub fn update_component(data: &[f64], z_column: &[f64]) -> Result<(f64, f64)> {
    let stats = WeightedStats::from_weights(data, z_column)?;
    if !(stats.sum_w > 0.0) {
        return Err(Error::InvalidInput("component weights sum to zero".into()));
    }
    closed_form_update(&stats)
}

/// Mixing weights λ_k = Σ_i z_ik / n.
pub fn update_weights(z: &Responsibilities) -> Vec<f64> {
    let n = z.n() as f64;
    z.column_sums().into_iter().map(|s| s / n).collect()
}

/// Draws λ⁽⁰⁾ uniformly on the simplex, cuts the sorted data into K
/// contiguous blocks of proportional size (at least 2 points each), and
/// fits each block by the method of moments.
pub fn initialize<R: Rng + ?Sized>(data: &[f64], k: usize, rng: &mut R) -> Result<MixtureModel> {
    let sample = Sample::new(data)?;
    check_size(sample.len(), k)?;
    initialize_sample(&sample, k, rng)
}

fn check_size(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput(
            "number of components must be >= 1".into(),
        ));
    }
    if n < 2 * k {
        return Err(Error::InvalidInput(format!(
            "{n} observations cannot support {k} components (need >= {})",
            2 * k
        )));
    }
    Ok(())
}

pub(crate) fn initialize_sample<R: Rng + ?Sized>(
    sample: &Sample,
    k: usize,
    rng: &mut R,
) -> Result<MixtureModel> {
    let n = sample.len();
    let mut weights: Vec<f64> = (0..k)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            -u.ln()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut sorted = sample.x.clone();
    sorted.sort_by(f64::total_cmp);

    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0usize);
    let mut cumulative = 0.0;
    for (j, w) in weights.iter().enumerate().take(k - 1) {
        cumulative += w;
        let prev = bounds[j];
        let cut = ((cumulative * n as f64).round() as usize)
            .max(prev + 2)
            .min(n - 2 * (k - 1 - j));
        bounds.push(cut);
    }
    bounds.push(n);

    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let block = &sorted[bounds[j]..bounds[j + 1]];
        let p = mom_estimate(block)?;
        components.push(GammaComponent {
            shape: p.shape(),
            scale: p.scale(),
            weight: weights[j],
        });
    }
    MixtureModel::new(components)
}

enum Attempt {
    Finished {
        model: MixtureModel,
        trajectory: Vec<f64>,
        iterations: usize,
        converged: bool,
    },
    Diverged {
        model: MixtureModel,
        trajectory: Vec<f64>,
        iterations: usize,
        reason: String,
    },
}

fn run_attempt<U: ComponentUpdate + ?Sized>(
    sample: &Sample,
    init: MixtureModel,
    config: &FitConfig,
    update: &U,
    z: &mut Responsibilities,
) -> Attempt {
    let n = sample.len() as f64;
    let k = init.k();
    let mut model = init;
    let mut loglik = e_step(sample, &model, z);
    let mut trajectory = vec![loglik];
    if !loglik.is_finite() {
        return Attempt::Diverged {
            model,
            trajectory,
            iterations: 0,
            reason: "log-likelihood is not finite at the initial parameters".into(),
        };
    }
    for t in 1..=config.max_iterations {
        let stats = WeightedStats::for_all_components(sample, z);
        let mut components = Vec::with_capacity(k);
        for (j, s) in stats.iter().enumerate() {
            let failure = if s.sum_w < EMPTY_COMPONENT_FRACTION * n {
                Some(format!(
                    "component {j} is empty (effective count {:e})",
                    s.sum_w
                ))
            } else {
                match update.update(j, s) {
                    Ok((shape, scale))
                        if shape.is_finite() && shape > 0.0 && scale.is_finite() && scale > 0.0 =>
                    {
                        components.push(GammaComponent {
                            shape,
                            scale,
                            weight: s.sum_w / n,
                        });
                        None
                    }
                    Ok((shape, scale)) => Some(format!(
                        "component {j} diverged to shape {shape}, scale {scale}"
                    )),
                    Err(e) => Some(e.to_string()),
                }
            };
            if let Some(reason) = failure {
                return Attempt::Diverged {
                    model,
                    trajectory,
                    iterations: t - 1,
                    reason,
                };
            }
        }
        let next = MixtureModel::new(components);
        let next = match next {
            Ok(m) => m,
            Err(e) => {
                return Attempt::Diverged {
                    model,
                    trajectory,
                    iterations: t - 1,
                    reason: e.to_string(),
                }
            }
        };
        let next_loglik = e_step(sample, &next, z);
        if !next_loglik.is_finite() {
            return Attempt::Diverged {
                model,
                trajectory,
                iterations: t - 1,
                reason: "log-likelihood became non-finite".into(),
            };
        }
        trajectory.push(next_loglik);
        let criterion = (next_loglik - loglik).abs() / n;
        model = next;
        loglik = next_loglik;
        if criterion <= config.tolerance {
            return Attempt::Finished {
                model,
                trajectory,
                iterations: t,
                converged: true,
            };
        }
    }
    Attempt::Finished {
        model,
        trajectory,
        iterations: config.max_iterations,
        converged: false,
    }
}

/// One EM run (with divergence restarts) using the supplied M-step.
pub(crate) fn fit_once<U: ComponentUpdate + ?Sized>(
    data: &[f64],
    k: usize,
    config: &FitConfig,
    update: &U,
) -> Result<FitResult> {
    config.validate()?;
    let sample = Sample::new(data)?;
    check_size(sample.len(), k)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut z = Responsibilities::zeros(sample.len(), k);
    let mut divergences = 0;
    let mut last_failure: Option<(MixtureModel, Vec<f64>, usize, String)> = None;
    let mut last_init_error = None;

    loop {
        match initialize_sample(&sample, k, &mut rng) {
            Ok(init) => match run_attempt(&sample, init, config, update, &mut z) {
                Attempt::Finished {
                    model,
                    trajectory,
                    iterations,
                    converged,
                } => {
                    let final_loglik = *trajectory.last().expect("trajectory is never empty");
                    return Ok(FitResult {
                        model: update.arrange(model),
                        converged,
                        status: if converged {
                            FitStatus::Converged
                        } else {
                            FitStatus::MaxIterations
                        },
                        iterations,
                        loglik_trajectory: trajectory,
                        final_loglik,
                        wall_time: start.elapsed(),
                        restarts_used: 1,
                        divergence_restarts: divergences,
                    });
                }
                Attempt::Diverged {
                    model,
                    trajectory,
                    iterations,
                    reason,
                } => {
                    log::debug!("EM run diverged: {reason}");
                    last_failure = Some((model, trajectory, iterations, reason));
                }
            },
            Err(e) => {
                log::debug!("initialization failed: {e}");
                last_init_error = Some(e);
            }
        }
        if divergences >= config.max_divergence_retries {
            break;
        }
        divergences += 1;
    }

    match last_failure {
        Some((model, trajectory, iterations, reason)) => {
            let final_loglik = *trajectory.last().expect("trajectory is never empty");
            Ok(FitResult {
                model: update.arrange(model),
                converged: false,
                status: FitStatus::Diverged { reason },
                iterations,
                loglik_trajectory: trajectory,
                final_loglik,
                wall_time: start.elapsed(),
                restarts_used: 1,
                divergence_restarts: divergences,
            })
        }
        None => {
            Err(last_init_error
                .unwrap_or_else(|| Error::Degenerate("initialization failed".into())))
        }
    }
}

/// Runs `config.restarts` seeded runs (seed, seed + 1, …) and keeps the
/// converged run with the highest final log-likelihood, falling back to the
/// best non-converged run when none converged. Ties go to the earlier run.
pub(crate) fn fit_multi<U: ComponentUpdate + ?Sized>(
    data: &[f64],
    k: usize,
    config: &FitConfig,
    update: &U,
) -> Result<FitResult> {
    config.validate()?;
    let start = Instant::now();
    let mut best: Option<FitResult> = None;
    let mut divergences = 0;
    let mut last_error = None;
    for r in 0..config.restarts {
        let cfg = FitConfig {
            seed: config.seed.wrapping_add(r as u64),
            ..*config
        };
        let fit = match fit_once(data, k, &cfg, update) {
            Ok(f) => f,
            Err(e @ Error::InvalidInput(_)) => return Err(e),
            Err(e) => {
                last_error = Some(e);
                continue;
            }
        };
        divergences += fit.divergence_restarts;
        let better = match &best {
            None => true,
            Some(b) => {
                (fit.converged && !b.converged)
                    || (fit.converged == b.converged && fit.final_loglik > b.final_loglik)
            }
        };
        if better {
            best = Some(fit);
        }
    }
    match best {
        Some(mut b) => {
            b.restarts_used = config.restarts;
            b.divergence_restarts = divergences;
            b.wall_time = start.elapsed();
            Ok(b)
        }
        None => {
            Err(last_error
                .unwrap_or_else(|| Error::Degenerate("no restart produced a model".into())))
        }
    }
}

/// Closed-form gamma mixture EM (single start, with divergence restarts).
pub fn em_fit(data: &[f64], k: usize, config: &FitConfig) -> Result<FitResult> {
    fit_once(data, k, config, &ClosedForm)
}

/// Closed-form gamma mixture EM with `config.restarts` random starts.
pub fn multi_restart_fit(data: &[f64], k: usize, config: &FitConfig) -> Result<FitResult> {
    fit_multi(data, k, config, &ClosedForm)
}
