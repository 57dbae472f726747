//! Seeded simulation experiments comparing the three estimators on known
//! mixtures: paired data across methods, component matching against the
//! truth, and bias/variance/timing/convergence summaries.

mod report;
mod stats;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::baseline_multi_restart_fit;
use crate::constrained::{constrained_multi_restart_fit, ModeBounds};
use crate::em::{multi_restart_fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::gamma::standard_gamma;
use crate::mixture::MixtureModel;

pub use report::{
    emit_report, write_report, FitRecord, ParameterSummary, ReportFormat, ReportMetadata,
    ReportTable, RunSummary, SimulationReport, REPORT_SCHEMA_VERSION,
};
pub use stats::{match_by_means, median, quantile_sorted, winsorize, EXHAUSTIVE_MATCH_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cfgmm,
    ConstrainedCfgmm,
    BaselineGmm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cfgmm, Method::ConstrainedCfgmm, Method::BaselineGmm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cfgmm => "cfgmm",
            Method::ConstrainedCfgmm => "constrained-cfgmm",
            Method::BaselineGmm => "baseline-gmm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cfgmm" => Ok(Method::Cfgmm),
            "constrained-cfgmm" | "constrained" => Ok(Method::ConstrainedCfgmm),
            "baseline-gmm" | "baseline" | "gmm" => Ok(Method::BaselineGmm),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// The two built-in simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "2comp")]
    TwoComponent,
    #[serde(rename = "3comp")]
    ThreeComponent,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::TwoComponent => "2comp",
            Preset::ThreeComponent => "3comp",
        }
    }

    pub fn model(self) -> MixtureModel {
        let m = match self {
            Preset::TwoComponent => {
                MixtureModel::from_parts(&[0.3, 0.7], &[0.5, 8.0], &[0.5, 1.0 / 3.0])
            }
            Preset::ThreeComponent => {
                MixtureModel::from_parts(&[0.3, 0.5, 0.2], &[0.5, 6.0, 8.0], &[2.0, 1.0 / 3.0, 1.0])
            }
        };
        m.expect("preset parameters are valid")
    }

    pub fn bounds(self) -> ModeBounds {
        let inf = f64::INFINITY;
        let pairs: &[(f64, f64)] = match self {
            Preset::TwoComponent => &[(-inf, 0.0), (0.0, 5.0)],
            Preset::ThreeComponent => &[(-inf, 0.0), (0.0, 5.0), (5.0, 15.0)],
        };
        ModeBounds::from_pairs(pairs).expect("preset bounds are valid")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "2comp" => Ok(Preset::TwoComponent),
            "3comp" => Ok(Preset::ThreeComponent),
            other => Err(Error::InvalidInput(format!(
                "unknown preset '{other}' (expected 2comp or 3comp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    /// Label written to every report row.
    pub design: String,
    pub true_model: MixtureModel,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub bounds: Option<ModeBounds>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub winsor_level: f64,
    /// Worker threads; 0 means one per available core.
    #[serde(default)]
    pub workers: usize,
}

impl SimulationSpec {
    /// Desk-scale defaults for a preset: n ∈ {100, 1000, 10000}, 100
    /// replicates, all methods, 95% winsorization.
    pub fn preset(preset: Preset) -> Self {
        Self {
            design: preset.name().to_string(),
            true_model: preset.model(),
            sample_sizes: vec![100, 1000, 10_000],
            replicates: 100,
            bounds: Some(preset.bounds()),
            methods: Method::ALL.to_vec(),
            seed: 0,
            winsor_level: 0.95,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.true_model.k();
        if self.replicates < 1 {
            return Err(Error::InvalidInput("replicates must be >= 1".into()));
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::InvalidInput(
                "at least one sample size is required".into(),
            ));
        }
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < 2 * k) {
            return Err(Error::InvalidInput(format!(
                "sample size {n} is below 2K = {}",
                2 * k
            )));
        }
        if !(self.winsor_level > 0.0 && self.winsor_level <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "winsor_level must be in (0, 1], got {}",
                self.winsor_level
            )));
        }
        match &self.bounds {
            Some(b) if b.len() != k => {
                return Err(Error::InvalidBounds(format!(
                    "{} intervals given for {k} components",
                    b.len()
                )));
            }
            None if self.methods.contains(&Method::ConstrainedCfgmm) => {
                return Err(Error::InvalidBounds(
                    "constrained-cfgmm selected without mode bounds".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// Draws a component label from categorical(λ), then a value from that
/// component, n times.
pub fn generate_mixture_sample<R: Rng + ?Sized>(
    model: &MixtureModel,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    let comps = model.components();
    let last = comps.len() - 1;
    (0..n)
        .map(|_| {
            let mut label = last;
            if last > 0 {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, c) in comps.iter().enumerate().take(last) {
                    acc += c.weight;
                    if u < acc {
                        label = k;
                        break;
                    }
                }
            }
            let c = &comps[label];
            loop {
                let x = c.scale * standard_gamma(c.shape, rng);
                if x > 0.0 {
                    break x;
                }
            }
        })
        .collect()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for one work unit, independent of scheduling order.
pub fn derive_seed(master: u64, replicate: usize, size_index: usize, stream: u64) -> u64 {
    [replicate as u64, size_index as u64, stream]
        .iter()
        .fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p)))
}

const DATA_STREAM: u64 = 0;
const FIT_STREAM: u64 = 1;

/// The dataset for one (replicate, size index) pair. Every method in that
/// pair is fitted to exactly this sample.
pub fn replicate_data(spec: &SimulationSpec, replicate: usize, size_index: usize) -> Vec<f64> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, replicate, size_index, DATA_STREAM));
    generate_mixture_sample(&spec.true_model, spec.sample_sizes[size_index], &mut rng)
}

fn fit_method(
    method: Method,
    data: &[f64],
    k: usize,
    bounds: Option<&ModeBounds>,
    config: &FitConfig,
) -> Result<FitResult> {
    match method {
        Method::Cfgmm => multi_restart_fit(data, k, config),
        Method::ConstrainedCfgmm => {
            let b = bounds
                .ok_or_else(|| Error::InvalidBounds("no bounds for constrained fit".into()))?;
            constrained_multi_restart_fit(data, k, b, config)
        }
        Method::BaselineGmm => baseline_multi_restart_fit(data, k, config),
    }
}

fn run_unit(
    spec: &SimulationSpec,
    config: &FitConfig,
    replicate: usize,
    size_index: usize,
) -> Vec<FitRecord> {
    let data = replicate_data(spec, replicate, size_index);
    let k = spec.true_model.k();
    let true_means: Vec<f64> = spec
        .true_model
        .components()
        .iter()
        .map(|c| c.mean())
        .collect();
    let cfg = FitConfig {
        seed: derive_seed(spec.seed, replicate, size_index, FIT_STREAM),
        ..*config
    };
    spec.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = fit_method(method, &data, k, spec.bounds.as_ref(), &cfg);
            let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok(fit) => {
                    let fitted_means: Vec<f64> =
                        fit.model.components().iter().map(|c| c.mean()).collect();
                    let assignment = match_by_means(&true_means, &fitted_means);
                    let comps = fit.model.components();
                    FitRecord {
                        method,
                        n: data.len(),
                        replicate,
                        converged: fit.converged,
                        iterations: fit.iterations,
                        wall_time_ms,
                        final_loglik: Some(fit.final_loglik).filter(|v| v.is_finite()),
                        estimates: Some(assignment.iter().map(|&j| comps[j]).collect()),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!(
                        "{method} fit failed (n={}, replicate {replicate}): {e}",
                        data.len()
                    );
                    FitRecord {
                        method,
                        n: data.len(),
                        replicate,
                        converged: false,
                        iterations: 0,
                        wall_time_ms,
                        final_loglik: None,
                        estimates: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect()
}

/// Runs every method on every (replicate, sample size) pair and aggregates.
/// `config.seed` is not used; per-fit seeds derive from `spec.seed`.
pub fn run_experiment(spec: &SimulationSpec, config: &FitConfig) -> Result<SimulationReport> {
    spec.validate()?;
    config.validate()?;
    let workers = spec.worker_count();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let units: Vec<(usize, usize)> = (0..spec.sample_sizes.len())
        .flat_map(|s| (0..spec.replicates).map(move |r| (r, s)))
        .collect();
    let mut fits: Vec<FitRecord> = pool.install(|| {
        units
            .par_iter()
            .flat_map_iter(|&(r, s)| run_unit(spec, config, r, s))
            .collect()
    });
    fits.sort_by_key(|f| (f.method, f.n, f.replicate));
    Ok(SimulationReport::build(spec, config, workers, fits))
}
