//! Serialized forms of a fit for stdout and the posterior file.

use cfgmm::{FitConfig, FitResult, FitStatus, ModeBounds, Responsibilities};
use serde::Serialize;

use crate::{CliError, Dataset};

pub const FIT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct OutputComponent {
    /// 1-based.
    pub component: usize,
    pub weight: f64,
    pub shape: f64,
    pub scale: f64,
    pub mean: f64,
    /// `null` when shape < 1 (no interior mode).
    pub mode: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub schema_version: u32,
    pub version: String,
    pub method: String,
    pub input: Dataset,
    pub n: usize,
    pub components: Vec<OutputComponent>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub status: FitStatus,
    pub iterations: usize,
    pub restarts_used: usize,
    pub divergence_restarts: usize,
    pub wall_time_ms: f64,
    pub bounds: Option<ModeBounds>,
    pub config: FitConfig,
    /// Where the seed came from: `flag`, `env` (CFGMM_SEED) or `default`.
    pub seed_source: String,
}

impl FitOutput {
    pub fn new(
        method: &str,
        input: Dataset,
        fit: &FitResult,
        bounds: Option<ModeBounds>,
        config: FitConfig,
        seed_source: &str,
    ) -> Self {
        let components = fit
            .model
            .components()
            .iter()
            .enumerate()
            .map(|(i, c)| OutputComponent {
                component: i + 1,
                weight: c.weight,
                shape: c.shape,
                scale: c.scale,
                mean: c.mean(),
                mode: Some(c.mode()).filter(|m| m.is_finite()),
            })
            .collect();
        Self {
            schema_version: FIT_SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            method: method.to_string(),
            n: input.values.len(),
            input,
            components,
            log_likelihood: fit.final_loglik,
            converged: fit.converged,
            status: fit.status.clone(),
            iterations: fit.iterations,
            restarts_used: fit.restarts_used,
            divergence_restarts: fit.divergence_restarts,
            wall_time_ms: fit.wall_time.as_secs_f64() * 1e3,
            bounds,
            config,
            seed_source: seed_source.to_string(),
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

/// One row per component.
pub fn fit_csv(out: &FitOutput) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "component",
        "weight",
        "shape",
        "scale",
        "mean",
        "mode",
        "log_likelihood",
        "converged",
        "iterations",
        "method",
    ])
    .map_err(csv_err)?;
    for c in &out.components {
        w.write_record([
            c.component.to_string(),
            num(c.weight),
            num(c.shape),
            num(c.scale),
            num(c.mean),
            c.mode.map(num).unwrap_or_default(),
            num(out.log_likelihood),
            out.converged.to_string(),
            out.iterations.to_string(),
            out.method.clone(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// `row,value,z_1..z_K`, with `row` the 1-based line in the input file.
pub fn posteriors_csv(data: &Dataset, z: &Responsibilities) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string(), "value".to_string()];
    header.extend((1..=z.k()).map(|k| format!("z_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, (row, value)) in data.rows.iter().zip(&data.values).enumerate() {
        let mut rec = vec![row.to_string(), num(*value)];
        rec.extend(z.row(i).iter().map(|v| num(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}
