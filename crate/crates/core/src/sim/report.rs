//! Report types and their CSV/JSON serializations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::{mean, median, quantile_sorted, variance, winsorize};
use super::{Method, SimulationSpec};
use crate::em::FitConfig;
use crate::error::{Error, Result};
use crate::mixture::GammaComponent;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

const PARAMETERS: [&str; 3] = ["weight", "shape", "scale"];

fn parameter(c: &GammaComponent, name: &str) -> f64 {
    match name {
        "weight" => c.weight,
        "shape" => c.shape,
        "scale" => c.scale,
        _ => unreachable!("unknown parameter {name}"),
    }
}

/// One fit of one method to one replicate dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub method: Method,
    pub n: usize,
    pub replicate: usize,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_ms: f64,
    pub final_loglik: Option<f64>,
    /// Fitted components reordered to line up with the true components;
    /// absent when the fit returned an error.
    pub estimates: Option<Vec<GammaComponent>>,
    pub error: Option<String>,
}

/// Error statistics for one parameter over the converged fits of one
/// (method, n) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub method: Method,
    pub n: usize,
    /// 1-based, in true-model order.
    pub component: usize,
    pub parameter: String,
    pub true_value: f64,
    pub fits_used: usize,
    pub mean_estimate: Option<f64>,
    pub median_estimate: Option<f64>,
    pub bias: Option<f64>,
    pub median_bias: Option<f64>,
    pub winsorized_bias: Option<f64>,
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub n: usize,
    pub replicates: usize,
    pub converged: usize,
    /// Fits that returned an error instead of a model.
    pub failed: usize,
    pub convergence_proportion: f64,
    pub time_min_ms: f64,
    pub time_median_ms: f64,
    pub time_max_ms: f64,
    pub median_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub software_version: String,
    pub seed: u64,
    pub workers: usize,
    pub spec: SimulationSpec,
    pub config: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub fits: Vec<FitRecord>,
    pub aggregates: Vec<ParameterSummary>,
    pub summaries: Vec<RunSummary>,
}

impl SimulationReport {
    pub(crate) fn build(
        spec: &SimulationSpec,
        config: &FitConfig,
        workers: usize,
        fits: Vec<FitRecord>,
    ) -> Self {
        let truth = spec.true_model.components();
        let mut aggregates = Vec::new();
        let mut summaries = Vec::new();
        for &method in &spec.methods {
            for &n in &spec.sample_sizes {
                let cell: Vec<&FitRecord> = fits
                    .iter()
                    .filter(|f| f.method == method && f.n == n)
                    .collect();
                let mut times: Vec<f64> = cell.iter().map(|f| f.wall_time_ms).collect();
                times.sort_by(f64::total_cmp);
                let iters: Vec<f64> = cell.iter().map(|f| f.iterations as f64).collect();
                let converged = cell.iter().filter(|f| f.converged).count();
                summaries.push(RunSummary {
                    method,
                    n,
                    replicates: cell.len(),
                    converged,
                    failed: cell.iter().filter(|f| f.estimates.is_none()).count(),
                    convergence_proportion: if cell.is_empty() {
                        0.0
                    } else {
                        converged as f64 / cell.len() as f64
                    },
                    time_min_ms: times.first().copied().unwrap_or(f64::NAN),
                    time_median_ms: if times.is_empty() {
                        f64::NAN
                    } else {
                        quantile_sorted(&times, 0.5)
                    },
                    time_max_ms: times.last().copied().unwrap_or(f64::NAN),
                    median_iterations: median(&iters).unwrap_or(f64::NAN),
                });

                let used: Vec<&[GammaComponent]> = cell
                    .iter()
                    .filter(|f| f.converged)
                    .filter_map(|f| f.estimates.as_deref())
                    .collect();
                for (k, t) in truth.iter().enumerate() {
                    for name in PARAMETERS {
                        let true_value = parameter(t, name);
                        let est: Vec<f64> = used.iter().map(|e| parameter(&e[k], name)).collect();
                        let err: Vec<f64> = est.iter().map(|e| e - true_value).collect();
                        aggregates.push(ParameterSummary {
                            method,
                            n,
                            component: k + 1,
                            parameter: name.to_string(),
                            true_value,
                            fits_used: est.len(),
                            mean_estimate: mean(&est),
                            median_estimate: median(&est),
                            bias: mean(&err),
                            median_bias: median(&err),
                            winsorized_bias: mean(&winsorize(&err, spec.winsor_level)),
                            variance: variance(&est),
                        });
                    }
                }
            }
        }
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            metadata: ReportMetadata {
                software_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: spec.seed,
                workers,
                spec: spec.clone(),
                config: *config,
            },
            fits,
            aggregates,
            summaries,
        }
    }

    pub fn summary(&self, method: Method, n: usize) -> Option<&RunSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.n == n)
    }

    pub fn aggregate(
        &self,
        method: Method,
        n: usize,
        component: usize,
        parameter: &str,
    ) -> Option<&ParameterSummary> {
        self.aggregates.iter().find(|a| {
            a.method == method && a.n == n && a.component == component && a.parameter == parameter
        })
    }

    /// Zeroes every wall-clock field, leaving only scheduling-independent
    /// content.
    pub fn strip_timing(&mut self) {
        for f in &mut self.fits {
            f.wall_time_ms = 0.0;
        }
        for s in &mut self.summaries {
            s.time_min_ms = 0.0;
            s.time_median_ms = 0.0;
            s.time_max_ms = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportTable {
    /// One row per (fit, component, parameter).
    Fits,
    /// One row per (method, n, component, parameter).
    Aggregate,
    /// One row per (method, n).
    Summary,
}

impl ReportTable {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            ReportTable::Fits => &[
                "method",
                "design",
                "n",
                "replicate",
                "component",
                "parameter",
                "true_value",
                "estimate",
                "converged",
                "iterations",
                "wall_time_ms",
            ],
            ReportTable::Aggregate => &[
                "method",
                "design",
                "n",
                "component",
                "parameter",
                "true_value",
                "fits_used",
                "mean_estimate",
                "median_estimate",
                "bias",
                "median_bias",
                "winsorized_bias",
                "variance",
            ],
            ReportTable::Summary => &[
                "method",
                "design",
                "n",
                "replicates",
                "converged",
                "failed",
                "convergence_proportion",
                "time_min_ms",
                "time_median_ms",
                "time_max_ms",
                "median_iterations",
            ],
        }
    }

    fn file_name(self) -> &'static str {
        match self {
            ReportTable::Fits => "fits.csv",
            ReportTable::Aggregate => "aggregate.csv",
            ReportTable::Summary => "summary.csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv(ReportTable),
    Json,
}

/// Shortest round-trip form; exponent notation only for very small or
/// large magnitudes.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_table(report: &SimulationReport, table: ReportTable) -> Result<String> {
    let design = &report.metadata.spec.design;
    let truth = report.metadata.spec.true_model.components();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut put = |rec: Vec<String>| {
        w.write_record(&rec).map_err(|e| Error::Io {
            context: "csv".into(),
            message: e.to_string(),
        })
    };
    put(table.header().iter().map(|s| s.to_string()).collect())?;
    match table {
        ReportTable::Fits => {
            for f in &report.fits {
                for (k, t) in truth.iter().enumerate() {
                    for name in PARAMETERS {
                        put(vec![
                            f.method.to_string(),
                            design.clone(),
                            f.n.to_string(),
                            f.replicate.to_string(),
                            (k + 1).to_string(),
                            name.to_string(),
                            num(parameter(t, name)),
                            opt(f.estimates.as_ref().map(|e| parameter(&e[k], name))),
                            f.converged.to_string(),
                            f.iterations.to_string(),
                            num(f.wall_time_ms),
                        ])?;
                    }
                }
            }
        }
        ReportTable::Aggregate => {
            for a in &report.aggregates {
                put(vec![
                    a.method.to_string(),
                    design.clone(),
                    a.n.to_string(),
                    a.component.to_string(),
                    a.parameter.clone(),
                    num(a.true_value),
                    a.fits_used.to_string(),
                    opt(a.mean_estimate),
                    opt(a.median_estimate),
                    opt(a.bias),
                    opt(a.median_bias),
                    opt(a.winsorized_bias),
                    opt(a.variance),
                ])?;
            }
        }
        ReportTable::Summary => {
            for s in &report.summaries {
                put(vec![
                    s.method.to_string(),
                    design.clone(),
                    s.n.to_string(),
                    s.replicates.to_string(),
                    s.converged.to_string(),
                    s.failed.to_string(),
                    num(s.convergence_proportion),
                    num(s.time_min_ms),
                    num(s.time_median_ms),
                    num(s.time_max_ms),
                    num(s.median_iterations),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io {
        context: "csv".into(),
        message: e.to_string(),
    })?;
    String::from_utf8(bytes).map_err(|e| Error::Io {
        context: "csv".into(),
        message: e.to_string(),
    })
}

/// Serializes a report. Floats are written in shortest round-trip form;
/// missing statistics are empty CSV fields and JSON nulls.
pub fn emit_report(report: &SimulationReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv(table) => csv_table(report, table),
        ReportFormat::Json => serde_json::to_string_pretty(report)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::Io {
                context: "json".into(),
                message: e.to_string(),
            }),
    }
}

/// Writes `fits.csv`, `aggregate.csv`, `summary.csv` and `report.json`
/// into `dir`, creating it if needed.
pub fn write_report(report: &SimulationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let io_err = |p: &Path, e: std::io::Error| Error::Io {
        context: p.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    let outputs = [
        (
            ReportTable::Fits.file_name(),
            ReportFormat::Csv(ReportTable::Fits),
        ),
        (
            ReportTable::Aggregate.file_name(),
            ReportFormat::Csv(ReportTable::Aggregate),
        ),
        (
            ReportTable::Summary.file_name(),
            ReportFormat::Csv(ReportTable::Summary),
        ),
        ("report.json", ReportFormat::Json),
    ];
    for (name, format) in outputs {
        let path = dir.join(name);
        fs::write(&path, emit_report(report, format)?).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
