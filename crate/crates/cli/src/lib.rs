//! Data ingestion, transforms and argument parsing behind the `cfgmm` binary.

mod ingest;
mod output;

pub use ingest::{
    ingest_csv, transform_mif, ColumnSelector, Dataset, HeaderMode, IngestOptions, Transform,
};
pub use output::{fit_csv, posteriors_csv, FitOutput, OutputComponent};

use cfgmm::{ModeBounds, ModeInterval};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or flag values.
    #[error("{0}")]
    Usage(String),
    /// Input that was read but cannot be fitted.
    #[error("{0}")]
    Data(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
        }
    }
}

impl From<cfgmm::Error> for CliError {
    fn from(e: cfgmm::Error) -> Self {
        match e {
            cfgmm::Error::Io { context, message } => CliError::Io {
                path: context,
                message,
            },
            cfgmm::Error::InvalidBounds(m) => CliError::Usage(format!("invalid bounds: {m}")),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn parse_bound(token: &str) -> Result<f64, CliError> {
    let t = token.trim();
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => t
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| CliError::Usage(format!("cannot parse bound '{t}'"))),
    }
}

/// Parses `"l1,u1;l2,u2;…"` into `k` mode intervals. `-inf` is accepted
/// as a lower bound and `inf` as an upper bound.
pub fn parse_bounds(text: &str, k: usize) -> Result<ModeBounds, CliError> {
    let intervals = text
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let parts: Vec<&str> = pair.split(',').collect();
            let [l, u] = parts.as_slice() else {
                return Err(CliError::Usage(format!(
                    "bound '{pair}' is not of the form lower,upper"
                )));
            };
            let (l, u) = (parse_bound(l)?, parse_bound(u)?);
            ModeInterval::new(l, u)
                .map_err(|e| CliError::Usage(format!("bound '{}': {e}", pair.trim())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if intervals.len() != k {
        return Err(CliError::Usage(format!(
            "{} bounds given for {k} components",
            intervals.len()
        )));
    }
    ModeBounds::new(intervals).map_err(|e| CliError::Usage(e.to_string()))
}
