//! CSV column ingestion and intensity transforms.

use std::path::Path;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Name(String),
    /// Zero-based.
    Index(usize),
}

impl ColumnSelector {
    /// A header name, or a zero-based index when the text is an integer
    /// that does not match a header name.
    pub fn parse(text: &str) -> Self {
        match text.trim().parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(text.trim().to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// Header present when the selected field of the first row is not a number.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Mif,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub column: ColumnSelector,
    pub header: HeaderMode,
    pub transform: Option<Transform>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    #[serde(skip)]
    pub values: Vec<f64>,
    pub source: String,
    /// Column name, or `column <i>` without a header.
    pub name: String,
    /// 1-based file line of each value.
    #[serde(skip)]
    pub rows: Vec<usize>,
    /// Rows whose field was missing or not a number.
    pub skipped_rows: usize,
    /// Values that were zero after the transform and so cannot be fitted.
    pub dropped_zeros: usize,
    pub transform: Option<Transform>,
}

/// y = log10(x / mean(x) + 1). Zeros map to zero.
pub fn transform_mif(values: &[f64]) -> Result<Vec<f64>, CliError> {
    if values.is_empty() {
        return Err(CliError::Data("no values to transform".into()));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(CliError::Data(format!(
            "transform needs nonnegative values, found {v}"
        )));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean.is_nan() || mean <= 0.0 {
        return Err(CliError::Data(
            "transform is undefined when every value is zero".into(),
        ));
    }
    Ok(values.iter().map(|x| (x / mean + 1.0).log10()).collect())
}

const REPORTED_SKIPS: usize = 5;

pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> Result<Dataset, CliError> {
    let io = |e: &dyn std::fmt::Display| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let bytes = std::fs::read(path).map_err(|e| io(&e))?;
    let newlines: Vec<u64> = bytes
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'\n')
        .map(|(i, _)| i as u64)
        .collect();
    // record positions can point at preceding blank lines
    let line_of = |byte: u64| {
        let start = bytes[byte as usize..]
            .iter()
            .position(|b| !matches!(b, b'\n' | b'\r'))
            .map_or(byte, |o| byte + o as u64);
        newlines.partition_point(|&n| n < start) + 1
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut records = reader.records().enumerate().peekable();

    let first = match records.peek() {
        None => return Err(CliError::Data(format!("{}: file is empty", path.display()))),
        Some((_, Err(e))) => return Err(io(e)),
        Some((_, Ok(r))) => r.clone(),
    };
    let header_present = match (&opts.header, &opts.column) {
        (HeaderMode::Present, _) => true,
        (HeaderMode::Absent, _) => false,
        (HeaderMode::Auto, ColumnSelector::Name(_)) => true,
        (HeaderMode::Auto, ColumnSelector::Index(i)) => {
            first.get(*i).is_some_and(|f| f.parse::<f64>().is_err())
        }
    };
    let (index, name) = match &opts.column {
        ColumnSelector::Name(n) if header_present => {
            let i = first.iter().position(|h| h == n).ok_or_else(|| {
                CliError::Data(format!(
                    "{}: no column named '{n}' (header: {})",
                    path.display(),
                    first.iter().collect::<Vec<_>>().join(",")
                ))
            })?;
            (i, n.clone())
        }
        ColumnSelector::Name(n) => {
            return Err(CliError::Usage(format!(
                "column '{n}' selected by name but the file has no header"
            )));
        }
        ColumnSelector::Index(i) => {
            if header_present {
                // an integer that is also a header name selects by name
                match first.iter().position(|h| h == i.to_string()) {
                    Some(j) => (j, i.to_string()),
                    None => (
                        *i,
                        first
                            .get(*i)
                            .map_or_else(|| format!("column {i}"), str::to_string),
                    ),
                }
            } else {
                (*i, format!("column {i}"))
            }
        }
    };
    if header_present {
        records.next();
    }

    let mut values = Vec::new();
    let mut rows = Vec::new();
    let mut skipped = 0;
    let mut widest = 0;
    for (i, rec) in records {
        let rec = rec.map_err(|e| io(&e))?;
        let row = rec.position().map_or(i + 1, |p| line_of(p.byte()));
        widest = widest.max(rec.len());
        match rec
            .get(index)
            .and_then(|f| f.parse::<f64>().ok())
            .filter(|v| v.is_finite())
        {
            Some(v) => {
                values.push(v);
                rows.push(row);
            }
            None => {
                skipped += 1;
                if skipped <= REPORTED_SKIPS {
                    log::warn!(
                        "{}: row {row}: no numeric value in column {index}",
                        path.display()
                    );
                }
            }
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} unparsable rows", path.display());
    }
    if values.is_empty() {
        if widest.max(first.len()) <= index {
            return Err(CliError::Data(format!(
                "{}: column {index} does not exist",
                path.display()
            )));
        }
        return Err(CliError::Data(format!(
            "{}: no numeric values in column '{name}'",
            path.display()
        )));
    }

    let mut dropped_zeros = 0;
    if let Some(Transform::Mif) = opts.transform {
        if let Some(p) = values.iter().position(|v| *v < 0.0) {
            return Err(CliError::Data(format!(
                "{}: row {}: negative value {} cannot be transformed",
                path.display(),
                rows[p],
                values[p]
            )));
        }
        let t = transform_mif(&values)?;
        let (mut kept, mut kept_rows) = (Vec::with_capacity(t.len()), Vec::with_capacity(t.len()));
        for (v, r) in t.into_iter().zip(rows) {
            if v > 0.0 {
                kept.push(v);
                kept_rows.push(r);
            } else {
                dropped_zeros += 1;
            }
        }
        if dropped_zeros > 0 {
            log::warn!(
                "{}: dropped {dropped_zeros} zero values after transform",
                path.display()
            );
        }
        values = kept;
        rows = kept_rows;
    } else if let Some(p) = values.iter().position(|v| *v <= 0.0) {
        return Err(CliError::Data(format!(
            "{}: row {}: value {} is not positive (use --transform mif for intensities with zeros)",
            path.display(),
            rows[p],
            values[p]
        )));
    }

    Ok(Dataset {
        values,
        source: path.display().to_string(),
        name,
        rows,
        skipped_rows: skipped,
        dropped_zeros,
        transform: opts.transform,
    })
}
