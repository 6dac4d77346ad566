//! Trajectory CSV files.

use std::path::Path;

use ngpm_core::{ObservableRecord, SeriesPoint};

use crate::run::{io_error, RunError};

pub const COLUMNS: [&str; 8] = [
    "t",
    "log_norm",
    "mean_p",
    "mean_p2",
    "D",
    "one_minus_fotoc",
    "one_minus_le",
    "edge_mass",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn optional(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn csv_error(path: &Path, e: csv::Error) -> RunError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => RunError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => RunError::Serialize {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

pub fn write_records(path: &Path, records: &[ObservableRecord]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(COLUMNS).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record([
            r.kick_index.to_string(),
            format_float(r.log_norm),
            format_float(r.mean_p),
            format_float(r.mean_p2),
            optional(r.distance),
            format_float(r.one_minus_fotoc),
            optional(r.one_minus_le),
            format_float(r.edge_mass),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io_error(path))
}

/// Reads one column as a series; empty cells are skipped.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<SeriesPoint>, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RunError::Serialize {
                path: path.to_path_buf(),
                message: format!("no column `{name}`"),
            })
    };
    let (t_col, y_col) = (find("t")?, find(column)?);
    let bad = |row: usize, what: &str| RunError::Serialize {
        path: path.to_path_buf(),
        message: format!("row {row}: cannot parse {what}"),
    };
    let mut series = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let y = record.get(y_col).unwrap_or("").trim();
        if y.is_empty() {
            continue;
        }
        let t = record
            .get(t_col)
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| bad(i + 1, "t"))?;
        let y = y.parse::<f64>().map_err(|_| bad(i + 1, column))?;
        series.push(SeriesPoint::new(t, y));
    }
    Ok(series)
}
