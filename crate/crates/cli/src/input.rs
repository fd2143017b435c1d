use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use lgc_regime::timeseries::log_returns;
use lgc_regime::ReturnSeries;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result, StageExt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Columns are prices; returns are `100 ln(P_t / P_{t-1})`.
    #[default]
    Prices,
    Returns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub date: String,
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone)]
pub struct LoadedSeries {
    pub series: ReturnSeries,
    /// Names of the two value columns.
    pub names: [String; 2],
    /// 1-based data-row numbers dropped for a missing or unparsable field.
    pub dropped_rows: Vec<usize>,
}

/// Seconds since the Unix epoch. Accepts RFC 3339, `YYYY-MM-DD` and
/// `YYYY-MM-DD HH:MM:SS`, or `format` when given.
pub fn parse_timestamp(s: &str, format: Option<&str>) -> Option<i64> {
    let s = s.trim();
    if let Some(f) = format {
        return NaiveDateTime::parse_from_str(s, f)
            .ok()
            .or_else(|| NaiveDate::parse_from_str(s, f).ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
            .map(|t| t.and_utc().timestamp());
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0).map(|t| t.and_utc().timestamp());
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp())
}

/// ISO-8601 rendering of a timestamp: a date when it falls on midnight.
pub fn format_timestamp(t: i64) -> String {
    match DateTime::from_timestamp(t, 0) {
        Some(d) if t.rem_euclid(86_400) == 0 => d.format("%Y-%m-%d").to_string(),
        Some(d) => d.format("%Y-%m-%dT%H:%M:%S").to_string(),
        None => t.to_string(),
    }
}

fn parse_value(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") || s == "." {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a header-row CSV into a return series. Rows with any missing field
/// are dropped before returns are formed.
pub fn load_csv(path: &Path, columns: &ColumnSpec, mode: Mode, date_format: Option<&str>) -> Result<LoadedSeries> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            let have: Vec<&str> = headers.iter().collect();
            CliError::validation(format!("{}: no column {name:?}; columns are {have:?}", path.display()))
        })
    };
    let (id, ia, ib) = (find(&columns.date)?, find(&columns.a)?, find(&columns.b)?);

    let mut times = Vec::new();
    let mut va = Vec::new();
    let mut vb = Vec::new();
    let mut dropped_rows = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let t = rec.get(id).and_then(|s| parse_timestamp(s, date_format));
        let a = rec.get(ia).and_then(parse_value);
        let b = rec.get(ib).and_then(parse_value);
        match (t, a, b) {
            (Some(t), Some(a), Some(b)) => {
                times.push(t);
                va.push(a);
                vb.push(b);
            }
            _ => dropped_rows.push(row + 1),
        }
    }
    if times.len() < 3 {
        let shown: Vec<String> = dropped_rows.iter().take(10).map(usize::to_string).collect();
        return Err(CliError::validation(format!(
            "{}: {} usable rows after dropping {} (rows {}); at least 3 are required",
            path.display(),
            times.len(),
            dropped_rows.len(),
            shown.join(", ")
        )));
    }
    let (times, va, vb) = match mode {
        Mode::Returns => (times, va, vb),
        Mode::Prices => (times[1..].to_vec(), log_returns(&va).stage("ingest")?, log_returns(&vb).stage("ingest")?),
    };
    let series = ReturnSeries::new(times, va, vb).stage("ingest")?;
    Ok(LoadedSeries { series, names: [columns.a.clone(), columns.b.clone()], dropped_rows })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            let msg = e.to_string();
            CliError::io(path, std::io::Error::other(msg))
        }
        _ => CliError::validation(format!("{}: {e}", path.display())),
    }
}
