//! Plot-ready CSV tables, JSON reports and the raw trace dump.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use spadgate_core::rate::{poisson_sigma, RatePoint};
use spadgate_core::waveform::{LogicPulse, Trace};
use spadgate_core::IntervalHistogram;

use crate::error::{CliError, Result};

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    Ok(w)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::format(path, line, format!("{other:?}")),
    }
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path, header)?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `n,count` for bins `1..=n_bins`.
pub fn write_histogram(path: &Path, hist: &IntervalHistogram) -> Result<()> {
    let rows = hist
        .counts()
        .iter()
        .enumerate()
        .map(|(i, c)| [(i + 1).to_string(), c.to_string()]);
    write_rows(path, &["n", "count"], rows)
}

/// Reads `n_ph,n_c[,sigma]` rows. A non-numeric first row is taken as a
/// header and `#` lines are comments. Rows without sigma get Poisson errors
/// for counting over `window_s`.
pub fn read_rates(path: &Path, window_s: f64) -> Result<Vec<RatePoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        let nums: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let nums = match nums {
            Ok(n) => n,
            Err(_) if points.is_empty() && i == 0 => continue,
            Err(_) => return Err(CliError::format(path, line, "non-numeric field")),
        };
        let point = match nums[..] {
            [n_ph, n_c] => RatePoint {
                photon_rate: n_ph,
                count_rate: n_c,
                sigma: poisson_sigma(n_c, window_s),
            },
            [n_ph, n_c, sigma] => RatePoint {
                photon_rate: n_ph,
                count_rate: n_c,
                sigma,
            },
            _ => {
                return Err(CliError::format(
                    path,
                    line,
                    format!("expected 2 or 3 columns, found {}", nums.len()),
                ))
            }
        };
        points.push(point);
    }
    Ok(points)
}

pub fn write_rates(path: &Path, points: &[RatePoint]) -> Result<()> {
    let rows = points.iter().map(|p| {
        [
            p.photon_rate.to_string(),
            p.count_rate.to_string(),
            p.sigma.to_string(),
        ]
    });
    write_rows(path, &["n_ph", "n_c", "sigma"], rows)
}

/// One column per fitted model: `n_ph,n_d_0,n_d_1,...`.
pub fn write_prediction(path: &Path, grid: &[f64], columns: &[(u32, Vec<f64>)]) -> Result<()> {
    let names: Vec<String> = std::iter::once("n_ph".to_string())
        .chain(columns.iter().map(|(n_d, _)| format!("n_d_{n_d}")))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows = grid.iter().enumerate().map(|(i, x)| {
        std::iter::once(x.to_string())
            .chain(columns.iter().map(move |(_, c)| c[i].to_string()))
            .collect::<Vec<_>>()
    });
    write_rows(path, &header, rows)
}

pub fn write_response(path: &Path, response: &[(f64, f64)]) -> Result<()> {
    let rows = response
        .iter()
        .map(|(f, db)| [f.to_string(), db.to_string()]);
    write_rows(path, &["freq_hz", "atten_db"], rows)
}

pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let rows = trace
        .samples
        .iter()
        .enumerate()
        .map(|(i, v)| [trace.time(i).to_string(), v.to_string()]);
    write_rows(path, &["time_s", "volts"], rows)
}

/// Samples as consecutive little-endian f64.
pub fn write_trace_binary(path: &Path, trace: &Trace) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    trace
        .samples
        .iter()
        .try_for_each(|v| w.write_all(&v.to_le_bytes()))
        .and_then(|()| w.flush())
        .map_err(|e| CliError::io(path, e))
}

pub fn read_trace_binary(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(CliError::format(
            path,
            0,
            "length is not a multiple of 8 bytes",
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// `time_s,width_s,complete`; incomplete pulses have an empty width.
pub fn write_events(path: &Path, pulses: &[LogicPulse]) -> Result<()> {
    let rows = pulses.iter().map(|p| {
        [
            p.time_s.to_string(),
            p.width_s.map(|w| w.to_string()).unwrap_or_default(),
            p.is_complete().to_string(),
        ]
    });
    write_rows(path, &["time_s", "width_s", "complete"], rows)
}
