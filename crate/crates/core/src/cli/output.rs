//! CSV and JSON artifacts. Floats carry 17 significant digits so every file
//! round-trips bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fracops::{History, Params};
use crate::grid::{integrate, Field, Grid};

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Config(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn coord_columns(grid: &Grid) -> &'static [&'static str] {
    if grid.dim() == 1 {
        &["x"]
    } else {
        &["x", "y"]
    }
}

/// Long-format series: one row per `(t, node)` with columns `t,x[,y],<value>`.
pub fn write_series<'a>(
    path: &Path,
    grid: &Grid,
    value: &str,
    series: impl IntoIterator<Item = (f64, &'a Field)>,
) -> Result<()> {
    let mut header = vec!["t"];
    header.extend(coord_columns(grid));
    header.push(value);
    let dim = grid.dim();
    let rows = series.into_iter().flat_map(move |(t, f)| {
        f.values().iter().enumerate().map(move |(i, &w)| {
            let c = grid.coords(i);
            let mut row = vec![fmt(t)];
            row.extend(c[..dim].iter().map(|&x| fmt(x)));
            row.push(fmt(w));
            row
        })
    });
    write_csv(path, &header, rows)
}

/// Reads a series written by [`write_series`]. A file without a `t` column
/// holds a single field, returned with `t = NaN`.
pub fn read_series(path: &Path, grid: &Grid) -> Result<Vec<(f64, Field)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let has_time = header.get(0) == Some("t");
    let dim = grid.dim();
    let expected = dim + 1 + usize::from(has_time);
    if header.len() != expected {
        return Err(Error::Config(format!("{}: expected {expected} columns, got {}", path.display(), header.len())));
    }
    let tol = 1e-9 * grid.spacing();
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let nums = record
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Config(format!("{} row {}: {e}", path.display(), line + 2)))?;
        let (t, rest) = if has_time { (nums[0], &nums[1..]) } else { (f64::NAN, &nums[..]) };
        let start_new = out.last().is_none_or(|(_, v)| v.len() == grid.len());
        if start_new {
            out.push((t, Vec::with_capacity(grid.len())));
        }
        let (t0, values) = out.last_mut().expect("pushed above");
        let node = values.len();
        let c = grid.coords(node);
        let same_time = (t.is_nan() && t0.is_nan()) || t == *t0;
        if !same_time || (0..dim).any(|d| (rest[d] - c[d]).abs() > tol) {
            return Err(Error::Config(format!(
                "{} row {}: expected node {node} of the configured grid",
                path.display(),
                line + 2
            )));
        }
        values.push(rest[dim]);
    }
    if out.last().is_none_or(|(_, v)| v.len() != grid.len()) {
        return Err(Error::Config(format!("{}: truncated field", path.display())));
    }
    out.into_iter()
        .map(|(t, v)| {
            Field::new(grid, v).map(|f| (t, f)).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        })
        .collect()
}

pub fn write_snapshots(path: &Path, history: &History) -> Result<()> {
    let series = history.fields().iter().enumerate().map(|(j, f)| (history.time(j), f));
    write_series(path, history.grid(), "w", series)
}

/// Rebuilds a complete history from a snapshot file; times must match the
/// step times of `params`.
pub fn load_history(path: &Path, params: &Params, grid: &Grid) -> Result<History> {
    let series = read_series(path, grid)?;
    if series.len() != params.k + 1 {
        return Err(Error::Config(format!(
            "{}: holds {} snapshots, expected {}",
            path.display(),
            series.len(),
            params.k + 1
        )));
    }
    let tol = 1e-9 * params.eps();
    for (j, (t, _)) in series.iter().enumerate() {
        if !((t - params.time(j)).abs() <= tol) {
            return Err(Error::Config(format!("{}: snapshot time {t} does not match step {j}", path.display())));
        }
    }
    History::from_fields(params.clone(), series.into_iter().map(|(_, f)| f).collect())
}

pub fn write_masses(path: &Path, history: &History) -> Result<()> {
    let rows =
        history.fields().iter().enumerate().map(|(j, f)| vec![j.to_string(), fmt(history.time(j)), fmt(integrate(f))]);
    write_csv(path, &["j", "t", "mass"], rows)
}

pub fn write_newton_stats(path: &Path, history: &History) -> Result<()> {
    let rows = history.stats().iter().enumerate().map(|(i, s)| {
        vec![
            (i + 1).to_string(),
            fmt(history.time(i + 1)),
            s.iterations.to_string(),
            fmt(s.residual),
            s.used_fallback.to_string(),
        ]
    });
    write_csv(path, &["j", "t", "iterations", "residual", "used_fallback"], rows)
}
