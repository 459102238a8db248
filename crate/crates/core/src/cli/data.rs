//! CSV data and query files. Design columns are `x1..xd`; data files add `yp`.

use std::path::Path;

use super::CliError;
use crate::design::PointSet;

fn data_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

fn x_columns(path: &Path, headers: &csv::StringRecord) -> Result<Vec<usize>, CliError> {
    let mut cols = Vec::new();
    for k in 1.. {
        match headers.iter().position(|h| h.trim() == format!("x{k}")) {
            Some(i) => cols.push(i),
            None => break,
        }
    }
    if cols.is_empty() {
        return Err(data_err(path, "no x1 column"));
    }
    Ok(cols)
}

fn parse(path: &Path, line: usize, field: Option<&str>) -> Result<f64, CliError> {
    let f = field.ok_or_else(|| data_err(path, format!("line {line}: missing field")))?;
    let v: f64 = f
        .trim()
        .parse()
        .map_err(|_| data_err(path, format!("line {line}: {f:?} is not a number")))?;
    if !v.is_finite() {
        return Err(data_err(path, format!("line {line}: non-finite value {f:?}")));
    }
    Ok(v)
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(path, e))
}

/// Reads `x1..xd, yp`. With `dim` set, the file must have exactly that many inputs.
pub fn read_data(path: &Path, dim: Option<usize>) -> Result<(PointSet, Vec<f64>), CliError> {
    let mut r = open(path)?;
    let headers = r.headers().map_err(|e| data_err(path, e))?.clone();
    let xs = x_columns(path, &headers)?;
    if let Some(d) = dim {
        if xs.len() != d {
            return Err(data_err(path, format!("expected {d} input columns, found {}", xs.len())));
        }
    }
    let yc = headers
        .iter()
        .position(|h| h.trim() == "yp")
        .ok_or_else(|| data_err(path, "no yp column"))?;
    let mut points = PointSet::empty(xs.len());
    let mut yp = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let line = i + 2;
        let p = xs.iter().map(|&c| parse(path, line, rec.get(c))).collect::<Result<Vec<_>, _>>()?;
        points.push(&p).map_err(|e| data_err(path, e))?;
        yp.push(parse(path, line, rec.get(yc))?);
    }
    if yp.is_empty() {
        return Err(data_err(path, "no observations"));
    }
    Ok((points, yp))
}

/// Reads `x1..xd`; an empty file body gives an empty set.
pub fn read_query(path: &Path, dim: usize) -> Result<PointSet, CliError> {
    let mut r = open(path)?;
    let headers = r.headers().map_err(|e| data_err(path, e))?.clone();
    let xs = x_columns(path, &headers)?;
    if xs.len() != dim {
        return Err(data_err(path, format!("expected {dim} input columns, found {}", xs.len())));
    }
    let mut points = PointSet::empty(dim);
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let p = xs.iter().map(|&c| parse(path, i + 2, rec.get(c))).collect::<Result<Vec<_>, _>>()?;
        points.push(&p).map_err(|e| data_err(path, e))?;
    }
    Ok(points)
}

/// Round-trips exactly through `str::parse::<f64>`.
pub fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn x_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("x{k}")).collect()
}

/// Writes `x1..xd` followed by the named columns.
pub fn write_table(path: &Path, points: &PointSet, names: &[&str], columns: &[&[f64]]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = x_header(points.dim());
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(io)?;
    for (i, x) in points.iter().enumerate() {
        let mut row: Vec<String> = x.iter().map(|&v| fmt(v)).collect();
        row.extend(columns.iter().map(|c| fmt(c[i])));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
