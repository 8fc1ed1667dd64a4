//! CSV and JSON input/output.
//!
//! Every table written here starts with a `#` line holding the JSON config
//! of the run that produced it; readers skip such lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use owl_core::Dataset;
use serde::Serialize;

use crate::error::{CliError, CliResult};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Reads a header-row CSV into a [`Dataset`].
///
/// Features are `columns` when given, otherwise every column except
/// `response`. All selected fields must parse as finite numbers.
pub fn read_dataset(path: &Path, columns: Option<&[String]>, response: Option<&str>) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| io_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let find = |name: &str| -> CliResult<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("column '{name}' not found in {}", path.display())))
    };
    let y_col = response.map(find).transpose()?;
    let x_cols: Vec<usize> = match columns {
        Some(names) => names.iter().map(|c| find(c)).collect::<CliResult<_>>()?,
        None => (0..header.len()).filter(|&j| Some(j) != y_col).collect(),
    };
    if x_cols.is_empty() {
        return Err(CliError::Data(format!("{}: no feature columns", path.display())));
    }
    let mut points = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let field = |j: usize| -> CliResult<f64> {
            let s = rec.get(j).unwrap_or("");
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Data(format!(
                    "{}: row {} column '{}': '{s}' is not a finite number",
                    path.display(),
                    r + 1,
                    header[j]
                ))),
            }
        };
        for &j in &x_cols {
            points.push(field(j)?);
        }
        if let Some(j) = y_col {
            y.push(field(j)?);
        }
    }
    if points.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(Dataset::new(points, x_cols.len(), y_col.map(|_| y))?)
}

/// Writes a [`Dataset`] with columns `x0, x1, …` and, if present, `y`.
pub fn write_dataset(path: &Path, data: &Dataset, config: Option<&serde_json::Value>) -> CliResult<()> {
    let mut w = table_writer(path, config)?;
    let mut header: Vec<String> = (0..data.d()).map(|j| format!("x{j}")).collect();
    if data.response().is_some() {
        header.push("y".into());
    }
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(y) = data.response() {
            rec.push(y[i].to_string());
        }
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// CSV writer whose first line is `# config: <json>` when `config` is given.
pub fn table_writer(path: &Path, config: Option<&serde_json::Value>) -> CliResult<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    if let Some(c) = config {
        writeln!(f, "# config: {c}").map_err(|e| io_err(path, e))?;
    }
    Ok(csv::Writer::from_writer(f))
}

/// Writes serializable rows (header taken from the field names).
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], config: &serde_json::Value) -> CliResult<()> {
    let mut w = table_writer(path, Some(config))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| io_err(path, e))?;
    writeln!(f).map_err(|e| io_err(path, e))
}

/// Parses `start:stop:step`.
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("grid '{s}' is not start:stop:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    Ok(owl_core::uniform_grid(v[0], v[1], v[2])?)
}
