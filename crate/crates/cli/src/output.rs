//! CSV artifacts and the JSON run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;
use specel::assembly::MultiShape;
use specel::validation::ValidationRow;

use crate::error::{CliError, Result};

/// Bumped whenever a CSV layout or manifest field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub const VALIDATION_COLUMNS: [&str; 5] = ["case", "operator", "N_Sigma", "error", "wall_ms"];
pub const OCP_COLUMNS: [&str; 3] = ["iter", "J", "grad_residual"];

/// 17 significant digits, so every `f64` survives a round trip.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

pub fn write_validation(path: &Path, rows: &[ValidationRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(VALIDATION_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.case.clone(),
            r.operator.name().to_string(),
            r.n_sigma.to_string(),
            fmt_num(r.error),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Nodal data at one time: one column vector of length `M` per named value.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub columns: Vec<DVector<f64>>,
}

pub fn fields_columns(names: &[String]) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "node", "x1", "x2"].iter().map(|s| s.to_string()).collect();
    cols.extend(names.iter().cloned());
    cols
}

pub fn uniform_columns(names: &[String]) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "i", "j", "x1", "x2"].iter().map(|s| s.to_string()).collect();
    cols.extend(names.iter().cloned());
    cols.push("in_domain".into());
    cols
}

/// `t,node,x1,x2,values...` with Cartesian node positions.
pub fn write_fields(path: &Path, ms: &MultiShape, names: &[String], frames: &[Frame]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(fields_columns(names))?;
    for fr in frames {
        if fr.columns.len() != names.len() || fr.columns.iter().any(|c| c.len() != ms.m()) {
            return Err(CliError::Config(format!(
                "frame at t = {} does not match {} columns of length {}",
                fr.t,
                names.len(),
                ms.m()
            )));
        }
        for (k, p) in ms.pts_cart.iter().enumerate() {
            let mut rec = vec![fmt_num(fr.t), k.to_string(), fmt_num(p[0]), fmt_num(p[1])];
            rec.extend(fr.columns.iter().map(|c| fmt_num(c[k])));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Contents of a fields CSV.
#[derive(Debug, Clone)]
pub struct FieldsTable {
    pub names: Vec<String>,
    pub points: Vec<[f64; 2]>,
    pub frames: Vec<Frame>,
}

fn parse_f64(s: &str, path: &Path, line: u64) -> Result<f64> {
    s.trim().parse().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: '{s}' is not a number"),
    })
}

/// Reads a fields CSV. Frames must list nodes `0..M` in order.
pub fn read_fields(path: &Path) -> Result<FieldsTable> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let header: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    if header.len() < 5 || header[..4] != ["t", "node", "x1", "x2"] {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            message: format!("expected columns t,node,x1,x2,values..., found {}", header.join(",")),
        });
    }
    let names = header[4..].to_vec();
    let bad = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut raw: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        if rec.len() != header.len() {
            return Err(bad(line, format!("{} fields, expected {}", rec.len(), header.len())));
        }
        let t = parse_f64(&rec[0], path, line)?;
        let node: usize = rec[1].trim().parse().map_err(|_| bad(line, format!("bad node index '{}'", &rec[1])))?;
        if node == 0 {
            raw.push((t, vec![Vec::new(); names.len()]));
        }
        let first = raw.len() == 1;
        let Some((_, cols)) = raw.last_mut() else {
            return Err(bad(line, "frame does not start at node 0".into()));
        };
        if node != cols[0].len() || (!first && node >= points.len()) {
            return Err(bad(line, format!("expected node {}, found {node}", cols[0].len())));
        }
        if first {
            points.push([parse_f64(&rec[2], path, line)?, parse_f64(&rec[3], path, line)?]);
        }
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(parse_f64(&rec[4 + c], path, line)?);
        }
    }
    let mut frames = Vec::with_capacity(raw.len());
    for (t, cols) in raw {
        if cols[0].len() != points.len() {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                message: format!("frame at t = {t} has {} nodes, expected {}", cols[0].len(), points.len()),
            });
        }
        frames.push(Frame { t, columns: cols.into_iter().map(DVector::from_vec).collect() });
    }
    Ok(FieldsTable { names, points, frames })
}

pub fn write_ocp_history(path: &Path, history: &[specel::ocp::SweepRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(OCP_COLUMNS)?;
    for h in history {
        w.write_record([h.iter.to_string(), fmt_num(h.j), fmt_num(h.grad_residual)])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Generic numeric table.
pub fn write_table(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt_num(*v)))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// JSON run record written next to the CSVs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub program: String,
    pub version: String,
    pub subcommand: String,
    pub config_path: PathBuf,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub threads: usize,
    pub config: serde_json::Value,
    /// Columns of every CSV written, by file name.
    pub csv: BTreeMap<String, Vec<String>>,
    pub timings_s: BTreeMap<String, f64>,
    pub log: serde_json::Value,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| CliError::io(path, e))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
    }
}
