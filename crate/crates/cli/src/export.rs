//! Resampling of nodal frames onto uniform Cartesian grids for plotting.

use std::path::Path;

use nalgebra::DMatrix;
use specel::assembly::MultiShape;
use specel::geometry::Point;
use specel::validation::uniform_grid;

use crate::error::{CliError, Result};
use crate::output::{fmt_num, uniform_columns, Frame};

/// Interpolation onto fixed target points; targets outside the multishape
/// stay `None` rather than being extrapolated.
pub struct Resampler {
    pub points: Vec<Point>,
    inside: Vec<bool>,
    matrix: DMatrix<f64>,
}

impl Resampler {
    pub fn new(ms: &MultiShape, points: Vec<Point>) -> Result<Self> {
        let located = ms.locate(&points)?;
        let inside = located.iter().map(Option::is_some).collect();
        let matrix = ms.interpolation_from_located(&located)?;
        Ok(Resampler { points, inside, matrix })
    }

    pub fn uniform(ms: &MultiShape, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(CliError::Config(format!("uniform grid resolution must be at least 2, got {n}")));
        }
        Self::new(ms, uniform_grid(ms, n))
    }

    pub fn in_domain(&self) -> &[bool] {
        &self.inside
    }

    /// Per target point, the interpolated value of every column.
    pub fn apply(&self, frame: &Frame) -> Vec<Option<Vec<f64>>> {
        let vals: Vec<_> = frame.columns.iter().map(|c| &self.matrix * c).collect();
        (0..self.points.len())
            .map(|r| self.inside[r].then(|| vals.iter().map(|v| v[r]).collect()))
            .collect()
    }
}

/// `t,i,j,x1,x2,values...,in_domain` on an `n × n` grid over the bounding
/// box; `i` runs along `x1`. Out-of-domain cells have empty values and
/// `in_domain = 0`.
pub fn write_uniform(path: &Path, ms: &MultiShape, names: &[String], frames: &[Frame], n: usize) -> Result<()> {
    let rs = Resampler::uniform(ms, n)?;
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(uniform_columns(names))?;
    for fr in frames {
        if fr.columns.len() != names.len() || fr.columns.iter().any(|c| c.len() != ms.m()) {
            return Err(CliError::Config(format!(
                "frame at t = {} does not match the multishape ({} nodes)",
                fr.t,
                ms.m()
            )));
        }
        for (r, vals) in rs.apply(fr).into_iter().enumerate() {
            let p = rs.points[r];
            let mut rec = vec![fmt_num(fr.t), (r / n).to_string(), (r % n).to_string(), fmt_num(p[0]), fmt_num(p[1])];
            match vals {
                Some(v) => {
                    rec.extend(v.into_iter().map(fmt_num));
                    rec.push("1".into());
                }
                None => {
                    rec.extend(std::iter::repeat_n(String::new(), names.len()));
                    rec.push("0".into());
                }
            }
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}
