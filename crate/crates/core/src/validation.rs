//! Operator and Poisson convergence studies over the built-in
//! discretizations.

use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{build_multishape, MultiShape};
use crate::convolution::{convolution_matrix, Kernel};
use crate::error::Result;
use crate::geometry::Point;
use crate::scenarios::{Case, VALIDATION_BOX, VALIDATION_WEDGE};
use crate::steady::{boundary_values, error_measure, error_measure_abs, error_measure_linf, solve_poisson};
use crate::testfns::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    Laplacian,
    Divergence,
    Gradient,
    Interpolation,
    Integration,
    Convolution,
    Poisson,
}

pub const OPERATORS: [Operator; 6] = [
    Operator::Laplacian,
    Operator::Divergence,
    Operator::Gradient,
    Operator::Interpolation,
    Operator::Integration,
    Operator::Convolution,
];

impl Operator {
    pub fn name(self) -> &'static str {
        match self {
            Operator::Laplacian => "lap",
            Operator::Divergence => "div",
            Operator::Gradient => "grad",
            Operator::Interpolation => "interp",
            Operator::Integration => "int",
            Operator::Convolution => "conv",
            Operator::Poisson => "poisson",
        }
    }
}

/// One row of an error table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub case: String,
    pub operator: Operator,
    pub n_sigma: usize,
    pub error: f64,
    pub wall_ms: f64,
}

/// Resolution of the uniform grid used for the interpolation test.
pub const INTERP_GRID: usize = 50;

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64() * 1e3))
}

fn exact_integral_g2(case: Case) -> f64 {
    if case.is_wedge() {
        let (ri, ro, t0, t1) = VALIDATION_WEDGE;
        0.5 * (t1 - t0) * ((-ri * ri).exp() - (-ro * ro).exp())
    } else {
        let [a1, b1, a2, b2] = VALIDATION_BOX;
        gauss_1d(a1, b1) * gauss_1d(a2, b2)
    }
}

/// Uniform `n × n` grid over the multishape bounding box.
pub fn uniform_grid(ms: &MultiShape, n: usize) -> Vec<Point> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for e in &ms.elements {
        let (a, b) = e.bbox();
        for d in 0..2 {
            lo[d] = lo[d].min(a[d]);
            hi[d] = hi[d].max(b[d]);
        }
    }
    let t = |k: usize| k as f64 / (n - 1) as f64;
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pts.push([lo[0] + t(i) * (hi[0] - lo[0]), lo[1] + t(j) * (hi[1] - lo[1])]);
        }
    }
    pts
}

/// Error of one operator on one assembled case.
pub fn operator_error(case: Case, ms: &MultiShape, op: Operator) -> Result<f64> {
    match op {
        Operator::Laplacian => {
            let f = ms.sample(g1);
            error_measure(ms, &ms.ops.lap(&f), &ms.sample(g1_lap))
        }
        Operator::Divergence => {
            let u = ms.sample_vector(g1_grad);
            error_measure(ms, &ms.ops.div(&u), &ms.sample(g1_lap))
        }
        Operator::Gradient => {
            let f = ms.sample(g1);
            error_measure(ms, &ms.ops.grad(&f), &ms.sample_vector(g1_grad))
        }
        Operator::Interpolation => {
            let grid = uniform_grid(ms, INTERP_GRID);
            let located = ms.locate(&grid)?;
            let inside: Vec<_> = located.into_iter().zip(&grid).filter(|(l, _)| l.is_some()).collect();
            let locs: Vec<_> = inside.iter().map(|(l, _)| *l).collect();
            let interp = ms.interpolation_from_located(&locs)?;
            let num = interp * ms.sample(g1);
            let ex: Vec<f64> = inside.iter().map(|(_, p)| g1(**p)).collect();
            error_measure_linf(num.as_slice(), &ex)
        }
        Operator::Integration => Ok(error_measure_abs(ms.ops.integrate(&ms.sample(g2)), exact_integral_g2(case))),
        Operator::Convolution => {
            if case.is_wedge() {
                let conv = convolution_matrix(ms, &Kernel::displacement(chi_p))?;
                let (ri, ro, t0, t1) = VALIDATION_WEDGE;
                let ex = ms.sample(|y| conv_p_wedge_exact(y, ri, ro, t0, t1));
                error_measure(ms, &(conv * ms.sample(n_p)), &ex)
            } else {
                let conv = convolution_matrix(ms, &Kernel::displacement(chi_c))?;
                let [a1, b1, a2, b2] = VALIDATION_BOX;
                let ex = ms.sample(|y| conv_c_box_reference(y, a1, b1, a2, b2));
                error_measure(ms, &(conv * ms.sample(n_c)), &ex)
            }
        }
        Operator::Poisson => {
            let u = solve_poisson(ms, &ms.sample(poisson_f), &boundary_values(ms, poisson_u))?;
            error_measure(ms, &u, &ms.sample(poisson_u))
        }
    }
}

/// Runs `ops` on `case` at one `N_Σ`. Assembly time is excluded from the
/// per-operator timings.
pub fn run_case(case: Case, n_sigma: usize, ops: &[Operator]) -> Result<Vec<ValidationRow>> {
    let ms = build_multishape(case.elements(n_sigma)?, &[])?;
    ops.iter()
        .map(|&op| {
            let (error, wall_ms) = timed(|| operator_error(case, &ms, op))?;
            Ok(ValidationRow {
                case: case.name().to_string(),
                operator: op,
                n_sigma,
                error,
                wall_ms,
            })
        })
        .collect()
}

/// Full table over `cases × sweep × ops`, computed in parallel and
/// returned in (case, operator, N_Σ) order.
pub fn run_validation_suite(cases: &[Case], sweep: &[usize], ops: &[Operator]) -> Result<Vec<ValidationRow>> {
    let jobs: Vec<(Case, usize)> = cases.iter().flat_map(|&c| sweep.iter().map(move |&n| (c, n))).collect();
    let rows: Vec<Vec<ValidationRow>> = jobs.par_iter().map(|&(c, n)| run_case(c, n, ops)).collect::<Result<_>>()?;
    let mut rows: Vec<ValidationRow> = rows.into_iter().flatten().collect();
    rows.sort_by(|a, b| (&a.case, a.operator, a.n_sigma).cmp(&(&b.case, b.operator, b.n_sigma)));
    Ok(rows)
}

/// Poisson timing study on the quadrilateral-plus-wedge fixture with equal
/// budgets and with half the points in the first or second direction.
pub fn poisson_timing_study(sweep: &[usize]) -> Result<Vec<ValidationRow>> {
    let variants = [("equal", 1.0, 1.0), ("half_first", 0.5, 1.0), ("half_second", 1.0, 0.5)];
    let mut rows = Vec::new();
    for (name, s1, s2) in variants {
        for &n in sweep {
            let (error, wall_ms) = timed(|| {
                let ms = build_multishape(Case::QuadWedge.elements_scaled(n, s1, s2)?, &[])?;
                operator_error(Case::QuadWedge, &ms, Operator::Poisson)
            })?;
            rows.push(ValidationRow {
                case: format!("quad_wedge_{name}"),
                operator: Operator::Poisson,
                n_sigma: n,
                error,
                wall_ms,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln(error)` against `N_Σ`, over the sweep prefix
/// ending at the smallest error (the plateau is excluded). `None` when
/// fewer than two points precede the plateau.
pub fn decay_slope(points: &[(usize, f64)]) -> Option<f64> {
    let imin = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)?;
    let pre = &points[..=imin];
    if pre.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = pre.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = pre.iter().map(|p| p.1.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Groups rows by (case, operator) into `(N_Σ, error)` series.
pub fn series(rows: &[ValidationRow]) -> Vec<((String, Operator), Vec<(usize, f64)>)> {
    let mut out: Vec<((String, Operator), Vec<(usize, f64)>)> = Vec::new();
    for r in rows {
        let key = (r.case.clone(), r.operator);
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push((r.n_sigma, r.error)),
            None => out.push((key, vec![(r.n_sigma, r.error)])),
        }
    }
    for (_, v) in &mut out {
        v.sort_by_key(|p| p.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_geometric_sequence() {
        let pts: Vec<(usize, f64)> = (0..5).map(|k| (6 + 4 * k, (-(k as f64)).exp())).collect();
        assert!((decay_slope(&pts).unwrap() + 0.25).abs() < 1e-12);
        // plateau after the minimum is ignored
        let mut p2 = pts.clone();
        p2.push((26, 1.0));
        assert!((decay_slope(&p2).unwrap() + 0.25).abs() < 1e-12);
        assert!(decay_slope(&[(6, 1e-3), (10, 1e-2)]).is_none());
    }

    #[test]
    fn small_sweep_decays_on_every_case() {
        let rows = run_validation_suite(&crate::scenarios::ALL_CASES[..8], &[8, 14, 20], &OPERATORS).unwrap();
        assert_eq!(rows.len(), 8 * 3 * 6);
        for ((case, op), pts) in series(&rows) {
            let s = decay_slope(&pts);
            assert!(
                s.map_or(pts[0].1 < 1e-10, |s| s < 0.0),
                "{case} {} {pts:?}",
                op.name()
            );
        }
    }

    #[test]
    fn interp_error_small_at_moderate_resolution() {
        let ms = build_multishape(Case::A.elements(24).unwrap(), &[]).unwrap();
        assert!(operator_error(Case::A, &ms, Operator::Interpolation).unwrap() < 1e-8);
    }
}
