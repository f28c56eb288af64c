//! Error measures and the steady Poisson solve with boundary bordering.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{MatchRow, MultiShape};
use crate::error::{Error, Result};

const REG: f64 = 1e-10;

fn l2_sq(ms: &MultiShape, v: &DVector<f64>) -> Result<f64> {
    let m = ms.m();
    let sq = v.map(|x| x * x);
    if v.len() == m {
        Ok(ms.ops.integrate(&sq))
    } else if v.len() == 2 * m {
        let s = sq.rows(0, m) + sq.rows(m, m);
        Ok(ms.ops.integrate(&s.into_owned()))
    } else {
        Err(Error::InvalidArgument(format!(
            "field length {} is neither M = {m} nor 2M",
            v.len()
        )))
    }
}

/// Relative `L²` error `‖num − ex‖ / (‖ex‖ + 1e−10)`. Accepts scalar
/// (length M) or stacked vector (length 2M) fields.
pub fn error_measure(ms: &MultiShape, num: &DVector<f64>, ex: &DVector<f64>) -> Result<f64> {
    if num.len() != ex.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            num.len(),
            ex.len()
        )));
    }
    let d = num - ex;
    // clamp tiny negative quadrature round-off before the square root
    let nd = l2_sq(ms, &d)?.max(0.0).sqrt();
    let ne = l2_sq(ms, ex)?.max(0.0).sqrt();
    Ok(nd / (ne + REG))
}

/// `ℓ∞` variant on arbitrary point sets.
pub fn error_measure_linf(num: &[f64], ex: &[f64]) -> Result<f64> {
    if num.len() != ex.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            num.len(),
            ex.len()
        )));
    }
    let nd = num.iter().zip(ex).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let ne = ex.iter().fold(0.0f64, |a, y| a.max(y.abs()));
    Ok(nd / (ne + REG))
}

/// Scalar variant, e.g. for integrals.
pub fn error_measure_abs(num: f64, ex: f64) -> f64 {
    (num - ex).abs() / (ex.abs() + REG)
}

/// Gradient rows `(∂1, ∂2)` of node `k` as dense length-M rows.
pub(crate) fn grad_rows(ms: &MultiShape, k: usize) -> (usize, Vec<f64>, Vec<f64>) {
    let e = ms.elem_of[k];
    let off = ms.offsets[e];
    let local = k - off;
    let g1 = ms.ops.grad1.blocks[e].row(local).iter().copied().collect();
    let g2 = ms.ops.grad2.blocks[e].row(local).iter().copied().collect();
    (off, g1, g2)
}

/// Solves `Lap u = f` with Dirichlet values `g` (one per entry of
/// `ms.ind.bound`). Intersection rows impose continuity of `u` and of its
/// normal derivative.
pub fn solve_poisson(ms: &MultiShape, f: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let m = ms.m();
    if f.len() != m {
        return Err(Error::InvalidArgument(format!("f must have length {m}, got {}", f.len())));
    }
    if g.len() != ms.ind.bound.len() {
        return Err(Error::InvalidArgument(format!(
            "g must have one value per boundary node ({}), got {}",
            ms.ind.bound.len(),
            g.len()
        )));
    }
    let mut a = ms.ops.lap_matrix();
    let mut b = f.clone();
    for (r, &k) in ms.ind.bound.iter().enumerate() {
        a.row_mut(k).fill(0.0);
        a[(k, k)] = 1.0;
        b[k] = g[r];
    }
    for row in &ms.match_rows {
        let k = row.node();
        a.row_mut(k).fill(0.0);
        b[k] = 0.0;
        match row {
            MatchRow::Continuity { node, other } => {
                a[(k, *node)] += 1.0;
                a[(k, *other)] -= 1.0;
            }
            MatchRow::Flux { terms, .. } => {
                for &(p, n) in terms {
                    let (c1, c2) = ms.normal_coeffs(p, n);
                    let (off, g1, g2) = grad_rows(ms, p);
                    for (j, (x, y)) in g1.iter().zip(&g2).enumerate() {
                        a[(k, off + j)] += c1 * x + c2 * y;
                    }
                }
            }
        }
    }
    lu_solve(a, &b)
}

pub(crate) fn lu_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::NumericFailure("singular linear system".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure("linear solve produced non-finite values".into()));
    }
    Ok(x)
}

/// Samples `u` at the boundary nodes, in `ms.ind.bound` order.
pub fn boundary_values(ms: &MultiShape, u: impl Fn([f64; 2]) -> f64) -> DVector<f64> {
    DVector::from_iterator(ms.ind.bound.len(), ms.ind.bound.iter().map(|&k| u(ms.pts_cart[k])))
}
