//! One-dimensional Chebyshev–Lobatto kernels and their tensor-product lifting.
//!
//! Nodes are ordered descending (node 0 is `+1`). Two-dimensional grids use a
//! lexicographic ordering in which the first coordinate varies slowest: the
//! local index of node `(i1, i2)` is `i1 * n2 + i2`. With that convention an
//! operator acting along the first direction is `A ⊗ I` and one acting along
//! the second direction is `I ⊗ B`.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Chebyshev–Lobatto nodes on `[-1, 1]` together with barycentric weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet1D {
    nodes: Vec<f64>,
    bary_weights: Vec<f64>,
}

impl NodeSet1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn bary_weights(&self) -> &[f64] {
        &self.bary_weights
    }
}

/// Returns the `n` Chebyshev–Lobatto points `cos(πk/(n−1))`.
pub fn cheb_lobatto_nodes(n: usize) -> Result<NodeSet1D> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 Chebyshev-Lobatto nodes, got {n}"
        )));
    }
    let last = (n - 1) as f64;
    let nodes = (0..n)
        .map(|k| {
            // sin form is symmetric to the last bit, unlike cos(πk/N)
            (PI * (last - 2.0 * k as f64) / (2.0 * last)).sin()
        })
        .collect();
    let bary_weights = (0..n)
        .map(|k| {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k == 0 || k == n - 1 {
                0.5 * s
            } else {
                s
            }
        })
        .collect();
    Ok(NodeSet1D {
        nodes,
        bary_weights,
    })
}

/// Collocation differentiation matrix of order 1 or 2.
///
/// Off-diagonal entries follow the barycentric formulas; diagonals are set by
/// the negative-sum trick so that constants are annihilated exactly.
pub fn diff_matrix(ns: &NodeSet1D, order: usize) -> Result<DMatrix<f64>> {
    let n = ns.len();
    let x = &ns.nodes;
    let w = &ns.bary_weights;
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if i != j {
                let v = (w[j] / w[i]) / (x[i] - x[j]);
                d[(i, j)] = v;
                s += v;
            }
        }
        d[(i, i)] = -s;
    }
    match order {
        1 => Ok(d),
        2 => {
            let mut d2 = DMatrix::zeros(n, n);
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    if i != j {
                        let v = 2.0 * d[(i, j)] * (d[(i, i)] - 1.0 / (x[i] - x[j]));
                        d2[(i, j)] = v;
                        s += v;
                    }
                }
                d2[(i, i)] = -s;
            }
            Ok(d2)
        }
        _ => Err(Error::InvalidArgument(format!(
            "differentiation order {order} not supported (use 1 or 2)"
        ))),
    }
}

/// Clenshaw–Curtis quadrature weights for the Chebyshev–Lobatto nodes.
pub fn clenshaw_curtis_weights(ns: &NodeSet1D) -> DVector<f64> {
    let n = ns.len();
    let big_n = n - 1;
    let nf = big_n as f64;
    let mut w = DVector::zeros(n);
    if big_n == 0 {
        return w;
    }
    let theta = |k: usize| PI * k as f64 / nf;
    let mut v = vec![1.0; big_n.saturating_sub(1)];
    if big_n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[big_n] = w[0];
        for k in 1..big_n / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(idx + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (idx, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta(idx + 1)).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[big_n] = w[0];
        for k in 1..=(big_n - 1) / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta(idx + 1)).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (idx, vi) in v.iter().enumerate() {
        w[idx + 1] = 2.0 * vi / nf;
    }
    w
}

/// Targets closer than this to a node are treated as exact hits.
const HIT_TOL: f64 = 1e-14;

/// Barycentric interpolation matrix from the source nodes to `targets`.
///
/// Targets that coincide with a source node produce a unit row. Targets
/// outside `[-1, 1]` are extrapolated; see [`is_extrapolation`].
pub fn interp_matrix_1d(source: &NodeSet1D, targets: &[f64]) -> DMatrix<f64> {
    let n = source.len();
    let mut m = DMatrix::zeros(targets.len(), n);
    for (r, &t) in targets.iter().enumerate() {
        let row = interp_row_1d(source, t);
        for (c, v) in row.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

/// Single interpolation row, see [`interp_matrix_1d`].
pub fn interp_row_1d(source: &NodeSet1D, t: f64) -> Vec<f64> {
    let x = &source.nodes;
    let w = &source.bary_weights;
    let n = x.len();
    let mut row = vec![0.0; n];
    if let Some(hit) = x.iter().position(|&xk| (t - xk).abs() <= HIT_TOL) {
        row[hit] = 1.0;
        return row;
    }
    let mut denom = 0.0;
    for k in 0..n {
        let c = w[k] / (t - x[k]);
        row[k] = c;
        denom += c;
    }
    if !denom.is_finite() {
        // t is within round-off of a node; fall back to the nearest one
        let k = nearest(x, t);
        row.iter_mut().for_each(|v| *v = 0.0);
        row[k] = 1.0;
        return row;
    }
    row.iter_mut().for_each(|v| *v /= denom);
    row
}

fn nearest(x: &[f64], t: f64) -> usize {
    let mut best = 0;
    for k in 1..x.len() {
        if (x[k] - t).abs() < (x[best] - t).abs() {
            best = k;
        }
    }
    best
}

/// True when `t` lies outside the reference interval.
pub fn is_extrapolation(t: f64) -> bool {
    !(-1.0..=1.0).contains(&t)
}

/// Kronecker product `a ⊗ b` (first factor acts along the slow index).
pub fn tensor2d(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Bundle of the 1D operators for one direction.
#[derive(Debug, Clone)]
pub struct Operators1D {
    pub nodes: NodeSet1D,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub weights: DVector<f64>,
}

impl Operators1D {
    pub fn new(n: usize) -> Result<Self> {
        let nodes = cheb_lobatto_nodes(n)?;
        let d1 = diff_matrix(&nodes, 1)?;
        let d2 = diff_matrix(&nodes, 2)?;
        let weights = clenshaw_curtis_weights(&nodes);
        Ok(Self {
            nodes,
            d1,
            d2,
            weights,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_node_sets() {
        assert_eq!(cheb_lobatto_nodes(2).unwrap().nodes(), &[1.0, -1.0]);
        let n3 = cheb_lobatto_nodes(3).unwrap();
        assert_eq!(n3.nodes()[0], 1.0);
        assert_abs_diff_eq!(n3.nodes()[1], 0.0, epsilon = 1e-16);
        assert_eq!(n3.nodes()[2], -1.0);
        let n5 = cheb_lobatto_nodes(5).unwrap();
        let h = 0.5f64.sqrt();
        for (a, b) in n5.nodes().iter().zip([1.0, h, 0.0, -h, -1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(cheb_lobatto_nodes(1).is_err());
    }

    #[test]
    fn weights_alternate() {
        let ns = cheb_lobatto_nodes(7).unwrap();
        for k in 1..7 {
            assert!(ns.bary_weights()[k] * ns.bary_weights()[k - 1] < 0.0);
        }
    }

    #[test]
    fn derivative_of_linear_and_cubic() {
        let ns = cheb_lobatto_nodes(6).unwrap();
        let d = diff_matrix(&ns, 1).unwrap();
        let x = DVector::from_column_slice(ns.nodes());
        let ones = &d * &x;
        for v in ones.iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-13);
        }
        let c = DVector::from_element(6, 3.7);
        assert!((&d * c).amax() < 1e-13);
        let cube = x.map(|v| v * v * v);
        let got = &d * cube;
        for (g, xi) in got.iter().zip(x.iter()) {
            assert_abs_diff_eq!(*g, 3.0 * xi * xi, epsilon = 1e-13);
        }
        assert!(diff_matrix(&ns, 3).is_err());
    }

    #[test]
    fn second_order_matches_square() {
        for n in [3, 6, 11, 20] {
            let ns = cheb_lobatto_nodes(n).unwrap();
            let d = diff_matrix(&ns, 1).unwrap();
            let d2 = diff_matrix(&ns, 2).unwrap();
            let sq = &d * &d;
            let scale = sq.amax();
            assert!((d2 - sq).amax() <= 1e-11 * scale, "n = {n}");
        }
    }

    #[test]
    fn clenshaw_curtis_small_cases() {
        let w3 = clenshaw_curtis_weights(&cheb_lobatto_nodes(3).unwrap());
        for (a, b) in w3.iter().zip([1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let ns5 = cheb_lobatto_nodes(5).unwrap();
        let w5 = clenshaw_curtis_weights(&ns5);
        let q: f64 = w5.iter().zip(ns5.nodes()).map(|(w, x)| w * x.powi(4)).sum();
        assert_abs_diff_eq!(q, 0.4, epsilon = 1e-15);
        let w2 = clenshaw_curtis_weights(&cheb_lobatto_nodes(2).unwrap());
        assert_eq!(w2.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn interpolation_identity_and_exact_hits() {
        let ns = cheb_lobatto_nodes(9).unwrap();
        let m = interp_matrix_1d(&ns, ns.nodes());
        assert_eq!(m, DMatrix::identity(9, 9));
        let targets: Vec<f64> = (0..50).map(|k| -1.0 + 2.0 * k as f64 / 49.0).collect();
        let m = interp_matrix_1d(&ns, &targets);
        for r in 0..50 {
            assert_abs_diff_eq!(m.row(r).sum(), 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn quintic_interpolation_oracle() {
        let ns = cheb_lobatto_nodes(8).unwrap();
        let f = DVector::from_iterator(8, ns.nodes().iter().map(|x| x.powi(5)));
        let targets: Vec<f64> = (0..50).map(|k| -1.0 + 2.0 * k as f64 / 49.0).collect();
        let got = interp_matrix_1d(&ns, &targets) * f;
        for (g, t) in got.iter().zip(&targets) {
            assert_abs_diff_eq!(*g, t.powi(5), epsilon = 1e-13);
        }
    }

    #[test]
    fn kronecker_convention() {
        let ns1 = cheb_lobatto_nodes(4).unwrap();
                let eye = tensor2d(&DMatrix::identity(4, 4), &DMatrix::identity(3, 3));
        assert_eq!(eye, DMatrix::identity(12, 12));
        let d1 = tensor2d(&diff_matrix(&ns1, 1).unwrap(), &DMatrix::identity(3, 3));
        // x1 varies slowest
        let x1 = DVector::from_fn(12, |k, _| ns1.nodes()[k / 3]);
        let ones = d1 * x1;
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-13));
        let a = DMatrix::<f64>::zeros(2, 3);
        let b = DMatrix::<f64>::zeros(4, 5);
        assert_eq!(tensor2d(&a, &b).shape(), (8, 15));
    }
}
