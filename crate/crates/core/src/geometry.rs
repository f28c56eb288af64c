//! Quadrilateral and wedge elements: maps, per-element operators, faces.
//!
//! Stacked vector fields on an element are component-blocked: the first
//! `n1*n2` entries hold the first component, the next `n1*n2` the second.
//! Quadrilaterals use Cartesian components `(x1, x2)`; wedges use polar
//! components `(r, θ)`.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spectral::{interp_row_1d, tensor2d, Operators1D};

pub type Point = [f64; 2];

/// Membership tolerance in computational coordinates.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

const NEWTON_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoordSystem {
    Cartesian,
    Polar,
}

/// Faces identified by which computational coordinate is fixed.
///
/// For quadrilaterals `Xi1Max`/`Xi1Min`/`Xi2Max`/`Xi2Min` are called
/// right/left/top/bottom; for wedges outer/inner/max-angle/min-angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaceSide {
    Xi1Max,
    Xi1Min,
    Xi2Max,
    Xi2Min,
}

impl FaceSide {
    pub const ALL: [FaceSide; 4] = [
        FaceSide::Xi1Max,
        FaceSide::Xi1Min,
        FaceSide::Xi2Max,
        FaceSide::Xi2Min,
    ];

    pub fn name(self, cs: CoordSystem) -> &'static str {
        match (cs, self) {
            (CoordSystem::Cartesian, FaceSide::Xi1Max) => "right",
            (CoordSystem::Cartesian, FaceSide::Xi1Min) => "left",
            (CoordSystem::Cartesian, FaceSide::Xi2Max) => "top",
            (CoordSystem::Cartesian, FaceSide::Xi2Min) => "bottom",
            (CoordSystem::Polar, FaceSide::Xi1Max) => "outer",
            (CoordSystem::Polar, FaceSide::Xi1Min) => "inner",
            (CoordSystem::Polar, FaceSide::Xi2Max) => "max-angle",
            (CoordSystem::Polar, FaceSide::Xi2Min) => "min-angle",
        }
    }
}

/// Bilinear quadrilateral.
///
/// Corners are accepted in the order `(x1min,x2min), (x1min,x2max),
/// (x1max,x2max), (x1max,x2min)` for an axis-aligned box; in general corner
/// `k` is the image of `(-1,-1), (-1,1), (1,1), (1,-1)`. Input with the
/// opposite orientation is reordered; self-intersecting or degenerate input
/// is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Quad {
    corners: [Point; 4],
}

impl Quad {
    pub fn new(corners: [Point; 4]) -> Result<Self> {
        if corners.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite quad corner".into()));
        }
        let q = Quad { corners };
        let dets = q.corner_dets();
        let scale = q.diameter().powi(2);
        let tol = 1e-12 * scale;
        if dets.iter().all(|&d| d > tol) {
            return Ok(q);
        }
        if dets.iter().all(|&d| d < -tol) {
            let [p0, p1, p2, p3] = corners;
            return Ok(Quad {
                corners: [p0, p3, p2, p1],
            });
        }
        Err(Error::InvalidGeometry(format!(
            "quad corners {corners:?} are degenerate, non-convex or self-intersecting"
        )))
    }

    /// Axis-aligned box `[x1a, x1b] × [x2a, x2b]`.
    pub fn rect(x1a: f64, x1b: f64, x2a: f64, x2b: f64) -> Result<Self> {
        Quad::new([[x1a, x2a], [x1a, x2b], [x1b, x2b], [x1b, x2a]])
    }

    pub fn corners(&self) -> &[Point; 4] {
        &self.corners
    }

    fn corner_dets(&self) -> [f64; 4] {
        [(-1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (1.0, -1.0)].map(|(a, b)| {
            let j = self.jacobian(a, b);
            j[0][0] * j[1][1] - j[0][1] * j[1][0]
        })
    }

    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.corners {
            for b in &self.corners {
                d = d.max(dist(*a, *b));
            }
        }
        d
    }

    pub fn map(&self, xi1: f64, xi2: f64) -> Point {
        let [p0, p1, p2, p3] = self.corners;
        let n0 = 0.25 * (1.0 - xi1) * (1.0 - xi2);
        let n1 = 0.25 * (1.0 - xi1) * (1.0 + xi2);
        let n2 = 0.25 * (1.0 + xi1) * (1.0 + xi2);
        let n3 = 0.25 * (1.0 + xi1) * (1.0 - xi2);
        [
            n0 * p0[0] + n1 * p1[0] + n2 * p2[0] + n3 * p3[0],
            n0 * p0[1] + n1 * p1[1] + n2 * p2[1] + n3 * p3[1],
        ]
    }

    /// `J[m][k] = ∂x_m/∂ξ_k`.
    pub fn jacobian(&self, xi1: f64, xi2: f64) -> [[f64; 2]; 2] {
        let [p0, p1, p2, p3] = self.corners;
        let mut j = [[0.0; 2]; 2];
        for m in 0..2 {
            j[m][0] = 0.25
                * (-(1.0 - xi2) * p0[m] - (1.0 + xi2) * p1[m]
                    + (1.0 + xi2) * p2[m]
                    + (1.0 - xi2) * p3[m]);
            j[m][1] = 0.25
                * (-(1.0 - xi1) * p0[m] + (1.0 - xi1) * p1[m] + (1.0 + xi1) * p2[m]
                    - (1.0 + xi1) * p3[m]);
        }
        j
    }

    /// `∂²x/∂ξ1∂ξ2`, the only nonzero second derivative of the map.
    fn mixed(&self) -> Point {
        let [p0, p1, p2, p3] = self.corners;
        [
            0.25 * (p0[0] - p1[0] + p2[0] - p3[0]),
            0.25 * (p0[1] - p1[1] + p2[1] - p3[1]),
        ]
    }

    fn bbox(&self) -> (Point, Point) {
        bbox_of(&self.corners)
    }

    fn inverse(&self, p: Point, tol: f64) -> Result<Option<Point>> {
        let (lo, hi) = self.bbox();
        let pad = MEMBERSHIP_TOL * self.diameter();
        if p[0] < lo[0] - pad || p[0] > hi[0] + pad || p[1] < lo[1] - pad || p[1] > hi[1] + pad {
            return Ok(None);
        }
        let mut xi = [0.0, 0.0];
        for _ in 0..NEWTON_MAX_ITERS {
            let x = self.map(xi[0], xi[1]);
            let r = [x[0] - p[0], x[1] - p[1]];
            if r[0].hypot(r[1]) <= tol {
                return Ok(in_reference(xi));
            }
            let j = self.jacobian(xi[0], xi[1]);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det == 0.0 || !det.is_finite() {
                break;
            }
            xi[0] -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            xi[1] -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        }
        let x = self.map(xi[0], xi[1]);
        if dist(x, p) <= tol {
            return Ok(in_reference(xi));
        }
        Err(Error::NumericFailure(format!(
            "bilinear inverse map did not converge for point {p:?}"
        )))
    }
}

/// Annular wedge about `origin`, affine in `(r, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wedge {
    pub r_in: f64,
    pub r_out: f64,
    pub th1: f64,
    pub th2: f64,
    pub origin: Point,
}

impl Wedge {
    pub fn new(r_in: f64, r_out: f64, th1: f64, th2: f64, origin: Point) -> Result<Self> {
        let finite = [r_in, r_out, th1, th2, origin[0], origin[1]]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidGeometry("non-finite wedge parameter".into()));
        }
        if r_in <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "wedge inner radius must be positive (got {r_in}); full discs are not supported"
            )));
        }
        if r_out <= r_in {
            return Err(Error::InvalidGeometry(format!(
                "wedge needs r_in < r_out (got {r_in}, {r_out})"
            )));
        }
        if th2 <= th1 || th2 - th1 > 2.0 * PI + 1e-14 {
            return Err(Error::InvalidGeometry(format!(
                "wedge needs th1 < th2 <= th1 + 2π (got {th1}, {th2})"
            )));
        }
        Ok(Wedge {
            r_in,
            r_out,
            th1,
            th2,
            origin,
        })
    }

    pub fn polar(&self, xi1: f64, xi2: f64) -> Point {
        [
            self.r_in + 0.5 * (xi1 + 1.0) * (self.r_out - self.r_in),
            self.th1 + 0.5 * (xi2 + 1.0) * (self.th2 - self.th1),
        ]
    }

    pub fn to_cartesian(&self, rt: Point) -> Point {
        let (s, c) = rt[1].sin_cos();
        [self.origin[0] + rt[0] * c, self.origin[1] + rt[0] * s]
    }

    fn inverse(&self, p: Point) -> Option<Point> {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1]];
        let r = d[0].hypot(d[1]);
        let mid = 0.5 * (self.th1 + self.th2);
        let mut th = d[1].atan2(d[0]);
        // branch centred on the wedge so both angular faces are reachable
        while th < mid - PI {
            th += 2.0 * PI;
        }
        while th >= mid + PI {
            th -= 2.0 * PI;
        }
        let xi = [
            2.0 * (r - self.r_in) / (self.r_out - self.r_in) - 1.0,
            2.0 * (th - self.th1) / (self.th2 - self.th1) - 1.0,
        ];
        in_reference(xi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Quad(Quad),
    Wedge(Wedge),
}

/// An element: a shape plus node counts per computational direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub shape: Shape,
    pub n1: usize,
    pub n2: usize,
}

/// One face of an element grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub side: FaceSide,
    /// Local node indices ordered along the face.
    pub nodes: Vec<usize>,
    /// Outward unit normals (Cartesian) at the face nodes.
    pub normals: Vec<Point>,
}

/// Nodal grid of one element.
#[derive(Debug, Clone)]
pub struct ElementGrid {
    pub coord_system: CoordSystem,
    pub comp_points: Vec<Point>,
    /// Coordinates in the element's own system: `(x1, x2)` or `(r, θ)`.
    pub phys_points: Vec<Point>,
    pub cart_points: Vec<Point>,
    pub faces: [Face; 4],
}

impl ElementGrid {
    pub fn face(&self, side: FaceSide) -> &Face {
        &self.faces[side as usize]
    }
}

/// Dense operators of one element; vector fields are component-blocked.
#[derive(Debug, Clone)]
pub struct ElementOperators {
    pub coord_system: CoordSystem,
    /// First-component block of the gradient.
    pub grad1: DMatrix<f64>,
    /// Second-component block of the gradient.
    pub grad2: DMatrix<f64>,
    /// Divergence acting on the first component.
    pub div1: DMatrix<f64>,
    /// Divergence acting on the second component.
    pub div2: DMatrix<f64>,
    pub lap: DMatrix<f64>,
    pub int_row: DVector<f64>,
}

impl ElementOperators {
    /// Stacked gradient, `2n × n`.
    pub fn grad(&self) -> DMatrix<f64> {
        let n = self.lap.nrows();
        let mut g = DMatrix::zeros(2 * n, n);
        g.rows_mut(0, n).copy_from(&self.grad1);
        g.rows_mut(n, n).copy_from(&self.grad2);
        g
    }

    /// Divergence, `n × 2n`.
    pub fn div(&self) -> DMatrix<f64> {
        let n = self.lap.nrows();
        let mut d = DMatrix::zeros(n, 2 * n);
        d.columns_mut(0, n).copy_from(&self.div1);
        d.columns_mut(n, n).copy_from(&self.div2);
        d
    }
}

impl Element {
    pub fn quad(corners: [Point; 4], n1: usize, n2: usize) -> Result<Self> {
        Self::new(Shape::Quad(Quad::new(corners)?), n1, n2)
    }

    pub fn rect(x1a: f64, x1b: f64, x2a: f64, x2b: f64, n1: usize, n2: usize) -> Result<Self> {
        Self::new(Shape::Quad(Quad::rect(x1a, x1b, x2a, x2b)?), n1, n2)
    }

    pub fn wedge(
        r_in: f64,
        r_out: f64,
        th1: f64,
        th2: f64,
        origin: Point,
        n1: usize,
        n2: usize,
    ) -> Result<Self> {
        Self::new(Shape::Wedge(Wedge::new(r_in, r_out, th1, th2, origin)?), n1, n2)
    }

    pub fn new(shape: Shape, n1: usize, n2: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::InvalidArgument(format!(
                "element node counts must be at least 2 (got {n1}, {n2})"
            )));
        }
        Ok(Element { shape, n1, n2 })
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord_system(&self) -> CoordSystem {
        match self.shape {
            Shape::Quad(_) => CoordSystem::Cartesian,
            Shape::Wedge(_) => CoordSystem::Polar,
        }
    }

    /// Local index of node `(i1, i2)`.
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n2 + i2
    }

    /// Maps computational points to the element's native coordinates.
    pub fn map_to_physical(&self, comp: &[Point]) -> Vec<Point> {
        comp.iter().map(|c| self.native(c[0], c[1])).collect()
    }

    /// Maps computational points to Cartesian coordinates.
    pub fn map_to_cartesian(&self, comp: &[Point]) -> Vec<Point> {
        comp.iter().map(|c| self.cartesian(c[0], c[1])).collect()
    }

    fn native(&self, xi1: f64, xi2: f64) -> Point {
        match &self.shape {
            Shape::Quad(q) => q.map(xi1, xi2),
            Shape::Wedge(w) => w.polar(xi1, xi2),
        }
    }

    fn cartesian(&self, xi1: f64, xi2: f64) -> Point {
        match &self.shape {
            Shape::Quad(q) => q.map(xi1, xi2),
            Shape::Wedge(w) => w.to_cartesian(w.polar(xi1, xi2)),
        }
    }

    /// Computational coordinates of a Cartesian point, or `None` if the
    /// point is outside the element.
    pub fn inverse_map(&self, p: Point, tol: f64) -> Result<Option<Point>> {
        if tol <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "inverse map tolerance must be positive, got {tol}"
            )));
        }
        match &self.shape {
            Shape::Quad(q) => q.inverse(p, tol),
            Shape::Wedge(w) => Ok(w.inverse(p)),
        }
    }

    /// Cartesian bounding box of the element.
    pub fn bbox(&self) -> (Point, Point) {
        match &self.shape {
            Shape::Quad(q) => q.bbox(),
            Shape::Wedge(w) => {
                let mut pts: Vec<Point> = Vec::new();
                for &r in &[w.r_in, w.r_out] {
                    for &t in &[w.th1, w.th2] {
                        pts.push(w.to_cartesian([r, t]));
                    }
                    let k0 = (w.th1 / (0.5 * PI)).ceil() as i64;
                    let k1 = (w.th2 / (0.5 * PI)).floor() as i64;
                    for k in k0..=k1 {
                        pts.push(w.to_cartesian([r, k as f64 * 0.5 * PI]));
                    }
                }
                bbox_of(&pts)
            }
        }
    }

    /// Analytic area.
    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Quad(q) => {
                let c = q.corners;
                let mut s = 0.0;
                for k in 0..4 {
                    let a = c[k];
                    let b = c[(k + 1) % 4];
                    s += a[0] * b[1] - b[0] * a[1];
                }
                0.5 * s.abs()
            }
            Shape::Wedge(w) => 0.5 * (w.th2 - w.th1) * (w.r_out.powi(2) - w.r_in.powi(2)),
        }
    }

    fn ops1d(&self) -> Result<(Operators1D, Operators1D)> {
        Ok((Operators1D::new(self.n1)?, Operators1D::new(self.n2)?))
    }

    /// Nodal grid with faces and outward normals.
    pub fn grid(&self) -> Result<ElementGrid> {
        let (o1, o2) = self.ops1d()?;
        let mut comp = Vec::with_capacity(self.len());
        for &a in o1.nodes.nodes() {
            for &b in o2.nodes.nodes() {
                comp.push([a, b]);
            }
        }
        let phys = self.map_to_physical(&comp);
        let cart = self.map_to_cartesian(&comp);
        let faces = FaceSide::ALL.map(|side| {
            let nodes = self.face_nodes(side);
            let normals = nodes
                .iter()
                .map(|&k| self.outward_normal(side, comp[k], phys[k]))
                .collect();
            Face {
                side,
                nodes,
                normals,
            }
        });
        Ok(ElementGrid {
            coord_system: self.coord_system(),
            comp_points: comp,
            phys_points: phys,
            cart_points: cart,
            faces,
        })
    }

    /// Local indices of a face, ordered by increasing running index.
    pub fn face_nodes(&self, side: FaceSide) -> Vec<usize> {
        match side {
            FaceSide::Xi1Max => (0..self.n2).map(|j| self.index(0, j)).collect(),
            FaceSide::Xi1Min => (0..self.n2).map(|j| self.index(self.n1 - 1, j)).collect(),
            FaceSide::Xi2Max => (0..self.n1).map(|i| self.index(i, 0)).collect(),
            FaceSide::Xi2Min => (0..self.n1).map(|i| self.index(i, self.n2 - 1)).collect(),
        }
    }

    fn outward_normal(&self, side: FaceSide, comp: Point, phys: Point) -> Point {
        let sign = match side {
            FaceSide::Xi1Max | FaceSide::Xi2Max => 1.0,
            FaceSide::Xi1Min | FaceSide::Xi2Min => -1.0,
        };
        let v = match &self.shape {
            Shape::Quad(q) => {
                let inv = inverse_jacobian(q.jacobian(comp[0], comp[1]));
                match side {
                    FaceSide::Xi1Max | FaceSide::Xi1Min => inv[0],
                    FaceSide::Xi2Max | FaceSide::Xi2Min => inv[1],
                }
            }
            Shape::Wedge(_) => {
                let (s, c) = phys[1].sin_cos();
                match side {
                    FaceSide::Xi1Max | FaceSide::Xi1Min => [c, s],
                    FaceSide::Xi2Max | FaceSide::Xi2Min => [-s, c],
                }
            }
        };
        let n = v[0].hypot(v[1]);
        [sign * v[0] / n, sign * v[1] / n]
    }

    /// Differential and integration operators on the element grid.
    pub fn operators(&self) -> Result<ElementOperators> {
        let (o1, o2) = self.ops1d()?;
        let i1 = DMatrix::<f64>::identity(self.n1, self.n1);
        let i2 = DMatrix::<f64>::identity(self.n2, self.n2);
        let dxi1 = tensor2d(&o1.d1, &i2);
        let dxi2 = tensor2d(&i1, &o2.d1);
        let cc = tensor2d(
            &DMatrix::from_column_slice(self.n1, 1, o1.weights.as_slice()),
            &DMatrix::from_column_slice(self.n2, 1, o2.weights.as_slice()),
        );
        let n = self.len();
        let mut comp = Vec::with_capacity(n);
        for &a in o1.nodes.nodes() {
            for &b in o2.nodes.nodes() {
                comp.push([a, b]);
            }
        }
        match &self.shape {
            Shape::Quad(q) => {
                let mixed = q.mixed();
                // per-node coefficient vectors
                let mut g = [[vec![0.0; n], vec![0.0; n]], [vec![0.0; n], vec![0.0; n]]];
                let mut a11 = vec![0.0; n];
                let mut a12 = vec![0.0; n];
                let mut a22 = vec![0.0; n];
                let mut b = [vec![0.0; n], vec![0.0; n]];
                let mut int_row = DVector::zeros(n);
                for (k, c) in comp.iter().enumerate() {
                    let j = q.jacobian(c[0], c[1]);
                    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                    // inv[k][i] = ∂ξ_k/∂x_i
                    let inv = inverse_jacobian(j);
                    for kk in 0..2 {
                        for i in 0..2 {
                            g[i][kk][k] = inv[kk][i];
                        }
                    }
                    for i in 0..2 {
                        a11[k] += inv[0][i] * inv[0][i];
                        a12[k] += 2.0 * inv[0][i] * inv[1][i];
                        a22[k] += inv[1][i] * inv[1][i];
                        for kk in 0..2 {
                            // ∂²ξ_kk/∂x_i² = −Σ_m ∂ξ_kk/∂x_m · 2 x_{m,12} ξ_{1,i} ξ_{2,i}
                            let s: f64 = (0..2)
                                .map(|m| inv[kk][m] * 2.0 * mixed[m] * inv[0][i] * inv[1][i])
                                .sum();
                            b[kk][k] -= s;
                        }
                    }
                    int_row[k] = cc[k] * det.abs();
                }
                let d11 = tensor2d(&o1.d2, &i2);
                let d22 = tensor2d(&i1, &o2.d2);
                let d12 = tensor2d(&o1.d1, &o2.d1);
                let grad1 = row_scaled(&dxi1, &g[0][0]) + row_scaled(&dxi2, &g[0][1]);
                let grad2 = row_scaled(&dxi1, &g[1][0]) + row_scaled(&dxi2, &g[1][1]);
                let lap = row_scaled(&d11, &a11)
                    + row_scaled(&d12, &a12)
                    + row_scaled(&d22, &a22)
                    + row_scaled(&dxi1, &b[0])
                    + row_scaled(&dxi2, &b[1]);
                Ok(ElementOperators {
                    coord_system: CoordSystem::Cartesian,
                    div1: grad1.clone(),
                    div2: grad2.clone(),
                    grad1,
                    grad2,
                    lap,
                    int_row,
                })
            }
            Shape::Wedge(w) => {
                let sr = 2.0 / (w.r_out - w.r_in);
                let st = 2.0 / (w.th2 - w.th1);
                let r: Vec<f64> = comp.iter().map(|c| w.polar(c[0], c[1])[0]).collect();
                let inv_r: Vec<f64> = r.iter().map(|v| 1.0 / v).collect();
                let inv_r2: Vec<f64> = r.iter().map(|v| 1.0 / (v * v)).collect();
                let dr = dxi1 * sr;
                let dth = dxi2 * st;
                let drr = tensor2d(&o1.d2, &i2) * (sr * sr);
                let dthth = tensor2d(&i1, &o2.d2) * (st * st);
                let grad1 = dr.clone();
                let grad2 = row_scaled(&dth, &inv_r);
                let div1 = &dr + DMatrix::from_diagonal(&DVector::from_column_slice(&inv_r));
                let div2 = grad2.clone();
                let lap = drr + row_scaled(&dr, &inv_r) + row_scaled(&dthth, &inv_r2);
                let jac = 0.25 * (w.r_out - w.r_in) * (w.th2 - w.th1);
                let int_row = DVector::from_fn(n, |k, _| cc[k] * jac * r[k]);
                Ok(ElementOperators {
                    coord_system: CoordSystem::Polar,
                    grad1,
                    grad2,
                    div1,
                    div2,
                    lap,
                    int_row,
                })
            }
        }
    }

    /// Row of the 2D barycentric interpolation matrix at computational point `xi`.
    pub fn interp_row(&self, xi: Point) -> Result<Vec<f64>> {
        let (o1, o2) = self.ops1d()?;
        let r1 = interp_row_1d(&o1.nodes, xi[0]);
        let r2 = interp_row_1d(&o2.nodes, xi[1]);
        let mut row = Vec::with_capacity(self.len());
        for a in &r1 {
            for b in &r2 {
                row.push(a * b);
            }
        }
        Ok(row)
    }
}

/// `inv[k][i] = ∂ξ_k/∂x_i` for `J[m][k] = ∂x_m/∂ξ_k`.
fn inverse_jacobian(j: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    [
        [j[1][1] / det, -j[0][1] / det],
        [-j[1][0] / det, j[0][0] / det],
    ]
}

fn row_scaled(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= s[i];
    }
    out
}

fn in_reference(xi: Point) -> Option<Point> {
    let lim = 1.0 + MEMBERSHIP_TOL;
    if xi[0].abs() <= lim && xi[1].abs() <= lim {
        Some([xi[0].clamp(-1.0, 1.0), xi[1].clamp(-1.0, 1.0)])
    } else {
        None
    }
}

fn bbox_of(pts: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
