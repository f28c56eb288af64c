//! Composite domains: stacking, block operators, intersections, boundary
//! normals and global interpolation.
//!
//! Scalar fields have length `M` (elements stacked in order); vector fields
//! have length `2M`, first-component block then second-component block.
//! Components at a node are in that node's element frame: Cartesian
//! `(x1, x2)` for quadrilaterals, `(r, θ)` for wedges.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{dist, CoordSystem, Element, ElementGrid, ElementOperators, FaceSide, Point};

/// Interface condition between two elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Condition {
    /// Continuity of the field and of the normal flux.
    #[default]
    Match,
    /// Zero normal flux on both sides.
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Same,
    Reversed,
}

/// Request to use a non-default condition between two elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionFlag {
    pub elem_a: usize,
    pub elem_b: usize,
    pub condition: Condition,
}

/// A detected face-to-face intersection, with `elem_i < elem_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionSpec {
    pub elem_i: usize,
    pub face_k: FaceSide,
    pub elem_j: usize,
    pub face_l: FaceSide,
    pub orientation: Orientation,
    pub condition: Condition,
    /// Global node pairs `(i-side, j-side)` in `face_k` order.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexSets {
    /// Nodes on the outer boundary of the composite domain.
    pub bound: Vec<usize>,
    /// Nodes on intersection faces that are not boundary nodes.
    pub intersection_nodes: Vec<usize>,
    /// All remaining nodes.
    pub interior: Vec<usize>,
    pub intersections: Vec<IntersectionSpec>,
}

/// Replacement rule for one row at an intersection node.
#[derive(Debug, Clone, PartialEq)]
pub enum MatchRow {
    /// `f[node] − f[other]`.
    Continuity { node: usize, other: usize },
    /// `Σ j(p)·n` over the terms, with `n` a Cartesian unit normal.
    Flux { node: usize, terms: Vec<(usize, Point)> },
}

impl MatchRow {
    pub fn node(&self) -> usize {
        match self {
            MatchRow::Continuity { node, .. } | MatchRow::Flux { node, .. } => *node,
        }
    }
}

/// Block-diagonal operator with square blocks.
#[derive(Debug, Clone)]
pub struct BlockDiag {
    pub blocks: Vec<DMatrix<f64>>,
    pub offsets: Vec<usize>,
    dim: usize,
}

impl BlockDiag {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for b in &blocks {
            offsets.push(dim);
            dim += b.nrows();
        }
        BlockDiag {
            blocks,
            offsets,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim);
        for (b, &o) in self.blocks.iter().zip(&self.offsets) {
            let n = b.nrows();
            y.rows_mut(o, n).gemv(1.0, b, &x.rows(o, n), 0.0);
        }
        y
    }

    /// `self · m` for a dense `M × k` matrix.
    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, m.ncols());
        for (b, &o) in self.blocks.iter().zip(&self.offsets) {
            let n = b.nrows();
            out.rows_mut(o, n).gemm(1.0, b, &m.rows(o, n), 0.0);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for (b, &o) in self.blocks.iter().zip(&self.offsets) {
            let n = b.nrows();
            d.view_mut((o, o), (n, n)).copy_from(b);
        }
        d
    }
}

/// Global operators stored as per-element blocks.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub grad1: BlockDiag,
    pub grad2: BlockDiag,
    pub div1: BlockDiag,
    pub div2: BlockDiag,
    pub lap: BlockDiag,
    pub int: DVector<f64>,
}

impl OperatorSet {
    fn from_elements(ops: Vec<ElementOperators>) -> Self {
        let mut g1 = Vec::new();
        let mut g2 = Vec::new();
        let mut d1 = Vec::new();
        let mut d2 = Vec::new();
        let mut lap = Vec::new();
        let mut int = Vec::new();
        for o in ops {
            g1.push(o.grad1);
            g2.push(o.grad2);
            d1.push(o.div1);
            d2.push(o.div2);
            lap.push(o.lap);
            int.extend(o.int_row.iter().copied());
        }
        OperatorSet {
            grad1: BlockDiag::new(g1),
            grad2: BlockDiag::new(g2),
            div1: BlockDiag::new(d1),
            div2: BlockDiag::new(d2),
            lap: BlockDiag::new(lap),
            int: DVector::from_vec(int),
        }
    }

    pub fn m(&self) -> usize {
        self.lap.dim()
    }

    pub fn grad(&self, f: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        let mut out = DVector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&self.grad1.apply(f));
        out.rows_mut(m, m).copy_from(&self.grad2.apply(f));
        out
    }

    pub fn div(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        let a = self.div1.apply(&u.rows(0, m).into_owned());
        let b = self.div2.apply(&u.rows(m, m).into_owned());
        a + b
    }

    pub fn lap(&self, f: &DVector<f64>) -> DVector<f64> {
        self.lap.apply(f)
    }

    pub fn integrate(&self, f: &DVector<f64>) -> f64 {
        self.int.dot(f)
    }

    /// Dense `2M × M` gradient.
    pub fn grad_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut g = DMatrix::zeros(2 * m, m);
        g.rows_mut(0, m).copy_from(&self.grad1.to_dense());
        g.rows_mut(m, m).copy_from(&self.grad2.to_dense());
        g
    }

    /// Dense `M × 2M` divergence.
    pub fn div_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut d = DMatrix::zeros(m, 2 * m);
        d.columns_mut(0, m).copy_from(&self.div1.to_dense());
        d.columns_mut(m, m).copy_from(&self.div2.to_dense());
        d
    }

    pub fn lap_matrix(&self) -> DMatrix<f64> {
        self.lap.to_dense()
    }

    /// `grad · m` for a dense `M × k` matrix, giving `2M × k`.
    pub fn grad_mul(&self, mat: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::zeros(2 * m, mat.ncols());
        out.rows_mut(0, m).copy_from(&self.grad1.mul_dense(mat));
        out.rows_mut(m, m).copy_from(&self.grad2.mul_dense(mat));
        out
    }
}

/// Assembled composite domain.
#[derive(Debug, Clone)]
pub struct MultiShape {
    pub elements: Vec<Element>,
    pub grids: Vec<ElementGrid>,
    pub offsets: Vec<usize>,
    /// Native coordinates per node: `(x1, x2)` or `(r, θ)`.
    pub pts_native: Vec<Point>,
    pub pts_cart: Vec<Point>,
    /// Rotation angle of each node's component frame (0 for Cartesian).
    pub frame_angle: Vec<f64>,
    /// Element owning each node.
    pub elem_of: Vec<usize>,
    pub ops: OperatorSet,
    pub ind: IndexSets,
    /// Cartesian outward unit normals, one per entry of `ind.bound`.
    pub normals: Vec<Point>,
    pub match_rows: Vec<MatchRow>,
    pub diameter: f64,
    pub tol: f64,
}

/// Builds a multishape. Intersections default to [`Condition::Match`];
/// `flags` switch specific element pairs to other conditions.
pub fn build_multishape(elements: Vec<Element>, flags: &[ConditionFlag]) -> Result<MultiShape> {
    MultiShape::new(elements, flags)
}

impl MultiShape {
    pub fn new(elements: Vec<Element>, flags: &[ConditionFlag]) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidArgument("multishape needs at least one element".into()));
        }
        let grids: Vec<ElementGrid> = elements
            .par_iter()
            .map(|e| e.grid())
            .collect::<Result<_>>()?;
        let ops: Vec<ElementOperators> = elements
            .par_iter()
            .map(|e| e.operators())
            .collect::<Result<_>>()?;

        let mut offsets = Vec::with_capacity(elements.len());
        let mut m = 0;
        for e in &elements {
            offsets.push(m);
            m += e.len();
        }
        let mut pts_native = Vec::with_capacity(m);
        let mut pts_cart = Vec::with_capacity(m);
        let mut frame_angle = Vec::with_capacity(m);
        let mut elem_of = Vec::with_capacity(m);
        for (ei, g) in grids.iter().enumerate() {
            pts_native.extend_from_slice(&g.phys_points);
            pts_cart.extend_from_slice(&g.cart_points);
            for p in &g.phys_points {
                frame_angle.push(match g.coord_system {
                    CoordSystem::Cartesian => 0.0,
                    CoordSystem::Polar => p[1],
                });
                elem_of.push(ei);
            }
        }
        let diameter = domain_diameter(&elements);
        let tol = 1e-10 * diameter;

        let mut intersections = find_intersections(&elements, &grids, &offsets, tol)?;
        for f in flags {
            let (a, b) = (f.elem_a.min(f.elem_b), f.elem_a.max(f.elem_b));
            let mut hit = false;
            for s in intersections.iter_mut() {
                if s.elem_i == a && s.elem_j == b {
                    s.condition = f.condition;
                    hit = true;
                }
            }
            if !hit {
                return Err(Error::Config(format!(
                    "condition given for elements {} and {}, which share no face",
                    f.elem_a, f.elem_b
                )));
            }
        }

        let mut ms = MultiShape {
            elements,
            grids,
            offsets,
            pts_native,
            pts_cart,
            frame_angle,
            elem_of,
            ops: OperatorSet::from_elements(ops),
            ind: IndexSets::default(),
            normals: Vec::new(),
            match_rows: Vec::new(),
            diameter,
            tol,
        };
        ms.build_index_sets(intersections);
        ms.build_boundary_normals()?;
        ms.build_match_rows()?;
        Ok(ms)
    }

    /// Total number of nodes `M`.
    pub fn m(&self) -> usize {
        self.pts_cart.len()
    }

    fn intersection_faces(&self) -> Vec<(usize, FaceSide)> {
        let mut v = Vec::new();
        for s in &self.ind.intersections {
            v.push((s.elem_i, s.face_k));
            v.push((s.elem_j, s.face_l));
        }
        v
    }

    fn build_index_sets(&mut self, intersections: Vec<IntersectionSpec>) {
        self.ind.intersections = intersections;
        let shared = self.intersection_faces();
        let m = self.m();
        let mut on_bound = vec![false; m];
        let mut on_inter = vec![false; m];
        for (ei, g) in self.grids.iter().enumerate() {
            let off = self.offsets[ei];
            for f in &g.faces {
                let is_shared = shared.contains(&(ei, f.side));
                for &k in &f.nodes {
                    if is_shared {
                        on_inter[off + k] = true;
                    } else {
                        on_bound[off + k] = true;
                    }
                }
            }
        }
        self.ind.bound = (0..m).filter(|&k| on_bound[k]).collect();
        self.ind.intersection_nodes = (0..m).filter(|&k| on_inter[k] && !on_bound[k]).collect();
        self.ind.interior = (0..m).filter(|&k| !on_inter[k] && !on_bound[k]).collect();
    }

    /// Outward normals of the non-shared faces containing global node `k`.
    fn boundary_face_normals(&self, k: usize) -> Vec<Point> {
        let ei = self.elem_of[k];
        let local = k - self.offsets[ei];
        let shared = self.intersection_faces();
        let mut out = Vec::new();
        for f in &self.grids[ei].faces {
            if shared.contains(&(ei, f.side)) {
                continue;
            }
            if let Some(pos) = f.nodes.iter().position(|&n| n == local) {
                out.push(f.normals[pos]);
            }
        }
        out
    }

    /// Recomputes boundary normals: at each boundary location the outward
    /// normals of all boundary faces meeting there are summed and normalized.
    pub fn build_boundary_normals(&mut self) -> Result<()> {
        let bound = &self.ind.bound;
        let mut normals = Vec::with_capacity(bound.len());
        for &b in bound {
            let mut s = [0.0, 0.0];
            for &c in bound {
                if dist(self.pts_cart[b], self.pts_cart[c]) <= self.tol {
                    for n in self.boundary_face_normals(c) {
                        s[0] += n[0];
                        s[1] += n[1];
                    }
                }
            }
            let len = s[0].hypot(s[1]);
            if len <= 1e-12 {
                return Err(Error::NumericFailure(format!(
                    "boundary normals cancel at {:?}; override the normal at this point",
                    self.pts_cart[b]
                )));
            }
            normals.push([s[0] / len, s[1] / len]);
        }
        self.normals = normals;
        Ok(())
    }

    /// Replaces the normals at the given global boundary nodes.
    pub fn override_normals(&mut self, nodes: &[usize], vectors: &[Point]) -> Result<()> {
        if nodes.len() != vectors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} nodes but {} normal vectors",
                nodes.len(),
                vectors.len()
            )));
        }
        for (&k, v) in nodes.iter().zip(vectors) {
            let pos = self.ind.bound.binary_search(&k).map_err(|_| {
                Error::InvalidArgument(format!("node {k} is not a boundary node"))
            })?;
            let len = v[0].hypot(v[1]);
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidArgument(format!("invalid override normal {v:?}")));
            }
            self.normals[pos] = [v[0] / len, v[1] / len];
        }
        Ok(())
    }

    /// Overrides the normal at every boundary node located at `point`.
    /// Returns the number of nodes changed.
    pub fn override_normal_at(&mut self, point: Point, v: Point) -> Result<usize> {
        let nodes: Vec<usize> = self
            .ind
            .bound
            .iter()
            .copied()
            .filter(|&b| dist(self.pts_cart[b], point) <= self.tol.max(1e-12))
            .collect();
        if nodes.is_empty() {
            return Err(Error::Config(format!("no boundary node at {point:?}")));
        }
        let vs = vec![v; nodes.len()];
        self.override_normals(&nodes, &vs)?;
        Ok(nodes.len())
    }

    /// Outward normal of global node `k` on the face `side` of its element.
    fn face_normal(&self, k: usize, side: FaceSide) -> Point {
        let ei = self.elem_of[k];
        let f = &self.grids[ei].faces[side as usize];
        let local = k - self.offsets[ei];
        let pos = f.nodes.iter().position(|&n| n == local).expect("node on face");
        f.normals[pos]
    }

    fn build_match_rows(&mut self) -> Result<()> {
        let m = self.m();
        let mut in_bound = vec![false; m];
        for &b in &self.ind.bound {
            in_bound[b] = true;
        }
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let n = p[c];
                p[c] = r;
                c = n;
            }
            r
        }
        // (p, n_p, q, n_q) for every matched pair off the boundary
        let mut edges: Vec<(usize, Point, usize, Point)> = Vec::new();
        let mut rows: Vec<MatchRow> = Vec::new();
        let mut walled = vec![false; m];
        for s in &self.ind.intersections {
            for &(p, q) in &s.pairs {
                if in_bound[p] || in_bound[q] {
                    continue;
                }
                let np = self.face_normal(p, s.face_k);
                let nq = self.face_normal(q, s.face_l);
                match s.condition {
                    Condition::Match => {
                        let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
                        if rp != rq {
                            parent[rp.max(rq)] = rp.min(rq);
                        }
                        edges.push((p, np, q, nq));
                    }
                    Condition::Wall => {
                        for (k, n) in [(p, np), (q, nq)] {
                            if walled[k] {
                                return Err(Error::Config(format!(
                                    "node at {:?} lies on more than one wall interface",
                                    self.pts_cart[k]
                                )));
                            }
                            walled[k] = true;
                            rows.push(MatchRow::Flux {
                                node: k,
                                terms: vec![(k, n)],
                            });
                        }
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(p, _, q, _) in &edges {
            for k in [p, q] {
                let r = find(&mut parent, k);
                let g = groups.entry(r).or_default();
                if !g.contains(&k) {
                    g.push(k);
                }
            }
        }
        for (root, mut nodes) in groups {
            nodes.sort_unstable();
            if nodes.iter().any(|&k| walled[k]) {
                return Err(Error::Config(format!(
                    "wall and matching interfaces meet at {:?}",
                    self.pts_cart[root]
                )));
            }
            let mut terms = Vec::new();
            for &(p, np, q, nq) in &edges {
                if find(&mut parent, p) == root {
                    terms.push((p, np));
                    terms.push((q, nq));
                }
            }
            for w in nodes.windows(2) {
                rows.push(MatchRow::Continuity {
                    node: w[0],
                    other: w[1],
                });
            }
            rows.push(MatchRow::Flux {
                node: *nodes.last().expect("non-empty group"),
                terms,
            });
        }
        rows.sort_by_key(|r| r.node());
        let covered: Vec<usize> = rows.iter().map(|r| r.node()).collect();
        if covered != self.ind.intersection_nodes {
            return Err(Error::Config(
                "intersection nodes without a matching partner; check interface geometry".into(),
            ));
        }
        self.match_rows = rows;
        Ok(())
    }

    /// Cartesian components of the frame vectors at node `k`.
    fn frame(&self, k: usize) -> (f64, f64) {
        let a = self.frame_angle[k];
        if a == 0.0 {
            (0.0, 1.0)
        } else {
            a.sin_cos()
        }
    }

    /// Coefficients `(c1, c2)` with `u·n = c1 u1 + c2 u2` at node `k`.
    pub fn normal_coeffs(&self, k: usize, n: Point) -> (f64, f64) {
        let (s, c) = self.frame(k);
        (n[0] * c + n[1] * s, -n[0] * s + n[1] * c)
    }

    /// Outward normal component of a stacked vector field at every
    /// boundary node.
    pub fn normal_component(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        DVector::from_iterator(
            self.ind.bound.len(),
            self.ind.bound.iter().zip(&self.normals).map(|(&k, &n)| {
                let (c1, c2) = self.normal_coeffs(k, n);
                c1 * u[k] + c2 * u[m + k]
            }),
        )
    }

    /// Dense `|bound| × 2M` normal-component operator.
    pub fn normal_component_operator(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut op = DMatrix::zeros(self.ind.bound.len(), 2 * m);
        for (r, (&k, &n)) in self.ind.bound.iter().zip(&self.normals).enumerate() {
            let (c1, c2) = self.normal_coeffs(k, n);
            op[(r, k)] = c1;
            op[(r, m + k)] = c2;
        }
        op
    }

    /// Value of a flux row for a stacked vector field.
    pub fn flux_terms_value(&self, terms: &[(usize, Point)], u: &DVector<f64>) -> f64 {
        let m = self.m();
        terms
            .iter()
            .map(|&(k, n)| {
                let (c1, c2) = self.normal_coeffs(k, n);
                c1 * u[k] + c2 * u[m + k]
            })
            .sum()
    }

    /// Sparse coefficients (column in `0..2M`, value) of a flux row.
    pub fn flux_terms_coeffs(&self, terms: &[(usize, Point)]) -> Vec<(usize, f64)> {
        let m = self.m();
        let mut out = Vec::with_capacity(2 * terms.len());
        for &(k, n) in terms {
            let (c1, c2) = self.normal_coeffs(k, n);
            out.push((k, c1));
            out.push((m + k, c2));
        }
        out
    }

    /// Overwrites intersection rows of `rhs` with continuity and flux
    /// matching residuals.
    pub fn apply_intersection_bcs(
        &self,
        rhs: &mut DVector<f64>,
        rho: &DVector<f64>,
        flux: Option<&DVector<f64>>,
    ) -> Result<()> {
        let m = self.m();
        if rhs.len() != m || rho.len() != m {
            return Err(Error::InvalidArgument(format!(
                "rhs and rho must have length {m} (got {}, {})",
                rhs.len(),
                rho.len()
            )));
        }
        if let Some(j) = flux {
            if j.len() != 2 * m {
                return Err(Error::InvalidArgument(format!(
                    "flux must have length {} (got {})",
                    2 * m,
                    j.len()
                )));
            }
        }
        for row in &self.match_rows {
            match row {
                MatchRow::Continuity { node, other } => rhs[*node] = rho[*node] - rho[*other],
                MatchRow::Flux { node, terms } => {
                    let j = flux.ok_or_else(|| {
                        Error::InvalidArgument("flux data required for intersection rows".into())
                    })?;
                    rhs[*node] = self.flux_terms_value(terms, j);
                }
            }
        }
        Ok(())
    }

    /// Rotates a stacked local-frame vector field to Cartesian components.
    pub fn to_cartesian_components(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        let mut out = u.clone();
        for k in 0..m {
            if self.frame_angle[k] != 0.0 {
                let (s, c) = self.frame_angle[k].sin_cos();
                out[k] = c * u[k] - s * u[m + k];
                out[m + k] = s * u[k] + c * u[m + k];
            }
        }
        out
    }

    /// Rotates a stacked Cartesian vector field into local frames.
    pub fn to_local_components(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        let mut out = u.clone();
        for k in 0..m {
            if self.frame_angle[k] != 0.0 {
                let (s, c) = self.frame_angle[k].sin_cos();
                out[k] = c * u[k] + s * u[m + k];
                out[m + k] = -s * u[k] + c * u[m + k];
            }
        }
        out
    }

    /// Samples a scalar function of Cartesian position at all nodes.
    pub fn sample(&self, f: impl Fn(Point) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.pts_cart.iter().map(|&p| f(p)))
    }

    /// Samples a Cartesian vector function, returning local-frame components.
    pub fn sample_vector(&self, f: impl Fn(Point) -> Point) -> DVector<f64> {
        let m = self.m();
        let mut u = DVector::zeros(2 * m);
        for (k, &p) in self.pts_cart.iter().enumerate() {
            let v = f(p);
            u[k] = v[0];
            u[m + k] = v[1];
        }
        self.to_local_components(&u)
    }

    /// Finds the containing element (lowest index wins) and computational
    /// coordinates for each target.
    pub fn locate(&self, targets: &[Point]) -> Result<Vec<Option<(usize, Point)>>> {
        let bboxes: Vec<(Point, Point)> = self.elements.iter().map(|e| e.bbox()).collect();
        let newton_tol = 1e-13 * self.diameter;
        targets
            .par_iter()
            .map(|&p| {
                for (ei, e) in self.elements.iter().enumerate() {
                    let (lo, hi) = bboxes[ei];
                    if p[0] < lo[0] - self.tol
                        || p[0] > hi[0] + self.tol
                        || p[1] < lo[1] - self.tol
                        || p[1] > hi[1] + self.tol
                    {
                        continue;
                    }
                    if let Some(xi) = e.inverse_map(p, newton_tol)? {
                        return Ok(Some((ei, xi)));
                    }
                }
                Ok(None)
            })
            .collect()
    }

    /// Interpolation rows for located points; `None` entries give zero rows.
    pub fn interpolation_from_located(&self, located: &[Option<(usize, Point)>]) -> Result<DMatrix<f64>> {
        let m = self.m();
        let mut out = DMatrix::zeros(located.len(), m);
        for (r, loc) in located.iter().enumerate() {
            if let Some((ei, xi)) = loc {
                let row = self.elements[*ei].interp_row(*xi)?;
                let off = self.offsets[*ei];
                for (c, v) in row.into_iter().enumerate() {
                    out[(r, off + c)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Dense `|targets| × M` interpolation matrix.
    pub fn global_interpolation(&self, targets: &[Point]) -> Result<DMatrix<f64>> {
        let located = self.locate(targets)?;
        let outside: Vec<Point> = targets
            .iter()
            .zip(&located)
            .filter(|(_, l)| l.is_none())
            .map(|(p, _)| *p)
            .collect();
        if !outside.is_empty() {
            return Err(Error::OutOfDomain(outside));
        }
        self.interpolation_from_located(&located)
    }
}

fn domain_diameter(elements: &[Element]) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for e in elements {
        let (a, b) = e.bbox();
        for d in 0..2 {
            lo[d] = lo[d].min(a[d]);
            hi[d] = hi[d].max(b[d]);
        }
    }
    (hi[0] - lo[0]).hypot(hi[1] - lo[1])
}

/// Detects face-to-face intersections between elements.
pub fn detect_intersections(elements: &[Element], tol: f64) -> Result<Vec<IntersectionSpec>> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let grids: Vec<ElementGrid> = elements.iter().map(|e| e.grid()).collect::<Result<_>>()?;
    let mut offsets = Vec::new();
    let mut m = 0;
    for e in elements {
        offsets.push(m);
        m += e.len();
    }
    find_intersections(elements, &grids, &offsets, tol)
}

fn on_face_interior(e: &Element, side: FaceSide, p: Point, tol: f64) -> bool {
    let Ok(Some(xi)) = e.inverse_map(p, tol.max(1e-14)) else {
        return false;
    };
    let edge = 1e-8;
    let (fixed, free) = match side {
        FaceSide::Xi1Max => (xi[0] - 1.0, xi[1]),
        FaceSide::Xi1Min => (xi[0] + 1.0, xi[1]),
        FaceSide::Xi2Max => (xi[1] - 1.0, xi[0]),
        FaceSide::Xi2Min => (xi[1] + 1.0, xi[0]),
    };
    fixed.abs() <= edge && free.abs() < 1.0 - edge
}

fn find_intersections(
    elements: &[Element],
    grids: &[ElementGrid],
    offsets: &[usize],
    tol: f64,
) -> Result<Vec<IntersectionSpec>> {
    let mut out = Vec::new();
    for i in 0..elements.len() {
        for j in (i + 1)..elements.len() {
            for fk in &grids[i].faces {
                for fl in &grids[j].faces {
                    let a: Vec<Point> = fk.nodes.iter().map(|&k| grids[i].cart_points[k]).collect();
                    let b: Vec<Point> = fl.nodes.iter().map(|&k| grids[j].cart_points[k]).collect();
                    let orientation = if a.len() == b.len() {
                        if a.iter().zip(&b).all(|(p, q)| dist(*p, *q) <= tol) {
                            Some(Orientation::Same)
                        } else if a.iter().zip(b.iter().rev()).all(|(p, q)| dist(*p, *q) <= tol) {
                            Some(Orientation::Reversed)
                        } else {
                            None
                        }
                    } else {
                        None
                    };
                    if let Some(orientation) = orientation {
                        let n = fk.nodes.len();
                        let pairs = (0..n)
                            .map(|t| {
                                let u = match orientation {
                                    Orientation::Same => t,
                                    Orientation::Reversed => n - 1 - t,
                                };
                                (offsets[i] + fk.nodes[t], offsets[j] + fl.nodes[u])
                            })
                            .collect();
                        out.push(IntersectionSpec {
                            elem_i: i,
                            face_k: fk.side,
                            elem_j: j,
                            face_l: fl.side,
                            orientation,
                            condition: Condition::Match,
                            pairs,
                        });
                        continue;
                    }
                    let coincident: Vec<Point> = a
                        .iter()
                        .filter(|p| b.iter().any(|q| dist(**p, *q) <= tol))
                        .copied()
                        .collect();
                    let hanging = [a[0], a[a.len() - 1]]
                        .iter()
                        .any(|&p| on_face_interior(&elements[j], fl.side, p, tol))
                        || [b[0], b[b.len() - 1]]
                            .iter()
                            .any(|&p| on_face_interior(&elements[i], fk.side, p, tol));
                    if coincident.len() >= 2 || hanging {
                        let cs = elements[i].coord_system();
                        let ct = elements[j].coord_system();
                        return Err(Error::Config(format!(
                            "elements {i} ({} face, {} nodes) and {j} ({} face, {} nodes) overlap \
                             without matching nodes; coincident nodes: {coincident:?}",
                            fk.side.name(cs),
                            a.len(),
                            fl.side.name(ct),
                            b.len()
                        )));
                    }
                }
            }
        }
    }
    Ok(out)
}
