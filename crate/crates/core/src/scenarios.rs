//! Built-in geometries and parameter sets: the box and wedge validation
//! discretizations, the quadrilateral-plus-wedge fixture, and the
//! equilibrium, funnel and channel experiments.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::assembly::{build_multishape, MultiShape};
use crate::ddft::{Ddft, SpeciesParams};
use crate::error::{Error, Result};
use crate::geometry::{CoordSystem, Element};
use crate::profiles::{Profile, WallSegment};

/// Validation discretizations. `A`–`D` split the box `[0,2]²`, `E`–`H` the
/// wedge `r ∈ [1,2]`, `θ ∈ [0,π/2]` about the origin, and `QuadWedge` is
/// the box `[0,3]²` joined to the half annulus about `(4,3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    QuadWedge,
}

pub const BOX_CASES: [Case; 4] = [Case::A, Case::B, Case::C, Case::D];
pub const WEDGE_CASES: [Case; 4] = [Case::E, Case::F, Case::G, Case::H];
pub const ALL_CASES: [Case; 9] = [
    Case::A,
    Case::B,
    Case::C,
    Case::D,
    Case::E,
    Case::F,
    Case::G,
    Case::H,
    Case::QuadWedge,
];

pub const VALIDATION_BOX: [f64; 4] = [0.0, 2.0, 0.0, 2.0];
pub const VALIDATION_WEDGE: (f64, f64, f64, f64) = (1.0, 2.0, 0.0, PI / 2.0);

/// Default `N_Σ` sweep.
pub fn default_sweep() -> Vec<usize> {
    (6..=50).step_by(4).collect()
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::A => "a",
            Case::B => "b",
            Case::C => "c",
            Case::D => "d",
            Case::E => "e",
            Case::F => "f",
            Case::G => "g",
            Case::H => "h",
            Case::QuadWedge => "quad_wedge",
        }
    }

    pub fn is_box(self) -> bool {
        BOX_CASES.contains(&self)
    }

    pub fn is_wedge(self) -> bool {
        WEDGE_CASES.contains(&self)
    }

    /// Elements for a total of `n_sigma` points per direction, split
    /// equally among the elements along each direction.
    pub fn elements(self, n_sigma: usize) -> Result<Vec<Element>> {
        self.elements_scaled(n_sigma, 1.0, 1.0)
    }

    /// As [`Case::elements`] with the per-direction budgets scaled by
    /// `s1`, `s2` (e.g. 0.5 halves the first direction).
    pub fn elements_scaled(self, n_sigma: usize, s1: f64, s2: f64) -> Result<Vec<Element>> {
        if n_sigma < 2 {
            return Err(Error::InvalidArgument(format!("N_Sigma must be at least 2, got {n_sigma}")));
        }
        let n = |k: usize, s: f64| split(n_sigma as f64 * s, k);
        let [x0, x1, y0, y1] = VALIDATION_BOX;
        let (ri, ro, t0, t1) = VALIDATION_WEDGE;
        let o = [0.0, 0.0];
        match self {
            Case::A => Ok(vec![Element::rect(x0, x1, y0, y1, n(1, s1), n(1, s2))?]),
            Case::B => {
                let (a, b) = (n(2, s1), n(1, s2));
                Ok(vec![
                    Element::rect(x0, 0.5, y0, y1, a, b)?,
                    Element::rect(0.5, x1, y0, y1, a, b)?,
                ])
            }
            Case::C => {
                let (a, b) = (n(3, s1), n(1, s2));
                let c1 = 2.0 / 3.0;
                let c2 = 4.0 / 3.0;
                Ok(vec![
                    Element::rect(x0, c1, y0, y1, a, b)?,
                    Element::rect(c1, c2, y0, y1, a, b)?,
                    Element::rect(c2, x1, y0, y1, a, b)?,
                ])
            }
            Case::D => {
                let (a, b) = (n(2, s1), n(2, s2));
                Ok(vec![
                    Element::rect(x0, 1.0, y0, 1.0, a, b)?,
                    Element::rect(1.0, x1, y0, 1.0, a, b)?,
                    Element::rect(x0, 1.0, 1.0, y1, a, b)?,
                    Element::rect(1.0, x1, 1.0, y1, a, b)?,
                ])
            }
            Case::E => Ok(vec![Element::wedge(ri, ro, t0, t1, o, n(1, s1), n(1, s2))?]),
            Case::F => {
                let (a, b) = (n(2, s1), n(1, s2));
                Ok(vec![
                    Element::wedge(ri, 1.5, t0, t1, o, a, b)?,
                    Element::wedge(1.5, ro, t0, t1, o, a, b)?,
                ])
            }
            Case::G => {
                let (a, b) = (n(1, s1), n(2, s2));
                Ok(vec![
                    Element::wedge(ri, ro, t0, PI / 4.0, o, a, b)?,
                    Element::wedge(ri, ro, PI / 4.0, t1, o, a, b)?,
                ])
            }
            Case::H => {
                let (a, b) = (n(1, s1), n(3, s2));
                Ok(vec![
                    Element::wedge(ri, ro, t0, PI / 8.0, o, a, b)?,
                    Element::wedge(ri, ro, PI / 8.0, PI / 4.0, o, a, b)?,
                    Element::wedge(ri, ro, PI / 4.0, t1, o, a, b)?,
                ])
            }
            Case::QuadWedge => {
                let (a, b) = (n(2, s1), n(2, s2));
                quad_wedge(a, b)
            }
        }
    }
}

/// Quadrilateral `[0,3]²` and the wedge `r ∈ [1,4]`, `θ ∈ [0,π]` about
/// `(4,3)`; the quad's upper face meets the wedge's `θ = π` face.
pub fn quad_wedge(n1: usize, n2: usize) -> Result<Vec<Element>> {
    Ok(vec![
        Element::rect(0.0, 3.0, 0.0, 3.0, n1, n2)?,
        Element::wedge(1.0, 4.0, 0.0, PI, [4.0, 3.0], n1, n2)?,
    ])
}

/// Geometry plus species parameters, potentials and initial profiles.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub elements: Vec<Element>,
    pub params: SpeciesParams,
    pub v_ext: Vec<Profile>,
    pub f_ic: Vec<Profile>,
}

impl Experiment {
    pub fn multishape(&self) -> Result<MultiShape> {
        build_multishape(self.elements.clone(), &[])
    }

    pub fn sample_v_ext(&self, ms: &MultiShape) -> Vec<DVector<f64>> {
        self.v_ext.iter().map(|v| ms.sample(|p| v.eval(p))).collect()
    }

    /// Closed-form potential gradients in local components.
    pub fn sample_grad_v_ext(&self, ms: &MultiShape) -> Vec<DVector<f64>> {
        self.v_ext.iter().map(|v| ms.sample_vector(|p| v.grad(p))).collect()
    }

    /// Dynamics with sampled potentials (gradients by spectral
    /// differentiation).
    pub fn ddft<'a>(&self, ms: &'a MultiShape) -> Result<Ddft<'a>> {
        Ddft::new(ms, self.params.clone(), self.sample_v_ext(ms))
    }

    pub fn sample_f_ic(&self, ms: &MultiShape) -> Vec<DVector<f64>> {
        self.f_ic.iter().map(|f| ms.sample(|p| f.eval(p))).collect()
    }
}

fn two_species(kappa: [[f64; 2]; 2], sigma: [[f64; 2]; 2], c_mass: f64) -> SpeciesParams {
    SpeciesParams {
        kappa: kappa.iter().map(|r| r.to_vec()).collect(),
        sigma: sigma.iter().map(|r| r.to_vec()).collect(),
        c_mass: vec![c_mass; 2],
    }
}

/// Two stacked boxes `[0,0.8]×[0,0.8]`, `[0,0.8]×[0.8,1.6]` and a quarter
/// annulus about `(1.2,1.6)` on top; two species under gravity.
pub fn equilibrium_experiment(n: usize) -> Result<Experiment> {
    let elements = vec![
        Element::rect(0.0, 0.8, 0.0, 0.8, n, n)?,
        Element::rect(0.0, 0.8, 0.8, 1.6, n, n)?,
        Element::wedge(0.4, 1.2, PI / 2.0, PI, [1.2, 1.6], n, n)?,
    ];
    let gravity = Profile::Linear { c0: 0.0, c1: 0.0, c2: 0.1 };
    Ok(Experiment {
        elements,
        params: two_species([[-7.0, 2.0], [2.0, -3.0]], [[0.1, 0.55], [0.55, 1.0]], 1.0),
        v_ext: vec![gravity.clone(), gravity],
        f_ic: vec![
            Profile::Gaussian { amp: 1.0, a1: 0.5, a2: 0.5, center: [1.0, 3.3] },
            Profile::Gaussian { amp: 1.0, a1: 0.3, a2: 0.3, center: [1.8, 2.0] },
        ],
    })
}

/// Funnel: a trapezoid narrowing to width 2, a bend of 45° and a straight
/// channel.
pub fn funnel_elements(n: usize) -> Result<Vec<Element>> {
    let (a, b, v) = funnel_channel_points();
    Ok(vec![
        Element::quad([[0.0, 4.0], [-3.0, 8.0], [5.0, 8.0], [2.0, 4.0]], n, n)?,
        Element::wedge(2.0, 4.0, -PI / 4.0, 0.0, [-2.0, 4.0], n, n)?,
        Element::quad([[a[0] + v[0], a[1] + v[1]], a, b, [b[0] + v[0], b[1] + v[1]]], n, n)?,
    ])
}

fn funnel_channel_points() -> ([f64; 2], [f64; 2], [f64; 2]) {
    let a = [-2.0 + SQRT_2, 4.0 - SQRT_2];
    let b = [-2.0 + 2.0 * SQRT_2, 4.0 - 2.0 * SQRT_2];
    let v = [-3.0 * FRAC_1_SQRT_2, -3.0 * FRAC_1_SQRT_2];
    (a, b, v)
}

/// Left and right funnel walls.
pub fn funnel_walls() -> (Vec<WallSegment>, Vec<WallSegment>) {
    let (a, b, v) = funnel_channel_points();
    let left = vec![
        WallSegment::Line { a: [-3.0, 8.0], b: [0.0, 4.0] },
        WallSegment::Arc { center: [-2.0, 4.0], r: 2.0, th1: -PI / 4.0, th2: 0.0 },
        WallSegment::Line { a, b: [a[0] + v[0], a[1] + v[1]] },
    ];
    let right = vec![
        WallSegment::Line { a: [5.0, 8.0], b: [2.0, 4.0] },
        WallSegment::Arc { center: [-2.0, 4.0], r: 4.0, th1: -PI / 4.0, th2: 0.0 },
        WallSegment::Line { a: b, b: [b[0] + v[0], b[1] + v[1]] },
    ];
    (left, right)
}

/// Two species of different size sedimenting through the funnel.
pub fn funnel_experiment(n: usize) -> Result<Experiment> {
    let (left, right) = funnel_walls();
    let v = |alpha: f64| Profile::Sum {
        terms: vec![
            Profile::Linear { c0: 0.0, c1: 0.0, c2: 0.15 },
            Profile::WallRepulsion { eps: 0.6, alpha, left: left.clone(), right: right.clone() },
        ],
    };
    let f = Profile::Linear { c0: 5.0, c1: 1.0, c2: 0.0 };
    Ok(Experiment {
        elements: funnel_elements(n)?,
        params: two_species([[0.1, 0.1], [0.1, 0.1]], [[0.5, 1.25], [1.25, 2.0]], 20.0),
        v_ext: vec![v(0.5), v(2.0)],
        f_ic: vec![f.clone(), f],
    })
}

/// U-shaped channel: two boxes, a half annulus about `(2,3)` and a box
/// underneath.
pub fn channel_elements(n: usize) -> Result<Vec<Element>> {
    Ok(vec![
        Element::rect(-2.0, 0.0, 4.0, 6.0, n, n)?,
        Element::rect(0.0, 2.0, 4.0, 6.0, n, n)?,
        Element::wedge(1.0, 3.0, -PI / 2.0, PI / 2.0, [2.0, 3.0], n, n)?,
        Element::rect(0.0, 2.0, 0.0, 2.0, n, n)?,
    ])
}

/// Two interacting species in the channel with asymmetric cross
/// interactions.
pub fn channel_experiment(n: usize) -> Result<Experiment> {
    let f = Profile::Gaussian { amp: 1.0, a1: 0.15, a2: 0.15, center: [-0.5, 5.0] };
    Ok(Experiment {
        elements: channel_elements(n)?,
        params: two_species([[-0.8, 0.6], [0.2, -0.3]], [[0.5, 0.75], [0.75, 1.0]], 1.0),
        v_ext: vec![
            Profile::Sum {
                terms: vec![
                    Profile::Gaussian { amp: 0.05, a1: 0.1, a2: 0.1, center: [2.0, 1.0] },
                    Profile::Linear { c0: 0.0, c1: 0.0, c2: -0.05 },
                ],
            },
            Profile::Sum {
                terms: vec![
                    Profile::Gaussian { amp: 0.1, a1: 0.3, a2: 0.3, center: [3.0, 4.0] },
                    Profile::Linear { c0: 0.0, c1: 0.0, c2: 0.2 },
                ],
            },
        ],
        f_ic: vec![f.clone(), f],
    })
}

/// Background flow of the given strength along the channel, in local
/// components: `+x1` in the upper boxes, clockwise around the bend, `−x1`
/// in the lower box.
pub fn channel_flow(ms: &MultiShape, strength: f64) -> DVector<f64> {
    let m = ms.m();
    let mut w = DVector::zeros(2 * m);
    for k in 0..m {
        let e = ms.elem_of[k];
        match ms.elements[e].coord_system() {
            CoordSystem::Polar => w[m + k] = -strength,
            CoordSystem::Cartesian => {
                w[k] = if ms.pts_cart[k][1] >= 3.0 { strength } else { -strength };
            }
        }
    }
    w
}

/// `max(2, round(total / k))`.
pub fn split(total: f64, k: usize) -> usize {
    ((total / k as f64).round() as usize).max(2)
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_CASES
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown validation case '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::build_multishape;

    #[test]
    fn every_case_assembles_with_expected_intersections() {
        let expected = [0, 1, 2, 4, 0, 1, 1, 2, 1];
        for (c, want) in ALL_CASES.iter().zip(expected) {
            let ms = build_multishape(c.elements(12).unwrap(), &[]).unwrap();
            assert_eq!(ms.ind.intersections.len(), want, "case {c}");
        }
    }

    #[test]
    fn budget_split() {
        let e = Case::C.elements(30).unwrap();
        assert!(e.iter().all(|e| e.n1 == 10 && e.n2 == 30));
        let e = Case::D.elements(30).unwrap();
        assert!(e.iter().all(|e| e.n1 == 15 && e.n2 == 15));
        let e = Case::H.elements(6).unwrap();
        assert!(e.iter().all(|e| e.n1 == 6 && e.n2 == 2));
        let e = Case::QuadWedge.elements_scaled(40, 0.5, 1.0).unwrap();
        assert!(e.iter().all(|e| e.n1 == 10 && e.n2 == 20));
    }

    #[test]
    fn experiments_assemble() {
        let ms = equilibrium_experiment(8).unwrap().multishape().unwrap();
        assert_eq!(ms.ind.intersections.len(), 2);
        let ms = funnel_experiment(8).unwrap().multishape().unwrap();
        assert_eq!(ms.ind.intersections.len(), 2);
        let area: f64 = 0.5 * (8.0 + 2.0) * 4.0 + PI / 8.0 * 12.0 + 6.0;
        assert!((ms.ops.integrate(&DVector::from_element(ms.m(), 1.0)) - area).abs() < 1e-10);
        let ms = channel_experiment(8).unwrap().multishape().unwrap();
        assert_eq!(ms.ind.intersections.len(), 3);
    }

    #[test]
    fn funnel_walls_touch_boundary() {
        let ms = funnel_experiment(10).unwrap().multishape().unwrap();
        let (l, r) = funnel_walls();
        for &k in &ms.ind.bound {
            let p = ms.pts_cart[k];
            let d = crate::profiles::wall_distance(&l, p).min(crate::profiles::wall_distance(&r, p));
            // every boundary node is on a wall, except the open top and bottom
            if p[1] < 7.999 && d > 1e-9 {
                let (a, b, v) = funnel_channel_points();
                let bottom = WallSegment::Line { a: [a[0] + v[0], a[1] + v[1]], b: [b[0] + v[0], b[1] + v[1]] };
                assert!(bottom.distance(p) < 1e-9, "{p:?}");
            }
        }
    }

    #[test]
    fn channel_flow_is_continuous() {
        let ms = channel_experiment(6).unwrap().multishape().unwrap();
        let w = ms.to_cartesian_components(&channel_flow(&ms, 0.1));
        let m = ms.m();
        for row in &ms.match_rows {
            if let crate::assembly::MatchRow::Continuity { node, other } = row {
                assert!((w[*node] - w[*other]).abs() < 1e-12);
                assert!((w[m + node] - w[m + other]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parse_names() {
        for c in ALL_CASES {
            assert_eq!(c.name().parse::<Case>().unwrap(), c);
        }
        assert!("z".parse::<Case>().is_err());
    }
}
