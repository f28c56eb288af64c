//! Closed-form scalar profiles used as external potentials and initial
//! conditions.

use crate::geometry::{dist, Point};

/// Piece of a wall polyline.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum WallSegment {
    Line { a: Point, b: Point },
    /// Arc of radius `r` about `center` for angles in `[th1, th2]`.
    Arc { center: Point, r: f64, th1: f64, th2: f64 },
}

impl WallSegment {
    /// Closest point of the segment to `p`.
    pub fn nearest(&self, p: Point) -> Point {
        match *self {
            WallSegment::Line { a, b } => {
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                if len2 == 0.0 {
                    return a;
                }
                let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
                [a[0] + t * d[0], a[1] + t * d[1]]
            }
            WallSegment::Arc { center, r, th1, th2 } => {
                let v = [p[0] - center[0], p[1] - center[1]];
                let rho = v[0].hypot(v[1]);
                let mid = 0.5 * (th1 + th2);
                let tau = std::f64::consts::TAU;
                // angle on the branch centred at the arc midpoint
                let th = mid + (v[1].atan2(v[0]) - mid + std::f64::consts::PI).rem_euclid(tau)
                    - std::f64::consts::PI;
                if rho > 0.0 && th >= th1 && th <= th2 {
                    [center[0] + r * v[0] / rho, center[1] + r * v[1] / rho]
                } else {
                    let e1 = [center[0] + r * th1.cos(), center[1] + r * th1.sin()];
                    let e2 = [center[0] + r * th2.cos(), center[1] + r * th2.sin()];
                    if dist(p, e1) <= dist(p, e2) {
                        e1
                    } else {
                        e2
                    }
                }
            }
        }
    }

    /// Euclidean distance from `p` to the segment.
    pub fn distance(&self, p: Point) -> f64 {
        dist(p, self.nearest(p))
    }
}

/// Shortest distance from `p` to a wall made of several segments.
pub fn wall_distance(wall: &[WallSegment], p: Point) -> f64 {
    wall.iter().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min)
}

/// Closest point on a multi-segment wall.
pub fn wall_nearest(wall: &[WallSegment], p: Point) -> Option<Point> {
    wall.iter()
        .map(|s| s.nearest(p))
        .min_by(|a, b| dist(p, *a).total_cmp(&dist(p, *b)))
}

/// Scalar function of Cartesian position.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Profile {
    Constant { value: f64 },
    /// `c0 + c1 x1 + c2 x2`.
    Linear {
        #[cfg_attr(feature = "serde", serde(default))]
        c0: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        c1: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        c2: f64,
    },
    /// `amp · exp(−a1 (x1 − center1)² − a2 (x2 − center2)²)`.
    Gaussian { amp: f64, a1: f64, a2: f64, center: Point },
    /// `eps (exp(−(d_L/α)²) + exp(−(d_R/α)²))` with `d_L`, `d_R` the
    /// distances to two walls.
    WallRepulsion {
        eps: f64,
        alpha: f64,
        left: Vec<WallSegment>,
        right: Vec<WallSegment>,
    },
    Sum { terms: Vec<Profile> },
}

impl Profile {
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Linear { c0, c1, c2 } => c0 + c1 * p[0] + c2 * p[1],
            Profile::Gaussian { amp, a1, a2, center } => {
                amp * (-a1 * (p[0] - center[0]).powi(2) - a2 * (p[1] - center[1]).powi(2)).exp()
            }
            Profile::WallRepulsion { eps, alpha, left, right } => {
                let dl = wall_distance(left, p) / alpha;
                let dr = wall_distance(right, p) / alpha;
                eps * ((-dl * dl).exp() + (-dr * dr).exp())
            }
            Profile::Sum { terms } => terms.iter().map(|t| t.eval(p)).sum(),
        }
    }

    /// Cartesian gradient. The wall term uses the direction to the closest
    /// wall point, which is the exact gradient away from the wall's medial
    /// axis.
    pub fn grad(&self, p: Point) -> Point {
        match self {
            Profile::Constant { .. } => [0.0, 0.0],
            Profile::Linear { c1, c2, .. } => [*c1, *c2],
            Profile::Gaussian { a1, a2, center, .. } => {
                let v = self.eval(p);
                [-2.0 * a1 * (p[0] - center[0]) * v, -2.0 * a2 * (p[1] - center[1]) * v]
            }
            Profile::WallRepulsion { eps, alpha, left, right } => {
                let mut g = [0.0, 0.0];
                for wall in [left, right] {
                    let Some(q) = wall_nearest(wall, p) else { continue };
                    let d = dist(p, q);
                    // d/dd of exp(−(d/α)²) is −2d/α² e, and grad d = (p − q)/d
                    let f = -2.0 / (alpha * alpha) * (-(d / alpha).powi(2)).exp();
                    g[0] += eps * f * (p[0] - q[0]);
                    g[1] += eps * f * (p[1] - q[1]);
                }
                g
            }
            Profile::Sum { terms } => terms.iter().fold([0.0, 0.0], |acc, t| {
                let g = t.grad(p);
                [acc[0] + g[0], acc[1] + g[1]]
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn line_distance() {
        let s = WallSegment::Line { a: [0.0, 0.0], b: [2.0, 0.0] };
        assert_abs_diff_eq!(s.distance([1.0, 3.0]), 3.0);
        assert_abs_diff_eq!(s.distance([-3.0, 4.0]), 5.0);
        assert_abs_diff_eq!(s.distance([2.5, 0.0]), 0.5);
    }

    #[test]
    fn arc_distance() {
        let s = WallSegment::Arc { center: [0.0, 0.0], r: 2.0, th1: -PI / 4.0, th2: 0.0 };
        assert_abs_diff_eq!(s.distance([3.0, 0.0]), 1.0, epsilon = 1e-15);
        let q = [(-PI / 8.0).cos(), (-PI / 8.0).sin()];
        assert_abs_diff_eq!(s.distance(q), 1.0, epsilon = 1e-15);
        // outside the angular range: nearest endpoint
        assert_abs_diff_eq!(s.distance([0.0, 2.0]), 8.0f64.sqrt(), epsilon = 1e-15);
        // arc crossing ±π
        let s = WallSegment::Arc { center: [0.0, 0.0], r: 1.0, th1: 3.0, th2: 3.5 };
        assert_abs_diff_eq!(s.distance([-2.0, 0.0]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn profile_eval() {
        let p = Profile::Sum {
            terms: vec![
                Profile::Linear { c0: 5.0, c1: 1.0, c2: 0.0 },
                Profile::Gaussian { amp: 2.0, a1: 1.0, a2: 1.0, center: [1.0, 1.0] },
                Profile::Constant { value: -1.0 },
            ],
        };
        assert_abs_diff_eq!(p.eval([1.0, 1.0]), 7.0);
        let w = Profile::WallRepulsion {
            eps: 0.6,
            alpha: 0.5,
            left: vec![WallSegment::Line { a: [0.0, 0.0], b: [0.0, 1.0] }],
            right: vec![WallSegment::Line { a: [1.0, 0.0], b: [1.0, 1.0] }],
        };
        assert_abs_diff_eq!(w.eval([0.0, 0.5]), 0.6 * (1.0 + (-4.0f64).exp()), epsilon = 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = Profile::Sum {
            terms: vec![
                Profile::Linear { c0: 1.0, c1: 0.3, c2: -0.2 },
                Profile::Gaussian { amp: 0.7, a1: 0.4, a2: 1.1, center: [0.2, -0.3] },
                Profile::WallRepulsion {
                    eps: 0.6,
                    alpha: 0.8,
                    left: vec![WallSegment::Line { a: [-1.0, -2.0], b: [-1.0, 2.0] }],
                    right: vec![WallSegment::Arc { center: [0.0, 0.0], r: 2.0, th1: -1.0, th2: 1.0 }],
                },
            ],
        };
        let h = 1e-6;
        for q in [[0.1, 0.2], [0.5, -0.7], [-0.4, 0.9]] {
            let g = p.grad(q);
            let fd1 = (p.eval([q[0] + h, q[1]]) - p.eval([q[0] - h, q[1]])) / (2.0 * h);
            let fd2 = (p.eval([q[0], q[1] + h]) - p.eval([q[0], q[1] - h])) / (2.0 * h);
            assert_abs_diff_eq!(g[0], fd1, epsilon = 1e-8);
            assert_abs_diff_eq!(g[1], fd2, epsilon = 1e-8);
        }
    }
}
