//! Built-in analytic test functions with hand-derived derivatives and
//! reference integrals.

use crate::geometry::Point;

/// `g1 = exp(−(x1 x2 − 1)²/20) sin(x1 x2 / 4)`.
pub fn g1(p: Point) -> f64 {
    let s = p[0] * p[1];
    (-(s - 1.0).powi(2) / 20.0).exp() * (s / 4.0).sin()
}

/// `dg1/ds` and `d²g1/ds²` with `s = x1 x2`.
fn g1_s(s: f64) -> (f64, f64) {
    let e = (-(s - 1.0).powi(2) / 20.0).exp();
    let (sn, cs) = (s / 4.0).sin_cos();
    let u = -(s - 1.0) / 10.0 * sn + cs / 4.0;
    let du = -sn / 10.0 - (s - 1.0) / 40.0 * cs - sn / 16.0;
    (e * u, e * (-(s - 1.0) / 10.0 * u + du))
}

pub fn g1_grad(p: Point) -> Point {
    let (h, _) = g1_s(p[0] * p[1]);
    [h * p[1], h * p[0]]
}

pub fn g1_lap(p: Point) -> f64 {
    let (_, dh) = g1_s(p[0] * p[1]);
    dh * (p[0] * p[0] + p[1] * p[1])
}

/// `g2 = exp(−x1² − x2²)`.
pub fn g2(p: Point) -> f64 {
    (-p[0] * p[0] - p[1] * p[1]).exp()
}

/// `∫_a^b exp(−x²) dx`.
pub fn gauss_1d(a: f64, b: f64) -> f64 {
    0.5 * std::f64::consts::PI.sqrt() * (libm::erf(b) - libm::erf(a))
}

/// Convolution kernel for Cartesian validation, `exp((d1² − d2²)/10)`.
pub fn chi_c(d1: f64, d2: f64) -> f64 {
    ((d1 * d1 - d2 * d2) / 10.0).exp()
}

pub fn n_c(p: Point) -> f64 {
    p[0] * p[0] + p[0] * p[1]
}

/// Convolution kernel for polar validation, `exp(d1 + d2)`.
pub fn chi_p(d1: f64, d2: f64) -> f64 {
    (d1 + d2).exp()
}

pub fn n_p(p: Point) -> f64 {
    (-p[0] * p[0] - p[1] * p[1] + p[0] + p[1]).exp()
}

/// Exact `∫ chi_p(y − z) n_p(z) dz` over the wedge `r ∈ [r_in, r_out]`,
/// `θ ∈ [th1, th2]` centred at the origin.
pub fn conv_p_wedge_exact(y: Point, r_in: f64, r_out: f64, th1: f64, th2: f64) -> f64 {
    (y[0] + y[1]).exp() * 0.5 * (th2 - th1) * ((-r_in * r_in).exp() - (-r_out * r_out).exp())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    (
        x.iter().map(|t| a + h * (t + 1.0)).collect(),
        w.iter().map(|v| v * h).collect(),
    )
}

/// Reference `∫ chi_c(y − z) n_c(z) dz` over the box `[a1,b1]×[a2,b2]`,
/// from separable one-dimensional Gauss–Legendre integrals.
pub fn conv_c_box_reference(y: Point, a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    let (x1, w1) = gauss_legendre_on(200, a1, b1);
    let (x2, w2) = gauss_legendre_on(200, a2, b2);
    let mut i1 = [0.0; 3];
    for (z, w) in x1.iter().zip(&w1) {
        let k = ((y[0] - z).powi(2) / 10.0).exp() * w;
        i1[0] += k;
        i1[1] += k * z;
        i1[2] += k * z * z;
    }
    let mut i2 = [0.0; 2];
    for (z, w) in x2.iter().zip(&w2) {
        let k = (-(y[1] - z).powi(2) / 10.0).exp() * w;
        i2[0] += k;
        i2[1] += k * z;
    }
    i1[2] * i2[0] + i1[1] * i2[1]
}

/// Poisson right-hand side with exact solution [`poisson_u`].
pub fn poisson_f(p: Point) -> f64 {
    ((p[0] * p[0] - p[0] - 0.75) + (p[1] * p[1] - p[1] - 0.75)) * poisson_u(p)
}

pub fn poisson_u(p: Point) -> f64 {
    (-0.5 * (p[0] - 0.5).powi(2) - 0.5 * (p[1] - 0.5).powi(2)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts() -> Vec<Point> {
        // deterministic scatter
        (0..20)
            .map(|k| {
                let t = k as f64;
                [2.0 * ((0.37 * t).sin() + 1.0) * 0.5 + 0.1, 2.0 * ((1.3 * t + 0.2).cos() + 1.0) * 0.5]
            })
            .collect()
    }

    #[test]
    fn g1_derivatives_match_finite_differences() {
        let h = 1e-5;
        for p in pts() {
            let g = g1_grad(p);
            let fx = (g1([p[0] + h, p[1]]) - g1([p[0] - h, p[1]])) / (2.0 * h);
            let fy = (g1([p[0], p[1] + h]) - g1([p[0], p[1] - h])) / (2.0 * h);
            assert_abs_diff_eq!(g[0], fx, epsilon = 1e-9);
            assert_abs_diff_eq!(g[1], fy, epsilon = 1e-9);
            let h2 = 1e-4;
            let lap = (g1([p[0] + h2, p[1]]) + g1([p[0] - h2, p[1]]) + g1([p[0], p[1] + h2])
                + g1([p[0], p[1] - h2])
                - 4.0 * g1(p))
                / (h2 * h2);
            assert_abs_diff_eq!(g1_lap(p), lap, epsilon = 1e-6);
        }
    }

    #[test]
    fn poisson_rhs_is_laplacian_of_u() {
        let h = 1e-4;
        for p in pts() {
            let lap = (poisson_u([p[0] + h, p[1]]) + poisson_u([p[0] - h, p[1]])
                + poisson_u([p[0], p[1] + h])
                + poisson_u([p[0], p[1] - h])
                - 4.0 * poisson_u(p))
                / (h * h);
            assert_abs_diff_eq!(poisson_f(p), lap, epsilon = 1e-6);
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(7);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert_abs_diff_eq!(q, 2.0 / 13.0, epsilon = 1e-14);
        let (x, w) = gauss_legendre_on(30, 0.0, 2.0);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * (-x * x).exp()).sum();
        assert_abs_diff_eq!(q, gauss_1d(0.0, 2.0), epsilon = 1e-14);
    }
}
