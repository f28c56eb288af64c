//! Optimal control of the advecting field `w` in the DDFT dynamics:
//! cost functional, forward and adjoint solves, gradient equation and a
//! relaxed forward–backward sweep.
//!
//! Fields on the time grid are stored one per time node, ascending in `t`.
//! States are stacked over species (length `n_s M`), controls and gradients
//! are stacked vector fields in local components (length `2M`).

use nalgebra::{DMatrix, DVector};

use crate::assembly::{MatchRow, MultiShape};
use crate::convolution::convolution_matrix;
use crate::dae::{consistent_init, integrate, DaeSystem, StepperConfig};
use crate::ddft::{gaussian_kernel_grad, Ddft, DdftSystem};
use crate::error::{Error, Result};
use crate::spectral::{cheb_lobatto_nodes, clenshaw_curtis_weights, interp_row_1d, NodeSet1D};

/// Chebyshev–Lobatto nodes on `[0, T]` with Clenshaw–Curtis weights.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    pub t_final: f64,
    /// Ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    reference: NodeSet1D,
}

impl TimeGrid {
    pub fn new(n: usize, t_final: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 time nodes, got {n}")));
        }
        if !(t_final > 0.0) {
            return Err(Error::InvalidArgument(format!("final time must be positive, got {t_final}")));
        }
        let reference = cheb_lobatto_nodes(n)?;
        let w = clenshaw_curtis_weights(&reference);
        // reference nodes are descending; reverse to get ascending times
        let nodes = reference.nodes().iter().rev().map(|x| 0.5 * t_final * (x + 1.0)).collect();
        let weights = w.iter().rev().map(|v| 0.5 * t_final * v).collect();
        Ok(TimeGrid {
            t_final,
            nodes,
            weights,
            reference,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Barycentric interpolation weights at time `t`, in node order.
    pub fn interp_row(&self, t: f64) -> Vec<f64> {
        let mut row = interp_row_1d(&self.reference, 2.0 * t / self.t_final - 1.0);
        row.reverse();
        row
    }

    pub fn interpolate(&self, values: &[DVector<f64>], t: f64) -> DVector<f64> {
        let row = self.interp_row(t);
        let mut out = DVector::zeros(values[0].len());
        for (c, v) in row.iter().zip(values) {
            if *c != 0.0 {
                out.axpy(*c, v, 1.0);
            }
        }
        out
    }

    /// `Σ_i W_i f_i`.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * f(i)).sum()
    }
}

/// Squared `L²` norm of a scalar or stacked vector field.
fn sq_norm(ms: &MultiShape, v: &DVector<f64>) -> f64 {
    let m = ms.m();
    let mut s = DVector::zeros(m);
    for (i, x) in v.iter().enumerate() {
        s[i % m] += x * x;
    }
    ms.ops.integrate(&s)
}

/// `½ Σ_a ∫∫ (ρ_a − ρ̂_a)² + β/2 ∫∫ |w|²`, space by `Int`, time by
/// Clenshaw–Curtis.
pub fn cost(
    ms: &MultiShape,
    grid: &TimeGrid,
    rhos: &[DVector<f64>],
    targets: &[DVector<f64>],
    w: &[DVector<f64>],
    beta: f64,
) -> f64 {
    let misfit = grid.integrate(|i| sq_norm(ms, &(&rhos[i] - &targets[i])));
    let control = grid.integrate(|i| sq_norm(ms, &w[i]));
    0.5 * misfit + 0.5 * beta * control
}

/// `w = −(1/β) Σ_a ρ_a grad q_a` at every time node.
pub fn gradient_equation(
    ms: &MultiShape,
    rhos: &[DVector<f64>],
    qs: &[DVector<f64>],
    beta: f64,
) -> Vec<DVector<f64>> {
    rhos.iter()
        .zip(qs)
        .map(|(rho, q)| reduced_sensitivity(ms, rho, q) * (-1.0 / beta))
        .collect()
}

/// `Σ_a ρ_a grad q_a`.
fn reduced_sensitivity(ms: &MultiShape, rho: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
    let m = ms.m();
    let mut out = DVector::zeros(2 * m);
    for a in 0..rho.len() / m {
        let r = rho.rows(a * m, m);
        let g = ms.ops.grad(&q.rows(a * m, m).into_owned());
        for k in 0..m {
            out[k] += r[k] * g[k];
            out[m + k] += r[k] * g[m + k];
        }
    }
    out
}

/// Outer sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Initial relaxation factor `γ`.
    pub gamma: f64,
    pub max_iters: usize,
    /// Relative tolerance on the changes of `J` and `w`.
    pub tol: f64,
    /// Absolute floor for the gradient-equation residual check.
    pub atol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gamma: 0.3,
            max_iters: 50,
            tol: 1e-6,
            atol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpConfig {
    pub beta: f64,
    pub t_final: f64,
    pub time_nodes: usize,
    pub sweep: SweepConfig,
}

impl OcpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.time_nodes < 3 {
            return Err(Error::Config(format!("need at least 3 time nodes, got {}", self.time_nodes)));
        }
        let s = &self.sweep;
        if !(s.gamma > 0.0 && s.gamma <= 1.0) {
            return Err(Error::Config(format!("relaxation factor must be in (0, 1], got {}", s.gamma)));
        }
        if !(s.tol > 0.0) || s.max_iters == 0 {
            return Err(Error::Config("sweep needs a positive tolerance and at least one iteration".into()));
        }
        Ok(())
    }
}

/// One outer iteration of [`OcpProblem::solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub iter: usize,
    /// Cost of the current accepted iterate.
    pub j: f64,
    /// `‖βw + Σ ρ grad q‖ / (‖βw‖ + atol)` at the current accepted iterate.
    pub grad_residual: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub rho: Vec<DVector<f64>>,
    pub q: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub j_value: f64,
    /// Cost with `w = 0`.
    pub j_uncontrolled: f64,
    pub history: Vec<SweepRecord>,
    pub converged: bool,
    /// `J ≤ J_uc` (up to the sweep's absolute tolerance).
    pub improved: bool,
}

/// Optimal control problem on a fixed discretization.
pub struct OcpProblem<'a, 'b> {
    pub ddft: &'b Ddft<'a>,
    pub grid: TimeGrid,
    pub beta: f64,
    pub sweep: SweepConfig,
    /// Consistent initial state (for `w = 0`).
    pub y0: DVector<f64>,
    pub targets: Vec<DVector<f64>>,
    /// Tolerances for the forward and adjoint integrations; output times
    /// are set internally.
    pub stepper: StepperConfig,
    /// `[Conv_x, Conv_y]` of `grad V_ab`, indexed `[a][b]`.
    kernel_grad: Vec<Vec<Option<[DMatrix<f64>; 2]>>>,
}

impl<'a, 'b> OcpProblem<'a, 'b> {
    pub fn new(
        ddft: &'b Ddft<'a>,
        config: &OcpConfig,
        y0: DVector<f64>,
        targets: Vec<DVector<f64>>,
        stepper: StepperConfig,
    ) -> Result<Self> {
        config.validate()?;
        let grid = TimeGrid::new(config.time_nodes, config.t_final)?;
        let dim = ddft.n_species() * ddft.m();
        if y0.len() != dim {
            return Err(Error::InvalidArgument(format!("initial state length {} != {dim}", y0.len())));
        }
        if targets.len() != grid.len() || targets.iter().any(|t| t.len() != dim) {
            return Err(Error::InvalidArgument(format!(
                "expected {} targets of length {dim}",
                grid.len()
            )));
        }
        let p = &ddft.params;
        let n = p.n_species();
        let mut kernel_grad = Vec::with_capacity(n);
        for a in 0..n {
            let mut row = Vec::with_capacity(n);
            for b in 0..n {
                if p.kappa[a][b] == 0.0 {
                    row.push(None);
                } else {
                    let (kx, ky) = gaussian_kernel_grad(p.kappa[a][b], p.sigma[a][b]);
                    row.push(Some([convolution_matrix(ddft.ms, &kx)?, convolution_matrix(ddft.ms, &ky)?]));
                }
            }
            kernel_grad.push(row);
        }
        Ok(OcpProblem {
            ddft,
            grid,
            beta: config.beta,
            sweep: config.sweep.clone(),
            y0,
            targets,
            stepper,
            kernel_grad,
        })
    }

    fn ms(&self) -> &'a MultiShape {
        self.ddft.ms
    }

    pub fn zero_control(&self) -> Vec<DVector<f64>> {
        vec![DVector::zeros(2 * self.ddft.m()); self.grid.len()]
    }

    fn check_control(&self, w: &[DVector<f64>]) -> Result<()> {
        if w.len() != self.grid.len() || w.iter().any(|v| v.len() != 2 * self.ddft.m()) {
            return Err(Error::InvalidArgument(format!(
                "control must have {} fields of length {}",
                self.grid.len(),
                2 * self.ddft.m()
            )));
        }
        Ok(())
    }

    pub fn cost(&self, rhos: &[DVector<f64>], w: &[DVector<f64>]) -> f64 {
        cost(self.ms(), &self.grid, rhos, &self.targets, w, self.beta)
    }

    /// Forward solve with the control interpolated in time; states at the
    /// time nodes.
    pub fn state_solve(&self, w: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        self.check_control(w)?;
        let control = |t: f64| self.grid.interpolate(w, t);
        let sys = DdftSystem::new(self.ddft, Some(&control));
        let y0 = consistent_init(&sys, 0.0, &self.y0, self.stepper.atol)?;
        let cfg = StepperConfig {
            output_times: self.grid.nodes.clone(),
            ..self.stepper.clone()
        };
        let traj = integrate(&sys, &y0, (0.0, self.grid.t_final), &cfg)?;
        Ok(traj.states)
    }

    /// Backward adjoint solve from `q(T) = 0`; adjoints at the time nodes.
    pub fn adjoint_solve(&self, rhos: &[DVector<f64>], w: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        self.check_control(w)?;
        if rhos.len() != self.grid.len() {
            return Err(Error::InvalidArgument("one state per time node required".into()));
        }
        let sys = AdjointSystem {
            problem: self,
            rhos,
            w,
        };
        let t_final = self.grid.t_final;
        // s = T − t runs forward; node order reverses
        let out: Vec<f64> = self.grid.nodes.iter().rev().map(|t| t_final - t).collect();
        let cfg = StepperConfig {
            output_times: out,
            ..self.stepper.clone()
        };
        let q0 = DVector::zeros(sys.dim());
        let traj = integrate(&sys, &q0, (0.0, t_final), &cfg)?;
        let mut qs = traj.states;
        qs.reverse();
        let last = qs.len() - 1;
        qs[last].fill(0.0);
        Ok(qs)
    }

    /// `βw + Σ_a ρ_a grad q_a` at every time node: the `L²` gradient of the
    /// reduced cost.
    pub fn reduced_gradient(
        &self,
        rhos: &[DVector<f64>],
        qs: &[DVector<f64>],
        w: &[DVector<f64>],
    ) -> Vec<DVector<f64>> {
        (0..self.grid.len())
            .map(|i| &w[i] * self.beta + reduced_sensitivity(self.ms(), &rhos[i], &qs[i]))
            .collect()
    }

    /// Directional derivative of the reduced cost at `w` along `dw` from the
    /// adjoint representation.
    pub fn directional_derivative(&self, w: &[DVector<f64>], dw: &[DVector<f64>]) -> Result<f64> {
        self.check_control(dw)?;
        let rhos = self.state_solve(w)?;
        let qs = self.adjoint_solve(&rhos, w)?;
        let g = self.reduced_gradient(&rhos, &qs, w);
        Ok(self.inner(&g, dw))
    }

    /// Space–time inner product of two control trajectories.
    pub fn inner(&self, u: &[DVector<f64>], v: &[DVector<f64>]) -> f64 {
        let ms = self.ms();
        let m = ms.m();
        self.grid.integrate(|i| {
            let p = DVector::from_fn(m, |k, _| u[i][k] * v[i][k] + u[i][m + k] * v[i][m + k]);
            ms.ops.integrate(&p)
        })
    }

    fn norm(&self, u: &[DVector<f64>]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// Relaxed forward–backward sweep from `w0`. Each iteration proposes
    /// `(1 − γ) w + γ w_new` with `w_new` from the gradient equation; a
    /// proposal that does not lower `J` is rejected and `γ` halved, an
    /// accepted one lets `γ` grow back towards its initial value. The best
    /// iterate is returned; `converged` is false when the iteration budget
    /// ran out first, `improved` is false when it does not beat `w = 0`.
    pub fn solve(&self, w0: Option<Vec<DVector<f64>>>) -> Result<OcpSolution> {
        let zero = self.zero_control();
        let rho_uc = self.state_solve(&zero)?;
        let j_uc = self.cost(&rho_uc, &zero);
        let (mut w, mut rho, mut j) = match w0 {
            Some(w0) => {
                self.check_control(&w0)?;
                let rho = self.state_solve(&w0)?;
                let j = self.cost(&rho, &w0);
                (w0, rho, j)
            }
            None => (zero, rho_uc, j_uc),
        };
        let s = &self.sweep;
        let mut gamma = s.gamma;
        let mut history = Vec::new();
        let mut converged = false;
        let mut q = self.adjoint_solve(&rho, &w)?;
        for iter in 1..=s.max_iters {
            let w_new = gradient_equation(self.ms(), &rho, &q, self.beta);
            let residual = self.gradient_residual(&rho, &q, &w);
            history.push(SweepRecord {
                iter,
                j,
                grad_residual: residual,
                gamma,
            });
            if residual <= s.tol {
                converged = true;
                break;
            }
            let mut accepted = false;
            while gamma >= 1e-12 {
                let trial: Vec<DVector<f64>> =
                    w.iter().zip(&w_new).map(|(a, b)| a * (1.0 - gamma) + b * gamma).collect();
                let rho_t = self.state_solve(&trial)?;
                let j_t = self.cost(&rho_t, &trial);
                if j_t < j {
                    let dw: Vec<DVector<f64>> = trial.iter().zip(&w).map(|(a, b)| a - b).collect();
                    let small_w = self.norm(&dw) <= s.tol * (self.norm(&trial) + s.atol);
                    let small_j = (j - j_t).abs() <= s.tol * j.abs().max(s.atol);
                    w = trial;
                    rho = rho_t;
                    j = j_t;
                    gamma = (gamma * 1.5).min(s.gamma);
                    accepted = true;
                    if small_w && small_j {
                        converged = true;
                    }
                    break;
                }
                gamma *= 0.5;
            }
            q = self.adjoint_solve(&rho, &w)?;
            if !accepted || converged {
                converged = converged && accepted;
                history.push(SweepRecord {
                    iter: iter + 1,
                    j,
                    grad_residual: self.gradient_residual(&rho, &q, &w),
                    gamma,
                });
                break;
            }
        }
        Ok(OcpSolution {
            rho,
            q,
            w,
            j_value: j,
            j_uncontrolled: j_uc,
            history,
            converged,
            improved: j <= j_uc + s.atol,
        })
    }

    /// `‖βw + Σ ρ grad q‖ / (‖βw‖ + atol)`.
    pub fn gradient_residual(&self, rhos: &[DVector<f64>], qs: &[DVector<f64>], w: &[DVector<f64>]) -> f64 {
        let g = self.reduced_gradient(rhos, qs, w);
        let bw: Vec<DVector<f64>> = w.iter().map(|v| v * self.beta).collect();
        self.norm(&g) / (self.norm(&bw) + self.sweep.atol)
    }
}

/// Adjoint dynamics in reversed time `s = T − t`:
/// `dq_a/ds = Lap q_a + (w − grad V_a − Σ_b grad Conv_ab ρ_b)·grad q_a
///  + Σ_b Σ_d K^{ba}_d (ρ_b ∂_d q_b) + ρ_a − ρ̂_a`
/// with `∂q_a/∂n = 0` and continuity of `q_a` and its normal derivative
/// across intersections.
struct AdjointSystem<'p, 'a, 'b> {
    problem: &'p OcpProblem<'a, 'b>,
    rhos: &'p [DVector<f64>],
    w: &'p [DVector<f64>],
}

impl AdjointSystem<'_, '_, '_> {
    fn at(&self, s: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let p = self.problem;
        let t = p.grid.t_final - s;
        (
            p.grid.interpolate(self.rhos, t),
            p.grid.interpolate(self.w, t),
            p.grid.interpolate(&p.targets, t),
        )
    }

    /// Cartesian components of a local-component vector field.
    fn cartesian(&self, u: &DVector<f64>) -> DVector<f64> {
        self.problem.ms().to_cartesian_components(u)
    }
}

impl DaeSystem for AdjointSystem<'_, '_, '_> {
    fn dim(&self) -> usize {
        self.problem.ddft.n_species() * self.problem.ddft.m()
    }

    fn mass_mask(&self) -> &[f64] {
        self.problem.ddft.mass_mask()
    }

    fn rhs(&self, s: f64, q: &DVector<f64>) -> DVector<f64> {
        let p = self.problem;
        let ms = p.ms();
        let d = p.ddft;
        let m = ms.m();
        let n = d.n_species();
        let (rho, w, target) = self.at(s);
        let grads: Vec<DVector<f64>> = (0..n).map(|a| ms.ops.grad(&d.species(q, a))).collect();
        // ρ_b grad q_b in Cartesian components
        let weighted: Vec<DVector<f64>> = (0..n)
            .map(|b| {
                let mut u = self.cartesian(&grads[b]);
                for k in 0..m {
                    u[k] *= rho[b * m + k];
                    u[m + k] *= rho[b * m + k];
                }
                u
            })
            .collect();
        let mut out = DVector::zeros(n * m);
        for a in 0..n {
            let qa = d.species(q, a);
            let g = &grads[a];
            let c = -d.drift(&rho, a, Some(&w));
            let mut r = ms.ops.lap(&qa);
            for k in 0..m {
                r[k] += c[k] * g[k] + c[m + k] * g[m + k] + rho[a * m + k] - target[a * m + k];
            }
            for (b, u) in weighted.iter().enumerate() {
                if let Some([kx, ky]) = &p.kernel_grad[b][a] {
                    r += kx * u.rows(0, m) + ky * u.rows(m, m);
                }
            }
            let dn = ms.normal_component(g);
            for (i, &k) in ms.ind.bound.iter().enumerate() {
                r[k] = dn[i];
            }
            ms.apply_intersection_bcs(&mut r, &qa, Some(g))
                .expect("lengths fixed at construction");
            out.rows_mut(a * m, m).copy_from(&r);
        }
        out
    }

    fn jacobian(&self, s: f64, _q: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = self.problem;
        let ms = p.ms();
        let d = p.ddft;
        let m = ms.m();
        let n = d.n_species();
        let (rho, w, _) = self.at(s);
        let g1 = ms.ops.grad1.to_dense();
        let g2 = ms.ops.grad2.to_dense();
        // Cartesian gradient rows
        let mut gx = g1.clone();
        let mut gy = g2.clone();
        for k in 0..m {
            let (sn, cs) = if ms.frame_angle[k] == 0.0 { (0.0, 1.0) } else { ms.frame_angle[k].sin_cos() };
            if sn != 0.0 || cs != 1.0 {
                let r1 = g1.row(k).into_owned();
                let r2 = g2.row(k).into_owned();
                gx.row_mut(k).copy_from(&(&r1 * cs - &r2 * sn));
                gy.row_mut(k).copy_from(&(&r1 * sn + &r2 * cs));
            }
        }
        let lap = ms.ops.lap_matrix();
        let mut jac = DMatrix::zeros(n * m, n * m);
        for a in 0..n {
            let c = -d.drift(&rho, a, Some(&w));
            for b in 0..n {
                let mut blk = DMatrix::zeros(m, m);
                if a == b {
                    blk += &lap;
                    for k in 0..m {
                        for j in 0..m {
                            blk[(k, j)] += c[k] * g1[(k, j)] + c[m + k] * g2[(k, j)];
                        }
                    }
                }
                if let Some([kx, ky]) = &p.kernel_grad[b][a] {
                    let mut wx = gx.clone();
                    let mut wy = gy.clone();
                    for k in 0..m {
                        let r = rho[b * m + k];
                        wx.row_mut(k).scale_mut(r);
                        wy.row_mut(k).scale_mut(r);
                    }
                    blk.gemm(1.0, kx, &wx, 1.0);
                    blk.gemm(1.0, ky, &wy, 1.0);
                }
                for (&k, &nrm) in ms.ind.bound.iter().zip(&ms.normals) {
                    blk.row_mut(k).fill(0.0);
                    if a == b {
                        let (c1, c2) = ms.normal_coeffs(k, nrm);
                        let row = g1.row(k) * c1 + g2.row(k) * c2;
                        blk.row_mut(k).copy_from(&row);
                    }
                }
                for row in &ms.match_rows {
                    let k = row.node();
                    blk.row_mut(k).fill(0.0);
                    if a != b {
                        continue;
                    }
                    match row {
                        MatchRow::Continuity { node, other } => {
                            blk[(k, *node)] += 1.0;
                            blk[(k, *other)] -= 1.0;
                        }
                        MatchRow::Flux { terms, .. } => {
                            for &(pt, nrm) in terms {
                                let (c1, c2) = ms.normal_coeffs(pt, nrm);
                                let r = g1.row(pt) * c1 + g2.row(pt) * c2;
                                let mut dst = blk.row_mut(k);
                                dst += r;
                            }
                        }
                    }
                }
                jac.view_mut((a * m, b * m), (m, m)).copy_from(&blk);
            }
        }
        Some(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::build_multishape;
    use crate::ddft::SpeciesParams;
    use crate::geometry::Element;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(n: usize) -> MultiShape {
        build_multishape(vec![Element::rect(0.0, 1.0, 0.0, 1.0, n, n).unwrap()], &[]).unwrap()
    }

    fn one(kappa: f64, sigma: f64) -> SpeciesParams {
        SpeciesParams {
            kappa: vec![vec![kappa]],
            sigma: vec![vec![sigma]],
            c_mass: vec![1.0],
        }
    }

    fn tight() -> StepperConfig {
        StepperConfig {
            rtol: 1e-11,
            atol: 1e-11,
            ..Default::default()
        }
    }

    fn config(beta: f64, t_final: f64, n: usize) -> OcpConfig {
        OcpConfig {
            beta,
            t_final,
            time_nodes: n,
            sweep: SweepConfig::default(),
        }
    }

    /// Smooth control `Σ c_k φ_k(x, t)` in local components.
    fn smooth_control(ms: &MultiShape, grid: &TimeGrid, c: &[f64]) -> Vec<DVector<f64>> {
        grid.nodes
            .iter()
            .map(|&t| {
                ms.sample_vector(|p| {
                    [
                        c[0] + c[1] * p[0] + c[2] * p[1] * t + c[3] * (2.0 * p[0]).sin(),
                        c[4] + c[5] * p[1] * p[0] + c[6] * t + c[7] * (3.0 * p[1]).cos(),
                    ]
                })
            })
            .collect()
    }

    #[test]
    fn time_grid_quadrature_and_interpolation() {
        let g = TimeGrid::new(4, 2.0).unwrap();
        assert_eq!(g.nodes[0], 0.0);
        assert_abs_diff_eq!(g.nodes[3], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.integrate(|_| 1.0), 2.0, epsilon = 1e-14);
        // CC on 4 nodes is exact for cubics
        assert_abs_diff_eq!(g.integrate(|i| g.nodes[i].powi(3)), 4.0, epsilon = 1e-13);
        let vals: Vec<DVector<f64>> = g.nodes.iter().map(|t| DVector::from_element(1, t * t - t)).collect();
        assert_abs_diff_eq!(g.interpolate(&vals, 0.7)[0], 0.49 - 0.7, epsilon = 1e-14);
        assert!(TimeGrid::new(2, 1.0).is_err());
    }

    #[test]
    fn cost_trivial_cases() {
        let ms = unit_box(5);
        let g = TimeGrid::new(3, 1.0).unwrap();
        let rho = vec![ms.sample(|p| 1.0 + p[0]); 3];
        let zero = vec![DVector::zeros(2 * ms.m()); 3];
        assert_eq!(cost(&ms, &g, &rho, &rho, &zero, 0.3), 0.0);
        let w: Vec<DVector<f64>> = vec![ms.sample_vector(|p| [p[1], 1.0]); 3];
        let w2: Vec<DVector<f64>> = w.iter().map(|v| v * 2.0).collect();
        let c1 = cost(&ms, &g, &rho, &rho, &w, 0.3);
        let c2 = cost(&ms, &g, &rho, &rho, &w2, 0.3);
        assert_abs_diff_eq!(c2, 4.0 * c1, epsilon = 1e-14);
        // ∫∫ |w|² = 1 · (1/3 + 1)
        assert_abs_diff_eq!(c1, 0.15 * (1.0 / 3.0 + 1.0), epsilon = 1e-13);
    }

    #[test]
    fn gradient_equation_pointwise() {
        let ms = unit_box(5);
        let rho = vec![DVector::from_element(ms.m(), 2.0)];
        let q = vec![ms.sample(|p| 3.0 * p[0] - p[1])];
        let w = gradient_equation(&ms, &rho, &q, 0.5);
        let m = ms.m();
        for k in 0..m {
            assert_abs_diff_eq!(w[0][k], -12.0, epsilon = 1e-12);
            assert_abs_diff_eq!(w[0][m + k], 4.0, epsilon = 1e-12);
        }
        assert!(gradient_equation(&ms, &rho, &[DVector::zeros(m)], 0.5)[0].amax() == 0.0);
        let w2 = gradient_equation(&ms, &rho, &q, 1.0);
        assert_abs_diff_eq!(w2[0][0], 0.5 * w[0][0], epsilon = 1e-12);
    }

    fn tiny_problem<'a, 'b>(ddft: &'b Ddft<'a>, beta: f64, nt: usize) -> OcpProblem<'a, 'b> {
        let ms = ddft.ms;
        let cfg = config(beta, 0.5, nt);
        let grid = TimeGrid::new(nt, 0.5).unwrap();
        let y0 = ddft
            .initial_state(&[ms.sample(|p| (-(p[0] - 0.3).powi(2) - (p[1] - 0.6).powi(2)).exp())], 1e-12)
            .unwrap();
        let bare = OcpProblem::new(ddft, &cfg, y0.clone(), vec![y0.clone(); nt], tight()).unwrap();
        let targets = bare.state_solve(&smooth_control(ms, &grid, &[0.5, 0.0, 0.3, 0.0, -0.2, 0.4, 0.0, 0.1])).unwrap();
        OcpProblem::new(ddft, &cfg, y0, targets, tight()).unwrap()
    }

    #[test]
    fn adjoint_vanishes_at_target() {
        let ms = unit_box(6);
        let ddft = Ddft::new(&ms, one(0.0, 1.0), vec![DVector::zeros(ms.m())]).unwrap();
        let mut p = tiny_problem(&ddft, 1.0, 4);
        let zero = p.zero_control();
        p.targets = p.state_solve(&zero).unwrap();
        let rho = p.state_solve(&zero).unwrap();
        let q = p.adjoint_solve(&rho, &zero).unwrap();
        assert!(q.iter().all(|v| v.amax() < 1e-12));
        assert!(q.last().unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn uncontrolled_state_matches_dynamics() {
        let ms = unit_box(6);
        let ddft = Ddft::new(&ms, one(0.4, 0.5), vec![ms.sample(|p| 0.2 * p[1])]).unwrap();
        let p = tiny_problem(&ddft, 1.0, 4);
        let rho = p.state_solve(&p.zero_control()).unwrap();
        let cfg = StepperConfig {
            output_times: p.grid.nodes.clone(),
            ..tight()
        };
        let dy = ddft.simulate(&p.y0, (0.0, 0.5), &cfg).unwrap();
        for (a, b) in rho.iter().zip(&dy.trajectory.states) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn rightward_control_moves_centre_of_mass() {
        let ms = unit_box(8);
        let ddft = Ddft::new(&ms, one(0.0, 1.0), vec![DVector::zeros(ms.m())]).unwrap();
        let mut p = tiny_problem(&ddft, 1.0, 4);
        p.y0 = DVector::from_element(ms.m(), 1.0);
        let w = vec![ms.sample_vector(|_| [1.0, 0.0]); 4];
        let rho = p.state_solve(&w).unwrap();
        let x1 = ms.sample(|q| q[0]);
        let moment = |r: &DVector<f64>| ms.ops.integrate(&r.component_mul(&x1));
        assert!(moment(&rho[1]) > moment(&rho[0]) + 1e-3);
    }

    #[test]
    fn control_conserves_mass() {
        use std::f64::consts::PI;
        // consistent start and a control vanishing on the walls keep the
        // solution smooth, so the collocation mass error is spectrally small
        let ms = unit_box(18);
        let ddft = Ddft::new(&ms, one(0.0, 0.5), vec![DVector::zeros(ms.m())]).unwrap();
        let mut p = tiny_problem(&ddft, 1.0, 4);
        p.y0 = ddft
            .initial_state(&[ms.sample(|q| 1.0 + 0.3 * (PI * q[0]).cos() * (PI * q[1]).cos())], 1e-12)
            .unwrap();
        let w: Vec<DVector<f64>> = p
            .grid
            .nodes
            .iter()
            .map(|&t| {
                ms.sample_vector(|q| {
                    let (s1, s2) = ((PI * q[0]).sin(), (PI * q[1]).sin());
                    [s1 * (0.5 + q[1] + t), s2 * (0.3 * q[0] - 0.4 * t)]
                })
            })
            .collect();
        let rho = p.state_solve(&w).unwrap();
        for r in &rho {
            let drift = (ms.ops.integrate(r) - 1.0).abs();
            assert!(drift < 1e-6, "drift {drift}");
        }
    }

    /// Relative mismatch between the adjoint directional derivative and
    /// central differences of the cost along seeded smooth directions.
    fn gradient_mismatch(n_space: usize, n_time: usize, directions: usize) -> Vec<f64> {
        let ms = unit_box(n_space);
        let ddft = Ddft::new(&ms, one(-0.6, 0.4), vec![ms.sample(|p| 0.3 * p[0] - 0.2 * p[1])]).unwrap();
        let p = tiny_problem(&ddft, 0.05, n_time);
        let w = smooth_control(&ms, &p.grid, &[0.1, 0.2, 0.0, -0.1, 0.0, 0.1, 0.2, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..directions)
            .map(|_| {
                let c: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
                let dw = smooth_control(&ms, &p.grid, &c);
                let adj = p.directional_derivative(&w, &dw).unwrap();
                let h = 1e-4;
                let shifted = |s: f64| -> f64 {
                    let ws: Vec<DVector<f64>> = w.iter().zip(&dw).map(|(a, b)| a + b * s).collect();
                    p.cost(&p.state_solve(&ws).unwrap(), &ws)
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                (adj - fd).abs() / fd.abs()
            })
            .collect()
    }

    #[test]
    fn adjoint_gradient_converges_under_refinement() {
        // the continuous adjoint matches the discrete cost only up to the
        // space and time discretization errors
        let coarse = gradient_mismatch(6, 4, 2);
        let fine = gradient_mismatch(10, 12, 2);
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(*c < 0.05, "coarse mismatch {c}");
            assert!(*f < 1e-3 && *f < 0.1 * c, "fine mismatch {f} (coarse {c})");
        }
    }
}
