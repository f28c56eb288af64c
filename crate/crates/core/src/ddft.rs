//! Mean-field dynamic density functional theory on a multishape: free
//! energy, fluxes, no-flux dynamics as a DAE, and Picard equilibria.
//!
//! Multi-species states are stacked species by species, `[ρ_1; ρ_2; …]`,
//! each block of length M.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{MatchRow, MultiShape};
use crate::convolution::{convolution_matrix, Kernel};
use crate::dae::{consistent_init, integrate, DaeSystem, StepperConfig, Trajectory};
use crate::error::{Error, Result};
use crate::steady::error_measure;

/// Largest exponent range accepted before `exp` would lose the fixed point.
pub const EXP_LIMIT: f64 = 700.0;

/// Pairwise Gaussian interaction parameters and target masses.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesParams {
    /// `κ[a][b]`.
    pub kappa: Vec<Vec<f64>>,
    /// `σ[a][b]`.
    pub sigma: Vec<Vec<f64>>,
    /// `c_M` per species.
    pub c_mass: Vec<f64>,
}

impl SpeciesParams {
    pub fn n_species(&self) -> usize {
        self.c_mass.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_species();
        if n == 0 {
            return Err(Error::InvalidArgument("at least one species is required".into()));
        }
        let square = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if !square(&self.kappa) || !square(&self.sigma) {
            return Err(Error::InvalidArgument(format!("kappa and sigma must be {n}×{n}")));
        }
        if self.sigma.iter().flatten().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("sigma entries must be positive".into()));
        }
        if self.kappa.iter().flatten().any(|k| !k.is_finite()) {
            return Err(Error::InvalidArgument("kappa entries must be finite".into()));
        }
        Ok(())
    }
}

/// `V(r) = κ exp(−(r/σ)²)`.
pub fn gaussian_kernel(kappa: f64, sigma: f64) -> Kernel {
    Kernel::radial(move |r| kappa * (-(r / sigma).powi(2)).exp())
}

/// Cartesian displacement derivatives `(∂V/∂d1, ∂V/∂d2)` of [`gaussian_kernel`].
pub fn gaussian_kernel_grad(kappa: f64, sigma: f64) -> (Kernel, Kernel) {
    let s2 = sigma * sigma;
    let g = move |d: f64, a: f64, b: f64| -2.0 * d / s2 * kappa * (-(a * a + b * b) / s2).exp();
    (
        Kernel::displacement(move |a, b| g(a, a, b)),
        Kernel::displacement(move |a, b| g(b, a, b)),
    )
}

/// Prebuilt operators for one multishape and parameter set.
pub struct Ddft<'a> {
    pub ms: &'a MultiShape,
    pub params: SpeciesParams,
    /// External potential per species.
    pub v_ext: Vec<DVector<f64>>,
    /// Its gradient (local components, length 2M).
    pub grad_v: Vec<DVector<f64>>,
    /// `Conv_ab`, absent when `κ_ab = 0`.
    pub conv: Vec<Vec<Option<DMatrix<f64>>>>,
    /// `grad · Conv_ab`.
    pub grad_conv: Vec<Vec<Option<DMatrix<f64>>>>,
    grad: DMatrix<f64>,
    mask: Vec<f64>,
}

impl<'a> Ddft<'a> {
    /// Builds all convolution operators; `v_ext` holds one field per species.
    pub fn new(ms: &'a MultiShape, params: SpeciesParams, v_ext: Vec<DVector<f64>>) -> Result<Self> {
        params.validate()?;
        let n = params.n_species();
        let m = ms.m();
        if v_ext.len() != n || v_ext.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidArgument(format!(
                "expected {n} external potentials of length {m}"
            )));
        }
        let grad_v = v_ext.iter().map(|v| ms.ops.grad(v)).collect();
        let mut conv = Vec::with_capacity(n);
        let mut grad_conv = Vec::with_capacity(n);
        for a in 0..n {
            let mut row = Vec::with_capacity(n);
            let mut grow = Vec::with_capacity(n);
            for b in 0..n {
                let k = params.kappa[a][b];
                if k == 0.0 {
                    row.push(None);
                    grow.push(None);
                } else {
                    let c = convolution_matrix(ms, &gaussian_kernel(k, params.sigma[a][b]))?;
                    grow.push(Some(ms.ops.grad_mul(&c)));
                    row.push(Some(c));
                }
            }
            conv.push(row);
            grad_conv.push(grow);
        }
        let mut mask = vec![1.0; n * m];
        for a in 0..n {
            for &k in ms.ind.bound.iter().chain(&ms.ind.intersection_nodes) {
                mask[a * m + k] = 0.0;
            }
        }
        Ok(Ddft {
            ms,
            params,
            v_ext,
            grad_v,
            conv,
            grad_conv,
            grad: ms.ops.grad_matrix(),
            mask,
        })
    }

    /// Replaces the potential gradients (local components), e.g. with
    /// closed forms.
    pub fn with_grad_v_ext(mut self, grad_v: Vec<DVector<f64>>) -> Result<Self> {
        let m = self.ms.m();
        if grad_v.len() != self.n_species() || grad_v.iter().any(|g| g.len() != 2 * m) {
            return Err(Error::InvalidArgument(format!("expected gradients of length {}", 2 * m)));
        }
        self.grad_v = grad_v;
        Ok(self)
    }

    pub fn n_species(&self) -> usize {
        self.params.n_species()
    }

    pub fn m(&self) -> usize {
        self.ms.m()
    }

    /// 0 on boundary and intersection rows, 1 elsewhere.
    pub fn mass_mask(&self) -> &[f64] {
        &self.mask
    }

    pub(crate) fn species(&self, y: &DVector<f64>, a: usize) -> DVector<f64> {
        y.rows(a * self.m(), self.m()).into_owned()
    }

    fn check_state(&self, y: &DVector<f64>) -> Result<()> {
        let want = self.n_species() * self.m();
        if y.len() != want {
            return Err(Error::InvalidArgument(format!("state length {} != {want}", y.len())));
        }
        Ok(())
    }

    /// `Σ_b Conv_ab ρ_b`.
    pub fn interaction_potential(&self, y: &DVector<f64>, a: usize) -> DVector<f64> {
        let mut u = DVector::zeros(self.m());
        for b in 0..self.n_species() {
            if let Some(c) = &self.conv[a][b] {
                u += c * self.species(y, b);
            }
        }
        u
    }

    /// Drift `grad V_a + Σ_b grad Conv_ab ρ_b − w` (length 2M).
    pub(crate) fn drift(&self, y: &DVector<f64>, a: usize, w: Option<&DVector<f64>>) -> DVector<f64> {
        let mut s = self.grad_v[a].clone();
        for b in 0..self.n_species() {
            if let Some(gc) = &self.grad_conv[a][b] {
                s += gc * self.species(y, b);
            }
        }
        if let Some(w) = w {
            s -= w;
        }
        s
    }

    /// Flux `j_a = −(grad ρ_a + ρ_a grad V_a + ρ_a Σ_b grad Conv_ab ρ_b) + ρ_a w`
    /// in local components.
    pub fn flux(&self, y: &DVector<f64>, a: usize, w: Option<&DVector<f64>>) -> DVector<f64> {
        let m = self.m();
        let rho = self.species(y, a);
        let s = self.drift(y, a, w);
        let mut j = -self.ms.ops.grad(&rho);
        for k in 0..m {
            j[k] -= rho[k] * s[k];
            j[m + k] -= rho[k] * s[m + k];
        }
        j
    }

    /// DAE right-hand side: `−div j_a` on interior rows, `j_a·n` on boundary
    /// rows and matching residuals on intersection rows.
    pub fn rhs(&self, y: &DVector<f64>, w: Option<&DVector<f64>>) -> DVector<f64> {
        let m = self.m();
        let mut out = DVector::zeros(y.len());
        for a in 0..self.n_species() {
            let rho = self.species(y, a);
            let j = self.flux(y, a, w);
            let mut r = -self.ms.ops.div(&j);
            let jn = self.ms.normal_component(&j);
            for (i, &k) in self.ms.ind.bound.iter().enumerate() {
                r[k] = jn[i];
            }
            self.ms
                .apply_intersection_bcs(&mut r, &rho, Some(&j))
                .expect("lengths fixed at construction");
            out.rows_mut(a * m, m).copy_from(&r);
        }
        out
    }

    /// Row-assembles a block of the rhs Jacobian from `∂j_a/∂ρ_b`.
    fn rows_from_flux_jacobian(&self, jj: &DMatrix<f64>, same: bool) -> DMatrix<f64> {
        let m = self.m();
        let ops = &self.ms.ops;
        let top = jj.rows(0, m).into_owned();
        let bot = jj.rows(m, m).into_owned();
        let mut blk = -(ops.div1.mul_dense(&top) + ops.div2.mul_dense(&bot));
        for (&k, &n) in self.ms.ind.bound.iter().zip(&self.ms.normals) {
            let (c1, c2) = self.ms.normal_coeffs(k, n);
            let row = top.row(k) * c1 + bot.row(k) * c2;
            blk.row_mut(k).copy_from(&row);
        }
        for row in &self.ms.match_rows {
            let k = row.node();
            blk.row_mut(k).fill(0.0);
            match row {
                MatchRow::Continuity { node, other } => {
                    if same {
                        blk[(k, *node)] += 1.0;
                        blk[(k, *other)] -= 1.0;
                    }
                }
                MatchRow::Flux { terms, .. } => {
                    for &(p, n) in terms {
                        let (c1, c2) = self.ms.normal_coeffs(p, n);
                        let r = top.row(p) * c1 + bot.row(p) * c2;
                        let mut dst = blk.row_mut(k);
                        dst += r;
                    }
                }
            }
        }
        blk
    }

    /// Analytic Jacobian of [`Ddft::rhs`] with respect to the stacked state.
    pub fn jacobian(&self, y: &DVector<f64>, w: Option<&DVector<f64>>) -> DMatrix<f64> {
        let m = self.m();
        let n = self.n_species();
        let mut jac = DMatrix::zeros(n * m, n * m);
        for a in 0..n {
            let rho = self.species(y, a);
            let s = self.drift(y, a, w);
            for b in 0..n {
                let mut jj = if a == b {
                    let mut g = -&self.grad;
                    for k in 0..m {
                        g[(k, k)] -= s[k];
                        g[(m + k, k)] -= s[m + k];
                    }
                    g
                } else {
                    DMatrix::zeros(2 * m, m)
                };
                if let Some(gc) = &self.grad_conv[a][b] {
                    for c in 0..m {
                        for k in 0..m {
                            jj[(k, c)] -= rho[k] * gc[(k, c)];
                            jj[(m + k, c)] -= rho[k] * gc[(m + k, c)];
                        }
                    }
                } else if a != b {
                    continue;
                }
                let blk = self.rows_from_flux_jacobian(&jj, a == b);
                jac.view_mut((a * m, b * m), (m, m)).copy_from(&blk);
            }
        }
        jac
    }

    /// Mass `Int ρ_a` per species.
    pub fn masses(&self, y: &DVector<f64>) -> Vec<f64> {
        (0..self.n_species()).map(|a| self.ms.ops.integrate(&self.species(y, a))).collect()
    }

    /// Mean-field free energy.
    pub fn free_energy(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_state(y)?;
        if let Some(v) = y.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Domain(format!("free energy needs positive densities, found {v}")));
        }
        let int = &self.ms.ops;
        let mut f = 0.0;
        for a in 0..self.n_species() {
            let rho = self.species(y, a);
            f += int.integrate(&rho.map(|r| r * (r.ln() - 1.0)));
            f += int.integrate(&rho.component_mul(&self.v_ext[a]));
            f += 0.5 * int.integrate(&rho.component_mul(&self.interaction_potential(y, a)));
        }
        Ok(f)
    }

    /// `c_M f / Int f` per species.
    pub fn normalize(&self, f: &[DVector<f64>]) -> Result<DVector<f64>> {
        let m = self.m();
        if f.len() != self.n_species() || f.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidArgument(format!(
                "expected {} fields of length {m}",
                self.n_species()
            )));
        }
        let mut y = DVector::zeros(self.n_species() * m);
        for (a, fa) in f.iter().enumerate() {
            let z = self.ms.ops.integrate(fa);
            if !(z > 0.0) || fa.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Domain(format!("initial profile of species {a} must be positive")));
            }
            y.rows_mut(a * m, m).copy_from(&(fa * (self.params.c_mass[a] / z)));
        }
        Ok(y)
    }

    /// Normalized initial state satisfying the boundary and matching rows.
    /// Projection and mass rescaling alternate until both hold.
    pub fn initial_state(&self, f: &[DVector<f64>], atol: f64) -> Result<DVector<f64>> {
        let mut y = self.normalize(f)?;
        let sys = DdftSystem::new(self, None);
        for _ in 0..20 {
            y = consistent_init(&sys, 0.0, &y, atol)?;
            let masses = self.masses(&y);
            let mut done = true;
            for (a, mass) in masses.iter().enumerate() {
                let c = self.params.c_mass[a];
                if ((mass - c) / c).abs() > 1e-13 {
                    done = false;
                    let m = self.m();
                    let mut blk = y.rows_mut(a * m, m);
                    blk *= c / mass;
                }
            }
            if done {
                return Ok(y);
            }
        }
        Err(Error::NumericFailure("initial state: projection and mass constraint disagree".into()))
    }

    /// Integrates the no-flux dynamics from a consistent `y0`.
    pub fn simulate(&self, y0: &DVector<f64>, t_span: (f64, f64), cfg: &StepperConfig) -> Result<Dynamics> {
        self.check_state(y0)?;
        let sys = DdftSystem::new(self, None);
        let traj = integrate(&sys, y0, t_span, cfg)?;
        Ok(self.summarize(traj))
    }

    pub fn summarize(&self, trajectory: Trajectory) -> Dynamics {
        let masses = trajectory.states.iter().map(|y| self.masses(y)).collect();
        let free_energy = trajectory.states.iter().map(|y| self.free_energy(y).ok()).collect();
        Dynamics {
            trajectory,
            masses,
            free_energy,
        }
    }

    /// Self-consistent update `G_a(ρ)`; errors if the exponent spread
    /// exceeds [`EXP_LIMIT`].
    pub fn boltzmann_update(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.m();
        let mut out = DVector::zeros(y.len());
        for a in 0..self.n_species() {
            let phi = -(&self.v_ext[a] + self.interaction_potential(y, a));
            let (lo, hi) = (phi.min(), phi.max());
            if !(hi - lo <= EXP_LIMIT) {
                return Err(Error::NumericFailure(format!(
                    "exponent range {:.3e} for species {a} would overflow; reduce the mixing parameter",
                    hi - lo
                )));
            }
            let e = phi.map(|p| (p - hi).exp());
            let z = self.ms.ops.integrate(&e);
            out.rows_mut(a * m, m).copy_from(&(e * (self.params.c_mass[a] / z)));
        }
        Ok(out)
    }

    /// Damped Picard iteration for the equilibrium equation.
    pub fn picard(&self, rho_ig: &DVector<f64>, lambda: f64, tol: f64, max_iters: usize) -> Result<Picard> {
        self.check_state(rho_ig)?;
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!("mixing parameter must be in (0, 1], got {lambda}")));
        }
        if rho_ig.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Domain("initial guess must be positive".into()));
        }
        let m = self.m();
        let mut old = rho_ig.clone();
        let mut errors = Vec::new();
        let mut free_energy = Vec::new();
        for it in 1..=max_iters {
            let new = self.boltzmann_update(&old)?;
            let mut err = 0.0f64;
            for a in 0..self.n_species() {
                let e = error_measure(
                    self.ms,
                    &new.rows(a * m, m).into_owned(),
                    &old.rows(a * m, m).into_owned(),
                )?;
                err = err.max(e);
            }
            errors.push(err);
            if err < tol {
                free_energy.push(self.free_energy(&new)?);
                return Ok(Picard {
                    rho: new,
                    iterations: it,
                    errors,
                    free_energy,
                });
            }
            old = &old * (1.0 - lambda) + new * lambda;
            free_energy.push(self.free_energy(&old)?);
        }
        Err(Error::NonConvergence {
            iterations: max_iters,
            last_error: errors.last().copied().unwrap_or(f64::NAN),
        })
    }
}

/// Output of [`Ddft::simulate`].
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub trajectory: Trajectory,
    /// Per output time, per species.
    pub masses: Vec<Vec<f64>>,
    /// `None` where a density was not positive.
    pub free_energy: Vec<Option<f64>>,
}

/// Output of [`Ddft::picard`].
#[derive(Debug, Clone)]
pub struct Picard {
    pub rho: DVector<f64>,
    pub iterations: usize,
    /// Max-over-species error per iteration.
    pub errors: Vec<f64>,
    /// Free energy of each iterate.
    pub free_energy: Vec<f64>,
}

impl Picard {
    /// `ln|F_k − F_final|` per iteration; the final entry is `None`.
    pub fn shifted_log_free_energy(&self) -> Vec<Option<f64>> {
        let fin = *self.free_energy.last().expect("at least one iteration");
        self.free_energy
            .iter()
            .map(|f| {
                let d = (f - fin).abs();
                (d > 0.0).then(|| d.ln())
            })
            .collect()
    }
}

type ControlFn<'b> = &'b (dyn Fn(f64) -> DVector<f64> + Sync);

/// [`DaeSystem`] view of the dynamics with an optional time-dependent
/// advecting field `w(t)` (local components).
pub struct DdftSystem<'a, 'b> {
    ddft: &'b Ddft<'a>,
    control: Option<ControlFn<'b>>,
}

impl<'a, 'b> DdftSystem<'a, 'b> {
    pub fn new(ddft: &'b Ddft<'a>, control: Option<ControlFn<'b>>) -> Self {
        DdftSystem { ddft, control }
    }
}

impl DaeSystem for DdftSystem<'_, '_> {
    fn dim(&self) -> usize {
        self.ddft.n_species() * self.ddft.m()
    }

    fn mass_mask(&self) -> &[f64] {
        &self.ddft.mask
    }

    fn rhs(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let w = self.control.map(|c| c(t));
        self.ddft.rhs(y, w.as_ref())
    }

    fn jacobian(&self, t: f64, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        let w = self.control.map(|c| c(t));
        Some(self.ddft.jacobian(y, w.as_ref()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::build_multishape;
    use crate::geometry::Element;
    use approx::assert_abs_diff_eq;

    fn unit_box(n: usize) -> MultiShape {
        build_multishape(vec![Element::rect(0.0, 1.0, 0.0, 1.0, n, n).unwrap()], &[]).unwrap()
    }

    fn two_boxes(n: usize) -> MultiShape {
        build_multishape(
            vec![
                Element::rect(0.0, 1.0, 0.0, 1.0, n, n).unwrap(),
                Element::rect(1.0, 2.0, 0.0, 1.0, n, n).unwrap(),
            ],
            &[],
        )
        .unwrap()
    }

    fn one(kappa: f64, sigma: f64) -> SpeciesParams {
        SpeciesParams {
            kappa: vec![vec![kappa]],
            sigma: vec![vec![sigma]],
            c_mass: vec![1.0],
        }
    }

    #[test]
    fn kernel_values() {
        let k = gaussian_kernel(0.7, 0.5);
        assert_eq!(k.eval(0.0, 0.0), 0.7);
        let (gx, gy) = gaussian_kernel_grad(0.7, 0.5);
        assert_abs_diff_eq!(gx.eval(0.5, 0.0), -2.0 * 0.7 * (-1.0f64).exp() / 0.5, epsilon = 1e-15);
        assert_eq!(gy.eval(0.5, 0.0), 0.0);
        assert_eq!(gaussian_kernel(0.0, 1.0).eval(0.3, 0.1), 0.0);
    }

    #[test]
    fn uniform_free_energy() {
        let ms = unit_box(6);
        let d = Ddft::new(&ms, one(0.0, 1.0), vec![DVector::zeros(ms.m())]).unwrap();
        let y = DVector::from_element(ms.m(), 1.0);
        assert_abs_diff_eq!(d.free_energy(&y).unwrap(), -1.0, epsilon = 1e-13);
        let d2 = Ddft::new(&ms, one(0.0, 1.0), vec![DVector::from_element(ms.m(), 0.5)]).unwrap();
        assert_abs_diff_eq!(d2.free_energy(&y).unwrap(), -0.5, epsilon = 1e-13);
        let mut bad = y.clone();
        bad[3] = 0.0;
        assert!(matches!(d.free_energy(&bad), Err(Error::Domain(_))));
    }

    #[test]
    fn species_swap_symmetry() {
        let ms = unit_box(6);
        let p = SpeciesParams {
            kappa: vec![vec![0.3, 0.5], vec![0.5, 0.3]],
            sigma: vec![vec![0.4, 0.6], vec![0.6, 0.4]],
            c_mass: vec![1.0, 1.0],
        };
        let v = vec![DVector::zeros(ms.m()), DVector::zeros(ms.m())];
        let d = Ddft::new(&ms, p, v).unwrap();
        let r1 = ms.sample(|p| 1.0 + p[0]);
        let r2 = ms.sample(|p| 2.0 - p[1] * p[0]);
        let mut y = DVector::zeros(2 * ms.m());
        y.rows_mut(0, ms.m()).copy_from(&r1);
        y.rows_mut(ms.m(), ms.m()).copy_from(&r2);
        let mut ys = DVector::zeros(2 * ms.m());
        ys.rows_mut(0, ms.m()).copy_from(&r2);
        ys.rows_mut(ms.m(), ms.m()).copy_from(&r1);
        assert_abs_diff_eq!(d.free_energy(&y).unwrap(), d.free_energy(&ys).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn boltzmann_profile_has_zero_flux() {
        let ms = two_boxes(12);
        let v = ms.sample(|p| 0.1 * p[1] + 0.3 * p[0] * p[0]);
        let d = Ddft::new(&ms, one(0.0, 1.0), vec![v.clone()]).unwrap();
        let y = v.map(|x| (-x).exp());
        assert!(d.flux(&y, 0, None).amax() < 1e-10);
        assert!(d.rhs(&y, None).amax() < 1e-9);
    }

    #[test]
    fn flux_matches_compositional_oracle() {
        let ms = unit_box(10);
        let v = ms.sample(|p| p[0] * p[1]);
        let d = Ddft::new(&ms, one(0.8, 0.4), vec![v.clone()]).unwrap();
        let y = ms.sample(|p| (-(p[0] - 0.4).powi(2) - (p[1] - 0.6).powi(2)).exp());
        let c = convolution_matrix(&ms, &gaussian_kernel(0.8, 0.4)).unwrap();
        let g = |f: &DVector<f64>| ms.ops.grad(f);
        let m = ms.m();
        let gr = g(&y);
        let gv = g(&v);
        let gc = g(&(&c * &y));
        let j = d.flux(&y, 0, None);
        for k in 0..2 * m {
            let want = -(gr[k] + y[k % m] * gv[k] + y[k % m] * gc[k]);
            assert_abs_diff_eq!(j[k], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn heat_equation_regression() {
        let ms = unit_box(8);
        let d = Ddft::new(&ms, one(0.0, 1.0), vec![DVector::zeros(ms.m())]).unwrap();
        let y = ms.sample(|p| 1.0 + p[0] * p[0] * p[1]);
        let r = d.rhs(&y, None);
        let lap = ms.ops.lap(&y);
        let mask = d.mass_mask();
        for k in 0..ms.m() {
            if mask[k] == 1.0 {
                assert_abs_diff_eq!(r[k], lap[k], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let ms = two_boxes(5);
        let p = SpeciesParams {
            kappa: vec![vec![0.6, -0.4], vec![0.2, 0.3]],
            sigma: vec![vec![0.5, 0.7], vec![0.7, 0.9]],
            c_mass: vec![1.0, 2.0],
        };
        let v = vec![ms.sample(|p| 0.2 * p[1]), ms.sample(|p| p[0] * p[0])];
        let d = Ddft::new(&ms, p, v).unwrap();
        let m = ms.m();
        let mut y = DVector::zeros(2 * m);
        y.rows_mut(0, m).copy_from(&ms.sample(|p| 1.0 + 0.3 * p[0] * p[1]));
        y.rows_mut(m, m).copy_from(&ms.sample(|p| 2.0 - 0.2 * p[1] + 0.1 * p[0]));
        let w = ms.sample_vector(|p| [0.1 * p[1], -0.2]);
        let jac = d.jacobian(&y, Some(&w));
        let h = 1e-6;
        for c in 0..2 * m {
            let mut yp = y.clone();
            yp[c] += h;
            let mut ym = y.clone();
            ym[c] -= h;
            let col = (d.rhs(&yp, Some(&w)) - d.rhs(&ym, Some(&w))) / (2.0 * h);
            for r in 0..2 * m {
                assert_abs_diff_eq!(jac[(r, c)], col[r], epsilon = 1e-6 * (1.0 + col[r].abs()));
            }
        }
    }

    #[test]
    fn picard_uniform_fixed_point_and_boltzmann() {
        let ms = two_boxes(10);
        let d = Ddft::new(&ms, one(0.0, 1.0), vec![DVector::zeros(ms.m())]).unwrap();
        let u = DVector::from_element(ms.m(), 0.5);
        let r = d.picard(&u, 0.5, 1e-12, 10).unwrap();
        assert!(r.iterations <= 2);
        assert!((r.rho - u).amax() < 1e-14);

        let v = ms.sample(|p| 0.1 * p[1]);
        let d = Ddft::new(&ms, one(0.0, 1.0), vec![v]).unwrap();
        let r = d.picard(&DVector::from_element(ms.m(), 0.5), 0.5, 1e-12, 100).unwrap();
        let z = (1.0 - (-0.1f64).exp()) / 0.1 * 2.0;
        let ex = ms.sample(|p| (-0.1 * p[1]).exp() / z);
        assert!((r.rho - ex).amax() < 1e-8);
    }

    #[test]
    fn picard_reports_overflow_and_nonconvergence() {
        let ms = unit_box(6);
        let d = Ddft::new(&ms, one(0.0, 1.0), vec![ms.sample(|p| 1000.0 * p[0])]).unwrap();
        let y = DVector::from_element(ms.m(), 1.0);
        assert!(matches!(d.picard(&y, 0.5, 1e-8, 5), Err(Error::NumericFailure(_))));
        let d = Ddft::new(&ms, one(5.0, 0.3), vec![DVector::zeros(ms.m())]).unwrap();
        let y = ms.sample(|p| 1.0 + p[0]);
        assert!(matches!(d.picard(&y, 0.01, 1e-14, 3), Err(Error::NonConvergence { iterations: 3, .. })));
    }

    #[test]
    fn diffusion_relaxes_to_uniform_and_conserves_mass() {
        let ms = two_boxes(8);
        let d = Ddft::new(&ms, one(0.0, 1.0), vec![DVector::zeros(ms.m())]).unwrap();
        let f = ms.sample(|p| 1.0 + 0.5 * (std::f64::consts::PI * p[0] / 2.0).cos());
        let y0 = d.initial_state(&[f], 1e-12).unwrap();
        assert_abs_diff_eq!(d.masses(&y0)[0], 1.0, epsilon = 1e-12);
        let cfg = StepperConfig {
            rtol: 1e-8,
            atol: 1e-8,
            output_times: vec![0.0, 1.0, 5.0],
            ..Default::default()
        };
        let out = d.simulate(&y0, (0.0, 5.0), &cfg).unwrap();
        let last = out.trajectory.states.last().unwrap();
        assert!((last.add_scalar(-0.5)).amax() < 1e-4);
        for m in &out.masses {
            assert!((m[0] - 1.0).abs() < 1e-6);
        }
        let f: Vec<f64> = out.free_energy.iter().map(|f| f.unwrap()).collect();
        assert!(f.windows(2).all(|w| w[1] <= w[0] + 1e-7));
    }
}
