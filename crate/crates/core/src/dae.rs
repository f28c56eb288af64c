//! Variable-step BDF1/BDF2 integrator for `M y' = f(t, y)` with a diagonal
//! 0/1 mass matrix.
//!
//! Rows with mass 0 are algebraic constraints `0 = f_i(t, y)`. The first two
//! steps use implicit Euler, later steps the variable-coefficient BDF2
//! formula. Local errors are estimated from predictor–corrector differences
//! over the differential components only. Output times are hit exactly by
//! shortening steps, so constraints hold at every output.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Semi-explicit DAE `M y' = f(t, y)`.
pub trait DaeSystem: Sync {
    fn dim(&self) -> usize;

    /// 0/1 entries; 0 marks an algebraic row.
    fn mass_mask(&self) -> &[f64];

    fn rhs(&self, t: f64, y: &DVector<f64>) -> DVector<f64>;

    /// Analytic `∂f/∂y`; `None` selects finite differences.
    fn jacobian(&self, _t: f64, _y: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

type RhsFn = Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Sync>;
type JacFn = Box<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Sync>;

/// [`DaeSystem`] built from closures.
pub struct FnSystem {
    mask: Vec<f64>,
    rhs: RhsFn,
    jac: Option<JacFn>,
}

impl FnSystem {
    pub fn new(
        mass_mask: Vec<f64>,
        rhs: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Sync + 'static,
    ) -> Self {
        FnSystem {
            mask: mass_mask,
            rhs: Box::new(rhs),
            jac: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(f64, &DVector<f64>) -> DMatrix<f64> + Sync + 'static,
    ) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }
}

impl DaeSystem for FnSystem {
    fn dim(&self) -> usize {
        self.mask.len()
    }

    fn mass_mask(&self) -> &[f64] {
        &self.mask
    }

    fn rhs(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        (self.rhs)(t, y)
    }

    fn jacobian(&self, t: f64, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.jac.as_ref().map(|j| j(t, y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub rtol: f64,
    pub atol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_newton_iters: usize,
    /// Times at which the state is recorded (sorted, inside the span).
    pub output_times: Vec<f64>,
    /// Disables error control and uses `dt_init` for every step.
    pub fixed_step: bool,
    pub facmin: f64,
    pub facmax: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            rtol: 1e-9,
            atol: 1e-9,
            dt_init: 1e-6,
            dt_min: 1e-14,
            dt_max: f64::INFINITY,
            max_newton_iters: 8,
            output_times: Vec::new(),
            fixed_step: false,
            facmin: 0.2,
            facmax: 5.0,
        }
    }
}

impl StepperConfig {
    fn validate(&self, t0: f64, t1: f64) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dt_min <= dt_init <= dt_max (got {}, {}, {})",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if t1 <= t0 {
            return Err(Error::InvalidArgument(format!("empty time span [{t0}, {t1}]")));
        }
        let mut last = t0;
        for &t in &self.output_times {
            if t < last || t > t1 {
                return Err(Error::InvalidArgument(format!(
                    "output times must be sorted and inside [{t0}, {t1}]"
                )));
            }
            last = t;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stats {
    pub steps: usize,
    pub rejected: usize,
    pub newton_iters: usize,
    pub jacobian_evals: usize,
    pub factorizations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub stats: Stats,
}

fn algebraic_rows(mask: &[f64]) -> Vec<usize> {
    (0..mask.len()).filter(|&i| mask[i] == 0.0).collect()
}

fn fd_jacobian(sys: &dyn DaeSystem, t: f64, y: &DVector<f64>, f0: &DVector<f64>) -> DMatrix<f64> {
    let n = y.len();
    let cols: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = f64::EPSILON.sqrt() * y[j].abs().max(1e-5);
            let mut yp = y.clone();
            yp[j] += h;
            let h = yp[j] - y[j];
            (sys.rhs(t, &yp) - f0) / h
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn jacobian(sys: &dyn DaeSystem, t: f64, y: &DVector<f64>) -> DMatrix<f64> {
    match sys.jacobian(t, y) {
        Some(j) => j,
        None => {
            let f0 = sys.rhs(t, y);
            fd_jacobian(sys, t, y, &f0)
        }
    }
}

/// Makes the algebraic components of `y0_guess` consistent at `t0` by Newton
/// iteration on those components only.
pub fn consistent_init(
    sys: &dyn DaeSystem,
    t0: f64,
    y0_guess: &DVector<f64>,
    atol: f64,
) -> Result<DVector<f64>> {
    let alg = algebraic_rows(sys.mass_mask());
    let mut y = y0_guess.clone();
    if alg.is_empty() {
        return Ok(y);
    }
    for _ in 0..30 {
        let f = sys.rhs(t0, &y);
        let g = DVector::from_iterator(alg.len(), alg.iter().map(|&i| f[i]));
        if g.amax() <= atol {
            return Ok(y);
        }
        if !g.iter().all(|v| v.is_finite()) {
            break;
        }
        let j = jacobian(sys, t0, &y);
        let jaa = DMatrix::from_fn(alg.len(), alg.len(), |r, c| j[(alg[r], alg[c])]);
        let delta = jaa.lu().solve(&(-g)).ok_or_else(|| {
            Error::NumericFailure("singular constraint Jacobian during initialization".into())
        })?;
        for (k, &i) in alg.iter().enumerate() {
            y[i] += delta[k];
        }
    }
    Err(Error::NumericFailure(
        "could not satisfy the algebraic constraints at t0; try a better initial guess".into(),
    ))
}

struct Newton {
    jac: Option<DMatrix<f64>>,
    jac_fresh: bool,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// `c / h` used for the current factorization of `c M − h J`.
    lu_ratio: f64,
}

enum NewtonOutcome {
    Converged(DVector<f64>),
    Failed,
}

struct Solver<'a> {
    sys: &'a dyn DaeSystem,
    cfg: &'a StepperConfig,
    mask: Vec<f64>,
    diff: Vec<usize>,
    alg: Vec<usize>,
    newton: Newton,
    stats: Stats,
}

impl<'a> Solver<'a> {
    fn weights(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(a.len(), |i, _| {
            1.0 / (self.cfg.atol + self.cfg.rtol * a[i].abs().max(b[i].abs()))
        })
    }

    fn ensure_factorization(&mut self, t: f64, y: &DVector<f64>, c: f64, h: f64, force_jac: bool) -> Result<()> {
        if self.newton.jac.is_none() || force_jac {
            self.newton.jac = Some(jacobian(self.sys, t, y));
            self.newton.jac_fresh = true;
            self.stats.jacobian_evals += 1;
            self.newton.lu = None;
        }
        let ratio = c / h;
        let stale = match self.newton.lu {
            None => true,
            Some(_) => (ratio / self.newton.lu_ratio - 1.0).abs() > 0.2,
        };
        if stale {
            let j = self.newton.jac.as_ref().expect("jacobian present");
            let mut a = j * (-h);
            for i in 0..a.nrows() {
                a[(i, i)] += c * self.mask[i];
            }
            let lu = a.lu();
            self.newton.lu = Some(lu);
            self.newton.lu_ratio = ratio;
            self.stats.factorizations += 1;
        }
        Ok(())
    }

    /// Solves `c M y − h f(t, y) = M b` for `y`, starting from `y_pred`.
    fn newton_solve(
        &mut self,
        t: f64,
        h: f64,
        c: f64,
        b: &DVector<f64>,
        y_pred: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<NewtonOutcome> {
        let mut y = y_pred.clone();
        let mut prev_norm = f64::INFINITY;
        for it in 1..=self.cfg.max_newton_iters {
            let f = self.sys.rhs(t, &y);
            let mut g = DVector::zeros(y.len());
            for i in 0..y.len() {
                g[i] = self.mask[i] * (c * y[i] - b[i]) - h * f[i];
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Ok(NewtonOutcome::Failed);
            }
            let lu = self.newton.lu.as_ref().expect("factorized");
            let Some(mut delta) = lu.solve(&g) else {
                return Ok(NewtonOutcome::Failed);
            };
            delta.neg_mut();
            y += &delta;
            self.stats.newton_iters += 1;
            let norm = (delta.component_mul(w)).norm() / (y.len() as f64).sqrt();
            if !norm.is_finite() {
                return Ok(NewtonOutcome::Failed);
            }
            let rate = norm / prev_norm;
            if it > 1 && rate > 0.9 {
                return Ok(NewtonOutcome::Failed);
            }
            prev_norm = norm;
            let small = if it > 1 && rate < 1.0 {
                rate / (1.0 - rate) * norm <= 0.03
            } else {
                norm <= 1e-3
            };
            if small {
                let f = self.sys.rhs(t, &y);
                let g_alg = self.alg.iter().fold(0.0f64, |acc, &i| acc.max(f[i].abs()));
                if g_alg <= self.cfg.atol {
                    return Ok(NewtonOutcome::Converged(y));
                }
            }
        }
        Ok(NewtonOutcome::Failed)
    }
}

/// Integrates from `t_span.0` to `t_span.1`, recording the state at
/// `cfg.output_times` (the initial time is recorded if listed).
pub fn integrate(
    sys: &dyn DaeSystem,
    y0: &DVector<f64>,
    t_span: (f64, f64),
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    cfg.validate(t0, t1)?;
    if y0.len() != sys.dim() || sys.mass_mask().len() != sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "state length {} does not match system dimension {}",
            y0.len(),
            sys.dim()
        )));
    }
    let mask = sys.mass_mask().to_vec();
    if mask.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("mass mask entries must be 0 or 1".into()));
    }
    let diff: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == 1.0).collect();
    let alg = algebraic_rows(&mask);
    let mut solver = Solver {
        sys,
        cfg,
        mask,
        diff,
        alg,
        newton: Newton {
            jac: None,
            jac_fresh: false,
            lu: None,
            lu_ratio: 1.0,
        },
        stats: Stats::default(),
    };

    let mut out_times = Vec::new();
    let mut out_states = Vec::new();
    let mut next_out = 0;
    while next_out < cfg.output_times.len() && cfg.output_times[next_out] <= t0 {
        out_times.push(cfg.output_times[next_out]);
        out_states.push(y0.clone());
        next_out += 1;
    }

    // history: (t, y) newest last
    let mut hist: Vec<(f64, DVector<f64>)> = vec![(t0, y0.clone())];
    let mut h_next = cfg.dt_init.min(t1 - t0);
    let eps_t = 1e-13 * (t1 - t0).abs().max(t0.abs()).max(1.0);

    loop {
        let (tn, yn) = hist.last().cloned().expect("history");
        if tn >= t1 - eps_t {
            break;
        }
        let target = if next_out < cfg.output_times.len() {
            cfg.output_times[next_out].min(t1)
        } else {
            t1
        };
        let mut h = h_next.min(cfg.dt_max);
        let mut clipped = false;
        if tn + h >= target - eps_t {
            h = target - tn;
            clipped = true;
        } else if tn + 2.0 * h > target && !cfg.fixed_step {
            // avoid a sliver step before the next output
            h = 0.5 * (target - tn);
        }

        let order = if hist.len() >= 3 { 2 } else { 1 };
        let tnew = if clipped { target } else { tn + h };
        let h = tnew - tn;

        // BDF coefficients: c y_{n+1} − b = h f, with the M mask applied
        let (c, b, y_pred, err_factor) = if order == 1 {
            let (pred, factor) = if hist.len() == 1 {
                let f = sys.rhs(tn, &yn);
                let mut p = yn.clone();
                for &i in &solver.diff {
                    p[i] += h * f[i];
                }
                (p, 0.5)
            } else {
                let (tm1, ym1) = &hist[hist.len() - 2];
                let h1 = tn - tm1;
                let p = &yn + (&yn - ym1) * (h / h1);
                (p, h / (2.0 * h + h1))
            };
            (1.0, yn.clone(), pred, factor)
        } else {
            let (tm1, ym1) = &hist[hist.len() - 2];
            let (tm2, ym2) = &hist[hist.len() - 3];
            let h1 = tn - tm1;
            let h2 = tm1 - tm2;
            let om = h / h1;
            let c = (1.0 + 2.0 * om) / (1.0 + om);
            let b = &yn * (1.0 + om) - ym1 * (om * om / (1.0 + om));
            // quadratic extrapolation through the last three points
            let tt = tnew;
            let l0 = (tt - tm1) * (tt - tm2) / ((tn - tm1) * (tn - tm2));
            let l1 = (tt - tn) * (tt - tm2) / ((tm1 - tn) * (tm1 - tm2));
            let l2 = (tt - tn) * (tt - tm1) / ((tm2 - tn) * (tm2 - tm1));
            let pred = &yn * l0 + ym1 * l1 + ym2 * l2;
            let lte_c = h * h * (h + h1).powi(2) / (6.0 * (2.0 * h + h1));
            let e_p = h * (h + h1) * (h + h1 + h2) / 6.0;
            (c, b, pred, lte_c / (e_p + lte_c))
        };

        let w = solver.weights(&yn, &yn);
        let mut attempt_jac = false;
        let outcome = loop {
            solver.ensure_factorization(tnew, &yn, c, h, attempt_jac)?;
            match solver.newton_solve(tnew, h, c, &b, &y_pred, &w)? {
                NewtonOutcome::Converged(y) => break Some(y),
                NewtonOutcome::Failed => {
                    if !solver.newton.jac_fresh {
                        attempt_jac = true;
                        continue;
                    }
                    break None;
                }
            }
        };
        solver.newton.jac_fresh = false;

        let Some(ynew) = outcome else {
            solver.stats.rejected += 1;
            h_next = 0.5 * h;
            if cfg.fixed_step || h_next < cfg.dt_min {
                return Err(Error::StepFailure {
                    t: tn,
                    dt: h,
                    reason: "Newton iteration failed".into(),
                });
            }
            continue;
        };

        let err = if cfg.fixed_step || solver.diff.is_empty() {
            0.0
        } else {
            let w = solver.weights(&yn, &ynew);
            let s: f64 = solver
                .diff
                .iter()
                .map(|&i| (err_factor * (ynew[i] - y_pred[i]) * w[i]).powi(2))
                .sum();
            (s / solver.diff.len() as f64).sqrt()
        };

        if !cfg.fixed_step {
            let p = order as f64;
            let fac = if err == 0.0 {
                cfg.facmax
            } else {
                (0.9 * err.powf(-1.0 / (p + 1.0))).clamp(cfg.facmin, cfg.facmax)
            };
            if err > 1.0 {
                solver.stats.rejected += 1;
                h_next = h * fac.min(0.9);
                if h_next < cfg.dt_min {
                    return Err(Error::StepFailure {
                        t: tn,
                        dt: h_next,
                        reason: format!("local error {err:.3e} not reducible"),
                    });
                }
                continue;
            }
            let proposal = h * fac;
            // a step shortened to land on an output keeps the earlier proposal
            h_next = if clipped { proposal.max(h_next) } else { proposal };
        }

        solver.stats.steps += 1;
        hist.push((tnew, ynew.clone()));
        if hist.len() > 3 {
            hist.remove(0);
        }
        while next_out < cfg.output_times.len() && cfg.output_times[next_out] <= tnew + eps_t {
            out_times.push(cfg.output_times[next_out]);
            out_states.push(ynew.clone());
            next_out += 1;
        }
    }

    Ok(Trajectory {
        times: out_times,
        states: out_states,
        stats: solver.stats,
    })
}
