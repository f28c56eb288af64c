//! Acceptance report: one PASS/FAIL line per criterion with its runtime.
//!
//! Criteria are reported, not asserted, so a red line does not fail the
//! build. Nightly-scale checks run only with `SPECEL_NIGHTLY=1` (or
//! `-- --ignored`). A positional argument restricts the run to criteria
//! whose name contains it.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use specel::assembly::{build_multishape, MultiShape};
use specel::convolution::{convolution_matrix, Kernel};
use specel::dae::StepperConfig;
use specel::ddft::{Ddft, SpeciesParams};
use specel::geometry::Element;
use specel::ocp::{OcpConfig, OcpProblem, SweepConfig, TimeGrid};
use specel::scenarios::*;
use specel::spectral::{cheb_lobatto_nodes, clenshaw_curtis_weights, diff_matrix, interp_row_1d};
use specel::steady::error_measure;
use specel::testfns::{chi_c, chi_p, gauss_legendre_on, n_c, n_p};
use specel::validation::{decay_slope, operator_error, run_validation_suite, series, Operator, OPERATORS};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = (&'static str, bool, f64, fn() -> Outcome);

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let nightly = std::env::var_os("SPECEL_NIGHTLY").is_some()
        || args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let filter = args.iter().find(|a| !a.starts_with('-')).cloned();
    // (name, nightly only, runtime budget in seconds, check)
    let criteria: [Criterion; 10] = [
        ("spectral exactness", false, 5.0, spectral_exactness),
        ("operator convergence", false, 300.0, operator_convergence),
        ("convolution oracle", false, 120.0, convolution_oracle),
        ("poisson", false, 120.0, poisson),
        ("ddft funnel dynamics", false, 600.0, funnel_dynamics),
        ("equilibrium", false, 300.0, equilibrium),
        ("ocp", false, 900.0, ocp),
        ("determinism", false, f64::INFINITY, determinism),
        ("nightly: full funnel", true, f64::INFINITY, nightly_funnel),
        ("nightly: full channel reference", true, f64::INFINITY, nightly_channel),
    ];
    let (mut passed, mut failed) = (0, 0);
    for (name, is_nightly, budget, check) in criteria {
        if is_nightly && !nightly {
            println!("SKIP {name}: nightly only (set SPECEL_NIGHTLY=1)");
            continue;
        }
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = check();
        let secs = t.elapsed().as_secs_f64();
        let in_time = secs < budget;
        let pass = o.pass && in_time;
        let timing = if budget.is_finite() {
            format!("{secs:.1} s, budget {budget:.0} s")
        } else {
            format!("{secs:.1} s")
        };
        println!("{} {name}: {} [{timing}]", if pass { "PASS" } else { "FAIL" }, o.detail);
        if pass {
            passed += 1;
        } else {
            failed += 1;
        }
    }
    println!("acceptance: {passed} passed, {failed} failed");
}

fn sub(lines: &mut Vec<String>, ok: bool, text: String) -> bool {
    lines.push(format!("{}{}", if ok { "" } else { "!" }, text));
    ok
}

fn spectral_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    let targets = [-0.93, -0.41, -0.05, 0.18, 0.5, 0.77, 0.99];
    for n in 4..=20 {
        let ns = cheb_lobatto_nodes(n).unwrap();
        let d = diff_matrix(&ns, 1).unwrap();
        let w = clenshaw_curtis_weights(&ns);
        let x = ns.nodes();
        for deg in 0..n {
            let p = DVector::from_iterator(n, x.iter().map(|v| v.powi(deg as i32)));
            let dp = DVector::from_iterator(
                n,
                x.iter().map(|v| if deg == 0 { 0.0 } else { deg as f64 * v.powi(deg as i32 - 1) }),
            );
            worst = worst.max((&d * &p - dp).amax());
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            worst = worst.max((w.dot(&p) - exact).abs());
            for &t in &targets {
                let row = interp_row_1d(&ns, t);
                let v: f64 = row.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
                worst = worst.max((v - t.powi(deg as i32)).abs());
            }
        }
    }
    outcome(worst <= 1e-10, format!("max error {worst:.2e} over n = 4..20 (tol 1e-10)"))
}

fn operator_convergence() -> Outcome {
    let mut cases = BOX_CASES.to_vec();
    cases.extend(WEDGE_CASES);
    let rows = run_validation_suite(&cases, &default_sweep(), &OPERATORS).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut rising = Vec::new();
    for ((case, op), pts) in series(&rows) {
        match decay_slope(&pts) {
            Some(s) if s < 0.0 => {}
            s => rising.push(format!("{case}/{} slope {s:?}", op.name())),
        }
    }
    ok &= sub(&mut lines, rising.is_empty(), format!("negative slope on 48 series (violations: {rising:?})"));
    let lap_a = rows
        .iter()
        .find(|r| r.case == "a" && r.operator == Operator::Laplacian && r.n_sigma == 50)
        .unwrap()
        .error;
    ok &= sub(&mut lines, lap_a <= 1e-6, format!("lap(a) at 50 = {lap_a:.2e}"));
    let err = |c: &str, op: Operator| rows.iter().find(|r| r.case == c && r.operator == op && r.n_sigma == 18).unwrap().error;
    let worse: Vec<&str> = OPERATORS.iter().filter(|&&op| err("c", op) > err("d", op)).map(|o| o.name()).collect();
    ok &= sub(&mut lines, worse.len() == OPERATORS.len(), format!("(c) > (d) at N_Sigma=18 for {worse:?}"));
    outcome(ok, lines.join("; "))
}

/// `∫ chi(y − z) n(z) dz` by a 200 × 200 Gauss–Legendre tensor rule,
/// in Cartesian coordinates for the box and polar for the wedge.
fn brute_force_convolution(ms: &MultiShape, wedge: bool) -> DVector<f64> {
    let mut quad: Vec<([f64; 2], f64)> = Vec::with_capacity(40_000);
    if wedge {
        let (ri, ro, t0, t1) = VALIDATION_WEDGE;
        let (r, wr) = gauss_legendre_on(200, ri, ro);
        let (th, wt) = gauss_legendre_on(200, t0, t1);
        for (a, wa) in r.iter().zip(&wr) {
            for (b, wb) in th.iter().zip(&wt) {
                quad.push(([a * b.cos(), a * b.sin()], wa * wb * a));
            }
        }
    } else {
        let [a1, b1, a2, b2] = VALIDATION_BOX;
        let (x1, w1) = gauss_legendre_on(200, a1, b1);
        let (x2, w2) = gauss_legendre_on(200, a2, b2);
        for (a, wa) in x1.iter().zip(&w1) {
            for (b, wb) in x2.iter().zip(&w2) {
                quad.push(([*a, *b], wa * wb));
            }
        }
    }
    let vals: Vec<f64> = ms
        .pts_cart
        .par_iter()
        .map(|y| {
            quad.iter()
                .map(|(z, w)| {
                    let (d1, d2) = (y[0] - z[0], y[1] - z[1]);
                    if wedge {
                        w * chi_p(d1, d2) * n_p(*z)
                    } else {
                        w * chi_c(d1, d2) * n_c(*z)
                    }
                })
                .sum()
        })
        .collect();
    DVector::from_vec(vals)
}

fn convolution_oracle() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for case in BOX_CASES.iter().chain(&WEDGE_CASES) {
        let ms = build_multishape(case.elements(40).unwrap(), &[]).unwrap();
        let wedge = case.is_wedge();
        let (kernel, n) = if wedge {
            (Kernel::displacement(chi_p), ms.sample(n_p))
        } else {
            (Kernel::displacement(chi_c), ms.sample(n_c))
        };
        let num = convolution_matrix(&ms, &kernel).unwrap() * n;
        let e = error_measure(&ms, &num, &brute_force_convolution(&ms, wedge)).unwrap();
        ok &= sub(&mut lines, e <= 1e-6, format!("{case} {e:.1e}"));
    }
    outcome(ok, format!("rel. error at N_Sigma=40 (tol 1e-6): {}", lines.join(", ")))
}

fn poisson() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for case in [Case::A, Case::D, Case::E, Case::H, Case::QuadWedge] {
        let mut pts = Vec::new();
        for n in default_sweep().into_iter().chain([40]) {
            let ms = build_multishape(case.elements(n).unwrap(), &[]).unwrap();
            pts.push((n, operator_error(case, &ms, Operator::Poisson).unwrap()));
        }
        let at40 = pts.pop().unwrap().1;
        let slope = decay_slope(&pts);
        let good = at40 <= 1e-6 && slope.is_some_and(|s| s < 0.0);
        ok &= sub(&mut lines, good, format!("{case} {at40:.1e} (slope {:.2})", slope.unwrap_or(f64::NAN)));
    }
    outcome(ok, format!("error at N_Sigma=40 (tol 1e-6): {}", lines.join(", ")))
}

fn funnel_run(n: usize, t_final: f64, dt_out: f64) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Option<f64>>, DVector<f64>) {
    let ex = funnel_experiment(n).unwrap();
    let ms = ex.multishape().unwrap();
    let d = ex.ddft(&ms).unwrap();
    let y0 = d.initial_state(&ex.sample_f_ic(&ms), 1e-10).unwrap();
    let k = (t_final / dt_out).round() as usize;
    let cfg = StepperConfig {
        output_times: (0..=k).map(|i| i as f64 * dt_out).collect(),
        ..StepperConfig::default()
    };
    let dy = d.simulate(&y0, (0.0, t_final), &cfg).unwrap();
    let last = dy.trajectory.states.last().unwrap().clone();
    (dy.trajectory.times, dy.masses, dy.free_energy, last)
}

fn funnel_report(n: usize, t_final: f64) -> Outcome {
    let (times, masses, energy, _) = funnel_run(n, t_final, 0.25);
    let c = 20.0;
    let drift = (0..2)
        .map(|a| masses.iter().map(|m| ((m[a] - c) / c).abs()).fold(0.0, f64::max))
        .collect::<Vec<_>>();
    let mut rise: f64 = 0.0;
    let mut missing = 0;
    for w in energy.windows(2) {
        match (w[0], w[1]) {
            (Some(a), Some(b)) => rise = rise.max(b - a),
            _ => missing += 1,
        }
    }
    let ok_mass = drift.iter().all(|d| *d <= 1e-6);
    let ok_f = rise <= 1e-7 && missing == 0;
    outcome(
        ok_mass && ok_f && *times.last().unwrap() == t_final,
        format!(
            "N={n}, t in [0,{t_final}]: mass drift {:.1e} / {:.1e} (tol 1e-6){}; max F increase {rise:.1e} (tol 1e-7){}",
            drift[0],
            drift[1],
            if ok_mass { "" } else { " RED" },
            if missing > 0 { format!(", {missing} frames without F") } else { String::new() }
        ),
    )
}

fn funnel_dynamics() -> Outcome {
    funnel_report(14, 5.0)
}

fn two_box_fixture(n: usize) -> (MultiShape, SpeciesParams, Vec<DVector<f64>>) {
    let ms = build_multishape(
        vec![
            Element::rect(0.0, 1.0, 0.0, 1.0, n, n).unwrap(),
            Element::rect(1.0, 2.0, 0.0, 1.0, n, n).unwrap(),
        ],
        &[],
    )
    .unwrap();
    let params = SpeciesParams {
        kappa: vec![vec![-0.5, 0.2], vec![0.2, -0.3]],
        sigma: vec![vec![0.5, 0.6], vec![0.6, 0.7]],
        c_mass: vec![1.0, 2.0],
    };
    let v = vec![ms.sample(|p| 0.5 * p[1]), ms.sample(|p| 0.3 * p[0])];
    (ms, params, v)
}

fn equilibrium() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;

    let ex = equilibrium_experiment(20).unwrap();
    let ms = ex.multishape().unwrap();
    let d = ex.ddft(&ms).unwrap();
    let y0 = d.normalize(&ex.sample_f_ic(&ms)).unwrap();
    let iters = d.picard(&y0, 0.5, 1e-8, 2000).map(|p| p.iterations);
    let good = iters.as_ref().is_ok_and(|i| (150..=500).contains(i));
    ok &= sub(&mut lines, good, format!("picard iterations {iters:?} (band 150..500)"));

    let mut free = ex.params.clone();
    free.kappa = vec![vec![0.0; 2]; 2];
    let d0 = Ddft::new(&ms, free, ex.sample_v_ext(&ms)).unwrap();
    let r = d0.picard(&y0, 0.5, 1e-13, 2000).unwrap();
    let m = ms.m();
    let mut worst: f64 = 0.0;
    for a in 0..2 {
        let e = ex.sample_v_ext(&ms)[a].map(|v| (-v).exp());
        let exact = &e * (ex.params.c_mass[a] / ms.ops.integrate(&e));
        worst = worst.max(error_measure(&ms, &r.rho.rows(a * m, m).into_owned(), &exact).unwrap());
    }
    ok &= sub(&mut lines, worst <= 1e-8, format!("kappa=0 Boltzmann error {worst:.1e}"));

    let (ms2, params, v) = two_box_fixture(14);
    let d2 = Ddft::new(&ms2, params, v).unwrap();
    let f = vec![ms2.sample(|p| 1.0 + 0.5 * p[0]), ms2.sample(|p| 2.0 - 0.4 * p[1])];
    let start = d2.initial_state(&f, 1e-12).unwrap();
    let cfg = StepperConfig {
        rtol: 1e-10,
        atol: 1e-10,
        output_times: vec![30.0],
        ..StepperConfig::default()
    };
    let late = d2.simulate(&start, (0.0, 30.0), &cfg).unwrap().trajectory.states.pop().unwrap();
    let eq = d2.picard(&d2.normalize(&f).unwrap(), 0.5, 1e-12, 5000).unwrap().rho;
    let m2 = ms2.m();
    let mut gap: f64 = 0.0;
    for a in 0..2 {
        let (x, y) = (late.rows(a * m2, m2).into_owned(), eq.rows(a * m2, m2).into_owned());
        gap = gap.max(error_measure(&ms2, &x, &y).unwrap());
    }
    ok &= sub(&mut lines, gap <= 1e-4, format!("dynamics at t=30 vs picard {gap:.1e}"));
    outcome(ok, lines.join("; "))
}

fn unit_box(n: usize) -> MultiShape {
    build_multishape(vec![Element::rect(0.0, 1.0, 0.0, 1.0, n, n).unwrap()], &[]).unwrap()
}

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

/// Largest relative gap between the adjoint directional derivative and a
/// central difference of the cost, over random smooth directions.
fn gradient_check(n_space: usize, n_time: usize, directions: usize) -> f64 {
    let ms = unit_box(n_space);
    let params = SpeciesParams {
        kappa: vec![vec![-0.6]],
        sigma: vec![vec![0.4]],
        c_mass: vec![1.0],
    };
    let d = Ddft::new(&ms, params, vec![ms.sample(|p| 0.3 * p[0] - 0.2 * p[1])]).unwrap();
    let cfg = OcpConfig {
        beta: 0.05,
        t_final: 0.5,
        time_nodes: n_time,
        sweep: SweepConfig::default(),
    };
    let stepper = StepperConfig {
        rtol: 1e-11,
        atol: 1e-11,
        ..StepperConfig::default()
    };
    let grid = TimeGrid::new(n_time, 0.5).unwrap();
    let y0 = d
        .initial_state(&[ms.sample(|p| (-(p[0] - 0.3).powi(2) - (p[1] - 0.6).powi(2)).exp())], 1e-12)
        .unwrap();
    let bare = OcpProblem::new(&d, &cfg, y0.clone(), vec![y0.clone(); n_time], stepper.clone()).unwrap();
    let targets = bare
        .state_solve(&smooth_control(&ms, &grid, &[0.5, 0.0, 0.3, 0.0, -0.2, 0.4, 0.0, 0.1]))
        .unwrap();
    let p = OcpProblem::new(&d, &cfg, y0, targets, stepper).unwrap();
    let w = smooth_control(&ms, &grid, &[0.1, 0.2, 0.0, -0.1, 0.0, 0.1, 0.2, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let c: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dw = smooth_control(&ms, &grid, &c);
        let adj = p.directional_derivative(&w, &dw).unwrap();
        let h = 1e-4;
        let cost = |s: f64| {
            let ws: Vec<DVector<f64>> = w.iter().zip(&dw).map(|(a, b)| a + b * s).collect();
            p.cost(&p.state_solve(&ws).unwrap(), &ws)
        };
        let fd = (cost(h) - cost(-h)) / (2.0 * h);
        worst = worst.max((adj - fd).abs() / fd.abs());
    }
    worst
}

struct Channel {
    ex: Experiment,
    ms: MultiShape,
}

impl Channel {
    fn new(n: usize) -> Self {
        let ex = channel_experiment(n).unwrap();
        let ms = ex.multishape().unwrap();
        Channel { ex, ms }
    }

    /// `J_uc` and the sweep result; `self_target` swaps in the uncontrolled
    /// states as targets and starts from the background flow.
    fn solve(&self, nt: usize, beta: f64, sweeps: usize, self_target: bool) -> (f64, specel::ocp::OcpSolution, f64) {
        let d = self.ex.ddft(&self.ms).unwrap();
        let y0 = d.initial_state(&self.ex.sample_f_ic(&self.ms), 1e-10).unwrap();
        let cfg = OcpConfig {
            beta,
            t_final: 5.0,
            time_nodes: nt,
            sweep: SweepConfig {
                max_iters: sweeps,
                ..SweepConfig::default()
            },
        };
        let stepper = StepperConfig {
            rtol: 1e-8,
            atol: 1e-8,
            ..StepperConfig::default()
        };
        let bare = OcpProblem::new(&d, &cfg, y0.clone(), vec![y0.clone(); nt], stepper.clone()).unwrap();
        let flow = vec![channel_flow(&self.ms, 0.1); nt];
        let (targets, w0) = if self_target {
            (bare.state_solve(&bare.zero_control()).unwrap(), Some(flow))
        } else {
            (bare.state_solve(&flow).unwrap(), None)
        };
        let p = OcpProblem::new(&d, &cfg, y0, targets, stepper).unwrap();
        let sol = p.solve(w0).unwrap();
        let w_norm = {
            let m = self.ms.m();
            p.grid.integrate(|i| {
                let w = &sol.w[i];
                self.ms.ops.integrate(&DVector::from_fn(m, |k, _| w[k] * w[k] + w[m + k] * w[m + k]))
            })
        };
        (sol.j_uncontrolled, sol, w_norm.sqrt())
    }
}

fn ocp() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let fd = gradient_check(6, 4, 5);
    ok &= sub(&mut lines, fd <= 1e-4, format!("adjoint vs FD {fd:.1e} (tol 1e-4; N=6, n=4)"));

    let ch = Channel::new(8);
    let (_, sol, w) = ch.solve(6, 1e-3, 30, true);
    ok &= sub(&mut lines, sol.j_value <= 1e-6, format!("self-target J {:.1e} (|w| {w:.1e})", sol.j_value));

    let (j_uc, sol, _) = ch.solve(6, 1e6, 3, false);
    let rel = (sol.j_value - j_uc).abs() / j_uc;
    ok &= sub(&mut lines, rel <= 0.01, format!("beta=1e6: |J-J_uc|/J_uc {rel:.1e}"));

    let (j_uc, sol, _) = ch.solve(6, 1e-3, 10, false);
    let ratio = sol.j_value / j_uc;
    let descent = sol.history.windows(2).all(|h| h[1].j <= h[0].j);
    let (r0, r1) = (sol.history[0].grad_residual, sol.history.last().unwrap().grad_residual);
    ok &= sub(
        &mut lines,
        ratio <= 0.5 && descent && r1 < r0,
        format!("reduced channel J_c/J_uc {ratio:.3} (J_uc {j_uc:.3e}, monotone {descent}, grad residual {r0:.1e} -> {r1:.1e})"),
    );
    outcome(ok, lines.join("; "))
}

fn bits(v: &DVector<f64>) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn determinism() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut same = |name: &str, f: &dyn Fn() -> Vec<u64>| {
        let eq = f() == f();
        ok &= eq;
        lines.push(format!("{name} {}", if eq { "identical" } else { "DIFFERS" }));
    };
    same("validation", &|| {
        let rows = run_validation_suite(&[Case::B, Case::G], &[10, 22], &OPERATORS).unwrap();
        rows.iter().map(|r| r.error.to_bits()).collect()
    });
    same("picard", &|| {
        let ex = equilibrium_experiment(14).unwrap();
        let ms = ex.multishape().unwrap();
        let d = ex.ddft(&ms).unwrap();
        let y0 = d.normalize(&ex.sample_f_ic(&ms)).unwrap();
        bits(&d.picard(&y0, 0.5, 1e-8, 2000).unwrap().rho)
    });
    same("funnel", &|| bits(&funnel_run(10, 0.5, 0.25).3));
    same("ocp", &|| {
        let (_, sol, _) = Channel::new(6).solve(4, 1e-3, 2, false);
        sol.w.iter().flat_map(bits).collect()
    });
    outcome(ok, format!("two consecutive runs: {}", lines.join(", ")))
}

fn nightly_funnel() -> Outcome {
    funnel_report(20, 20.0)
}

fn nightly_channel() -> Outcome {
    let ch = Channel::new(14);
    let (j_uc, sol, _) = ch.solve(10, 1e-3, 50, false);
    let band = (j_uc - 0.0038).abs() / 0.0038 <= 0.25;
    outcome(
        band,
        format!(
            "J_uc {j_uc:.4e} vs reference 3.8e-3 (band 25%); J_c {:.4e}, final grad residual {:.1e}",
            sol.j_value,
            sol.history.last().map(|h| h.grad_residual).unwrap_or(f64::NAN)
        ),
    )
}
