//! Subcommand drivers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde_json::{json, Value};
use specel::assembly::{build_multishape, MultiShape};
use specel::dae::StepperConfig;
use specel::ddft::Ddft;
use specel::ocp::OcpProblem;
use specel::scenarios::{channel_flow, Case};
use specel::steady::{boundary_values, error_measure, solve_poisson};
use specel::testfns::{poisson_f, poisson_u};
use specel::validation::{operator_error, run_validation_suite, series, Operator, ValidationRow};

use crate::config::{ElementSpec, FlowSpec, ScenarioConfig, TargetSpec};
use crate::error::{CliError, Result};
use crate::export::write_uniform;
use crate::output::{
    fields_columns, read_fields, uniform_columns, write_fields, write_ocp_history, write_table, write_validation,
    Frame, Manifest, OCP_COLUMNS, SCHEMA_VERSION, VALIDATION_COLUMNS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Poisson,
    Equilibrium,
    Dynamics,
    Ocp,
    Export,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Poisson => "poisson",
            Command::Equilibrium => "equilibrium",
            Command::Dynamics => "dynamics",
            Command::Ocp => "ocp",
            Command::Export => "export",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: usize,
    /// `export`: grid resolution, overriding `outputs.uniform_grid`.
    pub resolution: Option<usize>,
    /// `export`: fields CSV to resample, default `<out>/fields.csv`.
    pub input: Option<PathBuf>,
}

/// Artifact bookkeeping for one invocation.
struct Run {
    out: PathBuf,
    csv: BTreeMap<String, Vec<String>>,
    timings: BTreeMap<String, f64>,
    log: serde_json::Map<String, Value>,
    clock: Instant,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn record_csv(&mut self, name: &str, columns: Vec<String>) {
        self.csv.insert(name.to_string(), columns);
    }

    fn lap(&mut self, what: &str) {
        self.timings.insert(what.to_string(), self.clock.elapsed().as_secs_f64());
        self.clock = Instant::now();
    }

    fn log(&mut self, key: &str, v: Value) {
        self.log.insert(key.to_string(), v);
    }
}

/// Runs one subcommand, always leaving a manifest in the output directory
/// once it is known.
pub fn run(cmd: Command, opts: &RunOptions) -> Result<()> {
    let cfg = ScenarioConfig::load(&opts.config)?;
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.outputs.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let start = Instant::now();
    let mut r = Run {
        out: out.clone(),
        csv: BTreeMap::new(),
        timings: BTreeMap::new(),
        log: serde_json::Map::new(),
        clock: Instant::now(),
    };
    let result = match cmd {
        Command::Validate => validate(&cfg, &mut r),
        Command::Poisson => poisson(&cfg, &mut r),
        Command::Equilibrium => equilibrium(&cfg, &mut r),
        Command::Dynamics => dynamics(&cfg, &mut r),
        Command::Ocp => ocp(&cfg, opts, &mut r),
        Command::Export => export(&cfg, opts, &mut r),
    };
    r.timings.insert("total".into(), start.elapsed().as_secs_f64());
    let status = match &result {
        Ok(()) => "ok",
        Err(CliError::NotConverged(_)) => "not_converged",
        Err(_) => "error",
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        program: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cmd.name().into(),
        config_path: opts.config.clone(),
        status: status.into(),
        error: result.as_ref().err().map(|e| e.to_string()),
        threads: opts.threads,
        config: serde_json::to_value(resolved(&cfg))?,
        csv: r.csv,
        timings_s: r.timings,
        log: Value::Object(r.log),
    };
    manifest.write(&out.join("manifest.json"))?;
    result
}

/// The config with defaults made explicit.
fn resolved(cfg: &ScenarioConfig) -> ScenarioConfig {
    let mut c = cfg.clone();
    if let Ok(els) = cfg.geometry.elements() {
        c.geometry.elements = els.iter().map(ElementSpec::from_element).collect();
    }
    let s = cfg.solver.stepper.build();
    let st = &mut c.solver.stepper;
    st.rtol = Some(s.rtol);
    st.atol = Some(s.atol);
    st.dt_init = Some(s.dt_init);
    st.dt_min = Some(s.dt_min);
    st.dt_max = s.dt_max.is_finite().then_some(s.dt_max);
    st.max_newton_iters = Some(s.max_newton_iters);
    if let Some(o) = c.solver.ocp.as_mut() {
        let sw = o.build().sweep;
        o.gamma = Some(sw.gamma);
        o.max_sweeps = Some(sw.max_iters);
        o.tol = Some(sw.tol);
        o.atol = Some(sw.atol);
    }
    c
}

fn validate(cfg: &ScenarioConfig, r: &mut Run) -> Result<()> {
    let cases = cfg.cases()?;
    let sweep = cfg.sweep()?;
    let ops = cfg.operators()?;
    let reference_only = [Operator::Integration, Operator::Convolution];
    if cases.contains(&Case::QuadWedge) && ops.iter().any(|o| reference_only.contains(o)) {
        return Err(CliError::Config(
            "quad_wedge has no integration or convolution reference; restrict solver.operators".into(),
        ));
    }
    let rows = run_validation_suite(&cases, &sweep, &ops)?;
    r.lap("validation");
    write_validation(&r.path("validation.csv"), &rows)?;
    r.record_csv("validation.csv", VALIDATION_COLUMNS.iter().map(|s| s.to_string()).collect());
    log_series(r, &rows);
    Ok(())
}

fn log_series(r: &mut Run, rows: &[ValidationRow]) {
    let summary: Vec<Value> = series(rows)
        .into_iter()
        .map(|((case, op), pts)| {
            let best = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            json!({
                "case": case,
                "operator": op.name(),
                "min_error": best,
                "decay_slope": specel::validation::decay_slope(&pts),
            })
        })
        .collect();
    r.log("series", Value::Array(summary));
}

fn budget_scale(name: &str) -> Result<(f64, f64)> {
    Ok(match name {
        "equal" => (1.0, 1.0),
        "half_first" => (0.5, 1.0),
        "half_second" => (1.0, 0.5),
        _ => return Err(CliError::Config(format!("solver.budgets: unknown budget '{name}'"))),
    })
}

fn poisson(cfg: &ScenarioConfig, r: &mut Run) -> Result<()> {
    if !cfg.geometry.elements.is_empty() {
        return poisson_custom(cfg, r);
    }
    let cases = cfg.cases()?;
    let sweep = cfg.sweep()?;
    let budgets = if cfg.solver.budgets.is_empty() {
        vec!["equal".to_string()]
    } else {
        cfg.solver.budgets.clone()
    };
    let mut rows = Vec::new();
    for case in &cases {
        for b in &budgets {
            let (s1, s2) = budget_scale(b)?;
            let label = if b == "equal" {
                case.name().to_string()
            } else {
                format!("{}_{b}", case.name())
            };
            for &n in &sweep {
                let t = Instant::now();
                let ms = build_multishape(case.elements_scaled(n, s1, s2)?, &[])?;
                let error = operator_error(*case, &ms, Operator::Poisson)?;
                rows.push(ValidationRow {
                    case: label.clone(),
                    operator: Operator::Poisson,
                    n_sigma: n,
                    error,
                    wall_ms: t.elapsed().as_secs_f64() * 1e3,
                });
            }
        }
    }
    r.lap("poisson");
    write_validation(&r.path("validation.csv"), &rows)?;
    r.record_csv("validation.csv", VALIDATION_COLUMNS.iter().map(|s| s.to_string()).collect());
    log_series(r, &rows);
    Ok(())
}

/// Manufactured Poisson problem on a user geometry.
fn poisson_custom(cfg: &ScenarioConfig, r: &mut Run) -> Result<()> {
    let t = Instant::now();
    let ms = cfg.geometry.multishape()?;
    r.lap("assembly");
    let u = solve_poisson(&ms, &ms.sample(poisson_f), &boundary_values(&ms, poisson_u))?;
    let ex = ms.sample(poisson_u);
    let error = error_measure(&ms, &u, &ex)?;
    r.lap("solve");
    let row = ValidationRow {
        case: cfg.name.clone().unwrap_or_else(|| "custom".into()),
        operator: Operator::Poisson,
        n_sigma: cfg.geometry.n.unwrap_or(0),
        error,
        wall_ms: t.elapsed().as_secs_f64() * 1e3,
    };
    write_validation(&r.path("validation.csv"), &[row])?;
    r.record_csv("validation.csv", VALIDATION_COLUMNS.iter().map(|s| s.to_string()).collect());
    let names = vec!["u".to_string(), "u_exact".to_string()];
    let frames = [Frame { t: 0.0, columns: vec![u, ex] }];
    write_field_outputs(cfg, r, &ms, &names, &frames)?;
    r.log("error", json!(error));
    r.log("nodes", json!(ms.m()));
    Ok(())
}

fn write_field_outputs(cfg: &ScenarioConfig, r: &mut Run, ms: &MultiShape, names: &[String], frames: &[Frame]) -> Result<()> {
    write_fields(&r.path("fields.csv"), ms, names, frames)?;
    r.record_csv("fields.csv", fields_columns(names));
    if let Some(n) = cfg.outputs.uniform_grid {
        write_uniform(&r.path("uniform.csv"), ms, names, frames, n)?;
        r.record_csv("uniform.csv", uniform_columns(names));
    }
    r.lap("output");
    Ok(())
}

fn build_ddft<'a>(cfg: &ScenarioConfig, ms: &'a MultiShape) -> Result<Ddft<'a>> {
    let ph = cfg.physics()?;
    let params = ph.species()?;
    let v: Vec<DVector<f64>> = ph.v_ext.iter().map(|p| ms.sample(|x| p.eval(x))).collect();
    let d = Ddft::new(ms, params, v)?;
    if ph.analytic_gradients {
        let g = ph.v_ext.iter().map(|p| ms.sample_vector(|x| p.grad(x))).collect();
        Ok(d.with_grad_v_ext(g)?)
    } else {
        Ok(d)
    }
}

fn species_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|a| format!("{prefix}_{a}")).collect()
}

fn split_species(y: &DVector<f64>, n: usize, m: usize) -> Vec<DVector<f64>> {
    (0..n).map(|a| y.rows(a * m, m).into_owned()).collect()
}

fn initial_profiles(cfg: &ScenarioConfig, ms: &MultiShape) -> Result<Vec<DVector<f64>>> {
    let ph = cfg.physics()?;
    Ok(ph.initial()?.iter().map(|p| ms.sample(|x| p.eval(x))).collect())
}

fn equilibrium(cfg: &ScenarioConfig, r: &mut Run) -> Result<()> {
    let ms = cfg.geometry.multishape()?;
    let d = build_ddft(cfg, &ms)?;
    r.lap("assembly");
    let n = d.n_species();
    let f = if cfg.physics()?.initial.is_empty() {
        vec![DVector::from_element(ms.m(), 1.0); n]
    } else {
        initial_profiles(cfg, &ms)?
    };
    let y0 = d.normalize(&f)?;
    let p = &cfg.solver.picard;
    let sol = d.picard(&y0, p.lambda, p.tol, p.max_iters)?;
    r.lap("solve");
    let shifted = sol.shifted_log_free_energy();
    let rows: Vec<Vec<f64>> = (0..sol.iterations)
        .map(|i| {
            vec![
                (i + 1) as f64,
                sol.errors[i],
                sol.free_energy[i],
                shifted[i].unwrap_or(f64::NAN),
            ]
        })
        .collect();
    let cols = ["iter", "error", "free_energy", "shifted_log_free_energy"];
    write_table(&r.path("convergence.csv"), &cols, &rows)?;
    r.record_csv("convergence.csv", cols.iter().map(|s| s.to_string()).collect());
    let names = species_names("rho", n);
    let frames = [Frame { t: 0.0, columns: split_species(&sol.rho, n, ms.m()) }];
    write_field_outputs(cfg, r, &ms, &names, &frames)?;
    r.log("iterations", json!(sol.iterations));
    r.log("final_error", json!(sol.errors.last()));
    r.log("free_energy", json!(sol.free_energy));
    r.log("masses", json!(d.masses(&sol.rho)));
    r.log("nodes", json!(ms.m()));
    Ok(())
}

fn dynamics(cfg: &ScenarioConfig, r: &mut Run) -> Result<()> {
    let spec = cfg
        .solver
        .dynamics
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [solver.dynamics] table".into()))?;
    if !(spec.t_final > 0.0) {
        return Err(CliError::Config(format!("solver.dynamics.t_final must be positive, got {}", spec.t_final)));
    }
    let mut times = cfg.outputs.frame_times.clone();
    if times.is_empty() {
        times = vec![0.0, spec.t_final];
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && **t <= spec.t_final)) {
        return Err(CliError::Config(format!("outputs.frame_times: {t} outside [0, {}]", spec.t_final)));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();

    let ms = cfg.geometry.multishape()?;
    let d = build_ddft(cfg, &ms)?;
    r.lap("assembly");
    let y0 = d.initial_state(&initial_profiles(cfg, &ms)?, spec.init_atol)?;
    let stepper = StepperConfig {
        output_times: times,
        ..cfg.solver.stepper.build()
    };
    let dynm = d.simulate(&y0, (0.0, spec.t_final), &stepper)?;
    r.lap("solve");
    let n = d.n_species();
    let names = species_names("rho", n);
    let frames: Vec<Frame> = dynm
        .trajectory
        .times
        .iter()
        .zip(&dynm.trajectory.states)
        .map(|(&t, y)| Frame { t, columns: split_species(y, n, ms.m()) })
        .collect();
    write_field_outputs(cfg, r, &ms, &names, &frames)?;
    let s = &dynm.trajectory.stats;
    r.log("times", json!(dynm.trajectory.times));
    r.log("masses", json!(dynm.masses));
    r.log("free_energy", json!(dynm.free_energy));
    r.log(
        "stepper",
        json!({
            "steps": s.steps,
            "rejected": s.rejected,
            "newton_iters": s.newton_iters,
            "jacobian_evals": s.jacobian_evals,
            "factorizations": s.factorizations,
        }),
    );
    r.log("nodes", json!(ms.m()));
    Ok(())
}

fn flow_field(ms: &MultiShape, flow: &FlowSpec) -> DVector<f64> {
    match *flow {
        FlowSpec::Channel { strength } => channel_flow(ms, strength),
        FlowSpec::Uniform { vector } => ms.sample_vector(|_| vector),
    }
}

fn ocp(cfg: &ScenarioConfig, opts: &RunOptions, r: &mut Run) -> Result<()> {
    let spec = cfg
        .solver
        .ocp
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [solver.ocp] table".into()))?;
    let oc = spec.build();
    oc.validate()?;
    let ms = cfg.geometry.multishape()?;
    let d = build_ddft(cfg, &ms)?;
    let n = d.n_species();
    let m = ms.m();
    let y0 = d.initial_state(&initial_profiles(cfg, &ms)?, 1e-10)?;
    let stepper = cfg.solver.stepper.build();
    let nt = oc.time_nodes;
    let placeholder = vec![y0.clone(); nt];
    let bare = OcpProblem::new(&d, &oc, y0.clone(), placeholder, stepper.clone())?;
    r.lap("assembly");
    let targets = match &spec.targets {
        TargetSpec::Forward { flow } => bare.state_solve(&vec![flow_field(&ms, flow); nt])?,
        TargetSpec::Uncontrolled => bare.state_solve(&bare.zero_control())?,
        TargetSpec::Csv { path } => {
            let path = if path.is_relative() {
                opts.config.parent().unwrap_or(Path::new(".")).join(path)
            } else {
                path.clone()
            };
            load_targets(&path, &ms, n, nt)?
        }
    };
    r.lap("targets");
    let problem = OcpProblem::new(&d, &oc, y0, targets, stepper)?;
    let w0 = spec.initial_control.as_ref().map(|f| vec![flow_field(&ms, f); nt]);
    let sol = problem.solve(w0)?;
    r.lap("solve");

    write_ocp_history(&r.path("ocp.csv"), &sol.history)?;
    r.record_csv("ocp.csv", OCP_COLUMNS.iter().map(|s| s.to_string()).collect());
    let nodes = &problem.grid.nodes;
    let rho_frames: Vec<Frame> = nodes
        .iter()
        .zip(&sol.rho)
        .map(|(&t, y)| Frame { t, columns: split_species(y, n, m) })
        .collect();
    write_field_outputs(cfg, r, &ms, &species_names("rho", n), &rho_frames)?;
    let adj: Vec<Frame> = nodes
        .iter()
        .zip(&sol.q)
        .map(|(&t, q)| Frame { t, columns: split_species(q, n, m) })
        .collect();
    let q_names = species_names("q", n);
    write_fields(&r.path("adjoint.csv"), &ms, &q_names, &adj)?;
    r.record_csv("adjoint.csv", fields_columns(&q_names));
    let ctl: Vec<Frame> = nodes
        .iter()
        .zip(&sol.w)
        .map(|(&t, w)| Frame { t, columns: split_species(&ms.to_cartesian_components(w), 2, m) })
        .collect();
    let w_names = vec!["w_x1".to_string(), "w_x2".to_string()];
    write_fields(&r.path("control.csv"), &ms, &w_names, &ctl)?;
    r.record_csv("control.csv", fields_columns(&w_names));
    r.lap("output");

    r.log("j_uncontrolled", json!(sol.j_uncontrolled));
    r.log("j_controlled", json!(sol.j_value));
    r.log("reduction", json!(1.0 - sol.j_value / sol.j_uncontrolled));
    r.log("converged", json!(sol.converged));
    r.log("improved", json!(sol.improved));
    r.log("sweeps", json!(sol.history.len()));
    r.log("time_nodes", json!(nodes));
    r.log("nodes", json!(m));
    if !sol.converged {
        return Err(CliError::NotConverged(format!(
            "sweep stopped after {} iterations without meeting tolerance {:e}",
            sol.history.len(),
            oc.sweep.tol
        )));
    }
    Ok(())
}

fn load_targets(path: &Path, ms: &MultiShape, n: usize, nt: usize) -> Result<Vec<DVector<f64>>> {
    let table = read_fields(path)?;
    let m = ms.m();
    if table.points.len() != m || table.names.len() < n || table.frames.len() != nt {
        return Err(CliError::Config(format!(
            "targets {}: need {nt} frames of {m} nodes and {n} value columns, found {} frames of {} nodes and {} columns",
            path.display(),
            table.frames.len(),
            table.points.len(),
            table.names.len()
        )));
    }
    Ok(table
        .frames
        .iter()
        .map(|f| {
            let mut y = DVector::zeros(n * m);
            for a in 0..n {
                y.rows_mut(a * m, m).copy_from(&f.columns[a]);
            }
            y
        })
        .collect())
}

fn export(cfg: &ScenarioConfig, opts: &RunOptions, r: &mut Run) -> Result<()> {
    let input = opts.input.clone().unwrap_or_else(|| r.path("fields.csv"));
    let n = opts
        .resolution
        .or(cfg.outputs.uniform_grid)
        .ok_or_else(|| CliError::Config("no resolution: pass --resolution or set outputs.uniform_grid".into()))?;
    let ms = cfg.geometry.multishape()?;
    let table = read_fields(&input)?;
    if table.points.len() != ms.m() {
        return Err(CliError::Config(format!(
            "{} has {} nodes but the configured geometry has {}",
            input.display(),
            table.points.len(),
            ms.m()
        )));
    }
    r.lap("read");
    write_uniform(&r.path("uniform.csv"), &ms, &table.names, &table.frames, n)?;
    r.record_csv("uniform.csv", uniform_columns(&table.names));
    r.lap("export");
    r.log("frames", json!(table.frames.len()));
    r.log("resolution", json!(n));
    Ok(())
}
