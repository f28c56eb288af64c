//! Scenario configuration files (TOML) and their translation into library
//! objects. See `configs/README.md` for the schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specel::assembly::{build_multishape, Condition, ConditionFlag, MultiShape};
use specel::dae::StepperConfig;
use specel::ddft::SpeciesParams;
use specel::geometry::{Element, Shape};
use specel::ocp::{OcpConfig, SweepConfig};
use specel::profiles::Profile;
use specel::scenarios::Case;
use specel::validation::Operator;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub geometry: GeometryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physics: Option<PhysicsConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Default node count for elements that omit `n1`/`n2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub elements: Vec<ElementSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<ConditionSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normal_overrides: Vec<NormalOverride>,
    /// Built-in validation discretizations (`validate`, `poisson`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<String>,
    /// `N_Σ` values for the built-in cases.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElementSpec {
    Quad {
        /// Images of `(ξ1, ξ2) = (−1,−1), (−1,1), (1,1), (1,−1)`; either
        /// orientation is accepted.
        corners: [[f64; 2]; 4],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n1: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n2: Option<usize>,
    },
    Rect {
        x1: [f64; 2],
        x2: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n1: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n2: Option<usize>,
    },
    /// Annular wedge; angles in radians.
    Wedge {
        r: [f64; 2],
        theta: [f64; 2],
        origin: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n1: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n2: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Match,
    Wall,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub elements: [usize; 2],
    pub condition: ConditionKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalOverride {
    pub point: [f64; 2],
    pub normal: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Pair interaction family; only `gaussian` is available.
    #[serde(default = "default_kernel")]
    pub kernel: String,
    pub kappa: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub c_mass: Vec<f64>,
    pub v_ext: Vec<Profile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial: Vec<Profile>,
    /// Use closed-form potential gradients instead of differentiating the
    /// sampled potential.
    #[serde(default)]
    pub analytic_gradients: bool,
}

fn default_kernel() -> String {
    "gaussian".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Operator tests for `validate`; all six when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub operators: Vec<String>,
    /// Per-direction budget variants for `poisson`: `equal`, `half_first`,
    /// `half_second`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub budgets: Vec<String>,
    #[serde(default)]
    pub picard: PicardSpec,
    #[serde(default)]
    pub stepper: StepperSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocp: Option<OcpSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSpec {
    #[serde(default = "PicardSpec::default_lambda")]
    pub lambda: f64,
    #[serde(default = "PicardSpec::default_tol")]
    pub tol: f64,
    #[serde(default = "PicardSpec::default_max_iters")]
    pub max_iters: usize,
}

impl PicardSpec {
    fn default_lambda() -> f64 {
        0.5
    }
    fn default_tol() -> f64 {
        1e-8
    }
    fn default_max_iters() -> usize {
        2000
    }
}

impl Default for PicardSpec {
    fn default() -> Self {
        PicardSpec {
            lambda: Self::default_lambda(),
            tol: Self::default_tol(),
            max_iters: Self::default_max_iters(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_newton_iters: Option<usize>,
}

impl StepperSpec {
    pub fn build(&self) -> StepperConfig {
        let d = StepperConfig::default();
        StepperConfig {
            rtol: self.rtol.unwrap_or(d.rtol),
            atol: self.atol.unwrap_or(d.atol),
            dt_init: self.dt_init.unwrap_or(d.dt_init),
            dt_min: self.dt_min.unwrap_or(d.dt_min),
            dt_max: self.dt_max.unwrap_or(d.dt_max),
            max_newton_iters: self.max_newton_iters.unwrap_or(d.max_newton_iters),
            ..d
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub t_final: f64,
    /// Absolute tolerance of the projection onto the constraints at `t = 0`.
    #[serde(default = "DynamicsSpec::default_init_atol")]
    pub init_atol: f64,
}

impl DynamicsSpec {
    fn default_init_atol() -> f64 {
        1e-10
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcpSpec {
    pub beta: f64,
    pub t_final: f64,
    pub time_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    pub targets: TargetSpec,
    /// Starting control; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_control: Option<FlowSpec>,
}

impl OcpSpec {
    pub fn build(&self) -> OcpConfig {
        let d = SweepConfig::default();
        OcpConfig {
            beta: self.beta,
            t_final: self.t_final,
            time_nodes: self.time_nodes,
            sweep: SweepConfig {
                gamma: self.gamma.unwrap_or(d.gamma),
                max_iters: self.max_sweeps.unwrap_or(d.max_iters),
                tol: self.tol.unwrap_or(d.tol),
                atol: self.atol.unwrap_or(d.atol),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// States of the forward problem driven by a prescribed flow.
    Forward { flow: FlowSpec },
    /// States of the uncontrolled forward problem.
    Uncontrolled,
    /// Frames of a fields CSV from a previous run, one per time node. A
    /// relative path is resolved against the config file's directory.
    Csv { path: PathBuf },
}

/// Prescribed advecting field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowSpec {
    /// Along the U-shaped channel: `+x1` above `x2 = 3`, clockwise in
    /// wedges, `−x1` below.
    Channel { strength: f64 },
    /// Constant Cartesian vector.
    Uniform { vector: [f64; 2] },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Artifact directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    /// Frame times for `dynamics`; `[0, t_final]` when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frame_times: Vec<f64>,
    /// Also write `uniform.csv` on an `n × n` grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_grid: Option<usize>,
}

impl ScenarioConfig {
    pub fn from_str(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_str(&text, path)
    }

    pub fn physics(&self) -> Result<&PhysicsConfig> {
        self.physics
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [physics] table".into()))
    }

    pub fn cases(&self) -> Result<Vec<Case>> {
        if self.geometry.cases.is_empty() {
            return Err(CliError::Config("geometry.cases is empty".into()));
        }
        self.geometry.cases.iter().map(|c| parse_case(c)).collect()
    }

    pub fn sweep(&self) -> Result<Vec<usize>> {
        if self.geometry.sweep.is_empty() {
            return Err(CliError::Config("geometry.sweep is empty".into()));
        }
        if let Some(n) = self.geometry.sweep.iter().find(|n| **n < 2) {
            return Err(CliError::Config(format!("geometry.sweep: N_Sigma must be at least 2, got {n}")));
        }
        Ok(self.geometry.sweep.clone())
    }

    pub fn operators(&self) -> Result<Vec<Operator>> {
        if self.solver.operators.is_empty() {
            return Ok(specel::validation::OPERATORS.to_vec());
        }
        self.solver.operators.iter().map(|o| parse_operator(o)).collect()
    }
}

pub fn parse_case(s: &str) -> Result<Case> {
    Ok(match s {
        "a" => Case::A,
        "b" => Case::B,
        "c" => Case::C,
        "d" => Case::D,
        "e" => Case::E,
        "f" => Case::F,
        "g" => Case::G,
        "h" => Case::H,
        "quad_wedge" => Case::QuadWedge,
        _ => return Err(CliError::Config(format!("geometry.cases: unknown case '{s}' (expected a-h or quad_wedge)"))),
    })
}

pub fn parse_operator(s: &str) -> Result<Operator> {
    Ok(match s {
        "lap" => Operator::Laplacian,
        "div" => Operator::Divergence,
        "grad" => Operator::Gradient,
        "interp" => Operator::Interpolation,
        "int" => Operator::Integration,
        "conv" => Operator::Convolution,
        "poisson" => Operator::Poisson,
        _ => return Err(CliError::Config(format!("solver.operators: unknown operator '{s}'"))),
    })
}

impl GeometryConfig {
    /// Library elements, in config order.
    pub fn elements(&self) -> Result<Vec<Element>> {
        if self.elements.is_empty() {
            return Err(CliError::Config("geometry.elements is empty".into()));
        }
        self.elements
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.build(self.n).map_err(|err| match err {
                    CliError::Core(inner) => CliError::Config(format!("geometry.elements[{i}]: {inner}")),
                    other => other,
                })
            })
            .collect()
    }

    /// Assembles the multishape, then applies any normal overrides.
    pub fn multishape(&self) -> Result<MultiShape> {
        let elements = self.elements()?;
        let count = elements.len();
        let mut flags = Vec::with_capacity(self.conditions.len());
        for c in &self.conditions {
            let [a, b] = c.elements;
            if a >= count || b >= count || a == b {
                return Err(CliError::Config(format!(
                    "geometry.conditions: invalid element pair [{a}, {b}] for {count} elements"
                )));
            }
            flags.push(ConditionFlag {
                elem_a: a,
                elem_b: b,
                condition: match c.condition {
                    ConditionKind::Match => Condition::Match,
                    ConditionKind::Wall => Condition::Wall,
                },
            });
        }
        let mut ms = build_multishape(elements, &flags)?;
        for o in &self.normal_overrides {
            ms.override_normal_at(o.point, o.normal)?;
        }
        Ok(ms)
    }
}

impl ElementSpec {
    pub fn build(&self, default_n: Option<usize>) -> Result<Element> {
        let pick = |n: Option<usize>, which: &str| {
            n.or(default_n)
                .ok_or_else(|| CliError::Config(format!("{which} not given and geometry.n unset")))
        };
        Ok(match *self {
            ElementSpec::Quad { corners, n1, n2 } => Element::quad(corners, pick(n1, "n1")?, pick(n2, "n2")?)?,
            ElementSpec::Rect { x1, x2, n1, n2 } => {
                Element::rect(x1[0], x1[1], x2[0], x2[1], pick(n1, "n1")?, pick(n2, "n2")?)?
            }
            ElementSpec::Wedge { r, theta, origin, n1, n2 } => {
                Element::wedge(r[0], r[1], theta[0], theta[1], origin, pick(n1, "n1")?, pick(n2, "n2")?)?
            }
        })
    }

    pub fn from_element(e: &Element) -> Self {
        let (n1, n2) = (Some(e.n1), Some(e.n2));
        match &e.shape {
            Shape::Quad(q) => ElementSpec::Quad { corners: *q.corners(), n1, n2 },
            Shape::Wedge(w) => ElementSpec::Wedge {
                r: [w.r_in, w.r_out],
                theta: [w.th1, w.th2],
                origin: w.origin,
                n1,
                n2,
            },
        }
    }
}

impl PhysicsConfig {
    pub fn species(&self) -> Result<SpeciesParams> {
        if self.kernel != "gaussian" {
            return Err(CliError::Config(format!(
                "physics.kernel: unknown kernel '{}' (only 'gaussian' is available)",
                self.kernel
            )));
        }
        let params = SpeciesParams {
            kappa: self.kappa.clone(),
            sigma: self.sigma.clone(),
            c_mass: self.c_mass.clone(),
        };
        params
            .validate()
            .map_err(|e| CliError::Config(format!("physics: {e}")))?;
        let n = params.n_species();
        if self.v_ext.len() != n {
            return Err(CliError::Config(format!(
                "physics.v_ext: expected {n} potentials, got {}",
                self.v_ext.len()
            )));
        }
        Ok(params)
    }

    pub fn initial(&self) -> Result<&[Profile]> {
        let n = self.c_mass.len();
        if self.initial.len() != n {
            return Err(CliError::Config(format!(
                "physics.initial: expected {n} profiles, got {}",
                self.initial.len()
            )));
        }
        Ok(&self.initial)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_specs_round_trip_through_library_elements() {
        let specs = vec![
            ElementSpec::Quad { corners: [[0.0, 0.0], [0.0, 1.0], [2.0, 1.5], [1.0, 0.0]], n1: Some(5), n2: None },
            ElementSpec::Wedge { r: [1.0, 2.0], theta: [0.0, 1.0], origin: [0.5, 0.0], n1: None, n2: Some(7) },
        ];
        for s in &specs {
            let e = s.build(Some(4)).unwrap();
            assert_eq!(ElementSpec::from_element(&e).build(None).unwrap(), e);
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let text = "[geometry]\nn = 4\nbogus = 1\n";
        let err = ScenarioConfig::from_str(text, Path::new("x.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_node_counts_are_reported() {
        let spec = ElementSpec::Rect { x1: [0.0, 1.0], x2: [0.0, 1.0], n1: None, n2: None };
        assert!(matches!(spec.build(None), Err(CliError::Config(_))));
    }
}
