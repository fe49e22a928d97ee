//! TOML run configuration: schema, `--set` overrides, and construction of
//! the solver objects. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use voxelpde::grid::{AxisBc, BcSide, BoundarySpec, GridSpec, VoxelFields};
use voxelpde::inverse::{ForwardModel, InverseProblem, Observation, ParamSpec};
use voxelpde::preset;
use voxelpde::problem::{
    AllenCahn, AllenCahnNoCurvature, BoundaryFlux, CahnHilliard, Coefficient, Diffusion, Forcing,
    GrayScott, MultiPhase, Problem, SmoothedBoundary,
};
use voxelpde::stepper::{RunOptions, StepperKind, StepperSpec};

/// A configuration error keyed to the offending config path.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<voxelpde::Error> for ConfigError {
    fn from(e: voxelpde::Error) -> Self {
        ConfigError(e.to_string())
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub bc: BcConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub initial: toml::Table,
    pub stepper: StepperConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<InverseConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    #[serde(default)]
    pub origin: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcConfig {
    pub x: AxisBcConfig,
    pub y: AxisBcConfig,
    pub z: AxisBcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisBcConfig {
    /// `"periodic"` or `"zero-flux"` on both sides.
    Both(SideKeyword),
    /// Separate sides, e.g. `{ lo = { dirichlet = 1.0 }, hi = "zero-flux" }`.
    Sides { lo: SideConfig, hi: SideConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SideKeyword {
    Periodic,
    ZeroFlux,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SideConfig {
    Keyword(SideKeyword),
    Dirichlet { dirichlet: f64 },
    Flux { flux: f64 },
}

impl SideConfig {
    fn to_side(&self) -> BcSide {
        match self {
            SideConfig::Keyword(SideKeyword::Periodic) => BcSide::Periodic,
            SideConfig::Keyword(SideKeyword::ZeroFlux) => BcSide::ZeroFlux,
            SideConfig::Dirichlet { dirichlet } => BcSide::Dirichlet(*dirichlet),
            SideConfig::Flux { flux } => BcSide::Flux(*flux),
        }
    }
}

impl AxisBcConfig {
    fn to_axis(&self) -> AxisBc {
        match self {
            AxisBcConfig::Both(SideKeyword::Periodic) => AxisBc::periodic(),
            AxisBcConfig::Both(SideKeyword::ZeroFlux) => AxisBc::zero_flux(),
            AxisBcConfig::Sides { lo, hi } => AxisBc { lo: lo.to_side(), hi: hi.to_side() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    Diffusion {
        d: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        forcing: Option<f64>,
    },
    GrayScott {
        d_a: f64,
        d_b: f64,
        feed: f64,
        kill: f64,
    },
    CahnHilliard {
        gamma0: f64,
        eps: f64,
        d0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m0: Option<f64>,
    },
    AllenCahn {
        gamma0: f64,
        eps: f64,
        mobility: f64,
    },
    AllenCahnNocurv {
        gamma0: f64,
        eps: f64,
        mobility: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
    },
    Multiphase {
        gamma0: f64,
        eps: f64,
        mobility: Vec<Vec<f64>>,
    },
    SmoothedBoundary {
        d: f64,
        #[serde(default = "default_psi")]
        psi: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        j_n: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        psi_min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        forcing: Option<f64>,
    },
}

fn default_psi() -> String {
    "psi".into()
}

impl ProblemConfig {
    pub fn build(&self) -> ConfigResult<Box<dyn Problem>> {
        Ok(match self.clone() {
            ProblemConfig::Diffusion { d, forcing } => {
                let mut p = Diffusion::constant(d)?;
                if let Some(f) = forcing {
                    p = p.with_forcing(Forcing::Constant(f));
                }
                Box::new(p)
            }
            ProblemConfig::GrayScott { d_a, d_b, feed, kill } => {
                Box::new(GrayScott::new(d_a, d_b, feed, kill)?)
            }
            ProblemConfig::CahnHilliard { gamma0, eps, d0, m0 } => {
                let mut p = CahnHilliard::new(gamma0, eps, d0)?;
                if let Some(m0) = m0 {
                    p = p.with_stabilizer_mobility(m0);
                }
                Box::new(p)
            }
            ProblemConfig::AllenCahn { gamma0, eps, mobility } => {
                Box::new(AllenCahn::new(gamma0, eps, mobility)?)
            }
            ProblemConfig::AllenCahnNocurv { gamma0, eps, mobility, eta } => {
                let mut p = AllenCahnNoCurvature::new(gamma0, eps, mobility)?;
                if let Some(eta) = eta {
                    p = p.with_grad_floor(eta);
                }
                Box::new(p)
            }
            ProblemConfig::Multiphase { gamma0, eps, mobility } => {
                Box::new(MultiPhase::new(gamma0, eps, mobility)?)
            }
            ProblemConfig::SmoothedBoundary { d, psi, j_n, psi_min, forcing } => {
                let mut p = SmoothedBoundary::new(Coefficient::Constant(d), d, &psi)?;
                if let Some(j) = j_n {
                    p = p.with_boundary_flux(BoundaryFlux::Constant(j));
                }
                if let Some(pm) = psi_min {
                    p.psi_min = pm;
                }
                if let Some(f) = forcing {
                    p = p.with_forcing(Forcing::Constant(f));
                }
                Box::new(p)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub kind: StepperKindConfig,
    pub dt: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepperKindConfig {
    Euler,
    Imex,
    Etd1,
}

impl From<StepperKindConfig> for StepperKind {
    fn from(k: StepperKindConfig) -> Self {
        match k {
            StepperKindConfig::Euler => StepperKind::Euler,
            StepperKindConfig::Imex => StepperKind::Imex,
            StepperKindConfig::Etd1 => StepperKind::Etd1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Field-dump cadence in steps; 0 writes only the final state.
    #[serde(default)]
    pub cadence: usize,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default = "default_metrics_every")]
    pub metrics_every: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Vtk]
}

fn default_metrics_every() -> usize {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            cadence: 0,
            formats: default_formats(),
            metrics_every: default_metrics_every(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Vtk,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseConfig {
    pub params: Vec<InverseParamConfig>,
    pub observations: Vec<ObservationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseParamConfig {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub init: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub t: f64,
    /// Raw volume; the sidecar `<raw>.json` supplies grid and field name.
    pub raw: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

/// Parses config text, applies `--set key=value` overrides, deserializes.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> ConfigResult<RunConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| ConfigError(format!("config parse error: {e}")))?;
    let mut value = toml::Value::Table(table);
    for (key, raw) in overrides {
        apply_override(&mut value, key, raw)?;
    }
    let config: RunConfig =
        value.try_into().map_err(|e| ConfigError(format!("config error: {e}")))?;
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> ConfigResult<()> {
    if !(config.stepper.dt > 0.0) {
        return Err(ConfigError(format!(
            "stepper.dt must be > 0, got {}",
            config.stepper.dt
        )));
    }
    if config.output.metrics_every == 0 {
        return Err(ConfigError("output.metrics_every must be ≥ 1".into()));
    }
    Ok(())
}

fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> ConfigResult<()> {
    let parsed = parse_override_value(raw);
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("--set {key}: \"{}\" is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(ConfigError(format!("--set needs a key, got \"{key}\"")))
}

/// `--set` values accept any TOML literal; unparseable input is a string.
fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    if let Ok(table) = wrapped.parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

/// Re-emits the effective config as TOML.
pub fn print_config(config: &RunConfig) -> ConfigResult<String> {
    toml::to_string_pretty(config).map_err(|e| ConfigError(format!("config serialize error: {e}")))
}

pub fn build_grid(config: &RunConfig) -> ConfigResult<GridSpec> {
    Ok(GridSpec::with_origin(config.grid.dims, config.grid.spacing, config.grid.origin)?)
}

pub fn build_bc(config: &RunConfig) -> ConfigResult<BoundarySpec> {
    Ok(BoundarySpec::new([
        config.bc.x.to_axis(),
        config.bc.y.to_axis(),
        config.bc.z.to_axis(),
    ])?)
}

pub fn build_stepper(config: &RunConfig) -> ConfigResult<StepperSpec> {
    let spec = StepperSpec::new(config.stepper.kind.into(), config.stepper.dt, config.stepper.steps)?
        .with_sampling(config.output.metrics_every);
    Ok(spec)
}

/// Field initialization: constant, raw volume, or a named seeded preset.
fn init_field(
    vf: &mut VoxelFields,
    name: &str,
    spec: &toml::Value,
    config_dir: &Path,
) -> ConfigResult<()> {
    let path = format!("initial.{name}");
    if let Some(c) = spec.as_float() {
        vf.add_uniform(name, c)?;
        return Ok(());
    }
    if let Some(c) = spec.as_integer() {
        vf.add_uniform(name, c as f64)?;
        return Ok(());
    }
    let table = spec
        .as_table()
        .ok_or_else(|| ConfigError(format!("{path}: expected a number or a table")))?;
    if let Some(c) = table.get("constant") {
        let v = c
            .as_float()
            .or_else(|| c.as_integer().map(|i| i as f64))
            .ok_or_else(|| ConfigError(format!("{path}.constant must be a number")))?;
        vf.add_uniform(name, v)?;
        return Ok(());
    }
    if let Some(raw) = table.get("raw") {
        let rel = raw
            .as_str()
            .ok_or_else(|| ConfigError(format!("{path}.raw must be a path string")))?;
        let full = config_dir.join(rel);
        let loaded = voxelpde::io::read_raw_with_sidecar(&full)
            .map_err(|e| ConfigError(format!("{path}: cannot read {}: {e}", full.display())))?;
        let grid = *vf.grid();
        if loaded.grid().dims != grid.dims {
            return Err(ConfigError(format!(
                "{path}: raw volume dims {:?} do not match grid {:?}",
                loaded.grid().dims,
                grid.dims
            )));
        }
        let source = loaded.names().next().map(str::to_string).unwrap_or_default();
        vf.add_from(name, loaded.field(&source)?.to_vec())?;
        return Ok(());
    }
    let preset_name = table
        .get("preset")
        .and_then(|p| p.as_str())
        .ok_or_else(|| ConfigError(format!("{path}: expected constant=, raw=, or preset=")))?;
    let get = |key: &str| -> ConfigResult<f64> {
        table
            .get(key)
            .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
            .ok_or_else(|| ConfigError(format!("{path}.{key} missing or not a number")))
    };
    match preset_name {
        "spinodal-noise" => {
            let seed = table
                .get("seed")
                .and_then(|v| v.as_integer())
                .ok_or_else(|| ConfigError(format!("{path}.seed missing or not an integer")))?;
            preset::spinodal_noise(vf, name, get("mean")?, get("amplitude")?, seed as u64)?;
        }
        "sphere" => {
            let center = table
                .get("center")
                .and_then(|v| v.as_array())
                .and_then(|a| {
                    let vals: Vec<f64> = a
                        .iter()
                        .filter_map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)))
                        .collect();
                    <[f64; 3]>::try_from(vals).ok()
                })
                .ok_or_else(|| ConfigError(format!("{path}.center must be [x, y, z]")))?;
            preset::sphere(vf, name, center, get("radius")?, get("eps")?)?;
        }
        "slab" => {
            let axis = match table.get("normal").and_then(|v| v.as_str()) {
                Some("x") => 0,
                Some("y") => 1,
                Some("z") => 2,
                _ => return Err(ConfigError(format!("{path}.normal must be \"x\", \"y\" or \"z\""))),
            };
            preset::slab(vf, name, axis, get("position")?, get("eps")?)?;
        }
        other => {
            return Err(ConfigError(format!(
                "{path}: unknown preset \"{other}\" (spinodal-noise, sphere, slab)"
            )))
        }
    }
    Ok(())
}

/// Builds the field container from the `[initial]` section and checks the
/// problem's roster.
pub fn build_fields(
    config: &RunConfig,
    problem_name: &str,
    required: &[String],
    config_dir: &Path,
) -> ConfigResult<VoxelFields> {
    let grid = build_grid(config)?;
    let mut vf = VoxelFields::create(grid);
    for (name, spec) in config.initial.iter() {
        init_field(&mut vf, name, spec, config_dir)?;
    }
    for required in required {
        if !vf.contains(required) {
            return Err(ConfigError(format!(
                "initial: problem \"{problem_name}\" needs field \"{required}\" (add [initial.{required}])"
            )));
        }
    }
    Ok(vf)
}

/// Assembles the inverse problem from the `[inverse]` section.
pub fn build_inverse(config: &RunConfig, config_dir: &Path) -> ConfigResult<(InverseProblem, Vec<f64>)> {
    let inv = config
        .inverse
        .as_ref()
        .ok_or_else(|| ConfigError("fit needs an [inverse] section".into()))?;
    if inv.params.is_empty() {
        return Err(ConfigError("inverse.params must not be empty".into()));
    }

    let mut params = Vec::new();
    let mut p0 = Vec::new();
    for p in &inv.params {
        let mut spec = ParamSpec::new(&p.name, p.lo, p.hi)?;
        if let Some(scale) = p.scale {
            spec = spec.with_scale(scale);
        }
        params.push(spec);
        p0.push(p.init);
    }

    let mut observations = Vec::new();
    for obs in &inv.observations {
        let full = config_dir.join(&obs.raw);
        let loaded = voxelpde::io::read_raw_with_sidecar(&full).map_err(|e| {
            ConfigError(format!("inverse.observations: cannot read {}: {e}", full.display()))
        })?;
        let field = obs
            .field
            .clone()
            .or_else(|| loaded.names().next().map(str::to_string))
            .ok_or_else(|| ConfigError("observation sidecar names no field".into()))?;
        let data = loaded.field(&field)?.to_vec();
        observations.push(Observation { t: obs.t, field, data, mask: None });
    }

    let problem_config = config.problem.clone();
    let names: Vec<String> = inv.params.iter().map(|p| p.name.clone()).collect();
    let build_problem = move |values: &[f64]| -> voxelpde::Result<Box<dyn Problem>> {
        let mut problem = problem_config
            .build()
            .map_err(|e| voxelpde::Error::InvalidParam(e.to_string()))?;
        for (name, value) in names.iter().zip(values) {
            problem.set_param(name, *value)?;
        }
        Ok(problem)
    };

    let config_owned = config.clone();
    let config_dir_owned = config_dir.to_path_buf();
    let (problem_name, required) = {
        let p = config.problem.build()?;
        (p.name().to_string(), p.required())
    };
    let initial_fields = move || -> voxelpde::Result<VoxelFields> {
        build_fields(&config_owned, &problem_name, &required, &config_dir_owned)
            .map_err(|e| voxelpde::Error::InvalidParam(e.to_string()))
    };

    let model = ForwardModel {
        build_problem: Box::new(build_problem),
        initial_fields: Box::new(initial_fields),
        bc: build_bc(config)?,
        stepper: build_stepper(config)?,
        options: RunOptions::default(),
    };
    Ok((InverseProblem { model, params, observations }, p0))
}
