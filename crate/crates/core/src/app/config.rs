//! Run configuration: preset defaults, TOML files and `--set` overrides,
//! merged in that order.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::app::snapshot::SnapshotFormat;
use crate::basis::{NodeSpacing, QuadratureMode};
use crate::boundary::OutflowConfig;
use crate::error::Error;
use crate::operators::ConvectiveForm;
use crate::stabilization::StabilizationConfig;
use crate::stepper::RkScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    ShearLayer,
    Tgv2d,
    Tgv3d,
    ManufacturedPoisson,
    Custom,
}

impl CaseKind {
    pub const PRESETS: [CaseKind; 4] = [
        CaseKind::ShearLayer,
        CaseKind::Tgv2d,
        CaseKind::Tgv3d,
        CaseKind::ManufacturedPoisson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseKind::ShearLayer => "shear_layer",
            CaseKind::Tgv2d => "tgv2d",
            CaseKind::Tgv3d => "tgv3d",
            CaseKind::ManufacturedPoisson => "manufactured_poisson",
            CaseKind::Custom => "custom",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::PRESETS.into_iter().chain([CaseKind::Custom]).find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub kind: CaseKind,
    /// Shear-layer thickness.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Shear-layer cross-stream perturbation amplitude.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

fn default_delta() -> f64 {
    PI / 15.0
}
fn default_perturbation() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub dim: usize,
    /// Elements per axis. Exactly one of `n` and `dofs` must be given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// DoFs per axis on the periodic box; must be a multiple of `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dofs: Option<usize>,
    pub p: usize,
    pub spacing: NodeSpacing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureMode>,
}

impl MeshSection {
    pub fn elements(&self) -> Result<usize, String> {
        match (self.n, self.dofs) {
            (Some(n), None) => Ok(n),
            (None, Some(d)) if self.p > 0 && d % self.p == 0 => Ok(d / self.p),
            (None, Some(d)) => Err(format!("mesh.dofs = {d} is not a multiple of mesh.p = {}", self.p)),
            (Some(_), Some(_)) => Err("give only one of mesh.n and mesh.dofs".into()),
            (None, None) => Err("mesh.n or mesh.dofs is required".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, rename = "Re", alias = "re", skip_serializing_if = "Option::is_none")]
    pub re: Option<f64>,
    #[serde(default = "one", rename = "V0", alias = "v0")]
    pub v0: f64,
    #[serde(default = "one", rename = "L0", alias = "l0")]
    pub l0: f64,
}

fn one() -> f64 {
    1.0
}

impl PhysicsSection {
    /// Kinematic viscosity, from `nu` or from `Re = V0 L0 / nu`.
    pub fn resolve_nu(&self) -> Result<f64, String> {
        let from_re = self.re.map(|re| self.v0 * self.l0 / re);
        let nu = match (self.nu, from_re) {
            (Some(nu), Some(r)) => {
                if (nu - r).abs() > 1e-12 * nu.abs().max(r.abs()) {
                    return Err(format!("physics.nu = {nu} disagrees with V0 L0 / Re = {r}"));
                }
                nu
            }
            (Some(nu), None) => nu,
            (None, Some(r)) => r,
            (None, None) => return Err("physics.nu or physics.Re is required".into()),
        };
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(format!("viscosity {nu} must be finite and non-negative"));
        }
        Ok(nu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    /// Fixed step; when absent it is derived from `cfl_target`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_cfl_target")]
    pub cfl_target: f64,
    pub rk: RkScheme,
    pub t_end: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max")]
    pub cg_max_iters: usize,
    #[serde(default = "default_cfl_limit")]
    pub cfl_limit: f64,
    #[serde(default = "default_theta")]
    pub diffusion_theta: f64,
    pub convective_form: ConvectiveForm,
}

fn default_cfl_target() -> f64 {
    0.3
}
fn default_cg_tol() -> f64 {
    1e-8
}
fn default_cg_max() -> usize {
    2000
}
fn default_cfl_limit() -> f64 {
    1.0
}
fn default_theta() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Steps between diagnostics rows; `t = 0` and the final time are always written.
    #[serde(default = "one_usize")]
    pub cadence: usize,
    /// Simulated time between snapshots; none when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<f64>,
    #[serde(default = "default_format")]
    pub snapshot_format: SnapshotFormat,
}

fn default_dir() -> String {
    "output".into()
}
fn one_usize() -> usize {
    1
}
fn default_format() -> SnapshotFormat {
    SnapshotFormat::Vtk
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            cadence: 1,
            snapshot_interval: None,
            snapshot_format: default_format(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionSection {
    /// Requested worker count. Runs are executed serially; the value is
    /// validated and echoed so manifests stay comparable.
    #[serde(default = "one_usize")]
    pub workers: usize,
}

impl Default for ExecutionSection {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseSection,
    pub mesh: MeshSection,
    pub physics: PhysicsSection,
    pub scheme: SchemeSection,
    pub stabilization: StabilizationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outflow: Option<OutflowConfig>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub execution: ExecutionSection,
}

impl RunConfig {
    /// Cross-field checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=3).contains(&self.mesh.dim) {
            return Err(format!("mesh.dim = {} must be 1, 2 or 3", self.mesh.dim));
        }
        if self.mesh.p == 0 {
            return Err("mesh.p must be at least 1".into());
        }
        self.mesh.elements()?;
        self.physics.resolve_nu()?;
        if let Some(dt) = self.scheme.dt {
            if !(dt > 0.0) {
                return Err(format!("scheme.dt = {dt} must be positive"));
            }
        }
        if !(self.scheme.cfl_target > 0.0) {
            return Err("scheme.cfl_target must be positive".into());
        }
        self.stabilization.validate()?;
        if let Some(o) = &self.outflow {
            o.validate()?;
        }
        if self.output.cadence == 0 {
            return Err("output.cadence must be at least 1".into());
        }
        if let Some(s) = self.output.snapshot_interval {
            if !(s > 0.0) {
                return Err("output.snapshot_interval must be positive".into());
            }
        }
        if self.execution.workers == 0 {
            return Err("execution.workers must be at least 1".into());
        }
        let expected_dim = match self.case.kind {
            CaseKind::ShearLayer | CaseKind::Tgv2d => Some(2),
            CaseKind::Tgv3d => Some(3),
            _ => None,
        };
        if let Some(d) = expected_dim {
            if d != self.mesh.dim {
                return Err(format!("case {} needs mesh.dim = {d}", self.case.kind.name()));
            }
        }
        Ok(())
    }
}

/// Default parameters of a named case, as a TOML table.
pub fn preset_table(kind: CaseKind) -> Table {
    let text = match kind {
        CaseKind::ShearLayer => {
            r#"
[case]
kind = "shear_layer"
delta = 0.20943951023931953
perturbation = 0.05

[mesh]
dim = 2
dofs = 60
p = 1
spacing = "gll"

[physics]
nu = 0.0

[scheme]
dt = 5e-3
rk = "ssprk3"
t_end = 8.0
convective_form = "skew"

[stabilization]
mode = "lps"
c_s = 1.0

[output]
cadence = 10
snapshot_interval = 2.0
snapshot_format = "vtk"
"#
        }
        CaseKind::Tgv2d => {
            r#"
[case]
kind = "tgv2d"

[mesh]
dim = 2
n = 16
p = 4
spacing = "gll"

[physics]
nu = 0.01

[scheme]
dt = 0.01
rk = "heun2"
t_end = 1.0
convective_form = "skew"

[stabilization]
mode = "none"

[output]
cadence = 10
snapshot_interval = 0.5
"#
        }
        CaseKind::Tgv3d => {
            r#"
[case]
kind = "tgv3d"

[mesh]
dim = 3
dofs = 64
p = 2
spacing = "gll"

[physics]
Re = 1600.0
V0 = 1.0
L0 = 1.0

[scheme]
cfl_target = 0.3
rk = "ssprk3"
t_end = 20.0
convective_form = "skew"

[stabilization]
mode = "lps"
c_s = 1.0

[output]
cadence = 5
"#
        }
        CaseKind::ManufacturedPoisson | CaseKind::Custom => {
            r#"
[case]
kind = "manufactured_poisson"

[mesh]
dim = 2
n = 8
p = 2
spacing = "gll"

[physics]
nu = 0.0

[scheme]
dt = 1.0
rk = "euler1"
t_end = 0.0
convective_form = "skew"

[stabilization]
mode = "none"
"#
        }
    };
    let mut t: Table = text.parse().expect("preset tables are valid TOML");
    if kind == CaseKind::Custom {
        t["case"]["kind"] = Value::String("custom".into());
    }
    t
}

/// Recursively overlay `top` onto `base`.
pub fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Apply one `section.key=value` override. The value is read as a TOML
/// literal when possible and as a bare string otherwise.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), Error> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form section.key=value")))?;
    let path: Vec<&str> = path.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{assignment}` has an empty key")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    };
    let mut cur = table;
    for key in &path[..path.len() - 1] {
        let entry = cur
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{assignment}`: `{key}` is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

fn from_table(table: Table) -> Result<RunConfig, Error> {
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate().map_err(Error::Config)?;
    Ok(cfg)
}

/// Resolve a configuration from file text plus overrides. The file's
/// `case.kind` selects the preset it is layered on.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, Error> {
    let file: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut overlay = Table::new();
    merge(&mut overlay, file);
    for o in overrides {
        apply_override(&mut overlay, o)?;
    }
    let kind_name = overlay
        .get("case")
        .and_then(|c| c.get("kind"))
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Config("missing `case.kind`".into()))?
        .to_string();
    let kind = CaseKind::from_name(&kind_name).ok_or_else(|| {
        Error::Config(format!(
            "unknown case.kind `{kind_name}` (expected one of shear_layer, tgv2d, tgv3d, manufactured_poisson, custom)"
        ))
    })?;
    let mut table = preset_table(kind);
    // A mesh size given by the user replaces the preset's, whichever form it takes.
    if let (Some(Value::Table(user)), Some(Value::Table(base))) = (overlay.get("mesh"), table.get_mut("mesh")) {
        if user.contains_key("n") || user.contains_key("dofs") {
            base.remove("n");
            base.remove("dofs");
        }
    }
    merge(&mut table, overlay);
    from_table(table)
}

/// Load a TOML config, or the `config` object of a `run.json` manifest.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = json.get("config").unwrap_or(&json);
        let toml_text = toml::to_string(&serde_json::from_value::<Table>(cfg.clone()).map_err(|e| Error::Config(e.to_string()))?)
            .map_err(|e| Error::Config(e.to_string()))?;
        return parse_config(&toml_text, overrides);
    }
    parse_config(&text, overrides)
}

/// The preset of a case as a fully resolved configuration.
pub fn preset(kind: CaseKind) -> RunConfig {
    from_table(preset_table(kind)).expect("presets are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for k in CaseKind::PRESETS {
            let c = preset(k);
            assert_eq!(c.case.kind, k);
        }
        let s = preset(CaseKind::ShearLayer);
        assert!((s.case.delta - PI / 15.0).abs() < 1e-15);
        assert_eq!(s.case.perturbation, 0.05);
        assert_eq!(s.scheme.dt, Some(5e-3));
        let t = preset(CaseKind::Tgv3d);
        assert!((t.physics.resolve_nu().unwrap() - 1.0 / 1600.0).abs() < 1e-18);
        assert_eq!(t.scheme.t_end, 20.0);
        assert!(t.output.snapshot_interval.is_none());
    }

    #[test]
    fn file_and_overrides_layer_on_preset() {
        let text = "[case]\nkind = \"tgv2d\"\n[mesh]\np = 3\n";
        let c = parse_config(text, &["scheme.dt=0.02".into(), "stabilization.mode=lps".into()]).unwrap();
        assert_eq!(c.mesh.p, 3);
        assert_eq!(c.mesh.n, Some(16));
        assert_eq!(c.scheme.dt, Some(0.02));
        assert_eq!(c.stabilization.mode, crate::stabilization::StabilizationMode::Lps);
    }

    #[test]
    fn user_mesh_size_replaces_preset_form() {
        let c = parse_config("[case]\nkind = \"tgv3d\"\n[mesh]\nn = 8\n", &[]).unwrap();
        assert_eq!((c.mesh.n, c.mesh.dofs), (Some(8), None));
        let c = parse_config("[case]\nkind = \"tgv2d\"\n", &["mesh.dofs=32".into()]).unwrap();
        assert_eq!((c.mesh.n, c.mesh.dofs), (None, Some(32)));
        assert!(parse_config("[case]\nkind = \"tgv2d\"\n[mesh]\nn = 4\ndofs = 8\n", &[]).is_err());
    }

    #[test]
    fn config_errors_name_the_problem() {
        let bad = parse_config("[case]\nkind = \"tgv2d\"\n[mesh]\nbogus = 1\n", &[]).unwrap_err();
        assert!(bad.to_string().contains("bogus"), "{bad}");
        let syntax = parse_config("[case\nkind=1", &[]).unwrap_err();
        assert!(syntax.to_string().contains("line"), "{syntax}");
        assert!(parse_config("[case]\nkind = \"nope\"\n", &[]).is_err());
        let re = parse_config("[case]\nkind = \"tgv3d\"\n[physics]\nnu = 0.1\n", &[]).unwrap_err();
        assert!(re.to_string().contains("disagrees"), "{re}");
        assert!(parse_config("[case]\nkind = \"tgv2d\"\n", &["novalue".into()]).is_err());
    }

    #[test]
    fn override_values_are_typed() {
        let mut t = Table::new();
        apply_override(&mut t, "a.b=3").unwrap();
        apply_override(&mut t, "a.c=hello").unwrap();
        apply_override(&mut t, "a.d=\"quoted\"").unwrap();
        assert_eq!(t["a"]["b"].as_integer(), Some(3));
        assert_eq!(t["a"]["c"].as_str(), Some("hello"));
        assert_eq!(t["a"]["d"].as_str(), Some("quoted"));
    }
}
