//! Scenario driver behind the `solver` binary.

pub mod cases;
pub mod config;
pub mod snapshot;

use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::json;

pub use cases::{init_shear_layer, init_tgv2d, init_tgv3d, manufactured_poisson_error, Tgv2dExact};
pub use config::{load_config, parse_config, preset, CaseKind, RunConfig};
pub use snapshot::{write_snapshot, SnapshotFormat};

use crate::boundary::{BoundaryData, OutflowConfig};
use crate::diagnostics::{CsvWriter, DiagnosticsRecord};
use crate::error::{Error, SolveError};
use crate::field::VectorField;
use crate::mesh::{build_structured_mesh, BoundaryTags};
use crate::operators::Discretization;
use crate::stabilization::StabilizationMode;
use crate::stepper::{FlowState, Solver, SolverConfig, TimeScheme};

/// Environment variable that replaces `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "LPSFLOW_OUTPUT_DIR";

/// Result of a time-dependent run.
#[derive(Debug)]
pub struct RunSummary {
    pub records: Vec<DiagnosticsRecord>,
    pub nu: f64,
    pub dt: f64,
    pub steps: usize,
    pub num_dofs: usize,
    pub poisson_iters: usize,
    pub diffusion_iters: usize,
    /// Set when the solver stopped before `t_end`.
    pub abort: Option<SolveError>,
    pub state: FlowState,
    pub snapshots: Vec<PathBuf>,
}

impl RunSummary {
    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }
}

/// Everything a run needs, built from a configuration.
pub struct Scenario {
    pub solver: Solver,
    pub initial: VectorField,
    pub nu: f64,
}

/// Periodic box `[0, 2pi]^dim` discretization for the configured mesh.
pub fn build_discretization(cfg: &RunConfig) -> Result<Discretization, Error> {
    let dim = cfg.mesh.dim;
    let n = cfg.mesh.elements().map_err(Error::Config)?;
    let mesh = build_structured_mesh(
        dim,
        &vec![(0.0, 2.0 * PI); dim],
        &vec![n; dim],
        cfg.mesh.p,
        cfg.mesh.spacing,
        BoundaryTags::periodic(),
    )?;
    Ok(match cfg.mesh.quadrature {
        Some(q) => Discretization::new(mesh, q)?,
        None => Discretization::natural(mesh)?,
    })
}

/// Time step from the configuration, or from `cfl_target` and the initial speed.
pub fn resolve_dt(cfg: &RunConfig, disc: &Discretization, u0: &VectorField) -> Result<f64, Error> {
    if let Some(dt) = cfg.scheme.dt {
        return Ok(dt);
    }
    let vmax = u0.norm_inf();
    if !(vmax > 0.0) {
        return Err(Error::Config("cannot derive dt from a zero initial velocity; set scheme.dt".into()));
    }
    let h = disc.mesh().elem_lengths()[..disc.dim()]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let p = disc.mesh().order() as f64;
    let dt_cfl = cfg.scheme.cfl_target * h / (p * vmax);
    if cfg.stabilization.mode == StabilizationMode::None || cfg.stabilization.c_s == 0.0 {
        return Ok(dt_cfl);
    }
    // The stabilization term is advanced explicitly; its diffusive limit
    // shrinks like p^2 relative to the convective one.
    let nu_max = cfg.stabilization.c_s * 0.5 * (h / p) * vmax;
    let lambda = disc.max_lumped_laplacian_eigenvalue(60);
    let dt_stab = STAB_DT_SAFETY * cfg.scheme.rk.real_axis_limit() / (nu_max * lambda);
    Ok(dt_cfl.min(dt_stab))
}

/// Fraction of the real-axis stability limit used by [`resolve_dt`].
pub const STAB_DT_SAFETY: f64 = 0.8;

/// Build the solver and initial condition of a time-dependent case.
pub fn build_scenario(cfg: &RunConfig) -> Result<Scenario, Error> {
    cfg.validate().map_err(Error::Config)?;
    let nu = cfg.physics.resolve_nu().map_err(Error::Config)?;
    let disc = build_discretization(cfg)?;
    let v0 = cfg.physics.v0;
    let initial = match cfg.case.kind {
        CaseKind::ShearLayer => init_shear_layer(disc.mesh(), cfg.case.delta, cfg.case.perturbation)?,
        CaseKind::Tgv2d => init_tgv2d(disc.mesh(), v0, nu)?.0,
        CaseKind::Tgv3d => init_tgv3d(disc.mesh(), v0)?,
        CaseKind::ManufacturedPoisson => {
            return Err(Error::Config("manufactured_poisson is not time dependent".into()))
        }
        CaseKind::Custom => {
            return Err(Error::Config(
                "custom cases need an initial condition from the library API (see Solver::new)".into(),
            ))
        }
    };
    let dt = resolve_dt(cfg, &disc, &initial)?;
    let s = &cfg.scheme;
    let scheme = TimeScheme {
        dt,
        rk: s.rk,
        t_end: s.t_end,
        cg_tol: s.cg_tol,
        cg_max_iters: s.cg_max_iters,
        cfl_limit: s.cfl_limit,
        diffusion_theta: s.diffusion_theta,
    };
    let solver_cfg = SolverConfig {
        nu,
        form: s.convective_form,
        stabilization: cfg.stabilization,
        outflow: cfg.outflow.unwrap_or_default(),
        scheme,
    };
    let bd = BoundaryData::new(disc.mesh());
    let solver = Solver::new(disc, bd, solver_cfg)?;
    solver.check_cfl(&initial).map_err(|e| Error::Config(e.to_string()))?;
    Ok(Scenario { solver, initial, nu })
}

/// Snapshot times `k * interval` for `k = 0..=floor(t_end / interval)`.
fn snapshot_times(t_end: f64, interval: Option<f64>) -> Vec<f64> {
    match interval {
        Some(dt) => {
            let count = (t_end / dt + 1e-9).floor() as usize + 1;
            (0..count).map(|k| k as f64 * dt).collect()
        }
        None => Vec::new(),
    }
}

/// Integrate a scenario. With `out_dir` set, diagnostics and snapshots are
/// written there as the run progresses.
pub fn simulate(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<RunSummary, Error> {
    let sc = build_scenario(cfg)?;
    let solver = &sc.solver;
    let disc = solver.discretization();
    let scheme = solver.config().scheme;
    let stab = cfg.stabilization;
    let mut state = FlowState::new(sc.initial.clone());
    let n_steps = scheme.num_steps();

    let mut csv = match out_dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            Some(CsvWriter::new(BufWriter::new(fs::File::create(d.join("diagnostics.csv"))?))?)
        }
        None => None,
    };
    let snap_times = snapshot_times(scheme.t_end, cfg.output.snapshot_interval);
    let mut next_snap = 0;
    let mut snapshots = Vec::new();
    let mut take_snapshots = |state: &FlowState, force_final: bool, snapshots: &mut Vec<PathBuf>| -> Result<(), Error> {
        let Some(d) = out_dir else { return Ok(()) };
        while next_snap < snap_times.len()
            && (state.t >= snap_times[next_snap] - 1e-9 * scheme.dt.max(1.0) || (force_final && next_snap + 1 == snap_times.len()))
        {
            let stem = format!("snapshot_{next_snap:04}");
            snapshots.extend(write_snapshot(
                disc.mesh(),
                &state.u,
                &state.p,
                &d.join("snapshots"),
                &stem,
                cfg.output.snapshot_format,
            )?);
            next_snap += 1;
        }
        Ok(())
    };

    let mut records = Vec::new();
    let mut emit = |state: &FlowState, records: &mut Vec<DiagnosticsRecord>| -> Result<(), Error> {
        let r = DiagnosticsRecord::compute(disc, &state.u, sc.nu, &stab, state.t)?;
        if let Some(w) = csv.as_mut() {
            w.write(&r)?;
        }
        records.push(r);
        Ok(())
    };
    emit(&state, &mut records)?;
    take_snapshots(&state, false, &mut snapshots)?;

    let mut poisson_iters = 0;
    let mut diffusion_iters = 0;
    let mut abort = None;
    let mut steps = 0;
    for k in 1..=n_steps {
        match solver.step(&mut state) {
            Ok(rep) => {
                poisson_iters += rep.poisson_iters;
                diffusion_iters += rep.diffusion_iters;
            }
            Err(e) => {
                abort = Some(e);
                break;
            }
        }
        steps = k;
        if k % cfg.output.cadence == 0 || k == n_steps {
            emit(&state, &mut records)?;
        }
        take_snapshots(&state, k == n_steps, &mut snapshots)?;
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }
    let summary = RunSummary {
        records,
        nu: sc.nu,
        dt: scheme.dt,
        steps,
        num_dofs: disc.num_dofs(),
        poisson_iters,
        diffusion_iters,
        abort,
        state,
        snapshots,
    };
    if let Some(d) = out_dir {
        write_manifest(cfg, &summary, d)?;
    }
    Ok(summary)
}

fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// `run.json`: the resolved configuration (reloadable with `solver run`)
/// plus derived quantities and build identifiers.
fn write_manifest(cfg: &RunConfig, s: &RunSummary, dir: &Path) -> Result<(), Error> {
    let mut resolved = cfg.clone();
    resolved.scheme.dt = Some(s.dt);
    resolved.physics.nu = Some(s.nu);
    resolved.physics.re = None;
    if resolved.outflow.is_none() {
        resolved.outflow = Some(OutflowConfig::default());
    }
    let manifest = json!({
        "config": resolved,
        "derived": {
            "nu": s.nu,
            "dt": s.dt,
            "steps": s.steps,
            "num_dofs": s.num_dofs,
            "poisson_iterations": s.poisson_iters,
            "diffusion_iterations": s.diffusion_iters,
            "final_time": s.state.t,
        },
        "status": match &s.abort {
            None => json!({"ok": true}),
            Some(e) => json!({"ok": false, "error": e.to_string()}),
        },
        "build": {
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "git": git_revision(),
        },
    });
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&manifest).expect("serializable"))?;
    Ok(())
}

/// Run the manufactured Poisson case; writes `poisson.csv` and `run.json`.
pub fn run_manufactured(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<f64, Error> {
    cfg.validate().map_err(Error::Config)?;
    let n = cfg.mesh.elements().map_err(Error::Config)?;
    let err = manufactured_poisson_error(cfg.mesh.dim, n, cfg.mesh.p, cfg.mesh.spacing, cfg.mesh.quadrature)?;
    if let Some(d) = out_dir {
        fs::create_dir_all(d)?;
        let h = 2.0 * PI / n as f64;
        fs::write(d.join("poisson.csv"), format!("h,p,l2_error\n{h:.16e},{},{err:.16e}\n", cfg.mesh.p))?;
        let manifest = json!({
            "config": cfg,
            "derived": {"l2_error": err},
            "build": {"package": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION"), "git": git_revision()},
        });
        fs::write(d.join("run.json"), serde_json::to_string_pretty(&manifest).expect("serializable"))?;
    }
    Ok(err)
}

/// Output directory: the environment override if set, else `output.dir`.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stabilization::StabilizationConfig;

    #[test]
    fn snapshot_schedule() {
        assert_eq!(snapshot_times(8.0, Some(2.0)).len(), 5);
        assert_eq!(snapshot_times(1.0, Some(0.3)).len(), 4);
        assert!(snapshot_times(1.0, None).is_empty());
    }

    #[test]
    fn dt_from_cfl() {
        let cfg = preset(CaseKind::Tgv3d);
        let disc = build_discretization(&RunConfig {
            mesh: config::MeshSection {
                dofs: Some(8),
                ..cfg.mesh.clone()
            },
            ..cfg.clone()
        })
        .unwrap();
        let u = init_tgv3d(disc.mesh(), 1.0).unwrap();
        // h = 2 pi / 4, p = 2, max |u| = 1
        let dt_cfl = 0.3 * (PI / 2.0) / 2.0;
        let plain = RunConfig {
            stabilization: StabilizationConfig::none(),
            ..cfg.clone()
        };
        assert!((resolve_dt(&plain, &disc, &u).unwrap() - dt_cfl).abs() < 1e-12);

        let dt = resolve_dt(&cfg, &disc, &u).unwrap();
        let nu_max = 0.5 * (PI / 2.0) / 2.0;
        let lambda = disc.max_lumped_laplacian_eigenvalue(60);
        assert!(dt <= dt_cfl);
        assert!(dt * nu_max * lambda <= STAB_DT_SAFETY * cfg.scheme.rk.real_axis_limit() + 1e-12);
    }

    #[test]
    fn custom_case_needs_library_api() {
        let mut cfg = preset(CaseKind::Tgv2d);
        cfg.case.kind = CaseKind::Custom;
        assert!(matches!(simulate(&cfg, None), Err(Error::Config(_))));
    }
}
