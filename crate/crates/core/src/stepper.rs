//! Velocity-correction fractional step inside an explicit Runge–Kutta loop.
//!
//! Every stage maps `u` to `S(u)`:
//!
//! 1. predict: `u* = u + dt M_L^-1 (-C(u) + s(u))`
//! 2. pressure: `K p = -(1/dt) ∫ w div(u*) + ∫_walls w dp/dn`
//! 3. correct: `u** = u* - dt g_h(p)`
//!
//! and stages are combined in Shu–Osher form. The viscous term is integrated
//! once per step afterwards with a theta scheme on the symmetric-gradient
//! operator.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::boundary::{
    apply_velocity_dirichlet, outflow_pressure_dirichlet, poisson_boundary_term, wall_pressure_neumann,
    BoundaryData, OutflowConfig,
};
use crate::error::{Error, SolveError};
use crate::field::{ScalarField, VectorField};
use crate::linsolve::{conjugate_gradient, conjugate_gradient_constrained, CgOptions};
use crate::operators::{ConvectiveForm, Discretization};
use crate::stabilization::{momentum_stabilization, StabilizationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RkScheme {
    Euler1,
    Heun2,
    Ssprk3,
}

impl RkScheme {
    pub fn stages(self) -> usize {
        match self {
            RkScheme::Euler1 => 1,
            RkScheme::Heun2 => 2,
            RkScheme::Ssprk3 => 3,
        }
    }

    /// Extent of the stability region along the negative real axis.
    pub fn real_axis_limit(self) -> f64 {
        match self {
            RkScheme::Euler1 | RkScheme::Heun2 => 2.0,
            RkScheme::Ssprk3 => 2.512_745_326_618_34,
        }
    }

    /// Shu–Osher weights `(a, b)` for stage `k >= 1`: `u_k = a u_n + b S(u_{k-1})`.
    fn weights(self, k: usize) -> (f64, f64) {
        match (self, k) {
            (RkScheme::Heun2, 1) => (0.5, 0.5),
            (RkScheme::Ssprk3, 1) => (0.75, 0.25),
            (RkScheme::Ssprk3, 2) => (1.0 / 3.0, 2.0 / 3.0),
            _ => (0.0, 1.0),
        }
    }
}

impl std::str::FromStr for RkScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler1" | "euler" => Ok(Self::Euler1),
            "heun2" | "heun" => Ok(Self::Heun2),
            "ssprk3" => Ok(Self::Ssprk3),
            other => Err(format!("unknown RK scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeScheme {
    pub dt: f64,
    pub rk: RkScheme,
    pub t_end: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max")]
    pub cg_max_iters: usize,
    /// Largest admissible `dt max|u| p / h`.
    #[serde(default = "default_cfl_limit")]
    pub cfl_limit: f64,
    /// Implicitness of the viscous update: 1 is backward Euler, 0.5 Crank–Nicolson.
    #[serde(default = "default_theta")]
    pub diffusion_theta: f64,
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

impl TimeScheme {
    pub fn new(dt: f64, rk: RkScheme, t_end: f64) -> Self {
        Self {
            dt,
            rk,
            t_end,
            cg_tol: default_cg_tol(),
            cg_max_iters: default_cg_max(),
            cfl_limit: default_cfl_limit(),
            diffusion_theta: default_theta(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= 0.0) {
            return Err(format!("t_end = {} must be non-negative", self.t_end));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(format!("cg_tol = {} must lie in (0, 1)", self.cg_tol));
        }
        if self.cg_max_iters == 0 {
            return Err("cg_max_iters must be at least 1".into());
        }
        if !(self.diffusion_theta >= 0.5 && self.diffusion_theta <= 1.0) {
            return Err(format!("diffusion_theta = {} must lie in [0.5, 1]", self.diffusion_theta));
        }
        if !(self.cfl_limit > 0.0) {
            return Err(format!("cfl_limit = {} must be positive", self.cfl_limit));
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`, with the last one landing on it.
    pub fn num_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub nu: f64,
    pub form: ConvectiveForm,
    pub stabilization: StabilizationConfig,
    pub outflow: OutflowConfig,
    pub scheme: TimeScheme,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.nu >= 0.0) {
            return Err(format!("nu = {} must be non-negative", self.nu));
        }
        self.stabilization.validate()?;
        self.outflow.validate()?;
        self.scheme.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub u: VectorField,
    pub p: ScalarField,
}

impl FlowState {
    pub fn new(u: VectorField) -> Self {
        let n = u.len();
        Self {
            t: 0.0,
            u,
            p: ScalarField::zeros(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: f64,
    /// Summed over the RK stages.
    pub poisson_iters: usize,
    pub diffusion_iters: usize,
    /// Divergence norm of the velocity after the last correction.
    pub div_norm: f64,
    pub wall_clock: Duration,
}

pub struct Solver {
    disc: Discretization,
    bd: BoundaryData,
    cfg: SolverConfig,
    pressure_inv_diag: Vec<f64>,
    pressure_fixed: Vec<bool>,
    viscous_inv_diag: Vec<f64>,
    velocity_fixed: Vec<bool>,
}

impl Solver {
    pub fn new(disc: Discretization, bd: BoundaryData, cfg: SolverConfig) -> Result<Self, Error> {
        cfg.validate().map_err(Error::Config)?;
        let dim = disc.dim();
        let n = disc.num_dofs();
        let stiff: Vec<f64> = (0..n)
            .map(|i| (0..dim).map(|k| disc.stiffness_diagonal(k)[i]).sum())
            .collect();
        let pressure_inv_diag = stiff.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
        let pressure_fixed = bd.pressure_mask();
        let th = cfg.scheme.diffusion_theta * cfg.scheme.dt * cfg.nu;
        let m = disc.assemble_lumped_mass();
        let mut viscous_inv_diag = Vec::with_capacity(dim * n);
        for c in 0..dim {
            for i in 0..n {
                viscous_inv_diag.push(1.0 / (m[i] + th * (stiff[i] + disc.stiffness_diagonal(c)[i])));
            }
        }
        let vmask = bd.velocity_mask();
        let velocity_fixed = (0..dim).flat_map(|_| vmask.iter().copied()).collect();
        Ok(Self {
            disc,
            bd,
            cfg,
            pressure_inv_diag,
            pressure_fixed,
            viscous_inv_diag,
            velocity_fixed,
        })
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn boundary(&self) -> &BoundaryData {
        &self.bd
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn dt(&self) -> f64 {
        self.cfg.scheme.dt
    }

    fn cg_opts(&self) -> CgOptions {
        CgOptions {
            tol: self.cfg.scheme.cg_tol,
            max_iters: self.cfg.scheme.cg_max_iters,
            remove_mean: false,
        }
    }

    /// `dt max|u| p / h`, with `h` the smallest element edge.
    pub fn cfl_number(&self, u: &VectorField) -> f64 {
        let h = self.disc.mesh().elem_lengths()[..self.disc.dim()]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        self.dt() * u.norm_inf() * self.disc.mesh().order() as f64 / h
    }

    pub fn check_cfl(&self, u: &VectorField) -> Result<(), SolveError> {
        let cfl = self.cfl_number(u);
        if cfl > self.cfg.scheme.cfl_limit {
            return Err(SolveError::CflExceeded {
                cfl,
                limit: self.cfg.scheme.cfl_limit,
            });
        }
        Ok(())
    }

    /// Explicit convection plus stabilization.
    pub fn predict(&self, u: &VectorField) -> Result<VectorField, SolveError> {
        let mut rhs = momentum_stabilization(&self.disc, u, &self.cfg.stabilization)?;
        rhs.axpy(-1.0, &self.disc.convective_term(u, self.cfg.form)?);
        for c in &mut rhs.comps {
            self.disc.apply_inv_lumped(&mut c.values);
        }
        let mut star = u.clone();
        star.axpy(self.dt(), &rhs);
        apply_velocity_dirichlet(&mut star, &self.bd);
        Ok(star)
    }

    /// Pressure Poisson solve. `u_bc` is the velocity the boundary data are
    /// evaluated with; `p` holds the initial guess and receives the result.
    pub fn solve_pressure(&self, u_star: &VectorField, u_bc: &VectorField, p: &mut ScalarField) -> Result<usize, SolveError> {
        if !u_star.is_finite() {
            return Err(SolveError::Diverged {
                t: f64::NAN,
                last_good_t: f64::NAN,
            });
        }
        let dt = self.dt();
        let mut rhs = self.disc.apply_weak_rhs_divergence(u_star)?;
        rhs.scale(-1.0 / dt);
        if self.bd.has_walls() && self.cfg.nu > 0.0 {
            let flux = wall_pressure_neumann(&self.disc, &self.bd, u_bc, self.cfg.nu)?;
            rhs.axpy(1.0, &poisson_boundary_term(&self.disc, &self.bd, &flux));
        }
        let apply = |x: &[f64], out: &mut [f64]| self.disc.laplacian_into(x, out);
        let stats = if self.bd.has_outflow() {
            let values = outflow_pressure_dirichlet(&self.disc, &self.bd, u_bc, self.cfg.nu, &self.cfg.outflow)?;
            for (&d, v) in self.bd.outflow_dofs().iter().zip(values) {
                p.values[d] = v;
            }
            conjugate_gradient_constrained(
                apply,
                &rhs.values,
                &mut p.values,
                &self.pressure_fixed,
                Some(&self.pressure_inv_diag),
                &self.cg_opts(),
            )?
        } else {
            let opts = CgOptions {
                remove_mean: true,
                ..self.cg_opts()
            };
            let stats = conjugate_gradient(apply, &rhs.values, &mut p.values, Some(&self.pressure_inv_diag), &opts)?;
            let mean = self.disc.integrate(p) / self.disc.mesh().volume();
            p.values.iter_mut().for_each(|v| *v -= mean);
            stats
        };
        Ok(stats.iterations)
    }

    /// `u** = u* - dt g_h(p)`
    pub fn correct(&self, u_star: &VectorField, p: &ScalarField) -> Result<VectorField, SolveError> {
        let g = self.disc.project_gradient(p)?;
        let mut out = u_star.clone();
        out.axpy(-self.dt(), &g);
        Ok(out)
    }

    /// One stage `u -> S(u)`; returns the stage result and CG iterations.
    pub fn stage(&self, u: &VectorField, p: &mut ScalarField) -> Result<(VectorField, usize), SolveError> {
        let star = self.predict(u)?;
        let iters = self.solve_pressure(&star, u, p)?;
        Ok((self.correct(&star, p)?, iters))
    }

    /// Theta-scheme viscous update
    /// `(M + theta dt V) u = M u** - (1 - theta) dt V u**` with wall rows held.
    pub fn diffuse(&self, u: &VectorField) -> Result<(VectorField, usize), SolveError> {
        let nu = self.cfg.nu;
        if nu == 0.0 {
            let mut out = u.clone();
            apply_velocity_dirichlet(&mut out, &self.bd);
            return Ok((out, 0));
        }
        let dim = self.disc.dim();
        let n = self.disc.num_dofs();
        let theta = self.cfg.scheme.diffusion_theta;
        let dt = self.dt();
        let stacked: Vec<f64> = u.comps.iter().flat_map(|c| c.values.iter().copied()).collect();
        let mut rhs = vec![0.0; dim * n];
        let mut tmp = vec![0.0; dim * n];
        for c in 0..dim {
            self.disc.mass_into(&stacked[c * n..(c + 1) * n], &mut rhs[c * n..(c + 1) * n]);
        }
        if theta < 1.0 {
            self.disc.viscous_into(&stacked, nu, &mut tmp);
            for (r, t) in rhs.iter_mut().zip(&tmp) {
                *r -= (1.0 - theta) * dt * t;
            }
        }
        let apply = |x: &[f64], out: &mut [f64]| {
            self.disc.viscous_into(x, nu, &mut tmp);
            for c in 0..dim {
                self.disc.mass_into(&x[c * n..(c + 1) * n], &mut out[c * n..(c + 1) * n]);
            }
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += theta * dt * t;
            }
        };
        let mut x = stacked.clone();
        let mut lifted = VectorField::from_comps(
            (0..dim)
                .map(|c| ScalarField::from_vec(x[c * n..(c + 1) * n].to_vec()))
                .collect(),
        );
        apply_velocity_dirichlet(&mut lifted, &self.bd);
        for c in 0..dim {
            x[c * n..(c + 1) * n].copy_from_slice(&lifted.comps[c].values);
        }
        let stats = conjugate_gradient_constrained(
            apply,
            &rhs,
            &mut x,
            &self.velocity_fixed,
            Some(&self.viscous_inv_diag),
            &self.cg_opts(),
        )?;
        let out = VectorField::from_comps(
            (0..dim)
                .map(|c| ScalarField::from_vec(x[c * n..(c + 1) * n].to_vec()))
                .collect(),
        );
        Ok((out, stats.iterations))
    }

    /// L2 norm of the lumped projection of `div(u)`.
    pub fn divergence_norm(&self, u: &VectorField) -> Result<f64, SolveError> {
        Ok(crate::diagnostics::divergence_norm(&self.disc, u)?)
    }

    /// Advance `state` by one time step.
    pub fn step(&self, state: &mut FlowState) -> Result<StepReport, SolveError> {
        let t_next = state.t + self.dt();
        let last_good_t = state.t;
        self.step_inner(state).map_err(|e| match e {
            SolveError::Diverged { .. } => SolveError::Diverged { t: t_next, last_good_t },
            other => other,
        })
    }

    fn step_inner(&self, state: &mut FlowState) -> Result<StepReport, SolveError> {
        let start = Instant::now();
        let rk = self.cfg.scheme.rk;
        let mut poisson_iters = 0;
        let mut p = state.p.clone();
        let (mut cur, it) = self.stage(&state.u, &mut p)?;
        poisson_iters += it;
        for k in 1..rk.stages() {
            let (s, it) = self.stage(&cur, &mut p)?;
            poisson_iters += it;
            let (a, b) = rk.weights(k);
            cur = state.u.lin_comb(a, &s, b);
        }
        let (u_next, diffusion_iters) = self.diffuse(&cur)?;
        let t_next = state.t + self.dt();
        if !u_next.is_finite() || !p.is_finite() {
            return Err(SolveError::Diverged {
                t: t_next,
                last_good_t: state.t,
            });
        }
        let div_norm = self.divergence_norm(&u_next)?;
        state.u = u_next;
        state.p = p;
        state.t = t_next;
        Ok(StepReport {
            t: t_next,
            poisson_iters,
            diffusion_iters,
            div_norm,
            wall_clock: start.elapsed(),
        })
    }
}
