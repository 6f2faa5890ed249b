//! First-order upwind viscosity and the stabilization terms built on it.
//!
//! Both terms are returned as weak-form residuals with the orientation of a
//! diffusion operator, so `phi · term(phi) >= 0` for the low-order term:
//!
//! * low order: `nu_e ∫ grad(w) · grad(phi)`
//! * LPS: `c_s nu_e ∫ grad(w) · (grad(phi) - g_h(phi))`
//!
//! The LPS residual penalizes the part of the gradient the continuous space
//! cannot represent. Orienting it as `grad(phi) - g_h(phi)` makes it remove
//! kinetic energy; the opposite orientation is anti-diffusive.
//! [`momentum_stabilization`] returns the negated residual, i.e. the forcing
//! that enters the right-hand side of the prediction step.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::field::{ScalarField, VectorField};
use crate::operators::Discretization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilizationMode {
    None,
    #[serde(alias = "low_order")]
    Upwind,
    Lps,
}

impl std::str::FromStr for StabilizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "upwind" | "low_order" => Ok(Self::Upwind),
            "lps" => Ok(Self::Lps),
            other => Err(format!("unknown stabilization mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizationConfig {
    pub mode: StabilizationMode,
    #[serde(default = "default_cs")]
    pub c_s: f64,
}

fn default_cs() -> f64 {
    1.0
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        Self {
            mode: StabilizationMode::Lps,
            c_s: 1.0,
        }
    }
}

impl StabilizationConfig {
    pub fn none() -> Self {
        Self {
            mode: StabilizationMode::None,
            c_s: 1.0,
        }
    }

    pub fn lps(c_s: f64) -> Self {
        Self {
            mode: StabilizationMode::Lps,
            c_s,
        }
    }

    pub fn upwind() -> Self {
        Self {
            mode: StabilizationMode::Upwind,
            c_s: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.c_s) {
            return Err(format!("c_s = {} must lie in [0, 1]", self.c_s));
        }
        Ok(())
    }
}

/// Per-element first-order upwind viscosity.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementViscosity(pub Vec<f64>);

impl ElementViscosity {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `nu_e = (h_e / p) * max_{nodes of e} |u| / 2`.
pub fn upwind_viscosity(disc: &Discretization, u: &VectorField) -> Result<ElementViscosity, FieldError> {
    u.check(disc.dim(), disc.num_dofs())?;
    let mesh = disc.mesh();
    let speed = u.magnitude();
    let p = mesh.order() as f64;
    let mut out = Vec::with_capacity(mesh.num_elems());
    for e in 0..mesh.num_elems() {
        let h = mesh.element_size(e).expect("element id in range");
        let vmax = mesh
            .elem_dofs(e)
            .iter()
            .fold(0.0f64, |m, &d| m.max(speed.values[d]));
        out.push(0.5 * (h / p) * vmax);
    }
    Ok(ElementViscosity(out))
}

/// `nu_e ∫ grad(w) · grad(phi)`
pub fn low_order_term(
    disc: &Discretization,
    phi: &ScalarField,
    nu: &ElementViscosity,
) -> Result<ScalarField, FieldError> {
    disc.apply_weighted_laplacian(phi, nu.values())
}

/// `c_s nu_e ∫ grad(w) · (grad(phi) - g_h(phi))`
pub fn lps_term(
    disc: &Discretization,
    phi: &ScalarField,
    nu: &ElementViscosity,
    c_s: f64,
) -> Result<ScalarField, FieldError> {
    if c_s == 0.0 {
        phi.check_len(disc.num_dofs())?;
        return Ok(ScalarField::zeros(disc.num_dofs()));
    }
    let g = disc.project_gradient(phi)?;
    let scaled: Vec<f64> = nu.values().iter().map(|v| c_s * v).collect();
    disc.apply_projection_difference(phi, &g, &scaled)
}

/// Stabilization forcing for every velocity component, sharing one
/// speed-based viscosity. Returned with right-hand-side sign.
pub fn momentum_stabilization(
    disc: &Discretization,
    u: &VectorField,
    cfg: &StabilizationConfig,
) -> Result<VectorField, FieldError> {
    u.check(disc.dim(), disc.num_dofs())?;
    if cfg.mode == StabilizationMode::None {
        return Ok(VectorField::zeros(disc.dim(), disc.num_dofs()));
    }
    let nu = upwind_viscosity(disc, u)?;
    let comps = u
        .comps
        .iter()
        .map(|c| {
            let mut s = match cfg.mode {
                StabilizationMode::Upwind => low_order_term(disc, c, &nu)?,
                StabilizationMode::Lps => lps_term(disc, c, &nu, cfg.c_s)?,
                StabilizationMode::None => unreachable!(),
            };
            s.scale(-1.0);
            Ok(s)
        })
        .collect::<Result<Vec<_>, FieldError>>()?;
    Ok(VectorField::from_comps(comps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::NodeSpacing;
    use crate::mesh::{build_structured_mesh, BoundaryKind, BoundaryTags};
    use std::f64::consts::PI;

    fn periodic(dim: usize, n: usize, p: usize) -> Discretization {
        let m = build_structured_mesh(
            dim,
            &vec![(0.0, 2.0 * PI); dim],
            &vec![n; dim],
            p,
            NodeSpacing::Gll,
            BoundaryTags::periodic(),
        )
        .unwrap();
        Discretization::natural(m).unwrap()
    }

    #[test]
    fn viscosity_formula() {
        let d = periodic(2, 4, 2);
        let z = VectorField::zeros(2, d.num_dofs());
        assert!(upwind_viscosity(&d, &z).unwrap().values().iter().all(|&v| v == 0.0));

        // h = 0.2, p = 4, max speed 3 -> 0.075
        let m = build_structured_mesh(1, &[(0.0, 1.0)], &[5], 4, NodeSpacing::Gll, BoundaryTags::periodic()).unwrap();
        let d = Discretization::natural(m).unwrap();
        let u = VectorField::from_fn(d.mesh(), |x| [if x[0] < 0.2 { 3.0 } else { 1.0 }, 0.0, 0.0]);
        let nu = upwind_viscosity(&d, &u).unwrap();
        assert!((nu.values()[0] - 0.075).abs() < 1e-15);

        let u2 = VectorField::from_fn(periodic(2, 4, 2).mesh(), |_| [1.0, 0.0, 0.0]);
        let a = upwind_viscosity(&periodic(2, 4, 2), &u2).unwrap();
        let u4 = VectorField::from_fn(periodic(2, 4, 4).mesh(), |_| [1.0, 0.0, 0.0]);
        let b = upwind_viscosity(&periodic(2, 4, 4), &u4).unwrap();
        assert!((a.values()[0] - 2.0 * b.values()[0]).abs() < 1e-15);
    }

    #[test]
    fn low_order_hat() {
        let m = build_structured_mesh(
            1,
            &[(0.0, 1.0)],
            &[2],
            1,
            NodeSpacing::Gll,
            BoundaryTags::uniform(BoundaryKind::DirichletWall),
        )
        .unwrap();
        let d = Discretization::natural(m).unwrap();
        let u = VectorField::from_fn(d.mesh(), |_| [1.0, 0.0, 0.0]);
        let nu = upwind_viscosity(&d, &u).unwrap();
        assert_eq!(nu.values(), &[0.25, 0.25]);
        let t = low_order_term(&d, &ScalarField::from_vec(vec![0.0, 1.0, 0.0]), &nu).unwrap();
        for (a, e) in t.values.iter().zip([-0.5, 1.0, -0.5]) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_cs_and_uniform_velocity_give_nothing() {
        let d = periodic(2, 5, 3);
        let u = VectorField::from_fn(d.mesh(), |x| [x[0].sin(), x[1].cos(), 0.0]);
        let nu = upwind_viscosity(&d, &u).unwrap();
        assert!(lps_term(&d, &u.comps[0], &nu, 0.0).unwrap().norm_inf() == 0.0);
        let uni = VectorField::from_fn(d.mesh(), |_| [1.0, 2.0, 0.0]);
        for cfg in [StabilizationConfig::none(), StabilizationConfig::upwind(), StabilizationConfig::lps(1.0)] {
            assert!(momentum_stabilization(&d, &uni, &cfg).unwrap().norm_inf() < 1e-12);
        }
    }

    #[test]
    fn c_s_range_is_validated() {
        assert!(StabilizationConfig::lps(1.5).validate().is_err());
        assert!(StabilizationConfig::lps(0.3).validate().is_ok());
    }
}
