//! Benchmark initial conditions and the manufactured Poisson problem.

use std::f64::consts::PI;

use crate::basis::{NodeSpacing, QuadratureMode};
use crate::error::Error;
use crate::field::{ScalarField, VectorField};
use crate::linsolve::{conjugate_gradient, CgOptions};
use crate::mesh::{build_structured_mesh, BoundaryTags, Mesh};
use crate::operators::Discretization;

fn require_periodic_box(mesh: &Mesh, dim: usize, what: &str) -> Result<(), Error> {
    if mesh.dim() != dim {
        return Err(Error::Config(format!("{what} needs a {dim}D mesh, got {}D", mesh.dim())));
    }
    if !mesh.is_fully_periodic() {
        return Err(Error::Config(format!("{what} needs a fully periodic mesh")));
    }
    for (k, &(a, b)) in mesh.extents().iter().enumerate().take(dim) {
        if a.abs() > 1e-12 || (b - 2.0 * PI).abs() > 1e-12 {
            return Err(Error::Config(format!("{what} needs [0, 2pi] along axis {k}, got [{a}, {b}]")));
        }
    }
    Ok(())
}

/// Doubly periodic shear layer of thickness `delta` with a sinusoidal
/// cross-stream perturbation of amplitude `eps`.
pub fn init_shear_layer(mesh: &Mesh, delta: f64, eps: f64) -> Result<VectorField, Error> {
    require_periodic_box(mesh, 2, "the shear layer")?;
    Ok(VectorField::from_fn(mesh, |x| [shear_layer_u(x[1], delta), eps * x[0].sin(), 0.0]))
}

/// Streamwise profile of the shear layer.
pub fn shear_layer_u(y: f64, delta: f64) -> f64 {
    if y <= PI {
        ((y - PI / 2.0) / delta).tanh()
    } else {
        ((3.0 * PI / 2.0 - y) / delta).tanh()
    }
}

/// Three-dimensional Taylor–Green vortex.
pub fn init_tgv3d(mesh: &Mesh, v0: f64) -> Result<VectorField, Error> {
    require_periodic_box(mesh, 3, "the 3D Taylor-Green vortex")?;
    Ok(VectorField::from_fn(mesh, |x| {
        [
            v0 * x[0].sin() * x[1].cos() * x[2].cos(),
            -v0 * x[0].cos() * x[1].sin() * x[2].cos(),
            0.0,
        ]
    }))
}

/// Exact decaying 2D Taylor–Green solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tgv2dExact {
    pub v0: f64,
    pub nu: f64,
}

impl Tgv2dExact {
    pub fn velocity(&self, x: &[f64; 3], t: f64) -> [f64; 3] {
        let f = self.v0 * (-2.0 * self.nu * t).exp();
        [f * x[0].sin() * x[1].cos(), -f * x[0].cos() * x[1].sin(), 0.0]
    }

    pub fn pressure(&self, x: &[f64; 3], t: f64) -> f64 {
        let f = self.v0 * self.v0 * (-4.0 * self.nu * t).exp();
        0.25 * f * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos())
    }

    /// Volume-averaged kinetic energy.
    pub fn kinetic_energy(&self, t: f64) -> f64 {
        0.25 * self.v0 * self.v0 * (-4.0 * self.nu * t).exp()
    }
}

pub fn init_tgv2d(mesh: &Mesh, v0: f64, nu: f64) -> Result<(VectorField, Tgv2dExact), Error> {
    require_periodic_box(mesh, 2, "the 2D Taylor-Green vortex")?;
    let exact = Tgv2dExact { v0, nu };
    Ok((VectorField::from_fn(mesh, |x| exact.velocity(x, 0.0)), exact))
}

/// Solve `-lap p = f` on the periodic box `[0, 2pi]^dim` with
/// `p = prod sin(x_k)` and return the L2 error of the discrete solution.
pub fn manufactured_poisson_error(
    dim: usize,
    elems: usize,
    order: usize,
    spacing: NodeSpacing,
    quadrature: Option<QuadratureMode>,
) -> Result<f64, Error> {
    let mesh = build_structured_mesh(
        dim,
        &vec![(0.0, 2.0 * PI); dim],
        &vec![elems; dim],
        order,
        spacing,
        BoundaryTags::periodic(),
    )?;
    let disc = match quadrature {
        Some(q) => Discretization::new(mesh, q)?,
        None => Discretization::natural(mesh)?,
    };
    let exact = |x: &[f64; 3]| (0..dim).map(|k| x[k].sin()).product::<f64>();
    let f = ScalarField::from_fn(disc.mesh(), |x| dim as f64 * exact(x));
    let rhs = disc.apply_mass(&f)?;
    let n = disc.num_dofs();
    let diag: Vec<f64> = (0..n)
        .map(|i| 1.0 / (0..dim).map(|k| disc.stiffness_diagonal(k)[i]).sum::<f64>())
        .collect();
    let mut p = vec![0.0; n];
    let opts = CgOptions {
        tol: 1e-13,
        max_iters: 20 * n,
        remove_mean: true,
    };
    conjugate_gradient(|x, out| disc.laplacian_into(x, out), &rhs.values, &mut p, Some(&diag), &opts)?;
    let mut p = ScalarField::from_vec(p);
    let mean = disc.integrate(&p) / disc.mesh().volume();
    p.values.iter_mut().for_each(|v| *v -= mean);
    Ok(disc.l2_error(&p, exact))
}
