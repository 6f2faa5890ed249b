//! High-order continuous Galerkin solver for the incompressible Navier–Stokes
//! equations on structured box meshes.
//!
//! The crate is organised bottom-up:
//!
//! * [`basis`]: GLL and equispaced nodal bases, quadrature, tensor kernels.
//! * [`mesh`]: structured tensor-product meshes with periodic wrap-around.
//! * [`operators`]: matrix-free mass, gradient, divergence, Laplacian,
//!   convection and curl, plus the lumped-mass gradient projection `g_h`.
//! * [`stabilization`]: first-order upwind viscosity and the local projection
//!   stabilization (LPS) term.
//! * [`boundary`]: wall and outflow pressure conditions, velocity Dirichlet data.
//! * [`stepper`]: the velocity-correction fractional step wrapped in explicit
//!   Runge–Kutta stages.
//! * [`diagnostics`]: kinetic energy, enstrophy, dissipation and health metrics.
//! * [`app`]: benchmark cases, run configuration, output files and the CLI driver.
//!
//! ```
//! use lpsflow::prelude::*;
//! use std::f64::consts::PI;
//!
//! let mesh = build_structured_mesh(
//!     2,
//!     &[(0.0, 2.0 * PI); 2],
//!     &[8, 8],
//!     2,
//!     NodeSpacing::Gll,
//!     BoundaryTags::periodic(),
//! )?;
//! let disc = Discretization::natural(mesh)?;
//! let u = VectorField::from_fn(disc.mesh(), |x| [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.0]);
//! let ek = kinetic_energy(&disc, &u);
//! assert!((ek - 0.25).abs() < 1e-3);
//! # Ok::<(), lpsflow::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod app;
pub mod basis;
pub mod boundary;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod linsolve;
pub mod mesh;
pub mod operators;
pub mod stabilization;
pub mod stepper;

pub use error::Error;

pub mod prelude {
    pub use crate::basis::{Basis1D, NodeSpacing, QuadratureMode};
    pub use crate::boundary::{BoundaryData, OutflowConfig};
    pub use crate::diagnostics::{enstrophy_dissipation, kinetic_energy, DiagnosticsRecord};
    pub use crate::error::Error;
    pub use crate::field::{ScalarField, VectorField};
    pub use crate::mesh::{build_structured_mesh, BoundaryKind, BoundaryTags, Mesh};
    pub use crate::operators::{ConvectiveForm, Discretization};
    pub use crate::stabilization::{StabilizationConfig, StabilizationMode};
    pub use crate::stepper::{FlowState, RkScheme, Solver, SolverConfig, TimeScheme};
}

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/basis.md")]
    pub mod basis {}
    #[doc = include_str!("../../../book/src/mesh.md")]
    pub mod mesh {}
    #[doc = include_str!("../../../book/src/operators.md")]
    pub mod operators {}
    #[doc = include_str!("../../../book/src/stabilization.md")]
    pub mod stabilization {}
    #[doc = include_str!("../../../book/src/boundary.md")]
    pub mod boundary {}
    #[doc = include_str!("../../../book/src/stepper.md")]
    pub mod stepper {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    pub mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
