use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("polynomial order {0} is outside the supported range 1..=16")]
    InvalidOrder(usize),
    #[error("Newton iteration for order {order} did not converge after {iterations} iterations (last update {last_update:e})")]
    NewtonFailed {
        order: usize,
        iterations: usize,
        last_update: f64,
    },
    #[error("expected {expected} nodal values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("dimension {0} is not supported (expected 1, 2 or 3)")]
    InvalidDimension(usize),
    #[error("expected {expected} per-axis entries, found {found}")]
    AxisCount { expected: usize, found: usize },
    #[error("axis {axis} has zero or negative extent [{lo}, {hi}]")]
    ZeroMeasure { axis: usize, lo: f64, hi: f64 },
    #[error("axis {0} needs at least one element")]
    NoElements(usize),
    #[error("periodic axis {axis} has only {dofs} degrees of freedom (need at least 2)")]
    PeriodicTooCoarse { axis: usize, dofs: usize },
    #[error("conflicting boundary tags on axis {0}: periodic on one side only")]
    ConflictingTags(usize),
    #[error("element id {id} out of range (mesh has {count} elements)")]
    InvalidElement { id: usize, count: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("field has {found} values but the mesh has {expected} degrees of freedom")]
    LengthMismatch { expected: usize, found: usize },
    #[error("vector field has {found} components, expected {expected}")]
    ComponentMismatch { expected: usize, found: usize },
    #[error("operation requires dimension 2 or 3, mesh is {0}D")]
    UnsupportedDimension(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("non-finite values detected at t = {t} (last good time {last_good_t})")]
    Diverged { t: f64, last_good_t: f64 },
    #[error("CFL number {cfl:.3} exceeds the limit {limit:.3}")]
    CflExceeded { cfl: f64, limit: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Top-level error for library entry points that span several modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
