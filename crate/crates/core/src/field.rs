//! Nodal fields over the global degrees of freedom of a mesh.

use crate::error::FieldError;
use crate::mesh::Mesh;

/// One scalar coefficient per global DoF.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Nodal interpolant of `f` on the mesh.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        Self {
            values: mesh.nodes().iter().map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_len(&self, expected: usize) -> Result<(), FieldError> {
        if self.values.len() != expected {
            return Err(FieldError::LengthMismatch {
                expected,
                found: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ScalarField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// `dim` scalar components sharing one mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorField {
    pub comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(ncomp: usize, len: usize) -> Self {
        Self {
            comps: (0..ncomp).map(|_| ScalarField::zeros(len)).collect(),
        }
    }

    pub fn from_comps(comps: Vec<ScalarField>) -> Self {
        Self { comps }
    }

    /// Nodal interpolant of a vector function; `f` returns a 3-vector of which
    /// the first `mesh.dim()` entries are used.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Self {
        let dim = mesh.dim();
        let mut out = Self::zeros(dim, mesh.num_dofs());
        for (i, x) in mesh.nodes().iter().enumerate() {
            let v = f(x);
            for (k, c) in out.comps.iter_mut().enumerate() {
                c.values[i] = v[k];
            }
        }
        out
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn len(&self) -> usize {
        self.comps.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self, ncomp: usize, len: usize) -> Result<(), FieldError> {
        if self.comps.len() != ncomp {
            return Err(FieldError::ComponentMismatch {
                expected: ncomp,
                found: self.comps.len(),
            });
        }
        self.comps.iter().try_for_each(|c| c.check_len(len))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(ScalarField::is_finite)
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        self.comps.iter().zip(&other.comps).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn axpy(&mut self, alpha: f64, other: &VectorField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.axpy(alpha, b);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.comps.iter_mut().for_each(|c| c.scale(alpha));
    }

    /// `a * self + b * other`
    pub fn lin_comb(&self, a: f64, other: &VectorField, b: f64) -> VectorField {
        VectorField {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(x, y)| ScalarField {
                    values: x.values.iter().zip(&y.values).map(|(u, v)| a * u + b * v).collect(),
                })
                .collect(),
        }
    }

    /// Euclidean speed at every DoF.
    pub fn magnitude(&self) -> ScalarField {
        let n = self.len();
        let mut out = vec![0.0; n];
        for c in &self.comps {
            for (o, v) in out.iter_mut().zip(&c.values) {
                *o += v * v;
            }
        }
        out.iter_mut().for_each(|v| *v = v.sqrt());
        ScalarField { values: out }
    }

    pub fn norm_inf(&self) -> f64 {
        self.magnitude().norm_inf()
    }
}
