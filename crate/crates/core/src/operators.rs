//! Matrix-free global operators.
//!
//! Every operator is an element loop: gather nodal values, evaluate at the
//! quadrature points by sum factorization, apply the pointwise integrand,
//! contract back against the test functions and scatter-add into the global
//! vector. Only the lumped mass is stored.
//!
//! Because meshes are axis-aligned boxes the Jacobian is the same constant
//! diagonal matrix on every element: `dx_k / dxi_k = h_k / 2`.

use serde::{Deserialize, Serialize};

use crate::basis::{lagrange_values, QuadratureMode, Quadrature1D, ReferenceElement, TensorScratch};
use crate::error::{FieldError, MeshError};
use crate::field::{ScalarField, VectorField};
use crate::mesh::Mesh;

/// Form of the nonlinear convective term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvectiveForm {
    /// `div(u ⊗ u)`, differentiating the nodal interpolant of the flux.
    Conservative,
    /// `(u · grad) u`
    #[serde(alias = "non_conservative", alias = "advective")]
    NonConservative,
    /// `(u · grad) u + 1/2 (div u) u`
    #[serde(alias = "skew_symmetric")]
    Skew,
}

impl std::str::FromStr for ConvectiveForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conservative" => Ok(Self::Conservative),
            "nonconservative" | "non_conservative" | "advective" => Ok(Self::NonConservative),
            "skew" | "skew_symmetric" => Ok(Self::Skew),
            other => Err(format!("unknown convective form `{other}`")),
        }
    }
}

/// Mesh plus reference element plus the data every operator needs.
#[derive(Debug, Clone)]
pub struct Discretization {
    mesh: Mesh,
    elem: ReferenceElement,
    lumped: Vec<f64>,
    inv_lumped: Vec<f64>,
    /// Quadrature weight times Jacobian determinant, per element quadrature point.
    qw: Vec<f64>,
    /// `2 / h_k`
    metric: [f64; 3],
    det_j: f64,
    /// Per-axis diagonal of the weak Laplacian, assembled.
    stiff_diag: Vec<Vec<f64>>,
    /// Dense element stiffness matrix, kept only for small elements where it
    /// beats sum factorization.
    stiff_elem: Option<Vec<f64>>,
    dense: Option<DenseElement>,
}

/// Explicit element matrices (`nq^dim x n^dim`, row-major) for small elements.
#[derive(Debug, Clone)]
struct DenseElement {
    /// `None` when collocated.
    interp: Option<Vec<f64>>,
    /// Physical derivative per axis, metric included.
    grad: Vec<Vec<f64>>,
}

const DENSE_ELEM_MAX_NODES: usize = 64;
const DENSE_GRAD_MAX_NODES: usize = 8;

/// `out = a x` for row-major `a` with `out.len()` rows.
#[inline]
fn dense_apply(a: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(a.chunks_exact(cols)) {
        *o = row.iter().zip(x).map(|(m, v)| m * v).sum();
    }
}

/// `acc += a^T q`
#[inline]
fn dense_apply_t_add(a: &[f64], q: &[f64], acc: &mut [f64]) {
    let cols = acc.len();
    for (&qv, row) in q.iter().zip(a.chunks_exact(cols)) {
        for (o, m) in acc.iter_mut().zip(row) {
            *o += m * qv;
        }
    }
}

/// Per-call scratch space sized for one element.
struct Work {
    s: TensorScratch,
    nodal: Vec<Vec<f64>>,
    quad: Vec<Vec<f64>>,
    acc: Vec<f64>,
    tmp: Vec<f64>,
}

type ElemKernel<'a> = dyn Fn(&[f64], &mut [f64], &mut TensorScratch) + 'a;

impl Discretization {
    pub fn new(mesh: Mesh, mode: QuadratureMode) -> Result<Self, MeshError> {
        let basis = crate::basis::Basis1D::new(mesh.order(), mesh.spacing())?;
        let elem = ReferenceElement::new(basis, mode)?;
        let dim = mesh.dim();
        let h = mesh.elem_lengths();
        let mut metric = [0.0; 3];
        let mut det_j = 1.0;
        for k in 0..dim {
            metric[k] = 2.0 / h[k];
            det_j *= 0.5 * h[k];
        }
        let nq = elem.nq();
        let w = &elem.quadrature.weights;
        let nqd = nq.pow(dim as u32);
        let qw: Vec<f64> = (0..nqd)
            .map(|q| {
                let idx = [q % nq, (q / nq) % nq, q / (nq * nq)];
                (0..dim).map(|k| w[idx[k]]).product::<f64>() * det_j
            })
            .collect();
        let mut disc = Self {
            mesh,
            elem,
            lumped: Vec::new(),
            inv_lumped: Vec::new(),
            qw,
            metric,
            det_j,
            stiff_diag: Vec::new(),
            stiff_elem: None,
            dense: None,
        };
        disc.dense = disc.build_dense();
        let ones = ScalarField::from_vec(vec![1.0; disc.mesh.num_dofs()]);
        let lumped = disc.apply_mass_raw(&ones.values);
        if let Some(bad) = lumped.iter().position(|&m| !(m > 0.0)) {
            return Err(MeshError::ZeroMeasure {
                axis: 0,
                lo: bad as f64,
                hi: lumped[bad],
            });
        }
        disc.inv_lumped = lumped.iter().map(|m| 1.0 / m).collect();
        disc.lumped = lumped;
        disc.stiff_diag = disc.assemble_stiffness_diagonal();
        disc.stiff_elem = disc.dense_element_stiffness();
        Ok(disc)
    }

    /// Discretization with the quadrature rule native to the mesh's spacing.
    pub fn natural(mesh: Mesh) -> Result<Self, MeshError> {
        let mode = QuadratureMode::natural_for(mesh.spacing());
        Self::new(mesh, mode)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn element(&self) -> &ReferenceElement {
        &self.elem
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_dofs()
    }

    pub fn is_collocated(&self) -> bool {
        self.elem.collocated
    }

    /// Diagonal (lumped) mass; entry `i` is `∫ phi_i`.
    pub fn assemble_lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    pub fn inv_lumped_mass(&self) -> &[f64] {
        &self.inv_lumped
    }

    /// Per-axis pieces of the weak-Laplacian diagonal; their sum is the
    /// Jacobi preconditioner for the pressure system.
    pub fn stiffness_diagonal(&self, axis: usize) -> &[f64] {
        &self.stiff_diag[axis]
    }

    fn work(&self, nfields: usize, nquad: usize) -> Work {
        let n = self.elem.n().max(self.elem.nq());
        let dim = self.dim();
        let npe = self.mesh.nodes_per_elem();
        let nqd = self.elem.nq().pow(dim as u32);
        Work {
            s: TensorScratch::new(n, dim),
            nodal: vec![vec![0.0; npe]; nfields],
            quad: vec![vec![0.0; nqd]; nquad],
            acc: vec![0.0; npe],
            tmp: vec![0.0; npe.max(nqd)],
        }
    }

    fn nqd(&self) -> usize {
        self.elem.nq().pow(self.dim() as u32)
    }

    #[inline]
    fn gather(dofs: &[usize], src: &[f64], dst: &mut [f64]) {
        for (d, &g) in dst.iter_mut().zip(dofs) {
            *d = src[g];
        }
    }

    #[inline]
    fn scatter(dofs: &[usize], src: &[f64], dst: &mut [f64]) {
        for (s, &g) in src.iter().zip(dofs) {
            dst[g] += s;
        }
    }

    /// Physical derivative along `axis` at the quadrature points.
    fn grad_q(&self, axis: usize, nodal: &[f64], out: &mut [f64], s: &mut TensorScratch) {
        if let Some(d) = &self.dense {
            dense_apply(&d.grad[axis], nodal, out);
            return;
        }
        self.elem.grad_to_quad(self.dim(), axis, nodal, out, s);
        let m = self.metric[axis];
        out.iter_mut().for_each(|v| *v *= m);
    }

    /// Accumulate `∫ d(test)/dx_axis * q` into `acc`; `q` must already carry weights.
    fn test_grad_add(&self, axis: usize, q: &mut [f64], acc: &mut [f64], tmp: &mut [f64], s: &mut TensorScratch) {
        if let Some(d) = &self.dense {
            dense_apply_t_add(&d.grad[axis], q, acc);
            return;
        }
        let m = self.metric[axis];
        q.iter_mut().for_each(|v| *v *= m);
        let npe = acc.len();
        self.elem.quad_grad_to_nodal(self.dim(), axis, q, &mut tmp[..npe], s);
        for (a, t) in acc.iter_mut().zip(tmp.iter()) {
            *a += t;
        }
    }

    fn to_q(&self, nodal: &[f64], out: &mut [f64], s: &mut TensorScratch) {
        match &self.dense {
            Some(DenseElement { interp: Some(b), .. }) => dense_apply(b, nodal, out),
            _ => self.elem.to_quad(self.dim(), nodal, out, s),
        }
    }

    fn q_to_nodal(&self, q: &[f64], out: &mut [f64], s: &mut TensorScratch) {
        match &self.dense {
            Some(DenseElement { interp: Some(b), .. }) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                dense_apply_t_add(b, q, out);
            }
            _ => self.elem.quad_to_nodal(self.dim(), q, out, s),
        }
    }

    fn build_dense(&self) -> Option<DenseElement> {
        let npe = self.mesh.nodes_per_elem();
        if npe > DENSE_GRAD_MAX_NODES {
            return None;
        }
        let dim = self.dim();
        let nqd = self.nqd();
        let mut w = self.work(1, 1);
        let mut probe = |f: &ElemKernel| {
            let mut m = vec![0.0; nqd * npe];
            for j in 0..npe {
                w.nodal[0].iter_mut().for_each(|v| *v = 0.0);
                w.nodal[0][j] = 1.0;
                f(&w.nodal[0], &mut w.quad[0], &mut w.s);
                for q in 0..nqd {
                    m[q * npe + j] = w.quad[0][q];
                }
            }
            m
        };
        let interp = if self.elem.collocated {
            None
        } else {
            Some(probe(&|x, o, s| self.to_q(x, o, s)))
        };
        let grad = (0..dim)
            .map(|k| {
                let m = self.metric[k];
                probe(&|x, o, s| {
                    self.elem.grad_to_quad(dim, k, x, o, s);
                    o.iter_mut().for_each(|v| *v *= m);
                })
            })
            .collect();
        Some(DenseElement { interp, grad })
    }

    fn check_scalar(&self, f: &ScalarField) -> Result<(), FieldError> {
        f.check_len(self.num_dofs())
    }

    fn check_vector(&self, u: &VectorField) -> Result<(), FieldError> {
        u.check(self.dim(), self.num_dofs())
    }

    fn apply_mass_raw(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_dofs()];
        self.mass_into(phi, &mut out);
        out
    }

    /// Raw-slice consistent mass action. Overwrites `out`.
    pub fn mass_into(&self, phi: &[f64], out: &mut [f64]) {
        if self.elem.collocated && !self.lumped.is_empty() {
            for ((o, p), m) in out.iter_mut().zip(phi).zip(&self.lumped) {
                *o = p * m;
            }
            return;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut w = self.work(1, 1);
        for e in 0..self.mesh.num_elems() {
            let dofs = self.mesh.elem_dofs(e);
            Self::gather(dofs, phi, &mut w.nodal[0]);
            self.to_q(&w.nodal[0], &mut w.quad[0], &mut w.s);
            for (v, qw) in w.quad[0].iter_mut().zip(&self.qw) {
                *v *= qw;
            }
            self.q_to_nodal(&w.quad[0], &mut w.acc, &mut w.s);
            Self::scatter(dofs, &w.acc, out);
        }
    }

    /// Consistent mass action `∫ w phi`.
    pub fn apply_mass(&self, phi: &ScalarField) -> Result<ScalarField, FieldError> {
        self.check_scalar(phi)?;
        Ok(ScalarField::from_vec(self.apply_mass_raw(&phi.values)))
    }

    /// `∫ w div(u)` for every test function.
    pub fn apply_weak_rhs_divergence(&self, u: &VectorField) -> Result<ScalarField, FieldError> {
        self.check_vector(u)?;
        let dim = self.dim();
        let nqd = self.nqd();
        let mut out = vec![0.0; self.num_dofs()];
        let mut w = self.work(1, 2);
        for e in 0..self.mesh.num_elems() {
            let dofs = self.mesh.elem_dofs(e);
            w.quad[1][..nqd].iter_mut().for_each(|v| *v = 0.0);
            for k in 0..dim {
                Self::gather(dofs, &u.comps[k].values, &mut w.nodal[0]);
                self.grad_q(k, &w.nodal[0], &mut w.quad[0], &mut w.s);
                let (q0, q1) = w.quad.split_at_mut(1);
                for (d, g) in q1[0].iter_mut().zip(&q0[0]) {
                    *d += g;
                }
            }
            for (v, qw) in w.quad[1].iter_mut().zip(&self.qw) {
                *v *= qw;
            }
            self.q_to_nodal(&w.quad[1], &mut w.acc, &mut w.s);
            Self::scatter(dofs, &w.acc, &mut out);
        }
        Ok(ScalarField::from_vec(out))
    }

    /// `∫ w grad(p)` for every test function.
    pub fn apply_weak_rhs_gradient(&self, p: &ScalarField) -> Result<VectorField, FieldError> {
        self.check_scalar(p)?;
        let dim = self.dim();
        let mut out = VectorField::zeros(dim, self.num_dofs());
        let mut w = self.work(1, 1);
        for e in 0..self.mesh.num_elems() {
            let dofs = self.mesh.elem_dofs(e);
            Self::gather(dofs, &p.values, &mut w.nodal[0]);
            for k in 0..dim {
                self.grad_q(k, &w.nodal[0], &mut w.quad[0], &mut w.s);
                for (v, qw) in w.quad[0].iter_mut().zip(&self.qw) {
                    *v *= qw;
                }
                self.q_to_nodal(&w.quad[0], &mut w.acc, &mut w.s);
                Self::scatter(dofs, &w.acc, &mut out.comps[k].values);
            }
        }
        Ok(out)
    }

    /// Lumped-mass L2 projection of the gradient, `g_h(phi)`.
    pub fn project_gradient(&self, phi: &ScalarField) -> Result<VectorField, FieldError> {
        let mut g = self.apply_weak_rhs_gradient(phi)?;
        for c in &mut g.comps {
            self.apply_inv_lumped(&mut c.values);
        }
        Ok(g)
    }

    pub fn apply_inv_lumped(&self, v: &mut [f64]) {
        for (x, m) in v.iter_mut().zip(&self.inv_lumped) {
            *x *= m;
        }
    }

    /// `∫ grad(w) · grad(phi)`: symmetric positive semi-definite.
    pub fn apply_weak_laplacian(&self, phi: &ScalarField) -> Result<ScalarField, FieldError> {
        self.check_scalar(phi)?;
        let mut out = vec![0.0; self.num_dofs()];
        self.laplacian_into(&phi.values, &mut out);
        Ok(ScalarField::from_vec(out))
    }

    /// Raw-slice weak Laplacian for the iterative solvers. Overwrites `out`.
    pub fn laplacian_into(&self, phi: &[f64], out: &mut [f64]) {
        self.weighted_laplacian_into(phi, None, out);
    }

    fn weighted_laplacian_into(&self, phi: &[f64], nu_elem: Option<&[f64]>, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut w = self.work(1, 1);
        let npe = self.mesh.nodes_per_elem();
        for e in 0..self.mesh.num_elems() {
            let nu = nu_elem.map_or(1.0, |n| n[e]);
            if nu == 0.0 {
                continue;
            }
            let dofs = self.mesh.elem_dofs(e);
            Self::gather(dofs, phi, &mut w.nodal[0]);
            match &self.stiff_elem {
                Some(k) => {
                    for (i, a) in w.acc.iter_mut().enumerate() {
                        let row = &k[i * npe..(i + 1) * npe];
                        *a = nu * row.iter().zip(&w.nodal[0]).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                None => self.elem_laplacian(nu, &mut w),
            }
            Self::scatter(dofs, &w.acc, out);
        }
    }

    /// Sum-factorized element Laplacian of `w.nodal[0]` into `w.acc`.
    fn elem_laplacian(&self, nu: f64, w: &mut Work) {
        w.acc.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.dim() {
            self.grad_q(k, &w.nodal[0], &mut w.quad[0], &mut w.s);
            for (v, qw) in w.quad[0].iter_mut().zip(&self.qw) {
                *v *= qw * nu;
            }
            self.test_grad_add(k, &mut w.quad[0], &mut w.acc, &mut w.tmp, &mut w.s);
        }
    }

    fn dense_element_stiffness(&self) -> Option<Vec<f64>> {
        let npe = self.mesh.nodes_per_elem();
        if npe > DENSE_ELEM_MAX_NODES {
            return None;
        }
        let mut w = self.work(1, 1);
        let mut k = vec![0.0; npe * npe];
        for j in 0..npe {
            w.nodal[0].iter_mut().for_each(|v| *v = 0.0);
            w.nodal[0][j] = 1.0;
            self.elem_laplacian(1.0, &mut w);
            for i in 0..npe {
                k[i * npe + j] = w.acc[i];
            }
        }
        Some(k)
    }

    /// Largest eigenvalue of `M_L^-1 K` by power iteration on the symmetric
    /// form `M_L^-1/2 K M_L^-1/2`. A slight underestimate.
    pub fn max_lumped_laplacian_eigenvalue(&self, iters: usize) -> f64 {
        let n = self.num_dofs();
        let mut x: Vec<f64> = (0..n).map(|i| (1.7 * i as f64 + 0.3).sin() + if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut y = vec![0.0; n];
        let mut lambda = 0.0;
        for _ in 0..iters {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            x.iter_mut().zip(&self.inv_lumped).for_each(|(v, m)| *v *= m.sqrt() / norm);
            self.laplacian_into(&x, &mut y);
            y.iter_mut().zip(&self.inv_lumped).for_each(|(v, m)| *v *= m.sqrt());
            x.iter_mut().zip(&self.lumped).for_each(|(v, m)| *v *= m.sqrt());
            lambda = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            std::mem::swap(&mut x, &mut y);
        }
        lambda
    }

    /// `∫ nu_e grad(w) · grad(phi)` with one coefficient per element.
    pub fn apply_weighted_laplacian(&self, phi: &ScalarField, nu_elem: &[f64]) -> Result<ScalarField, FieldError> {
        self.check_scalar(phi)?;
        let mut out = vec![0.0; self.num_dofs()];
        self.weighted_laplacian_into(&phi.values, Some(nu_elem), &mut out);
        Ok(ScalarField::from_vec(out))
    }

    /// `∫ nu_e grad(w) · (grad(phi) - g)` where `g` is a nodal vector field
    /// (normally `g_h(phi)`).
    pub fn apply_projection_difference(
        &self,
        phi: &ScalarField,
        g: &VectorField,
        nu_elem: &[f64],
    ) -> Result<ScalarField, FieldError> {
        self.check_scalar(phi)?;
        self.check_vector(g)?;
        let dim = self.dim();
        let mut out = vec![0.0; self.num_dofs()];
        let mut w = self.work(2, 2);
        for e in 0..self.mesh.num_elems() {
            let nu = nu_elem[e];
            if nu == 0.0 {
                continue;
            }
            let dofs = self.mesh.elem_dofs(e);
            Self::gather(dofs, &phi.values, &mut w.nodal[0]);
            w.acc.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..dim {
                self.grad_q(k, &w.nodal[0], &mut w.quad[0], &mut w.s);
                Self::gather(dofs, &g.comps[k].values, &mut w.nodal[1]);
                self.to_q(&w.nodal[1], &mut w.quad[1], &mut w.s);
                let (q0, q1) = w.quad.split_at_mut(1);
                for ((v, gq), qw) in q0[0].iter_mut().zip(&q1[0]).zip(&self.qw) {
                    *v = (*v - gq) * qw * nu;
                }
                self.test_grad_add(k, &mut w.quad[0], &mut w.acc, &mut w.tmp, &mut w.s);
            }
            Self::scatter(dofs, &w.acc, &mut out);
        }
        Ok(ScalarField::from_vec(out))
    }

    /// Viscous operator `∫ grad(w) : nu (grad u + grad u^T)` on a stacked
    /// component-major vector of length `dim * ndofs`. Overwrites `out`.
    pub fn viscous_into(&self, u: &[f64], nu: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if nu == 0.0 {
            return;
        }
        let dim = self.dim();
        let n = self.num_dofs();
        let nqd = self.nqd();
        let mut w = self.work(1, dim * dim + 1);
        for e in 0..self.mesh.num_elems() {
            let dofs = self.mesh.elem_dofs(e);
            // grads[i * dim + j] = d u_i / d x_j
            for i in 0..dim {
                Self::gather(dofs, &u[i * n..(i + 1) * n], &mut w.nodal[0]);
                for j in 0..dim {
                    self.grad_q(j, &w.nodal[0], &mut w.quad[i * dim + j], &mut w.s);
                }
            }
            let last = dim * dim;
            for i in 0..dim {
                w.acc.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..dim {
                    for q in 0..nqd {
                        let sym = w.quad[i * dim + j][q] + w.quad[j * dim + i][q];
                        w.quad[last][q] = nu * sym * self.qw[q];
                    }
                    self.test_grad_add(j, &mut w.quad[last], &mut w.acc, &mut w.tmp, &mut w.s);
                }
                Self::scatter(dofs, &w.acc, &mut out[i * n..(i + 1) * n]);
            }
        }
    }

    /// Assembled weak residual `∫ w · L_N(u)` of the convective term.
    pub fn convective_term(&self, u: &VectorField, form: ConvectiveForm) -> Result<VectorField, FieldError> {
        self.check_vector(u)?;
        let dim = self.dim();
        let nqd = self.nqd();
        let n = self.num_dofs();
        let mut out = VectorField::zeros(dim, n);
        // quad layout: [0..dim) values, [dim..dim+dim*dim) grads (i*dim+j), then dim outputs
        let gbase = dim;
        let obase = dim + dim * dim;
        let mut w = self.work(dim + 1, obase + dim);
        for e in 0..self.mesh.num_elems() {
            let dofs = self.mesh.elem_dofs(e);
            for i in 0..dim {
                Self::gather(dofs, &u.comps[i].values, &mut w.nodal[i]);
            }
            match form {
                ConvectiveForm::NonConservative | ConvectiveForm::Skew => {
                    for i in 0..dim {
                        let (left, right) = w.quad.split_at_mut(gbase);
                        self.to_q(&w.nodal[i], &mut left[i], &mut w.s);
                        for j in 0..dim {
                            self.grad_q(j, &w.nodal[i], &mut right[i * dim + j], &mut w.s);
                        }
                    }
                    for q in 0..nqd {
                        let div: f64 = (0..dim).map(|j| w.quad[gbase + j * dim + j][q]).sum();
                        for i in 0..dim {
                            let mut f: f64 = (0..dim)
                                .map(|j| w.quad[j][q] * w.quad[gbase + i * dim + j][q])
                                .sum();
                            if form == ConvectiveForm::Skew {
                                f += 0.5 * div * w.quad[i][q];
                            }
                            w.quad[obase + i][q] = f * self.qw[q];
                        }
                    }
                }
                ConvectiveForm::Conservative => {
                    for i in 0..dim {
                        w.quad[obase + i][..nqd].iter_mut().for_each(|v| *v = 0.0);
                    }
                    let flux = dim;
                    for i in 0..dim {
                        for j in 0..dim {
                            for l in 0..w.nodal[flux].len() {
                                w.nodal[flux][l] = w.nodal[i][l] * w.nodal[j][l];
                            }
                            self.grad_q(j, &w.nodal[flux], &mut w.quad[0], &mut w.s);
                            let (head, tail) = w.quad.split_at_mut(obase);
                            for (o, g) in tail[i].iter_mut().zip(&head[0]) {
                                *o += g;
                            }
                        }
                    }
                    for i in 0..dim {
                        for (v, qw) in w.quad[obase + i].iter_mut().zip(&self.qw) {
                            *v *= qw;
                        }
                    }
                }
            }
            for i in 0..dim {
                self.q_to_nodal(&w.quad[obase + i], &mut w.acc, &mut w.s);
                Self::scatter(dofs, &w.acc, &mut out.comps[i].values);
            }
        }
        Ok(out)
    }

    /// Nodal vorticity by lumped projection of `curl(u)`. In 2D the result has
    /// the single component `omega_z`.
    pub fn curl(&self, u: &VectorField) -> Result<VectorField, FieldError> {
        let dim = self.dim();
        if dim < 2 {
            return Err(FieldError::UnsupportedDimension(dim));
        }
        self.check_vector(u)?;
        let ncomp = if dim == 2 { 1 } else { 3 };
        let nqd = self.nqd();
        let mut out = VectorField::zeros(ncomp, self.num_dofs());
        let mut w = self.work(1, dim * dim + 1);
        let last = dim * dim;
        for e in 0..self.mesh.num_elems() {
            let dofs = self.mesh.elem_dofs(e);
            for i in 0..dim {
                Self::gather(dofs, &u.comps[i].values, &mut w.nodal[0]);
                for j in 0..dim {
                    self.grad_q(j, &w.nodal[0], &mut w.quad[i * dim + j], &mut w.s);
                }
            }
            // d u_i / d x_j lives at i * dim + j
            let g = |w: &Work, i: usize, j: usize, q: usize| w.quad[i * dim + j][q];
            for c in 0..ncomp {
                for q in 0..nqd {
                    let val = match (dim, c) {
                        (2, _) => g(&w, 1, 0, q) - g(&w, 0, 1, q),
                        (_, 0) => g(&w, 2, 1, q) - g(&w, 1, 2, q),
                        (_, 1) => g(&w, 0, 2, q) - g(&w, 2, 0, q),
                        _ => g(&w, 1, 0, q) - g(&w, 0, 1, q),
                    };
                    w.quad[last][q] = val * self.qw[q];
                }
                self.q_to_nodal(&w.quad[last], &mut w.acc, &mut w.s);
                Self::scatter(dofs, &w.acc, &mut out.comps[c].values);
            }
        }
        for c in &mut out.comps {
            self.apply_inv_lumped(&mut c.values);
        }
        Ok(out)
    }

    /// `∫ f(values at q)` where `f` sees the interpolated values of all
    /// `fields` at one quadrature point.
    pub fn integrate_pointwise(&self, fields: &[&ScalarField], f: impl Fn(&[f64]) -> f64) -> f64 {
        let nf = fields.len();
        let nqd = self.nqd();
        let mut w = self.work(1, nf);
        let mut point = vec![0.0; nf];
        let mut total = 0.0;
        for e in 0..self.mesh.num_elems() {
            let dofs = self.mesh.elem_dofs(e);
            for (k, fld) in fields.iter().enumerate() {
                Self::gather(dofs, &fld.values, &mut w.nodal[0]);
                self.to_q(&w.nodal[0], &mut w.quad[k], &mut w.s);
            }
            let mut elem_sum = 0.0;
            for q in 0..nqd {
                for k in 0..nf {
                    point[k] = w.quad[k][q];
                }
                elem_sum += self.qw[q] * f(&point);
            }
            total += elem_sum;
        }
        total
    }

    /// `∫ phi` over the domain.
    pub fn integrate(&self, phi: &ScalarField) -> f64 {
        self.integrate_pointwise(&[phi], |v| v[0])
    }

    /// L2 distance between the interpolant `phi_h` and `exact`, measured with a
    /// Gauss rule of `p + 3` points per axis independent of the solver rule.
    pub fn l2_error(&self, phi: &ScalarField, exact: impl Fn(&[f64; 3]) -> f64) -> f64 {
        let dim = self.dim();
        let nodes = self.mesh.ref_nodes();
        let rule = Quadrature1D::gauss_legendre(self.mesh.order() + 3).expect("valid rule");
        let nq = rule.len();
        let b: Vec<Vec<f64>> = rule.points.iter().map(|&x| lagrange_values(nodes, x)).collect();
        let n1 = nodes.len();
        let h = self.mesh.elem_lengths();
        let ext = self.mesh.extents();
        let det: f64 = (0..dim).map(|k| 0.5 * h[k]).product();
        let sizes = [nq, if dim > 1 { nq } else { 1 }, if dim > 2 { nq } else { 1 }];
        let nsz = [n1, if dim > 1 { n1 } else { 1 }, if dim > 2 { n1 } else { 1 }];
        let mut total = 0.0;
        let mut nodal = vec![0.0; self.mesh.nodes_per_elem()];
        for e in 0..self.mesh.num_elems() {
            let ei = self.mesh.elem_index(e);
            Self::gather(self.mesh.elem_dofs(e), &phi.values, &mut nodal);
            for qk in 0..sizes[2] {
                for qj in 0..sizes[1] {
                    for qi in 0..sizes[0] {
                        let qidx = [qi, qj, qk];
                        let mut x = [0.0; 3];
                        let mut wt = det;
                        for a in 0..dim {
                            x[a] = ext[a].0 + h[a] * (ei[a] as f64 + 0.5 * (rule.points[qidx[a]] + 1.0));
                            wt *= rule.weights[qidx[a]];
                        }
                        let mut val = 0.0;
                        for k in 0..nsz[2] {
                            let bk = if dim > 2 { b[qk][k] } else { 1.0 };
                            for j in 0..nsz[1] {
                                let bj = if dim > 1 { b[qj][j] } else { 1.0 };
                                for i in 0..nsz[0] {
                                    val += nodal[i + n1 * (j + n1 * k)] * b[qi][i] * bj * bk;
                                }
                            }
                        }
                        let d = val - exact(&x);
                        total += wt * d * d;
                    }
                }
            }
        }
        total.sqrt()
    }

    fn assemble_stiffness_diagonal(&self) -> Vec<Vec<f64>> {
        let dim = self.dim();
        let n = self.elem.n();
        let nq = self.elem.nq();
        let w = &self.elem.quadrature.weights;
        let det_j = self.det_j;
        let mass_1d: Vec<f64> = (0..n)
            .map(|i| (0..nq).map(|q| w[q] * self.elem.interp[q * n + i].powi(2)).sum())
            .collect();
        let stiff_1d: Vec<f64> = (0..n)
            .map(|i| (0..nq).map(|q| w[q] * self.elem.grad[q * n + i].powi(2)).sum())
            .collect();
        let npe = self.mesh.nodes_per_elem();
        let mut out = vec![vec![0.0; self.num_dofs()]; dim];
        for (axis, diag) in out.iter_mut().enumerate() {
            let local: Vec<f64> = (0..npe)
                .map(|l| {
                    let idx = [l % n, (l / n) % n, l / (n * n)];
                    let mut v = det_j * self.metric[axis].powi(2);
                    for a in 0..dim {
                        v *= if a == axis { stiff_1d[idx[a]] } else { mass_1d[idx[a]] };
                    }
                    v
                })
                .collect();
            for e in 0..self.mesh.num_elems() {
                Self::scatter(self.mesh.elem_dofs(e), &local, diag);
            }
        }
        out
    }
}
