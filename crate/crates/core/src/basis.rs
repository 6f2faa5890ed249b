//! One-dimensional nodal bases, quadrature rules and the tensor-product
//! reference element built from them.
//!
//! Spectral elements place both their nodes and their quadrature points on the
//! Gauss–Lobatto–Legendre (GLL) points, so interpolation to quadrature points is
//! the identity and the element mass matrix is diagonal. Standard Lagrange
//! elements use equispaced nodes and a separate quadrature rule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::BasisError;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;

/// Largest polynomial degree supported by the node generators.
pub const MAX_ORDER: usize = 16;

/// Placement of the element nodes on the reference interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeSpacing {
    /// Gauss–Lobatto–Legendre points (spectral elements).
    Gll,
    /// Uniformly spaced points (standard Lagrange elements).
    Equispaced,
}

/// Which quadrature rule an element integrates with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QuadratureMode {
    /// `p + 1` GLL points. Coincides with the nodes of a GLL basis; for
    /// equispaced bases of order 3 and up the rule is not collocated.
    Collocated,
    /// `p + 1` Gauss–Legendre points, exact to degree `2p + 1`.
    Gauss,
    /// Gauss–Legendre rule exact at least to the given degree.
    OverIntegrated { degree: usize },
}

impl QuadratureMode {
    /// The rule an element of the given spacing uses in production runs:
    /// the GLL rule of matching order for both families.
    pub fn natural_for(_spacing: NodeSpacing) -> Self {
        QuadratureMode::Collocated
    }
}

/// A 1D quadrature rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// GLL rule with `n >= 2` points.
    pub fn gauss_lobatto(n: usize) -> Result<Self, BasisError> {
        if n < 2 {
            return Err(BasisError::InvalidOrder(0));
        }
        let (points, weights) = gll_points_weights(n - 1)?;
        Ok(Self { points, weights })
    }

    /// Gauss–Legendre rule with `n >= 1` points.
    pub fn gauss_legendre(n: usize) -> Result<Self, BasisError> {
        let (points, weights) = gauss_legendre_points_weights(n)?;
        Ok(Self { points, weights })
    }
}

/// Legendre polynomials `L_0..=L_n` at `x`.
pub fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(next);
    }
    out
}

/// `L_n(x)` and `L_n'(x)`.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    // Derivative recurrence avoids the 1/(x^2 - 1) singularity at the endpoints.
    let mut l_prev = 1.0;
    let mut l = x;
    let mut d_prev = 0.0;
    let mut d = 1.0;
    for k in 2..=n {
        let kf = k as f64;
        let l_next = ((2.0 * kf - 1.0) * x * l - (kf - 1.0) * l_prev) / kf;
        let d_next = d_prev + (2.0 * kf - 1.0) * l;
        l_prev = l;
        l = l_next;
        d_prev = d;
        d = d_next;
    }
    (l, d)
}

/// GLL nodes (increasing) and weights for degree `p`.
///
/// Newton iteration on `x L_p - L_{p-1}` seeded with the Chebyshev–Gauss–Lobatto
/// points. Its fixed points are the roots of `(1 - x^2) L_p'(x)`.
pub fn gll_points_weights(p: usize) -> Result<(Vec<f64>, Vec<f64>), BasisError> {
    if p == 0 || p > MAX_ORDER {
        return Err(BasisError::InvalidOrder(p));
    }
    let n = p + 1;
    let pf = p as f64;
    let mut x: Vec<f64> = (0..n).map(|i| (PI * i as f64 / pf).cos()).collect();
    let mut last_update = f64::INFINITY;
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITERS {
        last_update = 0.0;
        for xi in x.iter_mut() {
            let leg = legendre_all(p, *xi);
            let delta = (*xi * leg[p] - leg[p - 1]) / (n as f64 * leg[p]);
            *xi -= delta;
            last_update = last_update.max(delta.abs());
        }
        if last_update <= NEWTON_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(BasisError::NewtonFailed {
            order: p,
            iterations: NEWTON_MAX_ITERS,
            last_update,
        });
    }
    x.reverse();
    // Pin the endpoints and enforce exact symmetry.
    x[0] = -1.0;
    x[p] = 1.0;
    for i in 0..n / 2 {
        let s = 0.5 * (x[p - i] - x[i]);
        x[i] = -s;
        x[p - i] = s;
    }
    if n % 2 == 1 {
        x[p / 2] = 0.0;
    }
    let w = x
        .iter()
        .map(|&xi| {
            let lp = legendre_all(p, xi)[p];
            2.0 / (pf * (pf + 1.0) * lp * lp)
        })
        .collect();
    Ok((x, w))
}

/// Gauss–Legendre nodes (increasing) and weights for `n` points.
pub fn gauss_legendre_points_weights(n: usize) -> Result<(Vec<f64>, Vec<f64>), BasisError> {
    if n == 0 || n > 4 * MAX_ORDER {
        return Err(BasisError::InvalidOrder(n));
    }
    let nf = n as f64;
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut converged = false;
        let mut delta = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITERS {
            let (l, d) = legendre_with_derivative(n, x);
            delta = l / d;
            x -= delta;
            if delta.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(BasisError::NewtonFailed {
                order: n,
                iterations: NEWTON_MAX_ITERS,
                last_update: delta.abs(),
            });
        }
        let (_, d) = legendre_with_derivative(n, x);
        points[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * d * d);
    }
    Ok((points, weights))
}

/// Values of all Lagrange polynomials on `nodes` at `x`.
pub fn lagrange_values(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| (x - xk) / (nodes[j] - xk))
                .product()
        })
        .collect()
}

/// Derivatives of all Lagrange polynomials on `nodes` at `x`.
pub fn lagrange_derivatives(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let denom: f64 = (0..n)
                .filter(|&k| k != j)
                .map(|k| nodes[j] - nodes[k])
                .product();
            let mut sum = 0.0;
            for m in (0..n).filter(|&m| m != j) {
                let prod: f64 = (0..n)
                    .filter(|&k| k != j && k != m)
                    .map(|k| x - nodes[k])
                    .product();
                sum += prod;
            }
            sum / denom
        })
        .collect()
}

/// Nodal differentiation matrix `D[i][j] = l_j'(x_i)` (row-major), built from
/// barycentric weights with the negative-sum trick on the diagonal.
pub fn differentiation_matrix(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let bary: Vec<f64> = (0..n)
        .map(|j| {
            1.0 / (0..n)
                .filter(|&k| k != j)
                .map(|k| nodes[j] - nodes[k])
                .product::<f64>()
        })
        .collect();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                d[i * n + j] = v;
                diag -= v;
            }
        }
        d[i * n + i] = diag;
    }
    d
}

/// 1D nodal Lagrange basis of degree `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis1D {
    pub order: usize,
    pub spacing: NodeSpacing,
    /// `p + 1` increasing reference coordinates, endpoints included.
    pub nodes: Vec<f64>,
    /// Weights of the `p + 1` point GLL rule.
    pub quad_weights: Vec<f64>,
    /// `D[i * (p+1) + j] = l_j'(nodes[i])`.
    pub diff_matrix: Vec<f64>,
}

impl Basis1D {
    pub fn new(order: usize, spacing: NodeSpacing) -> Result<Self, BasisError> {
        match spacing {
            NodeSpacing::Gll => gll_basis(order),
            NodeSpacing::Equispaced => equispaced_basis(order),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.order + 1
    }
}

/// Lagrange basis on the GLL points.
pub fn gll_basis(p: usize) -> Result<Basis1D, BasisError> {
    let (nodes, quad_weights) = gll_points_weights(p)?;
    let diff_matrix = differentiation_matrix(&nodes);
    Ok(Basis1D {
        order: p,
        spacing: NodeSpacing::Gll,
        nodes,
        quad_weights,
        diff_matrix,
    })
}

/// Lagrange basis on uniformly spaced points.
pub fn equispaced_basis(p: usize) -> Result<Basis1D, BasisError> {
    let (_, quad_weights) = gll_points_weights(p)?;
    let nodes: Vec<f64> = (0..=p).map(|i| -1.0 + 2.0 * i as f64 / p as f64).collect();
    let diff_matrix = differentiation_matrix(&nodes);
    Ok(Basis1D {
        order: p,
        spacing: NodeSpacing::Equispaced,
        nodes,
        quad_weights,
        diff_matrix,
    })
}

/// Tensor-product reference element: a basis paired with a quadrature rule.
///
/// `interp[q * n + j] = l_j(x_q)` and `grad[q * n + j] = l_j'(x_q)` map nodal
/// values to quadrature points along one axis. When the element is collocated
/// `interp` is the identity and kernels skip it.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub basis: Basis1D,
    pub quadrature: Quadrature1D,
    pub mode: QuadratureMode,
    pub collocated: bool,
    pub interp: Vec<f64>,
    pub interp_t: Vec<f64>,
    pub grad: Vec<f64>,
    pub grad_t: Vec<f64>,
}

impl ReferenceElement {
    pub fn new(basis: Basis1D, mode: QuadratureMode) -> Result<Self, BasisError> {
        let p = basis.order;
        let quadrature = match mode {
            QuadratureMode::Collocated => Quadrature1D::gauss_lobatto(p + 1)?,
            QuadratureMode::Gauss => Quadrature1D::gauss_legendre(p + 1)?,
            QuadratureMode::OverIntegrated { degree } => {
                Quadrature1D::gauss_legendre(degree / 2 + 1)?
            }
        };
        let collocated = quadrature.len() == basis.nodes.len()
            && quadrature
                .points
                .iter()
                .zip(&basis.nodes)
                .all(|(a, b)| (a - b).abs() < 1e-14);
        let n = basis.nodes.len();
        let nq = quadrature.len();
        let mut interp = vec![0.0; nq * n];
        let mut grad = vec![0.0; nq * n];
        for (q, &x) in quadrature.points.iter().enumerate() {
            if collocated {
                interp[q * n + q] = 1.0;
                grad[q * n..(q + 1) * n].copy_from_slice(&basis.diff_matrix[q * n..(q + 1) * n]);
            } else {
                interp[q * n..(q + 1) * n].copy_from_slice(&lagrange_values(&basis.nodes, x));
                grad[q * n..(q + 1) * n].copy_from_slice(&lagrange_derivatives(&basis.nodes, x));
            }
        }
        let interp_t = transpose(&interp, nq, n);
        let grad_t = transpose(&grad, nq, n);
        Ok(Self {
            basis,
            quadrature,
            mode,
            collocated,
            interp,
            interp_t,
            grad,
            grad_t,
        })
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.basis.nodes.len()
    }

    /// Quadrature points per axis.
    pub fn nq(&self) -> usize {
        self.quadrature.len()
    }

    /// Reference-coordinate gradient of the interpolant at the quadrature
    /// points. Output is component-major: `out[k * nq^dim + q]` holds `d/dxi_k`.
    pub fn eval_tensor_gradient(&self, dim: usize, nodal: &[f64]) -> Result<Vec<f64>, BasisError> {
        let n = self.n();
        let expected = n.pow(dim as u32);
        if nodal.len() != expected {
            return Err(BasisError::ShapeMismatch {
                expected,
                found: nodal.len(),
            });
        }
        let nqd = self.nq().pow(dim as u32);
        let mut out = vec![0.0; dim * nqd];
        let mut scratch = TensorScratch::new(n.max(self.nq()), dim);
        for k in 0..dim {
            self.grad_to_quad(dim, k, nodal, &mut out[k * nqd..(k + 1) * nqd], &mut scratch);
        }
        Ok(out)
    }

    pub(crate) fn to_quad(&self, dim: usize, nodal: &[f64], out: &mut [f64], s: &mut TensorScratch) {
        if self.collocated {
            out.copy_from_slice(nodal);
            return;
        }
        let m = (&self.interp[..], self.nq(), self.n());
        tensor_apply(dim, [Some(m), Some(m), Some(m)], self.n(), nodal, out, s);
    }

    pub(crate) fn grad_to_quad(
        &self,
        dim: usize,
        axis: usize,
        nodal: &[f64],
        out: &mut [f64],
        s: &mut TensorScratch,
    ) {
        let b = if self.collocated {
            None
        } else {
            Some((&self.interp[..], self.nq(), self.n()))
        };
        let mut mats = [b, b, b];
        mats[axis] = Some((&self.grad[..], self.nq(), self.n()));
        tensor_apply(dim, mats, self.n(), nodal, out, s);
    }

    pub(crate) fn quad_to_nodal(&self, dim: usize, qvals: &[f64], out: &mut [f64], s: &mut TensorScratch) {
        if self.collocated {
            out.copy_from_slice(qvals);
            return;
        }
        let m = (&self.interp_t[..], self.n(), self.nq());
        tensor_apply(dim, [Some(m), Some(m), Some(m)], self.nq(), qvals, out, s);
    }

    pub(crate) fn quad_grad_to_nodal(
        &self,
        dim: usize,
        axis: usize,
        qvals: &[f64],
        out: &mut [f64],
        s: &mut TensorScratch,
    ) {
        let b = if self.collocated {
            None
        } else {
            Some((&self.interp_t[..], self.n(), self.nq()))
        };
        let mut mats = [b, b, b];
        mats[axis] = Some((&self.grad_t[..], self.n(), self.nq()));
        tensor_apply(dim, mats, self.nq(), qvals, out, s);
    }
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

/// Ping-pong buffers for successive 1D contractions.
#[derive(Debug, Clone)]
pub(crate) struct TensorScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl TensorScratch {
    pub(crate) fn new(n_max: usize, dim: usize) -> Self {
        let len = n_max.pow(dim as u32);
        Self {
            a: vec![0.0; len],
            b: vec![0.0; len],
        }
    }
}

/// `(row-major matrix, rows, cols)`
type Matrix<'a> = (&'a [f64], usize, usize);
type AxisMatrix<'a> = Option<Matrix<'a>>;

/// Apply one (rows x cols) matrix per axis to a cube of side `n_in`. `None`
/// means identity along that axis.
fn tensor_apply(
    dim: usize,
    mats: [AxisMatrix<'_>; 3],
    n_in: usize,
    input: &[f64],
    out: &mut [f64],
    s: &mut TensorScratch,
) {
    let mut shape = [1usize; 3];
    for sh in shape.iter_mut().take(dim) {
        *sh = n_in;
    }
    let mut active: [(usize, Matrix<'_>); 3] = [(0, (&[], 0, 0)); 3];
    let mut count = 0;
    for (ax, m) in mats.iter().enumerate().take(dim) {
        if let Some(m) = m {
            active[count] = (ax, *m);
            count += 1;
        }
    }
    if count == 0 {
        out.copy_from_slice(input);
        return;
    }
    let last = count - 1;
    let mut src = Buf::Input;
    for (idx, &(axis, (mat, rows, cols))) in active[..count].iter().enumerate() {
        debug_assert_eq!(cols, shape[axis]);
        let len_out: usize = (0..3).map(|k| if k == axis { rows } else { shape[k] }).product();
        if idx == last {
            let from: &[f64] = match src {
                Buf::Input => input,
                Buf::A => &s.a,
                Buf::B => &s.b,
            };
            apply_axis(mat, rows, cols, from, shape, axis, &mut out[..len_out]);
        } else {
            src = match src {
                Buf::Input => {
                    apply_axis(mat, rows, cols, input, shape, axis, &mut s.a[..len_out]);
                    Buf::A
                }
                Buf::A => {
                    apply_axis(mat, rows, cols, &s.a, shape, axis, &mut s.b[..len_out]);
                    Buf::B
                }
                Buf::B => {
                    apply_axis(mat, rows, cols, &s.b, shape, axis, &mut s.a[..len_out]);
                    Buf::A
                }
            };
        }
        shape[axis] = rows;
    }
}

#[derive(Clone, Copy)]
enum Buf {
    Input,
    A,
    B,
}

fn apply_axis(
    mat: &[f64],
    rows: usize,
    cols: usize,
    input: &[f64],
    shape: [usize; 3],
    axis: usize,
    out: &mut [f64],
) {
    let mut oshape = shape;
    oshape[axis] = rows;
    let istr = [1, shape[0], shape[0] * shape[1]];
    let ostr = [1, oshape[0], oshape[0] * oshape[1]];
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let is = istr[axis];
    let os = ostr[axis];
    for ib in 0..shape[b] {
        for ia in 0..shape[a] {
            let ibase = ia * istr[a] + ib * istr[b];
            let obase = ia * ostr[a] + ib * ostr[b];
            for r in 0..rows {
                let row = &mat[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for (c, &m) in row.iter().enumerate() {
                    acc += m * input[ibase + c * is];
                }
                out[obase + r * os] = acc;
            }
        }
    }
}
