//! Wall and outflow boundary conditions.
//!
//! Walls carry a strongly imposed velocity and a rotational-form Neumann
//! datum for the pressure. Outflow faces carry a Dirichlet pressure derived
//! from a traction condition with a tanh-smoothed backflow correction; the
//! velocity there is left free.
//!
//! Where a wall meets an outflow face the shared DoFs take the wall velocity
//! and the outflow pressure.

use serde::{Deserialize, Serialize};

use crate::basis::lagrange_values;
use crate::error::FieldError;
use crate::field::{ScalarField, VectorField};
use crate::mesh::{BoundaryKind, Mesh};
use crate::operators::Discretization;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutflowConfig {
    /// Characteristic velocity.
    #[serde(rename = "U0", alias = "u0")]
    pub u0: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    0.1
}

impl Default for OutflowConfig {
    fn default() -> Self {
        Self { u0: 1.0, beta: 0.1 }
    }
}

impl OutflowConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.u0 > 0.0) {
            return Err(format!("outflow.U0 = {} must be positive", self.u0));
        }
        if !(self.beta > 0.0) {
            return Err(format!("outflow.beta = {} must be positive", self.beta));
        }
        Ok(())
    }
}

/// One non-periodic face of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub axis: usize,
    pub side: usize,
    pub kind: BoundaryKind,
    /// Unit outward normal.
    pub normal: [f64; 3],
    /// Global DoFs on the face.
    pub dofs: Vec<usize>,
}

/// Tagged boundary DoFs of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    faces: Vec<BoundaryFace>,
    wall_dofs: Vec<usize>,
    wall_values: Vec<[f64; 3]>,
    outflow_dofs: Vec<usize>,
    outflow_normals: Vec<[f64; 3]>,
    num_dofs: usize,
}

fn normalized_sum(ns: &[[f64; 3]]) -> [f64; 3] {
    let mut s = [0.0; 3];
    for n in ns {
        for k in 0..3 {
            s[k] += n[k];
        }
    }
    let len = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
    s.map(|v| v / len)
}

impl BoundaryData {
    /// Collect faces and constrained DoFs from the mesh tags. Prescribed wall
    /// velocities start at zero (no slip).
    pub fn new(mesh: &Mesh) -> Self {
        let dim = mesh.dim();
        let mut faces = Vec::new();
        for axis in 0..dim {
            if mesh.tags().is_periodic(axis) {
                continue;
            }
            for side in 0..2 {
                let mut normal = [0.0; 3];
                normal[axis] = if side == 0 { -1.0 } else { 1.0 };
                faces.push(BoundaryFace {
                    axis,
                    side,
                    kind: mesh.tags().kind(axis, side),
                    normal,
                    dofs: mesh.face_dofs(axis, side),
                });
            }
        }
        let n = mesh.num_dofs();
        let mut wall_n: Vec<Vec<[f64; 3]>> = vec![Vec::new(); n];
        let mut out_n: Vec<Vec<[f64; 3]>> = vec![Vec::new(); n];
        for f in &faces {
            let target = match f.kind {
                BoundaryKind::DirichletWall => &mut wall_n,
                BoundaryKind::Outflow => &mut out_n,
                BoundaryKind::Periodic => continue,
            };
            for &d in &f.dofs {
                target[d].push(f.normal);
            }
        }
        let wall_dofs: Vec<usize> = (0..n).filter(|&d| !wall_n[d].is_empty()).collect();
        let outflow_dofs: Vec<usize> = (0..n).filter(|&d| !out_n[d].is_empty()).collect();
        let outflow_normals = outflow_dofs.iter().map(|&d| normalized_sum(&out_n[d])).collect();
        Self {
            wall_values: vec![[0.0; 3]; wall_dofs.len()],
            faces,
            wall_dofs,
            outflow_dofs,
            outflow_normals,
            num_dofs: n,
        }
    }

    /// Prescribe the wall velocity from a function of position.
    pub fn set_wall_velocity(&mut self, mesh: &Mesh, f: impl Fn(&[f64; 3]) -> [f64; 3]) {
        for (v, &d) in self.wall_values.iter_mut().zip(&self.wall_dofs) {
            *v = f(mesh.node(d));
        }
    }

    pub fn faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    /// DoFs whose velocity is prescribed.
    pub fn wall_dofs(&self) -> &[usize] {
        &self.wall_dofs
    }

    pub fn wall_values(&self) -> &[[f64; 3]] {
        &self.wall_values
    }

    /// DoFs whose pressure is prescribed.
    pub fn outflow_dofs(&self) -> &[usize] {
        &self.outflow_dofs
    }

    pub fn outflow_normals(&self) -> &[[f64; 3]] {
        &self.outflow_normals
    }

    pub fn has_walls(&self) -> bool {
        !self.wall_dofs.is_empty()
    }

    pub fn has_outflow(&self) -> bool {
        !self.outflow_dofs.is_empty()
    }

    /// Per-DoF mask, `true` where the velocity is constrained.
    pub fn velocity_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.num_dofs];
        self.wall_dofs.iter().for_each(|&d| m[d] = true);
        m
    }

    /// Per-DoF mask, `true` where the pressure is constrained.
    pub fn pressure_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.num_dofs];
        self.outflow_dofs.iter().for_each(|&d| m[d] = true);
        m
    }
}

/// Scalar data on the DoFs of one face, aligned with `BoundaryFace::dofs`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceData {
    pub face: usize,
    pub values: Vec<f64>,
}

/// `curl(curl(u))` by two lumped projections.
pub fn double_curl(disc: &Discretization, u: &VectorField) -> Result<VectorField, FieldError> {
    let w = disc.curl(u)?;
    if disc.dim() == 2 {
        // (d omega/dy, -d omega/dx)
        let mut g = disc.project_gradient(&w.comps[0])?;
        g.comps.swap(0, 1);
        g.comps[1].scale(-1.0);
        Ok(g)
    } else {
        disc.curl(&w)
    }
}

/// Rotational pressure Neumann datum `dp/dn = -nu n · curl(curl(u))` on every
/// wall face.
pub fn wall_pressure_neumann(
    disc: &Discretization,
    bd: &BoundaryData,
    u: &VectorField,
    nu: f64,
) -> Result<Vec<FaceData>, FieldError> {
    let dim = disc.dim();
    if dim < 2 {
        return Err(FieldError::UnsupportedDimension(dim));
    }
    u.check(dim, disc.num_dofs())?;
    let walls: Vec<usize> = (0..bd.faces.len())
        .filter(|&i| bd.faces[i].kind == BoundaryKind::DirichletWall)
        .collect();
    if walls.is_empty() || nu == 0.0 {
        return Ok(walls
            .into_iter()
            .map(|i| FaceData {
                face: i,
                values: vec![0.0; bd.faces[i].dofs.len()],
            })
            .collect());
    }
    let cc = double_curl(disc, u)?;
    Ok(walls
        .into_iter()
        .map(|i| {
            let f = &bd.faces[i];
            let values = f
                .dofs
                .iter()
                .map(|&d| -nu * (0..dim).map(|k| f.normal[k] * cc.comps[k].values[d]).sum::<f64>())
                .collect();
            FaceData { face: i, values }
        })
        .collect())
}

/// `∫_face w g` accumulated over the given faces, using the element
/// quadrature rule restricted to each face.
pub fn poisson_boundary_term(disc: &Discretization, bd: &BoundaryData, flux: &[FaceData]) -> ScalarField {
    let mesh = disc.mesh();
    let dim = mesh.dim();
    let mut out = vec![0.0; mesh.num_dofs()];
    if flux.is_empty() {
        return ScalarField::from_vec(out);
    }
    let elem = disc.element();
    let nodes = &elem.basis.nodes;
    let n1 = nodes.len();
    let rule = &elem.quadrature;
    let b: Vec<Vec<f64>> = rule.points.iter().map(|&x| lagrange_values(nodes, x)).collect();
    let nq = rule.len();
    let h = mesh.elem_lengths();
    let mut global = vec![0.0; mesh.num_dofs()];
    for fd in flux {
        let face = &bd.faces[fd.face];
        for (&d, &v) in face.dofs.iter().zip(&fd.values) {
            global[d] = v;
        }
        let others: Vec<usize> = (0..dim).filter(|&k| k != face.axis).collect();
        let jac: f64 = others.iter().map(|&k| 0.5 * h[k]).product();
        for (e, local) in mesh.face_elements(face.axis, face.side) {
            let dofs = mesh.elem_dofs(e);
            let g: Vec<f64> = local.iter().map(|&l| global[dofs[l]]).collect();
            match others.len() {
                0 => out[dofs[local[0]]] += g[0],
                1 => {
                    for q in 0..nq {
                        let gq: f64 = (0..n1).map(|a| b[q][a] * g[a]).sum();
                        let wq = rule.weights[q] * jac * gq;
                        for a in 0..n1 {
                            out[dofs[local[a]]] += wq * b[q][a];
                        }
                    }
                }
                _ => {
                    for qj in 0..nq {
                        for qi in 0..nq {
                            let mut gq = 0.0;
                            for aj in 0..n1 {
                                for ai in 0..n1 {
                                    gq += b[qi][ai] * b[qj][aj] * g[ai + n1 * aj];
                                }
                            }
                            let wq = rule.weights[qi] * rule.weights[qj] * jac * gq;
                            for aj in 0..n1 {
                                for ai in 0..n1 {
                                    out[dofs[local[ai + n1 * aj]]] += wq * b[qi][ai] * b[qj][aj];
                                }
                            }
                        }
                    }
                }
            }
        }
        for &d in &face.dofs {
            global[d] = 0.0;
        }
    }
    ScalarField::from_vec(out)
}

/// Backflow switch `S0 = (1 - tanh(u_n / (U0 beta))) / 2`.
pub fn dong_smoothing(u_n: f64, cfg: &OutflowConfig) -> f64 {
    0.5 * (1.0 - (u_n / (cfg.u0 * cfg.beta)).tanh())
}

/// Pointwise outflow pressure
/// `nu n · (grad u + grad u^T) n - |u|^2 S0 / 2`.
///
/// `grad[i][j] = d u_i / d x_j`.
pub fn dong_pressure(n: &[f64; 3], u: &[f64; 3], grad: &[[f64; 3]; 3], nu: f64, s0: f64) -> f64 {
    let mut nsn = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            nsn += n[i] * (grad[i][j] + grad[j][i]) * n[j];
        }
    }
    let u2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    nu * nsn - 0.5 * u2 * s0
}

/// Normal component of the zero-traction condition
/// `(-p I + nu (grad u + grad u^T)) n = 0`, solved for `p` by forming the
/// viscous traction vector first.
pub fn traction_normal_pressure(n: &[f64; 3], grad: &[[f64; 3]; 3], nu: f64) -> f64 {
    let mut t = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i] += nu * (grad[i][j] + grad[j][i]) * n[j];
        }
    }
    t.iter().zip(n).map(|(a, b)| a * b).sum()
}

/// Nodal velocity gradients `grad[i][j][dof]` by lumped projection.
fn projected_gradients(disc: &Discretization, u: &VectorField) -> Result<Vec<VectorField>, FieldError> {
    u.comps.iter().map(|c| disc.project_gradient(c)).collect()
}

fn gather_state(u: &VectorField, grads: &[VectorField], d: usize) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut uu = [0.0; 3];
    let mut g = [[0.0; 3]; 3];
    for (i, c) in u.comps.iter().enumerate() {
        uu[i] = c.values[d];
        for (j, gj) in grads[i].comps.iter().enumerate() {
            g[i][j] = gj.values[d];
        }
    }
    (uu, g)
}

/// Dirichlet pressure on every outflow DoF, aligned with
/// [`BoundaryData::outflow_dofs`].
pub fn outflow_pressure_dirichlet(
    disc: &Discretization,
    bd: &BoundaryData,
    u: &VectorField,
    nu: f64,
    cfg: &OutflowConfig,
) -> Result<Vec<f64>, FieldError> {
    u.check(disc.dim(), disc.num_dofs())?;
    if !bd.has_outflow() {
        return Ok(Vec::new());
    }
    let grads = projected_gradients(disc, u)?;
    Ok(bd
        .outflow_dofs
        .iter()
        .zip(&bd.outflow_normals)
        .map(|(&d, n)| {
            let (uu, g) = gather_state(u, &grads, d);
            let un: f64 = (0..3).map(|k| n[k] * uu[k]).sum();
            dong_pressure(n, &uu, &g, nu, dong_smoothing(un, cfg))
        })
        .collect())
}

/// Zero-traction pressure on every outflow DoF (no backflow correction).
pub fn outflow_pressure_zero_traction(
    disc: &Discretization,
    bd: &BoundaryData,
    u: &VectorField,
    nu: f64,
) -> Result<Vec<f64>, FieldError> {
    u.check(disc.dim(), disc.num_dofs())?;
    let grads = projected_gradients(disc, u)?;
    Ok(bd
        .outflow_dofs
        .iter()
        .zip(&bd.outflow_normals)
        .map(|(&d, n)| traction_normal_pressure(n, &gather_state(u, &grads, d).1, nu))
        .collect())
}

/// Overwrite the constrained velocity DoFs with their prescribed values.
pub fn apply_velocity_dirichlet(u: &mut VectorField, bd: &BoundaryData) {
    for (&d, v) in bd.wall_dofs.iter().zip(&bd.wall_values) {
        for (k, c) in u.comps.iter_mut().enumerate() {
            c.values[d] = v[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::NodeSpacing;
    use crate::mesh::{build_structured_mesh, BoundaryTags};
    use std::f64::consts::PI;

    fn channel(n: usize, p: usize) -> Discretization {
        let tags = BoundaryTags::uniform(BoundaryKind::DirichletWall).with(0, 1, BoundaryKind::Outflow);
        let m = build_structured_mesh(2, &[(0.0, 1.0), (0.0, 1.0)], &[n, n], p, NodeSpacing::Gll, tags).unwrap();
        Discretization::natural(m).unwrap()
    }

    #[test]
    fn smoothing_values() {
        let cfg = OutflowConfig::default();
        assert_eq!(dong_smoothing(0.0, &cfg), 0.5);
        assert!((dong_smoothing(0.1, &cfg) - 0.119_202_922_022_117_57).abs() < 1e-15);
        assert!(dong_smoothing(100.0, &cfg) < 1e-15);
        assert!((dong_smoothing(-100.0, &cfg) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn corner_precedence_and_normals() {
        let d = channel(3, 2);
        let bd = BoundaryData::new(d.mesh());
        // outflow face x = 1 has 7 DoFs; its two corners are also wall DoFs
        assert_eq!(bd.outflow_dofs().len(), 7);
        let walls = bd.velocity_mask();
        let outs = bd.pressure_mask();
        let both = (0..d.num_dofs()).filter(|&i| walls[i] && outs[i]).count();
        assert_eq!(both, 2);
        for n in bd.outflow_normals() {
            assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-14);
        }
        let periodic = build_structured_mesh(2, &[(0.0, 1.0); 2], &[2, 2], 1, NodeSpacing::Gll, BoundaryTags::periodic()).unwrap();
        let bp = BoundaryData::new(&periodic);
        assert!(!bp.has_walls() && !bp.has_outflow() && bp.faces().is_empty());
    }

    #[test]
    fn boundary_term_partition_of_unity() {
        for p in 1..=4 {
            let d = channel(4, p);
            let bd = BoundaryData::new(d.mesh());
            let flux: Vec<FaceData> = (0..bd.faces().len())
                .map(|i| FaceData {
                    face: i,
                    values: vec![2.5; bd.faces()[i].dofs.len()],
                })
                .collect();
            let t = poisson_boundary_term(&d, &bd, &flux);
            // four unit faces
            assert!((t.values.iter().sum::<f64>() - 10.0).abs() < 1e-12);
            assert_eq!(poisson_boundary_term(&d, &bd, &[]).norm_inf(), 0.0);
        }
    }

    #[test]
    fn boundary_term_of_sine() {
        let mut prev = f64::INFINITY;
        for n in [2, 4, 8] {
            let m = build_structured_mesh(
                2,
                &[(0.0, PI), (0.0, PI)],
                &[n, n],
                2,
                NodeSpacing::Gll,
                BoundaryTags::uniform(BoundaryKind::DirichletWall),
            )
            .unwrap();
            let d = Discretization::natural(m).unwrap();
            let bd = BoundaryData::new(d.mesh());
            let fi = bd.faces().iter().position(|f| f.axis == 0 && f.side == 0).unwrap();
            let values = bd.faces()[fi].dofs.iter().map(|&g| d.mesh().node(g)[1].sin()).collect();
            let t = poisson_boundary_term(&d, &bd, &[FaceData { face: fi, values }]);
            let err = (t.values.iter().sum::<f64>() - 2.0).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn wall_flux_trivial_cases() {
        let d = channel(4, 3);
        let bd = BoundaryData::new(d.mesh());
        let z = VectorField::zeros(2, d.num_dofs());
        for f in wall_pressure_neumann(&d, &bd, &z, 0.1).unwrap() {
            assert!(f.values.iter().all(|&v| v == 0.0));
        }
        // rigid rotation: curl is constant, so the double curl vanishes
        let rot = VectorField::from_fn(d.mesh(), |x| [-x[1], x[0], 0.0]);
        for f in wall_pressure_neumann(&d, &bd, &rot, 0.1).unwrap() {
            assert!(f.values.iter().all(|v| v.abs() < 1e-11), "{:?}", f.values);
        }
        let m1 = build_structured_mesh(1, &[(0.0, 1.0)], &[2], 1, NodeSpacing::Gll, BoundaryTags::uniform(BoundaryKind::DirichletWall)).unwrap();
        let d1 = Discretization::natural(m1).unwrap();
        let b1 = BoundaryData::new(d1.mesh());
        assert!(wall_pressure_neumann(&d1, &b1, &VectorField::zeros(1, 3), 1.0).is_err());
    }

    #[test]
    fn outflow_pressure_examples() {
        let d = channel(3, 2);
        let bd = BoundaryData::new(d.mesh());
        let cfg = OutflowConfig::default();
        let z = VectorField::zeros(2, d.num_dofs());
        assert!(outflow_pressure_dirichlet(&d, &bd, &z, 0.1, &cfg).unwrap().iter().all(|&p| p == 0.0));
        let back = VectorField::from_fn(d.mesh(), |_| [-1.0, 0.0, 0.0]);
        let expect = -0.5 * 0.5 * (1.0 - (-1.0f64 / 0.1).tanh());
        for p in outflow_pressure_dirichlet(&d, &bd, &back, 0.0, &cfg).unwrap() {
            assert!((p - expect).abs() < 1e-14);
        }
        let strong = VectorField::from_fn(d.mesh(), |_| [10.0, 0.0, 0.0]);
        for p in outflow_pressure_dirichlet(&d, &bd, &strong, 0.0, &cfg).unwrap() {
            assert!(p.abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_dirichlet_overwrites_walls_only() {
        let d = channel(2, 2);
        let mut bd = BoundaryData::new(d.mesh());
        bd.set_wall_velocity(d.mesh(), |x| [x[1], 0.0, 0.0]);
        let mut u = VectorField::from_fn(d.mesh(), |_| [7.0, 7.0, 0.0]);
        apply_velocity_dirichlet(&mut u, &bd);
        let mask = bd.velocity_mask();
        for i in 0..d.num_dofs() {
            if mask[i] {
                assert_eq!(u.comps[0].values[i], d.mesh().node(i)[1]);
                assert_eq!(u.comps[1].values[i], 0.0);
            } else {
                assert_eq!(u.comps[0].values[i], 7.0);
            }
        }
    }
}
