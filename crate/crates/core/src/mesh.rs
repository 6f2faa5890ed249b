//! Structured tensor-product meshes on axis-aligned boxes.
//!
//! Global degrees of freedom are numbered lexicographically with `x` fastest,
//! i.e. `id = ix + nx * (iy + ny * iz)`. On periodic axes the node at the upper
//! bound is identified with the node at the lower bound, so such an axis holds
//! `n * p` DoFs instead of `n * p + 1`.

use serde::{Deserialize, Serialize};

use crate::basis::{Basis1D, NodeSpacing};
use crate::error::MeshError;

/// Boundary condition attached to one face of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Periodic,
    DirichletWall,
    Outflow,
}

/// Low (`0`) or high (`1`) side of an axis.
pub type Side = usize;

/// Boundary kinds per axis and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryTags {
    pub faces: [[BoundaryKind; 2]; 3],
}

impl BoundaryTags {
    pub fn periodic() -> Self {
        Self {
            faces: [[BoundaryKind::Periodic; 2]; 3],
        }
    }

    pub fn uniform(kind: BoundaryKind) -> Self {
        Self {
            faces: [[kind; 2]; 3],
        }
    }

    pub fn with(mut self, axis: usize, side: Side, kind: BoundaryKind) -> Self {
        self.faces[axis][side] = kind;
        self
    }

    pub fn kind(&self, axis: usize, side: Side) -> BoundaryKind {
        self.faces[axis][side]
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.faces[axis][0] == BoundaryKind::Periodic
    }
}

impl Default for BoundaryTags {
    fn default() -> Self {
        Self::periodic()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    extents: [(f64, f64); 3],
    elems_per_axis: [usize; 3],
    order: usize,
    spacing: NodeSpacing,
    tags: BoundaryTags,
    ref_nodes: Vec<f64>,
    dofs_per_axis: [usize; 3],
    /// Global coordinate of each DoF index along each axis.
    axis_coords: [Vec<f64>; 3],
    /// Element edge length per axis.
    elem_len: [f64; 3],
    node_coords: Vec<[f64; 3]>,
    elem_to_dofs: Vec<usize>,
    nodes_per_elem: usize,
}

/// Build a structured mesh of `elems_per_axis` elements of degree `order`.
///
/// `extents` and `elems_per_axis` must each have `dim` entries. Unused axes of
/// node coordinates are zero.
pub fn build_structured_mesh(
    dim: usize,
    extents: &[(f64, f64)],
    elems_per_axis: &[usize],
    order: usize,
    spacing: NodeSpacing,
    tags: BoundaryTags,
) -> Result<Mesh, MeshError> {
    if !(1..=3).contains(&dim) {
        return Err(MeshError::InvalidDimension(dim));
    }
    for len in [extents.len(), elems_per_axis.len()] {
        if len != dim {
            return Err(MeshError::AxisCount {
                expected: dim,
                found: len,
            });
        }
    }
    let basis = Basis1D::new(order, spacing)?;
    let p = order;

    let mut ext = [(0.0, 0.0); 3];
    let mut ne = [1usize; 3];
    let mut dofs = [1usize; 3];
    let mut elem_len = [0.0; 3];
    let mut axis_coords: [Vec<f64>; 3] = [vec![0.0], vec![0.0], vec![0.0]];
    for axis in 0..dim {
        let (lo, hi) = extents[axis];
        if !(hi - lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
            return Err(MeshError::ZeroMeasure { axis, lo, hi });
        }
        let n = elems_per_axis[axis];
        if n == 0 {
            return Err(MeshError::NoElements(axis));
        }
        let periodic = tags.faces[axis][0] == BoundaryKind::Periodic;
        if periodic != (tags.faces[axis][1] == BoundaryKind::Periodic) {
            return Err(MeshError::ConflictingTags(axis));
        }
        let count = if periodic { n * p } else { n * p + 1 };
        if periodic && count < 2 {
            return Err(MeshError::PeriodicTooCoarse { axis, dofs: count });
        }
        let h = (hi - lo) / n as f64;
        let mut coords = vec![0.0; count];
        for e in 0..n {
            for (j, &xi) in basis.nodes.iter().enumerate() {
                let idx = e * p + j;
                if idx < count {
                    coords[idx] = lo + h * (e as f64 + 0.5 * (xi + 1.0));
                }
            }
        }
        ext[axis] = (lo, hi);
        ne[axis] = n;
        dofs[axis] = count;
        elem_len[axis] = h;
        axis_coords[axis] = coords;
    }
    for axis in dim..3 {
        if tags.faces[axis][0] != tags.faces[axis][1] {
            return Err(MeshError::ConflictingTags(axis));
        }
    }

    let total: usize = dofs.iter().product();
    let mut node_coords = vec![[0.0; 3]; total];
    for iz in 0..dofs[2] {
        for iy in 0..dofs[1] {
            for ix in 0..dofs[0] {
                let id = ix + dofs[0] * (iy + dofs[1] * iz);
                let c = &mut node_coords[id];
                c[0] = axis_coords[0][ix];
                if dim > 1 {
                    c[1] = axis_coords[1][iy];
                }
                if dim > 2 {
                    c[2] = axis_coords[2][iz];
                }
            }
        }
    }

    let n1 = p + 1;
    let npe = n1.pow(dim as u32);
    let local = [n1, if dim > 1 { n1 } else { 1 }, if dim > 2 { n1 } else { 1 }];
    let nelem: usize = ne.iter().product();
    let mut elem_to_dofs = Vec::with_capacity(nelem * npe);
    for ez in 0..ne[2] {
        for ey in 0..ne[1] {
            for ex in 0..ne[0] {
                let e = [ex, ey, ez];
                for k in 0..local[2] {
                    for j in 0..local[1] {
                        for i in 0..local[0] {
                            let l = [i, j, k];
                            let mut g = [0usize; 3];
                            for axis in 0..dim {
                                g[axis] = (e[axis] * p + l[axis]) % dofs[axis];
                            }
                            elem_to_dofs.push(g[0] + dofs[0] * (g[1] + dofs[1] * g[2]));
                        }
                    }
                }
            }
        }
    }

    Ok(Mesh {
        dim,
        extents: ext,
        elems_per_axis: ne,
        order,
        spacing,
        tags,
        ref_nodes: basis.nodes,
        dofs_per_axis: dofs,
        axis_coords,
        elem_len,
        node_coords,
        elem_to_dofs,
        nodes_per_elem: npe,
    })
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn spacing(&self) -> NodeSpacing {
        self.spacing
    }

    pub fn tags(&self) -> &BoundaryTags {
        &self.tags
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents[..self.dim]
    }

    pub fn elems_per_axis(&self) -> &[usize] {
        &self.elems_per_axis[..self.dim]
    }

    pub fn dofs_per_axis(&self) -> &[usize] {
        &self.dofs_per_axis[..self.dim]
    }

    pub fn num_dofs(&self) -> usize {
        self.node_coords.len()
    }

    pub fn num_elems(&self) -> usize {
        self.elems_per_axis.iter().product()
    }

    pub fn nodes_per_elem(&self) -> usize {
        self.nodes_per_elem
    }

    /// Reference node positions on `[-1, 1]` along one axis.
    pub fn ref_nodes(&self) -> &[f64] {
        &self.ref_nodes
    }

    pub fn node(&self, dof: usize) -> &[f64; 3] {
        &self.node_coords[dof]
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.node_coords
    }

    /// Coordinates of the DoF grid lines along one axis.
    pub fn axis_coords(&self, axis: usize) -> &[f64] {
        &self.axis_coords[axis]
    }

    pub fn elem_dofs(&self, elem: usize) -> &[usize] {
        &self.elem_to_dofs[elem * self.nodes_per_elem..(elem + 1) * self.nodes_per_elem]
    }

    /// Per-axis element edge lengths (all elements share them).
    pub fn elem_lengths(&self) -> [f64; 3] {
        self.elem_len
    }

    /// Element size `h^e`: the smallest edge length of the element.
    pub fn element_size(&self, elem: usize) -> Result<f64, MeshError> {
        let count = self.num_elems();
        if elem >= count {
            return Err(MeshError::InvalidElement { id: elem, count });
        }
        Ok(self.elem_len[..self.dim]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min))
    }

    /// Element grid index `(ex, ey, ez)` of an element id.
    pub fn elem_index(&self, elem: usize) -> [usize; 3] {
        let n = self.elems_per_axis;
        [elem % n[0], (elem / n[0]) % n[1], elem / (n[0] * n[1])]
    }

    pub fn elem_volume(&self) -> f64 {
        self.elem_len[..self.dim].iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.extents[..self.dim].iter().map(|(a, b)| b - a).product()
    }

    pub fn is_fully_periodic(&self) -> bool {
        (0..self.dim).all(|a| self.tags.is_periodic(a))
    }

    /// DoF grid index `(ix, iy, iz)` of a global id.
    pub fn dof_index(&self, dof: usize) -> [usize; 3] {
        let n = self.dofs_per_axis;
        [dof % n[0], (dof / n[0]) % n[1], dof / (n[0] * n[1])]
    }

    /// Global ids of the DoFs lying on one face of the box (non-periodic axes).
    pub fn face_dofs(&self, axis: usize, side: Side) -> Vec<usize> {
        let target = if side == 0 { 0 } else { self.dofs_per_axis[axis] - 1 };
        (0..self.num_dofs())
            .filter(|&d| self.dof_index(d)[axis] == target)
            .collect()
    }

    /// Elements touching a face of the box, with the local face-node indices
    /// (lexicographic over the remaining axes).
    pub fn face_elements(&self, axis: usize, side: Side) -> Vec<(usize, Vec<usize>)> {
        let n1 = self.order + 1;
        let target_elem = if side == 0 { 0 } else { self.elems_per_axis[axis] - 1 };
        let target_local = if side == 0 { 0 } else { self.order };
        let local_shape = [
            n1,
            if self.dim > 1 { n1 } else { 1 },
            if self.dim > 2 { n1 } else { 1 },
        ];
        let mut local = Vec::new();
        for k in 0..local_shape[2] {
            for j in 0..local_shape[1] {
                for i in 0..local_shape[0] {
                    if [i, j, k][axis] == target_local {
                        local.push(i + local_shape[0] * (j + local_shape[1] * k));
                    }
                }
            }
        }
        (0..self.num_elems())
            .filter(|&e| self.elem_index(e)[axis] == target_elem)
            .map(|e| (e, local.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn periodic_box(dim: usize, n: usize, p: usize) -> Mesh {
        build_structured_mesh(
            dim,
            &vec![(0.0, 2.0 * PI); dim],
            &vec![n; dim],
            p,
            NodeSpacing::Gll,
            BoundaryTags::periodic(),
        )
        .unwrap()
    }

    #[test]
    fn shear_layer_grid_counts() {
        let m = periodic_box(2, 30, 1);
        assert_eq!(m.num_dofs(), 900);
        let m = periodic_box(2, 60, 1);
        assert_eq!(m.dofs_per_axis(), &[60, 60]);
    }

    #[test]
    fn single_linear_element() {
        let m = build_structured_mesh(
            1,
            &[(0.0, 1.0)],
            &[1],
            1,
            NodeSpacing::Gll,
            BoundaryTags::uniform(BoundaryKind::DirichletWall),
        )
        .unwrap();
        assert_eq!(m.num_dofs(), 2);
        assert_eq!(m.node(0)[0], 0.0);
        assert_eq!(m.node(1)[0], 1.0);
        assert_eq!(m.element_size(0).unwrap(), 1.0);
    }

    #[test]
    fn tgv_64_cubed_by_enumeration() {
        let m = periodic_box(3, 16, 4);
        assert_eq!(m.num_dofs(), 262_144);
        let mut seen = vec![false; m.num_dofs()];
        for e in 0..m.num_elems() {
            for &d in m.elem_dofs(e) {
                seen[d] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn element_sizes() {
        let m = build_structured_mesh(
            1,
            &[(0.0, 2.0 * PI)],
            &[16],
            2,
            NodeSpacing::Gll,
            BoundaryTags::periodic(),
        )
        .unwrap();
        assert!((m.element_size(3).unwrap() - PI / 8.0).abs() < 1e-15);
        let m = periodic_box(2, 30, 1);
        assert!((m.element_size(0).unwrap() - PI / 15.0).abs() < 1e-15);
        assert!(matches!(
            m.element_size(900),
            Err(MeshError::InvalidElement { .. })
        ));
        let unit = build_structured_mesh(
            3,
            &[(0.0, 1.0); 3],
            &[1, 1, 1],
            1,
            NodeSpacing::Gll,
            BoundaryTags::uniform(BoundaryKind::DirichletWall),
        )
        .unwrap();
        assert_eq!(unit.element_size(0).unwrap(), 1.0);
        let aniso = build_structured_mesh(
            2,
            &[(0.0, 1.0), (0.0, 1.0)],
            &[2, 4],
            1,
            NodeSpacing::Gll,
            BoundaryTags::periodic(),
        )
        .unwrap();
        assert_eq!(aniso.element_size(0).unwrap(), 0.25);
    }

    #[test]
    fn construction_errors() {
        let t = BoundaryTags::periodic();
        let g = NodeSpacing::Gll;
        assert!(matches!(
            build_structured_mesh(2, &[(0.0, 0.0), (0.0, 1.0)], &[2, 2], 1, g, t),
            Err(MeshError::ZeroMeasure { axis: 0, .. })
        ));
        assert!(matches!(
            build_structured_mesh(1, &[(0.0, 1.0)], &[2], 0, g, t),
            Err(MeshError::Basis(_))
        ));
        assert!(matches!(
            build_structured_mesh(1, &[(0.0, 1.0)], &[1], 1, g, t),
            Err(MeshError::PeriodicTooCoarse { .. })
        ));
        let bad = BoundaryTags::periodic().with(0, 1, BoundaryKind::Outflow);
        assert!(matches!(
            build_structured_mesh(1, &[(0.0, 1.0)], &[4], 1, g, bad),
            Err(MeshError::ConflictingTags(0))
        ));
        assert!(matches!(
            build_structured_mesh(4, &[], &[], 1, g, t),
            Err(MeshError::InvalidDimension(4))
        ));
    }

    #[test]
    fn shared_nodes_and_affine_round_trip() {
        for spacing in [NodeSpacing::Gll, NodeSpacing::Equispaced] {
            let tags = BoundaryTags::periodic().with(1, 0, BoundaryKind::DirichletWall).with(
                1,
                1,
                BoundaryKind::Outflow,
            );
            let m = build_structured_mesh(
                3,
                &[(0.0, 2.0), (-1.0, 1.0), (0.5, 1.0)],
                &[3, 2, 2],
                3,
                spacing,
                tags,
            )
            .unwrap();
            assert_eq!(m.dofs_per_axis(), &[9, 7, 6]);
            let h = m.elem_lengths();
            let n1 = 4;
            let r = m.ref_nodes().to_vec();
            for e in 0..m.num_elems() {
                let ei = m.elem_index(e);
                for (l, &d) in m.elem_dofs(e).iter().enumerate() {
                    let li = [l % n1, (l / n1) % n1, l / (n1 * n1)];
                    for axis in 0..3 {
                        let lo = m.extents()[axis].0;
                        let len = m.extents()[axis].1 - lo;
                        let x = lo + h[axis] * (ei[axis] as f64 + 0.5 * (r[li[axis]] + 1.0));
                        // periodic images wrap to the lower bound
                        let wrapped = if m.tags().is_periodic(axis) && (x - (lo + len)).abs() < 1e-12 {
                            lo
                        } else {
                            x
                        };
                        assert!((m.node(d)[axis] - wrapped).abs() <= 1e-14 * (1.0 + wrapped.abs()));
                    }
                }
            }
            let vol: f64 = (0..m.num_elems()).map(|_| m.elem_volume()).sum();
            assert!((vol - m.volume()).abs() <= 1e-13 * m.volume());
        }
    }

    #[test]
    fn periodic_identification() {
        let m = periodic_box(2, 4, 2);
        // last element along x wraps its last node onto DoF column 0
        let e = 3;
        let dofs = m.elem_dofs(e);
        assert_eq!(m.dof_index(dofs[2])[0], 0);
        assert_eq!(m.node(dofs[2])[0], 0.0);
    }

    #[test]
    fn face_dofs_and_elements() {
        let tags = BoundaryTags::uniform(BoundaryKind::DirichletWall);
        let m = build_structured_mesh(2, &[(0.0, 1.0); 2], &[2, 3], 2, NodeSpacing::Gll, tags).unwrap();
        let f = m.face_dofs(0, 1);
        assert_eq!(f.len(), 7);
        assert!(f.iter().all(|&d| m.node(d)[0] == 1.0));
        let fe = m.face_elements(1, 0);
        assert_eq!(fe.len(), 2);
        assert_eq!(fe[0].1, vec![0, 1, 2]);
    }
}
