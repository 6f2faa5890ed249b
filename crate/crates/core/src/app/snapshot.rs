//! Field snapshots: legacy VTK rectilinear grids and CSV point clouds.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::field::{ScalarField, VectorField};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    Vtk,
    Csv,
    Both,
}

impl SnapshotFormat {
    fn extensions(self) -> &'static [&'static str] {
        match self {
            SnapshotFormat::Vtk => &["vtk"],
            SnapshotFormat::Csv => &["csv"],
            SnapshotFormat::Both => &["vtk", "csv"],
        }
    }
}

fn component(u: &VectorField, k: usize, i: usize) -> f64 {
    u.comps.get(k).map_or(0.0, |c| c.values[i])
}

/// ASCII legacy VTK with point arrays `u`, `v`, `w` and `p`.
pub fn to_vtk(mesh: &Mesh, u: &VectorField, p: &ScalarField, title: &str) -> String {
    let mut s = String::new();
    let dims: Vec<usize> = (0..3)
        .map(|k| if k < mesh.dim() { mesh.dofs_per_axis()[k] } else { 1 })
        .collect();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET RECTILINEAR_GRID");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
    for (k, name) in ["X_COORDINATES", "Y_COORDINATES", "Z_COORDINATES"].iter().enumerate() {
        let coords: Vec<f64> = if k < mesh.dim() { mesh.axis_coords(k).to_vec() } else { vec![0.0] };
        let _ = writeln!(s, "{name} {} double", coords.len());
        let line: Vec<String> = coords.iter().map(|c| format!("{c:.16e}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    let n = mesh.num_dofs();
    let _ = writeln!(s, "POINT_DATA {n}");
    for (k, name) in ["u", "v", "w"].iter().enumerate() {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for i in 0..n {
            let _ = writeln!(s, "{:.16e}", component(u, k, i));
        }
    }
    let _ = writeln!(s, "SCALARS p double 1\nLOOKUP_TABLE default");
    for v in &p.values {
        let _ = writeln!(s, "{v:.16e}");
    }
    s
}

pub const CSV_HEADER: &str = "x,y,z,u,v,w,p";

/// One row per DoF: coordinates then `u, v, w, p`.
pub fn to_csv(mesh: &Mesh, u: &VectorField, p: &ScalarField) -> String {
    let mut s = String::with_capacity(mesh.num_dofs() * 160);
    let _ = writeln!(s, "{CSV_HEADER}");
    for (i, x) in mesh.nodes().iter().enumerate() {
        let _ = writeln!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            x[0],
            x[1],
            x[2],
            component(u, 0, i),
            component(u, 1, i),
            component(u, 2, i),
            p.values[i]
        );
    }
    s
}

/// Parse a CSV snapshot back into rows of seven numbers.
pub fn read_csv(text: &str) -> Option<Vec<[f64; 7]>> {
    let mut lines = text.lines();
    if lines.next()? != CSV_HEADER {
        return None;
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|t| t.parse().ok()).collect::<Option<_>>()?;
            v.try_into().ok()
        })
        .collect()
}

/// Write `stem.vtk` and/or `stem.csv`; returns the paths written.
pub fn write_snapshot(
    mesh: &Mesh,
    u: &VectorField,
    p: &ScalarField,
    dir: &Path,
    stem: &str,
    format: SnapshotFormat,
) -> io::Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for ext in format.extensions() {
        let path = dir.join(format!("{stem}.{ext}"));
        let body = match *ext {
            "vtk" => to_vtk(mesh, u, p, stem),
            _ => to_csv(mesh, u, p),
        };
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
