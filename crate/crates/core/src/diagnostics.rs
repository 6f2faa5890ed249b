//! Volume-averaged flow observables and solver-health metrics.
//!
//! Everything is integrated with the discretization's own quadrature, so the
//! numbers describe the discrete solution rather than an interpolant of it.

use std::io::{self, Write};

use crate::error::FieldError;
use crate::field::{ScalarField, VectorField};
use crate::operators::Discretization;
use crate::stabilization::{momentum_stabilization, StabilizationConfig};

/// `E_k = (1/|Ω|) ∫ |u|^2 / 2`
pub fn kinetic_energy(disc: &Discretization, u: &VectorField) -> f64 {
    let fields: Vec<&ScalarField> = u.comps.iter().collect();
    let total = disc.integrate_pointwise(&fields, |v| 0.5 * v.iter().map(|x| x * x).sum::<f64>());
    total / disc.mesh().volume()
}

/// Enstrophy `zeta = (1/|Ω|) ∫ |ω|^2 / 2` and dissipation rate `eps = 2 nu zeta`.
pub fn enstrophy_dissipation(disc: &Discretization, u: &VectorField, nu: f64) -> Result<(f64, f64), FieldError> {
    let w = disc.curl(u)?;
    let zeta = kinetic_energy(disc, &w);
    Ok((zeta, 2.0 * nu * zeta))
}

/// L2 norm of the lumped projection of `div(u)`.
pub fn divergence_norm(disc: &Discretization, u: &VectorField) -> Result<f64, FieldError> {
    let mut d = disc.apply_weak_rhs_divergence(u)?;
    disc.apply_inv_lumped(&mut d.values);
    Ok(disc.integrate_pointwise(&[&d], |v| v[0] * v[0]).max(0.0).sqrt())
}

/// Rate of kinetic-energy change caused by the stabilization forcing `s`
/// (assembled, right-hand-side sign), per unit volume.
pub fn stabilization_power(disc: &Discretization, u: &VectorField, s: &VectorField) -> f64 {
    u.dot(s) / disc.mesh().volume()
}

/// One row of the diagnostics CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e_k: f64,
    pub zeta: f64,
    pub eps: f64,
    pub div_norm: f64,
    pub stab_power: f64,
}

impl DiagnosticsRecord {
    pub const HEADER: &'static str = "t,E_k,zeta,eps,div_norm,stab_power";

    pub fn compute(
        disc: &Discretization,
        u: &VectorField,
        nu: f64,
        stab: &StabilizationConfig,
        t: f64,
    ) -> Result<Self, FieldError> {
        let (zeta, eps) = if disc.dim() >= 2 {
            enstrophy_dissipation(disc, u, nu)?
        } else {
            (0.0, 0.0)
        };
        let s = momentum_stabilization(disc, u, stab)?;
        Ok(Self {
            t,
            e_k: kinetic_energy(disc, u),
            zeta,
            eps,
            div_norm: divergence_norm(disc, u)?,
            stab_power: stabilization_power(disc, u, &s),
        })
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.t, self.e_k, self.zeta, self.eps, self.div_norm, self.stab_power
        )
    }

    pub fn from_csv_row(line: &str) -> Option<Self> {
        let v: Vec<f64> = line.split(',').map(|s| s.trim().parse().ok()).collect::<Option<_>>()?;
        if v.len() != 6 {
            return None;
        }
        Some(Self {
            t: v[0],
            e_k: v[1],
            zeta: v[2],
            eps: v[3],
            div_norm: v[4],
            stab_power: v[5],
        })
    }
}

/// Streams records as CSV, header first.
pub struct CsvWriter<W: Write> {
    out: W,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{}", DiagnosticsRecord::HEADER)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &DiagnosticsRecord) -> io::Result<()> {
        writeln!(self.out, "{}", r.to_csv_row())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Parse a diagnostics CSV produced by [`CsvWriter`].
pub fn read_csv(text: &str) -> Option<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    if lines.next()? != DiagnosticsRecord::HEADER {
        return None;
    }
    lines.filter(|l| !l.is_empty()).map(DiagnosticsRecord::from_csv_row).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::NodeSpacing;
    use crate::mesh::{build_structured_mesh, BoundaryTags};
    use std::f64::consts::PI;

    fn disc(dim: usize, n: usize, p: usize) -> Discretization {
        let m = build_structured_mesh(dim, &vec![(0.0, 2.0 * PI); dim], &vec![n; dim], p, NodeSpacing::Gll, BoundaryTags::periodic()).unwrap();
        Discretization::natural(m).unwrap()
    }

    #[test]
    fn uniform_and_zero_fields() {
        let d = disc(2, 3, 2);
        let u = VectorField::from_fn(d.mesh(), |_| [0.6, 0.8, 0.0]);
        assert!((kinetic_energy(&d, &u) - 0.5).abs() < 1e-14);
        assert!(divergence_norm(&d, &u).unwrap() < 1e-13);
        assert_eq!(kinetic_energy(&d, &VectorField::zeros(2, d.num_dofs())), 0.0);
        let (z, e) = enstrophy_dissipation(&d, &u, 0.0).unwrap();
        assert!(z.abs() < 1e-25 && e == 0.0);
    }

    #[test]
    fn shear_pair_is_divergence_free() {
        let d = disc(2, 4, 3);
        let u = VectorField::from_fn(d.mesh(), |x| [x[1].sin(), x[0].sin(), 0.0]);
        assert!(divergence_norm(&d, &u).unwrap() < 1e-13);
    }

    #[test]
    fn one_d_has_no_enstrophy() {
        let d = disc(1, 4, 2);
        assert!(enstrophy_dissipation(&d, &VectorField::zeros(1, d.num_dofs()), 1.0).is_err());
        let r = DiagnosticsRecord::compute(&d, &VectorField::zeros(1, d.num_dofs()), 1.0, &StabilizationConfig::none(), 0.0).unwrap();
        assert_eq!(r.zeta, 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let r = DiagnosticsRecord {
            t: 0.1,
            e_k: 1.0 / 3.0,
            zeta: 2.0,
            eps: 4e-3,
            div_norm: 1e-17,
            stab_power: -0.25,
        };
        let mut buf = Vec::new();
        let mut w = CsvWriter::new(&mut buf).unwrap();
        w.write(&r).unwrap();
        w.flush().unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,E_k,zeta,eps,div_norm,stab_power\n"));
        assert_eq!(read_csv(&text).unwrap(), vec![r]);
    }
}
