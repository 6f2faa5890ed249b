//! Jacobi-preconditioned conjugate gradients for the symmetric systems of the
//! fractional step (pressure Poisson and implicit viscous solve).

use crate::error::SolveError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Relative residual tolerance `|r| <= tol * |b|`.
    pub tol: f64,
    pub max_iters: usize,
    /// Treat the operator as singular with the constant vector as null space:
    /// project the right-hand side and every iterate onto mean-zero vectors.
    pub remove_mean: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 2000,
            remove_mean: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solve `A x = b` with `x` as the initial guess.
///
/// `apply(x, out)` must overwrite `out` with `A x`. `inv_diag`, when given, is
/// the inverse of a positive diagonal preconditioner.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    inv_diag: Option<&[f64]>,
    opts: &CgOptions,
) -> Result<CgStats, SolveError> {
    let n = b.len();
    let mut rhs = b.to_vec();
    if opts.remove_mean {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let b_norm = dot(&rhs, &rhs).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats::default());
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(&rhs) {
        *ri = bi - *ri;
    }
    let precond = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => {
            for ((zi, ri), di) in z.iter_mut().zip(r).zip(d) {
                *zi = ri * di;
            }
        }
        None => z.copy_from_slice(r),
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if opts.remove_mean {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > opts.tol {
        if it == opts.max_iters {
            return Err(SolveError::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolveError::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        if opts.remove_mean {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        res = dot(&r, &r).sqrt() / b_norm;
    }
    if opts.remove_mean {
        remove_mean(x);
    }
    Ok(CgStats {
        iterations: it,
        residual: res,
    })
}

/// Solve `A x = b` with the rows flagged in `fixed` held at their current
/// values in `x`. The free block is solved for a correction with the fixed
/// rows and columns eliminated, which keeps the reduced operator SPD.
pub fn conjugate_gradient_constrained(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    fixed: &[bool],
    inv_diag: Option<&[f64]>,
    opts: &CgOptions,
) -> Result<CgStats, SolveError> {
    if !fixed.iter().any(|&f| f) {
        return conjugate_gradient(apply, b, x, inv_diag, opts);
    }
    let n = b.len();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = if fixed[i] { 0.0 } else { b[i] - r[i] };
    }
    let mut masked = vec![0.0; n];
    let reduced = |y: &[f64], out: &mut [f64]| {
        for i in 0..n {
            masked[i] = if fixed[i] { 0.0 } else { y[i] };
        }
        apply(&masked, out);
        for i in 0..n {
            if fixed[i] {
                out[i] = y[i];
            }
        }
    };
    let mut dx = vec![0.0; n];
    let opts = CgOptions {
        remove_mean: false,
        ..*opts
    };
    let stats = conjugate_gradient(reduced, &r, &mut dx, inv_diag, &opts)?;
    for i in 0..n {
        if !fixed[i] {
            x[i] += dx[i];
        }
    }
    Ok(stats)
}
