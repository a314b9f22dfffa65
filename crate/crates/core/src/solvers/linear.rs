use crate::error::{Error, Result};
use crate::linalg::{all_finite, conjugate_gradient, CgOutcome, LinearOperator, C64, ZERO};

#[derive(Clone, Debug)]
pub struct XSolution {
    pub x: Vec<C64>,
    pub cg: CgOutcome,
}

/// Solves `(A^H A + mu I) x = A^H y + mu (v + d)` by conjugate gradients on
/// the normal operator, touching `A` only through products.
pub fn solve_x_subproblem(
    a: &dyn LinearOperator,
    y: &[C64],
    v: &[C64],
    d: &[C64],
    mu: f64,
    cg_tol: f64,
    cg_max: usize,
) -> Result<XSolution> {
    let mut aty = vec![ZERO; a.cols()];
    a.apply_adjoint(y, &mut aty)?;
    let mut x = vec![ZERO; a.cols()];
    let cg = solve_normal(a, &aty, v, d, mu, cg_tol, cg_max, &mut x)?;
    Ok(XSolution { x, cg })
}

/// Core of [`solve_x_subproblem`] with `A^H y` precomputed and `x` as the
/// warm start.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_normal(
    a: &dyn LinearOperator,
    aty: &[C64],
    v: &[C64],
    d: &[C64],
    mu: f64,
    cg_tol: f64,
    cg_max: usize,
    x: &mut [C64],
) -> Result<CgOutcome> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    let n = a.cols();
    if aty.len() != n || v.len() != n || d.len() != n || x.len() != n {
        return Err(Error::invalid("x-subproblem: vector lengths do not match operator"));
    }
    if !all_finite(aty) || !all_finite(v) || !all_finite(d) {
        return Err(Error::NonFinite("x-subproblem input"));
    }
    let rhs: Vec<C64> = aty
        .iter()
        .zip(v.iter().zip(d))
        .map(|(b, (vi, di))| b + (vi + di) * mu)
        .collect();
    let mut ax = vec![ZERO; a.rows()];
    conjugate_gradient(
        |p, out| {
            a.apply(p, &mut ax)?;
            a.apply_adjoint(&ax, out)?;
            for (o, pi) in out.iter_mut().zip(p) {
                *o += pi * mu;
            }
            Ok(())
        },
        &rhs,
        x,
        cg_tol,
        cg_max,
    )
}

/// Euclidean projection of `v` onto `{x : A x = y}`:
/// `x = v + A^H (A A^H + jitter I)^{-1} (y - A v)`. `z` carries the dual
/// solve between calls as a warm start.
pub(crate) fn project_affine(
    a: &dyn LinearOperator,
    y: &[C64],
    v: &[C64],
    jitter: f64,
    cg_tol: f64,
    cg_max: usize,
    z: &mut [C64],
) -> Result<(Vec<C64>, CgOutcome)> {
    let m = a.rows();
    let mut av = vec![ZERO; m];
    a.apply(v, &mut av)?;
    let r: Vec<C64> = y.iter().zip(&av).map(|(p, q)| p - q).collect();
    let mut atp = vec![ZERO; a.cols()];
    let cg = conjugate_gradient(
        |p, out| {
            a.apply_adjoint(p, &mut atp)?;
            a.apply(&atp, out)?;
            for (o, pi) in out.iter_mut().zip(p) {
                *o += pi * jitter;
            }
            Ok(())
        },
        &r,
        z,
        cg_tol,
        cg_max,
    )?;
    let mut correction = vec![ZERO; a.cols()];
    a.apply_adjoint(z, &mut correction)?;
    let x = v.iter().zip(&correction).map(|(p, q)| p + q).collect();
    Ok((x, cg))
}
