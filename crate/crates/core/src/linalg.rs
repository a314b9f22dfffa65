//! Dense complex vector kernels and a matrix-free conjugate-gradient solver.
//!
//! Every reduction here runs in a fixed order so results are bit-reproducible
//! whatever the thread count.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);

/// `sum_i a_i * x_i` (no conjugation), four interleaved accumulators.
#[inline]
pub fn dot_plain(a: &[C64], x: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), x.len());
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            let i = 4 * c + l;
            let (p, q) = (a[i], x[i]);
            re[l] += p.re * q.re - p.im * q.im;
            im[l] += p.re * q.im + p.im * q.re;
        }
    }
    for i in 4 * chunks..a.len() {
        let (p, q) = (a[i], x[i]);
        re[0] += p.re * q.re - p.im * q.im;
        im[0] += p.re * q.im + p.im * q.re;
    }
    C64::new((re[0] + re[1]) + (re[2] + re[3]), (im[0] + im[1]) + (im[2] + im[3]))
}

/// Hermitian inner product `<a, b> = sum conj(a_i) b_i`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(ZERO, |acc, (p, q)| acc + p.conj() * q)
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    norm_sqr(a).sqrt()
}

pub fn dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

pub fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(p, q)| p + q).collect()
}

pub fn scale(alpha: f64, a: &[C64]) -> Vec<C64> {
    a.iter().map(|v| v * alpha).collect()
}

pub fn max_abs(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn all_finite(a: &[C64]) -> bool {
    a.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// A complex linear map known only through its action and its adjoint.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A x`
    fn apply(&self, x: &[C64], out: &mut [C64]) -> Result<()>;
    /// `out = A^H y`
    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]) -> Result<()>;
}

/// Small dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "dense matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }
}

impl LinearOperator for DenseMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) -> Result<()> {
        if x.len() != self.cols || out.len() != self.rows {
            return Err(Error::invalid("dense apply: dimension mismatch"));
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot_plain(&self.data[r * self.cols..(r + 1) * self.cols], x);
        }
        Ok(())
    }

    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]) -> Result<()> {
        if y.len() != self.rows || out.len() != self.cols {
            return Err(Error::invalid("dense adjoint: dimension mismatch"));
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o = (0..self.rows).fold(ZERO, |acc, r| acc + self.get(r, c).conj() * y[r]);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `H x = b` for Hermitian positive-definite `H`, given only its
/// action. `x` holds the initial guess on entry and the solution on return.
pub fn conjugate_gradient<F>(
    mut apply: F,
    b: &[C64],
    x: &mut [C64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    F: FnMut(&[C64], &mut [C64]) -> Result<()>,
{
    if b.len() != x.len() {
        return Err(Error::invalid("cg: rhs and solution lengths differ"));
    }
    if !all_finite(b) || !all_finite(x) {
        return Err(Error::NonFinite("cg input"));
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = ZERO);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }

    let n = b.len();
    let mut hx = vec![ZERO; n];
    apply(x, &mut hx)?;
    let mut r = sub(b, &hx);
    let mut p = r.clone();
    let mut hp = vec![ZERO; n];
    let mut rr = norm_sqr(&r);
    let mut rel = rr.sqrt() / b_norm;
    let mut iterations = 0;

    while rel > tol && iterations < max_iter {
        apply(&p, &mut hp)?;
        let php = dot(&p, &hp).re;
        if !(php > 0.0) {
            break;
        }
        let alpha = rr / php;
        axpy(C64::new(alpha, 0.0), &p, x);
        axpy(C64::new(-alpha, 0.0), &hp, &mut r);
        let rr_next = norm_sqr(&r);
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
        rr = rr_next;
        rel = rr.sqrt() / b_norm;
        iterations += 1;
    }
    if !all_finite(x) {
        return Err(Error::NonFinite("cg iterate"));
    }
    Ok(CgOutcome {
        iterations,
        relative_residual: rel,
        converged: rel <= tol,
    })
}
