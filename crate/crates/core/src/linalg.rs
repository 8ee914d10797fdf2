//! Small dense helpers on top of nalgebra.

use crate::prelude::*;
use crate::{Error, Result};
use nalgebra::{Complex, DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex<f64>>;

/// `|z|`, available without `std`.
pub fn cabs(z: Complex<f64>) -> f64 {
    z.re.hypot(z.im)
}

pub fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_square(m: &Mat) -> Result<usize> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() })
    }
}

/// `(M + Mᵀ) / 2`.
pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest singular value.
pub fn op_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest singular value of a complex matrix.
pub fn op_norm_c(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = sym(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn lambda_min(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn lambda_max(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Eigenvalues of a general square matrix, in no particular order.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex<f64>>> {
    let n = ensure_square(m)?;
    ensure_finite(m, "matrix")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let eig: Vec<Complex<f64>> = fm.eigenvalues::<faer::complex_native::c64>().iter().map(|z| Complex::new(z.re, z.im)).collect();
    if eig.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Numerical(String::from("eigenvalue computation failed")));
    }
    Ok(eig)
}

/// Symmetric square root of a PSD matrix; negative eigenvalues are clipped.
pub fn psd_sqrt(m: &Mat) -> Mat {
    if m.is_empty() {
        return m.clone();
    }
    let e = sym(m).symmetric_eigen();
    let d = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}

/// Solve `M X = B` by LU; errors on a singular `M`.
pub fn solve(m: &Mat, b: &Mat) -> Result<Mat> {
    let lu = m.clone().lu();
    lu.solve(b).ok_or_else(|| Error::Numerical(String::from("singular linear system")))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &Mat, what: &'static str) -> Result<Mat> {
    let c = sym(m).cholesky().ok_or(Error::NotPositiveDefinite(what))?;
    Ok(c.inverse())
}

pub fn is_symmetric(m: &Mat, rel_tol: f64) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= rel_tol * scale
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex::new(v, 0.0))
}

/// Stack blocks vertically. All blocks must share a column count.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Concatenate blocks horizontally. All blocks must share a row count.
pub fn hstack(blocks: &[&Mat]) -> Mat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Block-diagonal matrix.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn column(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Frequency response `C (zI - A)^{-1} B + D` evaluated at many points,
/// after one Hessenberg reduction of `A`.
pub(crate) struct FrequencyResponse {
    h: CMat,
    b: CMat,
    c: CMat,
    d: CMat,
}

impl FrequencyResponse {
    pub fn new(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Self {
        if a.nrows() == 0 {
            let z = CMat::zeros(0, 0);
            return Self { h: z.clone(), b: CMat::zeros(0, b.ncols()), c: CMat::zeros(c.nrows(), 0), d: to_complex(d) };
        }
        let hess = a.clone().hessenberg();
        let q = hess.q();
        let h = hess.h();
        Self { h: to_complex(&h), b: to_complex(&(q.transpose() * b)), c: to_complex(&(c * q)), d: to_complex(d) }
    }

    pub fn eval(&self, z: Complex<f64>) -> CMat {
        let n = self.h.nrows();
        if n == 0 {
            return self.d.clone();
        }
        let mut m = -self.h.clone();
        for i in 0..n {
            m[(i, i)] += z;
        }
        let x = hessenberg_solve(m, self.b.clone());
        &self.c * x + &self.d
    }

    pub fn sigma_max(&self, theta: f64) -> f64 {
        let z = Complex::new(theta.cos(), theta.sin());
        op_norm_c(&self.eval(z))
    }
}

/// Solve `H X = B` for upper-Hessenberg `H` with adjacent-row partial pivoting.
fn hessenberg_solve(mut h: CMat, mut b: CMat) -> CMat {
    let n = h.nrows();
    let m = b.ncols();
    for k in 0..n.saturating_sub(1) {
        if cabs(h[(k + 1, k)]) > cabs(h[(k, k)]) {
            h.swap_rows(k, k + 1);
            b.swap_rows(k, k + 1);
        }
        let piv = h[(k, k)];
        if cabs(piv) == 0.0 {
            continue;
        }
        let f = h[(k + 1, k)] / piv;
        if cabs(f) != 0.0 {
            for j in k..n {
                let v = h[(k, j)];
                h[(k + 1, j)] -= f * v;
            }
            for j in 0..m {
                let v = b[(k, j)];
                b[(k + 1, j)] -= f * v;
            }
        }
    }
    for j in 0..m {
        for i in (0..n).rev() {
            let mut s = b[(i, j)];
            for l in i + 1..n {
                s -= h[(i, l)] * b[(l, j)];
            }
            b[(i, j)] = s / h[(i, i)];
        }
    }
    b
}
