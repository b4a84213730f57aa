//! Small helpers over `nalgebra` complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `v vᴴ`
pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// `(A + Aᴴ) / 2`
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Sum of the (real) diagonal entries.
pub fn real_trace(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

pub fn real_diagonal(a: &CMat) -> Vec<f64> {
    a.diagonal().iter().map(|z| z.re).collect()
}

/// Largest deviation from Hermitian symmetry, relative to the Frobenius norm.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let scale = frobenius(a);
    if scale == 0.0 {
        return 0.0;
    }
    frobenius(&(a - a.adjoint())) / scale
}

/// Eigenvalues of the Hermitian part, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(a)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Hermitian and positive semidefinite up to `tol`, measured relative to `‖A‖_F`.
pub fn is_hermitian_psd(a: &CMat, tol: f64) -> bool {
    if hermitian_defect(a) > tol {
        return false;
    }
    let scale = frobenius(a);
    if scale == 0.0 {
        return true;
    }
    hermitian_eigenvalues(a)
        .first()
        .map_or(true, |&min| min >= -tol * scale)
}

/// Principal square root of a Hermitian PSD matrix; negative eigenvalues from
/// round-off are clamped to zero.
pub fn psd_sqrt(a: &CMat) -> CMat {
    let eig = hermitian_part(a).symmetric_eigen();
    let n = a.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    hermitian_part(&(scaled * eig.eigenvectors.adjoint()))
}
