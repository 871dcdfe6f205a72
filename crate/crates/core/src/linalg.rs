//! Small dense complex linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// (A + Aᴴ)/2
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Largest entrywise deviation |A - Aᴴ|.
pub fn hermiticity_gap(a: &CMat) -> f64 {
    let d = a - a.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_entry(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
/// The input is symmetrized first to absorb floating-point drift.
pub fn herm_eigen(a: &CMat) -> (RVec, CMat) {
    let h = hermitian_part(a);
    let se = h.symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals = RVec::from_fn(n, |i, _| se.eigenvalues[order[i]]);
    let vecs = CMat::from_fn(n, n, |i, j| se.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    let (vals, _) = herm_eigen(a);
    vals[0]
}

/// Clips negative eigenvalues to zero, returning the nearest PSD matrix.
pub fn psd_project(a: &CMat) -> CMat {
    let (vals, vecs) = herm_eigen(a);
    reassemble(&vals.map(|v| v.max(0.0)), &vecs)
}

/// Hermitian square root with negative eigenvalues clipped to zero.
pub fn herm_sqrt(a: &CMat) -> CMat {
    let (vals, vecs) = herm_eigen(a);
    reassemble(&vals.map(|v| v.max(0.0).sqrt()), &vecs)
}

fn reassemble(vals: &RVec, vecs: &CMat) -> CMat {
    let n = vals.len();
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        let v = vecs.column(j);
        let lam = vals[j];
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += v[r] * v[c].conj() * lam;
            }
        }
    }
    out
}

pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

pub fn trace_c(a: &CMat) -> C64 {
    (0..a.nrows().min(a.ncols()))
        .map(|i| a[(i, i)])
        .sum::<C64>()
}

/// xᴴ M x (complex; real for Hermitian M).
pub fn quad_form(m: &CMat, x: &CVec) -> C64 {
    let mx = m * x;
    x.dotc(&mx)
}

/// diag(0, 1, ..., n-1) used as the element-index matrix of a ULA.
pub fn index_diag(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| {
        if i == j {
            c64(i as f64, 0.0)
        } else {
            c64(0.0, 0.0)
        }
    })
}

/// Entrywise phase vector e^{j arg(x_n)}; arg(0) is taken as 0 so the result
/// stays unit-modulus even on exact zeros.
pub fn unit_phases(x: &CVec) -> CVec {
    CVec::from_fn(x.len(), |i, _| {
        let z = x[i];
        if z.norm() == 0.0 {
            c64(1.0, 0.0)
        } else {
            C64::from_polar(1.0, z.arg())
        }
    })
}

pub fn identity_c(n: usize) -> CMat {
    CMat::identity(n, n)
}
