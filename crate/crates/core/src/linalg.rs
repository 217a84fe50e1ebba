//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Max-abs entry norm.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn hermitian_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn anti_hermitian_part(m: &CMat) -> CMat {
    (m - m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Hermitian eigen-decomposition with eigenvalues sorted ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (vec![], zeros(0, 0));
    }
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Function of a Hermitian matrix through its eigen-decomposition.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| C64::new(f(v), 0.0)),
    ));
    &vecs * d * vecs.adjoint()
}

/// Symmetric (Löwdin) orthonormalization `X (X†X)^{-1/2}`.
///
/// Returns `None` when the columns are numerically dependent.
pub fn lowdin(x: &CMat, min_sv: f64) -> Option<CMat> {
    let s = x.adjoint() * x;
    let (vals, _) = eigh(&s);
    if vals.first().is_none_or(|&v| v <= min_sv * min_sv) {
        return None;
    }
    Some(x * hermitian_fn(&s, |v| 1.0 / v.sqrt()))
}

/// Singular values in descending order.
pub fn singular_values_desc(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return vec![];
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Real singular values of a real matrix given as rows, descending.
pub fn real_singular_values(rows: &[Vec<f64>]) -> Vec<f64> {
    if rows.is_empty() || rows[0].is_empty() {
        return vec![];
    }
    let ncols = rows[0].len();
    let m = DMatrix::<f64>::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    let mut s: Vec<f64> = if m.nrows() > m.ncols() {
        m.transpose().singular_values().iter().cloned().collect()
    } else {
        m.singular_values().iter().cloned().collect()
    };
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Unitary matrix exponential of an anti-Hermitian matrix.
pub fn expm(m: &CMat) -> CMat {
    if m.is_empty() {
        return m.clone();
    }
    m.clone().exp()
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), (b.nrows(), b.ncols())).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian matrix.
pub fn random_unitary(n: usize, rng: &mut impl rand::Rng) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut ph = eye(n);
    for k in 0..n {
        let d = r[(k, k)];
        ph[(k, k)] = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
    }
    q * ph
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowdin_produces_orthonormal_columns() {
        let x = CMat::from_row_slice(3, 2, &[c(1.0, 0.0), c(0.5, 0.1), c(0.0, 1.0), c(1.0, 0.0), c(0.2, 0.0), c(0.0, 0.0)]);
        let y = lowdin(&x, 1e-12).unwrap();
        assert!(max_abs(&(y.adjoint() * &y - eye(2))) < 1e-12);
    }

    #[test]
    fn eigh_sorts_ascending() {
        let m = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(3.0, 0.0), c(-1.0, 0.0), c(0.5, 0.0)]));
        let (v, _) = eigh(&m);
        assert_eq!(v, vec![-1.0, 0.5, 3.0]);
    }

    #[test]
    fn expm_of_anti_hermitian_is_unitary() {
        let a = CMat::from_row_slice(2, 2, &[c(0.0, 0.3), c(1.0, 0.2), c(-1.0, 0.2), c(0.0, -0.7)]);
        let u = expm(&a);
        assert!(max_abs(&(u.adjoint() * &u - eye(2))) < 1e-12);
    }
}
