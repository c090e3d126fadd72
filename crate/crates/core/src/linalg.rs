//! Complex Hermitian helpers on top of nalgebra.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `(M + Mᴴ) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5)
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Largest `|M - Mᴴ|` entry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenpairs of a Hermitian matrix in a reproducible form.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: CMatrix,
}

/// Eigendecomposition with a backend-independent output convention:
///
/// * eigenvalues sorted descending;
/// * inside a group of (numerically) equal eigenvalues the basis is rebuilt by
///   Gram-Schmidt on the projections of the canonical basis vectors, so it
///   depends only on the eigenspace, then ordered lexicographically;
/// * every eigenvector is rotated so its largest-magnitude entry is real
///   and positive.
pub fn hermitian_eigen(m: &CMatrix) -> Result<HermitianEigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!(
            "eigendecomposition of a {}x{} matrix",
            n,
            m.ncols()
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite entry in {n}x{n} matrix passed to the eigensolver (trace {})",
            trace_re(m)
        )));
    }
    if n == 0 {
        return Ok(HermitianEigen {
            values: vec![],
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let scale = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tie_tol = 1e-12 * scale.max(f64::MIN_POSITIVE);

    let mut vectors = CMatrix::zeros(n, n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (values[start] - values[end]).abs() <= tie_tol {
            end += 1;
        }
        let group: Vec<CVector> = order[start..end]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        let mut basis = if group.len() == 1 {
            group
        } else {
            canonical_basis_of_span(&group)
        };
        for v in basis.iter_mut() {
            normalize_phase(v);
        }
        basis.sort_by(lexicographic_desc);
        for (offset, v) in basis.into_iter().enumerate() {
            vectors.set_column(start + offset, &v);
        }
        start = end;
    }
    Ok(HermitianEigen { values, vectors })
}

/// Orthonormal basis of `span(group)` obtained from the projections of
/// `e_1, e_2, ...` onto that span.
fn canonical_basis_of_span(group: &[CVector]) -> Vec<CVector> {
    let n = group[0].len();
    let m = group.len();
    let project = |x: &CVector| -> CVector {
        let mut out = CVector::zeros(n);
        for q in group {
            out += q * q.dotc(x);
        }
        out
    };
    let mut basis: Vec<CVector> = Vec::with_capacity(m);
    for j in 0..n {
        if basis.len() == m {
            break;
        }
        let mut e = CVector::zeros(n);
        e[j] = c(1.0);
        let mut v = project(&e);
        for b in &basis {
            let coeff = b.dotc(&v);
            v -= b * coeff;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / c(norm));
        }
    }
    // Projections of canonical vectors always span the group; this only
    // guards against pathological rounding.
    if basis.len() < m {
        return group.to_vec();
    }
    basis
}

fn normalize_phase(v: &mut CVector) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let mag = z.norm();
        if mag > best_mag * (1.0 + 1e-12) {
            best = i;
            best_mag = mag;
        }
    }
    if best_mag > 0.0 {
        let rot = v[best].conj() / best_mag;
        for z in v.iter_mut() {
            *z *= rot;
        }
        v[best] = c(v[best].re);
    }
}

fn lexicographic_desc(a: &CVector, b: &CVector) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match y.re.partial_cmp(&x.re).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {}
            o => return o,
        }
        match y.im.partial_cmp(&x.im).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// PSD within `rel_tol * trace`.
pub fn is_psd(m: &CMatrix, rel_tol: f64) -> bool {
    let tr = trace_re(m).abs();
    min_eigenvalue(m) >= -rel_tol * tr.max(f64::MIN_POSITIVE)
}

/// Hermitian square root, negative eigenvalues above `-1e-10·trace` are
/// treated as zero.
pub fn hermitian_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let n = m.nrows();
    let eig = hermitize(m).symmetric_eigen();
    let tr = trace_re(m).abs();
    let mut out = CMatrix::zeros(n, n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -1e-10 * tr.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "square root of a non-PSD covariance (eigenvalue {lambda:e}, trace {tr:e})"
            )));
        }
        let root = lambda.max(0.0).sqrt();
        if root == 0.0 {
            continue;
        }
        let u = eig.eigenvectors.column(i);
        out += (u * u.adjoint()) * c(root);
    }
    Ok(out)
}

/// Solves `M X = B` for Hermitian positive-definite `M` by Cholesky.
pub fn solve_hpd(m: &CMatrix, rhs: &CMatrix) -> Result<CMatrix> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "Cholesky failed on {}x{} matrix: min eigenvalue {:e}, trace {:e}",
            m.nrows(),
            m.ncols(),
            min_eigenvalue(m),
            trace_re(m)
        ))
    })?;
    Ok(chol.solve(rhs))
}
