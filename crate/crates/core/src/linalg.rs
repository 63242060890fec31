//! Small dense linear-algebra helpers on top of nalgebra.

use std::ops::Range;

use nalgebra::SymmetricEigen;

use crate::{CMatrix, CVector, Complex64, Error, Result};

const EIGEN_MAX_SWEEPS: usize = 100_000;

/// Largest modulus among the entries of `m` (0 for an empty matrix).
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|m - m†|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in ascending
/// order and eigenvectors as the matching columns.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(
        Error::NonConvergence {
            what: "Hermitian eigensolver",
            iterations: EIGEN_MAX_SWEEPS,
            residual: f64::NAN,
        },
    )?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Eigenvalues only, ascending.
pub fn eigvalsh(m: &CMatrix) -> Result<Vec<f64>> {
    Ok(eigh(m)?.0)
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::NumericConsistency("singular linear system".into()))
}

/// Solves `a x = b` for a single right-hand side.
pub fn solve_vec(a: &CMatrix, b: &CVector) -> Result<CVector> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::NumericConsistency("singular linear system".into()))
}

/// Width of the spectrum, falling back to the largest magnitude (or 1) when
/// all eigenvalues coincide.
pub fn spectral_scale(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        return 1.0;
    }
    let range = hi - lo;
    if range > 0.0 {
        range
    } else if hi.abs() > 0.0 {
        hi.abs()
    } else {
        1.0
    }
}

/// Groups indices of an ascending list into runs whose consecutive gaps are
/// below `tol`.
pub fn clusters(values: &[f64], tol: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k] - values[k - 1] > tol {
            if k > start {
                out.push(start..k);
            }
            start = k;
        }
    }
    out
}

/// `|⟨a|b⟩|²`.
pub fn overlap2(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm_sqr()
}

/// Rescales `v` to unit norm; zero vectors are returned unchanged.
pub fn normalized(v: CVector) -> CVector {
    let n = v.norm();
    if n > 0.0 {
        v.unscale(n)
    } else {
        v
    }
}

/// Largest entry of `|v† v - I|`.
pub fn orthonormality_defect(v: &CMatrix) -> f64 {
    let g = v.adjoint() * v;
    let mut worst = 0.0_f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}
