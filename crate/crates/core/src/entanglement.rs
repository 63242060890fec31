//! Reduced density matrices, von Neumann entropy and the binary entropy bound.

use crate::hilbert::{diagonalize, BipartiteBasis, ManyBodyOperator};
use crate::linalg;
use crate::{CMatrix, CVector, Error, Result};

const NEG_TOL: f64 = 1e-12;

/// SOI density matrix of one universe eigenstate.
#[derive(Debug, Clone)]
pub struct ReducedDensity {
    pub matrix: CMatrix,
    pub source_eig_index: usize,
}

/// `Tr_bath |v⟩⟨v|` for a universe vector in the product basis.
pub fn reduce_vector(basis: &BipartiteBasis, v: &CVector) -> CMatrix {
    let w = basis.coefficients(v);
    linalg::hermitize(&(&w * w.adjoint()))
}

/// Reduced density of eigenstate `eig_index` of `h`.
pub fn reduce(h: &ManyBodyOperator, eig_index: usize) -> Result<ReducedDensity> {
    let es = diagonalize(h)?;
    if eig_index >= es.len() {
        return Err(Error::invalid(format!("eigenstate index {eig_index} out of range ({})", es.len())));
    }
    Ok(ReducedDensity { matrix: reduce_vector(&h.basis(), &es.vector(eig_index)), source_eig_index: eig_index })
}

/// `−Σ p ln p` over the eigenvalues of `rho`.
pub fn von_neumann(rho: &ReducedDensity) -> Result<f64> {
    entropy_of(&rho.matrix)
}

pub fn entropy_of(rho: &CMatrix) -> Result<f64> {
    let p = linalg::eigvalsh(rho)?;
    if let Some(&bad) = p.iter().find(|&&x| x < -NEG_TOL) {
        return Err(Error::invalid(format!("density matrix has negative eigenvalue {bad:e}")));
    }
    Ok(p.iter().map(|&x| x.max(0.0)).filter(|&x| x > 0.0).map(|x| -x * x.ln()).sum())
}

/// Binary entropy `−Z ln Z − (1 − Z) ln(1 − Z)`.
pub fn entropy_bound(z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::invalid(format!("Z = {z} outside [0, 1]")));
    }
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    Ok(term(z) + term(1.0 - z))
}
