//! Bath-state projection of finite bipartite Hamiltonians.
//!
//! A universe Hamiltonian on `SOI ⊗ bath` is split, for a chosen bath state,
//! into a static block, a rest-space block and the coupling between them. The
//! rest space is folded back into a frequency dependent Schur complement
//! `M(ω)`, whose nonlinear eigenproblem recovers every universe eigenvalue as a
//! fixed point. The slope of the interaction curves at a fixed point measures
//! how close the eigenstate is to a product state with the chosen bath state,
//! which in turn bounds the SOI-bath entanglement.
//!
//! The weak-coupling side of the crate relates the resulting weight factors to
//! the spectral function of a non-interacting single-impurity Anderson model.

pub mod entanglement;
pub mod error;
pub mod hilbert;
pub mod io;
pub mod linalg;
pub mod projection;
pub mod renorm;
pub mod siam;
pub mod sweep;
pub mod weak;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
