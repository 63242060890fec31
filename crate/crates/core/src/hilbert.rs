//! Bipartite bases, many-body operators and the two-site fermionic universe.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, c, real};
use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Relative tolerance for the Hermiticity check on [`ManyBodyOperator`].
pub const HERMITIAN_RTOL: f64 = 1e-12;
/// Relative gap below which two eigenvalues are treated as degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-8;

/// Product basis `SOI ⊗ bath` flattened with the bath index varying slowest:
/// `flat = bath * soi_dim + soi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteBasis {
    soi_dim: usize,
    bath_dim: usize,
}

impl BipartiteBasis {
    pub fn new(soi_dim: usize, bath_dim: usize) -> Result<Self> {
        if soi_dim == 0 || bath_dim == 0 {
            return Err(Error::invalid(format!(
                "basis dimensions must be positive (soi {soi_dim}, bath {bath_dim})"
            )));
        }
        if soi_dim > bath_dim {
            log::warn!("SOI dimension {soi_dim} exceeds bath dimension {bath_dim}");
        }
        Ok(Self { soi_dim, bath_dim })
    }

    /// The `{|0↑0↓⟩, |0↑x↓⟩, |x↑0↓⟩, |x↑x↓⟩}` basis: the spin-up electron is the
    /// bath, the spin-down electron the SOI.
    pub fn two_site() -> Self {
        Self { soi_dim: 2, bath_dim: 2 }
    }

    pub fn soi_dim(&self) -> usize {
        self.soi_dim
    }

    pub fn bath_dim(&self) -> usize {
        self.bath_dim
    }

    pub fn dim(&self) -> usize {
        self.soi_dim * self.bath_dim
    }

    pub fn index(&self, soi: usize, bath: usize) -> usize {
        debug_assert!(soi < self.soi_dim && bath < self.bath_dim);
        bath * self.soi_dim + soi
    }

    /// `(soi, bath)` label of a flat index.
    pub fn label(&self, flat: usize) -> (usize, usize) {
        (flat % self.soi_dim, flat / self.soi_dim)
    }

    pub fn labels(&self) -> Vec<(usize, usize)> {
        (0..self.dim()).map(|k| self.label(k)).collect()
    }

    /// Reshapes a universe vector into the `soi_dim × bath_dim` coefficient
    /// matrix `w[(i, j)]` of `|SOI, i⟩ ⊗ |bath, j⟩`.
    pub fn coefficients(&self, state: &CVector) -> CMatrix {
        CMatrix::from_fn(self.soi_dim, self.bath_dim, |i, j| state[self.index(i, j)])
    }
}

/// Hermitian operator on a [`BipartiteBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct ManyBodyOperator {
    basis: BipartiteBasis,
    matrix: CMatrix,
}

impl ManyBodyOperator {
    pub fn new(basis: BipartiteBasis, matrix: CMatrix) -> Result<Self> {
        let n = basis.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, basis needs {n}x{n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let defect = linalg::hermiticity_defect(&matrix);
        let scale = linalg::max_abs(&matrix);
        if defect > HERMITIAN_RTOL * scale {
            return Err(Error::invalid(format!(
                "matrix is not Hermitian (max |H - H†| = {defect:e}, max |H| = {scale:e})"
            )));
        }
        Ok(Self { basis, matrix })
    }

    pub fn basis(&self) -> BipartiteBasis {
        self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn negated(&self) -> Self {
        Self { basis: self.basis, matrix: -self.matrix.clone() }
    }
}

/// Where the `C_0x` coupling block sits in the assembled two-site matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingLayout {
    /// `[[H_S, C_0x], [C_0x†, H_x↑]]`, the `√ε C` placement of the general
    /// block equation.
    #[default]
    MainText,
    /// `[[H_S, C_0x†], [C_0x, H_x↑]]`, the placement of the supplementary block
    /// form.
    Appendix,
}

/// Parameters of the two-site, two-electron model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSiteParams {
    pub omega0: f64,
    /// Real part is the hopping, imaginary part the transition dipole.
    #[serde(with = "complex_pair")]
    pub omega_d: Complex64,
    #[serde(rename = "V00")]
    pub v00: f64,
    #[serde(rename = "V0x")]
    pub v0x: f64,
    #[serde(rename = "Vxx")]
    pub vxx: f64,
    #[serde(rename = "J0x")]
    pub j0x: f64,
    #[serde(default, rename = "coupling_layout")]
    pub layout: CouplingLayout,
}

impl TwoSiteParams {
    /// `ω0 = 6, ω_d = 2 + 2i, V00 = 1.5, V0x = J0x = 1, Vxx = 0.5`.
    pub fn fig2() -> Self {
        Self {
            omega0: 6.0,
            omega_d: c(2.0, 2.0),
            v00: 1.5,
            v0x: 1.0,
            vxx: 0.5,
            j0x: 1.0,
            layout: CouplingLayout::MainText,
        }
    }

    /// `ω0 = 6, ω_d = 3 + 3i, Vxx = 1` with the given on-site `V00`; the
    /// `(J0x, V0x)` plane is left at zero for the caller to sweep.
    pub fn fig4(v00: f64) -> Self {
        Self {
            omega0: 6.0,
            omega_d: c(3.0, 3.0),
            v00,
            v0x: 0.0,
            vxx: 1.0,
            j0x: 0.0,
            layout: CouplingLayout::MainText,
        }
    }

    pub fn zero() -> Self {
        Self {
            omega0: 0.0,
            omega_d: c(0.0, 0.0),
            v00: 0.0,
            v0x: 0.0,
            vxx: 0.0,
            j0x: 0.0,
            layout: CouplingLayout::MainText,
        }
    }

    pub fn with_layout(mut self, layout: CouplingLayout) -> Self {
        self.layout = layout;
        self
    }

    /// Every energy parameter sign-flipped, which negates the Hamiltonian.
    pub fn negated(&self) -> Self {
        Self {
            omega0: -self.omega0,
            omega_d: -self.omega_d,
            v00: -self.v00,
            v0x: -self.v0x,
            vxx: -self.vxx,
            j0x: -self.j0x,
            layout: self.layout,
        }
    }

    fn check_finite(&self) -> Result<()> {
        let all = [
            self.omega0,
            self.omega_d.re,
            self.omega_d.im,
            self.v00,
            self.v0x,
            self.vxx,
            self.j0x,
        ];
        if all.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("two-site parameters must be finite"))
        }
    }
}

/// The three 2×2 blocks of the two-site model for the `|0↑⟩` bath state:
/// `(H^S_0↑, H_x↑, C_0x)`.
pub fn two_site_blocks(p: &TwoSiteParams) -> (CMatrix, CMatrix, CMatrix) {
    let half_d = p.omega_d * 0.5;
    let h_static = CMatrix::from_row_slice(
        2,
        2,
        &[real(p.v00 - 1.5 * p.omega0), half_d.conj(), half_d, real(p.v0x - 0.5 * p.omega0)],
    );
    let h_rest = CMatrix::from_row_slice(
        2,
        2,
        &[real(p.v0x - 0.5 * p.omega0), half_d.conj(), half_d, real(p.vxx + 0.5 * p.omega0)],
    );
    let coupling = CMatrix::from_row_slice(2, 2, &[half_d, real(0.0), real(p.j0x), half_d]);
    (h_static, h_rest, coupling)
}

/// Assembles the 4×4 two-site Hamiltonian on
/// `{|0↑0↓⟩, |0↑x↓⟩, |x↑0↓⟩, |x↑x↓⟩}`.
pub fn build_two_site(p: &TwoSiteParams) -> Result<ManyBodyOperator> {
    p.check_finite()?;
    let (hs, hr, cpl) = two_site_blocks(p);
    let (upper, lower) = match p.layout {
        CouplingLayout::MainText => (cpl.clone(), cpl.adjoint()),
        CouplingLayout::Appendix => (cpl.adjoint(), cpl.clone()),
    };
    let mut h = CMatrix::zeros(4, 4);
    h.view_mut((0, 0), (2, 2)).copy_from(&hs);
    h.view_mut((2, 2), (2, 2)).copy_from(&hr);
    h.view_mut((0, 2), (2, 2)).copy_from(&upper);
    h.view_mut((2, 0), (2, 2)).copy_from(&lower);
    ManyBodyOperator::new(BipartiteBasis::two_site(), h)
}

/// Exact eigenpairs of a universe Hamiltonian.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
    /// Set when some gap is below `1e-8 ×` the spectral range.
    pub degenerate: bool,
    pub basis: BipartiteBasis,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, k: usize) -> CVector {
        self.vectors.column(k).into_owned()
    }

    pub fn spectral_range(&self) -> f64 {
        linalg::spectral_scale(&self.values)
    }

    /// Index runs of (numerically) degenerate eigenvalues.
    pub fn degenerate_clusters(&self) -> Vec<std::ops::Range<usize>> {
        linalg::clusters(&self.values, DEGENERACY_RTOL * self.spectral_range())
    }
}

/// Dense diagonalization with residual and orthonormality checks.
pub fn diagonalize(h: &ManyBodyOperator) -> Result<EigenSystem> {
    let m = h.matrix();
    let defect = linalg::hermiticity_defect(m);
    if defect > HERMITIAN_RTOL * linalg::max_abs(m) {
        return Err(Error::invalid("operator is not Hermitian"));
    }
    let (values, vectors) = linalg::eigh(m)?;
    let range = linalg::spectral_scale(&values);
    for (k, &w) in values.iter().enumerate() {
        let v = vectors.column(k);
        let r = (m * v - v * real(w)).norm();
        if r > 1e-10 * range {
            return Err(Error::NumericConsistency(format!(
                "eigenpair {k} residual {r:e} exceeds 1e-10 x range {range:e}"
            )));
        }
    }
    let ortho = linalg::orthonormality_defect(&vectors);
    if ortho > 1e-10 {
        return Err(Error::NumericConsistency(format!(
            "eigenvectors not orthonormal (defect {ortho:e})"
        )));
    }
    let degenerate = values.windows(2).any(|w| w[1] - w[0] < DEGENERACY_RTOL * range);
    if degenerate {
        log::warn!("spectrum is degenerate; separability of degenerate levels is basis dependent");
    }
    Ok(EigenSystem { values, vectors, degenerate, basis: h.basis() })
}

/// Pauli matrix `σ¹`, `σ²` or `σ³`.
pub fn pauli(axis: usize) -> Result<CMatrix> {
    let z = real(0.0);
    let one = real(1.0);
    let i = c(0.0, 1.0);
    match axis {
        1 => Ok(CMatrix::from_row_slice(2, 2, &[z, one, one, z])),
        2 => Ok(CMatrix::from_row_slice(2, 2, &[z, -i, i, z])),
        3 => Ok(CMatrix::from_row_slice(2, 2, &[one, z, z, -one])),
        _ => Err(Error::invalid(format!("Pauli axis must be 1, 2 or 3, got {axis}"))),
    }
}

pub(crate) mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(omega0: f64, d: Complex64, v00: f64, v0x: f64, vxx: f64, j0x: f64) -> TwoSiteParams {
        TwoSiteParams { omega0, omega_d: d, v00, v0x, vxx, j0x, layout: CouplingLayout::MainText }
    }

    #[test]
    fn basis_order_has_bath_slowest() {
        let b = BipartiteBasis::new(2, 3).unwrap();
        assert_eq!(b.labels(), vec![(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2)]);
        assert_eq!(b.index(1, 2), 5);
        assert!(BipartiteBasis::new(0, 2).is_err());
    }

    #[test]
    fn fig2_corner_entry() {
        let h = build_two_site(&TwoSiteParams::fig2()).unwrap();
        assert_eq!(h.matrix()[(0, 0)], real(-7.5));
    }

    #[test]
    fn zero_params_give_zero_matrix() {
        let h = build_two_site(&TwoSiteParams::zero()).unwrap();
        assert!(h.matrix().iter().all(|z| *z == real(0.0)));
    }

    #[test]
    fn blocks_land_where_the_layout_says() {
        let p = params(6.0, c(2.0, 2.0), 1.5, 1.0, 0.5, 1.0);
        let (hs, hr, cpl) = two_site_blocks(&p);
        for layout in [CouplingLayout::MainText, CouplingLayout::Appendix] {
            let h = build_two_site(&p.with_layout(layout)).unwrap();
            let m = h.matrix();
            assert_eq!(m.view((0, 0), (2, 2)), hs);
            assert_eq!(m.view((2, 2), (2, 2)), hr);
            let lower = m.view((2, 0), (2, 2)).into_owned();
            match layout {
                CouplingLayout::MainText => assert_eq!(lower, cpl.adjoint()),
                CouplingLayout::Appendix => assert_eq!(lower, cpl),
            }
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut p = TwoSiteParams::fig2();
        p.j0x = f64::NAN;
        assert!(matches!(build_two_site(&p), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = CMatrix::from_row_slice(2, 2, &[real(0.0), real(1.0), real(0.0), real(0.0)]);
        assert!(ManyBodyOperator::new(BipartiteBasis::new(1, 2).unwrap(), m).is_err());
    }

    #[test]
    fn diagonal_and_swap_cases() {
        let b = BipartiteBasis::new(1, 2).unwrap();
        let d = ManyBodyOperator::new(
            b,
            CMatrix::from_row_slice(2, 2, &[real(1.0), real(0.0), real(0.0), real(2.0)]),
        )
        .unwrap();
        let es = diagonalize(&d).unwrap();
        assert_eq!(es.values, vec![1.0, 2.0]);
        assert!((es.vectors[(0, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((es.vectors[(1, 1)].norm() - 1.0).abs() < 1e-15);

        let x = ManyBodyOperator::new(
            b,
            CMatrix::from_row_slice(2, 2, &[real(0.0), real(1.0), real(1.0), real(0.0)]),
        )
        .unwrap();
        let es = diagonalize(&x).unwrap();
        assert!((es.values[0] + 1.0).abs() < 1e-15 && (es.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn appendix_layout_is_degenerate_at_fig2() {
        let h = build_two_site(&TwoSiteParams::fig2().with_layout(CouplingLayout::Appendix)).unwrap();
        let es = diagonalize(&h).unwrap();
        assert!(es.degenerate);
        assert!((es.values[1] + 2.0).abs() < 1e-12 && (es.values[2] + 2.0).abs() < 1e-12);
        let h = build_two_site(&TwoSiteParams::fig2()).unwrap();
        assert!(!diagonalize(&h).unwrap().degenerate);
    }

    #[test]
    fn pauli_matrices() {
        let one = real(1.0);
        assert_eq!(pauli(1).unwrap(), CMatrix::from_row_slice(2, 2, &[real(0.0), one, one, real(0.0)]));
        assert_eq!(pauli(3).unwrap(), CMatrix::from_row_slice(2, 2, &[one, real(0.0), real(0.0), -one]));
        for k in 1..=3 {
            let s = pauli(k).unwrap();
            assert_eq!(&s * &s, CMatrix::identity(2, 2));
        }
        assert!(pauli(0).is_err());
        assert!(pauli(4).is_err());
    }

    #[test]
    fn params_json_shape() {
        let p: TwoSiteParams = serde_json::from_str(
            r#"{"omega0": 6, "omega_d": [2, 2], "V00": 1.5, "V0x": 1, "Vxx": 0.5, "J0x": 1}"#,
        )
        .unwrap();
        assert_eq!(p, TwoSiteParams::fig2());
        let back: TwoSiteParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
