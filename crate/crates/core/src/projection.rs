//! Bath-state projection: static, rest and coupling blocks, and Bloch
//! rotations of bath states.

use serde::{Deserialize, Serialize};

use crate::hilbert::{BipartiteBasis, ManyBodyOperator};
use crate::linalg::{self, c, real};
use crate::{CMatrix, CVector, Complex64, Error, Result};

const NORM_TOL: f64 = 1e-12;

/// Axis and angle that produced a rotated bath state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub axis: [f64; 3],
    pub angle: f64,
    pub pair: (usize, usize),
}

/// Normalized state of the bath factor.
#[derive(Debug, Clone, PartialEq)]
pub struct BathState {
    amplitudes: CVector,
    pub provenance: Option<Provenance>,
}

impl BathState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::invalid("bath state has no amplitudes"));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("bath state has non-finite amplitudes"));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("bath state norm is {norm}, expected 1")));
        }
        Ok(Self { amplitudes, provenance: None })
    }

    /// Canonical basis state `index` of a `dim`-dimensional bath.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::invalid(format!("bath index {index} out of range for dimension {dim}")));
        }
        let mut v = CVector::zeros(dim);
        v[index] = real(1.0);
        Self::new(v)
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }
}

/// Rotation by `angle` about the unit Bloch `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochRotation {
    axis: [f64; 3],
    angle: f64,
}

impl BlochRotation {
    pub fn new(axis: [f64; 3], angle: f64) -> Result<Self> {
        let norm = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("rotation axis has norm {norm}, expected 1")));
        }
        if !angle.is_finite() {
            return Err(Error::invalid("rotation angle must be finite"));
        }
        Ok(Self { axis, angle })
    }

    /// Axis from spherical angles (polar from +z, azimuth from +x).
    pub fn from_spherical(polar: f64, azimuth: f64, angle: f64) -> Self {
        let (sp, cp) = polar.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Self { axis: [sp * ca, sp * sa, cp], angle }
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// `(ψ0, ψx)`: the image of the first pair member under the rotation.
    pub fn coefficients(&self) -> (Complex64, Complex64) {
        let [nx, ny, nz] = self.axis;
        let (s, co) = (0.5 * self.angle).sin_cos();
        (c(co, -nz * s), c(ny * s, -nx * s))
    }
}

/// `cos(φ/2) I − i (n·σ) sin(φ/2)`.
pub fn bloch_unitary(rot: &BlochRotation) -> CMatrix {
    let [nx, ny, nz] = rot.axis;
    let (s, co) = (0.5 * rot.angle).sin_cos();
    CMatrix::from_row_slice(
        2,
        2,
        &[c(co, -nz * s), c(-ny * s, -nx * s), c(ny * s, -nx * s), c(co, nz * s)],
    )
}

/// Applies the Bloch unitary to the amplitudes at `pair` and leaves the rest
/// untouched.
pub fn rotate_bath_state(base: &BathState, rot: &BlochRotation, pair: (usize, usize)) -> Result<BathState> {
    let (i, j) = pair;
    let d = base.dim();
    if i == j || i >= d || j >= d {
        return Err(Error::invalid(format!("invalid rotation pair ({i}, {j}) for bath dimension {d}")));
    }
    let u = bloch_unitary(rot);
    let mut v = base.amplitudes.clone();
    let (a, b) = (v[i], v[j]);
    v[i] = u[(0, 0)] * a + u[(0, 1)] * b;
    v[j] = u[(1, 0)] * a + u[(1, 1)] * b;
    let norm = v.norm();
    let mut out = BathState::new(v.unscale(norm))?;
    out.provenance = Some(Provenance { axis: rot.axis, angle: rot.angle, pair });
    Ok(out)
}

/// Unitary bath frame whose first column is `bath`; the complement comes from
/// modified Gram–Schmidt on the canonical vectors minus the most parallel one.
pub fn bath_frame(bath: &BathState) -> CMatrix {
    let d = bath.dim();
    let b = bath.amplitudes();
    let drop = (0..d)
        .max_by(|&x, &y| b[x].norm_sqr().total_cmp(&b[y].norm_sqr()))
        .unwrap_or(0);
    let mut cols: Vec<CVector> = vec![b.clone()];
    for k in (0..d).filter(|&k| k != drop) {
        let mut v = CVector::zeros(d);
        v[k] = real(1.0);
        // two passes keep the completion orthonormal to machine precision
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        cols.push(linalg::normalized(v));
    }
    CMatrix::from_columns(&cols)
}

/// `I_SOI ⊗ |bath⟩⟨bath|` in the flattened product basis.
pub fn bath_projector(bath: &BathState, soi_dim: usize) -> CMatrix {
    let b = bath.amplitudes();
    (b * b.adjoint()).kronecker(&CMatrix::identity(soi_dim, soi_dim))
}

/// Static, rest and coupling blocks of a universe for one bath state.
#[derive(Debug, Clone)]
pub struct ProjectionBlocks {
    pub bath: BathState,
    pub h_s: CMatrix,
    pub h_r: CMatrix,
    /// `D_SOI × (Λ − D_SOI)`, unscaled by `ε`.
    pub c: CMatrix,
    pub epsilon: f64,
    pub basis: BipartiteBasis,
    /// Columns are the rotated product basis expressed in the original one.
    pub frame: CMatrix,
}

impl ProjectionBlocks {
    pub fn soi_dim(&self) -> usize {
        self.h_s.nrows()
    }

    pub fn rest_dim(&self) -> usize {
        self.h_r.nrows()
    }

    pub fn dim(&self) -> usize {
        self.soi_dim() + self.rest_dim()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self { epsilon, ..self.clone() })
    }

    /// Universe at the stored `ε`, in the rotated basis.
    pub fn universe(&self) -> ManyBodyOperator {
        assemble(self, self.epsilon)
    }

    /// Coordinates of an original-basis vector in the rotated basis.
    pub fn to_rotated(&self, v: &CVector) -> CVector {
        self.frame.adjoint() * v
    }

    pub fn from_rotated(&self, v: &CVector) -> CVector {
        &self.frame * v
    }

    /// Eigenpairs of `H_S`, ascending.
    pub fn static_eigen(&self) -> Result<(Vec<f64>, CMatrix)> {
        linalg::eigh(&self.h_s)
    }

    /// Eigenvalues of `H_R`, the poles of `M(ω)`.
    pub fn poles(&self) -> Result<Vec<f64>> {
        linalg::eigvalsh(&self.h_r)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if (0.0..=1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")))
    }
}

/// Splits `H` into blocks relative to `bath` (at `ε = 1`).
pub fn project(h: &ManyBodyOperator, bath: &BathState) -> Result<ProjectionBlocks> {
    let basis = h.basis();
    if bath.dim() != basis.bath_dim() {
        return Err(Error::invalid(format!(
            "bath state has dimension {}, universe bath has {}",
            bath.dim(),
            basis.bath_dim()
        )));
    }
    let ds = basis.soi_dim();
    let n = basis.dim();
    let frame = bath_frame(bath).kronecker(&CMatrix::identity(ds, ds));
    let rotated = frame.adjoint() * h.matrix() * &frame;
    let h_s = linalg::hermitize(&rotated.view((0, 0), (ds, ds)).into_owned());
    let h_r = linalg::hermitize(&rotated.view((ds, ds), (n - ds, n - ds)).into_owned());
    let c = rotated.view((0, ds), (ds, n - ds)).into_owned();
    Ok(ProjectionBlocks { bath: bath.clone(), h_s, h_r, c, epsilon: 1.0, basis, frame })
}

/// `[[H_S, √ε C], [√ε C†, H_R]]` in the rotated basis.
pub fn reassemble(blocks: &ProjectionBlocks, epsilon: f64) -> Result<ManyBodyOperator> {
    check_epsilon(epsilon)?;
    Ok(assemble(blocks, epsilon))
}

fn assemble(blocks: &ProjectionBlocks, epsilon: f64) -> ManyBodyOperator {
    let ds = blocks.soi_dim();
    let n = blocks.dim();
    let s = real(epsilon.sqrt());
    let mut m = CMatrix::zeros(n, n);
    m.view_mut((0, 0), (ds, ds)).copy_from(&blocks.h_s);
    m.view_mut((ds, ds), (n - ds, n - ds)).copy_from(&blocks.h_r);
    m.view_mut((0, ds), (ds, n - ds)).copy_from(&(&blocks.c * s));
    m.view_mut((ds, 0), (n - ds, ds)).copy_from(&(blocks.c.adjoint() * s));
    ManyBodyOperator::new(blocks.basis, m).expect("blocks assemble to a Hermitian operator")
}
