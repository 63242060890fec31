//! JSON inputs and atomic file output.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::hilbert::{build_two_site, BipartiteBasis, ManyBodyOperator, TwoSiteParams};
use crate::projection::{rotate_bath_state, BathState, BlochRotation};
use crate::sweep::{GridSpec, ScanResolution};
use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HamiltonianFile {
    pub soi_dim: usize,
    pub bath_dim: usize,
    pub matrix_re: Vec<Vec<f64>>,
    #[serde(default)]
    pub matrix_im: Option<Vec<Vec<f64>>>,
}

impl HamiltonianFile {
    pub fn into_operator(self) -> Result<ManyBodyOperator> {
        let basis = BipartiteBasis::new(self.soi_dim, self.bath_dim)?;
        let n = basis.dim();
        let im = self.matrix_im.unwrap_or_else(|| vec![vec![0.0; n]; n]);
        if self.matrix_re.len() != n || im.len() != n {
            return Err(Error::invalid(format!("matrix must have {n} rows")));
        }
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            if self.matrix_re[i].len() != n || im[i].len() != n {
                return Err(Error::invalid(format!("row {i} must have {n} entries")));
            }
            for j in 0..n {
                m[(i, j)] = Complex64::new(self.matrix_re[i][j], im[i][j]);
            }
        }
        ManyBodyOperator::new(basis, m)
    }
}

/// A universe loaded from either JSON form.
#[derive(Debug, Clone)]
pub enum ModelInput {
    TwoSite(TwoSiteParams),
    Matrix(ManyBodyOperator),
}

impl ModelInput {
    pub fn operator(&self) -> Result<ManyBodyOperator> {
        match self {
            ModelInput::TwoSite(p) => build_two_site(p),
            ModelInput::Matrix(h) => Ok(h.clone()),
        }
    }
}

/// Interprets a JSON value as a Hamiltonian file when it has `matrix_re`,
/// otherwise as two-site parameters.
pub fn parse_model(value: serde_json::Value) -> Result<ModelInput> {
    if value.get("matrix_re").is_some() {
        let file: HamiltonianFile =
            serde_json::from_value(value).map_err(|e| Error::invalid(format!("bad Hamiltonian file: {e}")))?;
        Ok(ModelInput::Matrix(file.into_operator()?))
    } else {
        let p: TwoSiteParams =
            serde_json::from_value(value).map_err(|e| Error::invalid(format!("bad two-site config: {e}")))?;
        Ok(ModelInput::TwoSite(p))
    }
}

pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{} is not valid JSON: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<ModelInput> {
    parse_model(read_json(path)?)
}

/// Bath-state JSON, explicit amplitudes or a rotation of a basis state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BathSpec {
    Amplitudes {
        amplitudes_re: Vec<f64>,
        #[serde(default)]
        amplitudes_im: Option<Vec<f64>>,
    },
    Rotation {
        axis: [f64; 3],
        phi: f64,
        #[serde(default)]
        base_index: usize,
        #[serde(default = "default_pair")]
        pair: (usize, usize),
    },
}

fn default_pair() -> (usize, usize) {
    (0, 1)
}

impl BathSpec {
    pub fn resolve(&self, bath_dim: usize) -> Result<BathState> {
        match self {
            BathSpec::Amplitudes { amplitudes_re, amplitudes_im } => {
                let n = amplitudes_re.len();
                if n != bath_dim {
                    return Err(Error::invalid(format!("bath state has {n} amplitudes, bath has {bath_dim}")));
                }
                let im = amplitudes_im.clone().unwrap_or_else(|| vec![0.0; n]);
                if im.len() != n {
                    return Err(Error::invalid("amplitudes_re and amplitudes_im differ in length"));
                }
                BathState::new(CVector::from_iterator(n, (0..n).map(|k| Complex64::new(amplitudes_re[k], im[k]))))
            }
            BathSpec::Rotation { axis, phi, base_index, pair } => {
                let base = BathState::basis(bath_dim, *base_index)?;
                rotate_bath_state(&base, &BlochRotation::new(*axis, *phi)?, *pair)
            }
        }
    }
}

/// Heatmap configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: TwoSiteParams,
    pub grid: GridSpec,
    #[serde(default)]
    pub bath_scan: ScanResolution,
    #[serde(default)]
    pub workers: Option<usize>,
}
