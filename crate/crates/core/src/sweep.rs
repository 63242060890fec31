//! Bath-state scans and `(J0x, V0x)` heatmaps of the maximal separability.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::{build_two_site, diagonalize, EigenSystem, ManyBodyOperator, TwoSiteParams};
use crate::projection::{rotate_bath_state, BathState, BlochRotation};
use crate::renorm::separability_of;
use crate::{CMatrix, Complex64, Error, Result};

/// Grid zoom per refinement round.
const ZOOM: f64 = 4.0;
/// Points per axis in a refinement round, spanning ± the previous step.
const ZOOM_POINTS: i32 = 9;
/// Polishing continues zooming until every step is below this.
const POLISH_STEP: f64 = 1e-8;

/// Bath-scan resolution: axis polar × azimuth × rotation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanResolution {
    pub n_polar: usize,
    pub n_azimuth: usize,
    pub n_angle: usize,
    #[serde(default = "default_refine")]
    pub refine_rounds: usize,
    /// Restricts the axis to polar angles below this value.
    #[serde(default)]
    pub polar_cap: Option<f64>,
}

fn default_refine() -> usize {
    2
}

impl Default for ScanResolution {
    fn default() -> Self {
        Self { n_polar: 16, n_azimuth: 32, n_angle: 64, refine_rounds: 2, polar_cap: None }
    }
}

impl ScanResolution {
    pub fn new(n_polar: usize, n_azimuth: usize, n_angle: usize) -> Result<Self> {
        let r = Self { n_polar, n_azimuth, n_angle, ..Self::default() };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_polar < 8 || self.n_azimuth < 8 || self.n_angle < 16 {
            return Err(Error::invalid(format!(
                "scan resolution must be at least (8, 8, 16), got ({}, {}, {})",
                self.n_polar, self.n_azimuth, self.n_angle
            )));
        }
        if let Some(cap) = self.polar_cap {
            if !(cap > 0.0 && cap <= PI) {
                return Err(Error::invalid(format!("polar cap must lie in (0, pi], got {cap}")));
            }
        }
        Ok(())
    }

    fn polar_max(&self) -> f64 {
        self.polar_cap.unwrap_or(PI)
    }
}

/// Bath-factor Gram matrix `R_jk = Σ_i w̄_ij w_ik` of an eigenvector, so that
/// `Z(b) = Σ_jk b_j R_jk b̄_k`.
fn bath_gram(es: &EigenSystem, k: usize) -> CMatrix {
    let w = es.basis.coefficients(&es.vector(k));
    w.adjoint() * w
}

/// `Z` of the state `U|0⟩` rotated within the bath pair `(0, 1)`.
fn z_rotated(gram: &CMatrix, rot: &BlochRotation) -> f64 {
    let (p0, px) = rot.coefficients();
    let b = [p0, px];
    let mut z = Complex64::new(0.0, 0.0);
    for j in 0..2 {
        for k in 0..2 {
            z += b[j] * gram[(j, k)] * b[k].conj();
        }
    }
    z.re.clamp(0.0, 1.0)
}

/// `Z(φ)` of every eigenstate on a uniform `[0, 2π)` grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiTrace {
    pub axis: [f64; 3],
    pub phi: Vec<f64>,
    /// `z[eigenstate][φ index]`, eigenstates in ascending energy.
    pub z: Vec<Vec<f64>>,
}

pub fn bath_phi_sweep(
    h: &ManyBodyOperator,
    base: &BathState,
    axis: [f64; 3],
    phi_steps: usize,
    pair: (usize, usize),
) -> Result<PhiTrace> {
    if phi_steps < 2 {
        return Err(Error::invalid("phi sweep needs at least two steps"));
    }
    BlochRotation::new(axis, 0.0)?;
    let es = diagonalize(h)?;
    let ds = h.basis().soi_dim();
    let phi: Vec<f64> = (0..phi_steps).map(|k| 2.0 * PI * k as f64 / phi_steps as f64).collect();
    let baths: Vec<BathState> = phi
        .iter()
        .map(|&p| rotate_bath_state(base, &BlochRotation::new(axis, p)?, pair))
        .collect::<Result<_>>()?;
    let z = (0..es.len())
        .map(|k| {
            let v = es.vector(k);
            baths.iter().map(|b| separability_of(&v, b, ds)).collect()
        })
        .collect();
    Ok(PhiTrace { axis, phi, z })
}

/// Best bath rotation found for one eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxSeparability {
    pub z_max: f64,
    pub polar: f64,
    pub azimuth: f64,
    pub angle: f64,
}

impl MaxSeparability {
    pub fn rotation(&self) -> BlochRotation {
        BlochRotation::from_spherical(self.polar, self.azimuth, self.angle)
    }
}

fn scan_gram(gram: &CMatrix, res: &ScanResolution) -> MaxSeparability {
    let pmax = res.polar_max();
    let eval = |p: f64, a: f64, g: f64| z_rotated(gram, &BlochRotation::from_spherical(p, a, g));
    let mut best = MaxSeparability { z_max: -1.0, polar: 0.0, azimuth: 0.0, angle: 0.0 };
    let consider = |p: f64, a: f64, g: f64, best: &mut MaxSeparability| {
        let z = eval(p, a, g);
        if z > best.z_max {
            *best = MaxSeparability { z_max: z, polar: p, azimuth: a, angle: g };
        }
    };
    let dp = pmax / (res.n_polar - 1) as f64;
    let da = 2.0 * PI / res.n_azimuth as f64;
    let dg = 2.0 * PI / res.n_angle as f64;
    for i in 0..res.n_polar {
        for j in 0..res.n_azimuth {
            for k in 0..res.n_angle {
                consider(i as f64 * dp, j as f64 * da, k as f64 * dg, &mut best);
            }
        }
    }
    let mut steps = [dp, da, dg];
    let mut round = 0;
    while round < res.refine_rounds || steps.iter().any(|&s| s > POLISH_STEP) {
        let centre = best;
        let fine = steps.map(|s| s / ZOOM);
        let half = ZOOM_POINTS / 2;
        for i in -half..=half {
            let p = (centre.polar + i as f64 * fine[0]).clamp(0.0, pmax);
            for j in -half..=half {
                let a = centre.azimuth + j as f64 * fine[1];
                for k in -half..=half {
                    consider(p, a, centre.angle + k as f64 * fine[2], &mut best);
                }
            }
        }
        steps = fine;
        round += 1;
    }
    best
}

/// Maximal `Z` of eigenstate `eig_index` over Bloch-rotated bath states.
pub fn max_separability(h: &ManyBodyOperator, eig_index: usize, res: &ScanResolution) -> Result<MaxSeparability> {
    res.validate()?;
    if h.basis().bath_dim() < 2 {
        return Err(Error::invalid("bath rotations need a bath of dimension at least 2"));
    }
    let es = diagonalize(h)?;
    if eig_index >= es.len() {
        return Err(Error::invalid(format!("eigenstate index {eig_index} out of range ({})", es.len())));
    }
    Ok(scan_gram(&bath_gram(&es, eig_index).view((0, 0), (2, 2)).into_owned(), res))
}

fn max_all(es: &EigenSystem, res: &ScanResolution) -> Vec<MaxSeparability> {
    (0..es.len())
        .map(|k| scan_gram(&bath_gram(es, k).view((0, 0), (2, 2)).into_owned(), res))
        .collect()
}

/// `[min, max, steps]` for one swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl From<[f64; 3]> for AxisSpec {
    fn from(v: [f64; 3]) -> Self {
        Self { min: v[0], max: v[1], steps: v[2] as usize }
    }
}

impl From<AxisSpec> for [f64; 3] {
    fn from(a: AxisSpec) -> Self {
        [a.min, a.max, a.steps as f64]
    }
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| if k + 1 == self.steps { self.max } else { self.min + h * k as f64 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "J0x")]
    pub j0x: AxisSpec,
    #[serde(rename = "V0x")]
    pub v0x: AxisSpec,
}

impl GridSpec {
    pub fn validate(&self, allow_single: bool) -> Result<()> {
        for (name, a) in [("J0x", self.j0x), ("V0x", self.v0x)] {
            let min_steps = if allow_single { 1 } else { 2 };
            if a.steps < min_steps || !a.min.is_finite() || !a.max.is_finite() || a.min > a.max {
                return Err(Error::invalid(format!("invalid {name} axis {:?}", <[f64; 3]>::from(a))));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapPoint {
    #[serde(rename = "J0x")]
    pub j0x: f64,
    #[serde(rename = "V0x")]
    pub v0x: f64,
    /// Per eigenstate, ascending energy.
    pub zmax: Vec<f64>,
    pub argmax: Vec<[f64; 3]>,
    pub mean: f64,
    pub std: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub model: TwoSiteParams,
    pub grid: Option<GridSpec>,
    pub bath_scan: ScanResolution,
    pub points: Vec<HeatmapPoint>,
}

fn point(base: &TwoSiteParams, j0x: f64, v0x: f64, res: &ScanResolution) -> Result<HeatmapPoint> {
    let params = TwoSiteParams { j0x, v0x, ..*base };
    let es = diagonalize(&build_two_site(&params)?)?;
    let best = max_all(&es, res);
    let zmax: Vec<f64> = best.iter().map(|b| b.z_max).collect();
    let n = zmax.len() as f64;
    let mean = zmax.iter().sum::<f64>() / n;
    let std = (zmax.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(HeatmapPoint {
        j0x,
        v0x,
        argmax: best.iter().map(|b| [b.polar, b.azimuth, b.angle]).collect(),
        zmax,
        mean,
        std,
        degenerate: es.degenerate,
    })
}

/// Maximal separability of every eigenstate over the `(J0x, V0x)` grid,
/// rows ordered with `J0x` outer and `V0x` inner.
pub fn heatmap(base: &TwoSiteParams, grid: &GridSpec, res: &ScanResolution, workers: Option<usize>) -> Result<SweepResult> {
    grid.validate(true)?;
    res.validate()?;
    let coords: Vec<(f64, f64)> =
        grid.j0x.values().into_iter().flat_map(|j| grid.v0x.values().into_iter().map(move |v| (j, v))).collect();
    let run = || -> Result<Vec<HeatmapPoint>> {
        coords.par_iter().map(|&(j, v)| point(base, j, v, res)).collect()
    };
    let points = match workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?
            .install(run)?,
        _ => run()?,
    };
    Ok(SweepResult { model: *base, grid: Some(*grid), bath_scan: *res, points })
}

/// Same as [`heatmap`] on one thread, point by point.
pub fn heatmap_serial(base: &TwoSiteParams, grid: &GridSpec, res: &ScanResolution) -> Result<SweepResult> {
    grid.validate(true)?;
    res.validate()?;
    let mut points = Vec::new();
    for j in grid.j0x.values() {
        for v in grid.v0x.values() {
            points.push(point(base, j, v, res)?);
        }
    }
    Ok(SweepResult { model: *base, grid: Some(*grid), bath_scan: *res, points })
}

pub const CSV_HEADER: &str = "J0x,V0x,zmax_gs,zmax_e1,zmax_e2,zmax_e3,zmax_mean,zmax_std";

/// Twelve significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn to_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &result.points {
        let mut fields = vec![fmt_num(p.j0x), fmt_num(p.v0x)];
        fields.extend(p.zmax.iter().map(|&z| fmt_num(z)));
        fields.push(fmt_num(p.mean));
        fields.push(fmt_num(p.std));
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

pub fn persist(result: &SweepResult, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(result),
        Format::Json => serde_json::to_string_pretty(result)? + "\n",
    };
    crate::io::write_atomic(path, text.as_bytes())
}
