//! Weak-coupling approximations: first-order eigenpairs, the diagonal
//! (RPA-like) slope and the Lorentzian weight factor.

use std::f64::consts::PI;

use crate::linalg::{self, real};
use crate::projection::ProjectionBlocks;
use crate::renorm::{self, CouplingKernel};
use crate::{CVector, Error, Result};

const DAMPING: f64 = 0.5;
const MAX_ITER: usize = 200;
const CONVERGENCE_RTOL: f64 = 1e-12;
const GAP_RTOL: f64 = 1e-8;
const KSS_MIN: f64 = 1e-14;
/// Default cutoff in units of the half-width.
pub const CUTOFF_FACTOR: f64 = 50.0;

fn static_pair(blocks: &ProjectionBlocks, static_index: usize) -> Result<(Vec<f64>, crate::CMatrix)> {
    let (vals, vecs) = blocks.static_eigen()?;
    if static_index >= vals.len() {
        return Err(Error::invalid(format!("static index {static_index} out of range ({})", vals.len())));
    }
    Ok((vals, vecs))
}

/// `⟨S|M(ω)|S'⟩` in the static eigenbasis.
pub fn m_static(blocks: &ProjectionBlocks, omega: f64) -> Result<crate::CMatrix> {
    let (_, vecs) = blocks.static_eigen()?;
    Ok(vecs.adjoint() * renorm::schur_m(blocks, omega)? * vecs)
}

/// Solves `ω = ω_S + ε M_SS(ω)` by damped fixed-point iteration from `ω_S`.
pub fn first_order_eigenvalue(blocks: &ProjectionBlocks, static_index: usize, epsilon: f64) -> Result<f64> {
    let b = blocks.with_epsilon(epsilon)?;
    let (vals, vecs) = static_pair(&b, static_index)?;
    let s = vecs.column(static_index).into_owned();
    let w_s = vals[static_index];
    if epsilon == 0.0 {
        return Ok(w_s);
    }
    let tol = CONVERGENCE_RTOL * renorm::energy_scale(&b)?;
    let mut w = w_s;
    let mut change = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let m = renorm::schur_m(&b, w)?;
        let target = w_s + epsilon * s.dotc(&(&m * &s)).re;
        let next = (1.0 - DAMPING) * w + DAMPING * target;
        change = (next - w).abs();
        w = next;
        if change <= tol {
            return Ok(w);
        }
    }
    Err(Error::NonConvergence { what: "first-order eigenvalue iteration", iterations: MAX_ITER, residual: change })
}

/// `|S⟩ + ε Σ_{S'≠S} M_{S'S}(ω_λ)/(ω_S − ω_S') |S'⟩`, normalized, in the
/// static coordinates of the blocks.
pub fn lippmann_schwinger_state(blocks: &ProjectionBlocks, static_index: usize, epsilon: f64) -> Result<CVector> {
    let (vals, vecs) = static_pair(blocks, static_index)?;
    let s = vecs.column(static_index).into_owned();
    if epsilon == 0.0 {
        return Ok(s);
    }
    let scale = renorm::energy_scale(&blocks.with_epsilon(epsilon)?)?;
    let w = first_order_eigenvalue(blocks, static_index, epsilon)?;
    let m = m_static(blocks, w)?;
    let mut out = s;
    for (k, &wk) in vals.iter().enumerate() {
        if k == static_index {
            continue;
        }
        let gap = vals[static_index] - wk;
        if gap.abs() < GAP_RTOL * scale {
            return Err(Error::NumericConsistency(format!(
                "static levels {static_index} and {k} are degenerate (gap {gap:e})"
            )));
        }
        out += vecs.column(k) * (m[(k, static_index)] * real(epsilon / gap));
    }
    Ok(linalg::normalized(out))
}

/// `ε M_SS(ω_λ)² / 𝒦_SS`, the diagonal-dominant estimate of `−dω_R/dω`.
pub fn slope_rpa(
    blocks: &ProjectionBlocks,
    kernel: &CouplingKernel,
    static_index: usize,
    omega_lambda: f64,
    epsilon: f64,
) -> Result<f64> {
    static_pair(blocks, static_index)?;
    let k_ss = kernel.k_ss(static_index);
    if k_ss < KSS_MIN {
        return Err(Error::NumericConsistency(format!("K_SS = {k_ss:e} is too small")));
    }
    let m_ss = m_static(blocks, omega_lambda)?[(static_index, static_index)].re;
    Ok(epsilon * m_ss * m_ss / k_ss)
}

/// Lorentzian weight factor centred on a static level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianModel {
    pub omega_s: f64,
    pub half_width: f64,
    pub cutoff: f64,
}

impl LorentzianModel {
    pub fn new(omega_s: f64, half_width: f64, cutoff: f64) -> Result<Self> {
        if !(half_width > 0.0) || !(cutoff > half_width) || !omega_s.is_finite() || !cutoff.is_finite() {
            return Err(Error::invalid(format!(
                "need 0 < half_width < cutoff, got half_width {half_width}, cutoff {cutoff}"
            )));
        }
        Ok(Self { omega_s, half_width, cutoff })
    }

    /// Half-width `√(ε 𝒦_SS)` with the default cutoff.
    pub fn from_kernel(omega_s: f64, epsilon: f64, k_ss: f64) -> Result<Self> {
        let hw = (epsilon * k_ss).sqrt();
        Self::new(omega_s, hw, CUTOFF_FACTOR * hw)
    }

    /// `∫_{−Ω}^{Ω}` of the weight, `(2/π) atan(Ω/hw)`.
    pub fn mass_within_cutoff(&self) -> f64 {
        2.0 / PI * (self.cutoff / self.half_width).atan()
    }
}

/// `(1/(π hw)) / (1 + (ω − ω_S)²/hw²)`.
pub fn lorentzian_weight(model: &LorentzianModel, omega: f64) -> Result<f64> {
    let x = omega - model.omega_s;
    if x.abs() >= model.cutoff {
        return Err(Error::invalid(format!("|omega - omega_S| = {} is beyond the cutoff {}", x.abs(), model.cutoff)));
    }
    Ok(lorentzian(x, model.half_width))
}

pub(crate) fn lorentzian(x: f64, hw: f64) -> f64 {
    1.0 / (PI * hw) / (1.0 + (x / hw).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{build_two_site, BipartiteBasis, ManyBodyOperator, TwoSiteParams};
    use crate::linalg::c;
    use crate::projection::{project, BathState};
    use crate::renorm::{kernel_build, slope_at, solve_all};
    use crate::CMatrix;

    fn fig2_blocks() -> ProjectionBlocks {
        let h = build_two_site(&TwoSiteParams::fig2()).unwrap();
        project(&h, &BathState::basis(2, 0).unwrap()).unwrap()
    }

    fn scalar_blocks(s: f64, r: f64, cpl: crate::Complex64) -> ProjectionBlocks {
        let m = CMatrix::from_row_slice(2, 2, &[real(s), cpl, cpl.conj(), real(r)]);
        let h = ManyBodyOperator::new(BipartiteBasis::new(1, 2).unwrap(), m).unwrap();
        project(&h, &BathState::basis(2, 0).unwrap()).unwrap()
    }

    #[test]
    fn static_limit() {
        let b = fig2_blocks();
        let (ws, vecs) = b.static_eigen().unwrap();
        assert_eq!(first_order_eigenvalue(&b, 1, 0.0).unwrap(), ws[1]);
        let v = lippmann_schwinger_state(&b, 0, 0.0).unwrap();
        assert_eq!(v, vecs.column(0).into_owned());
    }

    #[test]
    fn scalar_first_order_is_the_exact_quadratic_root() {
        // with one static and one rest level the first-order equation is exact
        let (s, r, cc) = (0.5, 2.0, c(0.3, 0.4));
        let b = scalar_blocks(s, r, cc);
        for eps in [0.01, 0.3, 1.0] {
            let w = first_order_eigenvalue(&b, 0, eps).unwrap();
            // (w − s)(w − r) = ε|c|², root nearest s
            let (p, q) = (s + r, s * r - eps * cc.norm_sqr());
            let root = 0.5 * (p - (p * p - 4.0 * q).sqrt());
            assert!((w - root).abs() < 1e-11, "{w} vs {root}");
        }
    }

    #[test]
    fn rpa_slope_is_exact_for_a_scalar_model() {
        let b = scalar_blocks(0.5, 2.0, c(0.3, 0.4));
        let k = kernel_build(&b).unwrap();
        for fp in solve_all(&b).unwrap() {
            let rpa = slope_rpa(&b, &k, 0, fp.omega_lambda, 1.0).unwrap();
            let exact = slope_at(&b, fp.omega_lambda, &CVector::from_element(1, real(1.0))).unwrap();
            assert!((rpa + exact).abs() < 1e-12 * (1.0 + rpa.abs()));
        }
    }

    #[test]
    fn rpa_slope_vanishes_without_coupling() {
        let b = fig2_blocks();
        let k = kernel_build(&b).unwrap();
        assert_eq!(slope_rpa(&b, &k, 0, -9.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn lorentzian_shape() {
        let m = LorentzianModel::new(1.0, 0.2, 10.0).unwrap();
        let peak = lorentzian_weight(&m, 1.0).unwrap();
        assert!((peak - 1.0 / (PI * 0.2)).abs() < 1e-14);
        assert!((lorentzian_weight(&m, 1.2).unwrap() - 0.5 * peak).abs() < 1e-14);
        assert!((lorentzian_weight(&m, 0.8).unwrap() - 0.5 * peak).abs() < 1e-14);
        assert!(lorentzian_weight(&m, 11.5).is_err());
        assert!(LorentzianModel::new(0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn lorentzian_mass_within_cutoff() {
        let m = LorentzianModel::from_kernel(0.0, 0.04, 1.0).unwrap();
        // composite Simpson over (−Ω, Ω)
        let n = 200_000;
        let h = 2.0 * m.cutoff / n as f64;
        let mut total = 0.0;
        for k in 0..=n {
            let x = -m.cutoff + h * k as f64;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            total += w * lorentzian(x, m.half_width);
        }
        total *= h / 3.0;
        assert!((total - m.mass_within_cutoff()).abs() < 1e-9);
        assert!((1.0 - total).abs() <= 2.0 / (PI * 50.0));
    }
}
