//! Non-interacting single-impurity Anderson model, its impurity spectral
//! weights, time-domain Green's function and the effective two-level model.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, c, real};
use crate::weak::lorentzian;
use crate::{CMatrix, Complex64, Error, Result};

/// Tag recorded with every SIAM output: the width is `π D0 t0²`.
pub const WIDTH_CONVENTION: &str = "golden_rule_pi";
const BISECTION_CAP: usize = 200;

/// Flat-band discretization data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBath {
    /// Density of bath states `L/W`.
    pub d0: f64,
    pub t0: f64,
    /// `D0 · t_l²`, which equals `t0²` for the chosen coupling scaling.
    pub delta0: f64,
    /// Golden-rule half-width `π · delta0`.
    pub half_width: f64,
    pub width_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiamModel {
    pub omega_s: f64,
    pub bath_energies: Vec<f64>,
    pub couplings: Vec<Complex64>,
    pub analytic: Option<AnalyticBath>,
}

impl SiamModel {
    pub fn new(omega_s: f64, bath_energies: Vec<f64>, couplings: Vec<Complex64>) -> Result<Self> {
        if bath_energies.len() != couplings.len() {
            return Err(Error::invalid(format!(
                "{} bath energies but {} couplings",
                bath_energies.len(),
                couplings.len()
            )));
        }
        let finite = omega_s.is_finite()
            && bath_energies.iter().all(|x| x.is_finite())
            && couplings.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(Error::invalid("SIAM parameters must be finite"));
        }
        Ok(Self { omega_s, bath_energies, couplings, analytic: None })
    }

    pub fn modes(&self) -> usize {
        self.bath_energies.len()
    }

    /// `[[ω_S, t†], [t, diag(ω_l)]]`.
    pub fn matrix(&self) -> CMatrix {
        let n = self.modes();
        let mut m = CMatrix::zeros(n + 1, n + 1);
        m[(0, 0)] = real(self.omega_s);
        for (l, (&e, &t)) in self.bath_energies.iter().zip(&self.couplings).enumerate() {
            m[(l + 1, l + 1)] = real(e);
            m[(l + 1, 0)] = t;
            m[(0, l + 1)] = t.conj();
        }
        m
    }
}

/// Flat band of `modes` levels at the cell centres of
/// `[ω_S − W/2, ω_S + W/2]`, each coupled with `t0 √(W/L)`.
pub fn siam_build(omega_s: f64, bandwidth: f64, modes: usize, t0: f64) -> Result<SiamModel> {
    if modes < 2 || !(bandwidth > 0.0) || !t0.is_finite() {
        return Err(Error::invalid(format!(
            "need L >= 2 and W > 0, got L = {modes}, W = {bandwidth}, t0 = {t0}"
        )));
    }
    let de = bandwidth / modes as f64;
    let energies: Vec<f64> =
        (0..modes).map(|l| omega_s - 0.5 * bandwidth + (l as f64 + 0.5) * de).collect();
    let tl = t0 * de.sqrt();
    let mut model = SiamModel::new(omega_s, energies, vec![real(tl); modes])?;
    let d0 = modes as f64 / bandwidth;
    let delta0 = d0 * tl * tl;
    model.analytic = Some(AnalyticBath {
        d0,
        t0,
        delta0,
        half_width: PI * delta0,
        width_convention: WIDTH_CONVENTION.into(),
    });
    Ok(model)
}

/// Flat band tuned so the golden-rule half-width equals `half_width`.
pub fn siam_for_width(omega_s: f64, bandwidth: f64, modes: usize, half_width: f64) -> Result<SiamModel> {
    if !(half_width >= 0.0) {
        return Err(Error::invalid(format!("half-width must be non-negative, got {half_width}")));
    }
    siam_build(omega_s, bandwidth, modes, (half_width / PI).sqrt())
}

/// `(ω_λ, |⟨impurity|λ⟩|²)` for every eigenstate, ascending in energy.
///
/// The arrowhead structure is exploited: after deflating uncoupled and
/// repeated bath levels, each remaining eigenvalue is the unique root of the
/// secular function in one interlacing interval.
pub fn siam_spectral_weights(model: &SiamModel) -> Result<Vec<(f64, f64)>> {
    // merge equal energies into one effective mode; the rest carry no weight
    let mut order: Vec<usize> = (0..model.modes()).collect();
    order.sort_by(|&a, &b| model.bath_energies[a].total_cmp(&model.bath_energies[b]));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(model.modes() + 1);
    let mut poles: Vec<(f64, f64)> = Vec::new();
    for &l in &order {
        let (e, t2) = (model.bath_energies[l], model.couplings[l].norm_sqr());
        match poles.last_mut() {
            Some(last) if last.0 == e => {
                last.1 += t2;
                out.push((e, 0.0));
            }
            _ => poles.push((e, t2)),
        }
    }
    let (coupled, free): (Vec<_>, Vec<_>) = poles.into_iter().partition(|p| p.1 > 0.0);
    out.extend(free.iter().map(|p| (p.0, 0.0)));

    let a = model.omega_s;
    let m = coupled.len();
    if m == 0 {
        out.push((a, 1.0));
    } else {
        let t2sum: f64 = coupled.iter().map(|p| p.1).sum();
        let reach = (a - coupled[0].0).abs() + (a - coupled[m - 1].0).abs() + t2sum.sqrt() + 1.0;
        let roots: Vec<(f64, f64)> = (0..=m)
            .into_par_iter()
            .map(|k| secular_root(&coupled, a, k, reach))
            .collect();
        out.extend(roots);
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(out)
}

/// Root of `λ − a − Σ t²/(λ − e)` between pole `k − 1` and pole `k`, solved
/// in the offset from the nearer pole to keep the small denominators exact.
fn secular_root(poles: &[(f64, f64)], a: f64, k: usize, reach: f64) -> (f64, f64) {
    let m = poles.len();
    let (origin, lo, hi) = if k == 0 {
        (poles[0].0, -reach, 0.0)
    } else if k == m {
        (poles[m - 1].0, 0.0, reach)
    } else {
        (poles[k - 1].0, 0.0, poles[k].0 - poles[k - 1].0)
    };
    let shifts: Vec<f64> = poles.iter().map(|p| origin - p.0).collect();
    let f = |mu: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut ds = 0.0;
        for (p, d) in poles.iter().zip(&shifts) {
            let den = d + mu;
            s += p.1 / den;
            ds += p.1 / (den * den);
        }
        (origin + mu - a - s, ds)
    };
    let (mut l, mut h) = (lo, hi);
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (l + h);
        if mid <= l || mid >= h {
            break;
        }
        if f(mid).0 < 0.0 {
            l = mid;
        } else {
            h = mid;
        }
    }
    let mu = 0.5 * (l + h);
    let weight = 1.0 / (1.0 + f(mu).1);
    (origin + mu, weight)
}

/// Dense diagonalization reference for [`siam_spectral_weights`].
pub fn siam_spectral_weights_dense(model: &SiamModel) -> Result<Vec<(f64, f64)>> {
    let (vals, vecs) = linalg::eigh(&model.matrix())?;
    Ok(vals.iter().enumerate().map(|(k, &w)| (w, vecs[(0, k)].norm_sqr())).collect())
}

/// Spreads each weight uniformly over the midpoint cell of its eigenvalue and
/// returns `(bin centre, density)` on `bins` equal bins over
/// `center ± half_range`.
pub fn bin_weights(weights: &[(f64, f64)], center: f64, half_range: f64, bins: usize) -> Vec<(f64, f64)> {
    let lo = center - half_range;
    let width = 2.0 * half_range / bins as f64;
    let mut mass = vec![0.0; bins];
    let n = weights.len();
    for k in 0..n {
        let (w, p) = weights[k];
        if p == 0.0 {
            continue;
        }
        let left_gap = if k > 0 { w - weights[k - 1].0 } else if n > 1 { weights[1].0 - w } else { 0.0 };
        let right_gap = if k + 1 < n { weights[k + 1].0 - w } else { left_gap };
        let (a, b) = (w - 0.5 * left_gap, w + 0.5 * right_gap);
        if b <= a {
            let idx = ((w - lo) / width).floor();
            if idx >= 0.0 && (idx as usize) < bins {
                mass[idx as usize] += p;
            }
            continue;
        }
        let first = (((a - lo) / width).floor().max(0.0)) as usize;
        let last = (((b - lo) / width).floor().min(bins as f64 - 1.0)).max(-1.0);
        if last < 0.0 {
            continue;
        }
        for (j, slot) in mass.iter_mut().enumerate().take(last as usize + 1).skip(first) {
            let (bl, br) = (lo + j as f64 * width, lo + (j + 1) as f64 * width);
            let overlap = (b.min(br) - a.max(bl)).max(0.0);
            *slot += p * overlap / (b - a);
        }
    }
    mass.iter()
        .enumerate()
        .map(|(j, m)| (lo + (j as f64 + 0.5) * width, m / width))
        .collect()
}

/// Weight sum per bin divided by the bin width.
pub fn bin_weights_raw(weights: &[(f64, f64)], center: f64, half_range: f64, bins: usize) -> Vec<(f64, f64)> {
    let lo = center - half_range;
    let width = 2.0 * half_range / bins as f64;
    let mut mass = vec![0.0; bins];
    for &(w, p) in weights {
        let idx = ((w - lo) / width).floor();
        if idx >= 0.0 && (idx as usize) < bins {
            mass[idx as usize] += p;
        }
    }
    mass.iter()
        .enumerate()
        .map(|(j, m)| (lo + (j as f64 + 0.5) * width, m / width))
        .collect()
}

/// Discrepancy between a binned density and a Lorentzian on `|x − c| ≤ window`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LorentzianComparison {
    /// `‖b − A‖₂ / ‖A‖₂` over the bins in the window.
    pub relative_l2: f64,
    /// `max |b − A| / A(c)`.
    pub relative_sup: f64,
}

pub fn compare_lorentzian(binned: &[(f64, f64)], center: f64, half_width: f64, window: f64) -> LorentzianComparison {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut sup = 0.0_f64;
    for &(x, b) in binned.iter().filter(|(x, _)| (x - center).abs() <= window) {
        let a = lorentzian(x - center, half_width);
        num += (b - a).powi(2);
        den += a * a;
        sup = sup.max((b - a).abs());
    }
    LorentzianComparison {
        relative_l2: (num / den).sqrt(),
        relative_sup: sup / lorentzian(0.0, half_width),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub half_width: f64,
}

/// Least-squares fit of a unit-mass Lorentzian by Gauss–Newton with a
/// central-difference Jacobian.
pub fn fit_lorentzian(binned: &[(f64, f64)], center: f64, half_width: f64) -> LorentzianFit {
    let mut p = [center, half_width];
    let resid = |p: &[f64; 2]| -> Vec<f64> { binned.iter().map(|&(x, b)| lorentzian(x - p[0], p[1]) - b).collect() };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    for _ in 0..100 {
        let r = resid(&p);
        let mut jac = vec![[0.0; 2]; r.len()];
        for (d, step) in [1e-7 * (1.0 + p[0].abs()), 1e-7 * p[1]].into_iter().enumerate() {
            let mut up = p;
            let mut dn = p;
            up[d] += step;
            dn[d] -= step;
            let (ru, rd) = (resid(&up), resid(&dn));
            for i in 0..r.len() {
                jac[i][d] = (ru[i] - rd[i]) / (2.0 * step);
            }
        }
        let (mut a, mut g) = ([[0.0; 2]; 2], [0.0; 2]);
        for i in 0..r.len() {
            for u in 0..2 {
                g[u] += jac[i][u] * r[i];
                for v in 0..2 {
                    a[u][v] += jac[i][u] * jac[i][v];
                }
            }
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let dx = [(a[1][1] * g[0] - a[0][1] * g[1]) / det, (a[0][0] * g[1] - a[1][0] * g[0]) / det];
        // halve the step until the cost decreases and the width stays positive
        let before = cost(&r);
        let mut lam = 1.0;
        let mut accepted = false;
        while lam > 1e-6 {
            let trial = [p[0] - lam * dx[0], p[1] - lam * dx[1]];
            if trial[1] > 0.0 && cost(&resid(&trial)) <= before {
                p = trial;
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if !accepted || (lam * dx[0]).abs() + (lam * dx[1]).abs() < 1e-14 * (1.0 + p[1]) {
            break;
        }
    }
    LorentzianFit { center: p[0], half_width: p[1] }
}

/// Impurity weights, their binned density and its comparison with the
/// analytic Lorentzian.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiamReport {
    pub omega_s: f64,
    pub delta0_target: f64,
    #[serde(rename = "L")]
    pub modes: usize,
    pub bandwidth: f64,
    pub width_convention: String,
    pub analytic: Option<AnalyticBath>,
    pub weights: Vec<[f64; 2]>,
    pub binned: Vec<[f64; 2]>,
    pub lorentzian_fit: LorentzianFit,
    pub comparison: LorentzianComparison,
}

/// Bins over `±5 Δ0` and the comparison window `±3 Δ0`.
pub const BIN_COUNT: usize = 61;
pub const BIN_HALF_RANGE: f64 = 5.0;
pub const COMPARE_WINDOW: f64 = 3.0;

pub fn siam_report(omega_s: f64, bandwidth: f64, modes: usize, half_width: f64) -> Result<SiamReport> {
    let model = siam_for_width(omega_s, bandwidth, modes, half_width)?;
    let weights = siam_spectral_weights(&model)?;
    let binned = bin_weights(&weights, omega_s, BIN_HALF_RANGE * half_width, BIN_COUNT);
    let comparison = compare_lorentzian(&binned, omega_s, half_width, COMPARE_WINDOW * half_width);
    let lorentzian_fit = fit_lorentzian(&binned, omega_s, half_width);
    Ok(SiamReport {
        omega_s,
        delta0_target: half_width,
        modes,
        bandwidth,
        width_convention: WIDTH_CONVENTION.into(),
        analytic: model.analytic.clone(),
        weights: weights.iter().map(|&(w, p)| [w, p]).collect(),
        binned: binned.iter().map(|&(x, d)| [x, d]).collect(),
        lorentzian_fit,
        comparison,
    })
}

/// Retarded impurity Green's function `1/(ω − ω_S + iΔ0)`.
pub fn greens_frequency(omega_s: f64, delta0: f64, omega: f64) -> Complex64 {
    1.0 / c(omega - omega_s, delta0)
}

/// `A(ω) = (Δ0/π) / ((ω − ω_S)² + Δ0²)`.
pub fn spectral_function(omega_s: f64, delta0: f64, omega: f64) -> f64 {
    lorentzian(omega - omega_s, delta0)
}

/// `G(t) = −i exp(−i ω_S t − Δ0 t)` for `t ≥ 0`.
pub fn greens_time(omega_s: f64, delta0: f64, t_grid: &[f64]) -> Result<Vec<Complex64>> {
    if !(delta0 >= 0.0) {
        return Err(Error::invalid(format!("delta0 must be non-negative, got {delta0}")));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| !(t >= 0.0)) {
        return Err(Error::invalid(format!("time {t} is negative")));
    }
    Ok(t_grid.iter().map(|&t| c(0.0, -1.0) * c(-delta0 * t, -omega_s * t).exp()).collect())
}

/// `[[ω_S, Δ0], [−Δ0, ω_S]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTwoLevel {
    pub omega_s: f64,
    pub delta0: f64,
}

impl EffectiveTwoLevel {
    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[real(self.omega_s), real(self.delta0), real(-self.delta0), real(self.omega_s)],
        )
    }

    /// Roots of the characteristic polynomial, decaying mode first.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let m = self.matrix();
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (tr * tr * 0.25 - det).sqrt();
        let (a, b) = (tr * 0.5 - disc, tr * 0.5 + disc);
        if a.im <= b.im {
            [a, b]
        } else {
            [b, a]
        }
    }

    /// `e^{−i H t}`.
    pub fn propagator(&self, t: f64) -> CMatrix {
        expm2(&(self.matrix() * c(0.0, -t)))
    }

    /// `(e^{−i H t})₀₀ = e^{−i ω_S t} cosh(Δ0 t)`.
    pub fn literal_element(&self, t: f64) -> Complex64 {
        self.propagator(t)[(0, 0)]
    }

    /// `−i e^{−i λ₋ t}` with `λ₋ = ω_S − iΔ0`.
    pub fn decaying_mode(&self, t: f64) -> Complex64 {
        c(0.0, -1.0) * (c(0.0, -t) * self.eigenvalues()[0]).exp()
    }
}

pub fn effective_two_level(omega_s: f64, delta0: f64) -> Result<(EffectiveTwoLevel, [Complex64; 2])> {
    if !(delta0 >= 0.0) || !omega_s.is_finite() {
        return Err(Error::invalid(format!("need finite omega_S and delta0 >= 0, got {omega_s}, {delta0}")));
    }
    let m = EffectiveTwoLevel { omega_s, delta0 };
    let ev = m.eigenvalues();
    Ok((m, ev))
}

/// `e^B` for a 2×2 matrix: `e^μ (cosh s I + sinh(s)/s (B − μI))`.
fn expm2(b: &CMatrix) -> CMatrix {
    let mu = (b[(0, 0)] + b[(1, 1)]) * 0.5;
    let b0 = b - CMatrix::identity(2, 2) * mu;
    let s = (b0[(0, 0)] * b0[(0, 0)] + b0[(0, 1)] * b0[(1, 0)]).sqrt();
    let sinhc = if s.norm() < 1e-8 { real(1.0) + s * s / 6.0 } else { s.sinh() / s };
    (CMatrix::identity(2, 2) * s.cosh() + b0 * sinhc) * mu.exp()
}
