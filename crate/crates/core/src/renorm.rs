//! Schur-complement renormalization: interaction curves, fixed points,
//! separability, similarity, weight factors and the coupling kernel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::ManyBodyOperator;
use crate::linalg::{self, real};
use crate::projection::{bath_projector, BathState, ProjectionBlocks};
use crate::{CMatrix, CVector, Error, Result};

/// Pole window half-width relative to the spectral range.
pub const POLE_WINDOW_RTOL: f64 = 1e-6;
const POLE_SHRINK: f64 = 10.0;
const POLE_SHRINK_STEPS: usize = 3;
const BISECTION_CAP: usize = 80;
const ROOT_RTOL: f64 = 1e-11;
const RESIDUAL_RTOL: f64 = 1e-9;
const MATCH_THRESHOLD: f64 = 0.5;
const MATCH_REFINEMENTS: usize = 4;
const FD_STEP_RTOL: f64 = 1e-6;
const FD_RTOL: f64 = 1e-5;
/// Absolute floor of the finite-difference comparison, set by the roundoff of
/// a central difference with step `1e-6 ×` range.
const FD_ATOL: f64 = 1e-8;
const CLUSTER_RTOL: f64 = 1e-8;
const CONTINUATION_STEPS: usize = 8;
const KERNEL_RANK_RTOL: f64 = 1e-10;

/// Width of the universe spectrum at the blocks' `ε`, the unit for every
/// relative tolerance below.
pub fn energy_scale(blocks: &ProjectionBlocks) -> Result<f64> {
    Ok(linalg::spectral_scale(&linalg::eigvalsh(blocks.universe().matrix())?))
}

fn schur_unchecked(blocks: &ProjectionBlocks, omega: f64) -> Result<CMatrix> {
    let ds = blocks.soi_dim();
    if blocks.rest_dim() == 0 {
        return Ok(CMatrix::zeros(ds, ds));
    }
    let shifted = CMatrix::identity(blocks.rest_dim(), blocks.rest_dim()) * real(omega) - &blocks.h_r;
    let x = linalg::solve(&shifted, &blocks.c.adjoint())?;
    Ok(linalg::hermitize(&(&blocks.c * x)))
}

fn check_poles(poles: &[f64], omega: f64, window: f64) -> Result<()> {
    match poles.iter().find(|&&p| (omega - p).abs() <= window) {
        Some(&pole) => Err(Error::PoleProximity { omega, pole, window }),
        None => Ok(()),
    }
}

/// `M(ω) = C (ω − H_R)⁻¹ C†` for real `ω` outside every pole window.
pub fn schur_m(blocks: &ProjectionBlocks, omega: f64) -> Result<CMatrix> {
    let window = POLE_WINDOW_RTOL * energy_scale(blocks)?;
    check_poles(&blocks.poles()?, omega, window)?;
    schur_unchecked(blocks, omega)
}

/// `H_S + ε M(ω)`.
fn renormalized(blocks: &ProjectionBlocks, omega: f64) -> Result<CMatrix> {
    Ok(&blocks.h_s + schur_unchecked(blocks, omega)? * real(blocks.epsilon))
}

fn renormalized_eigen(blocks: &ProjectionBlocks, omega: f64) -> Result<(Vec<f64>, CMatrix)> {
    linalg::eigh(&renormalized(blocks, omega)?)
}

/// `(ω − H_R)⁻¹ C† R`, the rest-space image of a static-space vector.
fn rest_image(blocks: &ProjectionBlocks, omega: f64, r: &CMatrix) -> Result<CMatrix> {
    let n = blocks.rest_dim();
    if n == 0 {
        return Ok(CMatrix::zeros(0, r.ncols()));
    }
    let shifted = CMatrix::identity(n, n) * real(omega) - &blocks.h_r;
    linalg::solve(&shifted, &(blocks.c.adjoint() * r))
}

/// Analytic slope `−ε x†x`, `x = (ω − H_R)⁻¹ C† R`.
fn slope_analytic(blocks: &ProjectionBlocks, omega: f64, r: &CVector) -> Result<f64> {
    let x = rest_image(blocks, omega, &CMatrix::from_column_slice(r.len(), 1, r.as_slice()))?;
    Ok(-blocks.epsilon * x.norm_squared())
}

/// Central difference of the branch whose eigenvector best overlaps `r`.
fn slope_fd(blocks: &ProjectionBlocks, omega: f64, r: &CVector, h: f64) -> Result<f64> {
    let pick = |w: f64| -> Result<f64> {
        let (vals, vecs) = renormalized_eigen(blocks, w)?;
        let k = (0..vals.len())
            .max_by(|&a, &b| {
                let oa = linalg::overlap2(r, &vecs.column(a).into_owned());
                let ob = linalg::overlap2(r, &vecs.column(b).into_owned());
                oa.total_cmp(&ob)
            })
            .unwrap_or(0);
        Ok(vals[k])
    };
    Ok((pick(omega + h)? - pick(omega - h)?) / (2.0 * h))
}

fn fd_step(scale: f64, poles: &[f64], omega: f64) -> f64 {
    let nearest = poles.iter().map(|p| (p - omega).abs()).fold(f64::INFINITY, f64::min);
    (FD_STEP_RTOL * scale).min(1e-3 * nearest)
}

/// `dω_R/dω` at a fixed point from the resolvent-squared form, cross-checked
/// against a central finite difference of the tracked branch.
pub fn slope_at(blocks: &ProjectionBlocks, omega_lambda: f64, eigvec: &CVector) -> Result<f64> {
    let scale = energy_scale(blocks)?;
    let poles = blocks.poles()?;
    check_poles(&poles, omega_lambda, POLE_WINDOW_RTOL * scale)?;
    let r = linalg::normalized(eigvec.clone());
    let an = slope_analytic(blocks, omega_lambda, &r)?;
    let fd = slope_fd(blocks, omega_lambda, &r, fd_step(scale, &poles, omega_lambda))?;
    check_fd(an, fd, omega_lambda)?;
    Ok(an)
}

fn check_fd(an: f64, fd: f64, omega: f64) -> Result<()> {
    if (an - fd).abs() > FD_RTOL * an.abs() + FD_ATOL {
        return Err(Error::NumericConsistency(format!(
            "slope at {omega}: analytic {an:e}, finite difference {fd:e}"
        )));
    }
    Ok(())
}

/// `‖(I_SOI ⊗ |bath⟩⟨bath|) v‖²` for a universe vector in the original basis.
pub fn separability_of(vector: &CVector, bath: &BathState, soi_dim: usize) -> f64 {
    let b = bath.amplitudes();
    let d = b.len();
    let mut total = 0.0;
    for i in 0..soi_dim {
        let amp: crate::Complex64 = (0..d).map(|j| b[j].conj() * vector[j * soi_dim + i]).sum();
        total += amp.norm_sqr();
    }
    total
}

/// Degree of separability of eigenstate `eig_index` of `h` by direct
/// projection onto the bath state.
pub fn separability_direct(h: &ManyBodyOperator, bath: &BathState, eig_index: usize) -> Result<f64> {
    let es = crate::hilbert::diagonalize(h)?;
    if eig_index >= es.len() {
        return Err(Error::invalid(format!("eigenstate index {eig_index} out of range ({})", es.len())));
    }
    if bath.dim() != h.basis().bath_dim() {
        return Err(Error::invalid("bath state dimension does not match the universe"));
    }
    Ok(separability_of(&es.vector(eig_index), bath, h.basis().soi_dim()))
}

/// Same quantity through the projector matrix; slower, used as a cross-check.
pub fn separability_by_projector(vector: &CVector, bath: &BathState, soi_dim: usize) -> f64 {
    (bath_projector(bath, soi_dim) * vector).norm_squared()
}

/// One ω sample of the renormalized Hamiltonian.
#[derive(Debug, Clone)]
pub struct Sample {
    pub omega: f64,
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

/// Pole-free interval `[lo, hi]` with its samples (edges included).
#[derive(Debug, Clone)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub samples: Vec<Sample>,
}

/// One overlap-tracked branch `ω_R(ω)` inside a segment.
#[derive(Debug, Clone, Serialize)]
pub struct Branch {
    pub id: usize,
    pub segment: usize,
    pub omega: Vec<f64>,
    pub omega_r: Vec<f64>,
    pub slope_fd: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct InteractionCurves {
    pub omega_min: f64,
    pub omega_max: f64,
    /// Uniform samples that survived pole exclusion.
    pub omega_grid: Vec<f64>,
    pub segments: Vec<Segment>,
    pub branches: Vec<Branch>,
    pub poles: Vec<f64>,
    pub excluded_windows: Vec<(f64, f64)>,
    pub pole_window: f64,
    pub scale: f64,
}

/// Merged pole windows `[p_lo − δ, p_hi + δ]`.
fn pole_windows(poles: &[f64], delta: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &p in poles {
        match out.last_mut() {
            Some(last) if p - delta <= last.1 => last.1 = p + delta,
            _ => out.push((p - delta, p + delta)),
        }
    }
    out
}

fn in_windows(windows: &[(f64, f64)], w: f64) -> bool {
    windows.iter().any(|&(a, b)| w >= a && w <= b)
}

/// Samples `H^R(ω)` on a uniform grid, drops pole windows and tracks each
/// eigenvalue branch by eigenvector overlap.
pub fn trace_curves(
    blocks: &ProjectionBlocks,
    omega_min: f64,
    omega_max: f64,
    samples: usize,
) -> Result<InteractionCurves> {
    if !(omega_min < omega_max) || !omega_min.is_finite() || !omega_max.is_finite() {
        return Err(Error::invalid(format!("need omega_min < omega_max, got [{omega_min}, {omega_max}]")));
    }
    if samples < 2 {
        return Err(Error::invalid("at least two frequency samples are required"));
    }
    let scale = energy_scale(blocks)?;
    let poles = blocks.poles()?;
    let delta = POLE_WINDOW_RTOL * scale;
    let windows = pole_windows(&poles, delta);
    let step = (omega_max - omega_min) / (samples - 1) as f64;
    let grid: Vec<f64> = (0..samples)
        .map(|k| if k + 1 == samples { omega_max } else { omega_min + step * k as f64 })
        .filter(|&w| !in_windows(&windows, w))
        .collect();
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }

    let mut bounds = vec![omega_min];
    for &(a, b) in &windows {
        bounds.push(a);
        bounds.push(b);
    }
    bounds.push(omega_max);
    let intervals: Vec<(f64, f64)> = bounds
        .chunks(2)
        .map(|p| (p[0].max(omega_min), p[1].min(omega_max)))
        .filter(|(a, b)| a < b)
        .collect();

    let mut segments = Vec::new();
    let mut branches = Vec::new();
    for (lo, hi) in intervals {
        let mut omegas = vec![lo];
        omegas.extend(grid.iter().copied().filter(|&w| w > lo && w < hi));
        omegas.push(hi);
        // eigenvectors turn on the scale of the distance to a pole, so the
        // stretch next to a window edge is sampled geometrically
        let inner_lo = omegas.get(1).copied().unwrap_or(hi);
        let inner_hi = omegas.iter().rev().nth(1).copied().unwrap_or(lo);
        if lo > omega_min {
            omegas.extend(geometric(lo, inner_lo.min(hi), delta));
        }
        if hi < omega_max {
            omegas.extend(geometric(hi, inner_hi.max(lo), delta));
        }
        omegas.sort_by(f64::total_cmp);
        omegas.dedup();
        let samples: Vec<Sample> = omegas
            .par_iter()
            .map(|&omega| {
                let (values, vectors) = renormalized_eigen(blocks, omega)?;
                Ok(Sample { omega, values, vectors })
            })
            .collect::<Result<_>>()?;
        let seg_id = segments.len();
        branches.extend(track_branches(blocks, &samples, seg_id, branches.len())?);
        segments.push(Segment { lo, hi, samples });
    }
    Ok(InteractionCurves {
        omega_min,
        omega_max,
        omega_grid: grid,
        segments,
        branches,
        poles,
        excluded_windows: windows,
        pole_window: delta,
        scale,
    })
}

/// Points `edge ± δ·4^j` strictly between `edge` and `towards`.
fn geometric(edge: f64, towards: f64, delta: f64) -> Vec<f64> {
    let span = (towards - edge).abs();
    let dir = (towards - edge).signum();
    let mut out = Vec::new();
    let mut d = 4.0 * delta;
    while d < span {
        out.push(edge + dir * d);
        d *= 4.0;
    }
    out
}

/// Overlap of `v` with the eigenspace cluster of `next` containing column `j`.
fn cluster_overlap(v: &CVector, next: &Sample, j: usize, tol: f64) -> f64 {
    (0..next.values.len())
        .filter(|&k| (next.values[k] - next.values[j]).abs() <= tol)
        .map(|k| linalg::overlap2(v, &next.vectors.column(k).into_owned()))
        .sum()
}

/// Greedy maximal-overlap matching. Returns the permutation, the worst
/// accepted overlap and whether every matched branch is non-increasing.
fn match_columns(prev: &[CVector], prev_vals: &[f64], next: &Sample, tol: f64) -> (Vec<usize>, f64, bool) {
    let n = prev.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, v) in prev.iter().enumerate() {
        for j in 0..n {
            pairs.push((linalg::overlap2(v, &next.vectors.column(j).into_owned()), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    let mut worst = f64::INFINITY;
    let mut monotone = true;
    for (o, i, j) in pairs {
        if perm[i] == usize::MAX && !used[j] {
            perm[i] = j;
            used[j] = true;
            let eff = if o < MATCH_THRESHOLD { cluster_overlap(&prev[i], next, j, tol) } else { o };
            worst = worst.min(eff);
            monotone &= next.values[j] <= prev_vals[i] + tol;
        }
    }
    (perm, worst, monotone)
}

/// Rank-preserving assignment: the r-th lowest branch goes to the r-th
/// sorted eigenvalue, which never rises.
fn rank_order(prev_vals: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..prev_vals.len()).collect();
    order.sort_by(|&a, &b| prev_vals[a].total_cmp(&prev_vals[b]));
    let mut perm = vec![0; prev_vals.len()];
    for (rank, &i) in order.iter().enumerate() {
        perm[i] = rank;
    }
    perm
}

/// Advances tracked vectors from `a` to `b`, bisecting the step up to
/// `depth` times when the overlap or monotonicity test fails. A match that
/// still rises after the last refinement is a diabatic jump across a narrow
/// avoided crossing and is replaced by the rank order.
fn advance(
    blocks: &ProjectionBlocks,
    vecs: &[CVector],
    vals: &[f64],
    a: f64,
    b: &Sample,
    tol: f64,
    depth: usize,
) -> Result<Vec<usize>> {
    let (perm, worst, monotone) = match_columns(vecs, vals, b, tol);
    if worst >= MATCH_THRESHOLD && monotone {
        return Ok(perm);
    }
    if depth == MATCH_REFINEMENTS {
        if worst < MATCH_THRESHOLD {
            return Err(Error::TrackingFailure { omega: b.omega, overlap: worst });
        }
        return Ok(rank_order(vals));
    }
    let mid = 0.5 * (a + b.omega);
    let (values, vectors) = renormalized_eigen(blocks, mid)?;
    let mid_sample = Sample { omega: mid, values, vectors };
    let p1 = advance(blocks, vecs, vals, a, &mid_sample, tol, depth + 1)?;
    let mid_vecs: Vec<CVector> = p1.iter().map(|&j| mid_sample.vectors.column(j).into_owned()).collect();
    let mid_vals: Vec<f64> = p1.iter().map(|&j| mid_sample.values[j]).collect();
    advance(blocks, &mid_vecs, &mid_vals, mid, b, tol, depth + 1)
}

fn track_branches(
    blocks: &ProjectionBlocks,
    samples: &[Sample],
    segment: usize,
    first_id: usize,
) -> Result<Vec<Branch>> {
    let n = blocks.soi_dim();
    let tol = CLUSTER_RTOL * linalg::spectral_scale(&samples[0].values).max(1.0);
    let mut assign: Vec<Vec<usize>> = vec![(0..n).collect()];
    for w in samples.windows(2) {
        let last = assign.last().unwrap();
        let vecs: Vec<CVector> = last.iter().map(|&j| w[0].vectors.column(j).into_owned()).collect();
        let vals: Vec<f64> = last.iter().map(|&j| w[0].values[j]).collect();
        let perm = advance(blocks, &vecs, &vals, w[0].omega, &w[1], tol, 0)?;
        assign.push(perm);
    }
    let omega: Vec<f64> = samples.iter().map(|s| s.omega).collect();
    Ok((0..n)
        .map(|b| {
            let omega_r: Vec<f64> = samples.iter().zip(&assign).map(|(s, a)| s.values[a[b]]).collect();
            let slope_fd = finite_differences(&omega, &omega_r);
            Branch { id: first_id + b, segment, omega: omega.clone(), omega_r, slope_fd }
        })
        .collect())
}

fn finite_differences(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (a, b) = if k == 0 {
                (0, 1.min(n - 1))
            } else if k + 1 == n {
                (k - 1, k)
            } else {
                (k - 1, k + 1)
            };
            if a == b {
                0.0
            } else {
                (y[b] - y[a]) / (x[b] - x[a])
            }
        })
        .collect()
}

/// One universe eigenvalue recovered as a fixed point of `ω_R(ω) = ω`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub omega_lambda: f64,
    pub branch_id: usize,
    pub slope: f64,
    pub slope_fd: f64,
    #[serde(rename = "Z")]
    pub separability: f64,
    #[serde(rename = "z")]
    pub similarity: f64,
    #[serde(rename = "W")]
    pub weight: f64,
    pub static_partner: usize,
    pub omega_static: f64,
    pub residual: f64,
    /// Several fixed points share this frequency.
    pub degenerate: bool,
    /// Renormalized eigenvector in the static (rotated) coordinates.
    #[serde(skip)]
    pub renormalized: Option<CVector>,
}

impl FixedPointRecord {
    pub fn renormalized_vector(&self) -> &CVector {
        self.renormalized.as_ref().expect("records built by the solver carry their vector")
    }

    /// Universe eigenvector `[R; √ε (ω − H_R)⁻¹ C† R]`, normalized, in the
    /// rotated basis.
    pub fn universe_vector(&self, blocks: &ProjectionBlocks) -> Result<CVector> {
        let r = self.renormalized_vector();
        let x = rest_image(blocks, self.omega_lambda, &CMatrix::from_column_slice(r.len(), 1, r.as_slice()))?
            * real(blocks.epsilon.sqrt());
        let mut v = CVector::zeros(blocks.dim());
        v.rows_mut(0, r.len()).copy_from(r);
        v.rows_mut(r.len(), x.nrows()).copy_from(&x.column(0));
        Ok(linalg::normalized(v))
    }
}

fn g_value(blocks: &ProjectionBlocks, omega: f64, k: usize) -> Result<f64> {
    Ok(linalg::eigvalsh(&renormalized(blocks, omega)?)?[k] - omega)
}

/// Bisection for the root of the strictly decreasing `g_k` on `[a, b]`.
fn bisect(blocks: &ProjectionBlocks, k: usize, mut a: f64, mut b: f64, scale: f64) -> Result<Option<f64>> {
    let ga = g_value(blocks, a, k)?;
    let gb = g_value(blocks, b, k)?;
    if ga == 0.0 {
        return Ok(Some(a));
    }
    if gb == 0.0 {
        return Ok(Some(b));
    }
    if !(ga > 0.0 && gb < 0.0) {
        return Ok(None);
    }
    let tol = ROOT_RTOL * scale;
    for _ in 0..BISECTION_CAP {
        let m = 0.5 * (a + b);
        let gm = g_value(blocks, m, k)?;
        if gm.abs() <= tol && b - a <= tol {
            return Ok(Some(m));
        }
        if gm > 0.0 {
            a = m;
        } else if gm < 0.0 {
            b = m;
        } else {
            return Ok(Some(m));
        }
    }
    Ok(Some(0.5 * (a + b)))
}

/// Number of universe eigenvalues below `ω` by Haynsworth inertia additivity.
fn count_below(blocks: &ProjectionBlocks, poles: &[f64], omega: f64) -> Result<usize> {
    let rest = poles.iter().filter(|&&p| p < omega).count();
    let vals = linalg::eigvalsh(&renormalized(blocks, omega)?)?;
    Ok(rest + vals.iter().filter(|&&v| v < omega).count())
}

/// Poles in `[a, b]` whose eigenvectors do not couple to the static space;
/// each is a universe eigenvalue with no static weight.
fn decoupled_poles(blocks: &ProjectionBlocks, a: f64, b: f64) -> Result<usize> {
    let (vals, vecs) = linalg::eigh(&blocks.h_r)?;
    let idx: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] >= a && vals[k] <= b).collect();
    if idx.is_empty() {
        return Ok(0);
    }
    let cols: Vec<CVector> = idx.iter().map(|&k| vecs.column(k).into_owned()).collect();
    let v = CMatrix::from_columns(&cols);
    let cv = &blocks.c * v * real(blocks.epsilon.sqrt());
    let sv = cv.singular_values();
    let norm_c = linalg::max_abs(&blocks.c).max(f64::MIN_POSITIVE);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * norm_c).count();
    Ok(idx.len() - rank)
}

/// Roots of every branch in `[a, b]` (pole free).
fn roots_in(blocks: &ProjectionBlocks, a: f64, b: f64, scale: f64, out: &mut Vec<(f64, usize)>) -> Result<()> {
    for k in 0..blocks.soi_dim() {
        if let Some(w) = bisect(blocks, k, a, b, scale)? {
            out.push((w, k));
        }
    }
    Ok(())
}

/// Solves `ω_R(ω) = ω` on every branch and segment of `curves`.
pub fn find_fixed_points(curves: &InteractionCurves, blocks: &ProjectionBlocks) -> Result<Vec<FixedPointRecord>> {
    if curves.segments.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let scale = curves.scale;
    let poles = &curves.poles;
    // (root, branch index, segment tag)
    let mut found: Vec<(f64, usize, usize)> = Vec::new();
    for (s, seg) in curves.segments.iter().enumerate() {
        let mut roots = Vec::new();
        roots_in(blocks, seg.lo, seg.hi, scale, &mut roots)?;
        found.extend(roots.into_iter().map(|(w, k)| (w, k, s)));
    }

    // Fixed points hiding inside pole windows.
    let mut tag = curves.segments.len();
    for &(wl, wr) in &curves.excluded_windows {
        let (lo, hi) = (wl.max(curves.omega_min), wr.min(curves.omega_max));
        if lo >= hi {
            continue;
        }
        let inner: Vec<f64> = poles.iter().copied().filter(|&p| p >= wl && p <= wr).collect();
        let (p_lo, p_hi) = (inner[0], inner[inner.len() - 1]);
        let decoupled = decoupled_poles(blocks, wl, wr)?;
        let hidden = |l: f64, r: f64| -> Result<isize> {
            Ok(count_below(blocks, poles, r)? as isize - count_below(blocks, poles, l)? as isize - decoupled as isize)
        };
        let (mut l, mut r) = (lo, hi);
        let mut delta = curves.pole_window;
        let mut remaining = hidden(l, r)?;
        let mut step = 0;
        while remaining > 0 {
            if step == POLE_SHRINK_STEPS {
                return Err(Error::PoleProximity { omega: 0.5 * (p_lo + p_hi), pole: p_lo, window: delta });
            }
            delta /= POLE_SHRINK;
            let (nl, nr) = ((p_lo - delta).max(lo), (p_hi + delta).min(hi));
            let mut roots = Vec::new();
            if nl > l {
                roots_in(blocks, l, nl, scale, &mut roots)?;
            }
            if r > nr {
                roots_in(blocks, nr, r, scale, &mut roots)?;
            }
            found.extend(roots.into_iter().map(|(w, k)| (w, k, tag)));
            tag += 1;
            l = nl;
            r = nr;
            remaining = hidden(l, r)?;
            step += 1;
        }
    }
    if found.is_empty() {
        return Err(Error::NoFixedPoint { lo: curves.omega_min, hi: curves.omega_max, branch: 0 });
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    build_records(blocks, &found, curves, scale)
}

/// Fixed points on the full spectral interval with a default sampling.
pub fn solve_all(blocks: &ProjectionBlocks) -> Result<Vec<FixedPointRecord>> {
    let (lo, hi) = spectral_bounds(blocks);
    let curves = trace_curves(blocks, lo, hi, 64)?;
    find_fixed_points(&curves, blocks)
}

/// Interval guaranteed to contain the universe spectrum (Frobenius bound,
/// padded).
pub fn spectral_bounds(blocks: &ProjectionBlocks) -> (f64, f64) {
    let u = blocks.universe();
    let bound = u.matrix().norm() * 1.01 + 1e-3;
    (-bound, bound)
}

fn build_records(
    blocks: &ProjectionBlocks,
    found: &[(f64, usize, usize)],
    curves: &InteractionCurves,
    scale: f64,
) -> Result<Vec<FixedPointRecord>> {
    let (static_vals, static_vecs) = blocks.static_eigen()?;
    let poles = &curves.poles;
    let mut records = Vec::with_capacity(found.len());
    let mut i = 0;
    while i < found.len() {
        let mut j = i + 1;
        while j < found.len() && found[j].2 == found[i].2 && (found[j].0 - found[i].0).abs() <= CLUSTER_RTOL * scale {
            j += 1;
        }
        let cluster = &found[i..j];
        let omega = cluster.iter().map(|f| f.0).sum::<f64>() / cluster.len() as f64;
        let (vals, vecs) = renormalized_eigen(blocks, omega)?;
        let cols: Vec<CVector> = cluster.iter().map(|f| vecs.column(f.1).into_owned()).collect();
        let mut r = CMatrix::from_columns(&cols);
        let mut slopes: Vec<f64>;
        if cluster.len() == 1 {
            slopes = vec![slope_analytic(blocks, omega, &r.column(0).into_owned())?];
        } else {
            // Degenerate fixed points: diagonalize the derivative form inside
            // the cluster so each vector follows a smooth branch.
            let y = rest_image(blocks, omega, &r)?;
            let d = (y.adjoint() * &y) * real(-blocks.epsilon);
            let (dv, dvec) = linalg::eigh(&linalg::hermitize(&d))?;
            r = r * dvec;
            slopes = dv;
        }
        let h = fd_step(scale, poles, omega);
        for (c, f) in cluster.iter().enumerate() {
            let rv = r.column(c).into_owned();
            let residual = (vals[f.1] - omega).abs();
            if residual > RESIDUAL_RTOL * scale {
                return Err(Error::NumericConsistency(format!(
                    "fixed point at {omega} has residual {residual:e}"
                )));
            }
            let slope = slopes[c].min(0.0);
            slopes[c] = slope;
            let fd = slope_fd(blocks, omega, &rv, h)?;
            check_fd(slope, fd, omega)?;
            let z_sep = 1.0 / (1.0 - slope);
            let partner = continuation_partner(blocks, omega, &rv, &static_vecs)?;
            let s = static_vecs.column(partner).into_owned();
            let z_sim = linalg::overlap2(&s, &rv).min(1.0);
            records.push(FixedPointRecord {
                omega_lambda: omega,
                branch_id: f.2 * blocks.soi_dim() + f.1,
                slope,
                slope_fd: fd,
                separability: z_sep,
                similarity: z_sim,
                weight: z_sep * z_sim,
                static_partner: partner,
                omega_static: static_vals[partner],
                residual,
                degenerate: cluster.len() > 1,
                renormalized: Some(rv),
            });
        }
        i = j;
    }
    Ok(records)
}

/// Follows `R` from `ε` down to `ε·10⁻⁸` at fixed `ω` by maximal overlap and
/// returns the static eigenvector it lands on.
fn continuation_partner(blocks: &ProjectionBlocks, omega: f64, r: &CVector, static_vecs: &CMatrix) -> Result<usize> {
    let m = schur_unchecked(blocks, omega)?;
    let mut v = r.clone();
    let mut eps = blocks.epsilon;
    for _ in 0..CONTINUATION_STEPS {
        eps /= 10.0;
        let (_, vecs) = linalg::eigh(&(&blocks.h_s + &m * real(eps)))?;
        v = best_column(&vecs, &v).1;
    }
    Ok(best_column(static_vecs, &v).0)
}

fn best_column(vecs: &CMatrix, v: &CVector) -> (usize, CVector) {
    let k = (0..vecs.ncols())
        .max_by(|&a, &b| {
            let oa = linalg::overlap2(v, &vecs.column(a).into_owned());
            let ob = linalg::overlap2(v, &vecs.column(b).into_owned());
            oa.total_cmp(&ob).then(b.cmp(&a))
        })
        .unwrap_or(0);
    (k, vecs.column(k).into_owned())
}

/// `|⟨S|R⟩|²` against static eigenstate `static_index`.
pub fn similarity(blocks: &ProjectionBlocks, fixed_point: &FixedPointRecord, static_index: usize) -> Result<f64> {
    let (_, vecs) = blocks.static_eigen()?;
    if static_index >= vecs.ncols() {
        return Err(Error::invalid(format!("static index {static_index} out of range ({})", vecs.ncols())));
    }
    Ok(linalg::overlap2(&vecs.column(static_index).into_owned(), fixed_point.renormalized_vector()))
}

/// `W = Z·z`.
pub fn weight_factor(z_sep: f64, z_sim: f64) -> Result<f64> {
    let ok = |x: f64| (0.0..=1.0 + 1e-12).contains(&x);
    if !ok(z_sep) || !ok(z_sim) {
        return Err(Error::invalid(format!("Z = {z_sep} and z = {z_sim} must lie in [0, 1]")));
    }
    Ok(z_sep * z_sim)
}

/// Re-targets a record at another static eigenstate.
pub fn with_partner(blocks: &ProjectionBlocks, fp: &FixedPointRecord, static_index: usize) -> Result<FixedPointRecord> {
    let (vals, _) = blocks.static_eigen()?;
    let z_sim = similarity(blocks, fp, static_index)?;
    Ok(FixedPointRecord {
        similarity: z_sim,
        weight: weight_factor(fp.separability, z_sim.min(1.0))?,
        static_partner: static_index,
        omega_static: vals[static_index],
        ..fp.clone()
    })
}

/// `𝒦 = C C†` with its SVD data and diagnostics.
#[derive(Debug, Clone)]
pub struct CouplingKernel {
    pub k: CMatrix,
    /// `⟨S|𝒦|S'⟩` in the static eigenbasis.
    pub k_static: CMatrix,
    pub rank_deficient: bool,
    pub singular_values: Vec<f64>,
    /// `max |P² − P|` for `P = C† 𝒦⁻¹ C` (NaN when rank deficient).
    pub projector_residual: f64,
    /// `U† ΓΓ† U`, kept for comparison with `𝒦`.
    pub literal_form: CMatrix,
    pub literal_discrepancy: f64,
}

impl CouplingKernel {
    pub fn k_ss(&self, static_index: usize) -> f64 {
        self.k_static[(static_index, static_index)].re
    }
}

pub fn kernel_build(blocks: &ProjectionBlocks) -> Result<CouplingKernel> {
    let c = &blocks.c;
    if c.is_empty() || linalg::max_abs(c) == 0.0 {
        return Err(Error::DegenerateKernel);
    }
    let ds = blocks.soi_dim();
    let svd = c.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut gamma2 = CMatrix::zeros(u.ncols(), u.ncols());
    for (k, s) in sv.iter().enumerate() {
        gamma2[(k, k)] = real(s * s);
    }
    // U may be thin when the rest space is smaller than the static space.
    let k = linalg::hermitize(&(u * &gamma2 * u.adjoint()));
    let literal_form = if u.ncols() == ds { u.adjoint() * &gamma2 * u } else { k.clone() };
    let literal_discrepancy = linalg::max_abs(&(&literal_form - &k));
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv[0];
    let smin = if sv.len() < ds { 0.0 } else { sv[ds - 1] };
    let rank_deficient = smin < KERNEL_RANK_RTOL * smax;
    let (_, svecs) = blocks.static_eigen()?;
    let k_static = svecs.adjoint() * &k * &svecs;
    let projector_residual = if rank_deficient {
        f64::NAN
    } else {
        let kinv_c = linalg::solve(&k, c)?;
        let p = c.adjoint() * kinv_c;
        linalg::max_abs(&(&p * &p - &p)).max(linalg::hermiticity_defect(&p))
    };
    Ok(CouplingKernel { k, k_static, rank_deficient, singular_values: sv, projector_residual, literal_form, literal_discrepancy })
}

/// Kernel-form estimate of `1/Z − 1` next to the exact resolvent value.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub kernel_estimate: f64,
    pub exact: f64,
    pub kernel_discrepancy: f64,
    /// The same quantity expanded as a double sum over static eigenpairs.
    pub double_sum: f64,
}

pub fn kernel_quadratic_form(
    blocks: &ProjectionBlocks,
    kernel: &CouplingKernel,
    fixed_point: &FixedPointRecord,
) -> Result<KernelEstimate> {
    if kernel.rank_deficient {
        let smin = kernel.singular_values.last().copied().unwrap_or(0.0);
        return Err(Error::RankDeficientKernel { ratio: smin / kernel.singular_values[0] });
    }
    let exact = -fixed_point.slope;
    let eps = blocks.epsilon;
    if eps == 0.0 {
        return Ok(KernelEstimate { kernel_estimate: 0.0, exact, kernel_discrepancy: exact.abs(), double_sum: 0.0 });
    }
    let r = fixed_point.renormalized_vector();
    let ds = r.len();
    let w = fixed_point.omega_lambda;
    let a = CMatrix::identity(ds, ds) * real(w) * r - &blocks.h_s * r;
    let b = linalg::solve_vec(&kernel.k, &a)?;
    let kernel_estimate = a.dotc(&b).re / eps;

    let (svals, svecs) = blocks.static_eigen()?;
    let kinv_static = linalg::solve(&kernel.k_static, &CMatrix::identity(ds, ds))?;
    let amps = svecs.adjoint() * r;
    let mut double_sum = 0.0;
    for s in 0..ds {
        for t in 0..ds {
            double_sum += (amps[s].conj() * real(w - svals[s]) * kinv_static[(s, t)] * real(w - svals[t]) * amps[t]).re;
        }
    }
    double_sum /= eps;
    Ok(KernelEstimate { kernel_estimate, exact, kernel_discrepancy: (kernel_estimate - exact).abs(), double_sum })
}
