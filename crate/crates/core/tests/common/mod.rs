//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use bathsep::hilbert::{BipartiteBasis, ManyBodyOperator};
use bathsep::projection::BathState;
use bathsep::{CMatrix, CVector, Complex64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Reference two-site spectrum, 25 digits from a 40-digit Jacobi diagonalization.
pub const FIG2_EIGENVALUES: [f64; 4] = [
    -8.201898172873118652738685,
    -2.886825266505793948739124,
    -1.113174733494206051260876,
    4.201898172873118652738685,
];
/// Separability of each reference eigenstate for the `|0↑⟩` bath, same source.
pub const FIG2_Z_0UP: [f64; 4] = [
    0.9408995205403538282284618,
    0.5175751297677350464939835,
    0.4824248702322649535060165,
    0.05910047945964617177153816,
];
/// Largest reduced bath-density eigenvalue of each reference eigenstate.
pub const FIG2_ZMAX: [f64; 4] = [
    0.9999919693387732274577749,
    0.5531582557653887160665323,
    0.5531582557653887160665323,
    0.9999919693387732274577749,
];

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = c(rng.gen_range(-1.0..1.0), 0.0);
        for j in i + 1..n {
            let z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

pub fn random_universe(rng: &mut ChaCha8Rng, soi: usize, bath: usize) -> ManyBodyOperator {
    let basis = BipartiteBasis::new(soi, bath).unwrap();
    ManyBodyOperator::new(basis, random_hermitian(rng, soi * bath)).unwrap()
}

pub fn random_bath(rng: &mut ChaCha8Rng, dim: usize) -> BathState {
    let v = CVector::from_iterator(dim, (0..dim).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
    let n = v.norm();
    BathState::new(v.unscale(n)).unwrap()
}

/// `C (ω − H_R)⁻¹ C†` with an explicit inverse.
pub fn schur_by_inverse(h_r: &CMatrix, c_blk: &CMatrix, omega: f64) -> CMatrix {
    let n = h_r.nrows();
    let inv = (CMatrix::identity(n, n) * c(omega, 0.0) - h_r).try_inverse().unwrap();
    c_blk * inv * c_blk.adjoint()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
}

/// `G(t) = −i ∫ A(ω) e^{−iωt} dω` for the Lorentzian spectral function,
/// by panel quadrature on `[0, X]` and an averaged alternating tail.
pub fn greens_by_quadrature(omega_s: f64, delta: f64, t: f64) -> Complex64 {
    let rule = gauss_legendre(24);
    let a = |x: f64| delta / PI / (x * x + delta * delta);
    // A is even about ω_S, so only the cosine transform survives
    let cosine = if t == 0.0 {
        let f = |s: f64| {
            let x = s / (1.0 - s);
            a(x) / ((1.0 - s) * (1.0 - s))
        };
        let panels = 400;
        (0..panels).map(|k| integrate(&f, k as f64 / panels as f64, (k + 1) as f64 / panels as f64, &rule)).sum()
    } else {
        let half = PI / t;
        let x_end = half * (100.0 * delta / half).ceil().max(1.0);
        let width = (delta / 4.0).min(half / 4.0);
        let panels = (x_end / width).ceil() as usize;
        let h = x_end / panels as f64;
        let f = |x: f64| a(x) * (x * t).cos();
        let head: f64 = (0..panels).map(|k| integrate(&f, k as f64 * h, (k + 1) as f64 * h, &rule)).sum();
        let terms = 40;
        let mut partial = Vec::with_capacity(terms);
        let mut acc = 0.0;
        for k in 0..terms {
            let lo = x_end + k as f64 * half;
            acc += integrate(&f, lo, lo + half, &rule);
            partial.push(acc);
        }
        while partial.len() > 1 {
            partial = partial.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        }
        head + partial[0]
    };
    c(0.0, -1.0) * c(0.0, -omega_s * t).exp() * (2.0 * cosine)
}

/// `e^M` by scaling and squaring around a 30-term Taylor series.
pub fn expm_taylor(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let norm = m.iter().map(|z| z.norm()).sum::<f64>();
    let squarings = norm.log2().ceil().max(0.0) as i32 + 1;
    let a = m * c(0.5f64.powi(squarings), 0.0);
    let mut term = CMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &a * c(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}
