//! Independent oracles for the acceptance suite. Nothing here calls the
//! kernels under test: sums are written out over the full lattice from the
//! defining formulas.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vortrace::spectral::half_lattice;
use vortrace::{NoiseSpec, SpectralField, Wavevector};

pub type Mat2 = [[f64; 2]; 2];

/// Field with uniform random coefficients scaled by `|k|^{-decay}`.
pub fn random_field(n: usize, decay: f64, rng: &mut ChaCha8Rng) -> SpectralField {
    let coeffs = half_lattice(n)
        .map(|k| {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            z * k.norm().powf(-decay)
        })
        .collect();
    SpectralField::from_coeffs(n, coeffs).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coefficient at any `k` in the full box, zero outside the cutoff.
fn coeff(w: &SpectralField, k1: i32, k2: i32) -> Complex64 {
    let n = w.cutoff() as i32;
    if (k1, k2) == (0, 0) || k1.abs() > n || k2.abs() > n {
        Complex64::new(0.0, 0.0)
    } else {
        w.get(k1, k2)
    }
}

/// `K(h)^_p = -i p^⊥ ĥ_p / (2π|p|²)` with `p^⊥ = (p2, -p1)`.
fn velocity(h: &SpectralField, p1: i32, p2: i32) -> [Complex64; 2] {
    let c = coeff(h, p1, p2);
    if c == Complex64::new(0.0, 0.0) {
        return [c, c];
    }
    let s = Complex64::new(0.0, -1.0 / (2.0 * PI * (p1 * p1 + p2 * p2) as f64));
    [s * p2 as f64 * c, s * (-p1) as f64 * c]
}

/// `Π_N (K(h)·∇w)` by the double sum `Σ_{p+q=k} (K(h)^_p · 2πi q) ŵ_q`.
pub fn brute_b0(h: &SpectralField, w: &SpectralField) -> SpectralField {
    let n = h.cutoff() as i32;
    let coeffs = half_lattice(h.cutoff())
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for p1 in -n..=n {
                for p2 in -n..=n {
                    let (q1, q2) = (k.k1 - p1, k.k2 - p2);
                    let u = velocity(h, p1, p2);
                    let g = coeff(w, q1, q2) * Complex64::new(0.0, 2.0 * PI);
                    acc += (u[0] * q1 as f64 + u[1] * q2 as f64) * g;
                }
            }
            acc
        })
        .collect();
    SpectralField::from_coeffs(h.cutoff(), coeffs).unwrap()
}

/// `K(h)(0)·∇w` with `K(h)(0) = Σ_full K(h)^_p`.
pub fn brute_b1(h: &SpectralField, w: &SpectralField) -> SpectralField {
    let n = h.cutoff() as i32;
    let mut v = [0.0; 2];
    for p1 in -n..=n {
        for p2 in -n..=n {
            let u = velocity(h, p1, p2);
            v[0] += u[0].re;
            v[1] += u[1].re;
        }
    }
    let coeffs = w
        .iter()
        .map(|(k, c)| Complex64::new(0.0, 2.0 * PI * (v[0] * k.k1 as f64 + v[1] * k.k2 as f64)) * c)
        .collect();
    SpectralField::from_coeffs(w.cutoff(), coeffs).unwrap()
}

pub fn lambda(k: Wavevector) -> f64 {
    4.0 * PI * PI * k.norm_sq()
}

/// All nonzero `k` of the box with their full-lattice multipliers `a_k`.
fn full_box(n: usize) -> impl Iterator<Item = (Wavevector, [Complex64; 2])> {
    let n = n as i32;
    (-n..=n)
        .flat_map(move |a| (-n..=n).map(move |b| (a, b)))
        .filter_map(|(a, b)| Wavevector::new(a, b))
        .map(|k| {
            let s = Complex64::new(0.0, -1.0 / (2.0 * PI * k.norm_sq()));
            (k, [s * k.k2 as f64, s * (-k.k1) as f64])
        })
}

/// Linear OU model: `χ(w) = Σ_full a_k ŵ_k / λ_k`, the time integral of
/// `E ψ*(ω_t) = Σ a_k e^{-λ_k t} ŵ_k`.
pub fn ou_corrector(w: &SpectralField) -> [f64; 2] {
    let mut chi = [0.0; 2];
    for (k, a) in full_box(w.cutoff()) {
        let c = coeff(w, k.k1, k.k2);
        chi[0] += (a[0] * c).re / lambda(k);
        chi[1] += (a[1] * c).re / lambda(k);
    }
    chi
}

/// Stationary `E|ω̂_k|² = q_k² / (2λ_k)` of `dω_k = -λ_k ω_k dt + q_k dW_k`
/// with `E|W_k(t)|² = t`.
pub fn ou_stationary_variance(q: f64, k: Wavevector) -> f64 {
    q * q / (2.0 * lambda(k))
}

/// `D_ij = ∫_R E[ψ^i(ω_0) ψ^j(ω_t)] dt = Σ_full Re(a^i_k conj a^j_k) σ_k² · 2/λ_k`.
pub fn ou_diffusivity(noise: &NoiseSpec) -> Mat2 {
    let mut d = [[0.0; 2]; 2];
    for (k, a) in full_box(noise.cutoff()) {
        let s2 = ou_stationary_variance(noise.q(k), k);
        for i in 0..2 {
            for j in 0..2 {
                d[i][j] += (a[i] * a[j].conj()).re * s2 * 2.0 / lambda(k);
            }
        }
    }
    d
}

/// `Σ_full q_k²`.
pub fn trace_q_sq(noise: &NoiseSpec) -> f64 {
    full_box(noise.cutoff()).map(|(k, _)| noise.q(k).powi(2)).sum()
}

pub fn frobenius(m: &Mat2) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn mat_sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
}

pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

pub fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
