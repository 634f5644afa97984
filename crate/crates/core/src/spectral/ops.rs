use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::{PhaseTable, SpectralField, VelocityField};
use super::lattice::{half_lattice, Wavevector};
use crate::error::Result;

/// Which eigenvalue the Laplacian is given on `e_k`.
///
/// Reported `|·|_r` norms always use `|k|^r`; this only affects semigroups,
/// dissipation and energy balances.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenConvention {
    /// `λ_k = 4π²|k|²`, the eigenvalue of `-Δ` on `exp(2πi k·x)`.
    #[default]
    TwoPi,
    /// `λ_k = |k|²`.
    Unit,
}

impl EigenConvention {
    #[inline]
    pub fn lambda(self, k: Wavevector) -> f64 {
        match self {
            EigenConvention::TwoPi => 4.0 * PI * PI * k.norm_sq(),
            EigenConvention::Unit => k.norm_sq(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EigenConvention::TwoPi => "two-pi",
            EigenConvention::Unit => "unit",
        }
    }
}

/// `|w|_r = sqrt(Σ_full |k|^{2r} |ŵ_k|²)`.
pub fn hr_norm(w: &SpectralField, r: f64) -> f64 {
    let s: f64 = w.iter().map(|(k, c)| k.norm_sq().powf(r) * c.norm_sqr()).sum();
    (2.0 * s).sqrt()
}

/// Multiplier `a_k` with `K(w)^_k = a_k ŵ_k`: `a_k = -i k^⊥ / (2π|k|²)`.
#[inline]
pub fn velocity_multiplier(k: Wavevector) -> [Complex64; 2] {
    let [p1, p2] = k.perp();
    let s = -1.0 / (TAU * k.norm_sq());
    [Complex64::new(0.0, s * p1), Complex64::new(0.0, s * p2)]
}

/// Biot–Savart operator `K`, normalized so that `rot(K(w)) = w` exactly.
pub fn biot_savart(w: &SpectralField) -> VelocityField {
    let n = w.cutoff();
    let mut u1 = Vec::with_capacity(w.coeffs().len());
    let mut u2 = Vec::with_capacity(w.coeffs().len());
    for (k, c) in w.iter() {
        let [a1, a2] = velocity_multiplier(k);
        u1.push(a1 * c);
        u2.push(a2 * c);
    }
    VelocityField {
        u1: SpectralField::from_coeffs(n, u1).expect("same layout"),
        u2: SpectralField::from_coeffs(n, u2).expect("same layout"),
    }
}

/// Scalar rotation `∂2 u1 - ∂1 u2`; the coefficient at `k` is
/// `2πi(k2 û1_k - k1 û2_k)`, the exact inverse of [`biot_savart`].
pub fn rot(v: &VelocityField) -> Result<SpectralField> {
    v.u1.check_cutoff(&v.u2)?;
    let coeffs = half_lattice(v.cutoff())
        .zip(v.u1.coeffs().iter().zip(v.u2.coeffs()))
        .map(|(k, (a, b))| Complex64::new(0.0, TAU) * (a * k.k2 as f64 - b * k.k1 as f64))
        .collect();
    SpectralField::from_coeffs(v.cutoff(), coeffs)
}

/// `K(w)(x)` by direct Fourier summation.
pub fn eval_velocity(w: &SpectralField, x: [f64; 2]) -> [f64; 2] {
    let phases = PhaseTable::new(w.cutoff(), x);
    let mut out = [0.0; 2];
    for (k, c) in w.iter() {
        let [a1, a2] = velocity_multiplier(k);
        let z = c * phases.phase(k);
        out[0] += (a1 * z).re;
        out[1] += (a2 * z).re;
    }
    [2.0 * out[0], 2.0 * out[1]]
}

/// `ψ*(w) = K(w)(0)`, the velocity at the origin. Avoids the phase table.
pub fn velocity_at_origin(w: &SpectralField) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (k, c) in w.iter() {
        let [a1, a2] = velocity_multiplier(k);
        out[0] += (a1 * c).re;
        out[1] += (a2 * c).re;
    }
    [2.0 * out[0], 2.0 * out[1]]
}

/// `τ_x w = w(· + x)`: coefficient `ŵ_k e^{+2πi k·x}`.
pub fn translate(w: &SpectralField, x: [f64; 2]) -> SpectralField {
    let phases = PhaseTable::new(w.cutoff(), x);
    let coeffs = w.iter().map(|(k, c)| c * phases.phase(k)).collect();
    SpectralField::from_coeffs(w.cutoff(), coeffs).expect("same layout")
}

/// Heat semigroup `e^{Δt} w` with the default eigenvalue convention.
pub fn heat_semigroup(w: &SpectralField, t: f64) -> SpectralField {
    heat_semigroup_with(w, t, EigenConvention::TwoPi)
}

pub fn heat_semigroup_with(w: &SpectralField, t: f64, conv: EigenConvention) -> SpectralField {
    assert!(t >= 0.0, "heat semigroup needs t >= 0");
    let coeffs = w
        .iter()
        .map(|(k, c)| c * (-conv.lambda(k) * t).exp())
        .collect();
    SpectralField::from_coeffs(w.cutoff(), coeffs).expect("same layout")
}

/// Constant in `|K_i(w)|_{r+1} ≤ c |w|_r`: `|k_i| / (2π|k|²) · |k|^{r+1} ≤ |k|^r / (2π)`.
pub const BIOT_SAVART_BOUND: f64 = 1.0 / TAU;

/// Constant in `|ψ*(w)| ≤ c |w|_1` for cutoff `n`, from Cauchy–Schwarz:
/// `c² = Σ_full |a_k|² / |k|² = Σ_full 1 / (4π²|k|⁴)`.
pub fn psi_star_bound(n: usize) -> f64 {
    let s: f64 = half_lattice(n)
        .map(|k| 1.0 / (4.0 * PI * PI * k.norm_sq() * k.norm_sq()))
        .sum();
    (2.0 * s).sqrt()
}
