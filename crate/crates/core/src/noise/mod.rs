//! Diagonal covariance `Q`, spatially homogeneous Wiener increments and the
//! exact one-step stochastic convolution per Fourier mode.
//!
//! Each stored mode `k ∈ Z²₊` carries an independent complex Brownian motion
//! `B_k` (real and imaginary parts of variance `t/2`) and `B_{-k} = conj(B_k)`.
//! The resulting field is real and its law is translation invariant.

pub mod philox;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use philox::philox4x32_10;

use crate::error::{Error, Result};
use crate::spectral::{
    half_lattice, index_of, mode_count, EigenConvention, SpectralField, Wavevector,
};

/// Parametric spectrum `q_k = amplitude · |k|^{-exponent}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseForm {
    pub amplitude: f64,
    pub exponent: f64,
}

impl Default for NoiseForm {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            exponent: 3.0,
        }
    }
}

/// Even real table `q_k` defining `(Qw)^_k = q_k ŵ_k`, stored on the half
/// lattice so `q_{-k} = q_k` holds by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    cutoff: usize,
    q: Vec<f64>,
    form: Option<NoiseForm>,
}

impl NoiseSpec {
    pub fn parametric(cutoff: usize, form: NoiseForm) -> Self {
        let q = half_lattice(cutoff)
            .map(|k| form.amplitude * k.norm().powf(-form.exponent))
            .collect();
        Self {
            cutoff,
            q,
            form: Some(form),
        }
    }

    pub fn zero(cutoff: usize) -> Self {
        Self {
            cutoff,
            q: vec![0.0; mode_count(cutoff)],
            form: None,
        }
    }

    pub fn from_table(cutoff: usize, q: Vec<f64>) -> Result<Self> {
        if q.len() != mode_count(cutoff) {
            return Err(Error::arg(format!(
                "noise table for cutoff {cutoff} needs {} entries, got {}",
                mode_count(cutoff),
                q.len()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("noise table has non-finite entries"));
        }
        Ok(Self {
            cutoff,
            q,
            form: None,
        })
    }

    /// Overrides `q_k` (and thereby `q_{-k}`).
    pub fn with_override(mut self, k: Wavevector, q: f64) -> Result<Self> {
        if k.linf() > self.cutoff {
            return Err(Error::arg(format!(
                "override mode ({}, {}) outside cutoff {}",
                k.k1, k.k2, self.cutoff
            )));
        }
        if !q.is_finite() {
            return Err(Error::arg("override value must be finite"));
        }
        let rep = if k.is_upper() { k } else { k.neg() };
        self.q[index_of(rep)] = q;
        Ok(self)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn form(&self) -> Option<NoiseForm> {
        self.form
    }

    /// Half-lattice table in storage order.
    pub fn table(&self) -> &[f64] {
        &self.q
    }

    pub fn q(&self, k: Wavevector) -> f64 {
        if k.linf() > self.cutoff {
            return 0.0;
        }
        let rep = if k.is_upper() { k } else { k.neg() };
        self.q[index_of(rep)]
    }

    /// `‖Q‖_{L_HS(H, H^r)} = sqrt(Σ_full |k|^{2r} q_k²)`.
    pub fn hs_norm(&self, r: f64) -> f64 {
        let s: f64 = half_lattice(self.cutoff)
            .zip(&self.q)
            .map(|(k, q)| k.norm_sq().powf(r) * q * q)
            .sum();
        (2.0 * s).sqrt()
    }

    /// Truncated trace `tr Q² = Σ_full q_k²`.
    pub fn trace_sq(&self) -> f64 {
        2.0 * self.q.iter().map(|q| q * q).sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.q.iter().all(|&q| q == 0.0)
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.q.iter().all(|&q| q != 0.0)
    }

    /// Errors with the first mode where `q_k = 0`.
    pub fn require_nondegenerate(&self) -> Result<()> {
        match half_lattice(self.cutoff).zip(&self.q).find(|(_, &q)| q == 0.0) {
            Some((k, _)) => Err(Error::Degenerate { k1: k.k1, k2: k.k2 }),
            None => Ok(()),
        }
    }

    /// Restriction `Π_n Q`. Extension beyond the stored cutoff uses the
    /// parametric form when there is one and zeros otherwise.
    pub fn with_cutoff(&self, n: usize) -> Self {
        let mut q = Vec::with_capacity(mode_count(n));
        for (i, k) in half_lattice(n).enumerate() {
            q.push(match self.q.get(i) {
                Some(&v) => v,
                None => self
                    .form
                    .map_or(0.0, |f| f.amplitude * k.norm().powf(-f.exponent)),
            });
        }
        Self {
            cutoff: n,
            q,
            form: self.form,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RngAlgorithm {
    Philox4x32x10,
}

impl RngAlgorithm {
    pub fn id(self) -> u32 {
        match self {
            RngAlgorithm::Philox4x32x10 => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            1 => Some(RngAlgorithm::Philox4x32x10),
            _ => None,
        }
    }
}

/// Counter-based random state. A Gaussian is a pure function of
/// `(seed, stream, draw, mode index)`; `counter` is the next draw to use.
///
/// `reflect` conjugates every complex Gaussian, which produces the mirror
/// image `x ↦ -x` of the driving noise (used for antithetic pairs).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub algorithm: RngAlgorithm,
    pub seed: u64,
    pub stream: u32,
    pub counter: u64,
    pub reflect: bool,
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
fn open_unit(hi: u32, lo: u32) -> f64 {
    let bits = (((hi as u64) << 32) | lo as u64) >> 11;
    (bits as f64 + 0.5) * TWO_POW_M53
}

impl RngState {
    pub fn new(seed: u64, stream: u32) -> Self {
        Self {
            algorithm: RngAlgorithm::Philox4x32x10,
            seed,
            stream,
            counter: 0,
            reflect: false,
        }
    }

    pub fn reflected(mut self) -> Self {
        self.reflect = !self.reflect;
        self
    }

    /// Complex standard Gaussian (`E|g|² = 1`) for one mode of one draw.
    #[inline]
    pub fn complex_normal(&self, mode: u32, draw: u64) -> Complex64 {
        let out = philox4x32_10(
            [mode, draw as u32, (draw >> 32) as u32, self.stream],
            [self.seed as u32, (self.seed >> 32) as u32],
        );
        let u1 = open_unit(out[0], out[1]);
        let u2 = open_unit(out[2], out[3]);
        let r = (-u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        if self.reflect {
            Complex64::new(r * c, -r * s)
        } else {
            Complex64::new(r * c, r * s)
        }
    }

    /// Reserves the next draw index.
    #[inline]
    pub fn take_draw(&mut self) -> u64 {
        let d = self.counter;
        self.counter += 1;
        d
    }

    pub fn advance(&mut self, draws: u64) {
        self.counter += draws;
    }

    /// Uniform on (0,1) from the draw/mode lattice; for non-field sampling.
    pub fn uniform(&self, mode: u32, draw: u64) -> f64 {
        let out = philox4x32_10(
            [mode, draw as u32, (draw >> 32) as u32, self.stream],
            [self.seed as u32, (self.seed >> 32) as u32],
        );
        open_unit(out[0], out[1])
    }
}

/// `Q ΔW` over a step `dt`: `q_k sqrt(dt) g_k` per stored mode.
pub fn sample_increment(q: &NoiseSpec, dt: f64, rng: &mut RngState) -> Result<SpectralField> {
    if !(dt > 0.0) {
        return Err(Error::arg(format!("dt must be positive, got {dt}")));
    }
    let draw = rng.take_draw();
    let sd = dt.sqrt();
    let coeffs = q
        .table()
        .iter()
        .enumerate()
        .map(|(j, &qk)| rng.complex_normal(j as u32, draw) * (qk * sd))
        .collect();
    SpectralField::from_coeffs(q.cutoff(), coeffs)
}

/// Decay factor and noise standard deviation of the exact one-step
/// Ornstein–Uhlenbeck update for eigenvalue `lambda`.
#[inline]
pub fn ou_factors(lambda: f64, q: f64, dt: f64) -> (f64, f64) {
    let decay = (-lambda * dt).exp();
    let sd = q * (-(-2.0 * lambda * dt).exp_m1() / (2.0 * lambda)).sqrt();
    (decay, sd)
}

/// `e^{-λ_k dt} c + q_k sqrt((1 - e^{-2λ_k dt}) / (2λ_k)) g`, `λ_k = 4π²|k|²`.
pub fn ou_mode_update(c: Complex64, k: Wavevector, q: f64, dt: f64, g: Complex64) -> Complex64 {
    ou_mode_update_with(c, k, q, dt, g, EigenConvention::TwoPi)
}

pub fn ou_mode_update_with(
    c: Complex64,
    k: Wavevector,
    q: f64,
    dt: f64,
    g: Complex64,
    conv: EigenConvention,
) -> Complex64 {
    let (decay, sd) = ou_factors(conv.lambda(k), q, dt);
    c * decay + g * sd
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn k(a: i32, b: i32) -> Wavevector {
        Wavevector::new(a, b).unwrap()
    }

    #[test]
    fn hs_norm_examples() {
        assert_eq!(NoiseSpec::zero(3).hs_norm(0.0), 0.0);
        let mut spec = NoiseSpec::zero(2);
        for m in [k(1, 0), k(0, 1), k(1, 1), k(-1, 1)] {
            spec = spec.with_override(m, 1.0).unwrap();
        }
        assert!((spec.hs_norm(0.0) - 8f64.sqrt()).abs() < 1e-15);
        assert!((spec.hs_norm(1.0) - 12f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn evenness_is_structural() {
        let spec = NoiseSpec::zero(3).with_override(k(-2, -1), 0.7).unwrap();
        assert_eq!(spec.q(k(2, 1)), 0.7);
        assert_eq!(spec.q(k(-2, -1)), 0.7);
    }

    #[test]
    fn degeneracy_reported_with_mode() {
        let spec = NoiseSpec::parametric(3, NoiseForm::default());
        assert!(spec.require_nondegenerate().is_ok());
        let spec = spec.with_override(k(0, 2), 0.0).unwrap();
        assert!(matches!(
            spec.require_nondegenerate(),
            Err(Error::Degenerate { k1: 0, k2: 2 })
        ));
    }

    #[test]
    fn zero_spec_gives_zero_increment() {
        let mut rng = RngState::new(1, 0);
        let f = sample_increment(&NoiseSpec::zero(4), 1e-3, &mut rng).unwrap();
        assert_eq!(f.norm(), 0.0);
        assert!(sample_increment(&NoiseSpec::zero(4), 0.0, &mut rng).is_err());
    }

    #[test]
    fn increments_are_reproducible() {
        let spec = NoiseSpec::parametric(4, NoiseForm::default());
        let state = RngState::new(42, 7);
        let (mut a, mut b) = (state, state);
        let fa = sample_increment(&spec, 1e-3, &mut a).unwrap();
        let fb = sample_increment(&spec, 1e-3, &mut b).unwrap();
        assert_eq!(fa.coeffs(), fb.coeffs());
        assert_eq!(a, b);
        let fc = sample_increment(&spec, 1e-3, &mut a).unwrap();
        assert_ne!(fa.coeffs(), fc.coeffs());
    }

    #[test]
    fn ito_isometry() {
        let spec = NoiseSpec::parametric(3, NoiseForm::default());
        let dt = 1e-3;
        let mut rng = RngState::new(9, 1);
        let n = 100_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| sample_increment(&spec, dt, &mut rng).unwrap().norm_sq() / dt)
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - spec.trace_sq()).abs() < 3.0 * se, "{mean} vs {}", spec.trace_sq());
    }

    #[test]
    fn ou_pure_decay_and_limits() {
        let c = Complex64::new(0.3, -0.2);
        let kk = k(1, 0);
        let g = Complex64::new(1.0, 1.0);
        let out = ou_mode_update(c, kk, 0.0, 0.01, g);
        assert_eq!(out, c * (-4.0 * PI * PI * 0.01f64).exp());
        let (decay, sd) = ou_factors(4.0 * PI * PI, 1.0, 1e3);
        assert_eq!(decay, 0.0);
        assert!((sd - 1.0 / (8.0 * PI * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ou_stationary_variance() {
        // c = 0, iterate; E|c|² → q²/(2λ)
        let kk = k(1, 1);
        let q = 0.8;
        let dt = 2e-3;
        let lambda = EigenConvention::TwoPi.lambda(kk);
        let rng = RngState::new(3, 0);
        let mut c = Complex64::new(0.0, 0.0);
        let n = 100_000u64;
        let mut acc = Vec::with_capacity(n as usize);
        for i in 0..n {
            c = ou_mode_update(c, kk, q, dt, rng.complex_normal(0, i));
            acc.push(c.norm_sqr());
        }
        let want = q * q / (2.0 * lambda);
        let mean = acc.iter().sum::<f64>() / n as f64;
        // correlation time 1/(2λ) ≈ 0.006 ≈ 3 steps; use batch means for the SE
        let batch = 100;
        let means: Vec<f64> = acc
            .chunks(batch)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let m = means.len() as f64;
        let bv = means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let se = (bv / m).sqrt();
        assert!((mean - want).abs() < 3.0 * se, "{mean} vs {want} (se {se})");
    }

    #[test]
    fn complex_normal_moments() {
        let rng = RngState::new(11, 3);
        let n = 200_000;
        let (mut re2, mut im2, mut reim, mut re) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let g = rng.complex_normal(5, i);
            re += g.re;
            re2 += g.re * g.re;
            im2 += g.im * g.im;
            reim += g.re * g.im;
        }
        let n = n as f64;
        assert!((re / n).abs() < 0.01);
        assert!((re2 / n - 0.5).abs() < 0.01);
        assert!((im2 / n - 0.5).abs() < 0.01);
        assert!((reim / n).abs() < 0.01);
    }

    #[test]
    fn reflection_conjugates() {
        let a = RngState::new(5, 2);
        let b = a.reflected();
        assert_eq!(a.complex_normal(3, 9).conj(), b.complex_normal(3, 9));
    }
}
