//! Galerkin-truncated advection terms.
//!
//! `B0(h, ω) = Π_N (K(h)·∇ω)` is a quadratic product and is computed exactly,
//! either by direct convolution over precomputed triads or by a zero-padded
//! 2D FFT on an `M×M` grid with `M ≥ 3N+1` (alias-free for products of two
//! fields with sup-norm cutoff `N`, re-truncated to `N` afterwards).
//! `B1(h, ω) = K(h)(0)·∇ω` is a constant-coefficient advection and is diagonal.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::field::SpectralField;
use super::lattice::Lattice;
use super::ops::{velocity_at_origin, velocity_multiplier};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BilinearKind {
    /// `K(h)·∇ω`
    B0,
    /// `K(h)(0)·∇ω`
    B1,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Convolution over the triad table.
    #[default]
    Direct,
    /// Zero-padded FFT.
    PaddedFft,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Triads `(p, q)` with `p + q = k` grouped by output mode `k`.
#[derive(Debug)]
struct TriadTable {
    offsets: Vec<u32>,
    p: Vec<u32>,
    q: Vec<u32>,
    coef: Vec<f64>,
}

impl TriadTable {
    fn apply(&self, a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let lo = self.offsets[i] as usize;
            let hi = self.offsets[i + 1] as usize;
            let mut re = 0.0;
            let mut im = 0.0;
            for t in lo..hi {
                let x = a[self.p[t] as usize];
                let y = b[self.q[t] as usize];
                let c = self.coef[t];
                re += c * (x.re * y.re - x.im * y.im);
                im += c * (x.re * y.im + x.im * y.re);
            }
            *o = Complex64::new(re, im);
        }
    }
}

/// Precomputed kernels for one cutoff and backend. Immutable and `Sync`.
pub struct Nonlinearity {
    lattice: Lattice,
    backend: Backend,
    general: Option<TriadTable>,
    symmetric: Option<TriadTable>,
    fft: Option<PaddedFft>,
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("cutoff", &self.lattice.cutoff())
            .field("backend", &self.backend)
            .finish()
    }
}

/// Coefficient of `ĥ_p ŵ_q` in `(K(h)·∇ω)^_{p+q}`:
/// `(-i p^⊥/(2π|p|²)) · (2πi q) = (p^⊥·q)/|p|²`.
#[inline]
fn triad_coefficient(p: super::Wavevector, q: super::Wavevector) -> f64 {
    let [a, b] = p.perp();
    (a * q.k1 as f64 + b * q.k2 as f64) / p.norm_sq()
}

impl Nonlinearity {
    pub fn new(cutoff: usize, backend: Backend) -> Self {
        let lattice = Lattice::new(cutoff);
        let (general, symmetric, fft) = match backend {
            Backend::Direct => (
                Some(build_general(&lattice)),
                Some(build_symmetric(&lattice)),
                None,
            ),
            Backend::PaddedFft => (None, None, Some(PaddedFft::new(&lattice))),
        };
        Self {
            lattice,
            backend,
            general,
            symmetric,
            fft,
        }
    }

    pub fn cutoff(&self) -> usize {
        self.lattice.cutoff()
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn check(&self, f: &SpectralField) -> Result<()> {
        if f.cutoff() != self.cutoff() {
            return Err(crate::Error::Dimension {
                expected: self.cutoff(),
                found: f.cutoff(),
            });
        }
        Ok(())
    }

    /// `B0(h, ω)` or `B1(h, ω)`.
    pub fn bilinear(
        &self,
        h: &SpectralField,
        w: &SpectralField,
        kind: BilinearKind,
    ) -> Result<SpectralField> {
        self.check(h)?;
        self.check(w)?;
        let mut out = vec![ZERO; self.lattice.len()];
        match kind {
            BilinearKind::B0 => self.b0_into(h, w, &mut out),
            BilinearKind::B1 => b1_into(&self.lattice, velocity_at_origin(h), w, &mut out),
        }
        SpectralField::from_coeffs(self.cutoff(), out)
    }

    /// `B0(ω, ω)`, using the symmetrized triad table on the direct backend.
    pub fn quadratic_b0(&self, w: &SpectralField) -> Result<SpectralField> {
        self.check(w)?;
        let mut out = vec![ZERO; self.lattice.len()];
        self.quadratic_b0_into(w, &mut out);
        SpectralField::from_coeffs(self.cutoff(), out)
    }

    pub(crate) fn quadratic_b0_into(&self, w: &SpectralField, out: &mut [Complex64]) {
        match &self.symmetric {
            Some(t) => {
                let full = to_full(w.coeffs());
                t.apply(&full, &full, out);
            }
            None => self.b0_into(w, w, out),
        }
    }

    pub(crate) fn b0_into(&self, h: &SpectralField, w: &SpectralField, out: &mut [Complex64]) {
        if let Some(t) = &self.general {
            let hf = to_full(h.coeffs());
            let wf = to_full(w.coeffs());
            t.apply(&hf, &wf, out);
        } else if let Some(f) = &self.fft {
            f.b0_into(&self.lattice, h, w, out);
        }
    }
}

/// `out_k = 2πi (v·k) ŵ_k`.
pub(crate) fn b1_into(lattice: &Lattice, v: [f64; 2], w: &SpectralField, out: &mut [Complex64]) {
    for ((o, k), c) in out.iter_mut().zip(lattice.modes()).zip(w.coeffs()) {
        let s = TAU * (v[0] * k.k1 as f64 + v[1] * k.k2 as f64);
        *o = Complex64::new(-s * c.im, s * c.re);
    }
}

/// One-shot `bilinear_b(h, ω, kind)`; builds the kernel tables on every call.
pub fn bilinear_b(
    h: &SpectralField,
    w: &SpectralField,
    kind: BilinearKind,
    backend: Backend,
) -> Result<SpectralField> {
    h.check_cutoff(w)?;
    Nonlinearity::new(h.cutoff(), backend).bilinear(h, w, kind)
}

fn to_full(half: &[Complex64]) -> Vec<Complex64> {
    let mut full = Vec::with_capacity(2 * half.len());
    full.extend_from_slice(half);
    full.extend(half.iter().map(|c| c.conj()));
    full
}

fn build_general(lattice: &Lattice) -> TriadTable {
    let nfull = 2 * lattice.len();
    let mut t = TriadTable {
        offsets: vec![0],
        p: Vec::new(),
        q: Vec::new(),
        coef: Vec::new(),
    };
    for &k in lattice.modes() {
        for pi in 0..nfull {
            let p = lattice.full_wavevector(pi);
            let Some(q) = super::Wavevector::new(k.k1 - p.k1, k.k2 - p.k2) else {
                continue;
            };
            let Some(qi) = lattice.full_index(q) else {
                continue;
            };
            let c = triad_coefficient(p, q);
            if c != 0.0 {
                t.p.push(pi as u32);
                t.q.push(qi as u32);
                t.coef.push(c);
            }
        }
        t.offsets.push(t.p.len() as u32);
    }
    t
}

fn build_symmetric(lattice: &Lattice) -> TriadTable {
    let nfull = 2 * lattice.len();
    let mut t = TriadTable {
        offsets: vec![0],
        p: Vec::new(),
        q: Vec::new(),
        coef: Vec::new(),
    };
    for &k in lattice.modes() {
        for pi in 0..nfull {
            let p = lattice.full_wavevector(pi);
            let Some(q) = super::Wavevector::new(k.k1 - p.k1, k.k2 - p.k2) else {
                continue;
            };
            let Some(qi) = lattice.full_index(q) else {
                continue;
            };
            if qi <= pi {
                continue;
            }
            // c(p,q) + c(q,p) = (p^⊥·q)(1/|p|² - 1/|q|²)
            let c = triad_coefficient(p, q) + triad_coefficient(q, p);
            if c != 0.0 {
                t.p.push(pi as u32);
                t.q.push(qi as u32);
                t.coef.push(c);
            }
        }
        t.offsets.push(t.p.len() as u32);
    }
    t
}

/// Grid side used by the padded transform for cutoff `n`.
pub fn padded_grid_size(n: usize) -> usize {
    (3 * n + 1).next_power_of_two().max(4)
}

struct PaddedFft {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Grid slot of each full-layout mode, row-major `(k1 mod m, k2 mod m)`.
    slot: Vec<usize>,
}

impl PaddedFft {
    fn new(lattice: &Lattice) -> Self {
        let m = padded_grid_size(lattice.cutoff());
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let slot = (0..2 * lattice.len())
            .map(|i| {
                let k = lattice.full_wavevector(i);
                let a = k.k1.rem_euclid(m as i32) as usize;
                let b = k.k2.rem_euclid(m as i32) as usize;
                a * m + b
            })
            .collect();
        Self { m, fwd, inv, slot }
    }

    /// Rows, transpose, rows. Applied twice it restores the layout.
    fn transform(&self, fft: &Arc<dyn Fft<f64>>, buf: &mut Vec<Complex64>, tmp: &mut Vec<Complex64>) {
        let m = self.m;
        fft.process(buf);
        for i in 0..m {
            for j in 0..m {
                tmp[j * m + i] = buf[i * m + j];
            }
        }
        fft.process(tmp);
        std::mem::swap(buf, tmp);
    }

    fn b0_into(&self, lattice: &Lattice, h: &SpectralField, w: &SpectralField, out: &mut [Complex64]) {
        let m = self.m;
        let nh = lattice.len();
        let mut vel = vec![ZERO; m * m];
        let mut grad = vec![ZERO; m * m];
        let i = Complex64::new(0.0, 1.0);
        for (j, (&k, (hc, wc))) in lattice
            .modes()
            .iter()
            .zip(h.coeffs().iter().zip(w.coeffs()))
            .enumerate()
        {
            let [a1, a2] = velocity_multiplier(k);
            let (u1, u2) = (a1 * hc, a2 * hc);
            let g1 = Complex64::new(0.0, TAU * k.k1 as f64) * wc;
            let g2 = Complex64::new(0.0, TAU * k.k2 as f64) * wc;
            // pack two real fields into one complex transform: f + i g
            vel[self.slot[j]] = u1 + i * u2;
            vel[self.slot[nh + j]] = u1.conj() + i * u2.conj();
            grad[self.slot[j]] = g1 + i * g2;
            grad[self.slot[nh + j]] = g1.conj() + i * g2.conj();
        }
        let mut tmp = vec![ZERO; m * m];
        self.transform(&self.inv, &mut vel, &mut tmp);
        self.transform(&self.inv, &mut grad, &mut tmp);
        let mut prod: Vec<Complex64> = vel
            .iter()
            .zip(&grad)
            .map(|(a, g)| Complex64::new(a.re * g.re + a.im * g.im, 0.0))
            .collect();
        self.transform(&self.fwd, &mut prod, &mut tmp);
        let scale = 1.0 / (m * m) as f64;
        for (j, o) in out.iter_mut().enumerate() {
            *o = prod[self.slot[j]] * scale;
        }
    }
}

/// Values of `w` on the uniform `m×m` grid via the inverse transform, with
/// imaginary parts kept so that reality can be checked. Entry `[i*m + j]`
/// is the value at `x = (j/m, i/m)`.
pub fn to_grid(w: &SpectralField, m: usize) -> Vec<Complex64> {
    assert!(m > 2 * w.cutoff(), "grid too small for cutoff");
    let lattice = Lattice::new(w.cutoff());
    let f = PaddedFft {
        m,
        fwd: FftPlanner::new().plan_fft_forward(m),
        inv: FftPlanner::new().plan_fft_inverse(m),
        slot: (0..2 * lattice.len())
            .map(|i| {
                let k = lattice.full_wavevector(i);
                k.k1.rem_euclid(m as i32) as usize * m + k.k2.rem_euclid(m as i32) as usize
            })
            .collect(),
    };
    let mut buf = vec![ZERO; m * m];
    let nh = lattice.len();
    for (j, c) in w.coeffs().iter().enumerate() {
        buf[f.slot[j]] = *c;
        buf[f.slot[nh + j]] = c.conj();
    }
    let mut tmp = vec![ZERO; m * m];
    f.transform(&f.inv, &mut buf, &mut tmp);
    buf
}
