use num_complex::Complex64;

use super::lattice::{half_lattice, index_of, mode_count, Wavevector};
use crate::error::{Error, Result};

/// A real, mean-zero scalar field on the torus, stored as its half-lattice
/// Fourier coefficients `ŵ_k`, `k ∈ Z²₊`, `max(|k1|, |k2|) ≤ cutoff`.
///
/// The coefficient at `-k` is implied as `conj(ŵ_k)` and `ŵ_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    cutoff: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(cutoff: usize) -> Self {
        Self {
            cutoff,
            coeffs: vec![Complex64::new(0.0, 0.0); mode_count(cutoff)],
        }
    }

    pub fn from_coeffs(cutoff: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != mode_count(cutoff) {
            return Err(Error::arg(format!(
                "cutoff {cutoff} needs {} coefficients, got {}",
                mode_count(cutoff),
                coeffs.len()
            )));
        }
        Ok(Self { cutoff, coeffs })
    }

    /// Builds a field from full-lattice modes. A mode given on the lower
    /// half is stored through its conjugate; repeated modes accumulate.
    pub fn from_modes(
        cutoff: usize,
        modes: impl IntoIterator<Item = (Wavevector, Complex64)>,
    ) -> Result<Self> {
        let mut f = Self::zeros(cutoff);
        for (k, c) in modes {
            if k.linf() > cutoff {
                return Err(Error::arg(format!(
                    "mode ({}, {}) exceeds cutoff {cutoff}",
                    k.k1, k.k2
                )));
            }
            if k.is_upper() {
                f.coeffs[index_of(k)] += c;
            } else {
                f.coeffs[index_of(k.neg())] += c.conj();
            }
        }
        Ok(f)
    }

    /// `amplitude · 2cos(2π k·x)`: ŵ_{±k} = amplitude.
    pub fn cosine(cutoff: usize, k: Wavevector, amplitude: f64) -> Result<Self> {
        Self::from_modes(cutoff, [(k, Complex64::new(amplitude, 0.0))])
    }

    /// `amplitude · 2sin(2π k·x)`: ŵ_k = -i·amplitude.
    pub fn sine(cutoff: usize, k: Wavevector, amplitude: f64) -> Result<Self> {
        Self::from_modes(cutoff, [(k, Complex64::new(0.0, -amplitude))])
    }

    #[inline]
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Full-lattice coefficient; zero outside the cutoff and at k = 0.
    pub fn get(&self, k1: i32, k2: i32) -> Complex64 {
        let Some(k) = Wavevector::new(k1, k2) else {
            return Complex64::new(0.0, 0.0);
        };
        if k.linf() > self.cutoff {
            Complex64::new(0.0, 0.0)
        } else if k.is_upper() {
            self.coeffs[index_of(k)]
        } else {
            self.coeffs[index_of(k.neg())].conj()
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Wavevector, Complex64)> + '_ {
        half_lattice(self.cutoff).zip(self.coeffs.iter().copied())
    }

    pub fn check_cutoff(&self, other: &Self) -> Result<()> {
        if self.cutoff != other.cutoff {
            Err(Error::Dimension {
                expected: self.cutoff,
                found: other.cutoff,
            })
        } else {
            Ok(())
        }
    }

    /// `L²(T²)` inner product of two real fields, `Σ_full ŵ_k conj(ĥ_k)`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_cutoff(other)?;
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        Ok(2.0 * s)
    }

    /// `|w|²` (= `Σ_full |ŵ_k|²`).
    pub fn norm_sq(&self) -> f64 {
        2.0 * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        self.check_cutoff(other)?;
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += *y * a;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    /// Galerkin projection `Π_n` (if `n` is below the cutoff) or
    /// zero-extension (if above).
    pub fn with_cutoff(&self, n: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); mode_count(n)];
        let m = coeffs.len().min(self.coeffs.len());
        coeffs[..m].copy_from_slice(&self.coeffs[..m]);
        Self { cutoff: n, coeffs }
    }

    /// Mirror image `w(-x)`: conjugates every coefficient.
    pub fn reflected(&self) -> Self {
        Self {
            cutoff: self.cutoff,
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest coefficient modulus and its storage index.
    pub fn max_abs(&self) -> (f64, usize) {
        let mut best = (0.0f64, 0usize);
        for (i, c) in self.coeffs.iter().enumerate() {
            let a = c.norm();
            if !(a <= best.0) {
                best = (a, i);
            }
        }
        best
    }

    /// Value of the field at a point, `Σ_full ŵ_k e^{2πi k·x}`.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let phases = PhaseTable::new(self.cutoff, x);
        let s: f64 = self
            .iter()
            .map(|(k, c)| (c * phases.phase(k)).re)
            .sum();
        2.0 * s
    }
}

/// Divergence-free velocity `(u1, u2)`, each component a real mean-zero field.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub u1: SpectralField,
    pub u2: SpectralField,
}

impl VelocityField {
    pub fn cutoff(&self) -> usize {
        self.u1.cutoff()
    }

    /// Largest `|k1 û1_k + k2 û2_k|` relative to the largest velocity coefficient.
    pub fn divergence_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for ((k, a), b) in self.u1.iter().zip(self.u2.coeffs()) {
            let d = a * k.k1 as f64 + b * k.k2 as f64;
            worst = worst.max(d.norm());
            scale = scale.max(a.norm()).max(b.norm());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

/// Precomputed `e^{2πi j x1}` for `|j| ≤ n` and `e^{2πi j x2}` for `0 ≤ j ≤ n`.
pub(crate) struct PhaseTable {
    n: usize,
    e1: Vec<Complex64>,
    e2: Vec<Complex64>,
}

impl PhaseTable {
    pub(crate) fn new(n: usize, x: [f64; 2]) -> Self {
        let tau = std::f64::consts::TAU;
        let mut e1 = Vec::with_capacity(2 * n + 1);
        for j in -(n as i64)..=(n as i64) {
            e1.push(Complex64::from_polar(1.0, tau * j as f64 * x[0]));
        }
        let e2 = (0..=n)
            .map(|j| Complex64::from_polar(1.0, tau * j as f64 * x[1]))
            .collect();
        Self { n, e1, e2 }
    }

    #[inline]
    pub(crate) fn phase(&self, k: Wavevector) -> Complex64 {
        self.e1[(k.k1 + self.n as i32) as usize] * self.e2[k.k2 as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_half_modes_are_stored_conjugated() {
        let k = Wavevector::new(-1, -2).unwrap();
        let f = SpectralField::from_modes(3, [(k, Complex64::new(1.0, 2.0))]).unwrap();
        assert_eq!(f.get(1, 2), Complex64::new(1.0, -2.0));
        assert_eq!(f.get(-1, -2), Complex64::new(1.0, 2.0));
        assert_eq!(f.get(0, 0), Complex64::new(0.0, 0.0));
        assert_eq!(f.get(7, 0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn out_of_cutoff_mode_rejected() {
        let k = Wavevector::new(4, 0).unwrap();
        assert!(SpectralField::from_modes(3, [(k, Complex64::new(1.0, 0.0))]).is_err());
    }

    #[test]
    fn pointwise_cosine() {
        let k = Wavevector::new(1, 0).unwrap();
        let f = SpectralField::cosine(2, k, 1.0).unwrap();
        for &x in &[0.0, 0.1, 0.37] {
            let want = 2.0 * (std::f64::consts::TAU * x).cos();
            assert!((f.eval([x, 0.3]) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_and_extension() {
        let k = Wavevector::new(2, 1).unwrap();
        let f = SpectralField::sine(3, k, 1.5).unwrap();
        assert_eq!(f.with_cutoff(1).norm(), 0.0);
        let g = f.with_cutoff(5);
        assert_eq!(g.get(2, 1), f.get(2, 1));
        assert_eq!(g.with_cutoff(3), f);
    }
}
