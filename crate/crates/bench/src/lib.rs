//! Fixtures shared by the criterion benches in `benches/`.

use vortrace::noise::{NoiseForm, RngState};
use vortrace::{EquationKind, ModelConfig, NoiseSpec, SpectralField, Stepper};

/// Field with `|ŵ_k| ~ |k|^{-2}` from a fixed RNG stream.
pub fn sample_field(n: usize, seed: u64) -> SpectralField {
    let rng = RngState::new(seed, 0);
    let mut w = SpectralField::zeros(n);
    let lattice = vortrace::spectral::half_lattice(n).collect::<Vec<_>>();
    for (j, c) in w.coeffs_mut().iter_mut().enumerate() {
        *c = rng.complex_normal(j as u32, 0) / lattice[j].norm_sq();
    }
    w
}

/// Default stochastic stepper for cutoff `n`.
pub fn default_stepper(n: usize, kind: EquationKind) -> Stepper {
    let noise = NoiseSpec::parametric(n, NoiseForm::default());
    Stepper::new(ModelConfig::new(kind, n, 1e-3), &noise).expect("valid default model")
}
