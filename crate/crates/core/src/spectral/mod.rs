//! Truncated Fourier representation of real mean-zero fields on the torus
//! `[-1/2, 1/2]²` and the deterministic operators acting on them.
//!
//! Conventions:
//! - basis `e_k(x) = exp(2πi k·x)`, orthonormal in `L²`;
//! - `|w|_r² = Σ_full |k|^{2r} |ŵ_k|²` (norms use `|k|`, not `2π|k|`);
//! - Biot–Savart `K(w)^_k = -i k^⊥ ŵ_k / (2π|k|²)` with `k^⊥ = (k2, -k1)`,
//!   chosen so that `rot ∘ K` is the identity (the 2π and i factors are
//!   required for that with this basis);
//! - translation `τ_x w = w(· + x)`, i.e. `ŵ_k e^{+2πi k·x}`;
//! - sup-norm truncation `max(|k1|, |k2|) ≤ N`.

mod field;
mod lattice;
mod nonlinear;
mod ops;

pub use field::{SpectralField, VelocityField};
pub use lattice::{half_lattice, index_of, mode_count, wavevector_at, Lattice, Wavevector};
pub use nonlinear::{bilinear_b, padded_grid_size, to_grid, Backend, BilinearKind, Nonlinearity};
pub use ops::{
    biot_savart, eval_velocity, heat_semigroup, heat_semigroup_with, hr_norm, psi_star_bound, rot,
    translate, velocity_at_origin, velocity_multiplier, EigenConvention, BIOT_SAVART_BOUND,
};
