//! Pseudo-spectral laboratory for stochastically forced 2D vorticity on the
//! unit torus, the environment process seen from a passive tracer, and the
//! ergodic diagnostics built on top of it (law of large numbers, asymptotic
//! covariance, CLT, Green–Kubo corrector, Malliavin-control coupling).
//!
//! Fields are stored as truncated Fourier coefficients on the half lattice;
//! see [`spectral`] for the conventions (basis `e_k = exp(2πi k·x)`,
//! Biot–Savart normalized so that `rot ∘ K = id`).

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod linearization;
pub mod noise;
pub mod spectral;
pub mod statistics;
pub mod tracer;

#[cfg(test)]
mod properties;

pub use dynamics::{
    EquationKind, ModelConfig, Observables, PathRecord, Recording, SolverState, Stepper,
};
pub use error::{Error, Result};
pub use noise::{NoiseSpec, RngState};
pub use spectral::{Backend, BilinearKind, EigenConvention, SpectralField, VelocityField, Wavevector};
pub use tracer::TracerPath;

/// A point or vector in R².
pub type Vec2 = [f64; 2];
