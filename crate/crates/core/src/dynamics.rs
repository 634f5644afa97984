//! Fixed-step integration of the truncated Galerkin systems.
//!
//! One step is exponential Euler–Maruyama on the mild form: per mode
//! `c ← e^{-λ_k dt}(c + dt·drift_k) + noise_k`, where `noise_k` is the exact
//! one-step stochastic convolution `∫ e^{-λ_k(dt-s)} q_k dB_k(s)`. Drifts:
//!
//! | kind          | drift                |
//! |---------------|----------------------|
//! | Eulerian      | `-B0(ξ)`             |
//! | Lagrangian    | `-B0(ω) + B1(ω)`     |
//! | Deterministic | `-B0(y) + B1(y)`, Q=0|

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{ou_factors, NoiseSpec, RngState};
use crate::spectral::{
    velocity_at_origin, Backend, EigenConvention, Lattice, Nonlinearity, SpectralField,
};

/// Coefficients above this modulus are treated as a blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquationKind {
    Eulerian,
    Lagrangian,
    Deterministic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: EquationKind,
    pub cutoff: usize,
    pub dt: f64,
    /// `false` drops every quadratic term (linear OU oracle mode).
    pub nonlinear: bool,
    pub convention: EigenConvention,
    pub backend: Backend,
    /// Each step consumes `substeps` consecutive noise draws, composed
    /// exactly as `substeps` finer OU steps. A run at `dt` with
    /// `substeps = 2` sees the same Brownian path as a run at `dt/2`.
    pub substeps: u32,
}

impl ModelConfig {
    pub fn new(kind: EquationKind, cutoff: usize, dt: f64) -> Self {
        Self {
            kind,
            cutoff,
            dt,
            nonlinear: true,
            convention: EigenConvention::TwoPi,
            backend: Backend::Direct,
            substeps: 1,
        }
    }

    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn with_substeps(mut self, m: u32) -> Self {
        self.substeps = m;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }
}

/// Mutable part of one equation instance. `t = step · dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub field: SpectralField,
    pub step: u64,
    pub rng: RngState,
}

impl SolverState {
    pub fn new(field: SpectralField, rng: RngState) -> Self {
        Self {
            field,
            step: 0,
            rng,
        }
    }
}

/// Scalar observables of one field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub t: f64,
    /// `|ω|²`
    pub energy: f64,
    /// `|ω|_1² = Σ_full |k|² |ω̂_k|²`
    pub h1_sq: f64,
    /// `2 Σ_full λ_k |ω̂_k|²`
    pub dissipation: f64,
    /// `ψ*(ω) = K(ω)(0)`
    pub psi: [f64; 2],
}

impl Observables {
    pub fn of(t: f64, w: &SpectralField, convention: EigenConvention) -> Self {
        let mut energy = 0.0;
        let mut h1 = 0.0;
        let mut diss = 0.0;
        for (k, c) in w.iter() {
            let a = c.norm_sqr();
            energy += a;
            h1 += k.norm_sq() * a;
            diss += convention.lambda(k) * a;
        }
        Observables {
            t,
            energy: 2.0 * energy,
            h1_sq: 2.0 * h1,
            dissipation: 4.0 * diss,
            psi: velocity_at_origin(w),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Recording {
    /// Record every `cadence` steps (and always the first and last state).
    pub cadence: u64,
    pub snapshots: bool,
}

impl Recording {
    pub fn every(cadence: u64) -> Self {
        Self {
            cadence: cadence.max(1),
            snapshots: false,
        }
    }

    pub fn with_snapshots(mut self) -> Self {
        self.snapshots = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub observables: Vec<Observables>,
    /// Field at each sample time when snapshots were requested, else empty.
    pub snapshots: Vec<SpectralField>,
    pub final_field: SpectralField,
    pub rng_start: RngState,
    pub rng_end: RngState,
    pub dt: f64,
}

impl PathRecord {
    pub fn psi_series(&self) -> Vec<[f64; 2]> {
        self.observables.iter().map(|o| o.psi).collect()
    }
}

/// Precomputed, immutable integrator for one model; shareable across threads.
#[derive(Debug)]
pub struct Stepper {
    config: ModelConfig,
    noise: NoiseSpec,
    kernel: Nonlinearity,
    lambda: Vec<f64>,
    decay: Vec<f64>,
    noise_sd: Vec<f64>,
    sub_decay: Vec<f64>,
    sub_sd: Vec<f64>,
}

impl Stepper {
    pub fn new(config: ModelConfig, noise: &NoiseSpec) -> Result<Self> {
        if !(config.dt > 0.0) || !config.dt.is_finite() {
            return Err(Error::arg(format!("dt must be positive, got {}", config.dt)));
        }
        if config.cutoff == 0 {
            return Err(Error::arg("cutoff must be at least 1"));
        }
        if config.substeps == 0 {
            return Err(Error::arg("substeps must be at least 1"));
        }
        let noise = match config.kind {
            EquationKind::Deterministic => NoiseSpec::zero(config.cutoff),
            _ => noise.with_cutoff(config.cutoff),
        };
        let kernel = Nonlinearity::new(config.cutoff, config.backend);
        let lattice = kernel.lattice();
        let lambda: Vec<f64> = lattice
            .modes()
            .iter()
            .map(|&k| config.convention.lambda(k))
            .collect();
        let h = config.dt / config.substeps as f64;
        let mut decay = Vec::with_capacity(lambda.len());
        let mut noise_sd = Vec::with_capacity(lambda.len());
        let mut sub_decay = Vec::with_capacity(lambda.len());
        let mut sub_sd = Vec::with_capacity(lambda.len());
        for (&l, &q) in lambda.iter().zip(noise.table()) {
            let (d, s) = ou_factors(l, q, config.dt);
            decay.push(d);
            noise_sd.push(s);
            let (d, s) = ou_factors(l, q, h);
            sub_decay.push(d);
            sub_sd.push(s);
        }
        Ok(Self {
            config,
            noise,
            kernel,
            lambda,
            decay,
            noise_sd,
            sub_decay,
            sub_sd,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn kernel(&self) -> &Nonlinearity {
        &self.kernel
    }

    pub fn lattice(&self) -> &Lattice {
        self.kernel.lattice()
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn cutoff(&self) -> usize {
        self.config.cutoff
    }

    /// `λ_k` per stored mode under the configured convention.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    /// `e^{-λ_k dt}` per stored mode.
    pub fn decay_factors(&self) -> &[f64] {
        &self.decay
    }

    pub fn time(&self, state: &SolverState) -> f64 {
        state.step as f64 * self.config.dt
    }

    pub fn initial_state(&self, field: SpectralField, rng: RngState) -> Result<SolverState> {
        if field.cutoff() != self.cutoff() {
            return Err(Error::Dimension {
                expected: self.cutoff(),
                found: field.cutoff(),
            });
        }
        Ok(SolverState::new(field, rng))
    }

    /// Deterministic right-hand side without the Laplacian.
    pub fn drift(&self, w: &SpectralField) -> Result<SpectralField> {
        let mut out = vec![Complex64::new(0.0, 0.0); w.coeffs().len()];
        if w.cutoff() != self.cutoff() {
            return Err(Error::Dimension {
                expected: self.cutoff(),
                found: w.cutoff(),
            });
        }
        self.drift_into(w, &mut out);
        SpectralField::from_coeffs(self.cutoff(), out)
    }

    fn drift_into(&self, w: &SpectralField, out: &mut [Complex64]) {
        if !self.config.nonlinear {
            out.fill(Complex64::new(0.0, 0.0));
            return;
        }
        self.kernel.quadratic_b0_into(w, out);
        if self.config.kind == EquationKind::Eulerian {
            for o in out.iter_mut() {
                *o = -*o;
            }
        } else {
            // B1(w, w)_k = 2πi (v·k) ŵ_k with v = K(w)(0)
            let v = velocity_at_origin(w);
            for ((o, k), c) in out.iter_mut().zip(self.lattice().modes()).zip(w.coeffs()) {
                let s = TAU * (v[0] * k.k1 as f64 + v[1] * k.k2 as f64);
                *o = Complex64::new(-o.re - s * c.im, -o.im + s * c.re);
            }
        }
    }

    /// Noise contribution of one step for stored mode `j`, using draws
    /// `first..first + substeps`.
    #[inline]
    fn noise_term(&self, rng: &RngState, j: usize, first: u64) -> Complex64 {
        let m = self.config.substeps as u64;
        if m == 1 {
            return rng.complex_normal(j as u32, first) * self.noise_sd[j];
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for d in 0..m {
            acc = acc * self.sub_decay[j] + rng.complex_normal(j as u32, first + d);
        }
        acc * self.sub_sd[j]
    }

    /// Advances `state` by one step. On blow-up the state is left unchanged.
    pub fn step(&self, state: &mut SolverState) -> Result<()> {
        let dt = self.config.dt;
        let mut next = vec![Complex64::new(0.0, 0.0); state.field.coeffs().len()];
        self.drift_into(&state.field, &mut next);
        let stochastic = !self.noise.is_zero();
        let first = state.rng.counter;
        let mut worst = (0.0f64, 0usize);
        for (j, (n, c)) in next.iter_mut().zip(state.field.coeffs()).enumerate() {
            let mut v = (c + *n * dt) * self.decay[j];
            if stochastic {
                v += self.noise_term(&state.rng, j, first);
            }
            *n = v;
            let a = v.norm_sqr();
            if !(a <= worst.0) {
                worst = (a, j);
            }
        }
        if !(worst.0 <= BLOW_UP_THRESHOLD * BLOW_UP_THRESHOLD) {
            let k = self.lattice().modes()[worst.1];
            return Err(Error::BlowUp {
                t: (state.step + 1) as f64 * dt,
                max_abs: worst.0.sqrt(),
                k1: k.k1,
                k2: k.k2,
                partial: None,
            });
        }
        if stochastic {
            state.rng.advance(self.config.substeps as u64);
        }
        state.field = SpectralField::from_coeffs(self.cutoff(), next)?;
        state.step += 1;
        Ok(())
    }

    pub fn observe(&self, state: &SolverState) -> Observables {
        self.observe_field(self.time(state), &state.field)
    }

    pub fn observe_field(&self, t: f64, w: &SpectralField) -> Observables {
        Observables::of(t, w, self.config.convention)
    }

    /// Number of steps covering `horizon`; errors unless it is a multiple of `dt`.
    pub fn steps_for(&self, horizon: f64) -> Result<u64> {
        steps_for(horizon, self.config.dt)
    }
}

pub fn steps_for(horizon: f64, dt: f64) -> Result<u64> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::arg(format!("horizon must be >= 0, got {horizon}")));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::arg(format!(
            "horizon {horizon} is not a multiple of dt {dt}"
        )));
    }
    Ok(n as u64)
}

/// Runs `steps` steps, calling `visit` after each one.
pub fn run_steps(
    stepper: &Stepper,
    state: &mut SolverState,
    steps: u64,
    mut visit: impl FnMut(&SolverState),
) -> Result<()> {
    for _ in 0..steps {
        stepper.step(state)?;
        visit(state);
    }
    Ok(())
}

/// Integrates over `horizon`, recording observables (and optionally fields)
/// at the requested cadence. A blow-up returns the partial record inside the
/// error.
pub fn simulate(
    stepper: &Stepper,
    state: &mut SolverState,
    horizon: f64,
    rec: Recording,
) -> Result<PathRecord> {
    let steps = stepper.steps_for(horizon)?;
    let cadence = rec.cadence.max(1);
    let mut record = PathRecord {
        times: Vec::new(),
        observables: Vec::new(),
        snapshots: Vec::new(),
        final_field: state.field.clone(),
        rng_start: state.rng,
        rng_end: state.rng,
        dt: stepper.dt(),
    };
    let push = |record: &mut PathRecord, state: &SolverState| {
        let obs = stepper.observe(state);
        record.times.push(obs.t);
        record.observables.push(obs);
        if rec.snapshots {
            record.snapshots.push(state.field.clone());
        }
    };
    push(&mut record, state);
    for i in 1..=steps {
        if let Err(e) = stepper.step(state) {
            record.final_field = state.field.clone();
            record.rng_end = state.rng;
            return Err(match e {
                Error::BlowUp {
                    t, max_abs, k1, k2, ..
                } => Error::BlowUp {
                    t,
                    max_abs,
                    k1,
                    k2,
                    partial: Some(Box::new(record)),
                },
                other => other,
            });
        }
        if i % cadence == 0 || i == steps {
            push(&mut record, state);
        }
    }
    record.final_field = state.field.clone();
    record.rng_end = state.rng;
    Ok(record)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// Largest `|y(t)| / (e^{-λ_min t} |w0|)` seen.
    pub worst_ratio: f64,
    pub worst_t: f64,
    pub monotone: bool,
}

/// Runs the deterministic flow `dy/dt = Δy - B0(y) + B1(y)` and checks
/// `|y(t)| ≤ e^{-λ_min t}|w0|(1 + 1e-10)` at every step.
pub fn deterministic_decay_check(w0: &SpectralField, horizon: f64, dt: f64) -> Result<DecayReport> {
    let config = ModelConfig::new(EquationKind::Deterministic, w0.cutoff(), dt);
    deterministic_decay_check_with(config, w0, horizon)
}

pub fn deterministic_decay_check_with(
    config: ModelConfig,
    w0: &SpectralField,
    horizon: f64,
) -> Result<DecayReport> {
    let mut config = config;
    config.kind = EquationKind::Deterministic;
    let stepper = Stepper::new(config, &NoiseSpec::zero(w0.cutoff()))?;
    let lambda_min = stepper
        .eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut state = stepper.initial_state(w0.clone(), RngState::new(0, 0))?;
    let n0 = w0.norm();
    let steps = stepper.steps_for(horizon)?;
    let mut report = DecayReport {
        times: vec![0.0],
        norms: vec![n0],
        worst_ratio: if n0 > 0.0 { 1.0 } else { 0.0 },
        worst_t: 0.0,
        monotone: true,
    };
    for _ in 0..steps {
        stepper.step(&mut state)?;
        let t = stepper.time(&state);
        let n = state.field.norm();
        if n > *report.norms.last().unwrap() {
            report.monotone = false;
        }
        if n0 > 0.0 {
            let ratio = n / ((-lambda_min * t).exp() * n0);
            if ratio > report.worst_ratio {
                report.worst_ratio = ratio;
                report.worst_t = t;
            }
        }
        report.times.push(t);
        report.norms.push(n);
    }
    if report.worst_ratio > 1.0 + 1e-10 {
        return Err(Error::Invariant {
            what: "deterministic decay |y(t)| <= exp(-lambda_min t)|w0|".into(),
            worst_t: report.worst_t,
            value: report.worst_ratio,
        });
    }
    Ok(report)
}
