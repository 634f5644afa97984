//! Passive tracer in the Eulerian field, and the map between the
//! Eulerian-with-tracer and Lagrangian (environment) pictures.

use crate::dynamics::{EquationKind, Observables, PathRecord, Recording, SolverState, Stepper};
use crate::error::{Error, Result};
use crate::spectral::{eval_velocity, translate, velocity_at_origin, EigenConvention, SpectralField};
use crate::Vec2;

/// `ψ*(ω) = K(ω)(0)`, the tracer's velocity read off the environment.
pub fn psi_star(w: &SpectralField) -> Vec2 {
    velocity_at_origin(w)
}

/// Wraps a lift point onto the torus `[-1/2, 1/2)²`.
pub fn wrap(x: Vec2) -> Vec2 {
    [x[0] - x[0].round(), x[1] - x[1].round()]
}

/// Tracer samples on the continuous lift. Positions are never wrapped; use
/// [`TracerPath::wrapped`] for the torus companion.
#[derive(Clone, Debug, PartialEq)]
pub struct TracerPath {
    pub x0: Vec2,
    pub times: Vec<f64>,
    pub lift: Vec<Vec2>,
}

impl TracerPath {
    pub fn new(x0: Vec2, t0: f64) -> Self {
        Self {
            x0,
            times: vec![t0],
            lift: vec![x0],
        }
    }

    pub fn push(&mut self, t: f64, x: Vec2) {
        self.times.push(t);
        self.lift.push(x);
    }

    pub fn wrapped(&self) -> Vec<Vec2> {
        self.lift.iter().map(|&x| wrap(x)).collect()
    }

    pub fn last(&self) -> Vec2 {
        *self.lift.last().expect("a tracer path holds at least x0")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("a tracer path holds at least t0")
    }

    /// `x(T) - x0`.
    pub fn displacement(&self) -> Vec2 {
        let x = self.last();
        [x[0] - self.x0[0], x[1] - self.x0[1]]
    }

    /// Largest componentwise distance between two lifts sampled at the same times.
    pub fn max_deviation(&self, other: &TracerPath) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::Dimension {
                expected: self.times.len(),
                found: other.times.len(),
            });
        }
        Ok(self
            .lift
            .iter()
            .zip(&other.lift)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max))
    }
}

/// One Heun step of `dx/dt = u(t, x)` on the lift, with `u_s = K(ξ_s)`.
pub fn advance_tracer(x: Vec2, xi_t: &SpectralField, xi_next: &SpectralField, dt: f64) -> Vec2 {
    let u0 = eval_velocity(xi_t, wrap(x));
    let pred = [x[0] + dt * u0[0], x[1] + dt * u0[1]];
    let u1 = eval_velocity(xi_next, wrap(pred));
    [
        x[0] + 0.5 * dt * (u0[0] + u1[0]),
        x[1] + 0.5 * dt * (u0[1] + u1[1]),
    ]
}

/// Cumulative trapezoid `x0 + ∫ ψ ds` over a sampled series.
pub fn trajectory_from_psi(times: &[f64], psi: &[Vec2], x0: Vec2) -> Result<TracerPath> {
    if times.is_empty() || psi.len() != times.len() {
        return Err(Error::arg(format!(
            "need one psi sample per time, got {} samples for {} times",
            psi.len(),
            times.len()
        )));
    }
    let mut path = TracerPath::new(x0, times[0]);
    let mut x = x0;
    for i in 1..times.len() {
        let h = times[i] - times[i - 1];
        if !(h >= 0.0) {
            return Err(Error::arg("sample times must be non-decreasing"));
        }
        x[0] += 0.5 * h * (psi[i - 1][0] + psi[i][0]);
        x[1] += 0.5 * h * (psi[i - 1][1] + psi[i][1]);
        path.push(times[i], x);
    }
    Ok(path)
}

/// Tracer lift recovered from a Lagrangian run through its `ψ*` samples.
pub fn lagrangian_to_trajectory(record: &PathRecord, x0: Vec2) -> Result<TracerPath> {
    if record.observables.len() != record.times.len() {
        return Err(Error::arg("path record is missing psi samples"));
    }
    let psi: Vec<Vec2> = record.observables.iter().map(|o| o.psi).collect();
    trajectory_from_psi(&record.times, &psi, x0)
}

/// `ω(t) = τ_{x(t)} ξ(t)` at every sample of an Eulerian record with snapshots.
pub fn eulerian_to_lagrangian(record: &PathRecord, tracer: &TracerPath) -> Result<PathRecord> {
    eulerian_to_lagrangian_with(record, tracer, EigenConvention::TwoPi)
}

pub fn eulerian_to_lagrangian_with(
    record: &PathRecord,
    tracer: &TracerPath,
    convention: EigenConvention,
) -> Result<PathRecord> {
    if record.snapshots.len() != record.times.len() {
        return Err(Error::arg("Eulerian record has no field snapshots"));
    }
    if tracer.times.len() != record.times.len() {
        return Err(Error::arg(format!(
            "tracer has {} samples, record has {}",
            tracer.times.len(),
            record.times.len()
        )));
    }
    let tol = 1e-9 * record.dt;
    let mut out = record.clone();
    out.observables.clear();
    out.snapshots.clear();
    for ((&t, &s), (xi, &x)) in record
        .times
        .iter()
        .zip(&tracer.times)
        .zip(record.snapshots.iter().zip(&tracer.lift))
    {
        if (t - s).abs() > tol {
            return Err(Error::arg(format!(
                "snapshot time {t} does not match tracer time {s}"
            )));
        }
        let w = translate(xi, wrap(x));
        out.observables.push(Observables::of(t, &w, convention));
        out.snapshots.push(w);
    }
    out.final_field = out.snapshots.last().expect("non-empty record").clone();
    Ok(out)
}

/// Eulerian run with a tracer advected by Heun at every step. The tracer is
/// recorded at the same samples as the field.
pub fn simulate_with_tracer(
    stepper: &Stepper,
    state: &mut SolverState,
    x0: Vec2,
    horizon: f64,
    rec: Recording,
) -> Result<(PathRecord, TracerPath)> {
    if stepper.config().kind != EquationKind::Eulerian {
        return Err(Error::arg("tracer advection needs an Eulerian run"));
    }
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
    let mut tracer = TracerPath {
        x0,
        times: Vec::new(),
        lift: Vec::new(),
    };
    let push = |record: &mut PathRecord, tracer: &mut TracerPath, state: &SolverState, x| {
        let obs = stepper.observe(state);
        record.times.push(obs.t);
        record.observables.push(obs);
        if rec.snapshots {
            record.snapshots.push(state.field.clone());
        }
        tracer.push(obs.t, x);
    };
    let mut x = x0;
    push(&mut record, &mut tracer, state, x);
    for i in 1..=steps {
        let before = state.field.clone();
        stepper.step(state)?;
        x = advance_tracer(x, &before, &state.field, stepper.dt());
        if i % cadence == 0 || i == steps {
            push(&mut record, &mut tracer, state, x);
        }
    }
    record.final_field = state.field.clone();
    record.rng_end = state.rng;
    Ok((record, tracer))
}

/// Streaming `x(t) = x0 + ∫ψ*(ω(s))ds` by the trapezoid rule, one sample per call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisplacementIntegrator {
    x: Vec2,
    last_psi: Vec2,
    last_t: f64,
}

impl DisplacementIntegrator {
    pub fn new(x0: Vec2, t0: f64, psi0: Vec2) -> Self {
        Self {
            x: x0,
            last_psi: psi0,
            last_t: t0,
        }
    }

    pub fn push(&mut self, t: f64, psi: Vec2) {
        let h = t - self.last_t;
        self.x[0] += 0.5 * h * (self.last_psi[0] + psi[0]);
        self.x[1] += 0.5 * h * (self.last_psi[1] + psi[1]);
        self.last_psi = psi;
        self.last_t = t;
    }

    pub fn position(&self) -> Vec2 {
        self.x
    }
}
