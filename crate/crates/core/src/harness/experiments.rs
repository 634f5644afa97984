//! Subcommand drivers. Each one builds the model from a validated
//! [`RunConfig`], schedules module calls, and serializes their results.

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::output::{observables_table, CsvTable, OutputDir};
use super::snapshot::Snapshot;
use crate::dynamics::{simulate as simulate_path, EquationKind, Recording, SolverState, Stepper};
use crate::error::{Error, Result};
use crate::linearization::{Coupling, CouplingRecord};
use crate::noise::RngState;
use crate::spectral::{velocity_at_origin, SpectralField, Wavevector};
use crate::statistics::{
    asymptotic_variance_from_displacements, clt_diagnostics, corrector, green_kubo_d,
    moment_monitors, standardize, stationary_samples, stokes_drift_from_displacements,
    BootstrapSettings, CltSettings, CorrectorEstimate, CorrectorSettings, EnsembleSummary,
    MomentReport, MonitorSettings,
};
use crate::tracer::{
    advance_tracer, eulerian_to_lagrangian_with, lagrangian_to_trajectory, simulate_with_tracer,
    wrap, DisplacementIntegrator,
};
use crate::Vec2;

/// Stream layout: ensemble paths from 0, coupling samples, the stationary
/// sampling run, then nested correctors, so no two roles share a stream.
pub const PATH_STREAMS: u32 = 0;
pub const COUPLING_STREAMS: u32 = 1 << 29;
pub const STATIONARY_STREAM: u32 = 1 << 30;
pub const CORRECTOR_STREAMS: u32 = 1 << 31;

/// Sets the global worker count (0 = available parallelism). Affects
/// scheduling only.
pub fn configure_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
}

pub fn build_stepper(cfg: &RunConfig, kind: EquationKind) -> Result<Stepper> {
    let mut model = cfg.model_config();
    model.kind = kind;
    Stepper::new(model, &cfg.noise_spec()?)
}

/// Initial field: analytic, or the field of a snapshot file.
pub fn initial_field(cfg: &RunConfig) -> Result<SpectralField> {
    if let Some(w) = cfg.analytic_initial() {
        return Ok(w);
    }
    let path = cfg
        .initial
        .path
        .as_ref()
        .ok_or_else(|| Error::config("initial.path", "required for a snapshot start"))?;
    let snap = Snapshot::load(path)?;
    if snap.field.cutoff() != cfg.model.cutoff {
        return Err(Error::config(
            "initial.path",
            format!(
                "snapshot cutoff {} differs from model.cutoff {}",
                snap.field.cutoff(),
                cfg.model.cutoff
            ),
        ));
    }
    Ok(snap.field)
}

fn snapshot_of(stepper: &Stepper, state: &SolverState) -> Snapshot {
    Snapshot {
        t: stepper.time(state),
        field: state.field.clone(),
        rng: state.rng,
    }
}

/// Rebuilds a solver state from a checkpoint for `stepper`.
pub fn resume_state(stepper: &Stepper, snap: &Snapshot) -> Result<SolverState> {
    let steps = stepper.steps_for(snap.t)?;
    let mut state = stepper.initial_state(snap.field.clone(), snap.rng)?;
    state.step = steps;
    Ok(state)
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateReport {
    pub start_t: f64,
    pub final_t: f64,
    pub samples: usize,
}

/// One path from the initial data (or a checkpoint) up to `model.horizon`.
pub fn simulate(cfg: &RunConfig, out: &mut OutputDir, resume: Option<&Snapshot>) -> Result<SimulateReport> {
    let stepper = build_stepper(cfg, cfg.model.kind)?;
    let mut state = match resume {
        Some(s) => resume_state(&stepper, s)?,
        None => stepper.initial_state(initial_field(cfg)?, RngState::new(cfg.run.seed, PATH_STREAMS))?,
    };
    let start_t = stepper.time(&state);
    let remaining = cfg.model.horizon - start_t;
    if remaining < -1e-12 {
        return Err(Error::arg(format!(
            "checkpoint time {start_t} is past the horizon {}",
            cfg.model.horizon
        )));
    }
    out.bytes("initial.vtrc", &snapshot_of(&stepper, &state).encode())?;
    if stepper.steps_for(remaining.max(0.0))? == 0 {
        out.manifest("simulate", cfg)?;
        return Ok(SimulateReport {
            start_t,
            final_t: start_t,
            samples: 1,
        });
    }
    let rec = Recording::every(cfg.run.cadence);
    let result = simulate_path(&stepper, &mut state, remaining.max(0.0), rec);
    let record = match result {
        Ok(r) => r,
        Err(Error::BlowUp {
            t,
            max_abs,
            k1,
            k2,
            partial,
        }) => {
            if let Some(p) = &partial {
                out.csv(
                    "observables.csv",
                    &observables_table(p, cfg.model.convention, cfg.model.nonlinear),
                )?;
            }
            out.manifest("simulate", cfg)?;
            return Err(Error::BlowUp {
                t,
                max_abs,
                k1,
                k2,
                partial,
            });
        }
        Err(e) => return Err(e),
    };
    out.csv(
        "observables.csv",
        &observables_table(&record, cfg.model.convention, cfg.model.nonlinear),
    )?;
    out.bytes("final.vtrc", &snapshot_of(&stepper, &state).encode())?;
    out.manifest("simulate", cfg)?;
    Ok(SimulateReport {
        start_t,
        final_t: stepper.time(&state),
        samples: record.times.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TracerReport {
    /// Largest distance between the Heun lift and the lift rebuilt from the
    /// Lagrangian picture.
    pub round_trip_error: f64,
    pub final_lift: Vec2,
}

/// Eulerian run with a tracer, plus the round trip through the Lagrangian field.
pub fn tracer(cfg: &RunConfig, out: &mut OutputDir) -> Result<TracerReport> {
    let stepper = build_stepper(cfg, EquationKind::Eulerian)?;
    let mut state =
        stepper.initial_state(initial_field(cfg)?, RngState::new(cfg.run.seed, PATH_STREAMS))?;
    let x0 = cfg.tracer.x0;
    let (record, path) = simulate_with_tracer(
        &stepper,
        &mut state,
        x0,
        cfg.model.horizon,
        Recording::every(1).with_snapshots(),
    )?;
    let lag = eulerian_to_lagrangian_with(&record, &path, cfg.model.convention)?;
    let rebuilt = lagrangian_to_trajectory(&lag, x0)?;
    let err = path.max_deviation(&rebuilt)?;
    let mut table = CsvTable::new([
        "t",
        "x_1",
        "x_2",
        "x_1_wrapped",
        "x_2_wrapped",
        "x_1_lagrangian",
        "x_2_lagrangian",
    ]);
    let cadence = cfg.run.cadence as usize;
    let last = path.times.len() - 1;
    for i in (0..=last).filter(|i| i % cadence == 0 || *i == last) {
        let x = path.lift[i];
        let w = wrap(x);
        let y = rebuilt.lift[i];
        table.push(&[path.times[i], x[0], x[1], w[0], w[1], y[0], y[1]]);
    }
    out.csv("tracer.csv", &table)?;
    let report = TracerReport {
        round_trip_error: err,
        final_lift: path.last(),
    };
    out.json("tracer.json", &report)?;
    out.manifest("tracer", cfg)?;
    Ok(report)
}

/// How ensemble paths are seeded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnsembleLayout {
    pub paths: usize,
    pub seed: u64,
    pub stream_base: u32,
    /// Odd paths are the mirror images of the preceding even path.
    pub antithetic: bool,
}

impl EnsembleLayout {
    /// RNG and mirror flag of path `p`.
    pub fn rng(&self, p: usize) -> (RngState, bool) {
        if self.antithetic {
            let r = RngState::new(self.seed, self.stream_base + (p / 2) as u32);
            if p % 2 == 1 {
                (r.reflected(), true)
            } else {
                (r, false)
            }
        } else {
            (RngState::new(self.seed, self.stream_base + p as u32), false)
        }
    }
}

/// Displacement `x(t) - x0` of every path at each requested sample step.
/// Lagrangian runs integrate `ψ*` by the trapezoid rule; Eulerian runs
/// advect the tracer with Heun. Paths run in parallel and are returned in
/// index order.
pub fn displacement_ensemble(
    stepper: &Stepper,
    w0: &SpectralField,
    layout: EnsembleLayout,
    sample_steps: &[u64],
) -> Result<Vec<Vec<Vec2>>> {
    if sample_steps.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::arg("sample steps must be non-decreasing"));
    }
    let total = sample_steps.last().copied().unwrap_or(0);
    if layout.stream_base as u64 + layout.paths as u64 > u32::MAX as u64 + 1 {
        return Err(Error::arg("ensemble stream range exceeds 32 bits"));
    }
    (0..layout.paths)
        .into_par_iter()
        .map(|p| {
            let (rng, mirror) = layout.rng(p);
            let start = if mirror { w0.reflected() } else { w0.clone() };
            let mut state = stepper.initial_state(start, rng)?;
            let dt = stepper.dt();
            let mut samples = Vec::with_capacity(sample_steps.len());
            let mut next = 0;
            while next < sample_steps.len() && sample_steps[next] == 0 {
                samples.push([0.0, 0.0]);
                next += 1;
            }
            match stepper.config().kind {
                EquationKind::Eulerian => {
                    let mut x = [0.0, 0.0];
                    let mut before = state.field.clone();
                    for i in 1..=total {
                        stepper.step(&mut state)?;
                        x = advance_tracer(x, &before, &state.field, dt);
                        before.coeffs_mut().copy_from_slice(state.field.coeffs());
                        while next < sample_steps.len() && sample_steps[next] == i {
                            samples.push(x);
                            next += 1;
                        }
                    }
                }
                _ => {
                    let mut integ =
                        DisplacementIntegrator::new([0.0, 0.0], 0.0, velocity_at_origin(&state.field));
                    for i in 1..=total {
                        stepper.step(&mut state)?;
                        integ.push(i as f64 * dt, velocity_at_origin(&state.field));
                        while next < sample_steps.len() && sample_steps[next] == i {
                            samples.push(integ.position());
                            next += 1;
                        }
                    }
                }
            }
            Ok(samples)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleReport {
    pub summary: EnsembleSummary,
    /// Ensemble RMS of `|x(t)/t|` at `T/2` and `T`.
    pub rms_half: f64,
    pub rms_full: f64,
}

fn rms_velocity(disp: &[Vec2], t: f64) -> f64 {
    let s: f64 = disp
        .iter()
        .map(|d| (d[0] * d[0] + d[1] * d[1]) / (t * t))
        .sum();
    (s / disp.len() as f64).sqrt()
}

/// Law of large numbers, direct covariance, CLT and (optionally) the
/// Green–Kubo covariance for one configuration.
pub fn ensemble(cfg: &RunConfig, out: &mut OutputDir) -> Result<EnsembleReport> {
    let stepper = build_stepper(cfg, cfg.model.kind)?;
    let w0 = initial_field(cfg)?;
    let steps = stepper.steps_for(cfg.model.horizon)?;
    if steps < 2 {
        return Err(Error::config("model.horizon", "an ensemble needs at least two steps"));
    }
    let half = steps / 2;
    let layout = EnsembleLayout {
        paths: cfg.ensemble.paths,
        seed: cfg.run.seed,
        stream_base: PATH_STREAMS,
        antithetic: cfg.ensemble.antithetic,
    };
    let disp = displacement_ensemble(&stepper, &w0, layout, &[half, steps])?;
    let t_half = half as f64 * stepper.dt();
    let t = steps as f64 * stepper.dt();
    let at_half: Vec<Vec2> = disp.iter().map(|d| d[0]).collect();
    let at_end: Vec<Vec2> = disp.iter().map(|d| d[1]).collect();

    let v_hat = stokes_drift_from_displacements(&at_end, t)?;
    let v = cfg.ensemble.known_drift.unwrap_or(v_hat.value);
    let boot = BootstrapSettings {
        resamples: cfg.ensemble.bootstrap,
        seed: cfg.run.seed,
        ..BootstrapSettings::default()
    };
    let d_direct = asymptotic_variance_from_displacements(&at_end, cfg.ensemble.known_drift, t, boot)?;
    let z = standardize(&at_end, v, t);
    let clt = clt_diagnostics(
        &z,
        &d_direct.value,
        CltSettings {
            alpha: cfg.ensemble.alpha,
            ..CltSettings::default()
        },
    )?;
    let d_green_kubo = if cfg.stationary.samples > 0 && cfg.model.kind == EquationKind::Lagrangian {
        let st = stepper.initial_state(w0.clone(), RngState::new(cfg.run.seed, STATIONARY_STREAM))?;
        let samples = stationary_samples(
            &stepper,
            st,
            cfg.stationary.burn_in,
            cfg.stationary.thinning,
            cfg.stationary.samples,
        )?;
        let settings = CorrectorSettings {
            horizon: cfg.corrector.horizon,
            inner: cfg.corrector.inner,
            seed: cfg.run.seed,
            stream_base: CORRECTOR_STREAMS,
        };
        let v_se = if cfg.ensemble.known_drift.is_some() {
            [0.0, 0.0]
        } else {
            v_hat.se
        };
        Some(green_kubo_d(&stepper, &samples.fields, &settings, v, v_se)?)
    } else {
        None
    };

    let mut table = CsvTable::new(["path", "t_half", "x_1_half", "x_2_half", "t", "x_1", "x_2"]);
    for (p, d) in disp.iter().enumerate() {
        table.push(&[p as f64, t_half, d[0][0], d[0][1], t, d[1][0], d[1][1]]);
    }
    out.csv("displacements.csv", &table)?;
    let report = EnsembleReport {
        summary: EnsembleSummary {
            paths: layout.paths,
            horizon: t,
            v_hat,
            d_direct,
            d_green_kubo,
            clt: Some(clt),
            monitors: None,
        },
        rms_half: rms_velocity(&at_half, t_half),
        rms_full: rms_velocity(&at_end, t),
    };
    out.json("summary.json", &report)?;
    out.manifest("ensemble", cfg)?;
    Ok(report)
}

/// `χ̂` at the configured snapshots (or the initial field).
pub fn corrector_cmd(cfg: &RunConfig, out: &mut OutputDir) -> Result<Vec<CorrectorEstimate>> {
    let stepper = build_stepper(cfg, EquationKind::Lagrangian)?;
    let points: Vec<SpectralField> = if cfg.corrector.snapshots.is_empty() {
        vec![initial_field(cfg)?]
    } else {
        cfg.corrector
            .snapshots
            .iter()
            .map(|p| Snapshot::load(p).map(|s| s.field))
            .collect::<Result<_>>()?
    };
    let v = cfg.ensemble.known_drift.unwrap_or([0.0, 0.0]);
    let mut table = CsvTable::new(["point", "chi_1", "chi_2", "se_1", "se_2", "tail"]);
    let mut all = Vec::new();
    for (i, w) in points.iter().enumerate() {
        if w.cutoff() != cfg.model.cutoff {
            return Err(Error::config(
                format!("corrector.snapshots[{i}]"),
                "cutoff differs from model.cutoff",
            ));
        }
        let settings = CorrectorSettings {
            horizon: cfg.corrector.horizon,
            inner: cfg.corrector.inner,
            seed: cfg.run.seed,
            stream_base: CORRECTOR_STREAMS + (i * cfg.corrector.inner) as u32,
        };
        let c = corrector(&stepper, w, &settings, v)?;
        table.push(&[i as f64, c.value[0], c.value[1], c.se[0], c.se[1], c.tail]);
        all.push(c);
    }
    out.csv("corrector.csv", &table)?;
    out.json("corrector.json", &all)?;
    out.manifest("corrector", cfg)?;
    Ok(all)
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingReport {
    pub samples: usize,
    pub n0: usize,
    /// `max_t |ξ - D - ζ| / max_t (|ξ| + |ζ|)`, worst over samples.
    pub relative_residual: f64,
    /// Latest time at which any sample still had `ζ_< ≠ 0`, plus one step.
    pub extinction_time: Option<f64>,
    pub times: Vec<f64>,
    /// Ensemble means over samples.
    pub mean_zeta_sq: Vec<f64>,
    pub mean_g_energy: Vec<f64>,
}

/// Unit-norm perturbation `2cos(2π k·x)/√2`.
pub fn unit_perturbation(n: usize, k: [i32; 2]) -> Result<SpectralField> {
    let k = Wavevector::new(k[0], k[1]).ok_or_else(|| Error::arg("k = (0, 0)"))?;
    SpectralField::cosine(n, k, std::f64::consts::FRAC_1_SQRT_2)
}

/// Runs the coupled system for each sample path.
pub fn coupling_runs(
    stepper_cfg: &RunConfig,
    n0: usize,
    xi0: &SpectralField,
    w0: &SpectralField,
    samples: usize,
    cadence: u64,
) -> Result<Vec<CouplingRecord>> {
    (0..samples)
        .into_par_iter()
        .map(|s| {
            let stepper = build_stepper(stepper_cfg, EquationKind::Lagrangian)?;
            let c = Coupling::new(stepper, n0)?;
            let base = c.stepper().initial_state(
                w0.clone(),
                RngState::new(stepper_cfg.run.seed, COUPLING_STREAMS + s as u32),
            )?;
            let mut cs = c.init(base, xi0)?;
            c.run(&mut cs, stepper_cfg.model.horizon, cadence)
        })
        .collect()
}

pub fn coupling(cfg: &RunConfig, out: &mut OutputDir) -> Result<CouplingReport> {
    let n0 = cfg.n0();
    let xi0 = unit_perturbation(cfg.model.cutoff, cfg.coupling.perturbation)?;
    let w0 = initial_field(cfg)?;
    let recs = coupling_runs(cfg, n0, &xi0, &w0, cfg.coupling.samples, cfg.run.cadence)?;
    let times = recs[0].times.clone();
    let m = recs.len() as f64;
    let mean_of = |f: &dyn Fn(&CouplingRecord, usize) -> f64| -> Vec<f64> {
        (0..times.len())
            .map(|i| recs.iter().map(|r| f(r, i)).sum::<f64>() / m)
            .collect()
    };
    let mean_zeta_sq = mean_of(&|r, i| r.zeta_norm[i] * r.zeta_norm[i]);
    let mean_g_energy = mean_of(&|r, i| r.g_energy[i]);
    let relative_residual = recs
        .iter()
        .map(|r| r.max_residual() / r.solution_scale().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let extinction_time = recs
        .iter()
        .map(|r| r.low_mode_extinction())
        .try_fold(0.0f64, |acc, t| t.map(|t| acc.max(t)));
    let mut table = CsvTable::new([
        "t",
        "mean_zeta_sq",
        "mean_g_energy",
        "residual_0",
        "zeta_low_0",
    ]);
    for i in 0..times.len() {
        table.push(&[
            times[i],
            mean_zeta_sq[i],
            mean_g_energy[i],
            recs[0].residual[i],
            recs[0].zeta_low_norm[i],
        ]);
    }
    out.csv("coupling.csv", &table)?;
    let report = CouplingReport {
        samples: recs.len(),
        n0,
        relative_residual,
        extinction_time,
        times,
        mean_zeta_sq,
        mean_g_energy,
    };
    out.json("coupling.json", &report)?;
    out.manifest("coupling", cfg)?;
    Ok(report)
}

/// Moment monitors and energy balance along one path.
pub fn diagnose(cfg: &RunConfig, out: &mut OutputDir) -> Result<MomentReport> {
    let stepper = build_stepper(cfg, cfg.model.kind)?;
    let mut state =
        stepper.initial_state(initial_field(cfg)?, RngState::new(cfg.run.seed, PATH_STREAMS))?;
    let record = simulate_path(
        &stepper,
        &mut state,
        cfg.model.horizon,
        Recording::every(cfg.run.cadence),
    )?;
    let report = moment_monitors(
        &record,
        stepper.noise(),
        MonitorSettings {
            burn_in: cfg.monitors.burn_in,
            nu: cfg.monitors.nu,
        },
    )?;
    out.csv(
        "observables.csv",
        &observables_table(&record, cfg.model.convention, cfg.model.nonlinear),
    )?;
    out.json("monitors.json", &report)?;
    out.manifest("diagnose", cfg)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::InitialKind;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.model.cutoff = 3;
        cfg.model.horizon = 0.2;
        cfg.initial.kind = InitialKind::Cosine;
        cfg.initial.k = [1, 1];
        cfg.initial.amplitude = 0.5;
        cfg.ensemble.paths = 8;
        cfg.ensemble.bootstrap = 50;
        cfg.run.cadence = 20;
        cfg
    }

    fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn outputs_do_not_depend_on_the_thread_count() {
        let cfg = small();
        let run = |threads: usize| {
            let dir = tempfile::tempdir().unwrap();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut out = OutputDir::create(dir.path()).unwrap();
                ensemble(&cfg, &mut out).unwrap();
            });
            files(dir.path())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn zero_horizon_writes_manifest_and_initial_snapshot() {
        let mut cfg = small();
        cfg.model.horizon = 0.0;
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        simulate(&cfg, &mut out, None).unwrap();
        let names: Vec<_> = files(dir.path()).into_iter().map(|f| f.0).collect();
        assert_eq!(names, ["initial.vtrc", "manifest.json"]);
        let snap = Snapshot::load(&dir.path().join("initial.vtrc")).unwrap();
        assert_eq!(snap.field, initial_field(&cfg).unwrap());
    }

    #[test]
    fn resume_continues_bit_exactly() {
        let cfg = small();
        let full = tempfile::tempdir().unwrap();
        simulate(&cfg, &mut OutputDir::create(full.path()).unwrap(), None).unwrap();
        let mut half = small();
        half.model.horizon = 0.1;
        let first = tempfile::tempdir().unwrap();
        simulate(&half, &mut OutputDir::create(first.path()).unwrap(), None).unwrap();
        let snap = Snapshot::load(&first.path().join("final.vtrc")).unwrap();
        let second = tempfile::tempdir().unwrap();
        simulate(&cfg, &mut OutputDir::create(second.path()).unwrap(), Some(&snap)).unwrap();
        assert_eq!(
            std::fs::read(full.path().join("final.vtrc")).unwrap(),
            std::fs::read(second.path().join("final.vtrc")).unwrap()
        );
    }

    #[test]
    fn blow_up_leaves_partial_outputs() {
        let mut cfg = small();
        cfg.model.kind = EquationKind::Eulerian;
        cfg.model.convention = crate::EigenConvention::Unit;
        cfg.model.dt = 0.05;
        cfg.model.horizon = 50.0;
        cfg.initial.amplitude = 50.0;
        cfg.initial.kind = InitialKind::Sine;
        cfg.noise.amplitude = 10.0;
        cfg.run.cadence = 1;
        let dir = tempfile::tempdir().unwrap();
        let err = simulate(&cfg, &mut OutputDir::create(dir.path()).unwrap(), None).unwrap_err();
        let Error::BlowUp { partial, .. } = err else {
            panic!("expected a blow-up, got {err}");
        };
        let rows = partial.unwrap().times.len();
        let csv = std::fs::read_to_string(dir.path().join("observables.csv")).unwrap();
        assert_eq!(csv.lines().count(), rows + 1);
        assert!(dir.path().join("manifest.json").exists());
        assert!(!dir.path().join("final.vtrc").exists());
    }

    #[test]
    fn mirrored_streams_negate_the_drift_exactly() {
        let cfg = small();
        let stepper = build_stepper(&cfg, EquationKind::Lagrangian).unwrap();
        let w0 = initial_field(&cfg).unwrap();
        let layout = EnsembleLayout {
            paths: 8,
            seed: 11,
            stream_base: 0,
            antithetic: true,
        };
        let d = displacement_ensemble(&stepper, &w0, layout, &[200]).unwrap();
        for pair in d.chunks(2) {
            assert_eq!(pair[0][0], [-pair[1][0][0], -pair[1][0][1]]);
        }
        let end: Vec<Vec2> = d.iter().map(|s| s[0]).collect();
        let v = stokes_drift_from_displacements(&end, 0.2).unwrap();
        assert_eq!(v.value.map(f64::abs), [0.0, 0.0]);
    }

    #[test]
    fn eulerian_and_lagrangian_ensembles_agree_to_discretization_error() {
        let cfg = small();
        let w0 = initial_field(&cfg).unwrap();
        let layout = EnsembleLayout {
            paths: 4,
            seed: 2,
            stream_base: 0,
            antithetic: false,
        };
        let run = |kind| {
            displacement_ensemble(&build_stepper(&cfg, kind).unwrap(), &w0, layout, &[100, 200]).unwrap()
        };
        let (e, l) = (run(EquationKind::Eulerian), run(EquationKind::Lagrangian));
        for (a, b) in e.iter().flatten().zip(l.iter().flatten()) {
            assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() < 1e-4, "{a:?} {b:?}");
        }
    }

    #[test]
    fn coupling_report_is_consistent() {
        let mut cfg = small();
        cfg.model.cutoff = 4;
        cfg.model.horizon = 0.05;
        cfg.coupling.samples = 2;
        let dir = tempfile::tempdir().unwrap();
        let r = coupling(&cfg, &mut OutputDir::create(dir.path()).unwrap()).unwrap();
        assert_eq!(r.samples, 2);
        assert!(r.relative_residual < 1e-12);
        assert_eq!(r.times.len(), r.mean_zeta_sq.len());
    }
}
