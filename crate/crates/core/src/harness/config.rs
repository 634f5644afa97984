//! Run configuration: a sectioned TOML file, validated before anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{EquationKind, ModelConfig};
use crate::error::{Error, Result};
use crate::noise::{NoiseForm, NoiseSpec};
use crate::spectral::{Backend, EigenConvention, SpectralField, Wavevector};

/// Overrides the output directory.
pub const ENV_OUT: &str = "VORTRACE_OUT";
/// Overrides the worker thread count.
pub const ENV_THREADS: &str = "VORTRACE_THREADS";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub noise: NoiseSection,
    pub initial: InitialSection,
    pub tracer: TracerSection,
    pub ensemble: EnsembleSection,
    pub stationary: StationarySection,
    pub corrector: CorrectorSection,
    pub coupling: CouplingSection,
    pub monitors: MonitorSection,
    pub run: RunSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: EquationKind,
    pub cutoff: usize,
    pub dt: f64,
    pub horizon: f64,
    pub nonlinear: bool,
    pub convention: EigenConvention,
    pub backend: Backend,
    pub substeps: u32,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: EquationKind::Lagrangian,
            cutoff: 4,
            dt: 1e-3,
            horizon: 1.0,
            nonlinear: true,
            convention: EigenConvention::TwoPi,
            backend: Backend::Direct,
            substeps: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeOverride {
    pub k: [i32; 2],
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// `q_k = amplitude · |k|^{-exponent}` before overrides.
    pub amplitude: f64,
    pub exponent: f64,
    pub overrides: Vec<ModeOverride>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let f = NoiseForm::default();
        Self {
            amplitude: f.amplitude,
            exponent: f.exponent,
            overrides: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Zero,
    /// `amplitude · 2cos(2π k·x)`
    Cosine,
    /// `amplitude · 2sin(2π k·x)`
    Sine,
    Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub k: [i32; 2],
    pub amplitude: f64,
    pub path: Option<PathBuf>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Zero,
            k: [1, 0],
            amplitude: 1.0,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TracerSection {
    pub enabled: bool,
    pub x0: [f64; 2],
}

impl Default for TracerSection {
    fn default() -> Self {
        Self {
            enabled: true,
            x0: [0.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub paths: usize,
    /// Pair every path with its mirror image (reflected noise and data).
    pub antithetic: bool,
    /// Use this drift instead of the estimate when centring.
    pub known_drift: Option<[f64; 2]>,
    pub bootstrap: usize,
    pub alpha: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            paths: 64,
            antithetic: false,
            known_drift: None,
            bootstrap: 1000,
            alpha: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarySection {
    pub burn_in: f64,
    pub thinning: f64,
    /// Stationary samples for the Green–Kubo estimate; 0 skips it.
    pub samples: usize,
}

impl Default for StationarySection {
    fn default() -> Self {
        Self {
            burn_in: 50.0,
            thinning: 1.0,
            samples: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectorSection {
    pub horizon: f64,
    pub inner: usize,
    /// Evaluation points for the `corrector` subcommand; the initial field
    /// when empty.
    pub snapshots: Vec<PathBuf>,
}

impl Default for CorrectorSection {
    fn default() -> Self {
        Self {
            horizon: 0.5,
            inner: 16,
            snapshots: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    /// Low-mode radius; half the cutoff when absent.
    pub n0: Option<usize>,
    /// Perturbation `ξ`, normalized to unit norm.
    pub perturbation: [i32; 2],
    pub samples: usize,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            n0: None,
            perturbation: [1, 0],
            samples: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    pub nu: f64,
    pub burn_in: f64,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            nu: 0.05,
            burn_in: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Steps between recorded samples.
    pub cadence: u64,
    pub output: PathBuf,
    /// 0 means the available parallelism.
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            cadence: 10,
            output: PathBuf::from("vortrace-out"),
            threads: 0,
        }
    }
}

fn check(ok: bool, path: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, message))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("byte {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<file>".into());
            Error::config(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { path: p, message } => Error::Config {
                path: format!("{}: {p}", path.display()),
                message,
            },
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies the environment overrides (output directory, thread count).
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(out) = get(ENV_OUT) {
            self.run.output = PathBuf::from(out);
        }
        if let Some(t) = get(ENV_THREADS) {
            self.run.threads = t
                .trim()
                .parse()
                .map_err(|_| Error::config(ENV_THREADS, format!("not a thread count: {t:?}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        check(m.cutoff >= 1, "model.cutoff", "must be at least 1")?;
        check(m.cutoff <= 64, "model.cutoff", "must be at most 64")?;
        check(m.dt > 0.0 && m.dt.is_finite(), "model.dt", "must be positive")?;
        check(m.horizon >= 0.0 && m.horizon.is_finite(), "model.horizon", "must be >= 0")?;
        check(
            crate::dynamics::steps_for(m.horizon, m.dt).is_ok(),
            "model.horizon",
            "must be a multiple of model.dt",
        )?;
        check(m.substeps >= 1, "model.substeps", "must be at least 1")?;
        let n = self.noise.clone();
        check(n.amplitude.is_finite(), "noise.amplitude", "must be finite")?;
        check(n.exponent.is_finite(), "noise.exponent", "must be finite")?;
        for (i, o) in n.overrides.iter().enumerate() {
            let path = format!("noise.overrides[{i}]");
            let k = Wavevector::new(o.k[0], o.k[1]);
            check(k.is_some(), &format!("{path}.k"), "k = (0, 0) is not a mode")?;
            check(
                k.unwrap().linf() <= m.cutoff,
                &format!("{path}.k"),
                "outside the model cutoff",
            )?;
            check(o.q.is_finite(), &format!("{path}.q"), "must be finite")?;
        }
        let i = &self.initial;
        match i.kind {
            InitialKind::Zero => {}
            InitialKind::Cosine | InitialKind::Sine => {
                let k = Wavevector::new(i.k[0], i.k[1]);
                check(k.is_some(), "initial.k", "k = (0, 0) is not a mode")?;
                check(k.unwrap().linf() <= m.cutoff, "initial.k", "outside the model cutoff")?;
                check(i.amplitude.is_finite(), "initial.amplitude", "must be finite")?;
            }
            InitialKind::Snapshot => {
                check(i.path.is_some(), "initial.path", "required for a snapshot start")?;
            }
        }
        check(
            self.tracer.x0.iter().all(|v| v.is_finite()),
            "tracer.x0",
            "must be finite",
        )?;
        let e = &self.ensemble;
        check(e.paths >= 2, "ensemble.paths", "must be at least 2")?;
        check(
            !e.antithetic || e.paths % 2 == 0,
            "ensemble.paths",
            "must be even for antithetic pairs",
        )?;
        check(
            e.alpha > 0.0 && e.alpha < 1.0,
            "ensemble.alpha",
            "must lie in (0, 1)",
        )?;
        let s = &self.stationary;
        check(s.burn_in >= 0.0, "stationary.burn_in", "must be >= 0")?;
        check(
            crate::dynamics::steps_for(s.burn_in, m.dt).is_ok(),
            "stationary.burn_in",
            "must be a multiple of model.dt",
        )?;
        check(
            s.thinning > 0.0 && crate::dynamics::steps_for(s.thinning, m.dt).is_ok(),
            "stationary.thinning",
            "must be a positive multiple of model.dt",
        )?;
        let c = &self.corrector;
        check(
            c.horizon >= 0.0 && crate::dynamics::steps_for(c.horizon, m.dt).is_ok(),
            "corrector.horizon",
            "must be a non-negative multiple of model.dt",
        )?;
        check(c.inner >= 1, "corrector.inner", "must be at least 1")?;
        let cp = &self.coupling;
        if let Some(n0) = cp.n0 {
            check(n0 <= m.cutoff, "coupling.n0", "must not exceed model.cutoff")?;
        }
        let k = Wavevector::new(cp.perturbation[0], cp.perturbation[1]);
        check(k.is_some(), "coupling.perturbation", "k = (0, 0) is not a mode")?;
        check(
            k.unwrap().linf() <= m.cutoff,
            "coupling.perturbation",
            "outside the model cutoff",
        )?;
        check(cp.samples >= 1, "coupling.samples", "must be at least 1")?;
        check(self.monitors.nu >= 0.0, "monitors.nu", "must be >= 0")?;
        check(self.run.cadence >= 1, "run.cadence", "must be at least 1")?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            kind: m.kind,
            cutoff: m.cutoff,
            dt: m.dt,
            nonlinear: m.nonlinear,
            convention: m.convention,
            backend: m.backend,
            substeps: m.substeps,
        }
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let mut spec = NoiseSpec::parametric(
            self.model.cutoff,
            NoiseForm {
                amplitude: self.noise.amplitude,
                exponent: self.noise.exponent,
            },
        );
        for o in &self.noise.overrides {
            let k = Wavevector::new(o.k[0], o.k[1])
                .ok_or_else(|| Error::config("noise.overrides", "k = (0, 0)"))?;
            spec = spec.with_override(k, o.q)?;
        }
        Ok(spec)
    }

    /// Initial field for analytic starts; `None` for a snapshot start.
    pub fn analytic_initial(&self) -> Option<SpectralField> {
        let n = self.model.cutoff;
        let i = &self.initial;
        let k = Wavevector::new(i.k[0], i.k[1]);
        match i.kind {
            InitialKind::Zero => Some(SpectralField::zeros(n)),
            InitialKind::Cosine => k.and_then(|k| SpectralField::cosine(n, k, i.amplitude).ok()),
            InitialKind::Sine => k.and_then(|k| SpectralField::sine(n, k, i.amplitude).ok()),
            InitialKind::Snapshot => None,
        }
    }

    pub fn n0(&self) -> usize {
        self.coupling.n0.unwrap_or(self.model.cutoff / 2).max(1)
    }
}
