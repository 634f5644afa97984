//! Estimators for the tracer's long-time behaviour: Stokes drift, asymptotic
//! covariance (direct and Green–Kubo through a Monte Carlo corrector),
//! martingale decomposition, normality diagnostics and moment monitors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::dynamics::{run_steps, EquationKind, PathRecord, SolverState, Stepper};
use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, RngState};
use crate::spectral::{velocity_at_origin, SpectralField};
use crate::tracer::TracerPath;
use crate::Vec2;

pub type Mat2 = [[f64; 2]; 2];

/// Two-sided normal quantile for 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorEstimate {
    pub value: Vec2,
    pub se: Vec2,
}

/// Symmetric 2×2 estimate with standard errors and a per-entry interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixEstimate {
    pub value: Mat2,
    pub se: Mat2,
    pub lower: Mat2,
    pub upper: Mat2,
}

impl MatrixEstimate {
    fn normal(value: Mat2, se: Mat2) -> Self {
        let mut lower = value;
        let mut upper = value;
        for i in 0..2 {
            for j in 0..2 {
                lower[i][j] -= Z95 * se[i][j];
                upper[i][j] += Z95 * se[i][j];
            }
        }
        Self {
            value,
            se,
            lower,
            upper,
        }
    }

    /// Entrywise overlap of the two intervals.
    pub fn overlaps(&self, other: &MatrixEstimate) -> bool {
        (0..2).all(|i| {
            (0..2).all(|j| self.lower[i][j] <= other.upper[i][j] && other.lower[i][j] <= self.upper[i][j])
        })
    }

    pub fn contains(&self, m: &Mat2) -> bool {
        (0..2).all(|i| (0..2).all(|j| self.lower[i][j] <= m[i][j] && m[i][j] <= self.upper[i][j]))
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Jackknife standard error of the mean (leave-one-out means).
pub fn jackknife_se(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = x.iter().sum();
    let loo: Vec<f64> = x.iter().map(|v| (total - v) / (n - 1) as f64).collect();
    let m = mean(&loo);
    let s: f64 = loo.iter().map(|v| (v - m) * (v - m)).sum();
    ((n - 1) as f64 / n as f64 * s).sqrt()
}

/// Sample autocorrelation at `lag`.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let m = mean(x);
    let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum();
    cov / var
}

/// Final displacement `x(T) - x0` of each path; every path must end at `horizon`.
pub fn displacements(paths: &[TracerPath], horizon: f64) -> Result<Vec<Vec2>> {
    if paths.is_empty() {
        return Err(Error::arg("empty ensemble"));
    }
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let t = p.final_time();
            if (t - horizon).abs() > 1e-9 * horizon.max(1.0) {
                return Err(Error::arg(format!(
                    "path {i} ends at t = {t}, expected {horizon}"
                )));
            }
            Ok(p.displacement())
        })
        .collect()
}

/// `v̂ = mean of x(T)/T` with jackknife standard errors.
pub fn stokes_drift(paths: &[TracerPath], horizon: f64) -> Result<VectorEstimate> {
    stokes_drift_from_displacements(&displacements(paths, horizon)?, horizon)
}

pub fn stokes_drift_from_displacements(disp: &[Vec2], horizon: f64) -> Result<VectorEstimate> {
    if disp.is_empty() {
        return Err(Error::arg("empty ensemble"));
    }
    if !(horizon > 0.0) {
        return Err(Error::arg("the drift needs a positive horizon"));
    }
    let mut value = [0.0; 2];
    let mut se = [0.0; 2];
    for c in 0..2 {
        let x: Vec<f64> = disp.iter().map(|d| d[c] / horizon).collect();
        value[c] = mean(&x);
        se[c] = jackknife_se(&x);
    }
    Ok(VectorEstimate { value, se })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub resamples: usize,
    pub seed: u64,
    /// Central coverage of the percentile interval.
    pub level: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            resamples: 1000,
            seed: 0x5eed,
            level: 0.95,
        }
    }
}

fn covariance_of(z: &[Vec2], idx: impl Iterator<Item = usize> + Clone, center: Option<Vec2>) -> Mat2 {
    let n = idx.clone().count() as f64;
    let (m, denom) = match center {
        Some(c) => (c, n),
        None => {
            let mut m = [0.0; 2];
            for i in idx.clone() {
                m[0] += z[i][0];
                m[1] += z[i][1];
            }
            ([m[0] / n, m[1] / n], (n - 1.0).max(1.0))
        }
    };
    let mut c = [[0.0; 2]; 2];
    for i in idx {
        let a = [z[i][0] - m[0], z[i][1] - m[1]];
        c[0][0] += a[0] * a[0];
        c[0][1] += a[0] * a[1];
        c[1][1] += a[1] * a[1];
    }
    c[0][0] /= denom;
    c[0][1] /= denom;
    c[1][1] /= denom;
    c[1][0] = c[0][1];
    c
}

/// `(x(T) - x0 - vT)/√T` for each displacement.
pub fn standardize(disp: &[Vec2], v: Vec2, horizon: f64) -> Vec<Vec2> {
    let s = horizon.sqrt();
    disp.iter()
        .map(|d| [(d[0] - v[0] * horizon) / s, (d[1] - v[1] * horizon) / s])
        .collect()
}

/// `D̂ = Cov((x(T) - vT)/√T)`. With a known drift the second moment about
/// zero is used; with `v = None` the sample covariance (re-centred at `v̂`).
/// Percentile bootstrap intervals; the reported SE is the bootstrap SD.
pub fn asymptotic_variance_direct(
    paths: &[TracerPath],
    v: Option<Vec2>,
    horizon: f64,
    boot: BootstrapSettings,
) -> Result<MatrixEstimate> {
    asymptotic_variance_from_displacements(&displacements(paths, horizon)?, v, horizon, boot)
}

pub fn asymptotic_variance_from_displacements(
    disp: &[Vec2],
    v: Option<Vec2>,
    horizon: f64,
    boot: BootstrapSettings,
) -> Result<MatrixEstimate> {
    if disp.len() < 2 {
        return Err(Error::arg("the variance needs at least two paths"));
    }
    if !(horizon > 0.0) {
        return Err(Error::arg("the variance needs a positive horizon"));
    }
    let z = standardize(disp, v.unwrap_or([0.0, 0.0]), horizon);
    let center = v.map(|_| [0.0, 0.0]);
    let n = z.len();
    let value = covariance_of(&z, 0..n, center);
    let mut rng = ChaCha8Rng::seed_from_u64(boot.seed);
    let mut draws: Vec<Mat2> = Vec::with_capacity(boot.resamples);
    let mut idx = vec![0usize; n];
    for _ in 0..boot.resamples {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n);
        }
        draws.push(covariance_of(&z, idx.iter().copied(), center));
    }
    let mut se = [[0.0; 2]; 2];
    let mut lower = value;
    let mut upper = value;
    if boot.resamples >= 2 {
        let a = (1.0 - boot.level) / 2.0;
        for i in 0..2 {
            for j in 0..2 {
                let mut s: Vec<f64> = draws.iter().map(|m| m[i][j]).collect();
                se[i][j] = sample_sd(&s);
                s.sort_by(|x, y| x.total_cmp(y));
                let lo = quantile_sorted(&s, a);
                let hi = quantile_sorted(&s, 1.0 - a);
                // keep the point estimate inside its own interval
                lower[i][j] = lo.min(value[i][j]);
                upper[i][j] = hi.max(value[i][j]);
            }
        }
    }
    Ok(MatrixEstimate {
        value,
        se,
        lower,
        upper,
    })
}

fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Nested Monte Carlo settings for `χ̂_t(w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSettings {
    pub horizon: f64,
    pub inner: usize,
    pub seed: u64,
    /// Inner run `i` at evaluation point `s` uses stream `stream_base + s·inner + i`.
    pub stream_base: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorEstimate {
    #[serde(skip)]
    pub w: Option<SpectralField>,
    pub horizon: f64,
    pub inner: usize,
    /// `χ̂_t(w) = mean over inner runs of ∫_0^t ψ̃*(ω(s)) ds`.
    pub value: Vec2,
    pub se: Vec2,
    /// `|χ̂_t - χ̂_{t/2}|`, from the same inner runs.
    pub tail: f64,
}

/// `∫_0^t (ψ*(ω(s)) - v) ds` along one Lagrangian run from `w`, by the
/// trapezoid rule on the step grid; also returns the value at `t/2`.
pub fn psi_integral(
    stepper: &Stepper,
    w: &SpectralField,
    rng: RngState,
    steps: u64,
    v: Vec2,
) -> Result<(Vec2, Vec2)> {
    let dt = stepper.dt();
    let mut state = SolverState::new(w.clone(), rng);
    let mut last = velocity_at_origin(w);
    let mut acc = [0.0; 2];
    let mut half = if steps == 0 { [0.0; 2] } else { [f64::NAN; 2] };
    let mid = steps / 2;
    let mut i = 0u64;
    run_steps(stepper, &mut state, steps, |s| {
        let p = velocity_at_origin(&s.field);
        acc[0] += 0.5 * dt * (last[0] + p[0] - 2.0 * v[0]);
        acc[1] += 0.5 * dt * (last[1] + p[1] - 2.0 * v[1]);
        last = p;
        i += 1;
        if i == mid {
            half = acc;
        }
    })?;
    Ok((acc, half))
}

fn corrector_at(
    stepper: &Stepper,
    w: &SpectralField,
    index: usize,
    settings: &CorrectorSettings,
    v: Vec2,
) -> Result<CorrectorEstimate> {
    if settings.inner == 0 {
        return Err(Error::arg("corrector needs at least one inner run"));
    }
    let steps = stepper.steps_for(settings.horizon)?;
    let first = settings.stream_base as u64 + (index as u64) * settings.inner as u64;
    if first + settings.inner as u64 > u32::MAX as u64 + 1 {
        return Err(Error::arg("corrector stream range exceeds 32 bits"));
    }
    let runs: Vec<(Vec2, Vec2)> = (0..settings.inner)
        .into_par_iter()
        .map(|i| {
            let rng = RngState::new(settings.seed, (first + i as u64) as u32);
            psi_integral(stepper, w, rng, steps, v)
        })
        .collect::<Result<_>>()?;
    let mut value = [0.0; 2];
    let mut se = [0.0; 2];
    let mut half = [0.0; 2];
    for c in 0..2 {
        let x: Vec<f64> = runs.iter().map(|r| r.0[c]).collect();
        value[c] = mean(&x);
        se[c] = sample_sd(&x) / (x.len() as f64).sqrt();
        half[c] = mean(&runs.iter().map(|r| r.1[c]).collect::<Vec<_>>());
    }
    let tail = ((value[0] - half[0]).powi(2) + (value[1] - half[1]).powi(2)).sqrt();
    Ok(CorrectorEstimate {
        w: Some(w.clone()),
        horizon: settings.horizon,
        inner: settings.inner,
        value,
        se,
        tail,
    })
}

/// `χ̂_t(w)` for the centred observable `ψ̃* = ψ* - v`, from `inner`
/// independent Lagrangian runs started at `w`.
pub fn corrector(
    stepper: &Stepper,
    w: &SpectralField,
    settings: &CorrectorSettings,
    v: Vec2,
) -> Result<CorrectorEstimate> {
    if stepper.config().kind != EquationKind::Lagrangian {
        return Err(Error::arg("the corrector is defined on the Lagrangian process"));
    }
    corrector_at(stepper, w, 0, settings, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenKubo {
    pub d: MatrixEstimate,
    pub samples: usize,
    /// Mean of `χ̂(w)` over the samples; near zero at stationarity.
    pub corrector_mean: VectorEstimate,
}

/// `D_ij = ⟨μ, ψ̃^i χ^j⟩ + ⟨μ, ψ̃^j χ^i⟩` as an average over stationary
/// samples with one nested corrector each. The SE combines the sample
/// spread with the first-order effect of the error in `v` (`v_se`).
pub fn green_kubo_d(
    stepper: &Stepper,
    samples: &[SpectralField],
    settings: &CorrectorSettings,
    v: Vec2,
    v_se: Vec2,
) -> Result<GreenKubo> {
    if samples.is_empty() {
        return Err(Error::arg("Green-Kubo needs at least one stationary sample"));
    }
    if stepper.config().kind != EquationKind::Lagrangian {
        return Err(Error::arg("the corrector is defined on the Lagrangian process"));
    }
    let chis: Vec<Vec2> = samples
        .par_iter()
        .enumerate()
        .map(|(s, w)| corrector_at(stepper, w, s, settings, v).map(|c| c.value))
        .collect::<Result<_>>()?;
    let psis: Vec<Vec2> = samples
        .iter()
        .map(|w| {
            let p = velocity_at_origin(w);
            [p[0] - v[0], p[1] - v[1]]
        })
        .collect();
    let n = samples.len() as f64;
    let mut value = [[0.0; 2]; 2];
    let mut se = [[0.0; 2]; 2];
    let mean_psi = [
        mean(&psis.iter().map(|p| p[0]).collect::<Vec<_>>()),
        mean(&psis.iter().map(|p| p[1]).collect::<Vec<_>>()),
    ];
    let chi0: Vec<f64> = chis.iter().map(|c| c[0]).collect();
    let chi1: Vec<f64> = chis.iter().map(|c| c[1]).collect();
    let mean_chi = [mean(&chi0), mean(&chi1)];
    let t = settings.horizon;
    for i in 0..2 {
        for j in i..2 {
            let prods: Vec<f64> = psis
                .iter()
                .zip(&chis)
                .map(|(p, c)| p[i] * c[j] + p[j] * c[i])
                .collect();
            let m = mean(&prods);
            let mc = if prods.len() > 1 {
                sample_sd(&prods) / n.sqrt()
            } else {
                0.0
            };
            // dD_ij/dv_j = -(t·mean ψ̃_i + mean χ_i), and symmetrically
            let gi = t * mean_psi[i] + mean_chi[i];
            let gj = t * mean_psi[j] + mean_chi[j];
            let prop = (gi * v_se[j]).powi(2) + (gj * v_se[i]).powi(2);
            value[i][j] = m;
            value[j][i] = m;
            se[i][j] = (mc * mc + prop).sqrt();
            se[j][i] = se[i][j];
        }
    }
    Ok(GreenKubo {
        d: MatrixEstimate::normal(value, se),
        samples: samples.len(),
        corrector_mean: VectorEstimate {
            value: mean_chi,
            se: [
                sample_sd(&chi0) / n.sqrt(),
                sample_sd(&chi1) / n.sqrt(),
            ],
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationarySamples {
    pub fields: Vec<SpectralField>,
    /// Lag-`thinning` autocorrelation of `|ω|²` along the sampling run.
    pub energy_acf: f64,
    pub final_state: SolverState,
}

/// Thinned samples of one long run after a burn-in.
pub fn stationary_samples(
    stepper: &Stepper,
    state: SolverState,
    burn_in: f64,
    thinning: f64,
    count: usize,
) -> Result<StationarySamples> {
    let mut state = state;
    let burn = stepper.steps_for(burn_in)?;
    let thin = stepper.steps_for(thinning)?.max(1);
    run_steps(stepper, &mut state, burn, |_| {})?;
    let mut fields = Vec::with_capacity(count);
    let mut energy = Vec::new();
    let mut i = 0u64;
    if count > 0 {
        fields.push(state.field.clone());
        energy.push(state.field.norm_sq());
    }
    while fields.len() < count {
        run_steps(stepper, &mut state, 1, |s| {
            i += 1;
            if i % thin == 0 {
                fields.push(s.field.clone());
                energy.push(s.field.norm_sq());
            }
        })?;
    }
    Ok(StationarySamples {
        energy_acf: autocorrelation(&energy, 1),
        fields,
        final_state: state,
    })
}

/// `(M_T, R_T)` along a Lagrangian record with snapshots:
/// `M_T = χ(ω(T)) - χ(ω(0)) + ∫_0^T ψ̃*(ω) ds`, `R_T = (χ(ω(0)) - χ(ω(T)))/√T`.
pub fn martingale_parts(
    record: &PathRecord,
    chi: impl Fn(&SpectralField) -> Vec2,
    v: Vec2,
) -> Result<(Vec2, Vec2)> {
    let inc = martingale_increments(record, &chi, v)?;
    let mut m = [0.0; 2];
    for d in &inc {
        m[0] += d[0];
        m[1] += d[1];
    }
    let t = record.times.last().unwrap() - record.times[0];
    if t <= 0.0 {
        return Ok(([0.0; 2], [0.0; 2]));
    }
    let a = chi(&record.snapshots[0]);
    let b = chi(record.snapshots.last().unwrap());
    let s = t.sqrt();
    Ok((m, [(a[0] - b[0]) / s, (a[1] - b[1]) / s]))
}

/// Increments `M_{n+1} - M_n` between consecutive record samples.
pub fn martingale_increments(
    record: &PathRecord,
    chi: impl Fn(&SpectralField) -> Vec2,
    v: Vec2,
) -> Result<Vec<Vec2>> {
    if record.snapshots.len() != record.times.len() || record.times.is_empty() {
        return Err(Error::arg("martingale parts need field snapshots at every sample"));
    }
    let chis: Vec<Vec2> = record.snapshots.iter().map(&chi).collect();
    let psi: Vec<Vec2> = record.snapshots.iter().map(velocity_at_origin).collect();
    Ok((1..record.times.len())
        .map(|i| {
            let h = record.times[i] - record.times[i - 1];
            let mut d = [0.0; 2];
            for c in 0..2 {
                d[c] = chis[i][c] - chis[i - 1][c] + 0.5 * h * (psi[i - 1][c] + psi[i][c] - 2.0 * v[c]);
            }
            d
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against the standard normal.
pub fn ks_normal(x: &[f64]) -> KsResult {
    let n = x.len();
    if n == 0 {
        return KsResult {
            statistic: 1.0,
            p_value: 0.0,
        };
    }
    let normal = Normal::standard();
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &v) in s.iter().enumerate() {
        let f = normal.cdf(v);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let en = nf.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((en + 0.12 + 0.11 / en) * d),
    }
}

/// `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} e^{-2j²λ²}`, the Kolmogorov tail.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltSettings {
    pub alpha: f64,
    /// Fall back to a pseudo-inverse square root for a near-singular `D̂`
    /// (and flag it); when `false` such a `D̂` is a numeric error.
    pub allow_pseudo_inverse: bool,
}

impl Default for CltSettings {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            allow_pseudo_inverse: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub n: usize,
    pub ks: [KsResult; 2],
    pub mardia_skewness: f64,
    pub skewness_p: f64,
    pub mardia_kurtosis: f64,
    pub kurtosis_z: f64,
    /// Sample covariance of the whitened displacements.
    pub whitened_covariance: Mat2,
    pub pseudo_inverse: bool,
    /// Set when the inputs carry no spread (constant sample).
    pub degenerate: bool,
    /// Both KS tests accept at family level `alpha` (Bonferroni over the
    /// two components).
    pub pass: bool,
    #[serde(skip)]
    pub whitened: Vec<Vec2>,
}

/// Symmetric eigen-decomposition of a 2×2 matrix: `(values, vectors)` with
/// the eigenvectors as columns.
pub fn sym_eigen(m: &Mat2) -> ([f64; 2], Mat2) {
    let (a, b, d) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
    if b == 0.0 {
        return ([a, d], [[1.0, 0.0], [0.0, 1.0]]);
    }
    let tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l1, l2) = (tr + disc, tr - disc);
    let v1 = {
        let (x, y) = (b, l1 - a);
        let r = (x * x + y * y).sqrt();
        [x / r, y / r]
    };
    ([l1, l2], [[v1[0], -v1[1]], [v1[1], v1[0]]])
}

/// `D^{-1/2}` from the symmetric square root, eigenvalues below
/// `1e-12·trace` treated as zero. Returns the matrix and whether any
/// eigenvalue was dropped.
pub fn inverse_sqrt(d: &Mat2) -> (Mat2, bool) {
    let (vals, vecs) = sym_eigen(d);
    let floor = 1e-12 * (d[0][0] + d[1][1]).abs();
    let mut dropped = false;
    let inv: Vec<f64> = vals
        .iter()
        .map(|&l| {
            if l > floor && l > 0.0 {
                1.0 / l.sqrt()
            } else {
                dropped = true;
                0.0
            }
        })
        .collect();
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = vecs[i][0] * inv[0] * vecs[j][0] + vecs[i][1] * inv[1] * vecs[j][1];
        }
    }
    (out, dropped)
}

/// Normality diagnostics for standardized displacements `z` against `D̂`.
pub fn clt_diagnostics(z: &[Vec2], d_hat: &Mat2, settings: CltSettings) -> Result<CltReport> {
    let n = z.len();
    if n < 2 {
        return Err(Error::arg("CLT diagnostics need at least two samples"));
    }
    let (root, dropped) = inverse_sqrt(d_hat);
    if dropped && !settings.allow_pseudo_inverse {
        return Err(Error::Numeric(
            "asymptotic covariance is singular; enable the pseudo-inverse".into(),
        ));
    }
    let whitened: Vec<Vec2> = z
        .iter()
        .map(|v| {
            [
                root[0][0] * v[0] + root[0][1] * v[1],
                root[1][0] * v[0] + root[1][1] * v[1],
            ]
        })
        .collect();
    let raw = covariance_of(z, 0..n, None);
    let degenerate = raw[0][0] + raw[1][1] == 0.0;
    let ks = [
        ks_normal(&whitened.iter().map(|w| w[0]).collect::<Vec<_>>()),
        ks_normal(&whitened.iter().map(|w| w[1]).collect::<Vec<_>>()),
    ];
    let wcov = covariance_of(&whitened, 0..n, None);
    let (skew, kurt) = mardia(z);
    let nf = n as f64;
    let skewness_p = if skew.is_finite() {
        1.0 - ChiSquared::new(4.0).expect("dof > 0").cdf(nf * skew / 6.0)
    } else {
        0.0
    };
    let kurtosis_z = (kurt - 8.0) / (64.0 / nf).sqrt();
    let pass = !degenerate && ks.iter().all(|k| k.p_value >= settings.alpha / 2.0);
    Ok(CltReport {
        n,
        ks,
        mardia_skewness: skew,
        skewness_p,
        mardia_kurtosis: kurt,
        kurtosis_z,
        whitened_covariance: wcov,
        pseudo_inverse: dropped,
        degenerate,
        pass,
        whitened,
    })
}

/// Mardia's multivariate skewness `b1` and kurtosis `b2` (dimension 2),
/// computed with the maximum-likelihood covariance.
pub fn mardia(z: &[Vec2]) -> (f64, f64) {
    let n = z.len();
    let nf = n as f64;
    let mut m = [0.0; 2];
    for v in z {
        m[0] += v[0] / nf;
        m[1] += v[1] / nf;
    }
    let s = covariance_of(z, 0..n, Some(m));
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    if !(det > 0.0) {
        return (f64::NAN, f64::NAN);
    }
    let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
    let c: Vec<Vec2> = z.iter().map(|v| [v[0] - m[0], v[1] - m[1]]).collect();
    let y: Vec<Vec2> = c
        .iter()
        .map(|v| [inv[0][0] * v[0] + inv[0][1] * v[1], inv[1][0] * v[0] + inv[1][1] * v[1]])
        .collect();
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for i in 0..n {
        let dii = c[i][0] * y[i][0] + c[i][1] * y[i][1];
        b2 += dii * dii;
        for j in 0..n {
            let dij = c[i][0] * y[j][0] + c[i][1] * y[j][1];
            b1 += dij * dij * dij;
        }
    }
    (b1 / (nf * nf), b2 / nf)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSettings {
    /// Samples before this time are excluded from stationary averages.
    pub burn_in: f64,
    /// Exponent in `exp(ν|ω|²)`.
    pub nu: f64,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            burn_in: 0.0,
            nu: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// Time average of `2Σλ_k|ω̂_k|²` over `tr Q²`; `None` when `Q = 0`.
    pub balance_ratio: Option<f64>,
    pub trace_q_sq: f64,
    pub mean_dissipation: f64,
    /// `exp(ν|ω(t)|²)` at every sample.
    pub exp_moment: Vec<f64>,
    /// Finite throughout, and the second-half average is at most twice
    /// `max(first-half average, exp(ν|ω(0)|²))`.
    pub exp_moment_bounded: bool,
    /// Time averages of `|ω|_1^p` for `p = 1, 2, 4` after the burn-in.
    pub h1_moments: [(u32, f64); 3],
}

/// Energy balance, exponential moment and `|ω|_1^p` monitors of one record.
pub fn moment_monitors(
    record: &PathRecord,
    noise: &NoiseSpec,
    settings: MonitorSettings,
) -> Result<MomentReport> {
    if record.observables.is_empty() {
        return Err(Error::arg("empty path record"));
    }
    let obs: Vec<_> = record
        .observables
        .iter()
        .filter(|o| o.t >= settings.burn_in)
        .collect();
    if obs.is_empty() {
        return Err(Error::arg("no samples after the burn-in"));
    }
    let time_avg = |f: &dyn Fn(&crate::dynamics::Observables) -> f64| -> f64 {
        if obs.len() == 1 {
            return f(obs[0]);
        }
        let span = obs.last().unwrap().t - obs[0].t;
        let mut s = 0.0;
        for w in obs.windows(2) {
            s += 0.5 * (w[1].t - w[0].t) * (f(w[0]) + f(w[1]));
        }
        s / span
    };
    let mean_dissipation = time_avg(&|o| o.dissipation);
    let tq = noise.trace_sq();
    let exp_moment: Vec<f64> = record
        .observables
        .iter()
        .map(|o| (settings.nu * o.energy).exp())
        .collect();
    let half = exp_moment.len() / 2;
    let first = if half > 0 { mean(&exp_moment[..half]) } else { exp_moment[0] };
    let second = mean(&exp_moment[half..]);
    let bounded = exp_moment.iter().all(|v| v.is_finite())
        && second <= 2.0 * first.max(exp_moment[0]);
    let h1_moments = [1u32, 2, 4].map(|p| (p, time_avg(&|o| o.h1_sq.sqrt().powi(p as i32))));
    Ok(MomentReport {
        balance_ratio: (tq > 0.0).then(|| mean_dissipation / tq),
        trace_q_sq: tq,
        mean_dissipation,
        exp_moment,
        exp_moment_bounded: bounded,
        h1_moments,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub paths: usize,
    pub horizon: f64,
    pub v_hat: VectorEstimate,
    pub d_direct: MatrixEstimate,
    pub d_green_kubo: Option<GreenKubo>,
    pub clt: Option<CltReport>,
    pub monitors: Option<MomentReport>,
}
