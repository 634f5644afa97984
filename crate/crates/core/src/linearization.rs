//! Derivative flow, controlled Malliavin derivative and the ζ-process along
//! a Lagrangian path.
//!
//! With `B(a, b) = -B0(a, b) + B1(a, b)` and `B_s(ω, h) = B(ω, h) + B(h, ω)`:
//!
//! ```text
//! ξ' = Δξ + B_s(ω, ξ)                       derivative flow, ξ(0) = ξ0
//! D' = ΔD + B_s(ω, D) + f                   Malliavin derivative, D(0) = 0
//! ζ' = Δζ + Π_≥ B_s(ω, ζ) - ½ ζ_<|ζ_<|⁻¹    controlled flow, ζ(0) = ξ0
//! f  = Π_< Δζ + Π_< B_s(ω, ζ) + ½ ζ_<|ζ_<|⁻¹,  g = Q⁻¹ f
//! ```
//!
//! so that `ξ - D - ζ` solves a homogeneous linear equation and stays zero.
//! The low-mode part `ζ_<` keeps its direction and shrinks at unit speed ½,
//! so it is stored as `(direction, |ζ_<(t0)|, t0)` and evaluated exactly.
//! "Low" means Euclidean `|k| < n0`.
//!
//! Every linear field is stepped with the same frozen exponential Euler map
//! as the base equation. The analytic part of `f` is integrated exactly
//! inside each step, which keeps the identity `ξ = D + ζ` at round-off.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::dynamics::{EquationKind, SolverState, Stepper};
use crate::error::{Error, Result};
use crate::spectral::{velocity_at_origin, SpectralField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `|ζ_<(t)| = max(m0 - (t - t0)/2, 0)` along a fixed unit direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LowModeShrink {
    /// Unit low-mode direction, or `None` when `ζ_<(t0) = 0`.
    pub direction: Option<SpectralField>,
    pub m0: f64,
    pub start_step: u64,
}

impl LowModeShrink {
    /// Magnitude after `steps` steps of size `dt` from the start.
    pub fn magnitude(&self, steps: u64, dt: f64) -> f64 {
        if self.direction.is_none() {
            return 0.0;
        }
        let m = self.m0 - 0.5 * (steps as f64 * dt);
        // snap the last round-off sliver so extinction is exact
        if m <= 4.0 * f64::EPSILON * self.m0 {
            0.0
        } else {
            m
        }
    }

    /// Time at which the low modes vanish, `t0 + 2 m0`.
    pub fn extinction_time(&self, t0: f64) -> f64 {
        t0 + 2.0 * self.m0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    /// Lagrangian base state `ω(t)`.
    pub base: SolverState,
    pub xi_lin: SpectralField,
    pub zeta: SpectralField,
    pub malliavin: SpectralField,
    pub n0: usize,
    pub shrink: LowModeShrink,
}

impl CoupledState {
    /// `ρ = ξ - D`.
    pub fn rho(&self) -> SpectralField {
        self.xi_lin.sub(&self.malliavin).expect("shared cutoff")
    }

    /// `|ξ - D - ζ|`.
    pub fn identity_residual(&self) -> f64 {
        let mut s = 0.0;
        for ((a, b), c) in self
            .xi_lin
            .coeffs()
            .iter()
            .zip(self.malliavin.coeffs())
            .zip(self.zeta.coeffs())
        {
            s += (a - b - c).norm_sqr();
        }
        (2.0 * s).sqrt()
    }
}

/// Control at one time, with the pieces the Malliavin step needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlForce {
    pub f: SpectralField,
    pub g: SpectralField,
    /// `Π_< B_s(ω, ζ)`.
    pub transport: SpectralField,
    /// `|ζ_<|` at the start and end of the step.
    pub magnitude: f64,
    pub magnitude_next: f64,
}

/// Engine for the coupled system on top of a Lagrangian [`Stepper`].
#[derive(Debug)]
pub struct Coupling {
    stepper: Stepper,
    n0: usize,
    low: Vec<bool>,
    inv_q: Vec<f64>,
}

impl Coupling {
    pub fn new(stepper: Stepper, n0: usize) -> Result<Self> {
        if stepper.config().kind != EquationKind::Lagrangian {
            return Err(Error::arg("the coupling runs on a Lagrangian base path"));
        }
        if n0 > stepper.cutoff() {
            return Err(Error::arg(format!(
                "n0 = {n0} exceeds the cutoff {}",
                stepper.cutoff()
            )));
        }
        let bound = (n0 * n0) as f64;
        let low: Vec<bool> = stepper
            .lattice()
            .modes()
            .iter()
            .map(|k| k.norm_sq() < bound)
            .collect();
        let mut inv_q = vec![0.0; low.len()];
        for ((iq, &is_low), (&k, &q)) in inv_q
            .iter_mut()
            .zip(&low)
            .zip(stepper.lattice().modes().iter().zip(stepper.noise().table()))
        {
            if is_low {
                if q == 0.0 {
                    return Err(Error::Degenerate { k1: k.k1, k2: k.k2 });
                }
                *iq = 1.0 / q;
            }
        }
        Ok(Self {
            stepper,
            n0,
            low,
            inv_q,
        })
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    /// `true` for stored modes with `|k| < n0`.
    pub fn low_mask(&self) -> &[bool] {
        &self.low
    }

    pub fn low_part(&self, w: &SpectralField) -> SpectralField {
        self.masked(w, true)
    }

    pub fn high_part(&self, w: &SpectralField) -> SpectralField {
        self.masked(w, false)
    }

    fn masked(&self, w: &SpectralField, keep_low: bool) -> SpectralField {
        let coeffs = w
            .coeffs()
            .iter()
            .zip(&self.low)
            .map(|(&c, &l)| if l == keep_low { c } else { ZERO })
            .collect();
        SpectralField::from_coeffs(w.cutoff(), coeffs).expect("same layout")
    }

    /// Starts the coupled system at `ξ(0) = ζ(0) = xi0`, `D(0) = 0`.
    pub fn init(&self, base: SolverState, xi0: &SpectralField) -> Result<CoupledState> {
        if base.field.cutoff() != self.stepper.cutoff() {
            return Err(Error::Dimension {
                expected: self.stepper.cutoff(),
                found: base.field.cutoff(),
            });
        }
        if xi0.cutoff() != self.stepper.cutoff() {
            return Err(Error::Dimension {
                expected: self.stepper.cutoff(),
                found: xi0.cutoff(),
            });
        }
        let n = xi0.norm();
        if n > 1.0 + 1e-12 {
            return Err(Error::arg(format!("perturbation needs |xi| <= 1, got {n}")));
        }
        let low = self.low_part(xi0);
        let m0 = low.norm();
        let direction = (m0 > 0.0).then(|| low.scaled(1.0 / m0));
        Ok(CoupledState {
            shrink: LowModeShrink {
                direction,
                m0,
                start_step: base.step,
            },
            base,
            xi_lin: xi0.clone(),
            zeta: xi0.clone(),
            malliavin: SpectralField::zeros(xi0.cutoff()),
            n0: self.n0,
        })
    }

    /// `B_s(ω, h) = -B0(ω, h) - B0(h, ω) + B1(ω, h) + B1(h, ω)`.
    pub fn symmetric_transport(&self, omega: &SpectralField, h: &SpectralField) -> SpectralField {
        let mut out = vec![ZERO; omega.coeffs().len()];
        self.bs_into(omega, h, &mut out);
        SpectralField::from_coeffs(omega.cutoff(), out).expect("same layout")
    }

    fn bs_into(&self, omega: &SpectralField, h: &SpectralField, out: &mut [Complex64]) {
        let kernel = self.stepper.kernel();
        let mut tmp = vec![ZERO; out.len()];
        kernel.b0_into(omega, h, out);
        kernel.b0_into(h, omega, &mut tmp);
        let vo = velocity_at_origin(omega);
        let vh = velocity_at_origin(h);
        let modes = self.stepper.lattice().modes();
        for (j, o) in out.iter_mut().enumerate() {
            let k = modes[j];
            let so = TAU * (vo[0] * k.k1 as f64 + vo[1] * k.k2 as f64);
            let sh = TAU * (vh[0] * k.k1 as f64 + vh[1] * k.k2 as f64);
            // 2πi (v·k) c
            let hc = h.coeffs()[j];
            let wc = omega.coeffs()[j];
            let b1 = Complex64::new(-so * hc.im - sh * wc.im, so * hc.re + sh * wc.re);
            *o = -*o - tmp[j] + b1;
        }
    }

    fn steps_since_start(&self, cs: &CoupledState) -> u64 {
        cs.base.step - cs.shrink.start_step
    }

    /// Frozen exponential Euler map `e^{-λh}(c + h·drift)` of a linear field.
    fn linear_step(&self, c: &SpectralField, drift: &[Complex64]) -> SpectralField {
        let dt = self.stepper.dt();
        let decay = self.stepper.decay_factors();
        let coeffs = c
            .coeffs()
            .iter()
            .zip(drift)
            .zip(decay)
            .map(|((&c, &d), &e)| flush_subnormal((c + d * dt) * e))
            .collect();
        SpectralField::from_coeffs(c.cutoff(), coeffs).expect("same layout")
    }

    fn check_finite(&self, cs: &CoupledState, w: &SpectralField) -> Result<()> {
        let (a, j) = w.max_abs();
        if !(a <= crate::dynamics::BLOW_UP_THRESHOLD) {
            let k = self.stepper.lattice().modes()[j];
            return Err(Error::BlowUp {
                t: self.stepper.time(&cs.base) + self.stepper.dt(),
                max_abs: a,
                k1: k.k1,
                k2: k.k2,
                partial: None,
            });
        }
        Ok(())
    }

    /// New derivative flow `ξ(t + dt)`; does not modify `cs`.
    pub fn step_derivative_flow(&self, cs: &CoupledState) -> Result<SpectralField> {
        let mut drift = vec![ZERO; cs.xi_lin.coeffs().len()];
        self.bs_into(&cs.base.field, &cs.xi_lin, &mut drift);
        let out = self.linear_step(&cs.xi_lin, &drift);
        self.check_finite(cs, &out)?;
        Ok(out)
    }

    /// `f` and `g = Q⁻¹ f` at the current time. `ζ_<|ζ_<|⁻¹` is taken as 0
    /// once the low modes have vanished.
    pub fn control_force(&self, cs: &CoupledState) -> ControlForce {
        let mut transport = vec![ZERO; cs.zeta.coeffs().len()];
        self.bs_into(&cs.base.field, &cs.zeta, &mut transport);
        let steps = self.steps_since_start(cs);
        let dt = self.stepper.dt();
        let m = cs.shrink.magnitude(steps, dt);
        let m_next = cs.shrink.magnitude(steps + 1, dt);
        let lambda = self.stepper.eigenvalues();
        let mut f = vec![ZERO; transport.len()];
        let mut g = vec![ZERO; transport.len()];
        for j in 0..f.len() {
            if !self.low[j] {
                transport[j] = ZERO;
                continue;
            }
            let mut v = transport[j] - cs.zeta.coeffs()[j] * lambda[j];
            if let (Some(dir), true) = (&cs.shrink.direction, m > 0.0) {
                v += dir.coeffs()[j] * 0.5;
            }
            f[j] = v;
            g[j] = v * self.inv_q[j];
        }
        let n = cs.zeta.cutoff();
        ControlForce {
            f: SpectralField::from_coeffs(n, f).expect("same layout"),
            g: SpectralField::from_coeffs(n, g).expect("same layout"),
            transport: SpectralField::from_coeffs(n, transport).expect("same layout"),
            magnitude: m,
            magnitude_next: m_next,
        }
    }

    /// New `ζ(t + dt)`: exponential Euler on the high modes, exact shrink on
    /// the low modes.
    pub fn step_zeta(&self, cs: &CoupledState) -> Result<SpectralField> {
        let mut drift = vec![ZERO; cs.zeta.coeffs().len()];
        self.bs_into(&cs.base.field, &cs.zeta, &mut drift);
        let mut out = self.linear_step(&cs.zeta, &drift).into_coeffs();
        let m_next = cs
            .shrink
            .magnitude(self.steps_since_start(cs) + 1, self.stepper.dt());
        for (j, o) in out.iter_mut().enumerate() {
            if self.low[j] {
                *o = match &cs.shrink.direction {
                    Some(d) => d.coeffs()[j] * m_next,
                    None => ZERO,
                };
            }
        }
        let out = SpectralField::from_coeffs(cs.zeta.cutoff(), out).expect("same layout");
        self.check_finite(cs, &out)?;
        Ok(out)
    }

    /// New `D(t + dt)` driven by the control `force` built at the same time.
    ///
    /// The transport parts are frozen over the step like every other drift;
    /// `Π_<Δζ + ½ζ_<|ζ_<|⁻¹` is integrated exactly along the known shrink,
    /// `∫_0^h e^{-λ(h-s)}(-λ m(s) - m'(s)) ds = e^{-λh} m_n - m_{n+1}`.
    pub fn step_malliavin(&self, cs: &CoupledState, force: &ControlForce) -> Result<SpectralField> {
        let mut drift = vec![ZERO; cs.malliavin.coeffs().len()];
        self.bs_into(&cs.base.field, &cs.malliavin, &mut drift);
        for (d, t) in drift.iter_mut().zip(force.transport.coeffs()) {
            *d += t;
        }
        let mut out = self.linear_step(&cs.malliavin, &drift).into_coeffs();
        if let Some(dir) = &cs.shrink.direction {
            let decay = self.stepper.decay_factors();
            for (j, o) in out.iter_mut().enumerate() {
                if self.low[j] {
                    *o += dir.coeffs()[j] * (decay[j] * force.magnitude - force.magnitude_next);
                }
            }
        }
        let out = SpectralField::from_coeffs(cs.malliavin.cutoff(), out).expect("same layout");
        self.check_finite(cs, &out)?;
        Ok(out)
    }

    /// New `D(t + dt)` for an arbitrary noise-space control `g` held
    /// constant over the step: transport frozen as usual, the forcing `Qg`
    /// integrated exactly, `(1 - e^{-λh})/λ · q_k ĝ_k`.
    pub fn step_malliavin_with_control(
        &self,
        cs: &CoupledState,
        g: &SpectralField,
    ) -> Result<SpectralField> {
        cs.malliavin.check_cutoff(g)?;
        let mut drift = vec![ZERO; cs.malliavin.coeffs().len()];
        self.bs_into(&cs.base.field, &cs.malliavin, &mut drift);
        let mut out = self.linear_step(&cs.malliavin, &drift).into_coeffs();
        let lambda = self.stepper.eigenvalues();
        let q = self.stepper.noise().table();
        let dt = self.stepper.dt();
        for (j, o) in out.iter_mut().enumerate() {
            let w = if lambda[j] * dt < 1e-8 {
                dt
            } else {
                -(-lambda[j] * dt).exp_m1() / lambda[j]
            };
            *o += g.coeffs()[j] * (q[j] * w);
        }
        let out = SpectralField::from_coeffs(cs.malliavin.cutoff(), out).expect("same layout");
        self.check_finite(cs, &out)?;
        Ok(out)
    }

    /// One lockstep step of all four fields; returns the control used.
    pub fn step(&self, cs: &mut CoupledState) -> Result<ControlForce> {
        let force = self.control_force(cs);
        self.advance(cs, &force)?;
        Ok(force)
    }

    fn advance(&self, cs: &mut CoupledState, force: &ControlForce) -> Result<()> {
        let xi = self.step_derivative_flow(cs)?;
        let d = self.step_malliavin(cs, force)?;
        let z = self.step_zeta(cs)?;
        self.stepper.step(&mut cs.base)?;
        cs.xi_lin = xi;
        cs.malliavin = d;
        cs.zeta = z;
        Ok(())
    }

    /// Runs the coupled system for `horizon`, sampling every `cadence` steps.
    pub fn run(&self, cs: &mut CoupledState, horizon: f64, cadence: u64) -> Result<CouplingRecord> {
        let steps = self.stepper.steps_for(horizon)?;
        let cadence = cadence.max(1);
        let dt = self.stepper.dt();
        let mut rec = CouplingRecord::default();
        let mut g_energy = 0.0;
        let mut force = self.control_force(cs);
        rec.push(self, cs, &force, g_energy);
        for i in 1..=steps {
            g_energy += dt * force.g.norm_sq();
            self.advance(cs, &force)?;
            force = self.control_force(cs);
            if i % cadence == 0 || i == steps {
                rec.push(self, cs, &force, g_energy);
            }
        }
        Ok(rec)
    }
}

/// Heat-damped high modes decay through the subnormal range, where every
/// flop costs tens of cycles; those coefficients are set to zero instead.
#[inline]
fn flush_subnormal(c: Complex64) -> Complex64 {
    let f = |x: f64| if x.abs() < f64::MIN_POSITIVE { 0.0 } else { x };
    Complex64::new(f(c.re), f(c.im))
}

/// Time series of one coupled run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CouplingRecord {
    pub times: Vec<f64>,
    /// `|ξ - D - ζ|`
    pub residual: Vec<f64>,
    pub xi_norm: Vec<f64>,
    pub zeta_norm: Vec<f64>,
    pub zeta_low_norm: Vec<f64>,
    pub malliavin_norm: Vec<f64>,
    /// `|g(t)|²`
    pub g_sq: Vec<f64>,
    /// Left-point running `∫_0^t |g|² ds`.
    pub g_energy: Vec<f64>,
}

impl CouplingRecord {
    fn push(&mut self, c: &Coupling, cs: &CoupledState, force: &ControlForce, g_energy: f64) {
        self.times.push(c.stepper.time(&cs.base));
        self.residual.push(cs.identity_residual());
        self.xi_norm.push(cs.xi_lin.norm());
        self.zeta_norm.push(cs.zeta.norm());
        self.zeta_low_norm.push(c.low_part(&cs.zeta).norm());
        self.malliavin_norm.push(cs.malliavin.norm());
        self.g_sq.push(force.g.norm_sq());
        self.g_energy.push(g_energy);
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    /// `max_t (|ξ(t)| + |ζ(t)|)`, the scale the residual is measured against.
    pub fn solution_scale(&self) -> f64 {
        self.xi_norm
            .iter()
            .zip(&self.zeta_norm)
            .map(|(a, b)| a + b)
            .fold(0.0, f64::max)
    }

    /// First sample time from which `ζ_<` is identically zero.
    pub fn low_mode_extinction(&self) -> Option<f64> {
        let i = self.zeta_low_norm.iter().rposition(|&m| m != 0.0);
        match i {
            None => self.times.first().copied(),
            Some(i) => self.times.get(i + 1).copied(),
        }
    }
}
