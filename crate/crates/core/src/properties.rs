//! Property tests for the invariants that cut across modules. They live in
//! the library test binary so they run together with the unit tests.

use num_complex::Complex64;
use proptest::prelude::*;

use crate::dynamics::{simulate, EquationKind, ModelConfig, Recording, SolverState, Stepper};
use crate::noise::{sample_increment, NoiseForm, NoiseSpec, RngState};
use crate::spectral::{
    biot_savart, eval_velocity, half_lattice, hr_norm, mode_count, psi_star_bound, rot, to_grid,
    translate, velocity_at_origin, Backend, BilinearKind, Nonlinearity, SpectralField,
    BIOT_SAVART_BOUND,
};
use crate::Vec2;

/// Random field with `|ŵ_k| ≲ |k|^{-decay}`; coefficients are uniform in
/// the unit square before scaling.
fn field(n: usize, decay: f64) -> impl Strategy<Value = SpectralField> {
    proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), mode_count(n)).prop_map(move |v| {
        let coeffs = half_lattice(n)
            .zip(v)
            .map(|(k, (a, b))| Complex64::new(a, b) * k.norm_sq().powf(-decay / 2.0))
            .collect();
        SpectralField::from_coeffs(n, coeffs).unwrap()
    })
}

fn point() -> impl Strategy<Value = Vec2> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| [a, b])
}

fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
    a.sub(b).unwrap().norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rot_inverts_biot_savart(w in field(8, 1.0)) {
        let back = rot(&biot_savart(&w)).unwrap();
        prop_assert!(rel(&back, &w) <= 1e-14, "{}", rel(&back, &w));
    }

    #[test]
    fn backends_agree((n, h, w) in (1usize..=8).prop_flat_map(|n| (Just(n), field(n, 1.0), field(n, 0.5)))) {
        let direct = Nonlinearity::new(n, Backend::Direct);
        let fft = Nonlinearity::new(n, Backend::PaddedFft);
        for kind in [BilinearKind::B0, BilinearKind::B1] {
            let a = direct.bilinear(&h, &w, kind).unwrap();
            let b = fft.bilinear(&h, &w, kind).unwrap();
            prop_assert!(rel(&a, &b) <= 1e-12, "{kind:?}: {}", rel(&a, &b));
        }
        let a = direct.quadratic_b0(&w).unwrap();
        let b = fft.quadratic_b0(&w).unwrap();
        prop_assert!(rel(&a, &b) <= 1e-12);
    }

    #[test]
    fn advection_is_skew(h in field(6, 1.0), w in field(6, 1.0)) {
        let kernel = Nonlinearity::new(6, Backend::Direct);
        let scale = w.norm() * hr_norm(&h, 1.0) * hr_norm(&w, 1.0);
        for kind in [BilinearKind::B0, BilinearKind::B1] {
            let b = kernel.bilinear(&h, &w, kind).unwrap();
            let e = b.inner(&w).unwrap();
            prop_assert!(e.abs() <= 1e-12 * scale, "{kind:?}: {e} vs {scale}");
        }
    }

    #[test]
    fn grid_values_are_real(w in field(5, 1.0)) {
        let g = to_grid(&w, 16);
        let big = g.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        let imag = g.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        prop_assert!(imag <= 1e-12 * big.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn grid_matches_pointwise_evaluation(w in field(3, 1.0), i in 0usize..8, j in 0usize..8) {
        let g = to_grid(&w, 8);
        let x = [j as f64 / 8.0, i as f64 / 8.0];
        let direct = w.eval(x);
        prop_assert!((g[i * 8 + j].re - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn velocity_gains_one_derivative(w in field(6, 0.0), r in 0.0..3.0f64) {
        let u = biot_savart(&w);
        let bound = BIOT_SAVART_BOUND * hr_norm(&w, r);
        for comp in [&u.u1, &u.u2] {
            prop_assert!(hr_norm(comp, r + 1.0) <= bound * (1.0 + 1e-14));
        }
    }

    #[test]
    fn translation_preserves_mode_magnitudes(w in field(8, 0.0), x in point()) {
        let t = translate(&w, x);
        for (a, b) in w.coeffs().iter().zip(t.coeffs()) {
            prop_assert!((a.norm() - b.norm()).abs() <= 4.0 * f64::EPSILON * a.norm());
        }
    }

    #[test]
    fn velocity_at_a_point_is_psi_of_the_translate(w in field(6, 1.0), x in point()) {
        let a = eval_velocity(&w, x);
        let b = velocity_at_origin(&translate(&w, x));
        prop_assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() <= 1e-13 * (1.0 + w.norm()));
    }

    #[test]
    fn psi_is_bounded_by_the_h1_norm(n in 1usize..10, w in field(9, 1.5)) {
        let w = w.with_cutoff(n);
        let p = velocity_at_origin(&w);
        prop_assert!(p[0].hypot(p[1]) <= psi_star_bound(n) * hr_norm(&w, 1.0) * (1.0 + 1e-14));
    }

    #[test]
    fn nonlinearity_commutes_with_reflection(h in field(5, 1.0), w in field(5, 1.0)) {
        let kernel = Nonlinearity::new(5, Backend::Direct);
        for kind in [BilinearKind::B0, BilinearKind::B1] {
            let a = kernel.bilinear(&h.reflected(), &w.reflected(), kind).unwrap();
            let b = kernel.bilinear(&h, &w, kind).unwrap().reflected();
            prop_assert_eq!(a, b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// With `Q ≡ 0` the per-step energy defect
    /// `|y₁|² - |y₀|² + 2dt Σ_full λ_k |ŷ₀_k|²` is second order in `dt`.
    #[test]
    fn energy_identity_defect_is_second_order(w in field(4, 2.0), kind in 0usize..2) {
        let kind = [EquationKind::Eulerian, EquationKind::Lagrangian][kind];
        let defect = |dt: f64| {
            let s = Stepper::new(ModelConfig::new(kind, 4, dt), &NoiseSpec::zero(4)).unwrap();
            let mut st = s.initial_state(w.clone(), RngState::new(0, 0)).unwrap();
            let diss = dt * s.observe_field(0.0, &w).dissipation;
            s.step(&mut st).unwrap();
            st.field.norm_sq() - w.norm_sq() + diss
        };
        let (a, b) = (defect(2e-5), defect(1e-5));
        prop_assume!(a.abs() > 1e-9 * w.norm_sq());
        let ratio = a / b;
        prop_assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} ({a}, {b})");
    }

    /// A step from the mirrored state with the mirrored stream is the
    /// mirror of the step, bit for bit.
    #[test]
    fn stochastic_step_is_reflection_equivariant(w in field(4, 1.0), seed in any::<u64>(), kind in 0usize..2) {
        let kind = [EquationKind::Eulerian, EquationKind::Lagrangian][kind];
        let noise = NoiseSpec::parametric(4, NoiseForm::default());
        let s = Stepper::new(ModelConfig::new(kind, 4, 1e-3), &noise).unwrap();
        let mut a = s.initial_state(w.clone(), RngState::new(seed, 3)).unwrap();
        let mut b = s.initial_state(w.reflected(), RngState::new(seed, 3).reflected()).unwrap();
        for _ in 0..20 {
            s.step(&mut a).unwrap();
            s.step(&mut b).unwrap();
        }
        prop_assert_eq!(&a.field.reflected(), &b.field);
        let (pa, pb) = (velocity_at_origin(&a.field), velocity_at_origin(&b.field));
        prop_assert_eq!([pa[0], pa[1]], [-pb[0], -pb[1]]);
    }

    /// Translated noise increments have the same per-mode magnitudes as the
    /// originals, draw by draw, so their law cannot depend on the shift.
    #[test]
    fn noise_law_is_translation_invariant(x in point(), seed in any::<u64>()) {
        let q = NoiseSpec::parametric(4, NoiseForm::default());
        let mut rng = RngState::new(seed, 0);
        let mut at_origin = vec![0.0; mode_count(4)];
        let mut shifted = vec![0.0; mode_count(4)];
        for _ in 0..200 {
            let dw = sample_increment(&q, 1e-3, &mut rng).unwrap();
            let t = translate(&dw, x);
            for (j, (a, b)) in dw.coeffs().iter().zip(t.coeffs()).enumerate() {
                at_origin[j] += a.norm_sqr();
                shifted[j] += b.norm_sqr();
            }
        }
        for (a, b) in at_origin.iter().zip(&shifted) {
            prop_assert!((a - b).abs() <= 1e-13 * a);
        }
    }

    /// Trapezoid displacement is dominated by the trapezoid of
    /// `c·|ω|_1` with the analytic `ψ*` constant.
    #[test]
    fn displacement_is_controlled_by_the_h1_integral(seed in any::<u64>()) {
        let noise = NoiseSpec::parametric(4, NoiseForm::default());
        let s = Stepper::new(ModelConfig::new(EquationKind::Lagrangian, 4, 1e-3), &noise).unwrap();
        let mut st = s.initial_state(SpectralField::zeros(4), RngState::new(seed, 0)).unwrap();
        let rec = simulate(&s, &mut st, 1.0, Recording::every(1).with_snapshots()).unwrap();
        let c = psi_star_bound(4);
        let (mut x, mut bound) = ([0.0f64; 2], 0.0);
        for w in rec.snapshots.windows(2) {
            let (p0, p1) = (velocity_at_origin(&w[0]), velocity_at_origin(&w[1]));
            x[0] += 0.5e-3 * (p0[0] + p1[0]);
            x[1] += 0.5e-3 * (p0[1] + p1[1]);
            bound += 0.5e-3 * c * (hr_norm(&w[0], 1.0) + hr_norm(&w[1], 1.0));
            prop_assert!(x[0].hypot(x[1]) <= bound * (1.0 + 1e-12));
        }
    }
}

/// Lagrangian picture rebuilt from an Eulerian run satisfies the one-step
/// mild form with a residual that halves twice when `dt` halves.
#[test]
fn reconstructed_lagrangian_field_solves_the_mild_step() {
    use crate::tracer::{advance_tracer, wrap};
    let w0 = SpectralField::from_modes(
        3,
        [
            (crate::Wavevector::new(1, 0).unwrap(), Complex64::new(0.4, 0.1)),
            (crate::Wavevector::new(1, 1).unwrap(), Complex64::new(-0.2, 0.3)),
            (crate::Wavevector::new(0, 2).unwrap(), Complex64::new(0.1, -0.25)),
        ],
    )
    .unwrap();
    let residual = |dt: f64| {
        let eu = Stepper::new(ModelConfig::new(EquationKind::Eulerian, 3, dt), &NoiseSpec::zero(3)).unwrap();
        let la = Stepper::new(ModelConfig::new(EquationKind::Lagrangian, 3, dt), &NoiseSpec::zero(3)).unwrap();
        let mut st = SolverState::new(w0.clone(), RngState::new(0, 0));
        let mut x = [0.1, -0.3];
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let before = st.field.clone();
            eu.step(&mut st).unwrap();
            let omega0 = translate(&before, wrap(x));
            x = advance_tracer(x, &before, &st.field, dt);
            let omega1 = translate(&st.field, wrap(x));
            let mut mild = SolverState::new(omega0, RngState::new(0, 0));
            la.step(&mut mild).unwrap();
            worst = worst.max(omega1.sub(&mild.field).unwrap().norm());
        }
        worst
    };
    let (a, b) = (residual(2e-5), residual(1e-5));
    let ratio = a / b;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} ({a:e}, {b:e})");
}

/// `ψ*(Π_N w)` converges as the cutoff grows for a smooth `w`.
#[test]
fn psi_converges_under_cutoff_growth() {
    let big = 24;
    let coeffs = half_lattice(big)
        .map(|k| Complex64::new((k.k1 as f64).cos(), (k.k2 as f64 + 0.5).sin()) * (-k.norm()).exp())
        .collect();
    let w = SpectralField::from_coeffs(big, coeffs).unwrap();
    let target = velocity_at_origin(&w);
    let err: Vec<f64> = [2, 4, 8, 16]
        .iter()
        .map(|&n| {
            let p = velocity_at_origin(&w.with_cutoff(n));
            (p[0] - target[0]).hypot(p[1] - target[1])
        })
        .collect();
    assert!(err.windows(2).all(|e| e[1] < e[0]), "{err:?}");
    assert!(err[3] < 1e-6);
}

/// With shared noise the log-contraction of two solutions stays under the
/// envelope `c(∫‖ω‖² + t)` whose constant is fitted on the first fifth of
/// the run.
#[test]
fn difference_of_solutions_stays_under_a_fitted_envelope() {
    let noise = NoiseSpec::parametric(4, NoiseForm::default());
    let s = Stepper::new(ModelConfig::new(EquationKind::Eulerian, 4, 1e-3), &noise).unwrap();
    let k = crate::Wavevector::new(1, 1).unwrap();
    let w0 = SpectralField::cosine(4, k, 0.5).unwrap();
    let w1 = w0.add(&SpectralField::sine(4, crate::Wavevector::new(2, -1).unwrap(), 0.05).unwrap()).unwrap();
    let mut a = s.initial_state(w0.clone(), RngState::new(5, 0)).unwrap();
    let mut b = s.initial_state(w1.clone(), RngState::new(5, 0)).unwrap();
    let d0 = w1.sub(&w0).unwrap().norm();
    let (mut integral, mut ts, mut logs, mut envs) = (0.0, vec![], vec![], vec![]);
    for i in 1..=2000 {
        let before = hr_norm(&a.field, 1.0).powi(2);
        s.step(&mut a).unwrap();
        s.step(&mut b).unwrap();
        integral += 0.5e-3 * (before + hr_norm(&a.field, 1.0).powi(2));
        let t = i as f64 * 1e-3;
        ts.push(t);
        logs.push((b.field.sub(&a.field).unwrap().norm() / d0).ln());
        envs.push(integral + t);
    }
    let fit = logs[..400]
        .iter()
        .zip(&envs)
        .map(|(l, e)| l / e)
        .fold(f64::NEG_INFINITY, f64::max);
    // a contracting run has a negative fitted constant; the envelope is then
    // a decreasing line that the later log-ratio must stay under
    for (l, e) in logs.iter().zip(&envs).skip(400) {
        assert!(*l <= fit.max(0.0) * e + 1e-12, "{l} > {fit}·{e}");
    }
    assert!(logs.last().unwrap() < &0.0);
}

/// Doubling the cutoff with matched noise modes moves the `T = 1`
/// observables by less and less.
#[test]
fn galerkin_observables_settle_as_the_cutoff_doubles() {
    let observe = |n: usize| {
        let noise = NoiseSpec::parametric(n, NoiseForm::default());
        let s = Stepper::new(ModelConfig::new(EquationKind::Lagrangian, n, 1e-3), &noise).unwrap();
        let w0 = SpectralField::cosine(n, crate::Wavevector::new(1, 1).unwrap(), 0.5).unwrap();
        let mut st = s.initial_state(w0, RngState::new(9, 0)).unwrap();
        let rec = simulate(&s, &mut st, 1.0, Recording::every(1000)).unwrap();
        let o = rec.observables.last().unwrap().clone();
        (o.energy, o.psi)
    };
    let obs: Vec<_> = [2, 4, 8, 16].iter().map(|&n| observe(n)).collect();
    let diffs: Vec<f64> = obs
        .windows(2)
        .map(|p| (p[1].0 - p[0].0).abs() + (p[1].1[0] - p[0].1[0]).abs() + (p[1].1[1] - p[0].1[1]).abs())
        .collect();
    assert!(diffs.windows(2).all(|d| d[1] < d[0]), "{diffs:?}");
}

mod estimators {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    use super::*;
    use crate::statistics::{
        asymptotic_variance_from_displacements, corrector, green_kubo_d, stationary_samples,
        stokes_drift_from_displacements, BootstrapSettings, CorrectorSettings,
    };

    fn gaussian_pairs(n: usize, seed: u64) -> Vec<Vec2> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random(), rng.random());
                [normal.inverse_cdf(a), 0.3 * normal.inverse_cdf(a) + normal.inverse_cdf(b)]
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn standard_errors_shrink_by_root_two(seed in any::<u64>()) {
            let z = gaussian_pairs(8000, seed);
            let small = stokes_drift_from_displacements(&z[..4000], 1.0).unwrap();
            let big = stokes_drift_from_displacements(&z, 1.0).unwrap();
            for c in 0..2 {
                let r = big.se[c] / small.se[c];
                prop_assert!((0.66..0.76).contains(&r), "{r}");
            }
        }

        #[test]
        fn direct_variance_is_symmetric(seed in any::<u64>(), known in any::<bool>()) {
            let z = gaussian_pairs(300, seed);
            let d = asymptotic_variance_from_displacements(
                &z,
                known.then_some([0.0, 0.0]),
                2.0,
                BootstrapSettings { resamples: 20, ..Default::default() },
            )
            .unwrap();
            prop_assert!((d.value[0][1] - d.value[1][0]).abs() <= 1e-15 * d.value[0][0].abs());
        }
    }

    /// KS against exact normal draws: the p-value is calibrated, so a
    /// level-0.01 test accepts in at least 98% of repetitions.
    #[test]
    fn ks_calibration_meta_trial() {
        use crate::statistics::{clt_diagnostics, ks_normal, CltSettings};
        let trials = 1000;
        let mut single = 0;
        let mut family = 0;
        for t in 0..trials {
            let z = gaussian_pairs(256, 0xca11 + t);
            let first: Vec<f64> = z.iter().map(|v| v[0]).collect();
            single += (ks_normal(&first).p_value >= 0.01) as usize;
            // second component has variance 1.09 and cross term 0.3
            let d = [[1.0, 0.3], [0.3, 1.09]];
            family += clt_diagnostics(&z, &d, CltSettings::default()).unwrap().pass as usize;
        }
        assert!(single as f64 >= 0.98 * trials as f64, "{single}/{trials}");
        assert!(family as f64 >= 0.98 * trials as f64, "{family}/{trials}");
    }

    fn small_stepper() -> Stepper {
        let noise = NoiseSpec::parametric(3, NoiseForm::default());
        Stepper::new(ModelConfig::new(EquationKind::Lagrangian, 3, 1e-3), &noise).unwrap()
    }

    #[test]
    fn green_kubo_matrix_is_exactly_symmetric() {
        let s = small_stepper();
        let st = s.initial_state(SpectralField::zeros(3), RngState::new(1, 0)).unwrap();
        let samples = stationary_samples(&s, st, 0.2, 0.05, 12).unwrap();
        let settings = CorrectorSettings { horizon: 0.1, inner: 2, seed: 4, stream_base: 100 };
        let gk = green_kubo_d(&s, &samples.fields, &settings, [0.0, 0.0], [0.0, 0.0]).unwrap();
        assert_eq!(gk.d.value[0][1].to_bits(), gk.d.value[1][0].to_bits());
        assert_eq!(gk.d.se[0][1].to_bits(), gk.d.se[1][0].to_bits());
    }

    /// The corrector averages to zero over the invariant measure.
    #[test]
    fn corrector_is_centred_at_stationarity() {
        let s = small_stepper();
        let st = s.initial_state(SpectralField::zeros(3), RngState::new(2, 0)).unwrap();
        let samples = stationary_samples(&s, st, 1.0, 0.05, 400).unwrap();
        let settings = CorrectorSettings { horizon: 0.25, inner: 4, seed: 6, stream_base: 1000 };
        let gk = green_kubo_d(&s, &samples.fields, &settings, [0.0, 0.0], [0.0, 0.0]).unwrap();
        let m = gk.corrector_mean;
        for c in 0..2 {
            assert!(m.value[c].abs() <= 3.0 * m.se[c], "{m:?}");
        }
        // and a single-point call agrees with the nested estimate it came from
        let one = corrector(&s, &samples.fields[0], &settings, [0.0, 0.0]).unwrap();
        assert!(one.se[0] > 0.0 && one.tail.is_finite());
    }
}
