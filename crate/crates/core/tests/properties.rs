use std::f64::consts::PI;

use eit_echo::dynamics::{
    free_evolution, run_sequence, PulseLabel, PulseSpec, Segment, SequenceSpec,
};
use eit_echo::ensemble::{detuning_grid, EnsembleSpec, Physics, ZeemanBranch};
use eit_echo::lambda::{hamiltonian, lindblad_rhs};
use eit_echo::qstate::{
    dark_ket, trace_distance, DensityMatrix3, GroundQubitState, Matrix2c, Matrix3c, C64,
};
use eit_echo::readout::{
    assemble_decay_curve, beat_amplitude, echo_amplitude, fit_decay, BeatTrace, DecayCurve,
    ReadoutMode,
};
use eit_echo::sequences::{linear_taus, make_init_sequence, EchoConfig};
use eit_echo::studies::{find_beat_minimum, scaling_study, ScalingModel, TemperatureModel};
use eit_echo::tomography::{projection_measurements, reconstruct};
use eit_echo::LambdaParams;
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn complex() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

/// Random positive 3×3 matrix with trace in (0, 1].
fn state3() -> impl Strategy<Value = DensityMatrix3> {
    (proptest::collection::vec(complex(), 9), 0.05..1.0f64).prop_map(|(v, tr)| {
        let a = Matrix3c::from_iterator(v);
        let m = a * a.adjoint();
        let t = m.trace().re.max(1e-9);
        DensityMatrix3::new(m.scale(tr / t)).unwrap()
    })
}

fn state2(trace: impl Strategy<Value = f64>) -> impl Strategy<Value = GroundQubitState> {
    (proptest::collection::vec(complex(), 4), trace).prop_map(|(v, tr)| {
        let a = Matrix2c::from_iterator(v);
        let m = a * a.adjoint();
        let t = m.trace().re.max(1e-9);
        GroundQubitState::new(m.scale(tr / t)).unwrap()
    })
}

fn ket2() -> impl Strategy<Value = Vector2<C64>> {
    (complex(), complex())
        .prop_filter("nonzero", |(a, b)| a.norm() + b.norm() > 0.1)
        .prop_map(|(a, b)| {
            let v = Vector2::new(a, b);
            v.unscale(v.norm())
        })
}

fn params() -> impl Strategy<Value = LambdaParams> {
    (
        (0.0..2e7f64, 0.0..2e7f64, -PI..PI, -PI..PI),
        (-1e7..1e7f64, -1e6..1e6f64, -1e5..1e5f64),
        (0.0..1e6f64, 0.0..1e6f64, 0.0..1e5f64, 0.0..1.0f64),
    )
        .prop_map(
            |((r0, r1, p0, p1), (dopt, dspin, z), (g1, g2, gs, b0))| LambdaParams {
                rabi0: r0,
                rabi1: r1,
                phase0: p0,
                phase1: p1,
                delta_opt: dopt,
                delta_spin: dspin,
                zeeman_shift: z,
                gamma_opt_decay: g1,
                gamma_opt_deph: g2,
                gamma_spin_deph: gs,
                branch0: b0,
            },
        )
}

fn hermiticity_error3(m: &Matrix3c) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn sorted_eigenvalues(m: &Matrix3c) -> Vec<f64> {
    let mut e: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn bloch(m: &Matrix2c) -> [f64; 3] {
    [
        2.0 * m[(0, 1)].re,
        -2.0 * m[(0, 1)].im,
        (m[(0, 0)] - m[(1, 1)]).re,
    ]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constructions_stay_hermitian_and_positive(psi in ket2(), w in 0.0..1.0f64, s in state3(), t in state3(), a in 0.0..1.0f64) {
        let g = GroundQubitState::weighted_ket(&psi, w).unwrap();
        let m = g.matrix();
        prop_assert!((m - m.adjoint()).iter().all(|z| z.norm() <= 1e-12));
        prop_assert!(m.symmetric_eigen().eigenvalues.iter().all(|l| *l >= -1e-9));

        let mix = DensityMatrix3::weighted_sum([(a, &s), (1.0 - a, &t)]);
        prop_assert!(mix.validate().is_ok());
        prop_assert!(hermiticity_error3(mix.matrix()) <= 1e-12);
        prop_assert!(s.ground_block().validate().is_ok());
    }

    #[test]
    fn bloch_length_bounded_by_trace(g in state2(0.0..1.0f64)) {
        let r = g.bloch_vector();
        prop_assert!(norm3(r) <= g.trace() + 1e-12);
        prop_assert!(norm3(r) - norm3(bloch(g.matrix())) < 1e-12);
    }

    #[test]
    fn fidelity_is_one_only_for_the_target(psi in ket2(), other in state2(Just(1.0))) {
        let pure = GroundQubitState::from_ket(&psi).unwrap();
        prop_assert!((pure.fidelity(&psi).unwrap() - 1.0).abs() < 1e-12);
        let target = psi * psi.adjoint();
        let distance = (other.matrix() - target).norm();
        let f = other.fidelity(&psi).unwrap();
        if distance > 1e-3 {
            prop_assert!(f < 1.0 - 1e-8);
        }
    }

    #[test]
    fn lindblad_rhs_is_traceless_and_hermitian(p in params(), s in state3()) {
        let d = lindblad_rhs(&s, &p);
        let scale = 1.0 + p.max_rate();
        prop_assert!(d.trace().norm() <= 1e-12 * scale);
        prop_assert!(hermiticity_error3(&d) <= 1e-12 * scale);
    }

    #[test]
    fn dark_state_is_stationary(rabi in 1e5..5e7f64, phase in -PI..PI, shift in -PI..PI) {
        let p = LambdaParams {
            rabi0: rabi,
            rabi1: rabi,
            phase0: shift,
            phase1: shift + phase,
            ..LambdaParams::closed()
        };
        // ⟨e|H|D⟩ ∝ e^{iφ₀} − e^{i(φ₁+θ)} vanishes for θ = φ₀ − φ₁
        let d = DensityMatrix3::from_ground_ket(&dark_ket(-phase)).unwrap();
        let r = lindblad_rhs(&d, &p);
        prop_assert!(r.iter().all(|z| z.norm() <= 1e-12 * rabi));
    }

    #[test]
    fn energy_offset_does_not_change_the_commutator(p in params(), s in state3(), c in -1e7..1e7f64) {
        let h = hamiltonian(&p);
        let shifted = h + Matrix3c::identity().scale(c);
        let rho = s.matrix();
        let comm = |h: &Matrix3c| h * rho - rho * h;
        let diff = (comm(&shifted) - comm(&h)).norm();
        prop_assert!(diff <= 1e-9 * (1.0 + h.norm()));
    }

    #[test]
    fn optical_shift_leaves_ground_unchanged_in_the_dark(p in params(), s in state3(), shift in -1e7..1e7f64, t in 1e-7..1e-4f64) {
        let undriven = LambdaParams { rabi0: 0.0, rabi1: 0.0, ..p };
        let moved = LambdaParams { delta_opt: p.delta_opt + shift, ..undriven };
        let a = free_evolution(&s, &undriven, t, 1.0);
        let b = free_evolution(&s, &moved, t, 1.0);
        let (ga, gb) = (a.ground_block(), b.ground_block());
        prop_assert!((ga.matrix() - gb.matrix()).norm() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_drive_preserves_spectrum(
        r0 in 1e6..2e7f64, r1 in 0.0..2e7f64, p1 in -PI..PI,
        dopt in -5e6..5e6f64, dspin in -1e6..1e6f64, s in state3(),
    ) {
        let p = LambdaParams { delta_opt: dopt, delta_spin: dspin, ..LambdaParams::closed() };
        let pulse = PulseSpec { duration: 1e-6, rabi0: r0, rabi1: r1, phase0: 0.0, phase1: p1, label: PulseLabel::Custom };
        let tr = run_sequence(&s, &p, &SequenceSpec::new(vec![Segment::Pulse(pulse)], 2e-9)).unwrap();
        let before = sorted_eigenvalues(s.matrix());
        let after = sorted_eigenvalues(tr.final_state().matrix());
        for (x, y) in before.iter().zip(&after) {
            // RK4 is not exactly unitary; 1e-6 is the integrator gate
            prop_assert!((x - y).abs() < 1e-6, "{:?} vs {:?}", before, after);
        }
    }

    #[test]
    fn trajectories_conserve_trace(p in params(), s in state3(), wait in 1e-7..1e-4f64) {
        let pulse = PulseSpec { duration: 5e-7, rabi0: p.rabi0, rabi1: p.rabi1, phase0: p.phase0, phase1: p.phase1, label: PulseLabel::Custom };
        let seq = SequenceSpec::new(vec![Segment::Pulse(pulse), Segment::Wait { duration: wait }, Segment::Pulse(pulse)], 2e-9);
        let tr = run_sequence(&s, &p, &seq).unwrap();
        let t0 = s.trace();
        prop_assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        for st in &tr.states {
            prop_assert!((st.trace() - t0).abs() < 1e-9);
            prop_assert!(st.validate().is_ok());
        }
    }

    #[test]
    fn init_phase_rotates_bloch_vector(phi in -PI..PI) {
        let base = EchoConfig::default();
        let turned = EchoConfig { init_phase_offset: phi, ..base.clone() };
        let prepare = |cfg: &EchoConfig| {
            run_sequence(&DensityMatrix3::mixed_ground(), &LambdaParams::closed(), &make_init_sequence(cfg).unwrap())
                .unwrap()
                .final_state()
                .ground_block()
                .bloch_vector()
        };
        let [x, y, z] = prepare(&base);
        let r = prepare(&turned);
        let expect = [x * phi.cos() - y * phi.sin(), x * phi.sin() + y * phi.cos(), z];
        for k in 0..3 {
            prop_assert!((r[k] - expect[k]).abs() < 1e-6, "{:?} vs {:?}", r, expect);
        }
    }

    #[test]
    fn echo_ignores_init_phase(phi in -PI..PI, tau in 10e-6..60e-6f64) {
        let lossy = Physics::new(
            LambdaParams::material(),
            EnsembleSpec { spin_fwhm: 30e3, n_spin: 5, ..EnsembleSpec::single() },
        );
        let cfg = EchoConfig { tau, ..EchoConfig::default() };
        let turned = EchoConfig { init_phase_offset: phi, ..cfg.clone() };
        // Residual optical coherence left by imperfect pulses interferes with
        // the single-colour readout, so the beat is only phase-blind when the
        // pulses are exact.
        for (ph, mode) in [(lossy, ReadoutMode::Proxy), (Physics::ideal(), ReadoutMode::Beat)] {
            let a = echo_amplitude(&cfg, &ph, mode).unwrap();
            let b = echo_amplitude(&turned, &ph, mode).unwrap();
            prop_assert!((a - b).abs() < 1e-4, "{:?}: {} vs {}", mode, a, b);
        }
    }

    #[test]
    fn ensemble_weights_sum_to_one(
        ofwhm in 0.0..500e3f64, sfwhm in 0.0..100e3f64, no in 0usize..20, ns in 0usize..20,
        split in proptest::option::of(0.0..20e3f64),
    ) {
        let mut spec = EnsembleSpec { optical_fwhm: ofwhm, spin_fwhm: sfwhm, n_optical: 2 * no + 1, n_spin: 2 * ns + 1, zeeman_branches: Vec::<ZeemanBranch>::new() };
        if let Some(s) = split {
            spec = spec.with_split(s);
        }
        let grid = detuning_grid(&spec).unwrap();
        prop_assert_eq!(grid.len(), spec.member_count());
        let total: f64 = grid.iter().map(|m| m.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(grid.iter().all(|m| m.weight >= 0.0));
    }

    #[test]
    fn qst_round_trip(g in state2(Just(1.0)), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [x, y, z] = projection_measurements(&g, 0.0, &mut rng).unwrap();
        let back = reconstruct(x, y, z).unwrap();
        prop_assert!(trace_distance(&back, &g).unwrap() < 1e-10);
        let expect = bloch(g.matrix());
        prop_assert!((x - expect[0]).abs() < 1e-12 && (y - expect[1]).abs() < 1e-12 && (z - expect[2]).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_is_affine(a in state2(Just(1.0)), b in state2(Just(1.0)), w in 0.0..1.0f64) {
        let (va, vb) = (bloch(a.matrix()), bloch(b.matrix()));
        let mix: Vec<f64> = (0..3).map(|k| w * va[k] + (1.0 - w) * vb[k]).collect();
        let direct = reconstruct(mix[0], mix[1], mix[2]).unwrap();
        let ra = reconstruct(va[0], va[1], va[2]).unwrap();
        let rb = reconstruct(vb[0], vb[1], vb[2]).unwrap();
        let combined = ra.matrix().scale(w) + rb.matrix().scale(1.0 - w);
        prop_assert!((direct.matrix() - combined).norm() < 1e-12);
    }

    #[test]
    fn fit_is_scale_equivariant(k in 0.01..100.0f64, seed in any::<u64>()) {
        use rand_distr::{Distribution, Normal};
        let taus = linear_taus(10e-6, 1500e-6, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let amps: Vec<f64> = taus.iter().map(|t| 0.8 * (-t / 400e-6).exp() + 0.05 + noise.sample(&mut rng)).collect();
        let scaled: Vec<f64> = amps.iter().map(|a| k * a).collect();
        let f1 = fit_decay(&DecayCurve::new(taus.clone(), amps).unwrap()).unwrap();
        let f2 = fit_decay(&DecayCurve::new(taus, scaled).unwrap()).unwrap();
        prop_assert!((f2.t2 / f1.t2 - 1.0).abs() < 1e-9);
        prop_assert!((f2.amplitude / (k * f1.amplitude) - 1.0).abs() < 1e-9);
        prop_assert!((f2.offset - k * f1.offset).abs() < 1e-9 * k);
    }

    #[test]
    fn beat_amplitude_ignores_time_shift(amp in 0.0..2.0f64, shift in 0.0..1e-6f64, periods in 5usize..40) {
        let f = 10.2e6;
        let per_period = 32;
        let n = periods * per_period;
        let dt = 1.0 / (f * per_period as f64);
        let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let make = |s: f64| BeatTrace {
            times: times.clone(),
            signal: times.iter().map(|t| amp * (2.0 * PI * f * (t + s)).cos()).collect(),
            beat_frequency: f,
        };
        let a = beat_amplitude(&make(0.0)).unwrap();
        let b = beat_amplitude(&make(shift)).unwrap();
        prop_assert!((a - amp).abs() < 1e-9);
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn temperature_law_is_exact(t1 in 1.0..30.0f64, t2 in 1.0..30.0f64) {
        let tm = TemperatureModel::default();
        let expect = (t1 / t2).powi(7);
        prop_assert!((tm.linewidth_ratio(t1, t2) / expect - 1.0).abs() < 1e-9);
        prop_assert!((tm.t2_opt(t2) / tm.t2_opt(t1) / expect - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn scaling_fidelity_grows_with_optical_t2(lo in -10.0..-4.5f64, gap in 0.05..2.0f64) {
        let t2s = [10f64.powf(lo), 10f64.powf((lo + gap).min(-4.0))];
        let ph = Physics::new(LambdaParams::material(), EnsembleSpec::single());
        let pts = scaling_study(&t2s, &ScalingModel::default(), &EchoConfig::default(), &ph).unwrap();
        prop_assert!(pts[1].fidelity >= pts[0].fidelity - 1e-12);
    }

    #[test]
    fn first_beat_minimum_follows_splitting(df in 2e3..20e3f64, short in any::<bool>()) {
        // 2 us pulses delay the minimum by ~1.5 us, which stays within 5%
        // only up to ~16 kHz; 1 us pulses cover the whole range.
        let (pulse, df) = if short { (1e-6, df) } else { (2e-6, df.min(16e3)) };
        let cfg = EchoConfig {
            init_duration: pulse,
            rephase_duration: pulse,
            readout_duration: pulse,
            ..EchoConfig::default()
        };
        let expected = 1.0 / (2.0 * df);
        let ph = Physics::new(LambdaParams::material(), EnsembleSpec::single().with_split(df));
        let taus = linear_taus(4.0 * pulse, 2.0 * expected, 24);
        let curve = assemble_decay_curve(&cfg, &taus, &ph, ReadoutMode::Proxy).unwrap();
        let min = find_beat_minimum(&curve, &cfg, &ph, ReadoutMode::Proxy).unwrap().unwrap();
        prop_assert!((min / expected - 1.0).abs() <= 0.05, "{} kHz: {} us vs {} us", df / 1e3, min * 1e6, expected * 1e6);
    }
}

#[test]
fn threads_do_not_change_results() {
    let spec = EnsembleSpec {
        optical_fwhm: 170e3,
        spin_fwhm: 30e3,
        n_optical: 7,
        n_spin: 7,
        zeeman_branches: Vec::new(),
    };
    let ph = Physics::new(LambdaParams::material(), spec);
    let cfg = EchoConfig::default();
    let taus = linear_taus(10e-6, 100e-6, 4);
    let run = |n| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap();
        pool.install(|| assemble_decay_curve(&cfg, &taus, &ph, ReadoutMode::Beat).unwrap())
    };
    let one: Vec<u64> = run(1).amplitudes.iter().map(|v| v.to_bits()).collect();
    for n in [2, 3, 8] {
        let many: Vec<u64> = run(n).amplitudes.iter().map(|v| v.to_bits()).collect();
        assert_eq!(one, many, "{n} threads");
    }
}

#[test]
fn confidence_interval_shrinks_with_repeats() {
    use rand_distr::{Distribution, Normal};
    let taus = linear_taus(10e-6, 1500e-6, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 1e-3).unwrap();
    let pattern: Vec<f64> = taus.iter().map(|_| noise.sample(&mut rng)).collect();
    let ci = |repeats: f64| {
        let amps = taus
            .iter()
            .zip(&pattern)
            .map(|(t, e)| (-t / 500e-6).exp() + e / repeats.sqrt())
            .collect();
        fit_decay(&DecayCurve::new(taus.clone(), amps).unwrap())
            .unwrap()
            .ci95
    };
    let (c1, c16) = (ci(1.0), ci(16.0));
    for k in 0..3 {
        assert!(
            (c1[k] / c16[k] / 4.0 - 1.0).abs() < 0.01,
            "parameter {k}: {} vs {}",
            c1[k],
            c16[k]
        );
    }
}

#[test]
fn ground_vectors_compose() {
    // sanity check on the helper used above
    let v = Vector3::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    let rho = DensityMatrix3::from_pure(&v).unwrap();
    assert_eq!(bloch(rho.ground_block().matrix()), [0.0, 0.0, 1.0]);
}
