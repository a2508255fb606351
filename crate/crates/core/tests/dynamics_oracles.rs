use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use seisforge_core::dynamics::*;
use seisforge_core::ground_motion::{synth_record, GroundMotion, MotionSource, SynthSpec};
use seisforge_core::structure::{assemble_matrices, LumpedMassModel, SymTridiag};

fn zero_c(n: usize) -> SymTridiag {
    SymTridiag {
        diag: vec![0.0; n],
        off: vec![0.0; n.saturating_sub(1)],
    }
}

fn linear_springs(k: &[f64]) -> StorySprings {
    StorySprings::new(k.iter().map(|&k| StorySpringLaw::linear(k)).collect()).unwrap()
}

fn three_story() -> LumpedMassModel {
    LumpedMassModel::linear(vec![2.0e5, 1.8e5, 1.5e5], vec![3.0e8, 2.5e8, 2.0e8]).unwrap()
}

fn motion(seed: u64, pga: f64, dt: f64, duration: f64) -> GroundMotion {
    let spec = SynthSpec {
        duration,
        f_lo: 0.5,
        f_hi: 10.0,
        rise: duration * 0.1,
        plateau: duration * 0.4,
        decay: duration * 0.3,
        target_pga: pga,
        seed,
    };
    synth_record(&spec, dt).unwrap()
}

#[test]
fn zero_state_zero_load_stays_zero() {
    let s = NewmarkState::zeros(3);
    let mut springs = linear_springs(&[1.0, 2.0, 3.0]);
    let p = IntegratorParams::average_acceleration(0.01);
    let out = newmark_step(&s, &[1.0; 3], &zero_c(3), &mut springs, &[0.0; 3], &p).unwrap();
    assert_eq!(out, s);
}

#[test]
fn undamped_sdof_free_vibration_tracks_cosine() {
    let k = 4.0 * PI * PI;
    let dt = 1.0 / 200.0;
    let p = IntegratorParams::average_acceleration(dt);
    let mut springs = linear_springs(&[k]);
    let mut s = NewmarkState {
        u: vec![1.0],
        v: vec![0.0],
        a: vec![-k],
    };
    let mut max_err = 0.0f64;
    let mut cycle_peak = 0.0f64;
    for step in 1..=2000 {
        s = newmark_step(&s, &[1.0], &zero_c(1), &mut springs, &[0.0], &p).unwrap();
        let exact = (2.0 * PI * step as f64 * dt).cos();
        max_err = max_err.max((s.u[0] - exact).abs());
        cycle_peak = cycle_peak.max(s.u[0]);
        if step % 200 == 100 {
            // peaks of each cycle keep the unit amplitude
            assert!((cycle_peak - 1.0).abs() < 0.005, "cycle peak {cycle_peak}");
            cycle_peak = 0.0;
        }
    }
    // pointwise error is the accumulated period elongation (ω·dt)²/12 per radian
    let wdt = 2.0 * PI * dt;
    let phase_bound = 2.0 * PI * 10.0 * wdt * wdt / 12.0;
    assert!(max_err < phase_bound * 1.05, "{max_err} vs {phase_bound}");
}

#[test]
fn constant_load_settles_to_static_solution() {
    let model = LumpedMassModel::linear(vec![1.0, 1.5, 0.8], vec![100.0, 80.0, 60.0])
        .unwrap()
        .with_damping(0.19)
        .unwrap();
    let (m, k) = assemble_matrices(&model);
    let c = damping_matrix(&model, &k).unwrap();
    let g = [3.0, -1.0, 2.0];
    let p = IntegratorParams::average_acceleration(0.01);
    let mut springs = linear_springs(&model.story_stiffness);
    let mut s = NewmarkState::zeros(3);
    s.a = g.iter().zip(&m).map(|(g, m)| g / m).collect();
    for _ in 0..40_000 {
        s = newmark_step(&s, &m, &c, &mut springs, &g, &p).unwrap();
    }
    let kd = k.to_dense();
    let km = DMatrix::from_fn(3, 3, |i, j| kd[i][j]);
    let u_static = km.lu().solve(&DVector::from_column_slice(&g)).unwrap();
    for i in 0..3 {
        let rel = (s.u[i] - u_static[i]).abs() / u_static.amax();
        assert!(rel < 1e-8, "story {i}: {} vs {}", s.u[i], u_static[i]);
    }
}

#[test]
fn harmonic_steady_state_matches_transmissibility() {
    let omega = 2.0 * PI;
    let zeta = 0.05;
    let model = LumpedMassModel::linear(vec![1.0], vec![omega * omega])
        .unwrap()
        .with_damping(zeta)
        .unwrap();
    let r = 0.5;
    let big_omega = r * omega;
    let dt = 0.002;
    let n = (80.0 / dt) as usize + 1;
    let amp = 1.0;
    let samples = (0..n).map(|i| amp * (big_omega * i as f64 * dt).sin()).collect();
    let gm = GroundMotion::new("harmonic", dt, samples, MotionSource::Synthetic).unwrap();
    let hist = simulate(&model, &gm, &IntegratorParams::average_acceleration(dt)).unwrap();
    let steady = &hist.story(Quantity::Displacement, 0)[n - (10.0 / dt) as usize..];
    let measured = steady.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let expected = amp / (omega * omega) / ((1.0 - r * r).powi(2) + (2.0 * zeta * r).powi(2)).sqrt();
    assert!(
        ((measured - expected) / expected).abs() < 0.01,
        "{measured} vs {expected}"
    );
}

#[test]
fn zero_motion_gives_zero_response() {
    let gm = GroundMotion::zeros("z", 0.01, 500).unwrap();
    let p = IntegratorParams::average_acceleration(0.01);
    for model in [three_story(), three_story().with_bilinear(0.1, 0.01).unwrap()] {
        let h = simulate(&model, &gm, &p).unwrap();
        assert!(h.u().iter().chain(h.v()).chain(h.a()).all(|x| *x == 0.0));
        let s = sdr_response(&model, &gm, &p).unwrap();
        assert!(s.u().iter().all(|x| *x == 0.0));
    }
}

#[test]
fn undamped_energy_is_conserved() {
    let model = three_story();
    let (m, k) = assemble_matrices(&model);
    let p = IntegratorParams::average_acceleration(0.005);
    let mut springs = linear_springs(&model.story_stiffness);
    let mut s = NewmarkState {
        u: vec![0.01, 0.02, 0.025],
        v: vec![0.0, 0.1, -0.2],
        a: vec![0.0; 3],
    };
    let mut ku = vec![0.0; 3];
    k.mul_vec(&s.u, &mut ku);
    s.a = ku.iter().zip(&m).map(|(f, m)| -f / m).collect();
    let energy = |s: &NewmarkState| {
        let mut ku = vec![0.0; 3];
        k.mul_vec(&s.u, &mut ku);
        (0..3)
            .map(|i| 0.5 * m[i] * s.v[i] * s.v[i] + 0.5 * s.u[i] * ku[i])
            .sum::<f64>()
    };
    let e0 = energy(&s);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        s = newmark_step(&s, &m, &zero_c(3), &mut springs, &[0.0; 3], &p).unwrap();
        worst = worst.max(((energy(&s) - e0) / e0).abs());
    }
    assert!(worst < 1e-6, "relative energy drift {worst}");
}

#[test]
fn equation_of_motion_residual_is_small() {
    let model = three_story();
    let (m, k) = assemble_matrices(&model);
    let c = damping_matrix(&model, &k).unwrap();
    let gm = motion(3, 3.0, 0.01, 10.0);
    let p = IntegratorParams::average_acceleration(0.01);
    let mut springs = linear_springs(&model.story_stiffness);
    let mut s = NewmarkState::zeros(3);
    s.a = vec![-gm.samples()[0]; 3];
    let (mut cv, mut ku) = (vec![0.0; 3], vec![0.0; 3]);
    for &ag in &gm.samples()[1..] {
        let g: Vec<f64> = m.iter().map(|m| -m * ag).collect();
        s = newmark_step(&s, &m, &c, &mut springs, &g, &p).unwrap();
        c.mul_vec(&s.v, &mut cv);
        k.mul_vec(&s.u, &mut ku);
        let g_norm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let res = (0..3)
            .map(|i| (m[i] * s.a[i] + cv[i] + ku[i] - g[i]).abs())
            .fold(0.0, f64::max);
        assert!(res < 1e-8 * (1.0 + g_norm), "residual {res}");
    }
}

#[test]
fn linear_response_is_homogeneous() {
    let model = three_story();
    let gm = motion(5, 2.0, 0.01, 8.0);
    let p = IntegratorParams::average_acceleration(0.01);
    let base = simulate(&model, &gm, &p).unwrap();
    for c in [-3.0, 0.5, 7.25] {
        let scaled_gm = GroundMotion::new(
            "c",
            gm.dt(),
            gm.samples().iter().map(|v| v * c).collect(),
            MotionSource::Synthetic,
        )
        .unwrap();
        let h = simulate(&model, &scaled_gm, &p).unwrap();
        let n = h.n_steps();
        let rel_accel = |h: &ResponseHistory, scale: f64| -> Vec<f64> {
            (0..h.a().len())
                .map(|i| h.a()[i] - scale * gm.samples()[i % n])
                .collect()
        };
        let pairs = [
            (base.u().to_vec(), h.u().to_vec()),
            (base.v().to_vec(), h.v().to_vec()),
            (rel_accel(&base, 1.0), rel_accel(&h, c)),
        ];
        for (b, s) in pairs {
            let peak = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in b.iter().zip(&s) {
                assert!((c * x - y).abs() <= 1e-10 * peak * c.abs());
            }
        }
    }
}

#[test]
fn bilinear_with_infinite_yield_is_bitwise_linear() {
    let model = three_story();
    let gm = motion(8, 4.0, 0.01, 10.0);
    let p = IntegratorParams::average_acceleration(0.01);
    let lin = simulate(&model, &gm, &p).unwrap();
    let inf = simulate(&model.clone().with_bilinear(0.1, f64::INFINITY).unwrap(), &gm, &p).unwrap();
    assert_eq!(lin, inf);
}

#[test]
fn newton_path_agrees_with_linear_path_below_yield() {
    let model = three_story();
    let gm = motion(8, 1.0, 0.01, 10.0);
    let p = IntegratorParams::average_acceleration(0.01);
    let lin = simulate(&model, &gm, &p).unwrap();
    let never = simulate(&model.clone().with_bilinear(0.1, 10.0).unwrap(), &gm, &p).unwrap();
    let peak = lin.u().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in lin.u().iter().zip(never.u()) {
        assert!((a - b).abs() <= 1e-7 * peak);
    }
}

#[test]
fn yielding_oracle_departs_from_simplified_response() {
    let model = three_story().with_bilinear(0.05, 0.002).unwrap();
    let gm = motion(11, 5.0, 0.01, 12.0);
    let p = IntegratorParams::average_acceleration(0.01);
    let oracle = simulate(&model, &gm, &p).unwrap();
    let sdr = sdr_response(&model, &gm, &p).unwrap();
    let var: f64 = oracle.u().iter().map(|u| u * u).sum();
    let mse: f64 = oracle.u().iter().zip(sdr.u()).map(|(a, b)| (a - b).powi(2)).sum();
    assert!(mse / var > 0.0);
}

#[test]
fn sdr_of_linear_model_is_simulate() {
    let model = three_story();
    let gm = motion(2, 2.0, 0.01, 6.0);
    let p = IntegratorParams::average_acceleration(0.01);
    assert_eq!(
        sdr_response(&model, &gm, &p).unwrap(),
        simulate(&model, &gm, &p).unwrap()
    );
}

#[test]
fn mismatched_dt_is_rejected() {
    let gm = motion(2, 2.0, 0.01, 6.0);
    let p = IntegratorParams::average_acceleration(0.02);
    assert!(simulate(&three_story(), &gm, &p).is_err());
}

#[test]
fn drift_telescopes_to_roof_displacement() {
    let model = three_story();
    let gm = motion(4, 3.0, 0.01, 6.0);
    let h = simulate(&model, &gm, &IntegratorParams::average_acceleration(0.01)).unwrap();
    let fh = 3.2;
    let d = interstory_drift(&h, fh);
    let n = h.n_steps();
    for t in 0..n {
        let sum: f64 = (0..3).map(|s| d[s * n + t] * fh).sum();
        assert!((sum - h.u()[2 * n + t]).abs() < 1e-12);
    }
}

#[test]
fn sfrh_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let h = simulate(
        &three_story(),
        &motion(1, 1.0, 0.01, 3.0),
        &IntegratorParams::average_acceleration(0.01),
    )
    .unwrap();
    let path = dir.path().join("r.sfrh");
    h.write_sfrh(&path).unwrap();
    let back = ResponseHistory::read_sfrh(&path).unwrap();
    assert_eq!(back.n_stories(), 3);
    assert_eq!(back.n_steps(), h.n_steps());
    assert_eq!(back.dt(), h.dt());
    for (a, b) in back.a().iter().zip(h.a()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bilinear_cycle_dissipates(
        k in 1.0f64..1e6,
        r in 0.0f64..0.9,
        uy in 1e-4f64..0.1,
        amp_factor in 1.2f64..6.0,
        cycles in 1usize..4,
    ) {
        let law = StorySpringLaw::bilinear(k, r, uy);
        let amp = amp_factor * uy;
        let steps = 400;
        let mut plastic = 0.0;
        let mut prev = (0.0, 0.0);
        let mut work_on_spring = 0.0;
        for _ in 0..cycles {
            for i in 1..=steps {
                let drift = amp * (2.0 * PI * i as f64 / steps as f64).sin();
                let (f, _, p) = law.respond(drift, plastic);
                plastic = p;
                work_on_spring += 0.5 * (f + prev.1) * (drift - prev.0);
                prev = (drift, f);
            }
        }
        // the spring does negative work on the mass over closed cycles
        prop_assert!(-work_on_spring < 0.0);
    }
}
