use rand_distr::{Distribution, StandardNormal};
use seisforge_core::dynamics::{simulate, IntegratorParams, ResponseHistory};
use seisforge_core::ground_motion::{synth_record, GroundMotion, SynthSpec};
use seisforge_core::rng;
use seisforge_core::structure::LumpedMassModel;
use seisforge_core::sysid::*;

const TRUE_K: [f64; 3] = [3.0e8, 2.4e8, 1.8e8];
const MASSES: [f64; 3] = [2.0e5, 2.0e5, 1.6e5];

fn excitation() -> GroundMotion {
    let spec = SynthSpec {
        duration: 8.0,
        f_lo: 0.5,
        f_hi: 12.0,
        rise: 0.5,
        plateau: 4.0,
        decay: 2.0,
        target_pga: 3.0,
        seed: 21,
    };
    synth_record(&spec, 0.01).unwrap()
}

fn reference(gm: &GroundMotion) -> ResponseHistory {
    let model = LumpedMassModel::linear(MASSES.to_vec(), TRUE_K.to_vec()).unwrap();
    simulate(&model, gm, &IntegratorParams::average_acceleration(gm.dt())).unwrap()
}

fn with_noise(h: &ResponseHistory, level: f64, seed: u64) -> ResponseHistory {
    let mut r = rng::seeded(seed);
    let n = h.n_steps();
    let mut u = h.u().to_vec();
    for s in 0..h.n_stories() {
        let rms = (u[s * n..(s + 1) * n].iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        for v in &mut u[s * n..(s + 1) * n] {
            let z: f64 = StandardNormal.sample(&mut r);
            *v += level * rms * z;
        }
    }
    ResponseHistory::from_parts(h.dt(), h.n_stories(), n, u, h.v().to_vec(), h.a().to_vec()).unwrap()
}

fn rel_err(k: &[f64]) -> f64 {
    k.iter()
        .zip(TRUE_K)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn gauss_newton_recovers_from_half_stiffness() {
    let gm = excitation();
    let guess: Vec<f64> = TRUE_K.iter().map(|k| 0.5 * k).collect();
    let p = IdentificationProblem::new(MASSES.to_vec(), reference(&gm), gm, guess);
    let res = identify_stiffness(&p, IdentificationMethod::GaussNewton).unwrap();
    assert!(rel_err(&res.stiffness) < 0.01, "{:?}", res.stiffness);
    assert!(res.objective < 1e-10, "objective {}", res.objective);
}

#[test]
fn fixed_point_returns_the_guess() {
    let gm = excitation();
    let p = IdentificationProblem::new(MASSES.to_vec(), reference(&gm), gm, TRUE_K.to_vec());
    let res = identify_stiffness(&p, IdentificationMethod::GaussNewton).unwrap();
    assert!(rel_err(&res.stiffness) < 1e-6);
    assert!(res.objective < 1e-20);
}

#[test]
fn noisy_reference_within_five_percent() {
    let gm = excitation();
    let guess: Vec<f64> = TRUE_K.iter().map(|k| 0.7 * k).collect();
    let noisy = with_noise(&reference(&gm), 0.01, 5);
    let p = IdentificationProblem::new(MASSES.to_vec(), noisy, gm, guess);
    let res = identify_stiffness(&p, IdentificationMethod::GaussNewton).unwrap();
    assert!(rel_err(&res.stiffness) < 0.05, "{:?}", res.stiffness);
}

#[test]
fn evolution_strategy_then_polish() {
    let gm = excitation();
    let guess: Vec<f64> = TRUE_K.iter().map(|k| 0.5 * k).collect();
    let p = IdentificationProblem::new(MASSES.to_vec(), reference(&gm), gm, guess);
    let settings = EsSettings {
        generations: 10,
        seed: 3,
        ..EsSettings::default()
    };
    let res = identify_stiffness(&p, IdentificationMethod::Evolutionary(settings)).unwrap();
    assert!(rel_err(&res.stiffness) < 0.01, "{:?}", res.stiffness);
    for (k, (lo, hi)) in res.stiffness.iter().zip(&p.bounds) {
        assert!(k >= lo && k <= hi);
    }
}

#[test]
fn objective_never_worse_than_guess() {
    let gm = excitation();
    let reference = reference(&gm);
    // a poor guess far from the truth
    let guess: Vec<f64> = TRUE_K.iter().map(|k| 6.0 * k).collect();
    let p = IdentificationProblem::new(MASSES.to_vec(), reference, gm.clone(), guess.clone());
    let res = identify_stiffness(&p, IdentificationMethod::GaussNewton).unwrap();
    let guess_model = LumpedMassModel::linear(MASSES.to_vec(), guess).unwrap();
    let sim = simulate(&guess_model, &gm, &IntegratorParams::average_acceleration(0.01)).unwrap();
    let num: f64 = sim.u().iter().zip(p.reference.u()).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = p.reference.u().iter().map(|b| b * b).sum();
    assert!(res.objective <= num / den);
}

#[test]
fn empty_reference_is_config_error() {
    let gm = excitation();
    let empty = ResponseHistory::zeros(3, 0, 0.01);
    let p = IdentificationProblem::new(MASSES.to_vec(), empty, gm, TRUE_K.to_vec());
    assert!(matches!(
        identify_stiffness(&p, IdentificationMethod::GaussNewton),
        Err(seisforge_core::Error::Config(_))
    ));
}
