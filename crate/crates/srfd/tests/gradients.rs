mod common;

use common::*;
use seisforge_srfd::*;

fn tape_grads<T: Scalar>(cfg: &SrfdConfig, w: &SrfdWeights<T>, x: &StepInputs, r: &Matrix<f64>) -> Gradients<T> {
    let mut tape = Tape::new();
    forward_with_tape(cfg, w, x, &mut tape).unwrap();
    backward(cfg, w, &tape, &r.cast()).unwrap()
}

#[test]
fn weight_gradients_match_finite_differences_f64() {
    for (seed, per_layer) in [(1, false), (2, true)] {
        let mut cfg = SrfdConfig::tiny();
        cfg.physics_per_layer = per_layer;
        let w = random_weights(&cfg, seed, true);
        let mut rg = rng(seed + 10);
        let x = random_inputs(&cfg, cfg.window, 2, &mut rg);
        let r = random_matrix(cfg.window, cfg.out_channels(), &mut rg);
        let g = tape_grads(&cfg, &w, &x, &r);
        let (err, name) = check_weight_grads(&cfg, &w, &x, &r, &g.weights, 1e-5);
        eprintln!("f64 worst {name}: {err:e}");
        assert!(err < 1e-6, "{name}: relative error {err:e}");
    }
}

#[test]
fn weight_gradients_match_finite_differences_f32() {
    let cfg = SrfdConfig::tiny();
    // the 64-bit reference uses exactly the 32-bit weights
    let w32: SrfdWeights<f32> = random_weights(&cfg, 3, true).cast();
    let w = w32.cast::<f64>();
    let mut rg = rng(13);
    let x = random_inputs(&cfg, cfg.window, 3, &mut rg);
    let r = random_matrix(cfg.window, cfg.out_channels(), &mut rg);
    let g = tape_grads(&cfg, &w32, &x, &r);
    let (err, name) = check_weight_grads(&cfg, &w, &x, &r, &g.weights.cast(), 1e-5);
    eprintln!("f32 worst {name}: {err:e}");
    assert!(err < 1e-3, "{name}: relative error {err:e}");
}

#[test]
fn input_gradients_match_finite_differences() {
    let cfg = SrfdConfig::tiny();
    let w = random_weights(&cfg, 4, false);
    let mut rg = rng(14);
    let x = random_inputs(&cfg, cfg.window, 3, &mut rg);
    let r = random_matrix(cfg.window, cfg.out_channels(), &mut rg);
    let g = tape_grads(&cfg, &w, &x, &r);
    let h = 1e-5;
    let c = cfg.out_channels();

    let mut fd = Vec::new();
    for t in 0..cfg.window {
        for j in 0..cfg.in_dim() {
            let bump = |d: f64| {
                let mut xp = x.clone();
                match j {
                    0 => xp.wave[t] += d,
                    j if j <= c => xp.history[t * c + j - 1] += d,
                    j => xp.sdr[t * c + j - 1 - c] += d,
                }
                objective(&cfg, &w, &xp, &r)
            };
            fd.push((bump(h) - bump(-h)) / (2.0 * h));
        }
    }
    assert!(rel_error(g.features.data(), &fd) < 1e-6);

    for (which, analytic) in [(0, &g.m_vec), (1, &g.k_vec)] {
        let fd: Vec<f64> = (0..cfg.n_max)
            .map(|s| {
                let bump = |d: f64| {
                    let mut xp = x.clone();
                    if which == 0 {
                        xp.m_vec[s] += d;
                    } else {
                        xp.k_vec[s] += d;
                    }
                    objective(&cfg, &w, &xp, &r)
                };
                (bump(h) - bump(-h)) / (2.0 * h)
            })
            .collect();
        assert!(rel_error(analytic, &fd) < 1e-6, "{analytic:?} vs {fd:?}");
    }
}

#[test]
fn zero_output_gradient_gives_zero_gradients() {
    let cfg = SrfdConfig::tiny();
    let w = random_weights(&cfg, 5, true);
    let x = random_inputs(&cfg, cfg.window, 2, &mut rng(15));
    let r = Matrix::zeros(cfg.window, cfg.out_channels());
    let g = tape_grads(&cfg, &w, &x, &r);
    assert!(g
        .weights
        .params()
        .iter()
        .all(|p| p.value.data().iter().all(|v| *v == 0.0)));
    assert!(g.features.data().iter().all(|v| *v == 0.0));
}

#[test]
fn padded_story_columns_get_no_gradient() {
    let cfg = SrfdConfig::tiny();
    let w = random_weights(&cfg, 6, false);
    let mut rg = rng(16);
    let x = random_inputs(&cfg, cfg.window, 1, &mut rg);
    let r = random_matrix(cfg.window, cfg.out_channels(), &mut rg);
    let g = tape_grads(&cfg, &w, &x, &r);
    let p = &g.weights.physics[0];
    for u in [&p.u_m, &p.u_k] {
        assert!((0..u.rows()).any(|a| u.get(a, 0) != 0.0));
        for s in 1..cfg.n_max {
            for a in 0..u.rows() {
                assert_eq!(u.get(a, s), 0.0);
            }
        }
    }
    assert_eq!(&g.m_vec[1..], &[0.0, 0.0]);
    assert_eq!(&g.k_vec[1..], &[0.0, 0.0]);
}
