mod common;

use common::*;
use nalgebra::{Cholesky, DMatrix};
use proptest::prelude::*;
use rand::Rng;
use seisforge_srfd::attention::*;
use seisforge_srfd::ops::{rms_norm, rope};
use seisforge_srfd::*;

fn physics_weights(d: usize, dh: usize, n_max: usize, seed: u64) -> PhysicsWeights<f64> {
    let mut r = rng(seed);
    let mut lin = || Linear::new(random_matrix(d, d, &mut r), None);
    let (wq, wk, wq2, wk2, wv, wo) = (lin(), lin(), lin(), lin(), lin(), lin());
    let mut r = rng(seed + 1);
    PhysicsWeights {
        norm: Matrix::from_vec(1, d, vec![1.0; d]),
        wq,
        wk,
        wq2,
        wk2,
        wv,
        wo,
        u_m: random_matrix(dh, n_max, &mut r),
        u_k: random_matrix(dh, n_max, &mut r),
    }
}

fn gqa_weights(d: usize, dkv: usize, seed: u64) -> GqaWeights<f64> {
    let mut r = rng(seed);
    GqaWeights {
        wq: Linear::new(random_matrix(d, d, &mut r), None),
        wk: Linear::new(random_matrix(dkv, d, &mut r), None),
        wv: Linear::new(random_matrix(dkv, d, &mut r), None),
        wo: Linear::new(random_matrix(d, d, &mut r), None),
    }
}

#[test]
fn outputs_never_depend_on_later_inputs() {
    for case in 0..10u64 {
        let mut cfg = SrfdConfig::tiny();
        cfg.physics_per_layer = case % 2 == 1;
        cfg.n_layers = 1 + (case as usize % 2);
        let w = random_weights(&cfg, 100 + case, case % 3 == 0);
        let mut rg = rng(200 + case);
        let x = random_inputs(&cfg, cfg.window, 1 + case as usize % 3, &mut rg);
        let y = forward(&cfg, &w, &x).unwrap();
        let t0 = rg.random_range(1..cfg.window);
        let mut xp = x.clone();
        let c = cfg.out_channels();
        xp.wave[t0] += 3.0;
        for j in 0..c {
            xp.history[t0 * c + j] -= 1.0;
            xp.sdr[t0 * c + j] += 0.5;
        }
        let yp = forward(&cfg, &w, &xp).unwrap();
        for t in 0..t0 {
            assert_eq!(y.row(t), yp.row(t), "case {case}, t0 {t0}, row {t}");
        }
        assert_ne!(y.row(t0), yp.row(t0));
    }
}

#[test]
fn forward_is_deterministic_and_shaped() {
    let cfg = SrfdConfig::tiny();
    let w = random_weights(&cfg, 7, false).cast::<f32>();
    let x = random_inputs(&cfg, cfg.window, 3, &mut rng(8));
    let a = forward(&cfg, &w, &x).unwrap();
    let b = forward(&cfg, &w, &x).unwrap();
    assert_eq!(a.shape(), (cfg.window, cfg.out_channels()));
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn masked_story_channels_are_zero() {
    let cfg = SrfdConfig::tiny();
    let w = random_weights(&cfg, 9, false);
    let x = random_inputs(&cfg, cfg.window, 1, &mut rng(10));
    let y = forward(&cfg, &w, &x).unwrap();
    for t in 0..cfg.window {
        for q in 0..N_QUANTITIES {
            assert_ne!(y.get(t, cfg.channel(q, 0)), 0.0);
            for s in 1..cfg.n_max {
                assert_eq!(y.get(t, cfg.channel(q, s)), 0.0);
            }
        }
    }
}

#[test]
fn shape_mismatch_is_config_error() {
    let cfg = SrfdConfig::tiny();
    let w = random_weights(&cfg, 1, false);
    let mut x = random_inputs(&cfg, cfg.window, 2, &mut rng(1));
    x.m_vec.pop();
    assert!(matches!(forward(&cfg, &w, &x), Err(Error::Config(_))));
    let x = random_inputs(&cfg, cfg.window + 1, 2, &mut rng(1));
    assert!(matches!(forward(&cfg, &w, &x), Err(Error::Config(_))));
}

#[test]
fn softmax_rows_sum_to_one_in_both_attentions() {
    for seed in 0..20 {
        let mut rg = rng(seed);
        let (d, dh, n_max, n) = (8, 4, 3, 8);
        let x = random_matrix(n, d, &mut rg).scale(3.0).cast::<f32>();
        let pw = physics_weights(d, dh, n_max, seed).cast::<f32>();
        let m: Vec<f64> = (0..n_max).map(|_| rg.random_range(0.0..2.0)).collect();
        let k: Vec<f64> = (0..n_max).map(|_| rg.random_range(0.0..2.0)).collect();
        let (_, pc) = physics_forward(&x, &pw, 2, &m, &k, &[true; 3]).unwrap();
        let layout = HeadLayout {
            n_heads: 2,
            n_kv_groups: 1,
            d_head: 4,
        };
        let gw = gqa_weights(d, 4, seed).cast::<f32>();
        let (_, gc) = gqa_forward(&x, &gw, &layout, 10_000.0).unwrap();
        for p in pc.p_m.iter().chain(&pc.p_k).chain(&gc.probs) {
            for i in 0..p.rows() {
                let s: f64 = p.row(i).iter().map(|v| *v as f64).sum();
                assert!((s - 1.0).abs() < 1e-5, "row {i} sums to {s}");
                assert!(p.row(i)[i + 1..].iter().all(|v| *v == 0.0));
            }
        }
    }
}

fn vanilla_mha(x: &Matrix<f64>, w: &GqaWeights<f64>, n_heads: usize, base: f64) -> Matrix<f64> {
    let d = x.cols();
    let dh = d / n_heads;
    let pos: Vec<usize> = (0..x.rows()).collect();
    let q = x.matmul_nt(&w.wq.weight);
    let k = x.matmul_nt(&w.wk.weight);
    let v = x.matmul_nt(&w.wv.weight);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = Matrix::zeros(x.rows(), d);
    for h in 0..n_heads {
        let qh = rope(&q.col_block(h * dh, dh), &pos, base).unwrap();
        let kh = rope(&k.col_block(h * dh, dh), &pos, base).unwrap();
        let p = ops::softmax_rows(&qh.matmul_nt(&kh).scale(scale), true);
        ctx.set_col_block(h * dh, &p.matmul(&v.col_block(h * dh, dh)));
    }
    ctx.matmul_nt(&w.wo.weight)
}

#[test]
fn gqa_with_one_head_per_group_is_multi_head_attention() {
    for seed in 0..5 {
        let layout = HeadLayout {
            n_heads: 4,
            n_kv_groups: 4,
            d_head: 2,
        };
        let w = gqa_weights(8, 8, seed);
        let x = random_matrix(6, 8, &mut rng(seed + 50));
        let (y, _) = gqa_forward(&x, &w, &layout, 10_000.0).unwrap();
        let reference = vanilla_mha(&x, &w, 4, 10_000.0);
        let bits = |m: &Matrix<f64>| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&y), bits(&reference));
    }
}

#[test]
fn single_token_attention_returns_the_value() {
    let layout = HeadLayout {
        n_heads: 2,
        n_kv_groups: 2,
        d_head: 4,
    };
    let w = gqa_weights(8, 8, 3);
    let x = random_matrix(1, 8, &mut rng(4));
    let (y, _) = gqa_forward(&x, &w, &layout, 10_000.0).unwrap();
    assert_eq!(y, w.wo.apply(&w.wv.apply(&x)));
}

#[test]
fn identical_branches_double_the_mass_attention() {
    let mut w = physics_weights(8, 4, 3, 11);
    w.wq2 = w.wq.clone();
    w.wk2 = w.wk.clone();
    w.u_k = w.u_m.clone();
    let x = random_matrix(6, 8, &mut rng(12));
    let m = [0.3, 0.5, 0.2];
    let (_, c) = physics_forward(&x, &w, 2, &m, &m, &[true; 3]).unwrap();
    for (pm, pk) in c.p_m.iter().zip(&c.p_k) {
        assert_eq!(pm.add(pk), pm.scale(2.0));
    }
}

#[test]
fn zero_input_gives_uniform_attention_and_zero_output() {
    let w = physics_weights(8, 4, 3, 13);
    let x = Matrix::<f64>::zeros(5, 8);
    let (y, c) = physics_forward(&x, &w, 2, &[0.2, 0.3, 0.5], &[1.0, 0.4, 0.1], &[true; 3]).unwrap();
    assert!(y.data().iter().all(|v| *v == 0.0));
    for p in c.p_m.iter().chain(&c.p_k) {
        for i in 0..5 {
            for j in 0..=i {
                assert_eq!(p.get(i, j), 1.0 / (i + 1) as f64);
            }
        }
    }
}

#[test]
fn story_order_matters() {
    let w = physics_weights(8, 4, 3, 17);
    let x = random_matrix(6, 8, &mut rng(18));
    let (m, k) = ([0.5, 0.3, 0.2], [1.0, 0.6, 0.3]);
    let (a, _) = physics_forward(&x, &w, 2, &m, &k, &[true; 3]).unwrap();
    let (b, _) = physics_forward(&x, &w, 2, &[0.2, 0.3, 0.5], &[0.3, 0.6, 1.0], &[true; 3]).unwrap();
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    assert!(diff > 1e-6, "physics attention ignores story order");
}

#[test]
fn zero_adapters_leave_the_model_bitwise_unchanged() {
    let cfg = SrfdConfig::tiny();
    let base = SrfdWeights::<f32>::init(&cfg, 21).unwrap();
    let mut adapted = base.clone();
    adapted.attach_lora(2, 8.0, 22).unwrap();
    let x = random_inputs(&cfg, cfg.window, 3, &mut rng(23));
    let (a, b) = (forward(&cfg, &base, &x).unwrap(), forward(&cfg, &adapted, &x).unwrap());
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn rotary_embedding_properties() {
    let mut rg = rng(31);
    let x = random_matrix(5, 8, &mut rg);
    let pos = [0, 1, 2, 7, 100];
    let y = rope(&x, &pos, 10_000.0).unwrap();
    assert_eq!(y.row(0), x.row(0));
    for t in 0..5 {
        for i in 0..4 {
            let n0 = x.get(t, 2 * i).hypot(x.get(t, 2 * i + 1));
            let n1 = y.get(t, 2 * i).hypot(y.get(t, 2 * i + 1));
            assert!((n0 - n1).abs() < 1e-6);
        }
    }
    // <R(p) q, R(p') k> depends only on p - p'
    let q = random_matrix(1, 8, &mut rg);
    let k = random_matrix(1, 8, &mut rg);
    let dot = |p: usize, pk: usize| {
        let a = rope(&q, &[p], 10_000.0).unwrap();
        let b = rope(&k, &[pk], 10_000.0).unwrap();
        a.data().iter().zip(b.data()).map(|(u, v)| u * v).sum::<f64>()
    };
    for offset in [1, 3, 10] {
        let reference = dot(offset, 0);
        for shift in [5, 17, 40] {
            assert!((dot(offset + shift, shift) - reference).abs() < 1e-9);
        }
    }
}

#[test]
fn checkpoint_bytes_round_trip() {
    let cfg = SrfdConfig::tiny();
    let w = random_weights(&cfg, 41, false).cast::<f32>();
    let mut extra = toml::Table::new();
    extra.insert("wave_std".into(), toml::Value::Float(0.123));
    let ck = Checkpoint::new(cfg, w, extra).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.sgpt");
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ck);
    assert_eq!(loaded.to_bytes().unwrap(), ck.to_bytes().unwrap());
    assert!(matches!(
        Checkpoint::load(dir.path().join("missing")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn adapter_file_round_trip() {
    let cfg = SrfdConfig::tiny();
    let base = Checkpoint::new(cfg.clone(), SrfdWeights::init(&cfg, 42).unwrap(), toml::Table::new()).unwrap();
    let mut w = base.weights.clone();
    w.attach_lora(3, 6.0, 43).unwrap();
    for p in w.params_mut() {
        if p.kind == ParamKind::Adapter {
            p.value.fill(0.25);
        }
    }
    let ad = AdapterCheckpoint::from_weights(&base, &w, 3, 6.0, toml::Table::new()).unwrap();
    let back = AdapterCheckpoint::from_bytes(&ad.to_bytes().unwrap()).unwrap();
    assert_eq!(back, ad);
    assert_eq!(back.apply(&base).unwrap(), w);
}

fn cholesky_ok(b: &Matrix<f64>) -> bool {
    let n = b.rows();
    Cholesky::new(DMatrix::from_fn(n, n, |i, j| b.get(i, j))).is_some()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn story_kernels_are_symmetric_psd(seed in 0u64..10_000, n_max in 4usize..9) {
        let mut rg = rng(seed);
        let u = random_matrix(4, n_max, &mut rg);
        let s: Vec<f64> = (0..n_max).map(|_| rg.random_range(0.05..2.0)).collect();
        let b = story_kernel(&u, &s);
        prop_assert_eq!(&b, &b.transpose());
        // positive story vectors with n_max ≥ d_head give a full-rank kernel
        prop_assert!(cholesky_ok(&b));
        // with padded (zero) entries the kernel stays PSD
        let mut padded = s.clone();
        padded[0] = 0.0;
        let b = story_kernel(&u, &padded);
        let mut shifted = b.clone();
        for i in 0..4 {
            shifted.set(i, i, b.get(i, i) + 1e-9);
        }
        prop_assert!(cholesky_ok(&shifted));
    }

    #[test]
    fn rms_norm_has_unit_rms(v in prop::collection::vec(-100.0f64..100.0, 1..32)) {
        prop_assume!(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64 > 1e-2);
        let d = v.len();
        let (y, _) = rms_norm(&Matrix::from_vec(1, d, v), &vec![1.0; d]);
        let rms = (y.data().iter().map(|x| x * x).sum::<f64>() / d as f64).sqrt();
        prop_assert!((rms - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lora_zero_b_is_identity(seed in 0u64..1000, r in 1usize..4) {
        let mut rg = rng(seed);
        let base = random_matrix(5, 6, &mut rg);
        let a = random_matrix(r, 6, &mut rg);
        let eff = lora_apply(&base, &a, &Matrix::zeros(5, r), 2.0, r).unwrap();
        prop_assert_eq!(eff, base);
    }
}
