use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use seisforge_core::structure::*;

fn dense_generalized_eigs(m: &[f64], k: &SymTridiag) -> Vec<f64> {
    // L⁻¹ K L⁻ᵀ with a general dense symmetric solver
    let n = m.len();
    let kd = k.to_dense();
    let a = DMatrix::from_fn(n, n, |i, j| kd[i][j] / (m[i] * m[j]).sqrt());
    let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Roots of det(K − λM) for n ≤ 3 from the characteristic polynomial.
fn charpoly_eigs(m: &[f64], k: &[f64]) -> Vec<f64> {
    match m.len() {
        1 => vec![k[0] / m[0]],
        2 => {
            // m1 m2 λ² − (m1 k22 + m2 k11) λ + (k11 k22 − k12²)
            let (k11, k22, k12) = (k[0] + k[1], k[1], -k[1]);
            let a = m[0] * m[1];
            let b = -(m[0] * k22 + m[1] * k11);
            let c = k11 * k22 - k12 * k12;
            let disc = (b * b - 4.0 * a * c).sqrt();
            // stable pair of roots
            let q = -0.5 * (b - disc);
            let mut r = vec![c / q, q / a];
            r.sort_by(f64::total_cmp);
            r
        }
        3 => {
            let kd = SymTridiag::shear_building(k).to_dense();
            let det = |l: f64| {
                let a = |i: usize, j: usize| kd[i][j] - if i == j { l * m[i] } else { 0.0 };
                a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                    + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
            };
            // Gershgorin-style bracket on M⁻¹K, then bisect every sign change
            let hi = (0..3)
                .map(|i| (0..3).map(|j| kd[i][j].abs()).sum::<f64>() / m[i])
                .fold(0.0, f64::max)
                * 1.01;
            let grid = 20_000;
            let mut roots = Vec::new();
            let mut prev = (0.0, det(0.0));
            for s in 1..=grid {
                let x = hi * s as f64 / grid as f64;
                let fx = det(x);
                if prev.1 == 0.0 || prev.1.signum() != fx.signum() {
                    let (mut lo, mut up) = (prev.0, x);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + up);
                        if det(mid).signum() == det(lo).signum() {
                            lo = mid;
                        } else {
                            up = mid;
                        }
                    }
                    roots.push(0.5 * (lo + up));
                }
                prev = (x, fx);
            }
            roots
        }
        _ => unreachable!(),
    }
}

fn model_strategy(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0.5f64..5.0, n),
            prop::collection::vec(0.5f64..50.0, n),
        )
    })
}

#[test]
fn periods_scalar_case_matches_closed_form() {
    for (m, k) in [(1.0, 4.0 * PI * PI), (3.0e5, 2.0e8), (2.0, 5.0)] {
        let s = fundamental_periods(&[m], &SymTridiag::shear_building(&[k])).unwrap();
        let t = 2.0 * PI * (m / k).sqrt();
        assert!((s.t1 - t).abs() <= 1e-14 * t);
    }
}

#[test]
fn stiffness_times_four_halves_period() {
    let m = LumpedMassModel::linear(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
    let m4 = LumpedMassModel::linear(vec![1.0, 1.0], vec![4.0, 4.0]).unwrap();
    let (a, b) = (model_periods(&m).unwrap(), model_periods(&m4).unwrap());
    assert!((b.t1 - a.t1 / 2.0).abs() < 1e-12);
    for (wa, wb) in a.omega.iter().zip(&b.omega) {
        assert!((wb - 2.0 * wa).abs() < 1e-12);
    }
}

#[test]
fn period_scaling_example() {
    let pi2 = PI * PI;
    // T1 = 2 s single story
    let m = LumpedMassModel::linear(vec![1.0], vec![pi2]).unwrap();
    let s = stiffness_scale_factor(1.0, model_periods(&m).unwrap().t1).unwrap();
    let scaled = apply_scale(&m, s).unwrap();
    let t = model_periods(&scaled).unwrap().t1;
    assert!((t - 1.0).abs() < 1e-9);
}

#[test]
fn generated_buildings_reduce_to_valid_models() {
    for seed in 0..300 {
        let t = StructureType::ALL[seed % 3];
        let cfg = sample_building(t, seed as u64).unwrap();
        for dir in [Direction::X, Direction::Y] {
            let model = reduce_to_mdof(&cfg, dir);
            model.validate().unwrap();
            assert_eq!(model.n_stories(), cfg.n_stories as usize);
            let s = model_periods(&model).unwrap();
            // plausible RC periods
            assert!(s.t1 > 0.01 && s.t1 < 10.0, "T1 = {} for {cfg:?}", s.t1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stiffness_is_symmetric_positive_definite((m, k) in model_strategy(12)) {
        let kk = SymTridiag::shear_building(&k);
        let d = kk.to_dense();
        for i in 0..d.len() {
            for j in 0..d.len() {
                prop_assert_eq!(d[i][j], d[j][i]);
            }
        }
        let ones = vec![1.0; m.len()];
        let ev = dense_generalized_eigs(&ones, &kk);
        prop_assert!(ev.iter().all(|l| *l > 0.0));
    }

    #[test]
    fn ql_matches_dense_eigen((m, k) in model_strategy(25)) {
        let kk = SymTridiag::shear_building(&k);
        let s = fundamental_periods(&m, &kk).unwrap();
        let dense = dense_generalized_eigs(&m, &kk);
        for (w, l) in s.omega.iter().zip(&dense) {
            prop_assert!((w * w - l).abs() <= 1e-10 * l.abs().max(dense[dense.len() - 1] * 1e-3));
        }
        prop_assert!(s.omega.windows(2).all(|w| w[0] < w[1]));
        prop_assert!((s.t1 - 2.0 * PI / s.omega[0]).abs() == 0.0);
    }

    #[test]
    fn ql_matches_characteristic_polynomial((m, k) in model_strategy(3)) {
        let s = fundamental_periods(&m, &SymTridiag::shear_building(&k)).unwrap();
        let roots = charpoly_eigs(&m, &k);
        prop_assert_eq!(roots.len(), m.len());
        for (w, r) in s.omega.iter().zip(&roots) {
            prop_assert!((w * w - r).abs() <= 1e-10 * r, "{} vs {}", w * w, r);
        }
    }

    #[test]
    fn apply_scale_hits_target_period((m, k) in model_strategy(15), t_target in 0.1f64..5.0) {
        let model = LumpedMassModel::linear(m, k).unwrap();
        let t_hat = model_periods(&model).unwrap().t1;
        let s = stiffness_scale_factor(t_target, t_hat).unwrap();
        let scaled = apply_scale(&model, s).unwrap();
        let t = model_periods(&scaled).unwrap().t1;
        prop_assert!(((t - t_target) / t_target).abs() < 1e-9);
        prop_assert_eq!(&scaled.masses, &model.masses);
    }

    #[test]
    fn mass_and_stiffness_are_monotone(seed in 0u64..10_000, bump in 1.0f64..1.5, which in 0usize..6) {
        let t = StructureType::ALL[(seed % 3) as usize];
        let a = sample_building(t, seed).unwrap();
        let mut b = a.clone();
        match which {
            0 => b.slab_thickness_mm *= bump,
            1 => b.column_size_mm[0] *= bump,
            2 => b.column_size_mm[1] *= bump,
            3 => b.beam_size_mm[1] *= bump,
            4 => b.wall_thickness_mm = Some(b.wall_thickness_mm.unwrap_or(200.0) * bump),
            _ => b.span_length_m *= bump,
        }
        if which == 4 && b.wall_length_m.is_none() {
            b.wall_length_m = Some(10.0);
        }
        let (ma, mb) = (reduce_to_mdof(&a, Direction::X), reduce_to_mdof(&b, Direction::X));
        prop_assert!(mb.masses[0] >= ma.masses[0]);
        if which != 0 && which != 3 && which != 5 {
            for dir in [Direction::X, Direction::Y] {
                prop_assert!(story_stiffness(&b, dir) >= story_stiffness(&a, dir));
            }
        }
    }
}
