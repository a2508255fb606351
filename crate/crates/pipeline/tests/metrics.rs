use proptest::prelude::*;
use seisforge_pipeline::metrics::{masked_loss, metrics, Accumulator};

const UNIT: [f64; 2] = [1.0, 1.0];

#[test]
fn perfect_prediction_has_zero_loss() {
    let p: Vec<f64> = (0..12).map(|i| i as f64).collect();
    let l = masked_loss(&p, &p, 3, &[true, true, true], 0, &UNIT);
    assert_eq!(l.total, 0.0);
    assert!(l.grad.iter().all(|&g| g == 0.0));
}

#[test]
fn single_channel_mse() {
    // one story, rows [d, a]: displacement pred [1, 2] against [1, 4]
    let pred = [1.0, 0.0, 2.0, 0.0];
    let target = [1.0, 0.0, 4.0, 0.0];
    let l = masked_loss(&pred, &target, 1, &[true], 0, &UNIT);
    assert_eq!(l.per_quantity, [2.0, 0.0]);
    assert_eq!(l.total, 2.0);
}

#[test]
fn masked_floor_errors_are_ignored() {
    let target = vec![0.5; 2 * 4];
    let mut pred = target.clone();
    pred[0] = 0.7; // displacement, story 0, row 0
    let mut huge = pred.clone();
    huge[1] = 1e9; // displacement, story 1, row 0
    huge[3] = -1e9; // acceleration, story 1, row 0
    let a = masked_loss(&pred, &target, 2, &[true, false], 0, &UNIT);
    let b = masked_loss(&huge, &target, 2, &[true, false], 0, &UNIT);
    assert_eq!(a.total, b.total);
    assert_eq!(b.grad[1], 0.0);
    assert_eq!(b.grad[3], 0.0);
}

#[test]
fn padded_rows_are_ignored() {
    let target = vec![0.0; 2 * 2];
    let pred = vec![5.0, 5.0, 1.0, 1.0];
    let l = masked_loss(&pred, &target, 1, &[true], 1, &UNIT);
    assert_eq!(l.total, 2.0);
}

#[test]
fn loss_gradient_matches_differences() {
    let target = [0.3, -0.2, 0.1, 0.4, 0.0, 0.9];
    let pred = [0.1, 0.2, -0.3, 0.5, 0.6, 0.2];
    let w = [0.7, 1.3];
    let l = masked_loss(&pred, &target, 3, &[true, true, false], 0, &w);
    let h = 1e-6;
    for i in 0..pred.len() {
        let (mut p, mut m) = (pred, pred);
        p[i] += h;
        m[i] -= h;
        let fd = (masked_loss(&p, &target, 3, &[true, true, false], 0, &w).total
            - masked_loss(&m, &target, 3, &[true, true, false], 0, &w).total)
            / (2.0 * h);
        assert!((fd - l.grad[i]).abs() < 1e-8, "{i}: {fd} vs {}", l.grad[i]);
    }
}

#[test]
fn identity_metrics() {
    let t = [0.3, -1.0, 2.0, 0.5];
    let m = metrics(&t, &t);
    assert_eq!((m.mse, m.mae, m.mre), (0.0, 0.0, 0.0));
    assert!((m.r - 1.0).abs() < 1e-12);
}

#[test]
fn anti_correlated_prediction() {
    let t = [0.3, -1.0, 2.0, 0.5];
    let p: Vec<f64> = t.iter().map(|x| -x).collect();
    assert!((metrics(&p, &t).r + 1.0).abs() < 1e-12);
}

#[test]
fn worked_example() {
    let m = metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]);
    assert!((m.mse - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.mre - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn constant_prediction_has_zero_correlation() {
    assert_eq!(metrics(&[0.0; 4], &[1.0, 2.0, 3.0, 4.0]).r, 0.0);
}

fn pearson(p: &[f64], t: &[f64]) -> f64 {
    let n = p.len() as f64;
    let (mp, mt) = (p.iter().sum::<f64>() / n, t.iter().sum::<f64>() / n);
    let cov: f64 = p.iter().zip(t).map(|(a, b)| (a - mp) * (b - mt)).sum();
    let vp: f64 = p.iter().map(|a| (a - mp).powi(2)).sum();
    let vt: f64 = t.iter().map(|b| (b - mt).powi(2)).sum();
    cov / (vp * vt).sqrt()
}

proptest! {
    #[test]
    fn metric_bounds(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..200)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = metrics(&p, &t);
        prop_assert!(m.mae * m.mae <= m.mse * (1.0 + 1e-12));
        prop_assert!(m.mre >= 0.0);
        prop_assert!(m.r.abs() <= 1.0);
    }

    #[test]
    fn streaming_r_matches_two_pass(pairs in prop::collection::vec((-10f64..10.0, -10f64..10.0), 3..100)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = pearson(&p, &t);
        prop_assume!(r.is_finite());
        prop_assert!((metrics(&p, &t).r - r).abs() < 1e-9);
    }

    #[test]
    fn merging_matches_one_pass(
        pairs in prop::collection::vec((-10f64..10.0, -10f64..10.0), 2..100),
        cut in 0usize..100,
    ) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let cut = cut.min(p.len());
        let mut a = Accumulator::default();
        a.extend(&p[..cut], &t[..cut]);
        let mut b = Accumulator::default();
        b.extend(&p[cut..], &t[cut..]);
        a.merge(&b);
        let (x, y) = (a.finish(), metrics(&p, &t));
        prop_assert_eq!(x.count, y.count);
        prop_assert!((x.mse - y.mse).abs() <= 1e-9 * (1.0 + y.mse));
        prop_assert!((x.r - y.r).abs() < 1e-9);
    }
}
