#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seisforge_srfd::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random window with the first `n_stories` stories active.
pub fn random_inputs(cfg: &SrfdConfig, w: usize, n_stories: usize, rng: &mut ChaCha8Rng) -> StepInputs {
    let mut x = StepInputs::zeros(cfg, w);
    for v in x.wave.iter_mut().chain(&mut x.history).chain(&mut x.sdr) {
        *v = rng.random_range(-1.5..1.5);
    }
    for s in 0..n_stories {
        x.m_vec[s] = rng.random_range(0.1..1.0);
        x.k_vec[s] = rng.random_range(0.1..1.0);
        x.story_mask[s] = true;
    }
    x
}

/// Initialized weights with every array perturbed away from its special
/// starting value (unit gains, zero biases, zero adapter `B`).
pub fn random_weights(cfg: &SrfdConfig, seed: u64, lora: bool) -> SrfdWeights<f64> {
    let mut w = SrfdWeights::<f64>::init(cfg, seed).unwrap();
    if lora {
        w.attach_lora(2, 4.0, seed + 1).unwrap();
    }
    let mut r = rng(seed + 2);
    for p in w.params_mut() {
        for v in p.value.data_mut() {
            *v += r.random_range(-0.2..0.2);
        }
    }
    w
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// `L = Σ y ⊙ R` evaluated in 64-bit.
pub fn objective(cfg: &SrfdConfig, w: &SrfdWeights<f64>, x: &StepInputs, r: &Matrix<f64>) -> f64 {
    let y = forward(cfg, w, x).unwrap();
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Norm-wise relative error of an analytic gradient array against central
/// differences of the 64-bit objective.
pub fn rel_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

/// Max relative error over all parameter arrays, with the worst array's name.
/// `analytic` holds the gradients, cast to 64-bit, at the weights `w`.
pub fn check_weight_grads(
    cfg: &SrfdConfig,
    w: &SrfdWeights<f64>,
    x: &StepInputs,
    r: &Matrix<f64>,
    analytic: &SrfdWeights<f64>,
    h: f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    let n_arrays = w.params().len();
    let grads = analytic.params();
    for i in 0..n_arrays {
        let len = w.params()[i].value.len();
        let mut fd = vec![0.0; len];
        for (j, slot) in fd.iter_mut().enumerate() {
            let mut wp = w.clone();
            wp.params_mut()[i].value.data_mut()[j] += h;
            let mut wm = w.clone();
            wm.params_mut()[i].value.data_mut()[j] -= h;
            *slot = (objective(cfg, &wp, x, r) - objective(cfg, &wm, x, r)) / (2.0 * h);
        }
        let e = rel_error(grads[i].value.data(), &fd);
        if e > worst.0 || worst.1.is_empty() {
            worst = (e, grads[i].name.clone());
        }
    }
    worst
}
