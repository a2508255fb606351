//! Adam with a warmup-cosine schedule and global-norm clipping.

use seisforge_srfd::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Learning rate at `step` of `total`: linear warmup over the first
/// `warmup_fraction` of steps, then cosine decay from `peak` to
/// `final_fraction · peak`.
pub fn lr_at(step: usize, total: usize, peak: f64, warmup_fraction: f64, final_fraction: f64) -> f64 {
    let warm = (warmup_fraction * total as f64).ceil() as usize;
    if step < warm {
        return peak * (step + 1) as f64 / warm as f64;
    }
    let span = total.saturating_sub(warm).max(1) as f64;
    let p = ((step - warm) as f64 / span).min(1.0);
    let floor = final_fraction * peak;
    floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
}

/// Scales `grads` in place to global norm at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.iter_mut().flat_map(|g| g.iter_mut()) {
            *g *= s;
        }
    }
    norm
}

/// Adam state over a fixed list of parameter arrays. Moments are kept in
/// f64; the parameters themselves are f32.
#[derive(Debug, Clone)]
pub struct Adam {
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Matrix<f32>], grads: &[Vec<f64>], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter list changed under the optimizer");
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                if lr != 0.0 {
                    let upd = lr * (*mi / c1) / ((*vi / c2).sqrt() + EPS);
                    *w = (*w as f64 - upd) as f32;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let (total, peak) = (100, 1e-3);
        assert!((lr_at(0, total, peak, 0.05, 0.1) - 2e-4).abs() < 1e-15);
        assert!((lr_at(4, total, peak, 0.05, 0.1) - peak).abs() < 1e-15);
        assert!((lr_at(5, total, peak, 0.05, 0.1) - peak).abs() < 1e-15);
        assert!((lr_at(100, total, peak, 0.05, 0.1) - 1e-4).abs() < 1e-15);
        for s in 5..99 {
            assert!(lr_at(s + 1, total, peak, 0.05, 0.1) <= lr_at(s, total, peak, 0.05, 0.1));
        }
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![vec![3.0], vec![4.0]];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut w = Matrix::from_vec(1, 2, vec![1.0f32, -1.0]);
        let mut opt = Adam::new(&[2]);
        opt.step(&mut [&mut w], &[vec![0.5, -2.0]], 0.1);
        assert!((w.data()[0] - 0.9).abs() < 1e-6);
        assert!((w.data()[1] + 0.9).abs() < 1e-6);
    }
}
