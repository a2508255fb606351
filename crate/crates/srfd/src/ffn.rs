use crate::linear::Linear;
use crate::ops::{silu, silu_grad};
use crate::{Matrix, Scalar};

/// Gated feed-forward block, `down(silu(gate(x)) ⊙ up(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnWeights<T> {
    pub gate: Linear<T>,
    pub up: Linear<T>,
    pub down: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct FfnCache<T> {
    gate: Matrix<T>,
    up: Matrix<T>,
    hidden: Matrix<T>,
}

pub fn swiglu_forward<T: Scalar>(x: &Matrix<T>, w: &FfnWeights<T>) -> (Matrix<T>, FfnCache<T>) {
    let gate = w.gate.apply(x);
    let up = w.up.apply(x);
    let mut hidden = Matrix::zeros(gate.rows(), gate.cols());
    for ((h, g), u) in hidden.data_mut().iter_mut().zip(gate.data()).zip(up.data()) {
        *h = T::from_f64(silu(g.to_f64()) * u.to_f64());
    }
    let out = w.down.apply(&hidden);
    (out, FfnCache { gate, up, hidden })
}

pub fn swiglu_backward<T: Scalar>(
    x: &Matrix<T>,
    w: &FfnWeights<T>,
    cache: &FfnCache<T>,
    dout: &Matrix<T>,
    grad: &mut FfnWeights<T>,
) -> Matrix<T> {
    let dh = w.down.backward(&cache.hidden, None, dout, &mut grad.down);
    let mut dg = Matrix::zeros(dh.rows(), dh.cols());
    let mut du = Matrix::zeros(dh.rows(), dh.cols());
    for i in 0..dh.len() {
        let (h, g, u) = (
            dh.data()[i].to_f64(),
            cache.gate.data()[i].to_f64(),
            cache.up.data()[i].to_f64(),
        );
        dg.data_mut()[i] = T::from_f64(h * u * silu_grad(g));
        du.data_mut()[i] = T::from_f64(h * silu(g));
    }
    let mut dx = w.gate.backward(x, None, &dg, &mut grad.gate);
    dx.add_assign(&w.up.backward(x, None, &du, &mut grad.up));
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gate_gives_zero_output() {
        let d = 3;
        let w = FfnWeights {
            gate: Linear::new(Matrix::zeros(4, d), None),
            up: Linear::new(Matrix::from_fn(4, d, |i, j| (i + j) as f64), None),
            down: Linear::new(Matrix::from_fn(d, 4, |i, j| (i * j) as f64 + 1.0), None),
        };
        let x = Matrix::from_fn(2, d, |i, j| i as f64 - j as f64 + 0.5);
        let (y, _) = swiglu_forward(&x, &w);
        assert!(y.data().iter().all(|v| *v == 0.0));
    }
}
