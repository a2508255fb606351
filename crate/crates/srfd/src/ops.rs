//! Elementwise and row-wise primitives with their derivatives.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::{Error, Matrix, Result, Scalar};

pub const RMS_EPS: f64 = 1e-6;

/// Row-wise RMS normalization. Returns the output and each row's `1/RMS`.
pub fn rms_norm<T: Scalar>(x: &Matrix<T>, gain: &[T]) -> (Matrix<T>, Vec<f64>) {
    let d = x.cols();
    assert_eq!(gain.len(), d, "rms_norm gain length");
    let mut out = Matrix::zeros(x.rows(), d);
    let mut inv = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let ms = row.iter().map(|v| v.to_f64().powi(2)).sum::<f64>() / d as f64;
        let r = 1.0 / (RMS_EPS + ms).sqrt();
        inv.push(r);
        for (o, (a, g)) in out.row_mut(i).iter_mut().zip(row.iter().zip(gain)) {
            *o = T::from_f64(g.to_f64() * a.to_f64() * r);
        }
    }
    (out, inv)
}

/// Gradients of [`rms_norm`]: returns `dx` and adds into `dgain`.
pub fn rms_norm_backward<T: Scalar>(
    x: &Matrix<T>,
    gain: &[T],
    inv_rms: &[f64],
    dy: &Matrix<T>,
    dgain: &mut [T],
) -> Matrix<T> {
    let d = x.cols();
    let mut dx = Matrix::zeros(x.rows(), d);
    let mut dg = vec![0.0f64; d];
    for i in 0..x.rows() {
        let (a, g_dy) = (x.row(i), dy.row(i));
        let r = inv_rms[i];
        let mut dot = 0.0;
        for j in 0..d {
            let gd = gain[j].to_f64() * g_dy[j].to_f64();
            dot += gd * a[j].to_f64();
            dg[j] += g_dy[j].to_f64() * a[j].to_f64() * r;
        }
        let k = r * r * r * dot / d as f64;
        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
            let gd = gain[j].to_f64() * g_dy[j].to_f64();
            *o = T::from_f64(gd * r - a[j].to_f64() * k);
        }
    }
    for (acc, v) in dgain.iter_mut().zip(dg) {
        *acc += T::from_f64(v);
    }
    dx
}

/// Rotates each consecutive pair of every `head_dim`-wide block of `x` by
/// `θ_i · pos`, `θ_i = base^(−2i/head_dim)`. `inverse` applies the opposite
/// rotation, which is also the backward pass.
pub fn rope_inplace<T: Scalar>(
    x: &mut Matrix<T>,
    positions: &[usize],
    base: f64,
    head_dim: usize,
    inverse: bool,
) -> Result<()> {
    if head_dim == 0 || !head_dim.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "rotary embedding needs an even head dimension, got {head_dim}"
        )));
    }
    if !x.cols().is_multiple_of(head_dim) || positions.len() != x.rows() {
        return Err(Error::Config(format!(
            "rotary embedding: {}x{} input with {} positions and head dim {head_dim}",
            x.rows(),
            x.cols(),
            positions.len()
        )));
    }
    let sign = if inverse { -1.0 } else { 1.0 };
    let half = head_dim / 2;
    let theta: Vec<f64> = (0..half)
        .map(|i| base.powf(-2.0 * i as f64 / head_dim as f64))
        .collect();
    for (t, &pos) in positions.iter().enumerate() {
        if pos == 0 {
            continue;
        }
        let row = x.row_mut(t);
        for block in row.chunks_exact_mut(head_dim) {
            for (i, th) in theta.iter().enumerate() {
                let (s, c) = (sign * th * pos as f64).sin_cos();
                let (a, b) = (block[2 * i].to_f64(), block[2 * i + 1].to_f64());
                block[2 * i] = T::from_f64(a * c - b * s);
                block[2 * i + 1] = T::from_f64(a * s + b * c);
            }
        }
    }
    Ok(())
}

/// Single-head rotary embedding of a `W × d_head` matrix.
pub fn rope<T: Scalar>(x: &Matrix<T>, positions: &[usize], base: f64) -> Result<Matrix<T>> {
    let mut out = x.clone();
    rope_inplace(&mut out, positions, base, x.cols(), false)?;
    Ok(out)
}

/// Standard normal CDF.
fn phi_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * phi_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    phi_cdf(x) + x * (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// SiLU, `x·σ(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Row softmax of a square score matrix. With `causal`, row `i` only sees
/// columns `0..=i`; hidden entries get probability zero.
pub fn softmax_rows<T: Scalar>(z: &Matrix<T>, causal: bool) -> Matrix<T> {
    let n = z.cols();
    let mut p = Matrix::zeros(z.rows(), n);
    let mut buf = vec![0.0f64; n];
    for i in 0..z.rows() {
        let visible = if causal { (i + 1).min(n) } else { n };
        let row = &z.row(i)[..visible];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
        let mut sum = 0.0;
        for (b, v) in buf.iter_mut().zip(row) {
            *b = (v.to_f64() - max).exp();
            sum += *b;
        }
        for (o, b) in p.row_mut(i)[..visible].iter_mut().zip(&buf) {
            *o = T::from_f64(b / sum);
        }
    }
    p
}

/// Backward of [`softmax_rows`] given the probabilities.
pub fn softmax_rows_backward<T: Scalar>(p: &Matrix<T>, dp: &Matrix<T>) -> Matrix<T> {
    let mut dz = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let (pr, dr) = (p.row(i), dp.row(i));
        let dot: f64 = pr.iter().zip(dr).map(|(a, b)| a.to_f64() * b.to_f64()).sum();
        for (o, (a, b)) in dz.row_mut(i).iter_mut().zip(pr.iter().zip(dr)) {
            *o = T::from_f64(a.to_f64() * (b.to_f64() - dot));
        }
    }
    dz
}
