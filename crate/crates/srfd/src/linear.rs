use crate::{Error, Matrix, Result, Scalar};

/// Low-rank update `(α/r)·B·A`; `a` is `r × d_in`, `b` is `d_out × r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    /// `α / r`.
    pub scale: f64,
}

/// Affine map `y = x·Wᵀ + b`, `W` stored `d_out × d_in`, with an optional
/// low-rank adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Option<Matrix<T>>,
    pub lora: Option<LoraAdapter<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(weight: Matrix<T>, bias: Option<Matrix<T>>) -> Self {
        Self {
            weight,
            bias,
            lora: None,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.rows()
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: self.bias.as_ref().map(|b| Matrix::zeros(1, b.cols())),
            lora: self.lora.as_ref().map(|l| LoraAdapter {
                a: Matrix::zeros(l.a.rows(), l.a.cols()),
                b: Matrix::zeros(l.b.rows(), l.b.cols()),
                scale: l.scale,
            }),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Linear<U> {
        Linear {
            weight: self.weight.cast(),
            bias: self.bias.as_ref().map(Matrix::cast),
            lora: self.lora.as_ref().map(|l| LoraAdapter {
                a: l.a.cast(),
                b: l.b.cast(),
                scale: l.scale,
            }),
        }
    }

    /// Output and, with an adapter, the cached `x·Aᵀ`.
    pub fn forward(&self, x: &Matrix<T>) -> (Matrix<T>, Option<Matrix<T>>) {
        let mut y = x.matmul_nt(&self.weight);
        if let Some(b) = &self.bias {
            for i in 0..y.rows() {
                for (v, bj) in y.row_mut(i).iter_mut().zip(b.data()) {
                    *v += *bj;
                }
            }
        }
        let ax = self.lora.as_ref().map(|l| {
            let ax = x.matmul_nt(&l.a);
            let delta = ax.matmul_nt(&l.b);
            let s = l.scale;
            // exact zeros are skipped so a zero adapter leaves every bit alone
            for (v, d) in y.data_mut().iter_mut().zip(delta.data()) {
                if d.to_f64() != 0.0 {
                    *v += T::from_f64(s * d.to_f64());
                }
            }
            ax
        });
        (y, ax)
    }

    pub fn apply(&self, x: &Matrix<T>) -> Matrix<T> {
        self.forward(x).0
    }

    /// Accumulates parameter gradients into `grad` and returns `dx`.
    pub fn backward(&self, x: &Matrix<T>, ax: Option<&Matrix<T>>, dy: &Matrix<T>, grad: &mut Linear<T>) -> Matrix<T> {
        grad.weight.add_assign(&dy.matmul_tn(x));
        if let Some(gb) = &mut grad.bias {
            for i in 0..dy.rows() {
                for (g, d) in gb.data_mut().iter_mut().zip(dy.row(i)) {
                    *g += *d;
                }
            }
        }
        let mut dx = dy.matmul(&self.weight);
        if let (Some(l), Some(gl)) = (&self.lora, &mut grad.lora) {
            let ax = ax.expect("adapter forward cache missing");
            let s = T::from_f64(l.scale);
            // dB = s·dyᵀ(xAᵀ), dA = s·(dy B)ᵀ x, dx += s·(dy B) A
            gl.b.add_assign(&dy.matmul_tn(ax).scale(s));
            let dyb = dy.matmul(&l.b);
            gl.a.add_assign(&dyb.matmul_tn(x).scale(s));
            dx.add_assign(&dyb.matmul(&l.a).scale(s));
        }
        dx
    }

    /// Folds the adapter into a plain weight matrix.
    pub fn effective_weight(&self) -> Matrix<T> {
        match &self.lora {
            None => self.weight.clone(),
            Some(l) => {
                let delta = l.b.matmul(&l.a);
                let mut w = self.weight.clone();
                for (v, d) in w.data_mut().iter_mut().zip(delta.data()) {
                    *v += T::from_f64(l.scale * d.to_f64());
                }
                w
            }
        }
    }
}

/// `base + (α/r)·B·A` for explicit adapter matrices.
pub fn lora_apply<T: Scalar>(
    base: &Matrix<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
    alpha: f64,
    r: usize,
) -> Result<Matrix<T>> {
    if r == 0 || a.rows() != r || b.cols() != r {
        return Err(Error::Config(format!(
            "adapter rank mismatch: r = {r}, A is {}x{}, B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.cols() != base.cols() || b.rows() != base.rows() {
        return Err(Error::Config(format!(
            "adapter shape mismatch: base {}x{}, A {}x{}, B {}x{}",
            base.rows(),
            base.cols(),
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let lin = Linear {
        weight: base.clone(),
        bias: None,
        lora: Some(LoraAdapter {
            a: a.clone(),
            b: b.clone(),
            scale: alpha / r as f64,
        }),
    };
    Ok(lin.effective_weight())
}
