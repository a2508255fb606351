//! Causal attention: grouped-query attention with rotary embeddings, and the
//! physics attention that conditions on story mass and stiffness vectors.

use crate::linear::Linear;
use crate::ops::{gelu, gelu_grad, rope_inplace, softmax_rows, softmax_rows_backward};
use crate::{Error, Matrix, Result, Scalar};

/// Head arrangement of one attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadLayout {
    pub n_heads: usize,
    pub n_kv_groups: usize,
    pub d_head: usize,
}

impl HeadLayout {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.n_kv_groups == 0 || self.d_head == 0 {
            return Err(Error::Config("head counts and width must be positive".into()));
        }
        if !self.n_heads.is_multiple_of(self.n_kv_groups) {
            return Err(Error::Config(format!(
                "n_kv_groups = {} does not divide n_heads = {}",
                self.n_kv_groups, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn d_model(&self) -> usize {
        self.n_heads * self.d_head
    }

    pub fn d_kv(&self) -> usize {
        self.n_kv_groups * self.d_head
    }

    /// Key/value head serving query head `h`.
    pub fn kv_head(&self, h: usize) -> usize {
        h / (self.n_heads / self.n_kv_groups)
    }

    fn inv_sqrt(&self) -> f64 {
        1.0 / (self.d_head as f64).sqrt()
    }
}

fn check_input<T: Scalar>(x: &Matrix<T>, d: usize, what: &str) -> Result<()> {
    if x.cols() != d || x.rows() == 0 {
        return Err(Error::Config(format!(
            "{what}: expected W x {d} input, got {}x{}",
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

fn check_linear<T: Scalar>(l: &Linear<T>, d_in: usize, d_out: usize, what: &str) -> Result<()> {
    if l.d_in() != d_in || l.d_out() != d_out {
        return Err(Error::Config(format!(
            "{what}: expected {d_out}x{d_in} map, got {}x{}",
            l.d_out(),
            l.d_in()
        )));
    }
    Ok(())
}

fn positions(w: usize) -> Vec<usize> {
    (0..w).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GqaWeights<T> {
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wv: Linear<T>,
    pub wo: Linear<T>,
}

impl<T: Scalar> GqaWeights<T> {
    pub fn cast<U: Scalar>(&self) -> GqaWeights<U> {
        GqaWeights {
            wq: self.wq.cast(),
            wk: self.wk.cast(),
            wv: self.wv.cast(),
            wo: self.wo.cast(),
        }
    }

    fn check(&self, l: &HeadLayout) -> Result<()> {
        let (d, dkv) = (l.d_model(), l.d_kv());
        check_linear(&self.wq, d, d, "gqa query map")?;
        check_linear(&self.wk, d, dkv, "gqa key map")?;
        check_linear(&self.wv, d, dkv, "gqa value map")?;
        check_linear(&self.wo, d, d, "gqa output map")
    }
}

/// Intermediates kept by [`gqa_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct GqaCache<T> {
    /// Rotated queries, `W × d_model`.
    pub q: Matrix<T>,
    /// Rotated keys, `W × d_kv`.
    pub k: Matrix<T>,
    pub v: Matrix<T>,
    /// Attention probabilities per query head.
    pub probs: Vec<Matrix<T>>,
    pub ctx: Matrix<T>,
    lora: [Option<Matrix<T>>; 4],
}

pub fn gqa_forward<T: Scalar>(
    x: &Matrix<T>,
    w: &GqaWeights<T>,
    layout: &HeadLayout,
    rope_base: f64,
) -> Result<(Matrix<T>, GqaCache<T>)> {
    layout.validate()?;
    check_input(x, layout.d_model(), "gqa attention")?;
    w.check(layout)?;
    let dh = layout.d_head;
    let pos = positions(x.rows());
    let (mut q, lq) = w.wq.forward(x);
    let (mut k, lk) = w.wk.forward(x);
    let (v, lv) = w.wv.forward(x);
    rope_inplace(&mut q, &pos, rope_base, dh, false)?;
    rope_inplace(&mut k, &pos, rope_base, dh, false)?;

    let inv = T::from_f64(layout.inv_sqrt());
    let mut ctx = Matrix::zeros(x.rows(), layout.d_model());
    let mut probs = Vec::with_capacity(layout.n_heads);
    for h in 0..layout.n_heads {
        let g = layout.kv_head(h);
        let qh = q.col_block(h * dh, dh);
        let kg = k.col_block(g * dh, dh);
        let vg = v.col_block(g * dh, dh);
        let p = softmax_rows(&qh.matmul_nt(&kg).scale(inv), true);
        ctx.set_col_block(h * dh, &p.matmul(&vg));
        probs.push(p);
    }
    let (out, lo) = w.wo.forward(&ctx);
    Ok((
        out,
        GqaCache {
            q,
            k,
            v,
            probs,
            ctx,
            lora: [lq, lk, lv, lo],
        },
    ))
}

/// Accumulates weight gradients into `grad` and returns `dx`.
pub fn gqa_backward<T: Scalar>(
    x: &Matrix<T>,
    w: &GqaWeights<T>,
    layout: &HeadLayout,
    rope_base: f64,
    cache: &GqaCache<T>,
    dout: &Matrix<T>,
    grad: &mut GqaWeights<T>,
) -> Result<Matrix<T>> {
    let dh = layout.d_head;
    let n = x.rows();
    let [lq, lk, lv, lo] = &cache.lora;
    let dctx = w.wo.backward(&cache.ctx, lo.as_ref(), dout, &mut grad.wo);
    let inv = T::from_f64(layout.inv_sqrt());
    let mut dq = Matrix::zeros(n, layout.d_model());
    let mut dk = Matrix::zeros(n, layout.d_kv());
    let mut dv = Matrix::zeros(n, layout.d_kv());
    for (h, p) in cache.probs.iter().enumerate() {
        let g = layout.kv_head(h);
        let dctx_h = dctx.col_block(h * dh, dh);
        let qh = cache.q.col_block(h * dh, dh);
        let kg = cache.k.col_block(g * dh, dh);
        let vg = cache.v.col_block(g * dh, dh);
        dv.add_col_block(g * dh, &p.matmul_tn(&dctx_h));
        let ds = softmax_rows_backward(p, &dctx_h.matmul_nt(&vg)).scale(inv);
        dq.set_col_block(h * dh, &ds.matmul(&kg));
        dk.add_col_block(g * dh, &ds.matmul_tn(&qh));
    }
    // a rotation's adjoint is the opposite rotation
    let pos = positions(n);
    rope_inplace(&mut dq, &pos, rope_base, dh, true)?;
    rope_inplace(&mut dk, &pos, rope_base, dh, true)?;
    let mut dx = w.wq.backward(x, lq.as_ref(), &dq, &mut grad.wq);
    dx.add_assign(&w.wk.backward(x, lk.as_ref(), &dk, &mut grad.wk));
    dx.add_assign(&w.wv.backward(x, lv.as_ref(), &dv, &mut grad.wv));
    Ok(dx)
}

/// Weights of one physics-attention block. `u_m` and `u_k` are
/// `d_head × n_max`; `norm` is the pre-normalization gain.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsWeights<T> {
    pub norm: Matrix<T>,
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wq2: Linear<T>,
    pub wk2: Linear<T>,
    pub wv: Linear<T>,
    pub wo: Linear<T>,
    pub u_m: Matrix<T>,
    pub u_k: Matrix<T>,
}

impl<T: Scalar> PhysicsWeights<T> {
    pub fn cast<U: Scalar>(&self) -> PhysicsWeights<U> {
        PhysicsWeights {
            norm: self.norm.cast(),
            wq: self.wq.cast(),
            wk: self.wk.cast(),
            wq2: self.wq2.cast(),
            wk2: self.wk2.cast(),
            wv: self.wv.cast(),
            wo: self.wo.cast(),
            u_m: self.u_m.cast(),
            u_k: self.u_k.cast(),
        }
    }

    fn check(&self, d: usize, dh: usize, n_max: usize) -> Result<()> {
        for (l, what) in [
            (&self.wq, "physics query map"),
            (&self.wk, "physics key map"),
            (&self.wq2, "physics stiffness query map"),
            (&self.wk2, "physics stiffness key map"),
            (&self.wv, "physics value map"),
            (&self.wo, "physics output map"),
        ] {
            check_linear(l, d, d, what)?;
        }
        for u in [&self.u_m, &self.u_k] {
            if u.shape() != (dh, n_max) {
                return Err(Error::Config(format!(
                    "story projection must be {dh}x{n_max}, got {}x{}",
                    u.rows(),
                    u.cols()
                )));
            }
        }
        Ok(())
    }
}

/// `U·diag(s)·Uᵀ`, built from its upper triangle so it is exactly symmetric.
pub fn story_kernel<T: Scalar>(u: &Matrix<T>, s: &[f64]) -> Matrix<T> {
    let d = u.rows();
    let mut b = Matrix::zeros(d, d);
    for a in 0..d {
        for c in a..d {
            let (ra, rc) = (u.row(a), u.row(c));
            let mut acc = 0.0f64;
            for j in 0..s.len() {
                acc += ra[j].to_f64() * s[j] * rc[j].to_f64();
            }
            let v = T::from_f64(acc);
            b.set(a, c, v);
            b.set(c, a, v);
        }
    }
    b
}

/// One branch of the physics attention for one head.
#[derive(Debug, Clone)]
pub struct BranchCache<T> {
    /// Scaled bilinear scores before the gelu.
    pub z: Matrix<T>,
    pub probs: Vec<Matrix<T>>,
}

#[derive(Debug, Clone)]
pub struct PhysicsCache<T> {
    pub q: Matrix<T>,
    pub k: Matrix<T>,
    pub q2: Matrix<T>,
    pub k2: Matrix<T>,
    pub v: Matrix<T>,
    pub b_m: Matrix<T>,
    pub b_k: Matrix<T>,
    /// Per-head pre-gelu scores of the mass branch.
    pub z_m: Vec<Matrix<T>>,
    pub z_k: Vec<Matrix<T>>,
    /// Per-head probabilities `attn_M`.
    pub p_m: Vec<Matrix<T>>,
    /// Per-head probabilities `attn_K`.
    pub p_k: Vec<Matrix<T>>,
    pub ctx: Matrix<T>,
    m_eff: Vec<f64>,
    k_eff: Vec<f64>,
    lora: [Option<Matrix<T>>; 6],
}

/// Gradients with respect to the story vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StoryGrads {
    pub m_vec: Vec<f64>,
    pub k_vec: Vec<f64>,
}

fn masked(v: &[f64], mask: &[bool]) -> Vec<f64> {
    v.iter().zip(mask).map(|(x, &m)| if m { *x } else { 0.0 }).collect()
}

fn branch_scores<T: Scalar>(qh: &Matrix<T>, kh: &Matrix<T>, b: &Matrix<T>, inv: T) -> (Matrix<T>, Matrix<T>) {
    let z = qh.matmul(b).matmul_nt(kh).scale(inv);
    let p = softmax_rows(&z.map(|v| T::from_f64(gelu(v.to_f64()))), true);
    (z, p)
}

/// Physics attention for an already normalized input `x` (`W × d_model`).
pub fn physics_forward<T: Scalar>(
    x: &Matrix<T>,
    w: &PhysicsWeights<T>,
    n_heads: usize,
    m_vec: &[f64],
    k_vec: &[f64],
    story_mask: &[bool],
) -> Result<(Matrix<T>, PhysicsCache<T>)> {
    let d = x.cols();
    if n_heads == 0 || !d.is_multiple_of(n_heads) {
        return Err(Error::Config(format!("{n_heads} heads do not divide width {d}")));
    }
    let dh = d / n_heads;
    let n_max = m_vec.len();
    if k_vec.len() != n_max || story_mask.len() != n_max {
        return Err(Error::Config(format!(
            "story vectors disagree: {} masses, {} stiffnesses, {} mask entries",
            n_max,
            k_vec.len(),
            story_mask.len()
        )));
    }
    check_input(x, d, "physics attention")?;
    w.check(d, dh, n_max)?;

    let m_eff = masked(m_vec, story_mask);
    let k_eff = masked(k_vec, story_mask);
    let b_m = story_kernel(&w.u_m, &m_eff);
    let b_k = story_kernel(&w.u_k, &k_eff);
    let (q, lq) = w.wq.forward(x);
    let (k, lk) = w.wk.forward(x);
    let (q2, lq2) = w.wq2.forward(x);
    let (k2, lk2) = w.wk2.forward(x);
    let (v, lv) = w.wv.forward(x);

    let inv = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut ctx = Matrix::zeros(x.rows(), d);
    let (mut z_m, mut z_k, mut p_m, mut p_k) = (vec![], vec![], vec![], vec![]);
    for h in 0..n_heads {
        let c = h * dh;
        let (zm, pm) = branch_scores(&q.col_block(c, dh), &k.col_block(c, dh), &b_m, inv);
        let (zk, pk) = branch_scores(&q2.col_block(c, dh), &k2.col_block(c, dh), &b_k, inv);
        let attn = pm.add(&pk);
        ctx.set_col_block(c, &attn.matmul(&v.col_block(c, dh)));
        z_m.push(zm);
        z_k.push(zk);
        p_m.push(pm);
        p_k.push(pk);
    }
    let (out, lo) = w.wo.forward(&ctx);
    Ok((
        out,
        PhysicsCache {
            q,
            k,
            q2,
            k2,
            v,
            b_m,
            b_k,
            z_m,
            z_k,
            p_m,
            p_k,
            ctx,
            m_eff,
            k_eff,
            lora: [lq, lk, lq2, lk2, lv, lo],
        },
    ))
}

/// Backward of one branch; returns `(dq_h, dk_h)` and adds into `db`.
#[allow(clippy::too_many_arguments)]
fn branch_backward<T: Scalar>(
    qh: &Matrix<T>,
    kh: &Matrix<T>,
    b: &Matrix<T>,
    z: &Matrix<T>,
    p: &Matrix<T>,
    dattn: &Matrix<T>,
    inv: f64,
    db: &mut Matrix<T>,
) -> (Matrix<T>, Matrix<T>) {
    let ds = softmax_rows_backward(p, dattn);
    let mut g = Matrix::zeros(z.rows(), z.cols());
    for ((o, s), zz) in g.data_mut().iter_mut().zip(ds.data()).zip(z.data()) {
        *o = T::from_f64(s.to_f64() * gelu_grad(zz.to_f64()) * inv);
    }
    let gk = g.matmul(kh);
    db.add_assign(&qh.matmul_tn(&gk));
    let dq = gk.matmul(b);
    let dk = g.matmul_tn(&qh.matmul(b));
    (dq, dk)
}

/// Gradient of `U diag(s) Uᵀ` given `dB`: adds `dU` and returns `ds`.
fn kernel_backward<T: Scalar>(u: &Matrix<T>, s: &[f64], db: &Matrix<T>, du: &mut Matrix<T>) -> Vec<f64> {
    let sym = db.add(&db.transpose());
    let su = sym.matmul(u);
    let mut ds = vec![0.0; s.len()];
    for (j, dsj) in ds.iter_mut().enumerate() {
        // u_jᵀ dB u_j
        let mut acc = 0.0;
        for a in 0..u.rows() {
            let mut row = 0.0;
            for c in 0..u.rows() {
                row += db.get(a, c).to_f64() * u.get(c, j).to_f64();
            }
            acc += u.get(a, j).to_f64() * row;
        }
        *dsj = acc;
        if s[j] != 0.0 {
            for a in 0..u.rows() {
                let cur = du.get(a, j);
                du.set(a, j, cur + T::from_f64(su.get(a, j).to_f64() * s[j]));
            }
        }
    }
    ds
}

pub fn physics_backward<T: Scalar>(
    x: &Matrix<T>,
    w: &PhysicsWeights<T>,
    n_heads: usize,
    story_mask: &[bool],
    cache: &PhysicsCache<T>,
    dout: &Matrix<T>,
    grad: &mut PhysicsWeights<T>,
) -> (Matrix<T>, StoryGrads) {
    let (n, d) = x.shape();
    let dh = d / n_heads;
    let inv = 1.0 / (dh as f64).sqrt();
    let [lq, lk, lq2, lk2, lv, lo] = &cache.lora;
    let dctx = w.wo.backward(&cache.ctx, lo.as_ref(), dout, &mut grad.wo);
    let mut dq = Matrix::zeros(n, d);
    let mut dk = Matrix::zeros(n, d);
    let mut dq2 = Matrix::zeros(n, d);
    let mut dk2 = Matrix::zeros(n, d);
    let mut dv = Matrix::zeros(n, d);
    let mut db_m = Matrix::zeros(dh, dh);
    let mut db_k = Matrix::zeros(dh, dh);
    for h in 0..n_heads {
        let c = h * dh;
        let dctx_h = dctx.col_block(c, dh);
        let vh = cache.v.col_block(c, dh);
        let attn = cache.p_m[h].add(&cache.p_k[h]);
        dv.set_col_block(c, &attn.matmul_tn(&dctx_h));
        let dattn = dctx_h.matmul_nt(&vh);
        let (a, b) = branch_backward(
            &cache.q.col_block(c, dh),
            &cache.k.col_block(c, dh),
            &cache.b_m,
            &cache.z_m[h],
            &cache.p_m[h],
            &dattn,
            inv,
            &mut db_m,
        );
        dq.set_col_block(c, &a);
        dk.set_col_block(c, &b);
        let (a, b) = branch_backward(
            &cache.q2.col_block(c, dh),
            &cache.k2.col_block(c, dh),
            &cache.b_k,
            &cache.z_k[h],
            &cache.p_k[h],
            &dattn,
            inv,
            &mut db_k,
        );
        dq2.set_col_block(c, &a);
        dk2.set_col_block(c, &b);
    }
    let dm = kernel_backward(&w.u_m, &cache.m_eff, &db_m, &mut grad.u_m);
    let dkv = kernel_backward(&w.u_k, &cache.k_eff, &db_k, &mut grad.u_k);

    let mut dx = w.wq.backward(x, lq.as_ref(), &dq, &mut grad.wq);
    dx.add_assign(&w.wk.backward(x, lk.as_ref(), &dk, &mut grad.wk));
    dx.add_assign(&w.wq2.backward(x, lq2.as_ref(), &dq2, &mut grad.wq2));
    dx.add_assign(&w.wk2.backward(x, lk2.as_ref(), &dk2, &mut grad.wk2));
    dx.add_assign(&w.wv.backward(x, lv.as_ref(), &dv, &mut grad.wv));
    let stories = StoryGrads {
        m_vec: masked(&dm, story_mask),
        k_vec: masked(&dkv, story_mask),
    };
    (dx, stories)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_exactly_symmetric() {
        let u = Matrix::from_fn(4, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.37 - 0.6);
        let b = story_kernel(&u, &[0.3, 1.7, 0.0]);
        assert_eq!(b, b.transpose());
    }

    #[test]
    fn layout_rejects_non_dividing_groups() {
        let l = HeadLayout {
            n_heads: 4,
            n_kv_groups: 3,
            d_head: 2,
        };
        assert!(l.validate().is_err());
        assert_eq!(
            HeadLayout {
                n_heads: 4,
                n_kv_groups: 2,
                d_head: 2
            }
            .kv_head(3),
            1
        );
    }
}
