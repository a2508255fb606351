//! The full decoder: embedding, physics conditioning, transformer blocks and
//! output head, with a forward tape and the matching backward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attention::{
    gqa_backward, gqa_forward, physics_backward, physics_forward, GqaCache, GqaWeights, HeadLayout, PhysicsCache,
    PhysicsWeights,
};
use crate::ffn::{swiglu_backward, swiglu_forward, FfnCache, FfnWeights};
use crate::linear::{Linear, LoraAdapter};
use crate::ops::{rms_norm, rms_norm_backward};
use crate::{Error, Matrix, Result, Scalar};

/// Response quantities predicted per story.
pub const N_QUANTITIES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrfdConfig {
    pub d_model: usize,
    /// Context window `W` in timesteps.
    pub window: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_kv_groups: usize,
    pub ffn_mult: f64,
    /// Largest supported story count.
    pub n_max: usize,
    pub rope_base: f64,
    #[serde(default)]
    pub lora_rank: usize,
    #[serde(default = "default_alpha")]
    pub lora_alpha: f64,
    /// One physics block per layer instead of a single conditioning block.
    #[serde(default)]
    pub physics_per_layer: bool,
}

fn default_alpha() -> f64 {
    8.0
}

impl Default for SrfdConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            window: 64,
            n_layers: 2,
            n_heads: 4,
            n_kv_groups: 2,
            ffn_mult: 2.0,
            n_max: 33,
            rope_base: 10_000.0,
            lora_rank: 0,
            lora_alpha: default_alpha(),
            physics_per_layer: false,
        }
    }
}

impl SrfdConfig {
    /// Smallest useful configuration, for checks and toy runs.
    pub fn tiny() -> Self {
        Self {
            d_model: 8,
            window: 8,
            n_layers: 1,
            n_heads: 2,
            n_kv_groups: 1,
            ffn_mult: 2.0,
            n_max: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model = {} is not a positive multiple of n_heads = {}",
                self.d_model, self.n_heads
            ));
        }
        if !self.d_head().is_multiple_of(2) {
            return bad(format!("d_head = {} must be even for rotary embedding", self.d_head()));
        }
        if self.n_kv_groups == 0 || !self.n_heads.is_multiple_of(self.n_kv_groups) {
            return bad(format!(
                "n_kv_groups = {} must divide n_heads = {}",
                self.n_kv_groups, self.n_heads
            ));
        }
        if self.window < 2 {
            return bad(format!("window = {} must be at least 2", self.window));
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1".into());
        }
        if !(self.ffn_mult.is_finite() && self.ffn_mult > 0.0) {
            return bad(format!("ffn_mult = {} must be positive", self.ffn_mult));
        }
        if !(self.rope_base.is_finite() && self.rope_base > 1.0) {
            return bad(format!("rope_base = {} must exceed 1", self.rope_base));
        }
        if !(self.lora_alpha.is_finite() && self.lora_alpha > 0.0) {
            return bad(format!("lora_alpha = {} must be positive", self.lora_alpha));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn out_channels(&self) -> usize {
        N_QUANTITIES * self.n_max
    }

    /// Per-timestep feature width: wave, history and simplified response.
    pub fn in_dim(&self) -> usize {
        1 + 2 * self.out_channels()
    }

    pub fn ffn_hidden(&self) -> usize {
        ((self.ffn_mult * self.d_model as f64).round() as usize).max(1)
    }

    pub fn layout(&self) -> HeadLayout {
        HeadLayout {
            n_heads: self.n_heads,
            n_kv_groups: self.n_kv_groups,
            d_head: self.d_head(),
        }
    }

    fn n_physics(&self) -> usize {
        if self.physics_per_layer {
            self.n_layers
        } else {
            1
        }
    }

    /// Output channel of `quantity` (0 displacement, 1 acceleration) at `story`.
    pub fn channel(&self, quantity: usize, story: usize) -> usize {
        quantity * self.n_max + story
    }
}

/// Inputs of one window. Per-channel arrays are row-major `W × out_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInputs {
    pub wave: Vec<f64>,
    pub history: Vec<f64>,
    pub sdr: Vec<f64>,
    pub m_vec: Vec<f64>,
    pub k_vec: Vec<f64>,
    pub story_mask: Vec<bool>,
}

impl StepInputs {
    pub fn zeros(cfg: &SrfdConfig, w: usize) -> Self {
        let c = cfg.out_channels();
        Self {
            wave: vec![0.0; w],
            history: vec![0.0; w * c],
            sdr: vec![0.0; w * c],
            m_vec: vec![0.0; cfg.n_max],
            k_vec: vec![0.0; cfg.n_max],
            story_mask: vec![false; cfg.n_max],
        }
    }

    pub fn len(&self) -> usize {
        self.wave.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wave.is_empty()
    }

    pub fn validate(&self, cfg: &SrfdConfig) -> Result<()> {
        let w = self.wave.len();
        let c = cfg.out_channels();
        if w == 0 || w > cfg.window {
            return Err(Error::Config(format!("window of {w} steps outside 1..={}", cfg.window)));
        }
        if self.history.len() != w * c || self.sdr.len() != w * c {
            return Err(Error::Config(format!(
                "history/sdr must hold {w}x{c} values, got {} and {}",
                self.history.len(),
                self.sdr.len()
            )));
        }
        if self.m_vec.len() != cfg.n_max || self.k_vec.len() != cfg.n_max || self.story_mask.len() != cfg.n_max {
            return Err(Error::Config(format!(
                "story vectors must have n_max = {} entries",
                cfg.n_max
            )));
        }
        Ok(())
    }

    /// Feature matrix `[wave_t, history_t, sdr_t]`, one row per timestep.
    pub fn features<T: Scalar>(&self, cfg: &SrfdConfig) -> Matrix<T> {
        let c = cfg.out_channels();
        Matrix::from_fn(self.wave.len(), cfg.in_dim(), |t, j| {
            let v = if j == 0 {
                self.wave[t]
            } else if j <= c {
                self.history[t * c + j - 1]
            } else {
                self.sdr[t * c + j - 1 - c]
            };
            T::from_f64(v)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights<T> {
    pub attn_norm: Matrix<T>,
    pub attn: GqaWeights<T>,
    pub ffn_norm: Matrix<T>,
    pub ffn: FfnWeights<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrfdWeights<T> {
    pub embed: Linear<T>,
    /// One conditioning block, or one per layer.
    pub physics: Vec<PhysicsWeights<T>>,
    pub blocks: Vec<BlockWeights<T>>,
    pub final_norm: Matrix<T>,
    pub head: Linear<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Base,
    Adapter,
}

/// A named parameter array. `R` is `&Matrix` or `&mut Matrix`.
#[derive(Debug)]
pub struct Param<R> {
    pub name: String,
    pub kind: ParamKind,
    pub value: R,
}

fn push_linear<'a, T>(out: &mut Vec<Param<&'a Matrix<T>>>, name: &str, l: &'a Linear<T>) {
    out.push(Param {
        name: format!("{name}.weight"),
        kind: ParamKind::Base,
        value: &l.weight,
    });
    if let Some(b) = &l.bias {
        out.push(Param {
            name: format!("{name}.bias"),
            kind: ParamKind::Base,
            value: b,
        });
    }
    if let Some(lo) = &l.lora {
        for (suffix, m) in [("lora_a", &lo.a), ("lora_b", &lo.b)] {
            out.push(Param {
                name: format!("{name}.{suffix}"),
                kind: ParamKind::Adapter,
                value: m,
            });
        }
    }
}

fn push_linear_mut<'a, T>(out: &mut Vec<Param<&'a mut Matrix<T>>>, name: &str, l: &'a mut Linear<T>) {
    out.push(Param {
        name: format!("{name}.weight"),
        kind: ParamKind::Base,
        value: &mut l.weight,
    });
    if let Some(b) = &mut l.bias {
        out.push(Param {
            name: format!("{name}.bias"),
            kind: ParamKind::Base,
            value: b,
        });
    }
    if let Some(lo) = &mut l.lora {
        out.push(Param {
            name: format!("{name}.lora_a"),
            kind: ParamKind::Adapter,
            value: &mut lo.a,
        });
        out.push(Param {
            name: format!("{name}.lora_b"),
            kind: ParamKind::Adapter,
            value: &mut lo.b,
        });
    }
}

fn base<R>(name: String, value: R) -> Param<R> {
    Param {
        name,
        kind: ParamKind::Base,
        value,
    }
}

impl<T: Scalar> SrfdWeights<T> {
    /// Random initialization: weights `N(0, 1/d_in)`, story projections
    /// `N(0, 1)`, gains one, biases zero.
    pub fn init(cfg: &SrfdConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |rows: usize, cols: usize, std: f64| {
            Matrix::from_fn(rows, cols, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::from_f64(z * std)
            })
        };
        let mut lin = |d_in: usize, d_out: usize, bias: bool| {
            let w = normal(d_out, d_in, 1.0 / (d_in as f64).sqrt());
            Linear::new(w, bias.then(|| Matrix::zeros(1, d_out)))
        };
        let (d, dh, n_max) = (cfg.d_model, cfg.d_head(), cfg.n_max);
        let dkv = cfg.n_kv_groups * dh;
        let hidden = cfg.ffn_hidden();
        let ones = |n: usize| Matrix::from_vec(1, n, vec![T::ONE; n]);

        let embed = lin(cfg.in_dim(), d, true);
        let mut physics = Vec::new();
        for _ in 0..cfg.n_physics() {
            physics.push(PhysicsWeights {
                norm: ones(d),
                wq: lin(d, d, false),
                wk: lin(d, d, false),
                wq2: lin(d, d, false),
                wk2: lin(d, d, false),
                wv: lin(d, d, false),
                wo: lin(d, d, false),
                u_m: Matrix::zeros(dh, n_max),
                u_k: Matrix::zeros(dh, n_max),
            });
        }
        let mut blocks = Vec::new();
        for _ in 0..cfg.n_layers {
            blocks.push(BlockWeights {
                attn_norm: ones(d),
                attn: GqaWeights {
                    wq: lin(d, d, false),
                    wk: lin(d, dkv, false),
                    wv: lin(d, dkv, false),
                    wo: lin(d, d, false),
                },
                ffn_norm: ones(d),
                ffn: FfnWeights {
                    gate: lin(d, hidden, false),
                    up: lin(d, hidden, false),
                    down: lin(hidden, d, false),
                },
            });
        }
        let head = lin(d, cfg.out_channels(), true);
        for p in &mut physics {
            p.u_m = normal(dh, n_max, 1.0);
            p.u_k = normal(dh, n_max, 1.0);
        }
        Ok(Self {
            embed,
            physics,
            blocks,
            final_norm: ones(d),
            head,
        })
    }

    /// Rebuilds the structure with every linear map and array transformed.
    pub fn map<U: Scalar>(
        &self,
        fl: impl Fn(&Linear<T>) -> Linear<U>,
        fm: impl Fn(&Matrix<T>) -> Matrix<U>,
    ) -> SrfdWeights<U> {
        SrfdWeights {
            embed: fl(&self.embed),
            physics: self
                .physics
                .iter()
                .map(|p| PhysicsWeights {
                    norm: fm(&p.norm),
                    wq: fl(&p.wq),
                    wk: fl(&p.wk),
                    wq2: fl(&p.wq2),
                    wk2: fl(&p.wk2),
                    wv: fl(&p.wv),
                    wo: fl(&p.wo),
                    u_m: fm(&p.u_m),
                    u_k: fm(&p.u_k),
                })
                .collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockWeights {
                    attn_norm: fm(&b.attn_norm),
                    attn: GqaWeights {
                        wq: fl(&b.attn.wq),
                        wk: fl(&b.attn.wk),
                        wv: fl(&b.attn.wv),
                        wo: fl(&b.attn.wo),
                    },
                    ffn_norm: fm(&b.ffn_norm),
                    ffn: FfnWeights {
                        gate: fl(&b.ffn.gate),
                        up: fl(&b.ffn.up),
                        down: fl(&b.ffn.down),
                    },
                })
                .collect(),
            final_norm: fm(&self.final_norm),
            head: fl(&self.head),
        }
    }

    pub fn cast<U: Scalar>(&self) -> SrfdWeights<U> {
        self.map(Linear::cast, Matrix::cast)
    }

    pub fn zeros_like(&self) -> Self {
        self.map(Linear::zeros_like, |m| Matrix::zeros(m.rows(), m.cols()))
    }

    /// Every parameter array in declaration order.
    pub fn params(&self) -> Vec<Param<&Matrix<T>>> {
        let mut out = Vec::new();
        push_linear(&mut out, "embed", &self.embed);
        for (i, p) in self.physics.iter().enumerate() {
            let n = format!("physics.{i}");
            out.push(base(format!("{n}.norm"), &p.norm));
            for (s, l) in [
                ("wq", &p.wq),
                ("wk", &p.wk),
                ("wq2", &p.wq2),
                ("wk2", &p.wk2),
                ("wv", &p.wv),
                ("wo", &p.wo),
            ] {
                push_linear(&mut out, &format!("{n}.{s}"), l);
            }
            out.push(base(format!("{n}.u_m"), &p.u_m));
            out.push(base(format!("{n}.u_k"), &p.u_k));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let n = format!("blocks.{i}");
            out.push(base(format!("{n}.attn_norm"), &b.attn_norm));
            for (s, l) in [
                ("wq", &b.attn.wq),
                ("wk", &b.attn.wk),
                ("wv", &b.attn.wv),
                ("wo", &b.attn.wo),
            ] {
                push_linear(&mut out, &format!("{n}.attn.{s}"), l);
            }
            out.push(base(format!("{n}.ffn_norm"), &b.ffn_norm));
            for (s, l) in [("gate", &b.ffn.gate), ("up", &b.ffn.up), ("down", &b.ffn.down)] {
                push_linear(&mut out, &format!("{n}.ffn.{s}"), l);
            }
        }
        out.push(base("final_norm".into(), &self.final_norm));
        push_linear(&mut out, "head", &self.head);
        out
    }

    /// Mutable view of [`params`](Self::params), same order and names.
    pub fn params_mut(&mut self) -> Vec<Param<&mut Matrix<T>>> {
        let mut out = Vec::new();
        push_linear_mut(&mut out, "embed", &mut self.embed);
        for (i, p) in self.physics.iter_mut().enumerate() {
            let n = format!("physics.{i}");
            out.push(base(format!("{n}.norm"), &mut p.norm));
            for (s, l) in [
                ("wq", &mut p.wq),
                ("wk", &mut p.wk),
                ("wq2", &mut p.wq2),
                ("wk2", &mut p.wk2),
                ("wv", &mut p.wv),
                ("wo", &mut p.wo),
            ] {
                push_linear_mut(&mut out, &format!("{n}.{s}"), l);
            }
            out.push(base(format!("{n}.u_m"), &mut p.u_m));
            out.push(base(format!("{n}.u_k"), &mut p.u_k));
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let n = format!("blocks.{i}");
            out.push(base(format!("{n}.attn_norm"), &mut b.attn_norm));
            for (s, l) in [
                ("wq", &mut b.attn.wq),
                ("wk", &mut b.attn.wk),
                ("wv", &mut b.attn.wv),
                ("wo", &mut b.attn.wo),
            ] {
                push_linear_mut(&mut out, &format!("{n}.attn.{s}"), l);
            }
            out.push(base(format!("{n}.ffn_norm"), &mut b.ffn_norm));
            for (s, l) in [
                ("gate", &mut b.ffn.gate),
                ("up", &mut b.ffn.up),
                ("down", &mut b.ffn.down),
            ] {
                push_linear_mut(&mut out, &format!("{n}.ffn.{s}"), l);
            }
        }
        out.push(base("final_norm".into(), &mut self.final_norm));
        push_linear_mut(&mut out, "head", &mut self.head);
        out
    }

    pub fn n_values(&self, kind: ParamKind) -> usize {
        self.params()
            .iter()
            .filter(|p| p.kind == kind)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.value.is_finite())
    }

    fn attention_maps_mut(&mut self) -> Vec<&mut Linear<T>> {
        let mut maps = Vec::new();
        for p in &mut self.physics {
            maps.extend([&mut p.wq, &mut p.wk, &mut p.wq2, &mut p.wk2, &mut p.wv, &mut p.wo]);
        }
        for b in &mut self.blocks {
            maps.extend([&mut b.attn.wq, &mut b.attn.wk, &mut b.attn.wv, &mut b.attn.wo]);
        }
        maps
    }

    /// Attaches rank-`r` adapters to every attention map: `A ~ N(0, 1/d_in)`,
    /// `B = 0`, so the model's outputs are unchanged.
    pub fn attach_lora(&mut self, rank: usize, alpha: f64, seed: u64) -> Result<()> {
        if rank == 0 {
            return Err(Error::Config("adapter rank must be at least 1".into()));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!("adapter alpha = {alpha} must be positive")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in self.attention_maps_mut() {
            let std = 1.0 / (l.d_in() as f64).sqrt();
            let a = Matrix::from_fn(rank, l.d_in(), |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::from_f64(z * std)
            });
            let b = Matrix::zeros(l.d_out(), rank);
            l.lora = Some(LoraAdapter {
                a,
                b,
                scale: alpha / rank as f64,
            });
        }
        Ok(())
    }

    pub fn detach_lora(&mut self) {
        for l in self.attention_maps_mut() {
            l.lora = None;
        }
    }

    pub fn has_lora(&self) -> bool {
        self.params().iter().any(|p| p.kind == ParamKind::Adapter)
    }

    /// Checks array shapes against `cfg`.
    pub fn check_shapes(&self, cfg: &SrfdConfig) -> Result<()> {
        cfg.validate()?;
        let reference = SrfdWeights::<T>::init(cfg, 0)?;
        let (mine, theirs) = (self.params(), reference.params());
        let base_only: Vec<_> = mine.iter().filter(|p| p.kind == ParamKind::Base).collect();
        if base_only.len() != theirs.len() {
            return Err(Error::Config(format!(
                "expected {} weight arrays, found {}",
                theirs.len(),
                base_only.len()
            )));
        }
        for (a, b) in base_only.iter().zip(&theirs) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Config(format!(
                    "array `{}` {:?} does not match expected `{}` {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Normed<T> {
    input: Matrix<T>,
    output: Matrix<T>,
    inv_rms: Vec<f64>,
}

fn normed<T: Scalar>(x: &Matrix<T>, gain: &Matrix<T>) -> Normed<T> {
    let (output, inv_rms) = rms_norm(x, gain.data());
    Normed {
        input: x.clone(),
        output,
        inv_rms,
    }
}

fn normed_backward<T: Scalar>(n: &Normed<T>, gain: &Matrix<T>, dy: &Matrix<T>, dgain: &mut Matrix<T>) -> Matrix<T> {
    rms_norm_backward(&n.input, gain.data(), &n.inv_rms, dy, dgain.data_mut())
}

#[derive(Debug, Clone)]
struct PhysicsStage<T> {
    norm: Normed<T>,
    cache: PhysicsCache<T>,
}

#[derive(Debug, Clone)]
struct BlockStage<T> {
    physics: Option<PhysicsStage<T>>,
    attn_norm: Normed<T>,
    gqa: GqaCache<T>,
    ffn_norm: Normed<T>,
    ffn: FfnCache<T>,
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    features: Matrix<T>,
    embed_lora: Option<Matrix<T>>,
    pre: Option<PhysicsStage<T>>,
    blocks: Vec<BlockStage<T>>,
    final_norm: Normed<T>,
    head_lora: Option<Matrix<T>>,
    story_mask: Vec<bool>,
}

/// Intermediates retained by a forward pass for [`backward`].
#[derive(Debug, Clone)]
pub struct Tape<T> {
    cache: Option<ForwardCache<T>>,
}

impl<T> Default for Tape<T> {
    fn default() -> Self {
        Self { cache: None }
    }
}

impl<T> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_none()
    }

    pub fn clear(&mut self) {
        self.cache = None;
    }
}

/// Gradients of a scalar objective with respect to weights and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: SrfdWeights<T>,
    /// `W × in_dim`, laid out like [`StepInputs::features`].
    pub features: Matrix<T>,
    pub m_vec: Vec<f64>,
    pub k_vec: Vec<f64>,
}

fn physics_stage<T: Scalar>(
    h: &Matrix<T>,
    w: &PhysicsWeights<T>,
    cfg: &SrfdConfig,
    inputs: &StepInputs,
) -> Result<(Matrix<T>, PhysicsStage<T>)> {
    let norm = normed(h, &w.norm);
    let (y, cache) = physics_forward(
        &norm.output,
        w,
        cfg.n_heads,
        &inputs.m_vec,
        &inputs.k_vec,
        &inputs.story_mask,
    )?;
    Ok((h.add(&y), PhysicsStage { norm, cache }))
}

fn mask_channels<T: Scalar>(y: &mut Matrix<T>, cfg: &SrfdConfig, mask: &[bool]) {
    for (s, &keep) in mask.iter().enumerate() {
        if keep {
            continue;
        }
        for q in 0..N_QUANTITIES {
            let c = cfg.channel(q, s);
            for t in 0..y.rows() {
                y.set(t, c, T::ZERO);
            }
        }
    }
}

fn run<T: Scalar>(cfg: &SrfdConfig, w: &SrfdWeights<T>, inputs: &StepInputs) -> Result<(Matrix<T>, ForwardCache<T>)> {
    cfg.validate()?;
    inputs.validate(cfg)?;
    if w.physics.len() != cfg.n_physics() || w.blocks.len() != cfg.n_layers {
        return Err(Error::Config(format!(
            "weights hold {} physics blocks and {} layers, config needs {} and {}",
            w.physics.len(),
            w.blocks.len(),
            cfg.n_physics(),
            cfg.n_layers
        )));
    }
    let features = inputs.features::<T>(cfg);
    if w.embed.d_in() != cfg.in_dim() || w.head.d_out() != cfg.out_channels() {
        return Err(Error::Config("embedding or head shape disagrees with config".into()));
    }
    let (mut h, embed_lora) = w.embed.forward(&features);
    let pre = if cfg.physics_per_layer {
        None
    } else {
        let (next, stage) = physics_stage(&h, &w.physics[0], cfg, inputs)?;
        h = next;
        Some(stage)
    };
    let layout = cfg.layout();
    let mut blocks = Vec::with_capacity(cfg.n_layers);
    for (l, b) in w.blocks.iter().enumerate() {
        let physics = if cfg.physics_per_layer {
            let (next, stage) = physics_stage(&h, &w.physics[l], cfg, inputs)?;
            h = next;
            Some(stage)
        } else {
            None
        };
        let attn_norm = normed(&h, &b.attn_norm);
        let (a, gqa) = gqa_forward(&attn_norm.output, &b.attn, &layout, cfg.rope_base)?;
        h.add_assign(&a);
        let ffn_norm = normed(&h, &b.ffn_norm);
        let (f, ffn) = swiglu_forward(&ffn_norm.output, &b.ffn);
        h.add_assign(&f);
        blocks.push(BlockStage {
            physics,
            attn_norm,
            gqa,
            ffn_norm,
            ffn,
        });
    }
    let final_norm = normed(&h, &w.final_norm);
    let (mut y, head_lora) = w.head.forward(&final_norm.output);
    mask_channels(&mut y, cfg, &inputs.story_mask);
    Ok((
        y,
        ForwardCache {
            features,
            embed_lora,
            pre,
            blocks,
            final_norm,
            head_lora,
            story_mask: inputs.story_mask.clone(),
        },
    ))
}

/// Output `W × out_channels`; channels of masked stories are zero.
pub fn forward<T: Scalar>(cfg: &SrfdConfig, w: &SrfdWeights<T>, inputs: &StepInputs) -> Result<Matrix<T>> {
    run(cfg, w, inputs).map(|(y, _)| y)
}

/// Like [`forward`], keeping intermediates in `tape`.
pub fn forward_with_tape<T: Scalar>(
    cfg: &SrfdConfig,
    w: &SrfdWeights<T>,
    inputs: &StepInputs,
    tape: &mut Tape<T>,
) -> Result<Matrix<T>> {
    let (y, cache) = run(cfg, w, inputs)?;
    tape.cache = Some(cache);
    Ok(y)
}

#[allow(clippy::too_many_arguments)]
fn physics_stage_backward<T: Scalar>(
    stage: &PhysicsStage<T>,
    w: &PhysicsWeights<T>,
    g: &mut PhysicsWeights<T>,
    cfg: &SrfdConfig,
    mask: &[bool],
    dh: &mut Matrix<T>,
    dm: &mut [f64],
    dk: &mut [f64],
) {
    let (dx, stories) = physics_backward(&stage.norm.output, w, cfg.n_heads, mask, &stage.cache, dh, g);
    let branch = normed_backward(&stage.norm, &w.norm, &dx, &mut g.norm);
    dh.add_assign(&branch);
    for (a, b) in dm.iter_mut().zip(&stories.m_vec) {
        *a += b;
    }
    for (a, b) in dk.iter_mut().zip(&stories.k_vec) {
        *a += b;
    }
}

/// Reverse pass for the forward recorded in `tape`, given `dy = ∂L/∂output`.
pub fn backward<T: Scalar>(
    cfg: &SrfdConfig,
    w: &SrfdWeights<T>,
    tape: &Tape<T>,
    dy: &Matrix<T>,
) -> Result<Gradients<T>> {
    let cache = tape
        .cache
        .as_ref()
        .ok_or_else(|| Error::Usage("backward called without a recorded forward pass".into()))?;
    let n = cache.features.rows();
    if dy.shape() != (n, cfg.out_channels()) {
        return Err(Error::Config(format!(
            "output gradient is {}x{}, expected {n}x{}",
            dy.rows(),
            dy.cols(),
            cfg.out_channels()
        )));
    }
    let mut g = w.zeros_like();
    let mut dm = vec![0.0; cfg.n_max];
    let mut dk = vec![0.0; cfg.n_max];
    let mut dy = dy.clone();
    mask_channels(&mut dy, cfg, &cache.story_mask);

    let dn = w
        .head
        .backward(&cache.final_norm.output, cache.head_lora.as_ref(), &dy, &mut g.head);
    let mut dh = normed_backward(&cache.final_norm, &w.final_norm, &dn, &mut g.final_norm);
    let layout = cfg.layout();
    for (l, stage) in cache.blocks.iter().enumerate().rev() {
        let (bw, bg) = (&w.blocks[l], &mut g.blocks[l]);
        let df = swiglu_backward(&stage.ffn_norm.output, &bw.ffn, &stage.ffn, &dh, &mut bg.ffn);
        let branch = normed_backward(&stage.ffn_norm, &bw.ffn_norm, &df, &mut bg.ffn_norm);
        dh.add_assign(&branch);
        let da = gqa_backward(
            &stage.attn_norm.output,
            &bw.attn,
            &layout,
            cfg.rope_base,
            &stage.gqa,
            &dh,
            &mut bg.attn,
        )?;
        let branch = normed_backward(&stage.attn_norm, &bw.attn_norm, &da, &mut bg.attn_norm);
        dh.add_assign(&branch);
        if let Some(ps) = &stage.physics {
            physics_stage_backward(
                ps,
                &w.physics[l],
                &mut g.physics[l],
                cfg,
                &cache.story_mask,
                &mut dh,
                &mut dm,
                &mut dk,
            );
        }
    }
    if let Some(ps) = &cache.pre {
        physics_stage_backward(
            ps,
            &w.physics[0],
            &mut g.physics[0],
            cfg,
            &cache.story_mask,
            &mut dh,
            &mut dm,
            &mut dk,
        );
    }
    let features = w
        .embed
        .backward(&cache.features, cache.embed_lora.as_ref(), &dh, &mut g.embed);
    Ok(Gradients {
        weights: g,
        features,
        m_vec: dm,
        k_vec: dk,
    })
}
