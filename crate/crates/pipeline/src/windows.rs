//! Normalization and moving-window encoding.
//!
//! A sample is encoded once into normalized, clipped per-step arrays laid
//! out like the model's channels (`q * n_max + story`), then cut into
//! windows. Window `k` covers steps `[k * hop, k * hop + W)`, truncated at
//! the end of the sample; its history channel row `i` holds the response at
//! step `start - W + i` (zero before step 0). Samples shorter than `W` form
//! one window padded with zeros at the front.

use seisforge_core::dynamics::{Quantity, ResponseHistory};
use seisforge_core::ground_motion::GroundMotion;
use seisforge_core::structure::LumpedMassModel;
use seisforge_srfd::{SrfdConfig, StepInputs, N_QUANTITIES};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Response quantities the model predicts, in channel order.
pub const MODEL_QUANTITIES: [Quantity; N_QUANTITIES] = [Quantity::Displacement, Quantity::Acceleration];

/// Scales mapping physical units to normalized model units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    /// Time step of every sample, s.
    pub dt: f64,
    /// Root mean square of the ground acceleration, m/s².
    pub wave_rms: f64,
    /// Root mean square of floor displacement, m.
    pub disp_rms: f64,
    /// Root mean square of floor acceleration, m/s².
    pub accel_rms: f64,
}

fn rms_or_one(sum_sq: f64, n: usize) -> f64 {
    let r = (sum_sq / n.max(1) as f64).sqrt();
    if r.is_finite() && r > 0.0 {
        r
    } else {
        1.0
    }
}

impl NormStats {
    /// Root-mean-square scales over `samples` (about zero, not the mean).
    pub fn from_samples(samples: &[(&ResponseHistory, &GroundMotion)], dt: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("normalization needs at least one training sample"));
        }
        let (mut w, mut d, mut a) = (0.0, 0.0, 0.0);
        let (mut nw, mut nr) = (0, 0);
        for (h, gm) in samples {
            w += gm.samples().iter().map(|x| x * x).sum::<f64>();
            nw += gm.len();
            d += h.get(Quantity::Displacement).iter().map(|x| x * x).sum::<f64>();
            a += h.get(Quantity::Acceleration).iter().map(|x| x * x).sum::<f64>();
            nr += h.n_steps() * h.n_stories();
        }
        Ok(Self {
            dt,
            wave_rms: rms_or_one(w, nw),
            disp_rms: rms_or_one(d, nr),
            accel_rms: rms_or_one(a, nr),
        })
    }

    /// Scale of model quantity `q` (index into [`MODEL_QUANTITIES`]).
    pub fn scale(&self, q: usize) -> f64 {
        match q {
            0 => self.disp_rms,
            _ => self.accel_rms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("wave_rms", self.wave_rms),
            ("disp_rms", self.disp_rms),
            ("accel_rms", self.accel_rms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Format(format!("normalization `{name}` = {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("plain numeric struct")
    }

    pub fn from_table(t: &toml::Table) -> Result<Self> {
        let s: Self = t
            .clone()
            .try_into()
            .map_err(|e| Error::Format(format!("normalization table: {e}")))?;
        s.validate()?;
        Ok(s)
    }
}

/// A sample in model units, channel layout included.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub n_steps: usize,
    pub n_stories: usize,
    /// Normalized, clipped ground acceleration.
    pub wave: Vec<f64>,
    /// Normalized, clipped simplified response, `n_steps × out_channels`.
    pub sdr: Vec<f64>,
    /// Normalized target response, unclipped; empty when unknown.
    pub target: Vec<f64>,
    pub m_vec: Vec<f64>,
    pub k_vec: Vec<f64>,
    pub story_mask: Vec<bool>,
}

fn clip(v: f64, c: f64) -> f64 {
    v.clamp(-c, c)
}

/// Normalized story vectors: masses over the total mass, stiffnesses over
/// the largest story stiffness, zero-padded to `n_max`.
pub fn story_vectors(cfg: &SrfdConfig, model: &LumpedMassModel) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let n = model.n_stories();
    if n > cfg.n_max {
        return Err(Error::config(format!(
            "model has {n} stories, the checkpoint supports at most n_max = {}",
            cfg.n_max
        )));
    }
    let total = model.total_mass();
    let k_max = model.story_stiffness.iter().cloned().fold(0.0, f64::max);
    let mut m = vec![0.0; cfg.n_max];
    let mut k = vec![0.0; cfg.n_max];
    let mut mask = vec![false; cfg.n_max];
    for s in 0..n {
        m[s] = model.masses[s] / total;
        k[s] = model.story_stiffness[s] / k_max;
        mask[s] = true;
    }
    Ok((m, k, mask))
}

fn channels(cfg: &SrfdConfig, h: &ResponseHistory, stats: &NormStats, clip_at: Option<f64>) -> Vec<f64> {
    let (n, c) = (h.n_steps(), cfg.out_channels());
    let mut out = vec![0.0; n * c];
    for (q, &quantity) in MODEL_QUANTITIES.iter().enumerate() {
        let scale = stats.scale(q);
        let data = h.get(quantity);
        for s in 0..h.n_stories() {
            let ch = cfg.channel(q, s);
            for t in 0..n {
                let v = data[s * n + t] / scale;
                out[t * c + ch] = clip_at.map_or(v, |cl| clip(v, cl));
            }
        }
    }
    out
}

/// Encodes one sample. `wave` is the raw ground acceleration; `oracle` may
/// be absent at prediction time.
pub fn encode_sample(
    cfg: &SrfdConfig,
    stats: &NormStats,
    input_clip: f64,
    model: &LumpedMassModel,
    wave: &[f64],
    sdr: &ResponseHistory,
    oracle: Option<&ResponseHistory>,
) -> Result<EncodedSample> {
    let (m_vec, k_vec, story_mask) = story_vectors(cfg, model)?;
    let n = wave.len();
    let check = |h: &ResponseHistory, what: &str| {
        if h.n_steps() != n || h.n_stories() != model.n_stories() {
            Err(Error::Format(format!(
                "{what} response is {}x{}, expected {n} steps and {} stories",
                h.n_steps(),
                h.n_stories(),
                model.n_stories()
            )))
        } else {
            Ok(())
        }
    };
    check(sdr, "simplified")?;
    if let Some(o) = oracle {
        check(o, "oracle")?;
    }
    Ok(EncodedSample {
        n_steps: n,
        n_stories: model.n_stories(),
        wave: wave.iter().map(|x| clip(x / stats.wave_rms, input_clip)).collect(),
        sdr: channels(cfg, sdr, stats, Some(input_clip)),
        target: oracle.map(|o| channels(cfg, o, stats, None)).unwrap_or_default(),
        m_vec,
        k_vec,
        story_mask,
    })
}

/// Start steps of the windows over `n` steps: `⌈(n − W)/hop⌉ + 1` of them,
/// one when `n ≤ W`.
pub fn window_starts(n: usize, w: usize, hop: usize) -> Vec<usize> {
    assert!(hop >= 1 && w >= 1, "window and hop must be positive");
    let count = if n <= w { 1 } else { (n - w).div_ceil(hop) + 1 };
    (0..count).map(|k| k * hop).collect()
}

/// Placement of one window within its sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    /// Steps of the sample covered, `≤ W`.
    pub len: usize,
    /// Zero rows in front of the first covered step.
    pub pad: usize,
}

impl Span {
    pub fn rows(&self) -> usize {
        self.pad + self.len
    }
}

pub fn spans(n: usize, w: usize, hop: usize) -> Vec<Span> {
    if n < w {
        return vec![Span {
            start: 0,
            len: n,
            pad: w - n,
        }];
    }
    window_starts(n, w, hop)
        .into_iter()
        .map(|start| Span {
            start,
            len: w.min(n - start),
            pad: 0,
        })
        .collect()
}

/// One training window: model inputs plus the normalized target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub inputs: StepInputs,
    /// `rows × out_channels`; padded rows are zero.
    pub target: Vec<f64>,
    pub span: Span,
}

impl Window {
    /// Per-row loss weight: padded rows do not count.
    pub fn row_valid(&self, row: usize) -> bool {
        row >= self.span.pad
    }
}

/// Builds the inputs of window `span`; history row `i` takes
/// `history(step)` for `step = start − W + i`, zero before step 0.
pub fn window_inputs(
    cfg: &SrfdConfig,
    enc: &EncodedSample,
    span: Span,
    input_clip: f64,
    history: impl Fn(usize, usize) -> f64,
) -> StepInputs {
    let (w, c) = (cfg.window, cfg.out_channels());
    let rows = span.rows();
    let mut inp = StepInputs::zeros(cfg, rows);
    for i in 0..span.len {
        let (row, t) = (span.pad + i, span.start + i);
        inp.wave[row] = enc.wave[t];
        inp.sdr[row * c..(row + 1) * c].copy_from_slice(&enc.sdr[t * c..(t + 1) * c]);
    }
    if span.pad == 0 {
        for i in 0..rows {
            if let Some(t) = (span.start + i).checked_sub(w) {
                for ch in 0..c {
                    inp.history[i * c + ch] = clip(history(t, ch), input_clip);
                }
            }
        }
    }
    inp.m_vec.clone_from(&enc.m_vec);
    inp.k_vec.clone_from(&enc.k_vec);
    inp.story_mask.clone_from(&enc.story_mask);
    inp
}

/// Teacher-forced windows of an encoded sample with a known target.
pub fn make_windows(cfg: &SrfdConfig, enc: &EncodedSample, hop: usize, input_clip: f64) -> Result<Vec<Window>> {
    if hop == 0 {
        return Err(Error::config("hop must be at least 1"));
    }
    let c = cfg.out_channels();
    if enc.target.len() != enc.n_steps * c {
        return Err(Error::config("make_windows needs the sample's oracle response"));
    }
    let target_at = |t: usize, ch: usize| enc.target[t * c + ch];
    Ok(spans(enc.n_steps, cfg.window, hop)
        .into_iter()
        .map(|span| {
            let inputs = window_inputs(cfg, enc, span, input_clip, target_at);
            let mut target = vec![0.0; span.rows() * c];
            for i in 0..span.len {
                let (row, t) = (span.pad + i, span.start + i);
                target[row * c..(row + 1) * c].copy_from_slice(&enc.target[t * c..(t + 1) * c]);
            }
            Window { inputs, target, span }
        })
        .collect())
}
