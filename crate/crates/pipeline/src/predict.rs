//! Free-running rollout and split evaluation.

use rayon::prelude::*;
use seisforge_core::dynamics::{IntegratorParams, Quantity, ResponseHistory};
use seisforge_core::ground_motion::{GroundMotion, MotionSource};
use seisforge_core::structure::LumpedMassModel;
use seisforge_srfd::{forward, AdapterCheckpoint, Checkpoint, SrfdConfig, SrfdWeights};

use crate::dataset::{simplified_response, Dataset, Split};
use crate::metrics::{reduce_report, Accumulator, EvalReport, SampleErrors};
use crate::windows::{encode_sample, spans, window_inputs, EncodedSample, NormStats, MODEL_QUANTITIES};
use crate::{Error, Result};

pub const EXTRA_NORMALIZATION: &str = "normalization";
pub const EXTRA_INPUT_CLIP: &str = "input_clip";

/// Relative tolerance between a motion's step and the checkpoint's.
const DT_TOLERANCE: f64 = 1e-9;

/// Quantities reported by [`evaluate`].
pub const REPORT_QUANTITIES: [&str; 2] = ["displacement", "acceleration"];

/// A checkpoint ready for inference.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub config: SrfdConfig,
    pub weights: SrfdWeights<f32>,
    pub stats: NormStats,
    pub input_clip: f64,
}

fn read_extra(extra: &toml::Table) -> Result<(NormStats, f64)> {
    let stats = extra
        .get(EXTRA_NORMALIZATION)
        .and_then(toml::Value::as_table)
        .ok_or_else(|| Error::Format("checkpoint carries no normalization statistics".into()))
        .and_then(NormStats::from_table)?;
    let clip = extra
        .get(EXTRA_INPUT_CLIP)
        .and_then(toml::Value::as_float)
        .ok_or_else(|| Error::Format("checkpoint carries no input clip".into()))?;
    Ok((stats, clip))
}

impl Predictor {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let (stats, input_clip) = read_extra(&ckpt.extra)?;
        Ok(Self {
            config: ckpt.config.clone(),
            weights: ckpt.weights.clone(),
            stats,
            input_clip,
        })
    }

    /// Base checkpoint with an adapter merged in; fails if the adapter was
    /// trained against a different base.
    pub fn with_adapter(base: &Checkpoint, adapter: &AdapterCheckpoint) -> Result<Self> {
        let mut p = Self::from_checkpoint(base)?;
        p.weights = adapter.apply(base)?;
        Ok(p)
    }

    /// Normalized predictions `n_steps × out_channels` for an encoded sample,
    /// windows of `W` steps, each fed the previous window's own output as
    /// history.
    pub fn rollout_normalized(&self, enc: &EncodedSample) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let c = cfg.out_channels();
        let mut pred = vec![0.0; enc.n_steps * c];
        for span in spans(enc.n_steps, cfg.window, cfg.window) {
            let inputs = window_inputs(cfg, enc, span, self.input_clip, |t, ch| pred[t * c + ch]);
            let y = forward(cfg, &self.weights, &inputs)?;
            for i in 0..span.len {
                let (row, t) = (span.pad + i, span.start + i);
                for ch in 0..c {
                    pred[t * c + ch] = y.get(row, ch) as f64;
                }
            }
        }
        Ok(pred)
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if (dt - self.stats.dt).abs() > DT_TOLERANCE * self.stats.dt {
            return Err(Error::config(format!(
                "motion dt = {dt} s differs from the checkpoint's {} s; resample it first",
                self.stats.dt
            )));
        }
        Ok(())
    }

    /// Rollout over raw ground-acceleration samples at the checkpoint's dt.
    /// Any length of at least one step is accepted.
    pub fn rollout_samples(&self, model: &LumpedMassModel, wave: &[f64]) -> Result<ResponseHistory> {
        if wave.is_empty() {
            return Err(Error::config("ground motion has no samples"));
        }
        let dt = self.stats.dt;
        // the simulator needs two samples; a trailing zero does not change
        // the response at step 0
        let mut padded = wave.to_vec();
        if padded.len() < 2 {
            padded.push(0.0);
        }
        let gm = GroundMotion::new("rollout", dt, padded, MotionSource::Imported)?;
        let p = IntegratorParams::average_acceleration(dt);
        let sdr = truncate_history(&simplified_response(model, &gm, &p)?, wave.len())?;
        let enc = encode_sample(&self.config, &self.stats, self.input_clip, model, wave, &sdr, None)?;
        let pred = self.rollout_normalized(&enc)?;
        self.decode(&enc, &pred)
    }

    pub fn predict_rollout(&self, model: &LumpedMassModel, gm: &GroundMotion) -> Result<ResponseHistory> {
        self.check_dt(gm.dt())?;
        self.rollout_samples(model, gm.samples())
    }

    /// Physical response from normalized predictions. Velocity is the
    /// central difference of displacement (one-sided at the ends).
    fn decode(&self, enc: &EncodedSample, pred: &[f64]) -> Result<ResponseHistory> {
        let (n, ns, c) = (enc.n_steps, enc.n_stories, self.config.out_channels());
        let dt = self.stats.dt;
        let mut u = vec![0.0; ns * n];
        let mut a = vec![0.0; ns * n];
        for s in 0..ns {
            for t in 0..n {
                u[s * n + t] = pred[t * c + self.config.channel(0, s)] * self.stats.scale(0);
                a[s * n + t] = pred[t * c + self.config.channel(1, s)] * self.stats.scale(1);
            }
        }
        let mut v = vec![0.0; ns * n];
        if n > 1 {
            for s in 0..ns {
                let x = &u[s * n..(s + 1) * n];
                let out = &mut v[s * n..(s + 1) * n];
                out[0] = (x[1] - x[0]) / dt;
                out[n - 1] = (x[n - 1] - x[n - 2]) / dt;
                for t in 1..n - 1 {
                    out[t] = (x[t + 1] - x[t - 1]) / (2.0 * dt);
                }
            }
        }
        Ok(ResponseHistory::from_parts(dt, ns, n, u, v, a)?)
    }
}

/// First `n` steps of `h`.
pub fn truncate_history(h: &ResponseHistory, n: usize) -> Result<ResponseHistory> {
    let (steps, ns) = (h.n_steps(), h.n_stories());
    if n > steps {
        return Err(Error::config(format!("cannot truncate {steps} steps to {n}")));
    }
    let cut = |q| -> Vec<f64> {
        let d = h.get(q);
        (0..ns)
            .flat_map(|s| d[s * steps..s * steps + n].iter().copied())
            .collect()
    };
    Ok(ResponseHistory::from_parts(
        h.dt(),
        ns,
        n,
        cut(Quantity::Displacement),
        cut(Quantity::Velocity),
        cut(Quantity::Acceleration),
    )?)
}

/// Rollout with a checkpoint file's contents.
pub fn predict_rollout(ckpt: &Checkpoint, model: &LumpedMassModel, gm: &GroundMotion) -> Result<ResponseHistory> {
    Predictor::from_checkpoint(ckpt)?.predict_rollout(model, gm)
}

/// Normalized per-floor errors of one rollout against the oracle.
pub fn sample_errors(
    stats: &NormStats,
    sample_id: &str,
    pred: &ResponseHistory,
    oracle: &ResponseHistory,
) -> SampleErrors {
    let n = oracle.n_steps();
    let floors = MODEL_QUANTITIES
        .iter()
        .enumerate()
        .map(|(q, &quantity)| {
            let scale = stats.scale(q);
            let (p, t) = (pred.get(quantity), oracle.get(quantity));
            (0..oracle.n_stories())
                .map(|s| {
                    let mut acc = Accumulator::default();
                    for i in s * n..(s + 1) * n {
                        acc.push(p[i] / scale, t[i] / scale);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    SampleErrors {
        sample_id: sample_id.to_string(),
        floors,
    }
}

/// Rolls out every sample of `split` and compares against the oracle.
pub fn evaluate(predictor: &Predictor, ds: &Dataset, split: Split) -> Result<EvalReport> {
    evaluate_entries(predictor, ds, &ds.entries(split), &split.to_string())
}

/// Like [`evaluate`] over an explicit sample list.
pub fn evaluate_entries(
    predictor: &Predictor,
    ds: &Dataset,
    entries: &[&crate::dataset::SampleEntry],
    label: &str,
) -> Result<EvalReport> {
    if entries.is_empty() {
        return Err(Error::config(format!("split `{label}` has no samples")));
    }
    let per_sample = entries
        .par_iter()
        .map(|e| {
            let s = ds.load(e)?;
            let pred = predictor.predict_rollout(&s.model, &s.motion)?;
            Ok(sample_errors(&predictor.stats, &s.sample_id, &pred, &s.oracle))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce_report(label, &REPORT_QUANTITIES, &per_sample, 5))
}
