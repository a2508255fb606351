//! Windowed teacher-forced training and adapter fine-tuning.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use seisforge_core::rng;
use seisforge_srfd::{
    backward, forward, forward_with_tape, AdapterCheckpoint, Checkpoint, Matrix, ParamKind, SrfdConfig, SrfdWeights,
    Tape,
};
use serde::{Deserialize, Serialize};

use crate::config::{FinetuneConfig, OptimConfig, TrainConfig};
use crate::dataset::{Dataset, Split, TrainingSample};
use crate::metrics::masked_loss;
use crate::optim::{clip_global_norm, lr_at, Adam};
use crate::predict::{EXTRA_INPUT_CLIP, EXTRA_NORMALIZATION};
use crate::windows::{encode_sample, make_windows, window_inputs, EncodedSample, NormStats, Span, Window};
use crate::{Error, Result};

/// One optimizer step of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss,lr,grad_norm\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.step, r.loss, r.lr, r.grad_norm));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

struct TaggedWindow {
    id: String,
    sample: usize,
    window: Window,
}

struct Job<'a> {
    cfg: &'a SrfdConfig,
    optim: &'a OptimConfig,
    seed: u64,
    input_clip: f64,
    encoded: &'a [EncodedSample],
    windows: &'a [TaggedWindow],
    kind: ParamKind,
}

/// Gradient arrays of the trainable parameters, flattened to f64.
fn trainable_grads(g: &SrfdWeights<f32>, kind: ParamKind) -> Vec<Vec<f64>> {
    g.params()
        .into_iter()
        .filter(|p| p.kind == kind)
        .map(|p| p.value.data().iter().map(|&x| x as f64).collect())
        .collect()
}

fn sizes(w: &SrfdWeights<f32>, kind: ParamKind) -> Vec<usize> {
    w.params()
        .iter()
        .filter(|p| p.kind == kind)
        .map(|p| p.value.len())
        .collect()
}

/// History rows replaced by the model's own prediction of the preceding
/// `W` steps (scheduled sampling).
fn sampled_inputs(job: &Job, w: &SrfdWeights<f32>, tw: &TaggedWindow) -> Result<seisforge_srfd::StepInputs> {
    let cfg = job.cfg;
    let enc = &job.encoded[tw.sample];
    let span = tw.window.span;
    let c = cfg.out_channels();
    if span.pad > 0 || span.start == 0 {
        return Ok(tw.window.inputs.clone());
    }
    let prev_start = span.start.saturating_sub(cfg.window);
    let prev = Span {
        start: prev_start,
        len: span.start - prev_start,
        pad: 0,
    };
    let target = |t: usize, ch: usize| enc.target[t * c + ch];
    let prev_inputs = window_inputs(cfg, enc, prev, job.input_clip, target);
    let y = forward(cfg, w, &prev_inputs)?;
    let hist = |t: usize, ch: usize| {
        if t >= prev.start && t < prev.start + prev.len {
            y.get(t - prev.start, ch) as f64
        } else {
            target(t, ch)
        }
    };
    Ok(window_inputs(cfg, enc, span, job.input_clip, hist))
}

fn window_step(job: &Job, w: &SrfdWeights<f32>, tw: &TaggedWindow, sampled: bool) -> Result<(f64, Vec<Vec<f64>>)> {
    let cfg = job.cfg;
    let inputs = if sampled {
        sampled_inputs(job, w, tw)?
    } else {
        tw.window.inputs.clone()
    };
    let mut tape = Tape::new();
    let y = forward_with_tape(cfg, w, &inputs, &mut tape)?;
    let pred: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
    let loss = masked_loss(
        &pred,
        &tw.window.target,
        cfg.n_max,
        &inputs.story_mask,
        tw.window.span.pad,
        &job.optim.loss_weights,
    );
    let dy = Matrix::from_vec(y.rows(), y.cols(), loss.grad.iter().map(|&g| g as f32).collect());
    let g = backward(cfg, w, &tape, &dy)?;
    Ok((loss.total, trainable_grads(&g.weights, job.kind)))
}

/// The shared optimization loop. `on_checkpoint` is called every
/// `checkpoint_every` steps with the step count and current weights.
fn optimize(
    job: &Job,
    weights: &mut SrfdWeights<f32>,
    checkpoint_every: usize,
    mut on_checkpoint: impl FnMut(usize, &SrfdWeights<f32>) -> Result<()>,
) -> Result<TrainLog> {
    let o = job.optim;
    let mut adam = Adam::new(&sizes(weights, job.kind));
    let mut log = TrainLog::default();
    let n = job.windows.len();
    let batch = o.batch_size.min(n).max(1);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    for step in 0..o.steps {
        let mut ids = Vec::with_capacity(batch);
        while ids.len() < batch {
            if cursor == order.len() {
                order = (0..n).collect();
                order.shuffle(&mut rng::substream(job.seed, "batches", epoch));
                epoch += 1;
                cursor = 0;
            }
            ids.push(order[cursor]);
            cursor += 1;
        }
        let flags: Vec<bool> = {
            let mut r = rng::substream(job.seed, "sampling", step as u64);
            ids.iter()
                .map(|_| o.scheduled_sampling > 0.0 && r.random::<f64>() < o.scheduled_sampling)
                .collect()
        };
        let w: &SrfdWeights<f32> = weights;
        let results = ids
            .par_iter()
            .zip(&flags)
            .map(|(&i, &s)| window_step(job, w, &job.windows[i], s))
            .collect::<Result<Vec<_>>>()?;

        let scale = 1.0 / results.len() as f64;
        let mut loss = 0.0;
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for (l, g) in &results {
            loss += l * scale;
            if grads.is_empty() {
                grads = g.iter().map(|a| a.iter().map(|x| x * scale).collect()).collect();
            } else {
                for (acc, a) in grads.iter_mut().zip(g) {
                    for (x, y) in acc.iter_mut().zip(a) {
                        *x += y * scale;
                    }
                }
            }
        }
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                step,
                batch: ids.iter().map(|&i| job.windows[i].id.clone()).collect(),
            });
        }
        let grad_norm = clip_global_norm(&mut grads, o.grad_clip);
        let lr = lr_at(step, o.steps, o.peak_lr, o.warmup_fraction, o.final_lr_fraction);
        {
            let mut params: Vec<&mut Matrix<f32>> = weights
                .params_mut()
                .into_iter()
                .filter(|p| p.kind == job.kind)
                .map(|p| p.value)
                .collect();
            adam.step(&mut params, &grads, lr);
        }
        log.rows.push(LogRow {
            step,
            loss,
            lr,
            grad_norm,
        });
        if step % 100 == 0 {
            debug!("step {step}: loss {loss:.3e}, lr {lr:.2e}, |g| {grad_norm:.2e}");
        }
        if checkpoint_every > 0 && (step + 1) % checkpoint_every == 0 && step + 1 < o.steps {
            on_checkpoint(step + 1, weights)?;
        }
    }
    Ok(log)
}

fn encode_all(
    cfg: &SrfdConfig,
    stats: &NormStats,
    input_clip: f64,
    samples: &[TrainingSample],
) -> Result<Vec<EncodedSample>> {
    samples
        .iter()
        .map(|s| {
            encode_sample(
                cfg,
                stats,
                input_clip,
                &s.model,
                s.motion.samples(),
                &s.sdr,
                Some(&s.oracle),
            )
        })
        .collect()
}

fn windows_of(
    cfg: &SrfdConfig,
    samples: &[TrainingSample],
    encoded: &[EncodedSample],
    hop: usize,
    input_clip: f64,
) -> Result<Vec<TaggedWindow>> {
    let mut out = Vec::new();
    for (i, (s, enc)) in samples.iter().zip(encoded).enumerate() {
        for window in make_windows(cfg, enc, hop, input_clip)? {
            out.push(TaggedWindow {
                id: format!("{}@{}", s.sample_id, window.span.start),
                sample: i,
                window,
            });
        }
    }
    Ok(out)
}

/// Mean teacher-forced window loss of `weights` over `samples`, the
/// quantity the optimizer minimizes, evaluated on every window at once.
pub fn dataset_loss(
    model: &SrfdConfig,
    weights: &SrfdWeights<f32>,
    stats: &NormStats,
    input_clip: f64,
    optim: &OptimConfig,
    samples: &[TrainingSample],
) -> Result<f64> {
    let encoded = encode_all(model, stats, input_clip, samples)?;
    let hop = optim.hop.unwrap_or(model.window);
    let windows = windows_of(model, samples, &encoded, hop, input_clip)?;
    let losses = windows
        .par_iter()
        .map(|tw| {
            let y = forward(model, weights, &tw.window.inputs)?;
            let pred: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
            let l = masked_loss(
                &pred,
                &tw.window.target,
                model.n_max,
                &tw.window.inputs.story_mask,
                tw.window.span.pad,
                &optim.loss_weights,
            );
            Ok(l.total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

fn checkpoint_extra(stats: &NormStats, input_clip: f64, steps: usize) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert(EXTRA_NORMALIZATION.into(), toml::Value::Table(stats.to_table()));
    t.insert(EXTRA_INPUT_CLIP.into(), toml::Value::Float(input_clip));
    t.insert("steps".into(), toml::Value::Integer(steps as i64));
    t
}

/// Trains a model on the train split of `ds`. Intermediate checkpoints,
/// if requested, go to `checkpoint_dir` as `step_NNNNNN.sgpt`.
pub fn train(cfg: &TrainConfig, ds: &Dataset, checkpoint_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let samples = ds.load_split(Split::Train)?;
    train_on(cfg, &ds.manifest.normalization, &samples, checkpoint_dir)
}

/// [`train`] on explicit samples with given normalization statistics.
pub fn train_on(
    cfg: &TrainConfig,
    stats: &NormStats,
    samples: &[TrainingSample],
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::config("the train split is empty"));
    }
    stats.validate()?;
    let m = &cfg.model;
    let encoded = encode_all(m, stats, cfg.input_clip, samples)?;
    let hop = cfg.optim.hop.unwrap_or(m.window);
    let windows = windows_of(m, samples, &encoded, hop, cfg.input_clip)?;
    info!(
        "training on {} samples, {} windows, {} steps",
        samples.len(),
        windows.len(),
        cfg.optim.steps
    );
    let mut weights = SrfdWeights::<f32>::init(m, rng::substream(cfg.seed, "init", 0).random())?;
    let job = Job {
        cfg: m,
        optim: &cfg.optim,
        seed: cfg.seed,
        input_clip: cfg.input_clip,
        encoded: &encoded,
        windows: &windows,
        kind: ParamKind::Base,
    };
    let dir: Option<PathBuf> = checkpoint_dir.map(Path::to_path_buf);
    let log = optimize(&job, &mut weights, cfg.checkpoint_every, |step, w| {
        if let Some(d) = &dir {
            let c = Checkpoint::new(m.clone(), w.clone(), checkpoint_extra(stats, cfg.input_clip, step))?;
            c.save(d.join(format!("step_{step:06}.sgpt")))?;
        }
        Ok(())
    })?;
    let checkpoint = Checkpoint::new(
        m.clone(),
        weights,
        checkpoint_extra(stats, cfg.input_clip, cfg.optim.steps),
    )?;
    Ok(TrainOutcome { checkpoint, log })
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub adapter: AdapterCheckpoint,
    /// Base weights with the trained adapters attached.
    pub weights: SrfdWeights<f32>,
    pub log: TrainLog,
}

/// Fine-tunes rank-`r` adapters on every attention map of `base`, leaving
/// the base weights untouched. Samples are `cfg.samples` if given, else the
/// train split.
pub fn finetune_lora(base: &Checkpoint, cfg: &FinetuneConfig, ds: &Dataset) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let samples = if cfg.samples.is_empty() {
        ds.load_split(Split::Train)?
    } else {
        cfg.samples
            .iter()
            .map(|id| ds.entry(id).and_then(|e| ds.load(e)))
            .collect::<Result<Vec<_>>>()?
    };
    finetune_on(base, cfg, &samples)
}

/// [`finetune_lora`] on explicit samples.
pub fn finetune_on(base: &Checkpoint, cfg: &FinetuneConfig, samples: &[TrainingSample]) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::config("no samples to fine-tune on"));
    }
    let predictor = crate::predict::Predictor::from_checkpoint(base)?;
    let (stats, clip) = (predictor.stats, predictor.input_clip);
    let m = &base.config;
    let encoded = encode_all(m, &stats, clip, samples)?;
    let hop = cfg.optim.hop.unwrap_or(m.window);
    let windows = windows_of(m, samples, &encoded, hop, clip)?;
    let mut weights = base.weights.clone();
    weights.attach_lora(cfg.rank, cfg.alpha, rng::substream(cfg.seed, "adapter", 0).random())?;
    let job = Job {
        cfg: m,
        optim: &cfg.optim,
        seed: cfg.seed,
        input_clip: clip,
        encoded: &encoded,
        windows: &windows,
        kind: ParamKind::Adapter,
    };
    info!(
        "fine-tuning {} adapter values on {} windows",
        weights.n_values(ParamKind::Adapter),
        windows.len()
    );
    let log = optimize(&job, &mut weights, 0, |_, _| Ok(()))?;
    let mut extra = toml::Table::new();
    extra.insert("steps".into(), toml::Value::Integer(cfg.optim.steps as i64));
    let adapter = AdapterCheckpoint::from_weights(base, &weights, cfg.rank, cfg.alpha, extra)?;
    Ok(FinetuneOutcome { adapter, weights, log })
}
