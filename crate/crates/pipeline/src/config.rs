//! Run configurations. Every field has a documented default so a config
//! file only needs the values it changes; unknown keys are rejected.

use std::path::PathBuf;

use seisforge_core::structure::{Direction, StructureType};
use seisforge_srfd::SrfdConfig;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Intensity shares of classes I6..I9 in the reference catalogue.
pub const REFERENCE_INTENSITY_MIX: [f64; 4] = [0.481, 0.4177, 0.0886, 0.0127];

/// Relative building counts per structural type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureMix {
    pub frame: f64,
    pub shear_frame: f64,
    pub complex_shear: f64,
}

impl Default for StructureMix {
    fn default() -> Self {
        Self {
            frame: 5.0,
            shear_frame: 2.0,
            complex_shear: 1.0,
        }
    }
}

impl StructureMix {
    pub fn weights(&self) -> [(StructureType, f64); 3] {
        [
            (StructureType::Frame, self.frame),
            (StructureType::ShearFrame, self.shear_frame),
            (StructureType::ComplexShear, self.complex_shear),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Linear,
    Bilinear,
}

/// How target responses are produced from a generated building.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: OracleKind,
    pub damping_ratio: f64,
    /// Log-normal spread of per-story stiffness around the uniform value.
    pub stiffness_variation: f64,
    pub post_yield_ratio: f64,
    /// Yield drift as a fraction of the floor height.
    pub yield_drift_ratio: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            kind: OracleKind::Linear,
            damping_ratio: 0.05,
            stiffness_variation: 0.15,
            post_yield_ratio: 0.1,
            yield_drift_ratio: 0.004,
        }
    }
}

/// Ground motion source. Synthetic motions are band-limited noise; with
/// `records` set, imported records are drawn instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    #[serde(default = "default_f_lo")]
    pub f_lo_hz: f64,
    #[serde(default = "default_f_hi")]
    pub f_hi_hz: f64,
    #[serde(default)]
    pub records: Vec<PathBuf>,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            f_lo_hz: default_f_lo(),
            f_hi_hz: default_f_hi(),
            records: Vec::new(),
        }
    }
}

fn default_f_lo() -> f64 {
    0.3
}

fn default_f_hi() -> f64 {
    10.0
}

fn default_waves() -> i64 {
    3
}

fn default_dirs() -> Vec<Direction> {
    vec![Direction::X, Direction::Y]
}

fn default_dt() -> f64 {
    0.02
}

fn default_duration() -> f64 {
    10.0
}

fn default_mix() -> [f64; 4] {
    REFERENCE_INTENSITY_MIX
}

fn default_train_fraction() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub n_samples: i64,
    #[serde(default = "default_waves")]
    pub waves_per_building: i64,
    #[serde(default = "default_dirs")]
    pub directions: Vec<Direction>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub structure_mix: StructureMix,
    /// Inclusive story-count range, intersected with each type's band.
    #[serde(default)]
    pub stories: Option<[u32; 2]>,
    #[serde(default = "default_mix")]
    pub intensity_mix: [f64; 4],
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub validation_fraction: f64,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub motions: MotionConfig,
}

impl GenConfig {
    pub fn new(seed: u64, n_samples: usize) -> Self {
        Self {
            seed,
            n_samples: n_samples as i64,
            waves_per_building: default_waves(),
            directions: default_dirs(),
            dt: default_dt(),
            duration_s: default_duration(),
            structure_mix: StructureMix::default(),
            stories: None,
            intensity_mix: REFERENCE_INTENSITY_MIX,
            train_fraction: default_train_fraction(),
            validation_fraction: 0.0,
            oracle: OracleConfig::default(),
            motions: MotionConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_samples < 1 {
            return bad(format!("n_samples must be at least 1, got {}", self.n_samples));
        }
        if self.waves_per_building < 1 {
            return bad(format!(
                "waves_per_building must be at least 1, got {}",
                self.waves_per_building
            ));
        }
        if self.directions.is_empty() {
            return bad("directions must list at least one of x, y".into());
        }
        let mut dirs = self.directions.clone();
        dirs.sort();
        dirs.dedup();
        if dirs.len() != self.directions.len() {
            return bad("directions must not repeat".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration_s > self.dt && self.duration_s.is_finite()) {
            return bad(format!("duration_s must exceed dt, got {}", self.duration_s));
        }
        let w = self.structure_mix.weights();
        if w.iter().any(|(_, v)| !(*v >= 0.0 && v.is_finite())) || w.iter().all(|(_, v)| *v == 0.0) {
            return bad("structure_mix weights must be non-negative with a positive sum".into());
        }
        if let Some([lo, hi]) = self.stories {
            if lo == 0 || lo > hi {
                return bad(format!("stories range [{lo}, {hi}] is invalid"));
            }
            for (t, wt) in w {
                let band = t.story_band();
                if wt > 0.0 && (hi < band.0 || lo > band.1) {
                    return bad(format!(
                        "stories range [{lo}, {hi}] excludes every {t} building (band {band:?}); set structure_mix.{t} = 0"
                    ));
                }
            }
        }
        if self.intensity_mix.iter().any(|v| !(*v >= 0.0 && v.is_finite()))
            || self.intensity_mix.iter().sum::<f64>() <= 0.0
        {
            return bad("intensity_mix must be non-negative with a positive sum".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction must be in (0, 1], got {}", self.train_fraction));
        }
        if !(self.validation_fraction >= 0.0 && self.train_fraction + self.validation_fraction <= 1.0) {
            return bad(format!(
                "validation_fraction must be >= 0 and leave train + validation <= 1, got {}",
                self.validation_fraction
            ));
        }
        let o = &self.oracle;
        if !(o.damping_ratio > 0.0 && o.damping_ratio < 0.2) {
            return bad(format!(
                "oracle.damping_ratio must be in (0, 0.2), got {}",
                o.damping_ratio
            ));
        }
        if !(o.stiffness_variation >= 0.0 && o.stiffness_variation < 1.0) {
            return bad(format!(
                "oracle.stiffness_variation must be in [0, 1), got {}",
                o.stiffness_variation
            ));
        }
        if o.kind == OracleKind::Bilinear && !(o.yield_drift_ratio > 0.0 && (0.0..1.0).contains(&o.post_yield_ratio)) {
            return bad("oracle.yield_drift_ratio must be > 0 and post_yield_ratio in [0, 1)".into());
        }
        let nyquist = 0.5 / self.dt;
        let m = &self.motions;
        if !(m.f_lo_hz > 0.0 && m.f_lo_hz < m.f_hi_hz && m.f_hi_hz < nyquist) {
            return bad(format!(
                "motions band must satisfy 0 < f_lo_hz < f_hi_hz < {nyquist} Hz"
            ));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples.max(0) as usize
    }

    pub fn waves_per_building(&self) -> usize {
        self.waves_per_building.max(0) as usize
    }
}

fn default_steps() -> usize {
    2000
}

fn default_batch() -> usize {
    16
}

fn default_peak_lr() -> f64 {
    3e-4
}

fn default_warmup() -> f64 {
    0.05
}

fn default_final_fraction() -> f64 {
    0.1
}

fn default_clip() -> f64 {
    1.0
}

fn default_loss_weights() -> [f64; 2] {
    [1.0, 1.0]
}

/// Optimizer and batching settings shared by training and fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_peak_lr")]
    pub peak_lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    /// Learning rate at the end of the cosine decay, relative to the peak.
    #[serde(default = "default_final_fraction")]
    pub final_lr_fraction: f64,
    #[serde(default = "default_clip")]
    pub grad_clip: f64,
    /// Window advance in steps; defaults to the window length.
    #[serde(default)]
    pub hop: Option<usize>,
    /// Weights of the displacement and acceleration losses.
    #[serde(default = "default_loss_weights")]
    pub loss_weights: [f64; 2],
    /// Probability of feeding the model's own prediction as history.
    #[serde(default)]
    pub scheduled_sampling: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            batch_size: default_batch(),
            peak_lr: default_peak_lr(),
            warmup_fraction: default_warmup(),
            final_lr_fraction: default_final_fraction(),
            grad_clip: default_clip(),
            hop: None,
            loss_weights: default_loss_weights(),
            scheduled_sampling: 0.0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return bad(format!("peak_lr must be >= 0, got {}", self.peak_lr));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) || !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return bad("warmup_fraction and final_lr_fraction must be in [0, 1]".into());
        }
        if !(self.grad_clip > 0.0) {
            return bad(format!("grad_clip must be > 0, got {}", self.grad_clip));
        }
        if self.hop == Some(0) {
            return bad("hop must be at least 1".into());
        }
        if self.loss_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("loss_weights must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.scheduled_sampling) {
            return bad("scheduled_sampling must be in [0, 1]".into());
        }
        Ok(())
    }
}

fn default_input_clip() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    #[serde(default)]
    pub model: SrfdConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    /// Normalized inputs are clipped to `±input_clip`.
    #[serde(default = "default_input_clip")]
    pub input_clip: f64,
    /// Write an intermediate checkpoint every this many steps (0: never).
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn new(seed: u64, model: SrfdConfig, optim: OptimConfig) -> Self {
        Self {
            seed,
            model,
            optim,
            input_clip: default_input_clip(),
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optim.validate()?;
        if !(self.input_clip > 0.0) {
            return Err(Error::config(format!(
                "input_clip must be > 0, got {}",
                self.input_clip
            )));
        }
        Ok(())
    }
}

fn default_rank() -> usize {
    4
}

fn default_alpha() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub seed: u64,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub optim: OptimConfig,
    /// Samples to adapt on; empty means the whole train split.
    #[serde(default)]
    pub samples: Vec<String>,
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        if self.rank == 0 {
            return Err(Error::config("rank must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}
