//! Ground-acceleration records: import, synthesis, PGA scaling and resampling.

mod filter;
mod record;
mod synth;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, STANDARD_GRAVITY};

pub use filter::{filtfilt, Biquad};
pub use record::{load_record, parse_record, write_record, AccelUnit};
pub use synth::{synth_record, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntensityClass {
    I6,
    I7,
    I8,
    I9,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 4] = [Self::I6, Self::I7, Self::I8, Self::I9];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for IntensityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::I6 => "I6",
            Self::I7 => "I7",
            Self::I8 => "I8",
            Self::I9 => "I9",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionSource {
    Imported,
    Synthetic,
}

/// PGA bands (in g) that map a record to an intensity class.
///
/// Records below `i7_min_g` are classed I6. `i6_min_g` and `i9_max_g` only
/// bound the PGA range drawn by generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityBands {
    pub i6_min_g: f64,
    pub i7_min_g: f64,
    pub i8_min_g: f64,
    pub i9_min_g: f64,
    pub i9_max_g: f64,
}

impl Default for IntensityBands {
    fn default() -> Self {
        Self {
            i6_min_g: 0.05,
            i7_min_g: 0.10,
            i8_min_g: 0.20,
            i9_min_g: 0.40,
            i9_max_g: 0.62,
        }
    }
}

impl IntensityBands {
    pub fn classify(&self, pga: f64) -> IntensityClass {
        let g = pga / STANDARD_GRAVITY;
        if g >= self.i9_min_g {
            IntensityClass::I9
        } else if g >= self.i8_min_g {
            IntensityClass::I8
        } else if g >= self.i7_min_g {
            IntensityClass::I7
        } else {
            IntensityClass::I6
        }
    }

    /// Half-open PGA interval of a class in m/s².
    pub fn pga_range(&self, class: IntensityClass) -> (f64, f64) {
        let (lo, hi) = match class {
            IntensityClass::I6 => (self.i6_min_g, self.i7_min_g),
            IntensityClass::I7 => (self.i7_min_g, self.i8_min_g),
            IntensityClass::I8 => (self.i8_min_g, self.i9_min_g),
            IntensityClass::I9 => (self.i9_min_g, self.i9_max_g),
        };
        (lo * STANDARD_GRAVITY, hi * STANDARD_GRAVITY)
    }

    pub fn validate(&self) -> Result<()> {
        let v = [
            self.i6_min_g,
            self.i7_min_g,
            self.i8_min_g,
            self.i9_min_g,
            self.i9_max_g,
        ];
        if v[0] <= 0.0 || v.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config(
                "intensity bands must be positive and strictly increasing",
            ));
        }
        Ok(())
    }
}

/// Unscaled source a motion was derived from, so repeated PGA scaling always
/// starts from the same samples.
#[derive(Debug)]
struct ScaleOrigin {
    samples: Vec<f64>,
    peak: f64,
}

/// Uniformly sampled ground acceleration in m/s².
#[derive(Debug, Clone)]
pub struct GroundMotion {
    id: String,
    dt: f64,
    samples: Vec<f64>,
    intensity: IntensityClass,
    source: MotionSource,
    origin: Option<Arc<ScaleOrigin>>,
}

impl PartialEq for GroundMotion {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.dt == other.dt
            && self.samples == other.samples
            && self.intensity == other.intensity
            && self.source == other.source
    }
}

impl GroundMotion {
    /// Builds a record, classing its intensity with the default PGA bands.
    pub fn new(id: impl Into<String>, dt: f64, samples: Vec<f64>, source: MotionSource) -> Result<Self> {
        Self::with_bands(id, dt, samples, source, &IntensityBands::default())
    }

    pub fn with_bands(
        id: impl Into<String>,
        dt: f64,
        samples: Vec<f64>,
        source: MotionSource,
        bands: &IntensityBands,
    ) -> Result<Self> {
        let id = id.into();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("record `{id}`: dt must be > 0, got {dt}")));
        }
        if samples.len() < 2 {
            return Err(Error::config(format!(
                "record `{id}`: need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("record `{id}`: sample {i} is not finite")));
        }
        let intensity = bands.classify(peak_abs(&samples));
        Ok(Self {
            id,
            dt,
            samples,
            intensity,
            source,
            origin: None,
        })
    }

    /// All-zero record, useful for checks and padding.
    pub fn zeros(id: impl Into<String>, dt: f64, n: usize) -> Result<Self> {
        Self::new(id, dt, vec![0.0; n], MotionSource::Synthetic)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn intensity_class(&self) -> IntensityClass {
        self.intensity
    }

    pub fn source(&self) -> MotionSource {
        self.source
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    /// Peak ground acceleration max|a_g|.
    pub fn pga(&self) -> f64 {
        peak_abs(&self.samples)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Returns `samples × (target / pga)` with the intensity class re-derived.
    ///
    /// Scaling a previously scaled record starts from the original samples, so
    /// `scale(scale(g, a), b)` is bitwise identical to `scale(g, b)`.
    pub fn scale_to_pga(&self, target: f64) -> Result<Self> {
        self.scale_to_pga_with(target, &IntensityBands::default())
    }

    pub fn scale_to_pga_with(&self, target: f64, bands: &IntensityBands) -> Result<Self> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::config(format!("target PGA must be > 0, got {target}")));
        }
        let origin = match &self.origin {
            Some(o) => Arc::clone(o),
            None => {
                let peak = self.pga();
                if peak == 0.0 {
                    return Err(Error::Scaling(self.id.clone()));
                }
                Arc::new(ScaleOrigin {
                    samples: self.samples.clone(),
                    peak,
                })
            }
        };
        let factor = target / origin.peak;
        let samples: Vec<f64> = origin.samples.iter().map(|&x| x * factor).collect();
        let intensity = bands.classify(peak_abs(&samples));
        Ok(Self {
            id: self.id.clone(),
            dt: self.dt,
            samples,
            intensity,
            source: self.source,
            origin: Some(origin),
        })
    }

    /// First `n` samples (the whole record when `n >= len`).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n >= self.samples.len() {
            return Ok(self.clone());
        }
        Self::new(self.id.clone(), self.dt, self.samples[..n].to_vec(), self.source)
    }

    /// Linear interpolation onto a grid of spacing `dt_new`.
    ///
    /// The new grid starts at t = 0 and keeps every point inside the original
    /// duration, so the duration shrinks by less than one `dt_new`.
    pub fn resample(&self, dt_new: f64) -> Result<Self> {
        if !(dt_new > 0.0 && dt_new.is_finite()) {
            return Err(Error::config(format!("dt_new must be > 0, got {dt_new}")));
        }
        if dt_new == self.dt {
            return Ok(self.clone());
        }
        let n_old = self.samples.len();
        let ratio = self.dt / dt_new;
        let n_new = (((n_old - 1) as f64) * ratio + 1e-9).floor() as usize + 1;
        let n_new = n_new.max(2);
        let last = n_old - 1;
        let samples = (0..n_new)
            .map(|j| {
                let pos = j as f64 * dt_new / self.dt;
                let i = (pos.floor() as usize).min(last);
                if i >= last {
                    return self.samples[last];
                }
                let frac = pos - i as f64;
                if frac == 0.0 {
                    self.samples[i]
                } else {
                    self.samples[i] + frac * (self.samples[i + 1] - self.samples[i])
                }
            })
            .collect();
        Self::new(self.id.clone(), dt_new, samples, self.source)
    }
}

fn peak_abs(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
