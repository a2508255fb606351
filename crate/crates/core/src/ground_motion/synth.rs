//! Synthetic band-limited motions: Gaussian white noise, zero-phase
//! Butterworth band-pass, trapezoidal envelope, PGA scaling.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::filter::{filtfilt, Biquad};
use super::{GroundMotion, MotionSource};
use crate::{rng, Error, Result};

const FILTER_ORDER: usize = 4;
/// Corners are pulled inside [f_lo, f_hi] by this factor so the filter skirts
/// fall within the nominal band.
const CORNER_MARGIN: f64 = 1.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub duration: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub rise: f64,
    pub plateau: f64,
    pub decay: f64,
    pub target_pga: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self, dt: f64) -> Result<()> {
        let nyquist = 0.5 / dt;
        if !(dt > 0.0) {
            return Err(Error::config(format!("dt must be > 0, got {dt}")));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration must be > 0"));
        }
        if !(self.f_lo > 0.0 && self.f_lo < self.f_hi && self.f_hi < nyquist) {
            return Err(Error::config(format!(
                "corner frequencies must satisfy 0 < f_lo < f_hi < {nyquist} Hz (Nyquist), got ({}, {})",
                self.f_lo, self.f_hi
            )));
        }
        if self.rise < 0.0 || self.plateau < 0.0 || self.decay < 0.0 {
            return Err(Error::config("envelope segments must be non-negative"));
        }
        if self.rise + self.plateau + self.decay > self.duration * (1.0 + 1e-12) {
            return Err(Error::config("rise + plateau + decay must not exceed the duration"));
        }
        if !(self.target_pga > 0.0 && self.target_pga.is_finite()) {
            return Err(Error::config("target_pga must be > 0"));
        }
        Ok(())
    }

    fn envelope(&self, t: f64) -> f64 {
        if t < self.rise {
            t / self.rise
        } else if t <= self.rise + self.plateau {
            1.0
        } else if t < self.rise + self.plateau + self.decay {
            1.0 - (t - self.rise - self.plateau) / self.decay
        } else {
            0.0
        }
    }
}

pub fn synth_record(spec: &SynthSpec, dt: f64) -> Result<GroundMotion> {
    spec.validate(dt)?;
    let n = ((spec.duration / dt).round() as usize + 1).max(2);
    let mut r = rng::seeded(spec.seed);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();

    let fs = 1.0 / dt;
    let margin = CORNER_MARGIN.min((spec.f_hi / spec.f_lo).powf(0.25));
    let qs = Biquad::butterworth_qs(FILTER_ORDER);
    let sections: Vec<Biquad> = qs
        .iter()
        .map(|&q| Biquad::highpass(spec.f_lo * margin, fs, q))
        .chain(qs.iter().map(|&q| Biquad::lowpass(spec.f_hi / margin, fs, q)))
        .collect();
    filtfilt(&sections, &mut x);

    for (i, v) in x.iter_mut().enumerate() {
        *v *= spec.envelope(i as f64 * dt);
    }
    let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::Generation("synthetic record has zero peak".into()));
    }
    let factor = spec.target_pga / peak;
    for v in &mut x {
        *v *= factor;
    }
    GroundMotion::new(format!("synth-{}", spec.seed), dt, x, MotionSource::Synthetic)
}
