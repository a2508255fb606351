use serde::{Deserialize, Serialize};

use crate::structure::{LumpedMassModel, SpringLaw};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpringKind {
    Linear,
    Bilinear,
}

/// Story shear spring. For the bilinear kind, hardening is kinematic and
/// unloading is elastic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorySpringLaw {
    pub kind: SpringKind,
    pub k: f64,
    pub post_yield_ratio: f64,
    pub u_yield: f64,
}

impl StorySpringLaw {
    pub fn linear(k: f64) -> Self {
        Self {
            kind: SpringKind::Linear,
            k,
            post_yield_ratio: 1.0,
            u_yield: f64::INFINITY,
        }
    }

    pub fn bilinear(k: f64, post_yield_ratio: f64, u_yield: f64) -> Self {
        Self {
            kind: SpringKind::Bilinear,
            k,
            post_yield_ratio,
            u_yield,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::config(format!("spring stiffness must be > 0, got {}", self.k)));
        }
        if self.kind == SpringKind::Bilinear {
            if !(0.0..1.0).contains(&self.post_yield_ratio) {
                return Err(Error::config(format!(
                    "post_yield_ratio must be in [0, 1), got {}",
                    self.post_yield_ratio
                )));
            }
            if !(self.u_yield > 0.0) {
                return Err(Error::config(format!("u_yield must be > 0, got {}", self.u_yield)));
            }
        }
        Ok(())
    }

    /// Force, tangent stiffness and updated plastic drift for story drift
    /// `drift`, given the committed plastic drift.
    pub fn respond(&self, drift: f64, plastic: f64) -> (f64, f64, f64) {
        match self.kind {
            SpringKind::Linear => (self.k * drift, self.k, 0.0),
            SpringKind::Bilinear => {
                let k = self.k;
                let r = self.post_yield_ratio;
                let trial = k * (drift - plastic);
                let centre = r * k * drift;
                let half_width = (1.0 - r) * k * self.u_yield;
                if trial > centre + half_width {
                    let f = centre + half_width;
                    (f, r * k, drift - f / k)
                } else if trial < centre - half_width {
                    let f = centre - half_width;
                    (f, r * k, drift - f / k)
                } else {
                    (trial, k, plastic)
                }
            }
        }
    }
}

/// Spring laws of all stories plus their committed plastic drifts.
#[derive(Debug, Clone)]
pub struct StorySprings {
    laws: Vec<StorySpringLaw>,
    plastic: Vec<f64>,
}

impl StorySprings {
    pub fn new(laws: Vec<StorySpringLaw>) -> Result<Self> {
        laws.iter().try_for_each(StorySpringLaw::validate)?;
        let n = laws.len();
        Ok(Self {
            laws,
            plastic: vec![0.0; n],
        })
    }

    pub fn from_model(model: &LumpedMassModel) -> Result<Self> {
        let laws = model
            .story_stiffness
            .iter()
            .zip(&model.spring_law)
            .map(|(&k, law)| match *law {
                SpringLaw::Linear => StorySpringLaw::linear(k),
                SpringLaw::Bilinear {
                    post_yield_ratio,
                    u_yield,
                } => StorySpringLaw::bilinear(k, post_yield_ratio, u_yield),
            })
            .collect();
        Self::new(laws)
    }

    pub fn laws(&self) -> &[StorySpringLaw] {
        &self.laws
    }

    pub fn plastic_drift(&self) -> &[f64] {
        &self.plastic
    }

    /// Floor restoring forces and story tangent stiffnesses at floor
    /// displacements `u`, relative to the committed state.
    pub fn evaluate(&self, u: &[f64], floor_force: &mut [f64], tangent: &mut [f64]) {
        let n = self.laws.len();
        let mut above = 0.0;
        for i in (0..n).rev() {
            let drift = u[i] - if i > 0 { u[i - 1] } else { 0.0 };
            let (f, kt, _) = self.laws[i].respond(drift, self.plastic[i]);
            tangent[i] = kt;
            floor_force[i] = f - above;
            above = f;
        }
    }

    /// Accepts `u` as the converged state of the step.
    pub fn commit(&mut self, u: &[f64]) {
        for i in 0..self.laws.len() {
            let drift = u[i] - if i > 0 { u[i - 1] } else { 0.0 };
            self.plastic[i] = self.laws[i].respond(drift, self.plastic[i]).2;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_backbone() {
        let s = StorySpringLaw::bilinear(100.0, 0.1, 0.01);
        let (f, kt, p) = s.respond(0.005, 0.0);
        assert_eq!((f, kt, p), (0.5, 100.0, 0.0));
        let (f, kt, p) = s.respond(0.02, 0.0);
        assert!((f - (1.0 + 0.1 * 100.0 * 0.01)).abs() < 1e-12);
        assert_eq!(kt, 10.0);
        // unloading from there is elastic
        let (f2, kt2, _) = s.respond(0.019, p);
        assert!((f - f2 - 0.1).abs() < 1e-12);
        assert_eq!(kt2, 100.0);
    }

    #[test]
    fn kinematic_band_on_reversal() {
        let s = StorySpringLaw::bilinear(1.0, 0.0, 1.0);
        let (_, _, p) = s.respond(3.0, 0.0);
        // elastic-perfectly-plastic: reverse yield at f = -1
        let (f, _, _) = s.respond(-3.0, p);
        assert_eq!(f, -1.0);
    }

    #[test]
    fn floor_forces_telescoping() {
        let springs = StorySprings::new(vec![StorySpringLaw::linear(2.0), StorySpringLaw::linear(3.0)]).unwrap();
        let (mut f, mut kt) = ([0.0; 2], [0.0; 2]);
        springs.evaluate(&[1.0, 3.0], &mut f, &mut kt);
        // story forces 2, 6 → floor forces 2 - 6, 6
        assert_eq!(f, [-4.0, 6.0]);
        assert_eq!(kt, [2.0, 3.0]);
    }
}
