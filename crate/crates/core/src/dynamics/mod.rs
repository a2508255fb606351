//! Newmark-beta time-history analysis of lumped-mass shear buildings.

mod history;
mod newmark;
mod spring;
mod tridiag;

pub use history::{interstory_drift, Quantity, ResponseHistory, SFRH_MAGIC, SFRH_VERSION};
pub use newmark::{newmark_step, sdr_response, sdr_response_matched, simulate, NewmarkState, NEWTON_MAX_ITERS};
pub use spring::{SpringKind, StorySpringLaw, StorySprings};
pub use tridiag::TridiagSolver;

use serde::{Deserialize, Serialize};

use crate::structure::{model_periods, LumpedMassModel, SymTridiag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorParams {
    pub gamma: f64,
    pub beta: f64,
    pub dt: f64,
}

impl IntegratorParams {
    /// Constant average acceleration, γ = 1/2, β = 1/4.
    pub fn average_acceleration(dt: f64) -> Self {
        Self {
            gamma: 0.5,
            beta: 0.25,
            dt,
        }
    }

    /// Linear acceleration, γ = 1/2, β = 1/6 (conditionally stable).
    pub fn linear_acceleration(dt: f64) -> Self {
        Self {
            gamma: 0.5,
            beta: 1.0 / 6.0,
            dt,
        }
    }

    pub fn is_unconditionally_stable(&self) -> bool {
        self.gamma >= 0.5 && self.beta >= 0.25 * (self.gamma + 0.5).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.gamma >= 0.5 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be >= 0.5, got {}", self.gamma)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Mass- and stiffness-proportional coefficients `(α, β_r)` that give
/// damping ratio `zeta` at both `w1` and `w2`.
pub fn rayleigh_coeffs(zeta: f64, w1: f64, w2: f64) -> Result<(f64, f64)> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::domain(format!("damping ratio must be in (0, 1), got {zeta}")));
    }
    if !(w1 > 0.0 && w1 < w2 && w2.is_finite()) {
        return Err(Error::domain(format!("need 0 < w1 < w2, got w1 = {w1}, w2 = {w2}")));
    }
    let sum = w1 + w2;
    Ok((2.0 * zeta * w1 * w2 / sum, 2.0 * zeta / sum))
}

/// Damping ratio of the Rayleigh pair at circular frequency `w`.
pub fn rayleigh_ratio(alpha: f64, beta_r: f64, w: f64) -> f64 {
    0.5 * (alpha / w + beta_r * w)
}

/// Rayleigh damping matrix of `model`, anchored at its first two modes
/// (`3·ω1` stands in for the second mode of a single story).
pub fn damping_matrix(model: &LumpedMassModel, k: &SymTridiag) -> Result<SymTridiag> {
    let omega = model_periods(model)?.omega;
    let w1 = omega[0];
    let w2 = omega.get(1).copied().unwrap_or(3.0 * w1);
    let (alpha, beta_r) = rayleigh_coeffs(model.damping_ratio, w1, w2)?;
    Ok(SymTridiag {
        diag: model
            .masses
            .iter()
            .zip(&k.diag)
            .map(|(m, kd)| alpha * m + beta_r * kd)
            .collect(),
        off: k.off.iter().map(|ko| beta_r * ko).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rayleigh_substitution() {
        let (a, b) = rayleigh_coeffs(0.05, 2.0, 8.0).unwrap();
        assert!((a - 0.16).abs() < 1e-15);
        assert!((b - 0.01).abs() < 1e-15);
        assert!((rayleigh_ratio(a, b, 2.0) - 0.05).abs() < 1e-15);
        assert!((rayleigh_ratio(a, b, 8.0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rayleigh_domain() {
        assert!(rayleigh_coeffs(0.05, 2.0, 2.0).is_err());
        assert!(rayleigh_coeffs(0.0, 2.0, 3.0).is_err());
        assert!(rayleigh_coeffs(0.05, 3.0, 2.0).is_err());
    }

    #[test]
    fn presets() {
        assert!(IntegratorParams::average_acceleration(0.01).is_unconditionally_stable());
        assert!(!IntegratorParams::linear_acceleration(0.01).is_unconditionally_stable());
        assert!(IntegratorParams::average_acceleration(0.0).validate().is_err());
    }
}
