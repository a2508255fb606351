//! Recovery of story stiffnesses from measured floor displacements.

mod evolution;
mod least_squares;

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, IntegratorParams, ResponseHistory};
use crate::ground_motion::GroundMotion;
use crate::structure::{match_period, model_periods, LumpedMassModel, DEFAULT_DAMPING_RATIO};
use crate::{Error, Result};

pub use evolution::EsSettings;

#[derive(Debug, Clone)]
pub struct IdentificationProblem {
    pub masses: Vec<f64>,
    pub reference: ResponseHistory,
    pub excitation: GroundMotion,
    pub initial_guess: Vec<f64>,
    /// Per-story `(lo, hi)` stiffness bounds, N/m.
    pub bounds: Vec<(f64, f64)>,
    pub damping_ratio: f64,
    pub integrator: IntegratorParams,
}

impl IdentificationProblem {
    /// Problem with bounds of `[guess / 20, guess * 20]` per story.
    pub fn new(
        masses: Vec<f64>,
        reference: ResponseHistory,
        excitation: GroundMotion,
        initial_guess: Vec<f64>,
    ) -> Self {
        let bounds = initial_guess.iter().map(|k| (k / 20.0, k * 20.0)).collect();
        let integrator = IntegratorParams::average_acceleration(excitation.dt());
        Self {
            masses,
            reference,
            excitation,
            initial_guess,
            bounds,
            damping_ratio: DEFAULT_DAMPING_RATIO,
            integrator,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        if self.reference.n_steps() == 0 || self.reference.n_stories() == 0 {
            return Err(Error::config("reference response is empty"));
        }
        if self.reference.u().iter().all(|u| *u == 0.0) {
            return Err(Error::config("reference displacements are all zero"));
        }
        if self.reference.n_stories() != n || self.initial_guess.len() != n || self.bounds.len() != n {
            return Err(Error::config(format!(
                "{n} masses but reference has {} stories, guess {} entries, bounds {}",
                self.reference.n_stories(),
                self.initial_guess.len(),
                self.bounds.len()
            )));
        }
        if (self.reference.dt() - self.excitation.dt()).abs() > 1e-12 * self.excitation.dt() {
            return Err(Error::config("reference and excitation dt differ"));
        }
        if self.reference.n_steps() > self.excitation.len() {
            return Err(Error::config("reference is longer than the excitation"));
        }
        for (i, (&(lo, hi), &k)) in self.bounds.iter().zip(&self.initial_guess).enumerate() {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::config(format!("story {i}: invalid bounds ({lo}, {hi})")));
            }
            if !(lo..=hi).contains(&k) {
                return Err(Error::config(format!(
                    "story {i}: initial guess {k} outside ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum IdentificationMethod {
    GaussNewton,
    Evolutionary(EsSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub stiffness: Vec<f64>,
    /// Σ(u_sim − u_ref)² / Σu_ref² over the whole record.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Forward model shared by both backends. Parameters are stiffnesses
/// divided by the initial guess.
pub(crate) struct Forward<'a> {
    problem: &'a IdentificationProblem,
    scale: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    pub evaluations: usize,
}

impl<'a> Forward<'a> {
    fn new(problem: &'a IdentificationProblem) -> Self {
        let scale = problem.initial_guess.clone();
        let lo = problem.bounds.iter().zip(&scale).map(|(b, s)| b.0 / s).collect();
        let hi = problem.bounds.iter().zip(&scale).map(|(b, s)| b.1 / s).collect();
        Self {
            problem,
            scale,
            lo,
            hi,
            evaluations: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.lo[i], self.hi[i])
    }

    pub fn stiffness(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(x, s)| x * s).collect()
    }

    /// Normalized residuals over the first `horizon` steps of every story.
    pub fn residuals(&mut self, x: &[f64], horizon: usize) -> Result<Vec<f64>> {
        self.evaluations += 1;
        let p = self.problem;
        let model = LumpedMassModel::linear(p.masses.clone(), self.stiffness(x))?.with_damping(p.damping_ratio)?;
        let gm = p.excitation.truncated(horizon)?;
        let sim = simulate(&model, &gm, &p.integrator)?;
        let reference = &p.reference;
        let n_ref = reference.n_steps();
        let mut norm = 0.0;
        for s in 0..reference.n_stories() {
            norm += reference.u()[s * n_ref..s * n_ref + horizon]
                .iter()
                .map(|u| u * u)
                .sum::<f64>();
        }
        let inv = 1.0 / norm.max(f64::MIN_POSITIVE).sqrt();
        let mut r = Vec::with_capacity(reference.n_stories() * horizon);
        for s in 0..reference.n_stories() {
            let want = &reference.u()[s * n_ref..s * n_ref + horizon];
            let got = &sim.u()[s * horizon..(s + 1) * horizon];
            r.extend(got.iter().zip(want).map(|(g, w)| (g - w) * inv));
        }
        Ok(r)
    }

    pub fn objective(&mut self, x: &[f64], horizon: usize) -> Result<f64> {
        Ok(self.residuals(x, horizon)?.iter().map(|r| r * r).sum())
    }
}

/// Fits story stiffnesses so the simulated displacements reproduce the
/// reference record.
pub fn identify_stiffness(
    problem: &IdentificationProblem,
    method: IdentificationMethod,
) -> Result<IdentificationResult> {
    problem.validate()?;
    let mut fwd = Forward::new(problem);
    let full = problem.reference.n_steps();
    let x0 = vec![1.0; fwd.dim()];
    let f0 = fwd.objective(&x0, full)?;

    let (x, iterations, converged) = match method {
        IdentificationMethod::GaussNewton => least_squares::continuation(&mut fwd, x0.clone())?,
        IdentificationMethod::Evolutionary(settings) => {
            let (best, gens) = evolution::search(&mut fwd, &settings, full)?;
            let (x, it, conv) = least_squares::levenberg_marquardt(&mut fwd, best, full)?;
            (x, gens + it, conv)
        }
    };
    let f = fwd.objective(&x, full)?;
    let (x, f) = if f <= f0 { (x, f) } else { (x0, f0) };
    Ok(IdentificationResult {
        stiffness: fwd.stiffness(&x),
        objective: f,
        iterations,
        converged,
    })
}

/// Returns `model` unchanged when its fundamental period is within `tol`
/// (relative) of `t_ref`; otherwise rescales its stiffness to match.
pub fn validate_period(model: &LumpedMassModel, t_ref: f64, tol: f64) -> Result<LumpedMassModel> {
    if !(t_ref > 0.0 && t_ref.is_finite()) {
        return Err(Error::domain(format!("reference period must be > 0, got {t_ref}")));
    }
    let t_hat = model_periods(model)?.t1;
    if ((t_hat - t_ref) / t_ref).abs() > tol {
        match_period(model, t_ref)
    } else {
        Ok(model.clone())
    }
}
