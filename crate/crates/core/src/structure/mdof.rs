//! Shear-building reduction of a [`BuildingConfig`] and its matrices.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::building::{BuildingConfig, Direction};
use super::eigen::tridiagonal_eigenvalues;
use crate::{Error, Result};

/// Reinforced concrete density, kg/m³.
pub const CONCRETE_DENSITY: f64 = 2500.0;
/// Live-load allowance, Pa, converted to mass over the plan area.
pub const LIVE_LOAD_PA: f64 = 500.0;
/// Poisson ratio of concrete.
pub const CONCRETE_POISSON: f64 = 0.2;
/// Shear correction factor of a rectangular wall section.
pub const SHEAR_CORRECTION: f64 = 5.0 / 6.0;
pub const DEFAULT_DAMPING_RATIO: f64 = 0.05;

/// Force-deformation rule of one story spring; the elastic stiffness lives
/// in [`LumpedMassModel::story_stiffness`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpringLaw {
    Linear,
    Bilinear { post_yield_ratio: f64, u_yield: f64 },
}

impl SpringLaw {
    fn validate(&self) -> Result<()> {
        if let SpringLaw::Bilinear {
            post_yield_ratio,
            u_yield,
        } = *self
        {
            if !(0.0..1.0).contains(&post_yield_ratio) {
                return Err(Error::config(format!(
                    "post_yield_ratio must be in [0, 1), got {post_yield_ratio}"
                )));
            }
            if !(u_yield > 0.0) {
                return Err(Error::config(format!("u_yield must be > 0, got {u_yield}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LumpedMassModel {
    /// Story masses, kg, ground story first.
    pub masses: Vec<f64>,
    /// Inter-story spring stiffnesses, N/m.
    pub story_stiffness: Vec<f64>,
    pub damping_ratio: f64,
    pub spring_law: Vec<SpringLaw>,
}

impl LumpedMassModel {
    /// Linear model with the default damping ratio.
    pub fn linear(masses: Vec<f64>, story_stiffness: Vec<f64>) -> Result<Self> {
        let n = masses.len();
        let model = Self {
            masses,
            story_stiffness,
            damping_ratio: DEFAULT_DAMPING_RATIO,
            spring_law: vec![SpringLaw::Linear; n],
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_stories(&self) -> usize {
        self.masses.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn is_linear(&self) -> bool {
        self.spring_law.iter().all(|l| match l {
            SpringLaw::Linear => true,
            SpringLaw::Bilinear { u_yield, .. } => u_yield.is_infinite(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        if n == 0 {
            return Err(Error::config("model has no stories"));
        }
        if self.story_stiffness.len() != n || self.spring_law.len() != n {
            return Err(Error::config(format!(
                "model arrays disagree: {} masses, {} stiffnesses, {} spring laws",
                n,
                self.story_stiffness.len(),
                self.spring_law.len()
            )));
        }
        if let Some(m) = self.masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::config(format!("story mass must be > 0, got {m}")));
        }
        if let Some(k) = self.story_stiffness.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
            return Err(Error::config(format!("story stiffness must be > 0, got {k}")));
        }
        if !(self.damping_ratio > 0.0 && self.damping_ratio < 0.2) {
            return Err(Error::config(format!(
                "damping ratio must be in (0, 0.2), got {}",
                self.damping_ratio
            )));
        }
        self.spring_law.iter().try_for_each(SpringLaw::validate)
    }

    pub fn with_damping(mut self, zeta: f64) -> Result<Self> {
        self.damping_ratio = zeta;
        self.validate()?;
        Ok(self)
    }

    /// Makes every story bilinear with the given yield displacement.
    pub fn with_bilinear(mut self, post_yield_ratio: f64, u_yield: f64) -> Result<Self> {
        let law = SpringLaw::Bilinear {
            post_yield_ratio,
            u_yield,
        };
        law.validate()?;
        self.spring_law = vec![law; self.n_stories()];
        Ok(self)
    }

    /// Same masses and stiffnesses with linear springs.
    pub fn linearized(&self) -> Self {
        Self {
            spring_law: vec![SpringLaw::Linear; self.n_stories()],
            ..self.clone()
        }
    }
}

/// Mass of one story, kg: slab, columns, beams and walls at concrete
/// density, plus the live-load allowance over the plan area.
pub fn story_mass(cfg: &BuildingConfig) -> f64 {
    let h = cfg.floor_height_m;
    let (sx, sy) = (cfg.span_x_m(), cfg.span_y_m());
    let (nx, ny) = (cfg.n_spans_x as f64, cfg.n_spans_y as f64);
    let area = cfg.plan_area_m2();

    let slab = area * cfg.slab_thickness_mm * 1e-3;
    let columns = cfg.n_columns() as f64 * cfg.column_area_m2() * h;
    let beam_length = nx * (ny + 1.0) * sx + ny * (nx + 1.0) * sy;
    let beams = cfg.beam_size_mm[0] * cfg.beam_size_mm[1] * 1e-6 * beam_length;
    let walls = match (cfg.wall_thickness_mm, cfg.wall_length_m) {
        (Some(t), Some(l)) => 2.0 * t * 1e-3 * l * h,
        _ => 0.0,
    };
    CONCRETE_DENSITY * (slab + columns + beams + walls) + LIVE_LOAD_PA / crate::STANDARD_GRAVITY * area
}

/// Lateral stiffness of one story in `dir`, N/m: fixed-fixed columns plus
/// wall shear stiffness.
pub fn story_stiffness(cfg: &BuildingConfig, dir: Direction) -> f64 {
    let h = cfg.floor_height_m;
    let e = cfg.concrete_grade.elastic_modulus_pa();
    let g = e / (2.0 * (1.0 + CONCRETE_POISSON));
    let [bx, by] = cfg.column_size_mm.map(|v| v * 1e-3);
    // bending dimension is the one parallel to the sway
    let inertia = match dir {
        Direction::X => by * bx.powi(3) / 12.0,
        Direction::Y => bx * by.powi(3) / 12.0,
    };
    let columns = cfg.n_columns() as f64 * 12.0 * e * inertia / h.powi(3);
    let walls = match (cfg.wall_thickness_mm, cfg.wall_length_m) {
        (Some(t), Some(l)) => g * (t * 1e-3 * l) * SHEAR_CORRECTION / h,
        _ => 0.0,
    };
    columns + walls
}

/// Uniform-over-height lumped model of the building swaying in `dir`.
pub fn reduce_to_mdof(cfg: &BuildingConfig, dir: Direction) -> LumpedMassModel {
    let n = cfg.n_stories as usize;
    LumpedMassModel {
        masses: vec![story_mass(cfg); n],
        story_stiffness: vec![story_stiffness(cfg, dir); n],
        damping_ratio: DEFAULT_DAMPING_RATIO,
        spring_law: vec![SpringLaw::Linear; n],
    }
}

/// Symmetric tridiagonal matrix; `off[i]` couples rows `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Shear-building stiffness matrix of the given story springs.
    pub fn shear_building(k: &[f64]) -> Self {
        let n = k.len();
        let diag = (0..n).map(|i| k[i] + k.get(i + 1).copied().unwrap_or(0.0)).collect();
        let off = (0..n.saturating_sub(1)).map(|i| -k[i + 1]).collect();
        Self { diag, off }
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            out[i] = s;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = self.diag[i];
            if i + 1 < n {
                a[i][i + 1] = self.off[i];
                a[i + 1][i] = self.off[i];
            }
        }
        a
    }
}

/// Returns `(diag(M), K)`.
pub fn assemble_matrices(model: &LumpedMassModel) -> (Vec<f64>, SymTridiag) {
    (model.masses.clone(), SymTridiag::shear_building(&model.story_stiffness))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalSummary {
    /// Circular frequencies, rad/s, ascending.
    pub omega: Vec<f64>,
    /// Fundamental period, s.
    pub t1: f64,
}

/// Solves `K φ = ω² M φ` for diagonal `M`.
pub fn fundamental_periods(masses: &[f64], k: &SymTridiag) -> Result<ModalSummary> {
    let n = masses.len();
    if n == 0 || k.n() != n {
        return Err(Error::domain(format!(
            "mass vector of length {n} does not match a {}x{} stiffness matrix",
            k.n(),
            k.n()
        )));
    }
    if masses.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::domain("masses must be positive"));
    }
    let inv_sqrt: Vec<f64> = masses.iter().map(|m| 1.0 / m.sqrt()).collect();
    let diag: Vec<f64> = (0..n).map(|i| k.diag[i] / masses[i]).collect();
    let off: Vec<f64> = (0..n - 1).map(|i| k.off[i] * inv_sqrt[i] * inv_sqrt[i + 1]).collect();
    let lambda = tridiagonal_eigenvalues(&diag, &off)?;
    if let Some(l) = lambda.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::domain(format!(
            "stiffness matrix is not positive definite (eigenvalue {l})"
        )));
    }
    let omega: Vec<f64> = lambda.iter().map(|l| l.sqrt()).collect();
    Ok(ModalSummary {
        t1: 2.0 * PI / omega[0],
        omega,
    })
}

pub fn model_periods(model: &LumpedMassModel) -> Result<ModalSummary> {
    let (m, k) = assemble_matrices(model);
    fundamental_periods(&m, &k)
}

/// `S = (T / T̂)²`.
pub fn stiffness_scale_factor(t_target: f64, t_hat: f64) -> Result<f64> {
    if !(t_target > 0.0 && t_hat > 0.0) || !t_target.is_finite() || !t_hat.is_finite() {
        return Err(Error::domain(format!(
            "periods must be positive, got T = {t_target}, T̂ = {t_hat}"
        )));
    }
    let r = t_target / t_hat;
    Ok(r * r)
}

/// Multiplies every story stiffness by `1 / S`, so a model with period `T̂`
/// moves to period `T` when `S = (T / T̂)²`.
pub fn apply_scale(model: &LumpedMassModel, s: f64) -> Result<LumpedMassModel> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::domain(format!("scale factor must be > 0, got {s}")));
    }
    let mut out = model.clone();
    if s != 1.0 {
        let factor = 1.0 / s;
        for k in &mut out.story_stiffness {
            *k *= factor;
        }
    }
    Ok(out)
}

/// Rescales `model` so its fundamental period equals `t_target`.
pub fn match_period(model: &LumpedMassModel, t_target: f64) -> Result<LumpedMassModel> {
    let t_hat = model_periods(model)?.t1;
    apply_scale(model, stiffness_scale_factor(t_target, t_hat)?)
}
