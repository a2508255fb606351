//! Parametric RC building descriptions and their random generation.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::DetRng;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureType {
    Frame,
    ShearFrame,
    ComplexShear,
}

impl StructureType {
    pub const ALL: [StructureType; 3] = [Self::Frame, Self::ShearFrame, Self::ComplexShear];

    /// Story-count band of each type.
    pub fn story_band(self) -> (u32, u32) {
        match self {
            Self::Frame => (1, 10),
            Self::ShearFrame => (11, 20),
            Self::ComplexShear => (20, 33),
        }
    }

    pub fn has_walls(self) -> bool {
        !matches!(self, Self::Frame)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Frame => "frame",
            Self::ShearFrame => "shear_frame",
            Self::ComplexShear => "complex_shear",
        }
    }
}

impl fmt::Display for StructureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConcreteGrade {
    C25,
    C30,
    C35,
    C40,
    C45,
    C50,
}

impl ConcreteGrade {
    /// Characteristic strength in MPa.
    pub fn fck_mpa(self) -> f64 {
        match self {
            Self::C25 => 25.0,
            Self::C30 => 30.0,
            Self::C35 => 35.0,
            Self::C40 => 40.0,
            Self::C45 => 45.0,
            Self::C50 => 50.0,
        }
    }

    /// E_c = 4700·√f_ck, in Pa.
    pub fn elastic_modulus_pa(self) -> f64 {
        4700.0 * self.fck_mpa().sqrt() * 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    X,
    Y,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::X => "x",
            Self::Y => "y",
        })
    }
}

/// One RC building. Column size is `[along x, along y]`; beam size is
/// `[width, depth]`. Wall length is the total wall length resisting each
/// direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingConfig {
    pub structure_type: StructureType,
    pub n_stories: u32,
    pub floor_height_m: f64,
    pub slab_thickness_mm: f64,
    pub n_spans_x: u32,
    pub n_spans_y: u32,
    pub span_length_m: f64,
    pub aspect_ratio: f64,
    pub column_size_mm: [f64; 2],
    pub beam_size_mm: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_thickness_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_length_m: Option<f64>,
    pub concrete_grade: ConcreteGrade,
    pub rebar_strength_mpa: f64,
}

/// Parameter ranges for validation and sampling.
pub mod ranges {
    pub const STORIES: (u32, u32) = (1, 33);
    pub const FLOOR_HEIGHT_M: (f64, f64) = (3.0, 3.6);
    pub const SLAB_THICKNESS_MM: (f64, f64) = (80.0, 150.0);
    pub const SPANS: (u32, u32) = (3, 10);
    pub const SPAN_LENGTH_M: (f64, f64) = (5.0, 10.0);
    pub const ASPECT_RATIO: (f64, f64) = (2.0 / 3.0, 1.0);
    pub const WALL_THICKNESS_MM: (f64, f64) = (200.0, 400.0);
    pub const REBAR_MPA: (f64, f64) = (355.0, 400.0);
    pub const COLUMN_MM: (f64, f64) = (250.0, 2000.0);
    pub const BEAM_WIDTH_MM: (f64, f64) = (200.0, 600.0);
    pub const BEAM_DEPTH_MM: (f64, f64) = (300.0, 1200.0);

    pub const FLOOR_HEIGHT_SET: [f64; 4] = [3.0, 3.1, 3.2, 3.3];
    pub const SLAB_SET: [f64; 4] = [90.0, 100.0, 110.0, 120.0];
    pub const SPAN_SET: [u32; 6] = [4, 5, 6, 7, 8, 9];
    pub const WALL_SET: [f64; 3] = [250.0, 300.0, 350.0];
}

/// Axial-load proxy above which a generated building is rejected.
pub const MAX_AXIAL_RATIO: f64 = 0.9;
const MAX_ATTEMPTS: usize = 1000;

fn check_range(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v.is_finite() && v >= lo - 1e-12 && v <= hi + 1e-12 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

fn check_int(name: &str, v: u32, (lo, hi): (u32, u32)) -> Result<()> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

impl BuildingConfig {
    pub fn validate(&self) -> Result<()> {
        check_int("n_stories", self.n_stories, ranges::STORIES)?;
        check_int("n_stories", self.n_stories, self.structure_type.story_band())
            .map_err(|e| Error::config(format!("{e} for {}", self.structure_type)))?;
        check_range("floor_height_m", self.floor_height_m, ranges::FLOOR_HEIGHT_M)?;
        check_range("slab_thickness_mm", self.slab_thickness_mm, ranges::SLAB_THICKNESS_MM)?;
        check_int("n_spans_x", self.n_spans_x, ranges::SPANS)?;
        check_int("n_spans_y", self.n_spans_y, ranges::SPANS)?;
        check_range("span_length_m", self.span_length_m, ranges::SPAN_LENGTH_M)?;
        check_range("aspect_ratio", self.aspect_ratio, ranges::ASPECT_RATIO)?;
        for v in self.column_size_mm {
            check_range("column_size_mm", v, ranges::COLUMN_MM)?;
        }
        check_range("beam width", self.beam_size_mm[0], ranges::BEAM_WIDTH_MM)?;
        check_range("beam depth", self.beam_size_mm[1], ranges::BEAM_DEPTH_MM)?;
        match (self.wall_thickness_mm, self.wall_length_m) {
            (Some(t), Some(l)) => {
                check_range("wall_thickness_mm", t, ranges::WALL_THICKNESS_MM)?;
                if !(l > 0.0 && l.is_finite()) {
                    return Err(Error::config(format!("wall_length_m must be > 0, got {l}")));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::config(
                    "wall_thickness_mm and wall_length_m must be given together",
                ))
            }
        }
        check_range("rebar_strength_mpa", self.rebar_strength_mpa, ranges::REBAR_MPA)?;
        Ok(())
    }

    pub fn span_x_m(&self) -> f64 {
        self.span_length_m
    }

    pub fn span_y_m(&self) -> f64 {
        self.span_length_m * self.aspect_ratio
    }

    pub fn plan_area_m2(&self) -> f64 {
        self.n_spans_x as f64 * self.span_x_m() * self.n_spans_y as f64 * self.span_y_m()
    }

    pub fn n_columns(&self) -> usize {
        (self.n_spans_x as usize + 1) * (self.n_spans_y as usize + 1)
    }

    pub fn column_area_m2(&self) -> f64 {
        self.column_size_mm[0] * self.column_size_mm[1] * 1e-6
    }

    /// Total gravity load over total column capacity, N / (mm² · MPa).
    pub fn axial_ratio(&self) -> f64 {
        let weight = super::mdof::story_mass(self) * self.n_stories as f64 * crate::STANDARD_GRAVITY;
        let capacity = self.n_columns() as f64 * self.column_area_m2() * 1e6 * self.concrete_grade.fck_mpa();
        weight / capacity
    }
}

/// Draws a building of the given type with stories from the type's band.
pub fn sample_building(structure_type: StructureType, seed: u64) -> Result<BuildingConfig> {
    sample_building_with(structure_type, None, seed)
}

/// Like [`sample_building`] with the story count restricted to `stories`
/// (intersected with the type's band).
pub fn sample_building_with(
    structure_type: StructureType,
    stories: Option<(u32, u32)>,
    seed: u64,
) -> Result<BuildingConfig> {
    let band = structure_type.story_band();
    let (lo, hi) = match stories {
        Some((a, b)) => (a.max(band.0), b.min(band.1)),
        None => band,
    };
    if lo > hi {
        return Err(Error::config(format!(
            "story range {stories:?} does not intersect the {structure_type} band {band:?}"
        )));
    }
    let mut r = rng::seeded(seed);
    for _ in 0..MAX_ATTEMPTS {
        let cfg = draw(&mut r, structure_type, (lo, hi));
        if cfg.validate().is_ok() && cfg.axial_ratio() <= MAX_AXIAL_RATIO {
            return Ok(cfg);
        }
    }
    Err(Error::Generation(format!(
        "no acceptable {structure_type} building after {MAX_ATTEMPTS} attempts (seed {seed})"
    )))
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

fn draw(r: &mut DetRng, structure_type: StructureType, stories: (u32, u32)) -> BuildingConfig {
    let n_stories = r.random_range(stories.0..=stories.1);
    let floor_height_m = *ranges::FLOOR_HEIGHT_SET.choose(r).unwrap();
    let slab_thickness_mm = *ranges::SLAB_SET.choose(r).unwrap();
    let n_spans_x = *ranges::SPAN_SET.choose(r).unwrap();
    let n_spans_y = *ranges::SPAN_SET.choose(r).unwrap();
    let span_length_m = r.random_range(ranges::SPAN_LENGTH_M.0..=ranges::SPAN_LENGTH_M.1);
    let aspect_ratio = r.random_range(ranges::ASPECT_RATIO.0..=ranges::ASPECT_RATIO.1);

    // columns grow with the gravity load they carry
    let side = round_to((300.0 + 25.0 * n_stories as f64) * r.random_range(0.9..1.3), 50.0).clamp(300.0, 1500.0);
    let elongation = *[1.0, 1.1, 1.2].choose(r).unwrap();
    let other = round_to(side * elongation, 50.0).clamp(300.0, 1600.0);
    let column_size_mm = if r.random_bool(0.5) {
        [side, other]
    } else {
        [other, side]
    };

    let depth = round_to(span_length_m * 1000.0 / r.random_range(10.0..14.0), 50.0).clamp(350.0, 1000.0);
    let width = round_to(depth * r.random_range(0.4..0.6), 50.0).clamp(200.0, 500.0);

    let (wall_thickness_mm, wall_length_m) = if structure_type.has_walls() {
        let spans = match structure_type {
            StructureType::ComplexShear => r.random_range(4.0..8.0),
            _ => r.random_range(2.0..4.0),
        };
        (Some(*ranges::WALL_SET.choose(r).unwrap()), Some(span_length_m * spans))
    } else {
        (None, None)
    };

    let concrete_grade = *[
        ConcreteGrade::C30,
        ConcreteGrade::C35,
        ConcreteGrade::C40,
        ConcreteGrade::C45,
    ]
    .choose(r)
    .unwrap();
    let rebar_strength_mpa = r.random_range(ranges::REBAR_MPA.0..=ranges::REBAR_MPA.1);

    BuildingConfig {
        structure_type,
        n_stories,
        floor_height_m,
        slab_thickness_mm,
        n_spans_x,
        n_spans_y,
        span_length_m,
        aspect_ratio,
        column_size_mm,
        beam_size_mm: [width, depth],
        wall_thickness_mm,
        wall_length_m,
        concrete_grade,
        rebar_strength_mpa,
    }
}
