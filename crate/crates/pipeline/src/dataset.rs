//! Dataset generation and loading.
//!
//! On disk a dataset is a directory holding `manifest.toml`, one TOML file
//! per building and per story model, one text record per motion, and
//! `responses.bin`: the oracle and simplified responses of every sample as
//! concatenated `SFRH` blocks addressed by byte offsets in the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use seisforge_core::dynamics::{sdr_response_matched, simulate, IntegratorParams, ResponseHistory};
use seisforge_core::ground_motion::{
    load_record, synth_record, write_record, GroundMotion, IntensityBands, IntensityClass, SynthSpec,
};
use seisforge_core::structure::{
    model_periods, reduce_to_mdof, sample_building_with, BuildingConfig, Direction, LumpedMassModel, StructureType,
};
use seisforge_core::{kv, rng};
use serde::{Deserialize, Serialize};

use crate::config::{GenConfig, OracleKind};
use crate::windows::NormStats;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RESPONSES_FILE: &str = "responses.bin";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "validation" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            _ => Err(Error::config(format!(
                "unknown split `{s}`, expected train, validation or test"
            ))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Validation => "validation",
            Self::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub sample_id: String,
    pub building_id: String,
    pub structure_type: StructureType,
    pub n_stories: usize,
    pub direction: Direction,
    pub motion_id: String,
    pub intensity: IntensityClass,
    /// Paths relative to the dataset root.
    pub model_file: String,
    pub motion_file: String,
    pub oracle_offset: u64,
    pub oracle_len: u64,
    pub sdr_offset: u64,
    pub sdr_len: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkipEntry {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub by_type: BTreeMap<String, usize>,
    pub by_intensity: BTreeMap<String, usize>,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub rng_seed: u64,
    pub config: GenConfig,
    pub counts: Counts,
    pub normalization: NormStats,
    pub samples: Vec<SampleEntry>,
    #[serde(default)]
    pub skipped: Vec<SkipEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// One loaded sample: the story model, its excitation, and the oracle
/// (target) and simplified-model (feature) responses.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub sample_id: String,
    pub model_ref: String,
    pub motion_ref: String,
    pub direction: Direction,
    pub model: LumpedMassModel,
    pub motion: GroundMotion,
    pub oracle: ResponseHistory,
    pub sdr: ResponseHistory,
    pub split: Split,
}

/// Splits `n` items over `weights` by largest remainders; ties go to the
/// lower index.
pub fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Uniform-story equivalent of `model`: mean mass and mean stiffness on
/// every story, linear springs, same damping ratio.
pub fn simplified_model(model: &LumpedMassModel) -> Result<LumpedMassModel> {
    let n = model.n_stories();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let m = LumpedMassModel::linear(vec![mean(&model.masses); n], vec![mean(&model.story_stiffness); n])?;
    Ok(m.with_damping(model.damping_ratio)?)
}

/// Response of the simplified model, period-matched to the linearized
/// `model`. This is the feature channel both in the dataset and at
/// prediction time.
pub fn simplified_response(
    model: &LumpedMassModel,
    gm: &GroundMotion,
    p: &IntegratorParams,
) -> Result<ResponseHistory> {
    let t_ref = model_periods(&model.linearized())?.t1;
    Ok(sdr_response_matched(&simplified_model(model)?, t_ref, gm, p)?)
}

/// Target model of one building direction: the uniform reduction with
/// seeded log-normal per-story stiffness variation and the configured
/// spring law.
fn oracle_model(
    building: &BuildingConfig,
    dir: Direction,
    cfg: &GenConfig,
    r: &mut rng::DetRng,
) -> Result<LumpedMassModel> {
    let o = &cfg.oracle;
    let mut model = reduce_to_mdof(building, dir).with_damping(o.damping_ratio)?;
    for k in &mut model.story_stiffness {
        let z: f64 = StandardNormal.sample(r);
        *k *= (o.stiffness_variation * z).exp();
    }
    if o.kind == OracleKind::Bilinear {
        model = model.with_bilinear(o.post_yield_ratio, o.yield_drift_ratio * building.floor_height_m)?;
    }
    model.validate()?;
    Ok(model)
}

struct MotionSpec {
    id: String,
    class: IntensityClass,
    seed: u64,
}

fn make_motion(spec: &MotionSpec, cfg: &GenConfig, records: &[GroundMotion]) -> Result<GroundMotion> {
    let bands = IntensityBands::default();
    let (lo, hi) = bands.pga_range(spec.class);
    let mut r = rng::seeded(spec.seed);
    let pga = r.random_range(lo..hi);
    let gm = if records.is_empty() {
        let d = cfg.duration_s;
        let synth = SynthSpec {
            duration: d,
            f_lo: cfg.motions.f_lo_hz,
            f_hi: cfg.motions.f_hi_hz,
            rise: 0.1 * d,
            plateau: 0.4 * d,
            decay: 0.5 * d,
            target_pga: pga,
            seed: r.random(),
        };
        synth_record(&synth, cfg.dt)?
    } else {
        let base = &records[r.random_range(0..records.len())];
        let mut gm = if (base.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
            base.resample(cfg.dt)?
        } else {
            base.clone()
        };
        let n = (cfg.duration_s / cfg.dt).round() as usize + 1;
        if gm.len() > n {
            gm = gm.truncated(n)?;
        }
        gm.scale_to_pga(pga)?
    };
    Ok(gm.with_id(spec.id.clone()))
}

struct GeneratedSample {
    index: usize,
    direction: Direction,
    wave: usize,
    oracle: ResponseHistory,
    sdr: ResponseHistory,
}

struct BuildingOutput {
    index: usize,
    structure_type: StructureType,
    config: Option<BuildingConfig>,
    models: Vec<(Direction, LumpedMassModel)>,
    motions: Vec<(usize, GroundMotion)>,
    samples: Vec<GeneratedSample>,
    skipped: Vec<SkipEntry>,
}

fn sample_id(i: usize) -> String {
    format!("s{i:06}")
}

fn building_id(b: usize) -> String {
    format!("b{b:05}")
}

fn motion_id(w: usize) -> String {
    format!("w{w:05}")
}

struct Plan<'a> {
    cfg: &'a GenConfig,
    types: Vec<StructureType>,
    classes: Vec<IntensityClass>,
    records: Vec<GroundMotion>,
    n_waves: usize,
}

fn generate_building(plan: &Plan, b: usize) -> BuildingOutput {
    let cfg = plan.cfg;
    let t = plan.types[b];
    let wpb = cfg.waves_per_building();
    let n_dirs = cfg.directions.len();
    let waves: Vec<usize> = (b * wpb..((b + 1) * wpb).min(plan.n_waves)).collect();
    let sample_indices = |w: usize| {
        (0..n_dirs)
            .map(move |d| (d, w * n_dirs + d))
            .filter(|(_, s)| *s < cfg.n_samples())
    };
    let mut out = BuildingOutput {
        index: b,
        structure_type: t,
        config: None,
        models: Vec::new(),
        motions: Vec::new(),
        samples: Vec::new(),
        skipped: Vec::new(),
    };
    let skip_all = |out: &mut BuildingOutput, reason: String| {
        for &w in &waves {
            for (_, s) in sample_indices(w) {
                out.skipped.push(SkipEntry {
                    sample_id: sample_id(s),
                    reason: reason.clone(),
                });
            }
        }
    };

    let stories = cfg.stories.map(|[lo, hi]| (lo, hi));
    let seed: u64 = rng::substream(cfg.seed, "building", b as u64).random();
    let building = match sample_building_with(t, stories, seed) {
        Ok(c) => c,
        Err(e) => {
            skip_all(&mut out, format!("building sampling failed: {e}"));
            return out;
        }
    };
    for (d, &dir) in cfg.directions.iter().enumerate() {
        let mut r = rng::substream(cfg.seed, "variation", (b * 2 + d) as u64);
        match oracle_model(&building, dir, cfg, &mut r) {
            Ok(m) => out.models.push((dir, m)),
            Err(e) => {
                skip_all(&mut out, format!("story model for direction {dir} failed: {e}"));
                return out;
            }
        }
    }
    out.config = Some(building);
    let p = IntegratorParams::average_acceleration(cfg.dt);
    for &w in &waves {
        let spec = MotionSpec {
            id: motion_id(w),
            class: plan.classes[w],
            seed: rng::substream(cfg.seed, "wave", w as u64).random(),
        };
        let gm = match make_motion(&spec, cfg, &plan.records) {
            Ok(gm) => gm,
            Err(e) => {
                for (_, s) in sample_indices(w) {
                    out.skipped.push(SkipEntry {
                        sample_id: sample_id(s),
                        reason: format!("motion {} failed: {e}", spec.id),
                    });
                }
                continue;
            }
        };
        for (d, s) in sample_indices(w) {
            let (dir, model) = &out.models[d];
            let run = simulate(model, &gm, &p)
                .map_err(Error::from)
                .and_then(|o| simplified_response(model, &gm, &p).map(|sdr| (o, sdr)));
            match run {
                Ok((oracle, sdr)) => out.samples.push(GeneratedSample {
                    index: s,
                    direction: *dir,
                    wave: w,
                    oracle,
                    sdr,
                }),
                Err(e) => out.skipped.push(SkipEntry {
                    sample_id: sample_id(s),
                    reason: format!("simulation failed: {e}"),
                }),
            }
        }
        out.motions.push((w, gm));
    }
    out
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates a dataset into `out_dir` and returns its manifest.
pub fn build_dataset(cfg: &GenConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let n_samples = cfg.n_samples();
    let n_dirs = cfg.directions.len();
    let n_waves = n_samples.div_ceil(n_dirs);
    let n_buildings = n_waves.div_ceil(cfg.waves_per_building());

    let weights: Vec<f64> = cfg.structure_mix.weights().iter().map(|(_, w)| *w).collect();
    let mut types = Vec::with_capacity(n_buildings);
    for ((t, _), c) in cfg.structure_mix.weights().iter().zip(apportion(n_buildings, &weights)) {
        types.extend(std::iter::repeat_n(*t, c));
    }
    types.shuffle(&mut rng::substream(cfg.seed, "types", 0));
    let mut classes = Vec::with_capacity(n_waves);
    for (c, k) in IntensityClass::ALL.iter().zip(apportion(n_waves, &cfg.intensity_mix)) {
        classes.extend(std::iter::repeat_n(*c, k));
    }
    classes.shuffle(&mut rng::substream(cfg.seed, "intensity", 0));
    let records = cfg
        .motions
        .records
        .iter()
        .map(|p| load_record(p, None).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;

    let plan = Plan {
        cfg,
        types,
        classes,
        records,
        n_waves,
    };
    info!("generating {n_samples} samples from {n_buildings} buildings and {n_waves} motions");
    let outputs: Vec<BuildingOutput> = (0..n_buildings)
        .into_par_iter()
        .map(|b| generate_building(&plan, b))
        .collect();

    for sub in ["buildings", "models", "motions"] {
        create_dir(&out_dir.join(sub))?;
    }
    let mut responses = Vec::new();
    let mut entries = Vec::with_capacity(n_samples);
    let mut skipped = Vec::new();
    let mut histories: Vec<(ResponseHistory, GroundMotion)> = Vec::with_capacity(n_samples);
    for out in outputs {
        skipped.extend(out.skipped);
        let Some(building) = &out.config else { continue };
        let bid = building_id(out.index);
        kv::write(&out_dir.join(format!("buildings/{bid}.toml")), building)?;
        for (dir, model) in &out.models {
            kv::write(&out_dir.join(format!("models/{bid}_{dir}.toml")), model)?;
        }
        let motions: BTreeMap<usize, &GroundMotion> = out.motions.iter().map(|(w, g)| (*w, g)).collect();
        for (w, gm) in &motions {
            write_record(gm, &out_dir.join(format!("motions/{}.txt", motion_id(*w))))?;
        }
        for s in out.samples {
            let oracle = s.oracle.to_bytes();
            let sdr = s.sdr.to_bytes();
            let oracle_offset = responses.len() as u64;
            responses.extend_from_slice(&oracle);
            let sdr_offset = responses.len() as u64;
            responses.extend_from_slice(&sdr);
            let gm = motions[&s.wave];
            entries.push(SampleEntry {
                sample_id: sample_id(s.index),
                building_id: bid.clone(),
                structure_type: out.structure_type,
                n_stories: building.n_stories as usize,
                direction: s.direction,
                motion_id: motion_id(s.wave),
                intensity: gm.intensity_class(),
                model_file: format!("models/{bid}_{}.toml", s.direction),
                motion_file: format!("motions/{}.txt", motion_id(s.wave)),
                oracle_offset,
                oracle_len: oracle.len() as u64,
                sdr_offset,
                sdr_len: sdr.len() as u64,
                split: Split::Train,
            });
            // statistics use the stored (32-bit) values
            let stored = ResponseHistory::from_bytes(&oracle)?.0;
            histories.push((stored, gm.clone()));
        }
    }
    for s in &skipped {
        warn!("skipped {}: {}", s.sample_id, s.reason);
    }
    if entries.is_empty() {
        return Err(Error::Generation("every sample failed; nothing to write".into()));
    }

    // split assignment over the samples that succeeded
    let n = entries.len();
    let n_train = ((n as f64 * cfg.train_fraction).round() as usize).clamp(1, n);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(cfg.seed, "split", 0));
    for (rank, &i) in order.iter().enumerate() {
        entries[i].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }

    let train: Vec<_> = entries
        .iter()
        .zip(&histories)
        .filter(|(e, _)| e.split == Split::Train)
        .map(|(_, h)| (&h.0, &h.1))
        .collect();
    let normalization = NormStats::from_samples(&train, cfg.dt)?;

    let mut counts = Counts {
        skipped: skipped.len(),
        ..Counts::default()
    };
    for e in &entries {
        *counts.by_type.entry(e.structure_type.to_string()).or_default() += 1;
        *counts.by_intensity.entry(e.intensity.to_string()).or_default() += 1;
        match e.split {
            Split::Train => counts.train += 1,
            Split::Validation => counts.validation += 1,
            Split::Test => counts.test += 1,
        }
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        rng_seed: cfg.seed,
        config: cfg.clone(),
        counts,
        normalization,
        samples: entries,
        skipped,
    };
    let path = out_dir.join(RESPONSES_FILE);
    std::fs::write(&path, &responses).map_err(|e| Error::io(&path, e))?;
    write_text(&out_dir.join(MANIFEST_FILE), &kv::to_string(&manifest)?)?;
    Ok(manifest)
}

/// A generated dataset opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    responses: Vec<u8>,
}

impl Dataset {
    /// Opens `path`, either the dataset directory or its manifest file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (root, manifest_path) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (root, path.to_path_buf())
        };
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let value: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
        match value.get("version").and_then(toml::Value::as_integer) {
            Some(v) if v == MANIFEST_VERSION as i64 => {}
            Some(v) => {
                return Err(Error::Compatibility(format!(
                    "{}: manifest version {v}, this build reads version {MANIFEST_VERSION}",
                    manifest_path.display()
                )))
            }
            None => {
                return Err(Error::Format(format!(
                    "{}: manifest has no version",
                    manifest_path.display()
                )))
            }
        }
        let manifest: DatasetManifest =
            toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
        let rpath = root.join(RESPONSES_FILE);
        let responses = std::fs::read(&rpath).map_err(|e| Error::io(&rpath, e))?;
        Ok(Self {
            root,
            manifest,
            responses,
        })
    }

    pub fn entries(&self, split: Split) -> Vec<&SampleEntry> {
        self.manifest.split(split).collect()
    }

    pub fn entry(&self, sample_id: &str) -> Result<&SampleEntry> {
        self.manifest
            .samples
            .iter()
            .find(|s| s.sample_id == sample_id)
            .ok_or_else(|| Error::config(format!("no sample `{sample_id}` in the dataset")))
    }

    fn block(&self, offset: u64, len: u64, what: &str) -> Result<ResponseHistory> {
        let (start, end) = (offset as usize, (offset + len) as usize);
        let bytes = self
            .responses
            .get(start..end)
            .ok_or_else(|| Error::Format(format!("{what} block [{start}, {end}) outside {RESPONSES_FILE}")))?;
        let (h, used) = ResponseHistory::from_bytes(bytes)?;
        if used != bytes.len() {
            return Err(Error::Format(format!("{what} block length mismatch")));
        }
        Ok(h)
    }

    pub fn load(&self, e: &SampleEntry) -> Result<TrainingSample> {
        let model: LumpedMassModel = kv::read(&self.root.join(&e.model_file))?;
        let motion = load_record(&self.root.join(&e.motion_file), None)?;
        let oracle = self.block(e.oracle_offset, e.oracle_len, "oracle")?;
        let sdr = self.block(e.sdr_offset, e.sdr_len, "simplified response")?;
        if oracle.n_steps() != motion.len() || sdr.n_steps() != motion.len() {
            return Err(Error::Format(format!(
                "sample {}: response lengths disagree with the motion",
                e.sample_id
            )));
        }
        Ok(TrainingSample {
            sample_id: e.sample_id.clone(),
            model_ref: e.model_file.clone(),
            motion_ref: format!("{}:{}", e.motion_id, e.direction),
            direction: e.direction,
            model,
            motion,
            oracle,
            sdr,
            split: e.split,
        })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<TrainingSample>> {
        self.entries(split).into_iter().map(|e| self.load(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_is_exact_and_proportional() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        let c = apportion(500, &crate::config::REFERENCE_INTENSITY_MIX);
        assert_eq!(c.iter().sum::<usize>(), 500);
        assert_eq!(c, vec![241, 209, 44, 6]);
        assert_eq!(apportion(0, &[1.0, 2.0]), vec![0, 0]);
    }

    #[test]
    fn simplified_model_is_uniform() {
        let m = LumpedMassModel::linear(vec![1.0, 3.0], vec![2.0, 4.0]).unwrap();
        let s = simplified_model(&m).unwrap();
        assert_eq!(s.masses, vec![2.0, 2.0]);
        assert_eq!(s.story_stiffness, vec![3.0, 3.0]);
    }
}
