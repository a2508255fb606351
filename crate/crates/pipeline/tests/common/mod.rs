#![allow(dead_code)]

use std::path::Path;

use seisforge_core::dynamics::{simulate, IntegratorParams};
use seisforge_core::structure::LumpedMassModel;
use seisforge_pipeline::config::StructureMix;
use seisforge_pipeline::dataset::{simplified_response, TrainingSample};
use seisforge_pipeline::{build_dataset, Dataset, GenConfig, OptimConfig, TrainConfig};
use seisforge_srfd::SrfdConfig;

/// Short linear frames with `stories` in `[1, hi]`.
pub fn toy_config(seed: u64, n: usize, hi: u32, duration_s: f64) -> GenConfig {
    let mut g = GenConfig::new(seed, n);
    g.stories = Some([1, hi]);
    g.structure_mix = StructureMix {
        frame: 1.0,
        shear_frame: 0.0,
        complex_shear: 0.0,
    };
    g.duration_s = duration_s;
    g
}

pub fn toy_dataset(dir: &Path, seed: u64, n: usize, hi: u32, duration_s: f64) -> Dataset {
    build_dataset(&toy_config(seed, n, hi, duration_s), dir).unwrap();
    Dataset::open(dir).unwrap()
}

pub fn quick_train_config(steps: usize, lr: f64) -> TrainConfig {
    TrainConfig::new(
        3,
        SrfdConfig::tiny(),
        OptimConfig {
            steps,
            batch_size: 8,
            peak_lr: lr,
            ..OptimConfig::default()
        },
    )
}

/// `s` re-simulated with every story stiffness multiplied by `factor`.
pub fn restiffened(s: &TrainingSample, factor: f64) -> TrainingSample {
    let mut model: LumpedMassModel = s.model.clone();
    for k in &mut model.story_stiffness {
        *k *= factor;
    }
    let p = IntegratorParams::average_acceleration(s.motion.dt());
    TrainingSample {
        oracle: simulate(&model, &s.motion, &p).unwrap(),
        sdr: simplified_response(&model, &s.motion, &p).unwrap(),
        model,
        ..s.clone()
    }
}
