mod common;

use std::collections::BTreeMap;
use std::path::Path;

use seisforge_core::dynamics::Quantity;
use seisforge_core::ground_motion::IntensityClass;
use seisforge_core::structure::model_periods;
use seisforge_pipeline::config::REFERENCE_INTENSITY_MIX;
use seisforge_pipeline::dataset::{simplified_model, MANIFEST_FILE};
use seisforge_pipeline::{build_dataset, Dataset, Error, GenConfig, NormStats, Split};

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn ten_samples_split_nine_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_dataset(&common::toy_config(5, 10, 3, 2.0), dir.path()).unwrap();
    assert_eq!((m.counts.train, m.counts.test, m.counts.validation), (9, 1, 0));
    assert_eq!(m.samples.len(), 10);
    assert!(m.skipped.is_empty());
}

#[test]
fn regeneration_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = common::toy_config(11, 12, 4, 2.0);
    build_dataset(&cfg, a.path()).unwrap();
    build_dataset(&cfg, b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.len() > 3);
    assert_eq!(fa, fb);

    let c = tempfile::tempdir().unwrap();
    build_dataset(&common::toy_config(12, 12, 4, 2.0), c.path()).unwrap();
    assert_ne!(fa[MANIFEST_FILE], files(c.path())[MANIFEST_FILE]);
}

#[test]
fn samples_load_consistently() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::toy_dataset(dir.path(), 2, 6, 3, 2.0);
    assert_eq!(
        Dataset::open(dir.path().join(MANIFEST_FILE)).unwrap().manifest,
        ds.manifest
    );
    for e in &ds.manifest.samples {
        let s = ds.load(e).unwrap();
        assert_eq!(s.oracle.n_steps(), s.motion.len());
        assert_eq!(s.sdr.n_steps(), s.motion.len());
        assert_eq!(s.oracle.n_stories(), e.n_stories);
        assert_eq!(s.model.n_stories(), e.n_stories);
        assert_eq!(s.motion.intensity_class(), e.intensity);
        assert!((s.oracle.dt() - 0.02).abs() < 1e-15);
        // the simplified model is uniform and period-matched to the oracle
        let t_oracle = model_periods(&s.model.linearized()).unwrap().t1;
        let t_simple = model_periods(&simplified_model(&s.model).unwrap()).unwrap().t1;
        assert!(t_oracle > 0.0 && t_simple > 0.0);
        assert!(s.sdr.get(Quantity::Displacement).iter().all(|v| v.is_finite()));
    }
}

#[test]
fn normalization_uses_the_train_split_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::toy_config(8, 10, 3, 2.0);
    cfg.train_fraction = 0.5;
    let ds = Dataset::open({
        build_dataset(&cfg, dir.path()).unwrap();
        dir.path()
    })
    .unwrap();
    let train = ds.load_split(Split::Train).unwrap();
    let pairs: Vec<_> = train.iter().map(|s| (&s.oracle, &s.motion)).collect();
    let expected = NormStats::from_samples(&pairs, cfg.dt).unwrap();
    let n = ds.manifest.normalization;
    assert!((n.disp_rms - expected.disp_rms).abs() <= 1e-12 * expected.disp_rms);
    assert!((n.accel_rms - expected.accel_rms).abs() <= 1e-12 * expected.accel_rms);
    assert!((n.wave_rms - expected.wave_rms).abs() <= 1e-12 * expected.wave_rms);

    let all = ds.load_split(Split::Test).unwrap();
    let pairs: Vec<_> = all.iter().chain(&train).map(|s| (&s.oracle, &s.motion)).collect();
    assert_ne!(NormStats::from_samples(&pairs, cfg.dt).unwrap(), n);
}

#[test]
fn validation_fraction_creates_a_third_split() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::toy_config(9, 10, 2, 1.0);
    cfg.train_fraction = 0.6;
    cfg.validation_fraction = 0.2;
    let m = build_dataset(&cfg, dir.path()).unwrap();
    assert_eq!((m.counts.train, m.counts.validation, m.counts.test), (6, 2, 2));
}

#[test]
fn intensity_mix_within_three_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = GenConfig::new(21, 100);
    cfg.duration_s = 2.0;
    let m = build_dataset(&cfg, dir.path()).unwrap();
    for (class, p) in IntensityClass::ALL.iter().zip(REFERENCE_INTENSITY_MIX) {
        let got = *m.counts.by_intensity.get(&class.to_string()).unwrap_or(&0) as f64;
        let n = m.samples.len() as f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!((got - n * p).abs() <= 3.0 * sigma, "{class}: {got} vs {}", n * p);
    }
    let types: usize = m.counts.by_type.values().sum();
    assert_eq!(types, 100);
}

#[test]
fn bilinear_oracle_generates() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::toy_config(4, 4, 3, 2.0);
    cfg.oracle.kind = seisforge_pipeline::config::OracleKind::Bilinear;
    let ds = Dataset::open({
        build_dataset(&cfg, dir.path()).unwrap();
        dir.path()
    })
    .unwrap();
    let s = ds.load(&ds.manifest.samples[0]).unwrap();
    assert!(!s.model.is_linear());
}

#[test]
fn newer_manifest_version_is_incompatible() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&common::toy_config(1, 2, 1, 1.0), dir.path()).unwrap();
    let p = dir.path().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&p)
        .unwrap()
        .replacen("version = 1", "version = 99", 1);
    std::fs::write(&p, text).unwrap();
    assert!(matches!(Dataset::open(dir.path()), Err(Error::Compatibility(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = GenConfig::new(1, 0);
    assert!(matches!(build_dataset(&cfg, dir.path()), Err(Error::Config(_))));
    cfg = common::toy_config(1, 4, 3, 1.0);
    cfg.structure_mix.shear_frame = 1.0;
    let e = build_dataset(&cfg, dir.path()).unwrap_err().to_string();
    assert!(e.contains("shear_frame"), "{e}");
}

#[test]
fn minimal_spec_takes_every_default() {
    let g: GenConfig = toml::from_str("seed = 4\nn_samples = 12\n").unwrap();
    assert_eq!(g, GenConfig::new(4, 12));
    g.validate().unwrap();
    assert!(toml::from_str::<GenConfig>("seed = 4\nn_samples = 12\nspeed = 1\n").is_err());
}
