use std::path::Path;

use log::info;
use seisforge_core::dynamics::{simulate, IntegratorParams, Quantity, ResponseHistory};
use seisforge_core::structure::{model_periods, Direction, LumpedMassModel};
use seisforge_core::sysid::{identify_stiffness, EsSettings, IdentificationMethod, IdentificationProblem};
use seisforge_pipeline::dataset::simplified_response;
use seisforge_pipeline::metrics::reduce_report;
use seisforge_pipeline::predict::{sample_errors, REPORT_QUANTITIES};
use seisforge_pipeline::{
    build_dataset, evaluate, finetune_lora, train, Dataset, FinetuneConfig, GenConfig, Split, TrainConfig,
};
use seisforge_srfd::Checkpoint;
use serde::{Deserialize, Serialize};

use crate::cli::{
    EvaluateArgs, FinetuneArgs, GenArgs, IdentifyArgs, MethodArg, PredictArgs, SimulateArgs, SplitArg, TrainArgs,
};
use crate::error::{CliError, Result};
use crate::plot::{self, Panel, Series, ORACLE_COLOR, PREDICTION_COLOR, SIMPLIFIED_COLOR};
use crate::support::*;

fn default_direction() -> Direction {
    Direction::X
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let cfg: GenConfig = resolve_config(Some(&a.config), override_seed(a.seed)?)?;
    cfg.validate()?;
    create_out(&a.out)?;
    write_resolved(&a.out, "gen", &[("config", &a.config)], &cfg)?;
    let m = build_dataset(&cfg, &a.out)?;
    info!(
        "{} samples: {} train, {} validation, {} test, {} skipped",
        m.samples.len(),
        m.counts.train,
        m.counts.validation,
        m.counts.test,
        m.counts.skipped
    );
    println!("{}", a.out.join(seisforge_pipeline::dataset::MANIFEST_FILE).display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    #[serde(default = "default_direction")]
    direction: Direction,
    /// Replaces the model's damping ratio when set.
    damping_ratio: Option<f64>,
    /// Required motion step; defaults to the motion's own.
    dt: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    n_stories: usize,
    n_steps: usize,
    dt: f64,
    t1: f64,
    peak_displacement: Vec<f64>,
    peak_acceleration: Vec<f64>,
}

fn summary(model: &LumpedMassModel, h: &ResponseHistory) -> Result<SimulationSummary> {
    let peaks = |q| (0..h.n_stories()).map(|s| h.peak(q, s)).collect();
    Ok(SimulationSummary {
        n_stories: h.n_stories(),
        n_steps: h.n_steps(),
        dt: h.dt(),
        t1: model_periods(&model.linearized())?.t1,
        peak_displacement: peaks(Quantity::Displacement),
        peak_acceleration: peaks(Quantity::Acceleration),
    })
}

pub fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let mut o = toml::Table::new();
    override_direction(&mut o, a.direction);
    if let Some(dt) = a.dt {
        o.insert("dt".into(), toml::Value::Float(dt));
    }
    let cfg: SimulateConfig = resolve_config(a.config.as_deref(), o)?;
    let model = load_structure(&a.building, cfg.direction, cfg.damping_ratio)?;
    let floors = if a.plot.plot {
        select_floors(&a.plot.floors, model.n_stories())?
    } else {
        Vec::new()
    };
    let gm = load_motion(&a.motion)?;
    let dt = cfg.dt.unwrap_or(gm.dt());
    let gm = motion_at(gm, dt, a.resample)?;

    create_out(&a.out)?;
    write_resolved(
        &a.out,
        "simulate",
        &[("building", &a.building), ("motion", &a.motion)],
        &cfg,
    )?;
    let p = IntegratorParams::average_acceleration(dt);
    let h = simulate(&model, &gm, &p)?;
    let path = write_history(&a.out, "response", &h)?;
    write_text(
        &a.out.join("summary.toml"),
        &toml::to_string(&summary(&model, &h)?).map_err(|e| CliError::config(e.to_string()))?,
    )?;
    let simplified = if a.simplified {
        let s = simplified_response(&model, &gm, &p)?;
        write_history(&a.out, "simplified", &s)?;
        Some(s)
    } else {
        None
    };
    let mut series = vec![("simulated", ORACLE_COLOR, &h, false)];
    if let Some(s) = &simplified {
        series.push(("simplified model", SIMPLIFIED_COLOR, s, true));
    }
    write_floor_plots(
        &a.out,
        &format!("{} under {}", a.building.display(), gm.id()),
        &floors,
        &series,
    )?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MethodName {
    #[default]
    GaussNewton,
    Evolutionary,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentifyConfig {
    #[serde(default = "default_direction")]
    direction: Direction,
    #[serde(default)]
    method: MethodName,
    /// Settings of the evolutionary search, also used for its seed.
    #[serde(default)]
    evolution: EsSettings,
    damping_ratio: Option<f64>,
    /// The initial guess is the model's stiffness times this factor.
    #[serde(default = "one")]
    initial_scale: f64,
}

#[derive(Debug, Serialize)]
struct IdentifyReport {
    method: MethodName,
    stiffness: Vec<f64>,
    initial_guess: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    t1: f64,
}

pub fn identify(a: &IdentifyArgs) -> Result<()> {
    let mut o = toml::Table::new();
    override_direction(&mut o, a.direction);
    if let Some(m) = a.method {
        let name = match m {
            MethodArg::GaussNewton => "gauss_newton",
            MethodArg::Evolutionary => "evolutionary",
        };
        o.insert("method".into(), toml::Value::String(name.into()));
    }
    let mut cfg: IdentifyConfig = resolve_config(a.config.as_deref(), o)?;
    if let Some(s) = a.seed {
        cfg.evolution.seed = s;
    }
    if !(cfg.initial_scale > 0.0 && cfg.initial_scale.is_finite()) {
        return Err(CliError::config(format!(
            "initial_scale must be > 0, got {}",
            cfg.initial_scale
        )));
    }
    let model = load_structure(&a.model, cfg.direction, cfg.damping_ratio)?;
    let gm = load_motion(&a.motion)?;
    let reference = ResponseHistory::read_sfrh(&a.response)?;

    create_out(&a.out)?;
    write_resolved(
        &a.out,
        "identify",
        &[("model", &a.model), ("motion", &a.motion), ("response", &a.response)],
        &cfg,
    )?;
    let guess: Vec<f64> = model.story_stiffness.iter().map(|k| k * cfg.initial_scale).collect();
    let mut problem = IdentificationProblem::new(model.masses.clone(), reference, gm, guess.clone());
    problem.damping_ratio = model.damping_ratio;
    let method = match cfg.method {
        MethodName::GaussNewton => IdentificationMethod::GaussNewton,
        MethodName::Evolutionary => IdentificationMethod::Evolutionary(cfg.evolution),
    };
    let r = identify_stiffness(&problem, method)?;
    let identified = LumpedMassModel {
        story_stiffness: r.stiffness.clone(),
        ..model
    };
    let report = IdentifyReport {
        method: cfg.method,
        stiffness: r.stiffness,
        initial_guess: guess,
        objective: r.objective,
        iterations: r.iterations,
        converged: r.converged,
        t1: model_periods(&identified.linearized())?.t1,
    };
    let ser = |e: toml::ser::Error| CliError::config(e.to_string());
    write_text(
        &a.out.join("identification.toml"),
        &toml::to_string(&report).map_err(ser)?,
    )?;
    let path = a.out.join("identified_model.toml");
    write_text(&path, &toml::to_string(&identified).map_err(ser)?)?;
    info!(
        "objective {:.3e} after {} iterations",
        report.objective, report.iterations
    );
    println!("{}", path.display());
    Ok(())
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg: TrainConfig = resolve_config(Some(&a.config), override_seed(a.seed)?)?;
    cfg.validate()?;
    let ds = Dataset::open(&a.data)?;
    create_out(&a.out)?;
    write_resolved(&a.out, "train", &[("config", &a.config), ("data", &a.data)], &cfg)?;
    let ckpt_dir = (cfg.checkpoint_every > 0).then(|| a.out.join("checkpoints"));
    if let Some(d) = &ckpt_dir {
        create_out(d)?;
    }
    let outcome = train(&cfg, &ds, ckpt_dir.as_deref())?;
    let path = a.out.join("model.sgpt");
    outcome.checkpoint.save(&path)?;
    outcome.log.write_csv(&a.out.join("train_log.csv"))?;
    if let Some(l) = outcome.log.final_loss() {
        info!("final batch loss {l:.4e}");
    }
    println!("{}", path.display());
    Ok(())
}

pub fn finetune(a: &FinetuneArgs) -> Result<()> {
    let cfg: FinetuneConfig = resolve_config(Some(&a.config), override_seed(a.seed)?)?;
    cfg.validate()?;
    let base = Checkpoint::load(&a.base)?;
    let ds = Dataset::open(&a.data)?;
    create_out(&a.out)?;
    write_resolved(
        &a.out,
        "finetune",
        &[("base", &a.base), ("config", &a.config), ("data", &a.data)],
        &cfg,
    )?;
    let outcome = finetune_lora(&base, &cfg, &ds)?;
    let path = a.out.join("adapter.sgpa");
    outcome.adapter.save(&path)?;
    outcome.log.write_csv(&a.out.join("finetune_log.csv"))?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictConfig {
    #[serde(default = "default_direction")]
    direction: Direction,
    damping_ratio: Option<f64>,
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let mut o = toml::Table::new();
    override_direction(&mut o, a.direction);
    let cfg: PredictConfig = resolve_config(a.config.as_deref(), o)?;
    let predictor = load_predictor(&a.checkpoint, a.adapter.as_deref())?;

    let mut inputs: Vec<(&str, &Path)> = vec![("checkpoint", &a.checkpoint)];
    if let Some(p) = &a.adapter {
        inputs.push(("adapter", p));
    }
    let (label, model, gm, oracle) = match (&a.data, &a.sample, &a.building, &a.motion) {
        (Some(data), Some(id), _, _) => {
            inputs.push(("data", data));
            let ds = Dataset::open(data)?;
            let s = ds.load(ds.entry(id)?)?;
            let model = match cfg.damping_ratio {
                Some(z) => s.model.with_damping(z)?,
                None => s.model,
            };
            (s.sample_id, model, s.motion, Some(s.oracle))
        }
        (_, _, Some(building), Some(motion)) => {
            inputs.push(("building", building));
            inputs.push(("motion", motion));
            let model = load_structure(building, cfg.direction, cfg.damping_ratio)?;
            let gm = motion_at(load_motion(motion)?, predictor.stats.dt, a.resample)?;
            (gm.id().to_owned(), model, gm, None)
        }
        _ => {
            return Err(CliError::config(
                "give either --data with --sample or --building with --motion",
            ))
        }
    };
    let reference = match &a.reference {
        Some(p) => {
            inputs.push(("reference", p));
            Some(ResponseHistory::read_sfrh(p)?)
        }
        None => oracle,
    };
    let floors = if a.plot.plot {
        select_floors(&a.plot.floors, model.n_stories())?
    } else {
        Vec::new()
    };

    create_out(&a.out)?;
    write_resolved(&a.out, "predict", &inputs, &cfg)?;
    let pred = predictor.predict_rollout(&model, &gm)?;
    let path = write_history(&a.out, "prediction", &pred)?;
    let mut series = Vec::new();
    if let Some(r) = &reference {
        if (r.n_stories(), r.n_steps()) != (pred.n_stories(), pred.n_steps()) {
            return Err(CliError::config(format!(
                "reference has {} stories × {} steps, prediction {} × {}",
                r.n_stories(),
                r.n_steps(),
                pred.n_stories(),
                pred.n_steps()
            )));
        }
        let errs = sample_errors(&predictor.stats, &label, &pred, r);
        let report = reduce_report(&label, &REPORT_QUANTITIES, &[errs], 0);
        write_text(&a.out.join("report.txt"), &report_text(&report))?;
        write_text(&a.out.join("report.csv"), &report_csv(&report))?;
        for q in &report.quantities {
            info!("{}: R = {:.4}, MSE = {:.3e}", q.quantity, q.overall.r, q.overall.mse);
        }
        series.push(("reference", ORACLE_COLOR, r, false));
    }
    series.push(("predicted", PREDICTION_COLOR, &pred, true));
    write_floor_plots(&a.out, &format!("prediction for {label}"), &floors, &series)?;
    println!("{}", path.display());
    Ok(())
}

fn default_true() -> bool {
    true
}

fn default_split() -> Split {
    Split::Test
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateConfig {
    #[serde(default = "default_split")]
    split: Split,
    /// Overlay charts of the worst samples.
    #[serde(default = "default_true")]
    plots: bool,
}

fn file_stem_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Overlay of predicted and oracle top-floor responses for `sample_id` and
/// every sample sharing its building and motion (the other directions).
fn worst_case_plot(predictor: &seisforge_pipeline::Predictor, ds: &Dataset, sample_id: &str, out: &Path) -> Result<()> {
    let e = ds.entry(sample_id)?;
    let mut siblings: Vec<_> = ds
        .manifest
        .samples
        .iter()
        .filter(|s| s.building_id == e.building_id && s.motion_id == e.motion_id)
        .collect();
    siblings.sort_by_key(|s| s.direction);
    let mut runs = Vec::new();
    for s in siblings {
        let t = ds.load(s)?;
        let pred = predictor.predict_rollout(&t.model, &t.motion)?;
        runs.push((s.direction, t.oracle, pred));
    }
    let mut panels = Vec::new();
    for (dir, oracle, pred) in &runs {
        let top = oracle.n_stories() - 1;
        for (q, name, unit) in [
            (Quantity::Displacement, "displacement", "u (m)"),
            (Quantity::Acceleration, "acceleration", "a (m/s²)"),
        ] {
            panels.push(Panel {
                title: format!("direction {dir}, top floor {name}"),
                y_label: unit,
                series: vec![
                    Series {
                        label: "oracle",
                        color: ORACLE_COLOR,
                        values: oracle.story(q, top),
                        dashed: false,
                    },
                    Series {
                        label: "predicted",
                        color: PREDICTION_COLOR,
                        values: pred.story(q, top),
                        dashed: true,
                    },
                ],
            });
        }
    }
    let dt = runs.first().map_or(predictor.stats.dt, |r| r.1.dt());
    let svg = plot::render(&format!("{} / {}", e.building_id, e.motion_id), dt, &panels);
    write_text(&out.join(format!("worst_{}.svg", file_stem_safe(sample_id))), &svg)
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let mut o = toml::Table::new();
    if let Some(s) = a.split {
        let s = match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        };
        o.insert("split".into(), toml::Value::String(s.to_string()));
    }
    if a.no_plots {
        o.insert("plots".into(), toml::Value::Boolean(false));
    }
    let cfg: EvaluateConfig = resolve_config(a.config.as_deref(), o)?;
    let predictor = load_predictor(&a.checkpoint, a.adapter.as_deref())?;
    let ds = Dataset::open(&a.data)?;

    let mut inputs: Vec<(&str, &Path)> = vec![("checkpoint", &a.checkpoint), ("data", &a.data)];
    if let Some(p) = &a.adapter {
        inputs.push(("adapter", p));
    }
    let report = evaluate(&predictor, &ds, cfg.split)?;
    create_out(&a.out)?;
    write_resolved(&a.out, "evaluate", &inputs, &cfg)?;
    write_text(&a.out.join("report.txt"), &report_text(&report))?;
    write_text(&a.out.join("report.csv"), &report_csv(&report))?;
    if cfg.plots {
        let mut seen = Vec::new();
        for w in &report.worst {
            if !seen.contains(&w.sample_id) {
                worst_case_plot(&predictor, &ds, &w.sample_id, &a.out)?;
                seen.push(w.sample_id.clone());
            }
        }
    }
    print!("{}", report_text(&report));
    Ok(())
}
