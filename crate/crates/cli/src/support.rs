//! Config resolution and file plumbing shared by the commands.

use std::path::{Path, PathBuf};

use seisforge_core::dynamics::{Quantity, ResponseHistory};
use seisforge_core::ground_motion::{load_record, GroundMotion};
use seisforge_core::structure::{reduce_to_mdof, BuildingConfig, Direction, LumpedMassModel};
use seisforge_pipeline::{EvalReport, Predictor};
use seisforge_srfd::{AdapterCheckpoint, Checkpoint};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::cli::DirectionArg;
use crate::error::{CliError, Result};
use crate::plot::{self, Panel, Series};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::X => Direction::X,
            DirectionArg::Y => Direction::Y,
        }
    }
}

/// Loads a config document (empty when `path` is `None`), applies
/// top-level overrides and deserializes it. Unknown keys are rejected by
/// the target types.
pub fn resolve_config<T: DeserializeOwned>(path: Option<&Path>, overrides: toml::Table) -> Result<T> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    table.extend(overrides);
    let origin = path.map_or_else(|| "command line".to_owned(), |p| p.display().to_string());
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::config(format!("{origin}: {e}")))
}

pub fn override_seed(seed: Option<u64>) -> Result<toml::Table> {
    let mut t = toml::Table::new();
    if let Some(s) = seed {
        let v = i64::try_from(s).map_err(|_| CliError::config(format!("seed {s} exceeds {}", i64::MAX)))?;
        t.insert("seed".into(), toml::Value::Integer(v));
    }
    Ok(t)
}

pub fn override_direction(t: &mut toml::Table, d: Option<DirectionArg>) {
    if let Some(d) = d {
        t.insert("direction".into(), toml::Value::String(Direction::from(d).to_string()));
    }
}

pub fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Snapshot of a run: command, input paths as given, and the effective
/// configuration.
pub fn write_resolved<T: Serialize>(out: &Path, command: &str, inputs: &[(&str, &Path)], config: &T) -> Result<()> {
    let mut doc = toml::Table::new();
    doc.insert("command".into(), toml::Value::String(command.into()));
    let mut ins = toml::Table::new();
    for (k, p) in inputs {
        ins.insert((*k).into(), toml::Value::String(p.display().to_string()));
    }
    doc.insert("inputs".into(), toml::Value::Table(ins));
    let cfg = toml::Table::try_from(config).map_err(|e| CliError::config(format!("cannot serialize config: {e}")))?;
    doc.insert("config".into(), toml::Value::Table(cfg));
    let text = toml::to_string(&doc).map_err(|e| CliError::config(format!("cannot serialize config: {e}")))?;
    write_text(&out.join(RESOLVED_CONFIG), &text)
}

/// Reads a lumped-mass model, or reduces a building description along
/// `direction`. `damping_ratio` replaces the stored ratio when given.
pub fn load_structure(path: &Path, direction: Direction, damping_ratio: Option<f64>) -> Result<LumpedMassModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let bad = |e: toml::de::Error| CliError::config(format!("{}: {e}", path.display()));
    let model = if table.contains_key("masses") {
        let m: LumpedMassModel = toml::Value::Table(table).try_into().map_err(bad)?;
        m.validate()?;
        m
    } else if table.contains_key("structure_type") {
        let b: BuildingConfig = toml::Value::Table(table).try_into().map_err(bad)?;
        b.validate()?;
        reduce_to_mdof(&b, direction)
    } else {
        return Err(CliError::config(format!(
            "{}: neither a lumped-mass model (`masses`) nor a building description (`structure_type`)",
            path.display()
        )));
    };
    Ok(match damping_ratio {
        Some(z) => model.with_damping(z)?,
        None => model,
    })
}

pub fn load_motion(path: &Path) -> Result<GroundMotion> {
    Ok(load_record(path, None)?)
}

/// Motion at step `dt`, resampled when allowed.
pub fn motion_at(gm: GroundMotion, dt: f64, resample: bool) -> Result<GroundMotion> {
    if (gm.dt() - dt).abs() <= 1e-9 * dt {
        return Ok(gm);
    }
    if !resample {
        return Err(CliError::config(format!(
            "motion `{}` has dt = {} s but {dt} s is required; pass --resample to convert it",
            gm.id(),
            gm.dt()
        )));
    }
    Ok(gm.resample(dt)?)
}

/// 1-based floor numbers named by `spec` on an `n`-story model.
pub fn select_floors(spec: &str, n: usize) -> Result<Vec<usize>> {
    let mut floors = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok {
            "mid" => floors.push(n.div_ceil(2)),
            "top" => floors.push(n),
            "all" => floors.extend(1..=n),
            _ => {
                let f: usize = tok.parse().map_err(|_| {
                    CliError::config(format!("--floors: `{tok}` is not a floor number, mid, top or all"))
                })?;
                if f == 0 || f > n {
                    return Err(CliError::config(format!("--floors: floor {f} outside 1..={n}")));
                }
                floors.push(f);
            }
        }
    }
    if floors.is_empty() {
        return Err(CliError::config("--floors selects no floor"));
    }
    floors.sort_unstable();
    floors.dedup();
    Ok(floors)
}

pub const CSV_QUANTITIES: [(Quantity, &str); 3] = [
    (Quantity::Displacement, "displacement"),
    (Quantity::Velocity, "velocity"),
    (Quantity::Acceleration, "acceleration"),
];

/// `<prefix>.sfrh` plus one CSV per quantity.
pub fn write_history(out: &Path, prefix: &str, h: &ResponseHistory) -> Result<PathBuf> {
    let path = out.join(format!("{prefix}.sfrh"));
    h.write_sfrh(&path)?;
    for (q, name) in CSV_QUANTITIES {
        write_text(&out.join(format!("{prefix}_{name}.csv")), &h.to_csv(q))?;
    }
    Ok(path)
}

/// One chart per floor with displacement and acceleration panels; each
/// `(label, color, history, dashed)` becomes an overlaid series.
pub fn write_floor_plots(
    out: &Path,
    title: &str,
    floors: &[usize],
    histories: &[(&str, &str, &ResponseHistory, bool)],
) -> Result<Vec<PathBuf>> {
    let Some((_, _, first, _)) = histories.first() else {
        return Ok(Vec::new());
    };
    let mut paths = Vec::new();
    for &f in floors {
        let panels = [
            (Quantity::Displacement, "displacement (m)"),
            (Quantity::Acceleration, "acceleration (m/s²)"),
        ]
        .into_iter()
        .map(|(q, y_label)| Panel {
            title: format!("floor {f} {}", y_label.split(' ').next().unwrap_or_default()),
            y_label,
            series: histories
                .iter()
                .map(|(label, color, h, dashed)| Series {
                    label,
                    color,
                    values: h.story(q, f - 1),
                    dashed: *dashed,
                })
                .collect(),
        })
        .collect::<Vec<_>>();
        let path = out.join(format!("floor_{f}.svg"));
        write_text(
            &path,
            &plot::render(&format!("{title}, floor {f}"), first.dt(), &panels),
        )?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn load_predictor(checkpoint: &Path, adapter: Option<&Path>) -> Result<Predictor> {
    let base = Checkpoint::load(checkpoint)?;
    Ok(match adapter {
        Some(a) => Predictor::with_adapter(&base, &AdapterCheckpoint::load(a)?)?,
        None => Predictor::from_checkpoint(&base)?,
    })
}

fn metric_cells(m: &seisforge_pipeline::Metrics) -> String {
    format!("{},{:e},{:e},{:e},{:e}", m.count, m.mse, m.mae, m.mre, m.r)
}

pub fn report_csv(r: &EvalReport) -> String {
    let mut out = String::from("quantity,floor,count,mse,mae,mre,r\n");
    for q in &r.quantities {
        out.push_str(&format!("{},all,{}\n", q.quantity, metric_cells(&q.overall)));
        for f in &q.per_floor {
            out.push_str(&format!("{},{},{}\n", q.quantity, f.floor, metric_cells(&f.metrics)));
        }
    }
    out
}

pub fn report_text(r: &EvalReport) -> String {
    let mut out = format!(
        "split: {}\nsamples: {}\nunits: {}\n\n{:<14} {:>6} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
        r.split, r.n_samples, r.units, "quantity", "floor", "count", "mse", "mae", "mre", "r"
    );
    let row = |name: &str, floor: &str, m: &seisforge_pipeline::Metrics| {
        format!(
            "{name:<14} {floor:>6} {:>10} {:>10.4e} {:>10.4e} {:>10.4e} {:>8.4}\n",
            m.count, m.mse, m.mae, m.mre, m.r
        )
    };
    for q in &r.quantities {
        out.push_str(&row(&q.quantity, "all", &q.overall));
        for f in &q.per_floor {
            out.push_str(&row(&q.quantity, &f.floor.to_string(), &f.metrics));
        }
    }
    if !r.worst.is_empty() {
        out.push_str("\nworst samples (mse):\n");
        for w in &r.worst {
            out.push_str(&format!("  {:<14} {:<20} {:.4e}\n", w.quantity, w.sample_id, w.mse));
        }
    }
    out
}
