//! Text record format.
//!
//! ```text
//! # dt=0.02 unit=m/s2 id=RSN0001
//! 0.0
//! 0.013
//! -0.021
//! ```
//!
//! `unit=g` values are converted to m/s² on load.

use std::fmt::Write as _;
use std::path::Path;

use super::{GroundMotion, MotionSource};
use crate::{Error, Result, STANDARD_GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccelUnit {
    MetersPerSecondSquared,
    Gravity,
}

impl AccelUnit {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "m/s2" => Some(Self::MetersPerSecondSquared),
            "g" => Some(Self::Gravity),
            _ => None,
        }
    }
}

pub fn load_record(path: &Path, dt_override: Option<f64>) -> Result<GroundMotion> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fallback_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "record".to_owned());
    parse_record(&text, &path.display().to_string(), &fallback_id, dt_override)
}

/// Parses record text. `origin` labels error messages; `fallback_id` is used
/// when the header carries no `id=`.
pub fn parse_record(text: &str, origin: &str, fallback_id: &str, dt_override: Option<f64>) -> Result<GroundMotion> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_owned(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected `# dt=... unit=...` header".into()))?;
    let header = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "header must start with `#`".into()))?;

    let mut dt = None;
    let mut unit = None;
    let mut id = None;
    for token in header.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header token `{token}`")))?;
        match key {
            "dt" => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| parse_err(1, format!("invalid dt `{value}`")))?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(parse_err(1, format!("dt must be > 0, got `{value}`")));
                }
                dt = Some(v);
            }
            "unit" => {
                unit = Some(AccelUnit::parse(value).ok_or_else(|| parse_err(1, format!("unknown unit `{value}`")))?);
            }
            "id" => id = Some(value.to_owned()),
            other => return Err(parse_err(1, format!("unknown header key `{other}`"))),
        }
    }
    let dt = dt.ok_or_else(|| parse_err(1, "header is missing `dt=`".into()))?;
    let unit = unit.ok_or_else(|| parse_err(1, "header is missing `unit=`".into()))?;
    let scale = match unit {
        AccelUnit::MetersPerSecondSquared => 1.0,
        AccelUnit::Gravity => STANDARD_GRAVITY,
    };

    let mut samples = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let v: f64 = raw
            .parse()
            .map_err(|_| parse_err(line_no, format!("not a number: `{raw}`")))?;
        if !v.is_finite() {
            return Err(Error::Data {
                path: origin.to_owned(),
                line: line_no,
                value: raw.to_owned(),
            });
        }
        samples.push(v * scale);
    }
    if samples.len() < 2 {
        return Err(parse_err(
            text.lines().count().max(1),
            format!("expected at least 2 samples, found {}", samples.len()),
        ));
    }
    let id = id.unwrap_or_else(|| fallback_id.to_owned());
    GroundMotion::new(id, dt_override.unwrap_or(dt), samples, MotionSource::Imported)
}

/// Writes a record in m/s². Values use the shortest round-trip decimal form,
/// so a write/load cycle is lossless.
pub fn write_record(gm: &GroundMotion, path: &Path) -> Result<()> {
    std::fs::write(path, format_record(gm)).map_err(|e| Error::io(path, e))
}

pub(crate) fn format_record(gm: &GroundMotion) -> String {
    let mut out = String::with_capacity(gm.len() * 22 + 64);
    let _ = writeln!(out, "# dt={} unit=m/s2 id={}", gm.dt(), gm.id());
    for v in gm.samples() {
        let _ = writeln!(out, "{v:?}");
    }
    out
}
