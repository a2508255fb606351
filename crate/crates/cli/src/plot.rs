//! Static SVG line charts: stacked panels sharing a time axis, each with
//! one or more overlaid series.

use std::fmt::Write as _;

const WIDTH: f64 = 760.0;
const PANEL_HEIGHT: f64 = 190.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 20.0;
const TITLE_HEIGHT: f64 = 34.0;
const PANEL_GAP: f64 = 46.0;
const TICKS: usize = 5;

pub const ORACLE_COLOR: &str = "#1f3b73";
pub const PREDICTION_COLOR: &str = "#d1495b";
pub const SIMPLIFIED_COLOR: &str = "#66a182";

#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct Panel<'a> {
    pub title: String,
    pub y_label: &'a str,
    pub series: Vec<Series<'a>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick label in one notation per axis, chosen from the axis extent.
fn tick_label(v: f64, extent: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-1..1e4).contains(&extent) {
        format!("{v:.2}")
    } else {
        format!("{v:.2e}")
    }
}

/// Renders `panels` stacked vertically over a time axis with step `dt`.
pub fn render(title: &str, dt: f64, panels: &[Panel]) -> String {
    let height = TITLE_HEIGHT + panels.len() as f64 * (PANEL_HEIGHT + PANEL_GAP);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for (i, panel) in panels.iter().enumerate() {
        let top = TITLE_HEIGHT + i as f64 * (PANEL_HEIGHT + PANEL_GAP) + 16.0;
        let n = panel.series.iter().map(|s| s.values.len()).max().unwrap_or(0);
        let t_end = (n.max(2) - 1) as f64 * dt;
        let peak = panel
            .series
            .iter()
            .flat_map(|s| s.values.iter())
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let y_max = if peak > 0.0 { peak * 1.05 } else { 1.0 };
        let x_of = |t: f64| MARGIN_LEFT + plot_w * t / t_end;
        let y_of = |v: f64| top + PANEL_HEIGHT * (0.5 - 0.5 * v / y_max);

        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN_LEFT}" y="{}" font-size="12">{}</text>"#,
            top - 5.0,
            escape(&panel.title)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{MARGIN_LEFT}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="#888"/>"##
        );
        for k in 0..=TICKS {
            let v = y_max * (1.0 - 2.0 * k as f64 / TICKS as f64);
            let y = y_of(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e4e4e4"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT - 4.0,
                y + 4.0,
                tick_label(v, y_max)
            );
            let t = t_end * k as f64 / TICKS as f64;
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                x_of(t),
                top + PANEL_HEIGHT + 14.0,
                tick_label(t, t_end)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            top + PANEL_HEIGHT + 28.0
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate(14 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            top + PANEL_HEIGHT / 2.0,
            escape(panel.y_label)
        );
        for s in &panel.series {
            let mut points = String::with_capacity(s.values.len() * 16);
            for (t, v) in s.values.iter().enumerate() {
                let v = if v.is_finite() { v.clamp(-y_max, y_max) } else { 0.0 };
                let _ = write!(points, "{:.2},{:.2} ", x_of(t as f64 * dt), y_of(v));
            }
            let dash = if s.dashed { r#" stroke-dasharray="5 3""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.2"{dash} points="{}"/>"#,
                s.color,
                points.trim_end()
            );
        }
        for (j, s) in panel.series.iter().enumerate() {
            let x = MARGIN_LEFT + plot_w - 150.0;
            let y = top + 14.0 + 14.0 * j as f64;
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{y:.2}">{}</text>"#,
                y - 4.0,
                x + 18.0,
                y - 4.0,
                s.color,
                x + 24.0,
                escape(s.label)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_series() {
        let a = [0.0, 1.0, -1.0];
        let b = [0.0, 0.5, f64::NAN];
        let svg = render(
            "t <1>",
            0.1,
            &[Panel {
                title: "floor 1".into(),
                y_label: "u (m)",
                series: vec![
                    Series {
                        label: "oracle",
                        color: ORACLE_COLOR,
                        values: &a,
                        dashed: false,
                    },
                    Series {
                        label: "predicted",
                        color: PREDICTION_COLOR,
                        values: &b,
                        dashed: true,
                    },
                ],
            }],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("t &lt;1&gt;"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn all_zero_series_stays_finite() {
        let z = [0.0; 4];
        let svg = render(
            "zeros",
            0.5,
            &[Panel {
                title: "p".into(),
                y_label: "a",
                series: vec![Series {
                    label: "z",
                    color: ORACLE_COLOR,
                    values: &z,
                    dashed: false,
                }],
            }],
        );
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
