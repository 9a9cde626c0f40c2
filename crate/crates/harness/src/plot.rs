//! Self-contained SVG line charts with a logarithmic y axis.

use std::fmt::Write as _;

use crate::metrics::MetricsRow;
use crate::CliError;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// One series per run label, in order of first appearance, of
/// `grad_norm_sq` against `t`.
pub fn series_from_metrics(rows: &[MetricsRow], prefix: Option<&str>) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let label = match prefix {
            Some(p) => format!("{p}:{}", r.run),
            None => r.run.clone(),
        };
        match out.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((r.t as f64, r.grad_norm_sq)),
            None => out.push(Series {
                label,
                points: vec![(r.t as f64, r.grad_norm_sq)],
            }),
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1e5 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Renders the chart. Points with non-positive or non-finite values are
/// dropped; a series left empty is an error.
pub fn render_svg(series: &[Series], title: &str) -> Result<String, CliError> {
    if series.is_empty() {
        return Err(CliError::Config("nothing to plot: no series".into()));
    }
    let mut kept = Vec::with_capacity(series.len());
    for s in series {
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .copied()
            .filter(|&(x, y)| x.is_finite() && y.is_finite() && y > 0.0)
            .collect();
        if pts.is_empty() {
            return Err(CliError::Config(format!(
                "series `{}` has no positive values",
                s.label
            )));
        }
        kept.push((s.label.as_str(), pts));
    }
    let all = kept.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let (d0, mut d1) = (y0.floor(), y1.ceil());
    if d1 <= d0 {
        d1 = d0 + 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |ly: f64| TOP + (d1 - ly) / (d1 - d0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );

    let decades = (d1 - d0) as usize;
    let step = decades.div_ceil(10).max(1);
    for k in (0..=decades).step_by(step) {
        let ly = d0 + k as f64;
        let y = sy(ly);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            ly as i64
        );
    }
    for k in 0..=4 {
        let xv = x0 + (x1 - x0) * k as f64 / 4.0;
        let x = sx(xv);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#eeeeee"/>"##,
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 18.0,
            tick_label(xv)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">round t</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">|grad f|^2 (log scale)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, (label, pts)) in kept.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y.log10())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> Vec<Series> {
        vec![
            Series {
                label: "a".into(),
                points: vec![(0.0, 1.0), (10.0, 0.1), (20.0, 0.01)],
            },
            Series {
                label: "b<&>".into(),
                points: vec![(0.0, 2.0), (10.0, 0.0), (20.0, 0.5)],
            },
        ]
    }

    #[test]
    fn two_series_give_two_polylines_and_a_legend() {
        let svg = render_svg(&two(), "t").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">a</text>") && svg.contains("b&lt;&amp;&gt;"));
        assert_eq!(svg, render_svg(&two(), "t").unwrap());
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render_svg(&[], "t").is_err());
        let s = vec![Series {
            label: "z".into(),
            points: vec![(0.0, 0.0)],
        }];
        assert!(render_svg(&s, "t").is_err());
    }

    #[test]
    fn groups_rows_by_run() {
        let row = |run: &str, t| MetricsRow {
            run: run.into(),
            seed: 0,
            t,
            f: 1.0,
            grad_norm_sq: 1.0,
            min_grad_norm_sq: 1.0,
            is_boundary: false,
        };
        let s = series_from_metrics(&[row("x", 0), row("y", 0), row("x", 1)], Some("f"));
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label, "f:x");
        assert_eq!(s[0].points.len(), 2);
    }
}
