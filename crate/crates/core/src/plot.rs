//! Static SVG line charts for PR curves and training losses.

use std::fmt::Write;

use crate::da::TrainReport;
use crate::eval::{ApTable, Difficulty, IouMode};

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<[f64; 2]>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Fixed axis ranges; `None` fits the data.
    pub x_range: Option<[f64; 2]>,
    pub y_range: Option<[f64; 2]>,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fit(series: &[Series], axis: usize) -> [f64; 2] {
    let vals = series.iter().flat_map(|s| s.points.iter().map(move |p| p[axis]));
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        [0.0, 1.0]
    } else if hi - lo < 1e-12 {
        [lo - 0.5, hi + 0.5]
    } else {
        [lo, hi]
    }
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let xr = self.x_range.unwrap_or_else(|| fit(&self.series, 0));
        let yr = self.y_range.unwrap_or_else(|| fit(&self.series, 1));
        let sx = |x: f64| MARGIN + (x - xr[0]) / (xr[1] - xr[0]) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - yr[0]) / (yr[1] - yr[0]) * (H - 2.0 * MARGIN);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
        let _ = writeln!(
            s,
            r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" fill="none" stroke="black"/>"#
        );
        for i in 0..=5 {
            let t = i as f64 / 5.0;
            let (vx, vy) = (xr[0] + t * (xr[1] - xr[0]), yr[0] + t * (yr[1] - yr[0]));
            let (px, py) = (sx(vx), sy(vy));
            let _ = writeln!(
                s,
                r##"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{:.2}" stroke="#888"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{vx:.3}</text>"##,
                y1 + 4.0,
                y1 + 18.0
            );
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="#888"/><text x="{:.2}" y="{:.2}" text-anchor="end">{vy:.3}</text>"##,
                x0 - 4.0,
                x0 - 6.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|p| p[0].is_finite() && p[1].is_finite())
                .map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1])))
                .collect();
            if !pts.is_empty() {
                let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                    pts.join(" ")
                );
            }
            let ly = MARGIN + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                W - MARGIN - 150.0,
                W - MARGIN - 130.0,
                W - MARGIN - 125.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Precision against recall for all six cells of an AP table.
pub fn pr_chart(table: &ApTable) -> Chart {
    let mut series = Vec::new();
    for metric in IouMode::ALL {
        for d in Difficulty::ALL {
            let Some(r) = table.get(metric, d) else { continue };
            series.push(Series {
                name: format!("{} {} ({:.2})", metric.as_str(), d.as_str(), r.ap),
                points: r.pr.points.iter().map(|p| [p.recall, p.precision]).collect(),
                dashed: metric == IouMode::ThreeD,
            });
        }
    }
    Chart {
        title: format!("{} precision / recall", table.class),
        x_label: "recall".into(),
        y_label: "precision".into(),
        x_range: Some([0.0, 1.0]),
        y_range: Some([0.0, 1.0]),
        series,
    }
}

/// Per-epoch loss components of a training run.
pub fn loss_chart(report: &TrainReport) -> Chart {
    let pick: [(&str, fn(&crate::da::EpochLog) -> f64); 5] = [
        ("total", |e| e.total),
        ("detection", |e| e.detection),
        ("sample", |e| e.sample),
        ("anchor", |e| e.anchor),
        ("consistency", |e| e.consistency),
    ];
    Chart {
        title: format!(
            "toy adversarial training (lambda {}, r {})",
            report.config.loss.lambda, report.config.loss.grl.r
        ),
        x_label: "epoch".into(),
        y_label: "loss".into(),
        x_range: None,
        y_range: None,
        series: pick
            .iter()
            .map(|(name, f)| Series {
                name: name.to_string(),
                points: report.epochs.iter().map(|e| [e.epoch as f64, f(e)]).collect(),
                dashed: false,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_is_faithful() {
        let chart = Chart {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            x_range: Some([0.0, 1.0]),
            y_range: Some([0.0, 1.0]),
            series: vec![Series {
                name: "s".into(),
                points: vec![[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]],
                dashed: false,
            }],
        };
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        let x1 = W - MARGIN;
        let mid = (MARGIN + x1) / 2.0;
        let ymid = (MARGIN + H - MARGIN) / 2.0;
        let want = format!(
            "points=\"{MARGIN:.2},{MARGIN:.2} {mid:.2},{ymid:.2} {x1:.2},{:.2}\"",
            H - MARGIN
        );
        assert!(svg.contains(&want), "{svg}");
        assert_eq!(svg, chart.to_svg());
    }

    #[test]
    fn empty_series_still_renders() {
        let chart = Chart {
            title: "empty".into(),
            x_label: String::new(),
            y_label: String::new(),
            x_range: None,
            y_range: None,
            series: vec![Series {
                name: "none".into(),
                points: vec![],
                dashed: true,
            }],
        };
        let svg = chart.to_svg();
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("polyline"));
    }
}
