//! SVG line plots of metrics CSVs.

use std::fmt::Write;

use fedaug_core::metrics::RoundRecord;

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const LEGEND_ROW: f64 = 18.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub struct Series {
    pub name: String,
    pub records: Vec<RoundRecord>,
}

struct Panel {
    title: &'static str,
    value: fn(&RoundRecord) -> Option<f64>,
}

const PANELS: [Panel; 3] = [
    Panel {
        title: "test accuracy",
        value: |r| Some(r.test_accuracy),
    },
    Panel {
        title: "global objective",
        value: |r| Some(r.global_objective),
    },
    Panel {
        title: "weight divergence",
        value: |r| r.weight_divergence,
    },
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// One panel per metric that any series reports, stacked vertically, with
/// a shared legend at the bottom.
pub fn render_svg(series: &[Series]) -> String {
    let panels: Vec<&Panel> = PANELS
        .iter()
        .filter(|p| {
            series
                .iter()
                .any(|s| s.records.iter().any(|r| (p.value)(r).is_some()))
        })
        .collect();
    let legend_h = LEGEND_ROW * series.len() as f64 + 10.0;
    let height = PANEL_H * panels.len() as f64 + legend_h;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" viewBox="0 0 {PANEL_W} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for (pi, panel) in panels.iter().enumerate() {
        let top = PANEL_H * pi as f64;
        let x0 = MARGIN_L;
        let x1 = PANEL_W - MARGIN_R;
        let y0 = top + PANEL_H - MARGIN_B;
        let y1 = top + MARGIN_T;

        let points: Vec<(usize, f64)> = series
            .iter()
            .flat_map(|s| s.records.iter())
            .filter_map(|r| (panel.value)(r).map(|v| (r.round, v)))
            .filter(|(_, v)| v.is_finite())
            .collect();
        let max_round = points.iter().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
        let mut lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let mut hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let sx = |round: f64| x0 + (x1 - x0) * round / max_round;
        let sy = |v: f64| y0 - (y0 - y1) * (v - lo) / (hi - lo);

        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            (x0 + x1) / 2.0,
            top + 18.0,
            panel.title
        );
        let _ = writeln!(
            out,
            r#"<polyline points="{x0},{y1} {x0},{y0} {x1},{y0}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let v = lo + (hi - lo) * i as f64 / 4.0;
            let y = sy(v);
            let _ = writeln!(
                out,
                r##"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                x0 - 6.0,
                y + 4.0,
                tick_label(v)
            );
            let round = max_round * i as f64 / 4.0;
            let x = sx(round);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 4.0,
                y0 + 16.0,
                tick_label(round.round())
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">round</text>"#,
            (x0 + x1) / 2.0,
            y0 + 32.0
        );

        for (si, s) in series.iter().enumerate() {
            let coords: Vec<String> = s
                .records
                .iter()
                .filter_map(|r| (panel.value)(r).map(|v| (r.round, v)))
                .filter(|(_, v)| v.is_finite())
                .map(|(round, v)| format!("{:.2},{:.2}", sx(round as f64), sy(v)))
                .collect();
            if coords.is_empty() {
                continue;
            }
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                coords.join(" "),
                PALETTE[si % PALETTE.len()]
            );
        }
    }

    let legend_top = PANEL_H * panels.len() as f64;
    for (si, s) in series.iter().enumerate() {
        let y = legend_top + LEGEND_ROW * (si as f64 + 0.5);
        let color = PALETTE[si % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="{color}" stroke-width="3"/><text x="{}" y="{:.2}">{}</text>"#,
            MARGIN_L + 24.0,
            MARGIN_L + 30.0,
            y + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}
