//! Standalone SVG figures.
//!
//! - Path plot: attention alignment heatmap, one column per emitted frame and
//!   one row per source character, with characters not yet read at that
//!   frame greyed out and the READ/SPEAK staircase drawn on top.
//! - Trade-off plot: mean MSE against mean `d_T`, one point per policy.

use std::fmt::Write as _;

use crate::episode::{Action, StepRecord};
use crate::metrics::EvalSummary;
use crate::{Error, Result};

const CELL: f64 = 12.0;
const MARGIN: f64 = 40.0;
const UNREAD_FILL: &str = "#bdbdbd";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// White to dark blue.
fn heat(alpha: f64) -> String {
    let a = alpha.clamp(0.0, 1.0);
    let lerp = |from: f64, to: f64| (from + (to - from) * a).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(255.0, 8.0),
        lerp(255.0, 48.0),
        lerp(255.0, 107.0)
    )
}

pub fn path_svg(records: &[StepRecord]) -> Result<String> {
    let speaks: Vec<&StepRecord> = records
        .iter()
        .filter(|r| r.action == Action::Speak)
        .collect();
    let Some(first) = records.first() else {
        return Err(Error::domain("empty trace"));
    };
    let n = first.alpha.len();
    if n == 0 || records.iter().any(|r| r.alpha.len() != n) {
        return Err(Error::domain(
            "trace attention rows have inconsistent widths",
        ));
    }
    if speaks.is_empty() {
        return Err(Error::domain("trace emits no frames"));
    }
    let t = speaks.len();
    let width = 2.0 * MARGIN + t as f64 * CELL;
    let height = 2.0 * MARGIN + n as f64 * CELL;
    let x = |s: f64| MARGIN + s * CELL;
    let y = |i: f64| MARGIN + (n as f64 - i) * CELL;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" data-frames="{t}" data-chars="{n}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    )
    .unwrap();
    writeln!(svg, r#"<g class="heatmap">"#).unwrap();
    for (k, rec) in speaks.iter().enumerate() {
        let s = k + 1;
        for i in 1..=n {
            let (class, fill) = if i > rec.read {
                ("cell unread", UNREAD_FILL.to_string())
            } else {
                ("cell", heat(rec.alpha[i - 1]))
            };
            writeln!(
                svg,
                r#"<rect class="{class}" data-s="{s}" data-i="{i}" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#,
                x(k as f64),
                y(i as f64)
            )
            .unwrap();
        }
    }
    writeln!(svg, "</g>").unwrap();

    let mut points = Vec::with_capacity(2 * t);
    for (k, rec) in speaks.iter().enumerate() {
        let level = y(rec.read as f64);
        points.push(format!("{},{}", x(k as f64), level));
        points.push(format!("{},{}", x(k as f64 + 1.0), level));
    }
    writeln!(
        svg,
        r##"<polyline class="policy-path" points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
        points.join(" ")
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">output frame</text>"#,
        width / 2.0,
        height - 12.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">source character</text>"#,
        height / 2.0,
        height / 2.0
    )
    .unwrap();
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn tradeoff_svg(rows: &[EvalSummary]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::domain("no summaries to plot"));
    }
    let (w, h) = (480.0, 360.0);
    let max_mse = rows.iter().map(|r| r.mean_mse).fold(0.0, f64::max);
    let y_top = if max_mse > 0.0 { max_mse * 1.1 } else { 1.0 };
    let px = |d: f64| MARGIN + d * (w - 2.0 * MARGIN);
    let py = |m: f64| h - MARGIN - m / y_top * (h - 2.0 * MARGIN);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<g class="axes" stroke="black"><line x1="{0}" y1="{1}" x2="{2}" y2="{1}"/><line x1="{0}" y1="{1}" x2="{0}" y2="{3}"/></g>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(y_top)
    )
    .unwrap();
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{tick}</text>"#,
            px(tick),
            py(0.0) + 14.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">latency d_T</text>"#,
        w / 2.0,
        h - 6.0
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="12" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {0})">mean MSE (max {1:.3e})</text>"#,
        h / 2.0,
        max_mse
    )
    .unwrap();
    for r in rows {
        let name = escape(&r.policy);
        let (cx, cy) = (px(r.mean_d_t), py(r.mean_mse));
        writeln!(
            svg,
            r##"<circle class="point" data-policy="{name}" data-d="{}" data-mse="{}" cx="{cx}" cy="{cy}" r="4" fill="#1f77b4"/>"##,
            r.mean_d_t,
            r.mean_mse
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="10">{name}</text>"#,
            cx + 6.0,
            cy - 6.0
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
