use std::fmt::Write;

use serde::Serialize;

use super::{ciu_rows, finite, influence_rows, CiuRow};
use crate::ciu::{CpAnnotations, Explanation};
use crate::error::{Error, Result};
use crate::model::FeatureSpace;
use crate::stability::StabilityReport;
use crate::stats::BoxStats;

pub const WIDTH: f64 = 800.0;
const ROW_HEIGHT: f64 = 40.0;
const BAR_HEIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const MARGIN: f64 = 80.0;
const BAR_LEFT: f64 = 200.0;
const BAR_SPAN: f64 = 440.0;
const NUMBERS_X: f64 = 652.0;
const CP_HEIGHT: f64 = 480.0;

const STEEL_BLUE: &str = "#4682b4";
const NEGATIVE: &str = "#d62728";
const POSITIVE: &str = "#1f77b4";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotDoc {
    pub svg: String,
    pub width: f64,
    pub height: f64,
    pub title: String,
    pub legend: Vec<String>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn px(v: f64) -> String {
    let r = (finite(v) * 100.0).round() / 100.0;
    // avoid "-0"
    format!("{}", r + 0.0)
}

struct Canvas {
    body: String,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new(width: f64, height: f64) -> Self {
        Canvas {
            body: String::new(),
            width,
            height,
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, opacity: Option<f64>, class: &str) {
        let op = opacity.map_or(String::new(), |o| format!(" fill-opacity=\"{o}\""));
        let _ = writeln!(
            self.body,
            "<rect class=\"{class}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\"{op}/>",
            px(x),
            px(y),
            px(w.max(0.0)),
            px(h.max(0.0))
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\"{extra}/>",
            px(x1),
            px(y1),
            px(x2),
            px(y2)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            px(x),
            px(y),
            escape(content)
        );
    }

    fn finish(self, title: &str, legend: Vec<String>) -> PlotDoc {
        let mut svg = String::new();
        let (w, h) = (px(self.width), px(self.height));
        let _ = writeln!(svg, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
        let _ = writeln!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">"
        );
        let _ = writeln!(svg, "<title>{}</title>", escape(title));
        let _ = writeln!(svg, "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            px(self.width / 2.0),
            escape(title)
        );
        svg.push_str(&self.body);
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#555555\">{}</text>",
            px(self.width / 2.0),
            px(self.height - 14.0),
            escape(&legend.join("   "))
        );
        svg.push_str("</svg>\n");
        PlotDoc {
            svg,
            width: self.width,
            height: self.height,
            title: title.to_string(),
            legend,
        }
    }
}

fn bar_height(rows: usize) -> f64 {
    ROW_HEIGHT * rows as f64 + MARGIN
}

/// Horizontal CIU bars: translucent length ∝ CI, solid overlay ∝ CI·CU,
/// sorted by CI. Bars are scaled so CI = 1 spans the bar area; larger CI
/// values (possible under instability) shrink the scale to stay in view.
pub fn render_ciu_barplot(explanation: &Explanation, space: &FeatureSpace) -> PlotDoc {
    let rows = ciu_rows(explanation, space);
    let title = format!(
        "Contextual importance and utility: {} = {}",
        explanation.output_name,
        super::text::short(explanation.y)
    );
    ciu_bars(&title, &rows)
}

pub(crate) fn ciu_bars(title: &str, rows: &[CiuRow]) -> PlotDoc {
    let mut c = Canvas::new(WIDTH, bar_height(rows.len()));
    let scale = rows.iter().map(|r| r.ci).fold(1.0, f64::max);
    for (k, row) in rows.iter().enumerate() {
        let y = TOP + ROW_HEIGHT * k as f64;
        let full = BAR_SPAN * row.ci.max(0.0) / scale;
        let solid = full * row.cu.clamp(0.0, 1.0);
        c.text(BAR_LEFT - 8.0, y + 16.0, "end", &format!("{} = {}", row.name, row.value));
        c.rect(BAR_LEFT, y, full, BAR_HEIGHT, STEEL_BLUE, Some(0.4), "ci");
        c.rect(BAR_LEFT, y, solid, BAR_HEIGHT, STEEL_BLUE, None, "cu");
        c.text(
            NUMBERS_X,
            y + 16.0,
            "start",
            &format!("CI {:.3}  CU {:.3}", row.ci, row.cu),
        );
    }
    c.line(BAR_LEFT, TOP - 4.0, BAR_LEFT, TOP + ROW_HEIGHT * rows.len() as f64, "#333333", "");
    c.finish(
        title,
        vec!["translucent: CI".into(), "solid: CI\u{b7}CU".into()],
    )
}

/// Diverging bars around a zero axis: negative to the left in red,
/// positive to the right in blue, sorted by |phi|.
pub fn render_influence_barplot(title: &str, names: &[String], phi: &[f64]) -> PlotDoc {
    let rows = influence_rows(names, phi);
    let mut c = Canvas::new(WIDTH, bar_height(rows.len()));
    let half = BAR_SPAN / 2.0;
    let axis = BAR_LEFT + half;
    let scale = rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    for (k, (name, p)) in rows.iter().enumerate() {
        let y = TOP + ROW_HEIGHT * k as f64;
        let len = half * p.abs() / scale;
        c.text(BAR_LEFT - 8.0, y + 16.0, "end", name);
        if *p < 0.0 {
            c.rect(axis - len, y, len, BAR_HEIGHT, NEGATIVE, None, "negative");
        } else {
            c.rect(axis, y, len, BAR_HEIGHT, POSITIVE, None, "positive");
        }
        c.text(NUMBERS_X, y + 16.0, "start", &format!("{:+.3}", p));
    }
    c.line(axis, TOP - 4.0, axis, TOP + ROW_HEIGHT * rows.len() as f64, "#333333", "");
    c.finish(
        title,
        vec!["red: negative".into(), "blue: positive".into()],
    )
}

/// Output as a function of one feature with the CIU reference levels drawn
/// as horizontal guides and the instance marked by a red dot.
pub fn render_cp_plot(
    feature: &str,
    curve: &[(f64, f64)],
    ann: &CpAnnotations,
) -> Result<PlotDoc> {
    if curve.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a curve needs at least 2 points, got {}",
            curve.len()
        )));
    }
    let (left, right, top, bottom) = (70.0, WIDTH - 90.0, 44.0, CP_HEIGHT - 60.0);
    let xs = curve.iter().map(|p| finite(p.0));
    let (mut x_lo, mut x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    x_lo = x_lo.min(finite(ann.x_value));
    x_hi = x_hi.max(finite(ann.x_value));
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    let levels = [ann.out_min, ann.out_max, ann.ymin, ann.ymax, ann.y, ann.y_u0];
    let (mut y_lo, mut y_hi) = curve
        .iter()
        .map(|p| finite(p.1))
        .chain(levels.iter().map(|&v| finite(v)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if y_hi <= y_lo {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad = 0.05 * (y_hi - y_lo);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let sx = |v: f64| left + (finite(v) - x_lo) / (x_hi - x_lo) * (right - left);
    let sy = |v: f64| bottom - (finite(v) - y_lo) / (y_hi - y_lo) * (bottom - top);

    let title = format!("What-if: output vs {feature}");
    let mut c = Canvas::new(WIDTH, CP_HEIGHT);
    c.line(left, bottom, right, bottom, "#333333", "");
    c.line(left, top, left, bottom, "#333333", "");
    c.text(left, bottom + 16.0, "middle", &super::text::short(x_lo));
    c.text(right, bottom + 16.0, "middle", &super::text::short(x_hi));
    c.text((left + right) / 2.0, bottom + 32.0, "middle", feature);
    let guides = [
        ("MIN", ann.out_min, "#000000"),
        ("MAX", ann.out_max, "#000000"),
        ("ymin", ann.ymin, "#2ca02c"),
        ("ymax", ann.ymax, "#2ca02c"),
        ("y", ann.y, "#d62728"),
        ("y(u(0))", ann.y_u0, "#ff7f0e"),
    ];
    for (label, v, colour) in guides {
        let y = sy(v);
        c.line(left, y, right, y, colour, " stroke-dasharray=\"4 3\"");
        c.text(right + 6.0, y + 4.0, "start", &format!("{label} {}", super::text::short(v)));
    }
    let points: Vec<String> = curve
        .iter()
        .map(|&(x, y)| format!("{},{}", px(sx(x)), px(sy(y))))
        .collect();
    let _ = writeln!(
        c.body,
        "<polyline class=\"curve\" points=\"{}\" fill=\"none\" stroke=\"{STEEL_BLUE}\" stroke-width=\"2\"/>",
        points.join(" ")
    );
    let _ = writeln!(
        c.body,
        "<circle class=\"instance\" cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"red\"/>",
        px(sx(ann.x_value)),
        px(sy(ann.y))
    );
    Ok(c.finish(
        &title,
        vec![
            "dashed: MIN/MAX, ymin/ymax, y, y(u(0))".into(),
            "red dot: instance".into(),
        ],
    ))
}

/// Box-with-whiskers per feature over the runs of one method.
pub fn render_box_plot(report: &StabilityReport) -> PlotDoc {
    let stats: Vec<BoxStats> = report.box_stats();
    let mut lo = stats.iter().map(|b| finite(b.min)).fold(f64::INFINITY, f64::min);
    let mut hi = stats.iter().map(|b| finite(b.max)).fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        lo = 0.0;
        hi = 0.0;
    }
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let sx = |v: f64| BAR_LEFT + (finite(v) - lo) / (hi - lo) * BAR_SPAN;
    let mut c = Canvas::new(WIDTH, bar_height(stats.len()));
    if lo < 0.0 && hi > 0.0 {
        let x0 = sx(0.0);
        c.line(x0, TOP - 4.0, x0, TOP + ROW_HEIGHT * stats.len() as f64, "#999999", " stroke-dasharray=\"2 2\"");
    }
    for (k, (name, b)) in report.names.iter().zip(&stats).enumerate() {
        let y = TOP + ROW_HEIGHT * k as f64;
        let mid = y + BAR_HEIGHT / 2.0;
        c.text(BAR_LEFT - 8.0, y + 16.0, "end", name);
        c.line(sx(b.min), mid, sx(b.max), mid, "#333333", "");
        c.line(sx(b.min), y + 6.0, sx(b.min), y + BAR_HEIGHT - 6.0, "#333333", "");
        c.line(sx(b.max), y + 6.0, sx(b.max), y + BAR_HEIGHT - 6.0, "#333333", "");
        c.rect(sx(b.q1), y, sx(b.q3) - sx(b.q1), BAR_HEIGHT, STEEL_BLUE, Some(0.4), "box");
        c.line(sx(b.median), y, sx(b.median), y + BAR_HEIGHT, "#000000", " stroke-width=\"2\"");
        c.text(
            NUMBERS_X,
            y + 16.0,
            "start",
            &format!("{:.3}\u{b1}{:.3}", report.mean[k], report.sd[k]),
        );
    }
    c.text(BAR_LEFT, TOP + ROW_HEIGHT * stats.len() as f64 + 12.0, "middle", &super::text::short(lo));
    c.text(
        BAR_LEFT + BAR_SPAN,
        TOP + ROW_HEIGHT * stats.len() as f64 + 12.0,
        "middle",
        &super::text::short(hi),
    );
    c.finish(
        &format!("{} over {} runs", report.method.tag(), report.runs()),
        vec!["box: quartiles".into(), "whiskers: min/max".into()],
    )
}
