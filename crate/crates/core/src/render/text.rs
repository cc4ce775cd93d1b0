use std::fmt::Write;

use super::{ciu_rows, finite, influence_rows};
use crate::ciu::{CpAnnotations, Explanation};
use crate::model::FeatureSpace;
use crate::stability::StabilityReport;

pub const TEXT_BAR_COLUMNS: usize = 40;

const EIGHTHS: [char; 8] = [' ', '▏', '▎', '▍', '▌', '▋', '▊', '▉'];

pub(crate) fn short(v: f64) -> String {
    format!("{}", (finite(v) * 1000.0).round() / 1000.0 + 0.0)
}

/// A bar `fraction · cols` cells long using eighth-block resolution, padded
/// with spaces to `cols`.
fn block_bar(fraction: f64, cols: usize, fill: char) -> String {
    let eighths = (finite(fraction).clamp(0.0, 1.0) * cols as f64 * 8.0).round() as usize;
    let mut s: String = std::iter::repeat_n(fill, eighths / 8).collect();
    if !eighths.is_multiple_of(8) && fill == '█' {
        s.push(EIGHTHS[eighths % 8]);
    }
    let len = s.chars().count();
    s.extend(std::iter::repeat_n(' ', cols.saturating_sub(len)));
    s
}

fn name_width(names: impl Iterator<Item = usize>) -> usize {
    names.max().unwrap_or(0)
}

/// One line per feature, sorted by CI: solid cells for CI·CU followed by
/// light cells up to CI.
pub fn ciu_text(explanation: &Explanation, space: &FeatureSpace) -> String {
    let rows = ciu_rows(explanation, space);
    let labels: Vec<String> = rows.iter().map(|r| format!("{} = {}", r.name, r.value)).collect();
    let w = name_width(labels.iter().map(|l| l.chars().count()));
    let scale = rows.iter().map(|r| r.ci).fold(1.0, f64::max);
    let mut out = format!(
        "{} = {}  (range {} .. {})\n",
        explanation.output_name,
        short(explanation.y),
        short(explanation.range.min),
        short(explanation.range.max)
    );
    for (label, r) in labels.iter().zip(&rows) {
        let cols = TEXT_BAR_COLUMNS;
        let full = ((r.ci.max(0.0) / scale) * cols as f64).round() as usize;
        let solid = ((r.ci.max(0.0) / scale) * r.cu.clamp(0.0, 1.0) * cols as f64).round() as usize;
        let solid = solid.min(full);
        let bar: String = std::iter::repeat_n('█', solid)
            .chain(std::iter::repeat_n('░', full - solid))
            .chain(std::iter::repeat_n(' ', cols - full))
            .collect();
        let _ = writeln!(
            out,
            "{label:<w$} │{bar}│ CI {:.3} CU {:.3}",
            r.ci, r.cu
        );
    }
    out
}

/// Diverging bars, 20 columns either side of the axis.
pub fn influence_text(names: &[String], phi: &[f64]) -> String {
    let rows = influence_rows(names, phi);
    let w = name_width(rows.iter().map(|r| r.0.chars().count()));
    let half = TEXT_BAR_COLUMNS / 2;
    let scale = rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut out = String::new();
    for (name, p) in rows {
        let cells = ((p.abs() / scale) * half as f64).round() as usize;
        let (left, right) = if p < 0.0 {
            (
                format!("{}{}", " ".repeat(half - cells), "█".repeat(cells)),
                " ".repeat(half),
            )
        } else {
            (" ".repeat(half), format!("{}{}", "█".repeat(cells), " ".repeat(half - cells)))
        };
        let _ = writeln!(out, "{name:<w$} {left}│{right} {p:+.3}");
    }
    out
}

/// Curve points as rows with a bar for the output level; the row closest to
/// the instance is marked with `*`.
pub fn cp_text(feature: &str, curve: &[(f64, f64)], ann: &CpAnnotations) -> String {
    let lo = finite(ann.out_min).min(curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min));
    let hi = finite(ann.out_max).max(curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
    let width = if hi > lo { hi - lo } else { 1.0 };
    let nearest = curve
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 .0 - ann.x_value).abs().total_cmp(&(b.1 .0 - ann.x_value).abs()))
        .map(|(k, _)| k);
    let mut out = format!(
        "{feature}: MIN {} MAX {} ymin {} ymax {} y {} y(u(0)) {}\n",
        short(ann.out_min),
        short(ann.out_max),
        short(ann.ymin),
        short(ann.ymax),
        short(ann.y),
        short(ann.y_u0)
    );
    for (k, &(x, y)) in curve.iter().enumerate() {
        let mark = if Some(k) == nearest { '*' } else { ' ' };
        let _ = writeln!(
            out,
            "{mark} {:>9} │{}│ {}",
            short(x),
            block_bar((y - lo) / width, TEXT_BAR_COLUMNS, '█'),
            short(y)
        );
    }
    out
}

/// Five-number summaries per feature for one method.
pub fn box_text(report: &StabilityReport) -> String {
    let w = name_width(report.names.iter().map(|n| n.chars().count())).max(7);
    let mut out = format!("{} over {} runs\n", report.method.tag(), report.runs());
    let _ = writeln!(
        out,
        "{:<w$} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "feature", "min", "q1", "median", "q3", "max", "sd"
    );
    for ((name, b), sd) in report.names.iter().zip(report.box_stats()).zip(&report.sd) {
        let _ = writeln!(
            out,
            "{name:<w$} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            b.min, b.q1, b.median, b.q3, b.max, sd
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_bars_have_fixed_width() {
        assert_eq!(block_bar(0.0, 40, '█').chars().count(), 40);
        assert_eq!(block_bar(1.0, 40, '█'), "█".repeat(40));
        assert_eq!(block_bar(0.5, 4, '█'), "██  ");
        assert_eq!(block_bar(0.51, 4, '█').chars().next(), Some('█'));
    }

    #[test]
    fn influence_sides() {
        let t = influence_text(&["a".into(), "b".into()], &[-0.5, 1.0]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with('b') && lines[0].contains("│█"));
        assert!(lines[1].starts_with('a') && lines[1].contains("█│"));
    }
}
