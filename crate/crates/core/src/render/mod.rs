//! SVG and terminal renderings of explanations.
//!
//! Bar plots use an 800 px wide canvas with 40 px per row plus an 80 px
//! margin for the title and legend. Output depends only on the inputs, so
//! repeated renders are byte-identical.

mod svg;
mod text;

pub use svg::{
    render_box_plot, render_ciu_barplot, render_cp_plot, render_influence_barplot, PlotDoc,
};
pub use text::{box_text, ciu_text, cp_text, influence_text, TEXT_BAR_COLUMNS};

use crate::ciu::Explanation;
use crate::model::FeatureSpace;

/// One row of a CIU bar plot.
#[derive(Debug, Clone, PartialEq)]
pub struct CiuRow {
    pub name: String,
    pub value: String,
    pub ci: f64,
    pub cu: f64,
}

/// Rows sorted by CI, largest first; ties keep feature order.
pub fn ciu_rows(explanation: &Explanation, space: &FeatureSpace) -> Vec<CiuRow> {
    let mut rows: Vec<CiuRow> = explanation
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| CiuRow {
            name: f.name.clone(),
            value: space.format_value(i, f.value),
            ci: finite(f.ciu.ci),
            cu: finite(f.ciu.cu),
        })
        .collect();
    rows.sort_by(|a, b| b.ci.total_cmp(&a.ci));
    rows
}

/// Attributions this close to zero are rounding residue and drawn as zero.
pub const ZERO_SNAP: f64 = 1e-12;

/// `(name, phi)` sorted by |phi|, largest first; ties keep feature order.
pub fn influence_rows(names: &[String], phi: &[f64]) -> Vec<(String, f64)> {
    let mut rows: Vec<(String, f64)> = names
        .iter()
        .cloned()
        .zip(phi.iter().map(|&p| {
            let p = finite(p);
            if p.abs() < ZERO_SNAP {
                0.0
            } else {
                p
            }
        }))
        .collect();
    rows.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    rows
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}
