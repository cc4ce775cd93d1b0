//! Plain text / CSV tables of `mean±sd` cells.

use crate::error::{Error, Result};
use crate::global::GlobalImportance;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn mean_sd_cell(mean: f64, sd: f64) -> String {
    format!("{:.3}±{:.3}", mean, sd)
}

impl SummaryTable {
    /// Columns padded to a common width; cells are right-aligned except the
    /// first.
    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let width: Vec<usize> = (0..cols)
            .map(|c| {
                std::iter::once(&self.header)
                    .chain(&self.rows)
                    .map(|r| r.get(c).map_or(0, |s| s.chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |row: &[String]| -> String {
            row.iter()
                .enumerate()
                .map(|(c, cell)| {
                    let pad = width[c].saturating_sub(cell.chars().count());
                    if c == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// One column per method, one row per feature. `elapsed` adds a final row of
/// wall-clock seconds.
pub fn global_table(results: &[GlobalImportance], elapsed: bool) -> Result<SummaryTable> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidArgument("no results to tabulate".into()))?;
    if first.names.is_empty() {
        return Err(Error::InvalidArgument("empty feature list".into()));
    }
    let mut header = vec!["Feature".to_string()];
    header.extend(results.iter().map(|r| r.method.tag().to_string()));
    let mut rows: Vec<Vec<String>> = first
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut row = vec![name.clone()];
            row.extend(results.iter().map(|r| mean_sd_cell(r.mean[i], r.spread[i])));
            row
        })
        .collect();
    if elapsed {
        let mut row = vec!["Elapsed".to_string()];
        row.extend(results.iter().map(|r| format!("{:.3}s", r.elapsed.as_secs_f64())));
        rows.push(row);
    }
    Ok(SummaryTable { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_csv() {
        let t = SummaryTable {
            header: vec!["Feature".into(), "ci".into()],
            rows: vec![vec!["x1".into(), mean_sd_cell(0.4, 0.0)]],
        };
        assert_eq!(t.rows[0][1], "0.400±0.000");
        let text = t.to_text();
        assert!(text.starts_with("Feature           ci\n"), "{text}");
        assert_eq!(t.to_csv().unwrap(), "Feature,ci\nx1,0.400±0.000\n");
    }
}
