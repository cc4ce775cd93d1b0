//! CSV datasets with schema inference.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureKind, FeatureSpace, FeatureSpec, Instance};
use crate::sampling::SeededRng;

/// Integer-valued numeric targets with at most this many distinct values are
/// read as class labels.
pub const MAX_INTEGER_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Target {
    Classes { levels: Vec<String>, labels: Vec<usize> },
    Real { values: Vec<f64> },
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Classes { labels, .. } => labels.len(),
            Target::Real { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Target {
        match self {
            Target::Classes { levels, labels } => Target::Classes {
                levels: levels.clone(),
                labels: idx.iter().map(|&i| labels[i]).collect(),
            },
            Target::Real { values } => Target::Real {
                values: idx.iter().map(|&i| values[i]).collect(),
            },
        }
    }

    fn cell(&self, row: usize) -> String {
        match self {
            Target::Classes { levels, labels } => levels[labels[row]].clone(),
            Target::Real { values } => format!("{}", values[row]),
        }
    }
}

/// How to read the target column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    /// Classes when any value is non-numeric, or when every value is an
    /// integer and there are at most [`MAX_INTEGER_CLASSES`] distinct ones.
    #[default]
    Auto,
    Classes,
    Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub space: FeatureSpace,
    pub rows: Vec<Instance>,
    pub target_name: String,
    pub target: Target,
}

impl Dataset {
    pub fn new(space: FeatureSpace, rows: Vec<Instance>, target_name: impl Into<String>, target: Target) -> Result<Self> {
        if rows.len() != target.len() {
            return Err(Error::Dataset(format!(
                "{} rows but {} target values",
                rows.len(),
                target.len()
            )));
        }
        for x in &rows {
            space.check(x)?;
        }
        Ok(Dataset {
            space,
            rows,
            target_name: target_name.into(),
            target,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            space: self.space.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            target_name: self.target_name.clone(),
            target: self.target.select(idx),
        }
    }

    pub fn from_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut records: Vec<Vec<String>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| match e.kind() {
                csv::ErrorKind::UnequalLengths { .. } => Error::Dataset(format!("ragged row: {e}")),
                _ => Error::Csv(e),
            })?;
            records.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        if headers.is_empty() || records.is_empty() {
            return Err(Error::Dataset("empty file".into()));
        }
        let target_col = headers
            .iter()
            .position(|h| *h == schema.target)
            .ok_or_else(|| Error::MissingColumn(schema.target.clone()))?;
        if let Some((r, c)) = records
            .iter()
            .enumerate()
            .find_map(|(r, rec)| rec.iter().position(|c| c.is_empty()).map(|c| (r, c)))
        {
            return Err(Error::Dataset(format!(
                "missing value in row {} column '{}'",
                r + 1,
                headers[c]
            )));
        }
        if headers.iter().collect::<BTreeSet<_>>().len() != headers.len() {
            return Err(Error::Dataset("duplicate column names".into()));
        }

        let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != target_col).collect();
        if feature_cols.is_empty() {
            return Err(Error::Dataset("no feature columns".into()));
        }
        let column = |c: usize| records.iter().map(move |r| r[c].as_str());

        let space = match &schema.space {
            Some(space) => {
                let names: Vec<&str> = feature_cols.iter().map(|&c| headers[c].as_str()).collect();
                if space.names() != names {
                    // Declared order wins; the file may order columns differently.
                    for name in space.names() {
                        if !names.contains(&name.as_str()) {
                            return Err(Error::MissingColumn(name));
                        }
                    }
                }
                space.clone()
            }
            None => FeatureSpace::new(
                feature_cols
                    .iter()
                    .map(|&c| infer_feature(&headers[c], column(c)))
                    .collect::<Result<_>>()?,
            )?,
        };

        let col_of: Vec<usize> = space
            .features()
            .iter()
            .map(|f| headers.iter().position(|h| *h == f.name).unwrap())
            .collect();
        let mut rows = Vec::with_capacity(records.len());
        for (r, rec) in records.iter().enumerate() {
            let mut values = Vec::with_capacity(space.len());
            for (spec, &c) in space.features().iter().zip(&col_of) {
                values.push(parse_cell(spec, &rec[c]).map_err(|e| {
                    Error::Dataset(format!("row {}: {e}", r + 1))
                })?);
            }
            rows.push(Instance::new(values));
        }

        let target = infer_target(column(target_col).collect(), schema.target_kind)?;
        Dataset::new(space, rows, headers[target_col].clone(), target)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.space.names();
        header.push(self.target_name.clone());
        w.write_record(&header)?;
        for (r, x) in self.rows.iter().enumerate() {
            let mut cells: Vec<String> = self
                .space
                .features()
                .iter()
                .zip(x.values())
                .map(|(spec, &v)| match &spec.kind {
                    FeatureKind::Numeric { .. } => format!("{v}"),
                    FeatureKind::Categorical { levels } => levels[v as usize].clone(),
                })
                .collect();
            cells.push(self.target.cell(r));
            w.write_record(&cells)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column typing for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvSchema {
    pub target: String,
    /// Declared feature space; inferred from the data when absent.
    pub space: Option<FeatureSpace>,
    pub target_kind: TargetKind,
}

impl CsvSchema {
    pub fn target(name: impl Into<String>) -> Self {
        CsvSchema {
            target: name.into(),
            ..Default::default()
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    Dataset::from_reader(std::io::BufReader::new(file), schema)
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    dataset.to_writer(std::io::BufWriter::new(file))
}

fn infer_feature<'a>(name: &str, cells: impl Iterator<Item = &'a str> + Clone) -> Result<FeatureSpec> {
    let parsed: Option<Vec<f64>> = cells.clone().map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
    match parsed {
        Some(values) => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if min < max {
                Ok(FeatureSpec::numeric(name, min, max))
            } else {
                // A constant numeric column still needs a usable interval.
                Ok(FeatureSpec::numeric(name, min - 0.5, max + 0.5))
            }
        }
        None => {
            let levels: BTreeSet<&str> = cells.collect();
            Ok(FeatureSpec::categorical(name, levels.into_iter().collect()))
        }
    }
}

fn parse_cell(spec: &FeatureSpec, cell: &str) -> Result<f64> {
    match &spec.kind {
        FeatureKind::Numeric { .. } => cell
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Dataset(format!("'{cell}' is not numeric for '{}'", spec.name))),
        FeatureKind::Categorical { levels } => levels
            .iter()
            .position(|l| l == cell)
            .map(|p| p as f64)
            .ok_or_else(|| Error::Dataset(format!("'{cell}' is not a level of '{}'", spec.name))),
    }
}

fn infer_target(cells: Vec<&str>, kind: TargetKind) -> Result<Target> {
    let numbers: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
    let as_classes = match (kind, &numbers) {
        (TargetKind::Classes, _) => true,
        (TargetKind::Real, None) => {
            return Err(Error::Dataset("target column is not numeric".into()))
        }
        (TargetKind::Real, Some(_)) => false,
        (TargetKind::Auto, None) => true,
        (TargetKind::Auto, Some(v)) => {
            v.iter().all(|x| x.fract() == 0.0)
                && v.iter().map(|x| *x as i64).collect::<BTreeSet<_>>().len() <= MAX_INTEGER_CLASSES
        }
    };
    if !as_classes {
        return Ok(Target::Real {
            values: numbers.unwrap(),
        });
    }
    let mut levels: Vec<&str> = cells.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if numbers.is_some() {
        // Numeric labels sort by value, not lexically.
        levels.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .partial_cmp(&b.parse::<f64>().unwrap())
                .unwrap()
                .then(a.cmp(b))
        });
    }
    let labels = cells
        .iter()
        .map(|c| levels.iter().position(|l| l == c).unwrap())
        .collect();
    Ok(Target::Classes {
        levels: levels.into_iter().map(String::from).collect(),
        labels,
    })
}

/// Seeded shuffle, then the last `round(n * fraction)` rows become the test
/// side. Both sides must be non-empty.
pub fn holdout_split(dataset: &Dataset, fraction: f64, rng: &mut SeededRng) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = dataset.len();
    let n_test = (n as f64 * fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {n} rows leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (train, test) = idx.split_at(n - n_test);
    Ok((dataset.subset(train), dataset.subset(test)))
}
