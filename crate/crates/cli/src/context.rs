//! Resolves the predictor, feature space, utility and dataset for a run.

use ciu_core::tabular::{load_csv, CsvSchema, Dataset, Target, TargetKind, Task, TreeEnsemble};
use ciu_core::{
    linear_reference_predictor, nonlinear_reference_predictor, Error, FeatureSpace, Instance, ModelConfig,
    OutputSpec, OutputUtility, Predictor, Result, SeededRng,
};
use rand::seq::index;

use crate::args::{Builtin, Common};

pub struct Context {
    pub predictor: Box<dyn Predictor>,
    pub space: FeatureSpace,
    pub utility: OutputUtility,
    pub data: Option<Dataset>,
    pub output: usize,
}

impl Context {
    pub fn load(common: &Common) -> Result<Context> {
        let config = match &common.config {
            Some(path) => Some(ModelConfig::from_json(&std::fs::read_to_string(path)?)?),
            None => None,
        };
        let (predictor, mut space, mut utility, model): (Box<dyn Predictor>, _, _, Option<TreeEnsemble>) =
            match (common.predictor, &common.model) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidArgument(
                        "give either --predictor or --model, not both".into(),
                    ))
                }
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "a predictor is required: --predictor linear|nonlinear or --model FILE".into(),
                    ))
                }
                (Some(Builtin::Linear), None) => (
                    Box::new(linear_reference_predictor()),
                    FeatureSpace::unit_box(4)?,
                    OutputUtility::new(vec![OutputSpec::declared("y", 0.0, 1.0)])?,
                    None,
                ),
                (Some(Builtin::Nonlinear), None) => (
                    Box::new(nonlinear_reference_predictor()),
                    FeatureSpace::unit_box(4)?,
                    OutputUtility::new(vec![OutputSpec::undeclared("y")])?,
                    None,
                ),
                (None, Some(path)) => {
                    if common.config.is_none() && common.data.is_none() {
                        return Err(Error::InvalidArgument(
                            "--model needs --data or --config to describe its inputs".into(),
                        ));
                    }
                    let model = TreeEnsemble::load(path).map_err(|e| match e {
                        Error::Io(io) => Error::InvalidArgument(format!("cannot read model {}: {io}", path.display())),
                        other => other,
                    })?;
                    let space = model.space.clone();
                    let utility = model.utility();
                    (Box::new(model.clone()), space, utility, Some(model))
                }
            };
        if let Some(cfg) = config {
            if cfg.space.len() != space.len() {
                return Err(Error::InvalidFeatureSpace(format!(
                    "config declares {} features but the predictor takes {}",
                    cfg.space.len(),
                    space.len()
                )));
            }
            utility = cfg.utility()?;
            space = cfg.space;
        }
        if utility.outputs.len() != predictor.n_outputs() {
            return Err(Error::InvalidArgument(format!(
                "utility describes {} outputs but the predictor has {}",
                utility.outputs.len(),
                predictor.n_outputs()
            )));
        }

        let data = match &common.data {
            None => None,
            Some(path) => {
                let target = common
                    .target
                    .clone()
                    .or_else(|| model.as_ref().map(|m| m.target_name.clone()))
                    .ok_or_else(|| Error::InvalidArgument("--data needs --target".into()))?;
                let target_kind = match model.as_ref().map(|m| &m.task) {
                    Some(Task::Classification { .. }) => TargetKind::Classes,
                    Some(Task::Regression { .. }) => TargetKind::Real,
                    None => TargetKind::Auto,
                };
                let schema = CsvSchema {
                    target,
                    space: Some(space.clone()),
                    target_kind,
                };
                let mut d = load_csv(path, &schema)?;
                if let Some(m) = &model {
                    align_classes(&mut d, m)?;
                }
                Some(d)
            }
        };
        let output = resolve_output(&utility, &common.output)?;
        Ok(Context {
            predictor,
            space,
            utility,
            data,
            output,
        })
    }

    /// Inline JSON, or a row index into the dataset.
    pub fn instance(&self, spec: Option<&str>) -> Result<Instance> {
        let spec = spec.ok_or_else(|| Error::InvalidArgument("--instance is required".into()))?;
        let trimmed = spec.trim();
        if let Ok(row) = trimmed.parse::<usize>() {
            let data = self.data.as_ref().ok_or_else(|| {
                Error::InvalidArgument("a row-index instance needs --data".into())
            })?;
            return data.rows.get(row).cloned().ok_or_else(|| {
                Error::InvalidInstance(format!("row {row} out of range ({} rows)", data.len()))
            });
        }
        let value: serde_json::Value = serde_json::from_str(trimmed)
            .map_err(|e| Error::InvalidInstance(format!("instance is neither a row index nor JSON: {e}")))?;
        let x = self.space.encode_json(&value)?;
        self.space.check(&x)?;
        Ok(x)
    }

    /// Up to `n` dataset rows without replacement, else `n` uniform draws.
    pub fn background(&self, n: usize, rng: &mut SeededRng) -> Result<Vec<Instance>> {
        if n == 0 {
            return Err(Error::InvalidArgument("--background must be positive".into()));
        }
        Ok(match &self.data {
            Some(d) => {
                let mut idx = index::sample(rng, d.len(), n.min(d.len())).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| d.rows[i].clone()).collect()
            }
            None => self.space.sample_uniform_n(n, rng),
        })
    }
}

fn resolve_output(utility: &OutputUtility, spec: &str) -> Result<usize> {
    if let Ok(i) = spec.parse::<usize>() {
        utility.output(i)?;
        return Ok(i);
    }
    utility
        .outputs
        .iter()
        .position(|o| o.name == spec)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown output '{spec}'")))
}

/// Re-indexes class labels to the model's class order.
fn align_classes(data: &mut Dataset, model: &TreeEnsemble) -> Result<()> {
    let (Task::Classification { classes }, Target::Classes { levels, labels }) = (&model.task, &data.target) else {
        return Ok(());
    };
    let mapped = labels
        .iter()
        .map(|&l| {
            classes.iter().position(|c| *c == levels[l]).ok_or_else(|| {
                Error::Dataset(format!("class '{}' is unknown to the model", levels[l]))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    data.target = Target::Classes {
        levels: classes.clone(),
        labels: mapped,
    };
    Ok(())
}
