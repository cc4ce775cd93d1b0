//! Bagged CART ensemble (random-forest style) used as an opaque model.
//!
//! Each tree is grown on a bootstrap sample with a random subset of
//! `feature_subsample` features tried at every split. Classification trees
//! use Gini impurity and store class frequencies in their leaves; regression
//! trees use squared error and store the mean. The ensemble averages the
//! leaves it reaches, so predictions stay inside the convex hull of leaf
//! values.

use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureKind, FeatureSpace, Instance, OutputSpec, OutputUtility, Predictor};
use crate::sampling::{derive_seed, SeededRng};
use crate::tabular::dataset::{Dataset, Target};

pub const MIN_TRAINING_ROWS: usize = 10;
const PARALLEL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features tried per split; `round(√N)` (at least 1) when `None`.
    pub feature_subsample: Option<usize>,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            n_trees: 100,
            max_depth: 8,
            min_samples_split: 2,
            feature_subsample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Classification { classes: Vec<String> },
    Regression { min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRule {
    /// Left when `x <= threshold`.
    Threshold(f64),
    /// Left when `x` is this level; right otherwise.
    Level(usize),
}

impl SplitRule {
    fn goes_left(&self, v: f64) -> bool {
        match *self {
            SplitRule::Threshold(t) => v <= t,
            SplitRule::Level(l) => v as usize == l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

/// Nodes in arena order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => at = if rule.goes_left(x[*feature]) { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub space: FeatureSpace,
    pub target_name: String,
    pub task: Task,
    pub params: EnsembleParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TreeEnsemble {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Output names: class labels, or the target name for regression.
    pub fn output_names(&self) -> Vec<String> {
        match &self.task {
            Task::Classification { classes } => classes.clone(),
            Task::Regression { .. } => vec![self.target_name.clone()],
        }
    }

    /// Class probabilities over `[0, 1]`, or the training target range for
    /// regression.
    pub fn utility(&self) -> OutputUtility {
        match &self.task {
            Task::Classification { classes } => OutputUtility::probabilities(classes),
            Task::Regression { min, max } => OutputUtility {
                outputs: vec![OutputSpec::declared(&self.target_name, *min, *max)],
            },
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_outputs()];
        for tree in &self.trees {
            for (a, v) in acc.iter_mut().zip(tree.leaf_for(x)) {
                *a += v;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Share of rows whose arg-max class matches the label.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let Target::Classes { labels, .. } = &data.target else {
            return Err(Error::InvalidArgument("accuracy needs class labels".into()));
        };
        let m = self.evaluate(&data.rows)?;
        let hits = labels
            .iter()
            .enumerate()
            .filter(|(r, &l)| crate::baselines::argmax(m.row(*r).iter().copied()) == l)
            .count();
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn rmse(&self, data: &Dataset) -> Result<f64> {
        let Target::Real { values } = &data.target else {
            return Err(Error::InvalidArgument("rmse needs a real target".into()));
        };
        let ys = self.evaluate_output(&data.rows, 0)?;
        Ok((ys.iter().zip(values).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ys.len() as f64).sqrt())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TreeEnsemble = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::InvalidArgument("model has no trees".into()));
        }
        let width = self.n_outputs();
        for tree in &self.trees {
            for node in &tree.nodes {
                match node {
                    Node::Leaf { value } if value.len() != width => {
                        return Err(Error::InvalidArgument("leaf width mismatch".into()))
                    }
                    Node::Split {
                        feature,
                        left,
                        right,
                        ..
                    } if *feature >= self.space.len()
                        || *left >= tree.nodes.len()
                        || *right >= tree.nodes.len() =>
                    {
                        return Err(Error::InvalidArgument("dangling split".into()))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

impl Predictor for TreeEnsemble {
    fn n_outputs(&self) -> usize {
        match &self.task {
            Task::Classification { classes } => classes.len(),
            Task::Regression { .. } => 1,
        }
    }

    fn evaluate(&self, batch: &[Instance]) -> Result<DMatrix<f64>> {
        if let Some(bad) = batch.iter().find(|x| x.len() != self.space.len()) {
            return Err(Error::Predictor(format!(
                "expected {} features, got {}",
                self.space.len(),
                bad.len()
            )));
        }
        let rows: Vec<Vec<f64>> = if batch.len() >= PARALLEL_BATCH {
            batch.par_iter().map(|x| self.predict_row(x.values())).collect()
        } else {
            batch.iter().map(|x| self.predict_row(x.values())).collect()
        };
        let width = self.n_outputs();
        Ok(DMatrix::from_fn(batch.len(), width, |r, c| rows[r][c]))
    }
}

enum Labels<'a> {
    Classes { labels: &'a [usize], n: usize },
    Real(&'a [f64]),
}

impl Labels<'_> {
    fn leaf(&self, idx: &[usize]) -> Vec<f64> {
        match self {
            Labels::Classes { labels, n } => {
                let mut counts = vec![0.0; *n];
                idx.iter().for_each(|&i| counts[labels[i]] += 1.0);
                counts.iter_mut().for_each(|c| *c /= idx.len() as f64);
                counts
            }
            Labels::Real(v) => vec![idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64],
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        match self {
            Labels::Classes { labels, .. } => idx.iter().all(|&i| labels[i] == labels[idx[0]]),
            Labels::Real(v) => idx.iter().all(|&i| v[i] == v[idx[0]]),
        }
    }
}

/// Impurity totals for a growing left/right partition.
#[derive(Clone)]
enum Acc {
    Counts(Vec<f64>, f64),
    Moments { n: f64, sum: f64, sq: f64 },
}

impl Acc {
    fn new(labels: &Labels) -> Acc {
        match labels {
            Labels::Classes { n, .. } => Acc::Counts(vec![0.0; *n], 0.0),
            Labels::Real(_) => Acc::Moments {
                n: 0.0,
                sum: 0.0,
                sq: 0.0,
            },
        }
    }

    fn add(&mut self, labels: &Labels, i: usize, sign: f64) {
        match (self, labels) {
            (Acc::Counts(c, n), Labels::Classes { labels, .. }) => {
                c[labels[i]] += sign;
                *n += sign;
            }
            (Acc::Moments { n, sum, sq }, Labels::Real(v)) => {
                *n += sign;
                *sum += sign * v[i];
                *sq += sign * v[i] * v[i];
            }
            _ => unreachable!(),
        }
    }

    fn count(&self) -> f64 {
        match self {
            Acc::Counts(_, n) => *n,
            Acc::Moments { n, .. } => *n,
        }
    }

    /// Size-weighted impurity: `n·gini` or the sum of squared deviations.
    fn weighted(&self) -> f64 {
        match self {
            Acc::Counts(c, n) => {
                if *n <= 0.0 {
                    0.0
                } else {
                    n - c.iter().map(|k| k * k).sum::<f64>() / n
                }
            }
            Acc::Moments { n, sum, sq } => {
                if *n <= 0.0 {
                    0.0
                } else {
                    (sq - sum * sum / n).max(0.0)
                }
            }
        }
    }
}

struct Grower<'a> {
    rows: &'a [Instance],
    labels: Labels<'a>,
    space: &'a FeatureSpace,
    params: EnsembleParams,
    mtry: usize,
}

impl Grower<'_> {
    fn grow(&self, idx: Vec<usize>, rng: &mut SeededRng) -> Tree {
        let mut nodes = vec![Node::Leaf { value: vec![] }];
        let mut stack = vec![(0usize, idx, 0usize)];
        while let Some((at, idx, depth)) = stack.pop() {
            let leaf = self.labels.leaf(&idx);
            let split = if depth >= self.params.max_depth
                || idx.len() < self.params.min_samples_split.max(2)
                || self.labels.is_pure(&idx)
            {
                None
            } else {
                self.best_split(&idx, rng)
            };
            match split {
                None => nodes[at] = Node::Leaf { value: leaf },
                Some((feature, rule)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) = idx
                        .iter()
                        .partition(|&&i| rule.goes_left(self.rows[i].get(feature)));
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: vec![] });
                    nodes.push(Node::Leaf { value: vec![] });
                    nodes[at] = Node::Split {
                        feature,
                        rule,
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        Tree { nodes }
    }

    fn best_split(&self, idx: &[usize], rng: &mut SeededRng) -> Option<(usize, SplitRule)> {
        let mut features = index::sample(rng, self.space.len(), self.mtry).into_vec();
        features.sort_unstable();
        let mut parent = Acc::new(&self.labels);
        idx.iter().for_each(|&i| parent.add(&self.labels, i, 1.0));
        let parent_imp = parent.weighted();

        let mut best: Option<(f64, usize, SplitRule)> = None;
        let mut consider = |gain: f64, feature: usize, rule: SplitRule| {
            if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, feature, rule));
            }
        };
        for &f in &features {
            match &self.space.features()[f].kind {
                FeatureKind::Numeric { .. } => {
                    let mut order = idx.to_vec();
                    order.sort_by(|&a, &b| self.rows[a].get(f).total_cmp(&self.rows[b].get(f)));
                    let mut left = Acc::new(&self.labels);
                    let mut right = parent.clone();
                    for w in 0..order.len() - 1 {
                        left.add(&self.labels, order[w], 1.0);
                        right.add(&self.labels, order[w], -1.0);
                        let (a, b) = (self.rows[order[w]].get(f), self.rows[order[w + 1]].get(f));
                        if a == b {
                            continue;
                        }
                        let gain = parent_imp - left.weighted() - right.weighted();
                        consider(gain, f, SplitRule::Threshold(0.5 * (a + b)));
                    }
                }
                FeatureKind::Categorical { levels } => {
                    for level in 0..levels.len() {
                        let mut left = Acc::new(&self.labels);
                        let mut right = Acc::new(&self.labels);
                        for &i in idx {
                            if self.rows[i].get(f) as usize == level {
                                left.add(&self.labels, i, 1.0);
                            } else {
                                right.add(&self.labels, i, 1.0);
                            }
                        }
                        if left.count() == 0.0 || right.count() == 0.0 {
                            continue;
                        }
                        let gain = parent_imp - left.weighted() - right.weighted();
                        consider(gain, f, SplitRule::Level(level));
                    }
                }
            }
        }
        best.map(|(_, f, rule)| (f, rule))
    }
}

/// Trains a bagged ensemble. Tree `t` uses seed `derive_seed(rng.seed(), t)`
/// so the result does not depend on thread scheduling.
pub fn train_ensemble(dataset: &Dataset, params: &EnsembleParams, rng: &SeededRng) -> Result<TreeEnsemble> {
    if dataset.len() < MIN_TRAINING_ROWS {
        return Err(Error::InvalidArgument(format!(
            "training needs at least {MIN_TRAINING_ROWS} rows, got {}",
            dataset.len()
        )));
    }
    if params.n_trees == 0 || params.max_depth == 0 {
        return Err(Error::InvalidArgument(
            "n_trees and max_depth must be at least 1".into(),
        ));
    }
    let n_features = dataset.space.len();
    let mtry = params
        .feature_subsample
        .unwrap_or_else(|| ((n_features as f64).sqrt().round() as usize).max(1))
        .clamp(1, n_features);

    let mut warnings = Vec::new();
    let (labels, task) = match &dataset.target {
        Target::Classes { levels, labels } => {
            let present: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
            if present.len() < 2 {
                let msg = format!(
                    "target '{}' has a single class; the model is a constant predictor",
                    dataset.target_name
                );
                warn!("{msg}");
                warnings.push(msg);
            }
            (
                Labels::Classes {
                    labels,
                    n: levels.len(),
                },
                Task::Classification {
                    classes: levels.clone(),
                },
            )
        }
        Target::Real { values } => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (min, max) = if min < max {
                (min, max)
            } else {
                let msg = format!(
                    "target '{}' is constant; the model is a constant predictor",
                    dataset.target_name
                );
                warn!("{msg}");
                warnings.push(msg);
                (min - 0.5, max + 0.5)
            };
            (Labels::Real(values), Task::Regression { min, max })
        }
    };

    let grower = Grower {
        rows: &dataset.rows,
        labels,
        space: &dataset.space,
        params: *params,
        mtry,
    };
    let seed = rng.seed();
    let n = dataset.len();
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut tree_rng = SeededRng::new(derive_seed(seed, t as u64));
            let boot: Vec<usize> = (0..n).map(|_| tree_rng.gen_range(0..n)).collect();
            grower.grow(boot, &mut tree_rng)
        })
        .collect();

    Ok(TreeEnsemble {
        space: dataset.space.clone(),
        target_name: dataset.target_name.clone(),
        task,
        params: *params,
        seed,
        trees,
        warnings,
    })
}
