//! Global feature importance: mean CI over instances, mean |Shapley| and
//! permutation importance, with repeated-iteration aggregation.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::index;
use serde_json::{json, Value};

use crate::baselines::{permutation_importance, shapley_mc, LossSpec};
use crate::ciu::CiuExplainer;
use crate::error::{Error, Result};
use crate::model::{FeatureSpace, Instance, OutputUtility, Predictor};
use crate::sampling::SeededRng;
use crate::stats::RunningStats;
use crate::tabular::{Dataset, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GlobalMethod {
    Ci,
    PfiMae,
    PfiCe,
    MeanAbsShapley,
}

impl GlobalMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            GlobalMethod::Ci => "ci",
            GlobalMethod::PfiMae => "pfi-mae",
            GlobalMethod::PfiCe => "pfi-ce",
            GlobalMethod::MeanAbsShapley => "mean-abs-shapley",
        }
    }
}

impl fmt::Display for GlobalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for GlobalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ci" => Ok(GlobalMethod::Ci),
            "pfi-mae" => Ok(GlobalMethod::PfiMae),
            "pfi-ce" => Ok(GlobalMethod::PfiCe),
            "mean-abs-shapley" | "shapley" => Ok(GlobalMethod::MeanAbsShapley),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalImportance {
    pub method: GlobalMethod,
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    /// Sample standard deviation: across instances for a single iteration,
    /// across iterations after [`aggregate_iterations`].
    pub spread: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Features whose output never moved (CI only).
    pub degenerate: Vec<bool>,
    pub normalized: bool,
    pub n_instances: usize,
    pub n_iterations: usize,
    pub elapsed: Duration,
}

impl GlobalImportance {
    /// Means and spreads divided by the sum of the means.
    pub fn normalized(&self) -> Result<GlobalImportance> {
        let total: f64 = self.mean.iter().sum();
        normalize_importances(&self.mean)?;
        let scale = |v: &[f64]| v.iter().map(|x| x / total).collect::<Vec<_>>();
        Ok(GlobalImportance {
            mean: scale(&self.mean),
            spread: scale(&self.spread),
            std_error: scale(&self.std_error),
            normalized: true,
            ..self.clone()
        })
    }

    /// Feature indices ordered by decreasing mean importance.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.mean.len()).collect();
        idx.sort_by(|&a, &b| self.mean[b].total_cmp(&self.mean[a]).then(a.cmp(&b)));
        idx
    }

    /// Report block; timing is left out so the JSON is reproducible.
    pub fn to_json(&self) -> Value {
        let features: Vec<Value> = (0..self.names.len())
            .map(|i| {
                json!({
                    "name": self.names[i],
                    "mean": self.mean[i],
                    "sd": self.spread[i],
                    "std_error": self.std_error[i],
                    "degenerate": self.degenerate[i],
                })
            })
            .collect();
        json!({
            "method": self.method.tag(),
            "normalized": self.normalized,
            "n_instances": self.n_instances,
            "n_iterations": self.n_iterations,
            "features": features,
        })
    }
}

/// Each value divided by the sum. Needs at least one positive value and no
/// negative sum.
pub fn normalize_importances(raw: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if !raw.iter().any(|&v| v > 0.0) || !(total > 0.0) {
        return Err(Error::InvalidArgument(
            "importances need a positive sum to normalise".into(),
        ));
    }
    Ok(raw.iter().map(|v| v / total).collect())
}

fn from_stats(
    method: GlobalMethod,
    names: Vec<String>,
    stats: &[RunningStats],
    degenerate: Vec<bool>,
    n_instances: usize,
    elapsed: Duration,
) -> GlobalImportance {
    GlobalImportance {
        method,
        names,
        mean: stats.iter().map(|s| s.mean()).collect(),
        spread: stats.iter().map(|s| s.sd()).collect(),
        std_error: stats.iter().map(|s| s.std_error()).collect(),
        degenerate,
        normalized: false,
        n_instances,
        n_iterations: 1,
        elapsed,
    }
}

/// Mean and spread of per-instance CI. Instance `k` uses `rng.fork(k)`; the
/// joint range is resolved once before the loop.
pub fn global_ci(
    predictor: &dyn Predictor,
    utility: &OutputUtility,
    space: &FeatureSpace,
    instances: &[Instance],
    n: usize,
    output: usize,
    rng: &SeededRng,
) -> Result<GlobalImportance> {
    let start = Instant::now();
    if instances.is_empty() {
        return Err(Error::InvalidArgument("empty instance sample".into()));
    }
    let explainer = CiuExplainer::new(predictor, space, utility, output, rng)?.samples(n);
    let mut stats = vec![RunningStats::new(); space.len()];
    let mut degenerate = vec![true; space.len()];
    for (k, x) in instances.iter().enumerate() {
        let e = explainer.explain(x, &rng.fork(k as u64))?;
        for (i, f) in e.features.iter().enumerate() {
            stats[i].push(f.ciu.ci);
            degenerate[i] &= f.ciu.degenerate;
        }
    }
    Ok(from_stats(
        GlobalMethod::Ci,
        space.names(),
        &stats,
        degenerate,
        instances.len(),
        start.elapsed(),
    ))
}

/// Mean over instances of |shapley_mc phi|. Instance `k` uses
/// `rng.fork(k)`.
#[allow(clippy::too_many_arguments)]
pub fn global_mean_abs_shapley(
    predictor: &dyn Predictor,
    space: &FeatureSpace,
    instances: &[Instance],
    background: &[Instance],
    budget: usize,
    output: usize,
    rng: &SeededRng,
) -> Result<GlobalImportance> {
    let start = Instant::now();
    if instances.is_empty() {
        return Err(Error::InvalidArgument("empty instance sample".into()));
    }
    let mut stats = vec![RunningStats::new(); space.len()];
    for (k, x) in instances.iter().enumerate() {
        let attr = shapley_mc(predictor, x, background, budget, &mut rng.fork(k as u64), output)?;
        for (s, phi) in stats.iter_mut().zip(&attr.phi) {
            s.push(phi.abs());
        }
    }
    Ok(from_stats(
        GlobalMethod::MeanAbsShapley,
        space.names(),
        &stats,
        vec![false; space.len()],
        instances.len(),
        start.elapsed(),
    ))
}

/// Permutation importance for one dataset, as a single-iteration result
/// (spread 0).
pub fn global_pfi(
    predictor: &dyn Predictor,
    dataset: &Dataset,
    loss: LossSpec,
    repeats: usize,
    rng: &SeededRng,
) -> Result<GlobalImportance> {
    let start = Instant::now();
    let raw = permutation_importance(predictor, dataset, loss, repeats, rng)?;
    let stats: Vec<RunningStats> = raw.iter().map(|&v| std::iter::once(v).collect()).collect();
    let method = match loss {
        LossSpec::Mae => GlobalMethod::PfiMae,
        LossSpec::ClassificationError => GlobalMethod::PfiCe,
    };
    Ok(from_stats(
        method,
        dataset.space.names(),
        &stats,
        vec![false; raw.len()],
        dataset.len(),
        start.elapsed(),
    ))
}

/// Mean of the per-iteration means, with the deviation across iterations
/// as spread. Elapsed times add up.
pub fn aggregate_iterations(runs: &[GlobalImportance]) -> Result<GlobalImportance> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no iterations to aggregate".into()))?;
    let n = first.mean.len();
    let mut stats = vec![RunningStats::new(); n];
    let mut degenerate = vec![true; n];
    for run in runs {
        if run.mean.len() != n || run.method != first.method {
            return Err(Error::InvalidArgument("iterations do not match".into()));
        }
        for i in 0..n {
            stats[i].push(run.mean[i]);
            degenerate[i] &= run.degenerate[i];
        }
    }
    Ok(GlobalImportance {
        method: first.method,
        names: first.names.clone(),
        mean: stats.iter().map(|s| s.mean()).collect(),
        spread: stats.iter().map(|s| s.sd()).collect(),
        std_error: stats.iter().map(|s| s.std_error()).collect(),
        degenerate,
        normalized: first.normalized,
        n_instances: first.n_instances,
        n_iterations: runs.len(),
        elapsed: runs.iter().map(|r| r.elapsed).sum(),
    })
}

/// Where the instances for each iteration come from.
#[derive(Debug, Clone, Copy)]
pub enum InstanceSource<'a> {
    /// Uniform over the feature box; targets for PFI are the predictor's
    /// own outputs.
    Uniform,
    /// Rows drawn without replacement; PFI uses the dataset's targets.
    Dataset(&'a Dataset),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalProtocol {
    pub iterations: usize,
    pub instances: usize,
    pub ciu_samples: usize,
    pub shapley_budget: usize,
    pub pfi_repeats: usize,
    pub background: usize,
    pub output: usize,
    pub normalize: bool,
}

impl Default for GlobalProtocol {
    fn default() -> Self {
        GlobalProtocol {
            iterations: 10,
            instances: 1000,
            ciu_samples: crate::ciu::DEFAULT_SAMPLES,
            shapley_budget: crate::baselines::DEFAULT_SHAPLEY_BUDGET,
            pfi_repeats: 1,
            background: 1000,
            output: 0,
            normalize: true,
        }
    }
}

/// Runs `protocol.iterations` iterations of `method` and aggregates them.
/// Iteration `t` draws everything from `SeededRng::new(seed).fork(t)`.
pub fn run_global(
    method: GlobalMethod,
    predictor: &dyn Predictor,
    utility: &OutputUtility,
    space: &FeatureSpace,
    source: InstanceSource<'_>,
    protocol: &GlobalProtocol,
    seed: u64,
) -> Result<GlobalImportance> {
    if protocol.iterations == 0 || protocol.instances == 0 {
        return Err(Error::InvalidArgument(
            "iterations and instances must be positive".into(),
        ));
    }
    let root = SeededRng::new(seed);
    let mut runs = Vec::with_capacity(protocol.iterations);
    for t in 0..protocol.iterations {
        let iter_rng = root.fork(t as u64);
        let mut draw = iter_rng.fork(0);
        let sample = match source {
            InstanceSource::Uniform => {
                let rows = space.sample_uniform_n(protocol.instances, &mut draw);
                synthetic_dataset(predictor, space, rows, method, protocol.output)?
            }
            InstanceSource::Dataset(d) => {
                let k = protocol.instances.min(d.len());
                let mut idx = index::sample(&mut draw, d.len(), k).into_vec();
                idx.sort_unstable();
                d.subset(&idx)
            }
        };
        let work = iter_rng.fork(1);
        let run = match method {
            GlobalMethod::Ci => global_ci(
                predictor,
                utility,
                space,
                &sample.rows,
                protocol.ciu_samples,
                protocol.output,
                &work,
            )?,
            GlobalMethod::PfiMae => global_pfi(predictor, &sample, LossSpec::Mae, protocol.pfi_repeats, &work)?,
            GlobalMethod::PfiCe => global_pfi(
                predictor,
                &sample,
                LossSpec::ClassificationError,
                protocol.pfi_repeats,
                &work,
            )?,
            GlobalMethod::MeanAbsShapley => {
                let mut bg_rng = iter_rng.fork(2);
                let background = match source {
                    InstanceSource::Uniform => space.sample_uniform_n(protocol.background, &mut bg_rng),
                    InstanceSource::Dataset(d) => {
                        let k = protocol.background.min(d.len());
                        let mut idx = index::sample(&mut bg_rng, d.len(), k).into_vec();
                        idx.sort_unstable();
                        idx.into_iter().map(|i| d.rows[i].clone()).collect()
                    }
                };
                global_mean_abs_shapley(
                    predictor,
                    space,
                    &sample.rows,
                    &background,
                    protocol.shapley_budget,
                    protocol.output,
                    &work,
                )?
            }
        };
        runs.push(if protocol.normalize { run.normalized()? } else { run });
    }
    aggregate_iterations(&runs)
}

/// Rows labelled by the predictor itself: real targets from `output` for
/// MAE, arg-max classes for classification error.
fn synthetic_dataset(
    predictor: &dyn Predictor,
    space: &FeatureSpace,
    rows: Vec<Instance>,
    method: GlobalMethod,
    output: usize,
) -> Result<Dataset> {
    let target = match method {
        GlobalMethod::PfiCe => {
            let m = predictor.evaluate(&rows)?;
            Target::Classes {
                levels: (0..m.ncols()).map(|c| c.to_string()).collect(),
                labels: (0..m.nrows())
                    .map(|r| crate::baselines::argmax(m.row(r).iter().copied()))
                    .collect(),
            }
        }
        GlobalMethod::PfiMae => Target::Real {
            values: predictor.evaluate_output(&rows, output)?,
        },
        _ => Target::Real {
            values: vec![0.0; rows.len()],
        },
    };
    Dataset::new(space.clone(), rows, "target", target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalise_examples() {
        assert_eq!(normalize_importances(&[2.0, 1.0, 1.0]).unwrap(), vec![0.5, 0.25, 0.25]);
        let v = normalize_importances(&[0.4, 0.3, 0.2, 0.1]).unwrap();
        for (a, b) in v.iter().zip([0.4, 0.3, 0.2, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(normalize_importances(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn method_names() {
        for m in ["ci", "pfi-mae", "pfi-ce", "mean-abs-shapley"] {
            assert_eq!(m.parse::<GlobalMethod>().unwrap().tag(), m);
        }
        assert!(matches!("gini".parse::<GlobalMethod>(), Err(Error::UnknownMethod(_))));
    }
}
