//! Repeated-run stability of attribution methods on one instance.
//!
//! Every method is run `runs` times with seeds derived from the base seed and
//! the run index; the distribution of each feature's attribution and the
//! wall-clock time per run are recorded.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baselines::{lime_surrogate, shapley_mc, AttributionMethod, AttributionVector, LimeConfig};
use crate::ciu::{CiuExplainer, DEFAULT_PHI0, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::model::{FeatureSpace, Instance, OutputUtility, Predictor};
use crate::report::{mean_sd_cell, SummaryTable};
use crate::sampling::{derive_seed, SeededRng};
use crate::stats::{BoxStats, RunningStats};

/// Sample budgets per method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub ciu_samples: usize,
    pub shapley_budget: usize,
    pub lime_samples: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            ciu_samples: DEFAULT_SAMPLES,
            shapley_budget: crate::baselines::DEFAULT_SHAPLEY_BUDGET,
            lime_samples: crate::baselines::DEFAULT_LIME_SAMPLES,
        }
    }
}

impl Budgets {
    /// The same sample count for every method.
    pub fn matched(n: usize) -> Self {
        Budgets {
            ciu_samples: n,
            shapley_budget: n,
            lime_samples: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub methods: Vec<AttributionMethod>,
    pub runs: usize,
    pub budgets: Budgets,
    pub seed: u64,
    pub output: usize,
    pub phi0: f64,
    /// Run in parallel. Elapsed times are then not comparable between
    /// methods and the report says so.
    pub parallel: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            methods: AttributionMethod::ALL.to_vec(),
            runs: 50,
            budgets: Budgets::default(),
            seed: 42,
            output: 0,
            phi0: DEFAULT_PHI0,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub method: AttributionMethod,
    pub names: Vec<String>,
    /// `values[i][r]`: feature `i`, run `r`.
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub elapsed: Vec<Duration>,
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub budgets: Budgets,
    pub timing_comparable: bool,
}

impl StabilityReport {
    pub fn runs(&self) -> usize {
        self.seeds.len()
    }

    pub fn box_stats(&self) -> Vec<BoxStats> {
        self.values
            .iter()
            .map(|v| BoxStats::of(v).expect("at least two runs"))
            .collect()
    }

    pub fn total_elapsed(&self) -> Duration {
        self.elapsed.iter().sum()
    }

    /// Run values with the seed/budget snapshot; no timing.
    pub fn to_json(&self) -> Value {
        let features: Vec<Value> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let b = BoxStats::of(&self.values[i]).expect("at least two runs");
                json!({
                    "name": name,
                    "mean": self.mean[i],
                    "sd": self.sd[i],
                    "box": b,
                    "values": self.values[i],
                })
            })
            .collect();
        json!({
            "method": self.method.tag(),
            "runs": self.runs(),
            "seed": self.base_seed,
            "run_seeds": self.seeds,
            "budgets": self.budgets,
            "features": features,
        })
    }

    pub fn timing_json(&self) -> Value {
        json!({
            "method": self.method.tag(),
            "timing_comparable": self.timing_comparable,
            "total_seconds": self.total_elapsed().as_secs_f64(),
            "run_seconds": self.elapsed.iter().map(|d| d.as_secs_f64()).collect::<Vec<_>>(),
        })
    }

    /// `method,run,seed,<feature...>`, one line per run.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string(), "run".into(), "seed".into()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.runs() {
            let mut row = vec![self.method.tag().to_string(), r.to_string(), self.seeds[r].to_string()];
            row.extend(self.values.iter().map(|v| format!("{}", v[r])));
            w.write_record(&row)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Runs every configured method `config.runs` times on `x`. Run `r` of
/// every method uses seed `derive_seed(config.seed, r)`. `background` feeds
/// the Shapley estimator and is shared by all runs.
pub fn run_stability(
    predictor: &dyn Predictor,
    utility: &OutputUtility,
    space: &FeatureSpace,
    x: &Instance,
    background: &[Instance],
    config: &StabilityConfig,
) -> Result<Vec<StabilityReport>> {
    if config.runs < 2 {
        return Err(Error::InvalidArgument(format!(
            "stability needs at least 2 runs, got {}",
            config.runs
        )));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    space.check(x)?;
    let root = SeededRng::new(config.seed);
    let explainer = if config.methods.contains(&AttributionMethod::ContextualInfluence) {
        Some(
            CiuExplainer::new(predictor, space, utility, config.output, &root)?
                .samples(config.budgets.ciu_samples)
                .phi0(config.phi0),
        )
    } else {
        None
    };
    let lime = LimeConfig {
        n_samples: config.budgets.lime_samples,
        ..LimeConfig::default()
    };
    let seeds: Vec<u64> = (0..config.runs as u64).map(|r| derive_seed(config.seed, r)).collect();

    let one_run = |method: AttributionMethod, seed: u64| -> Result<(AttributionVector, Duration)> {
        let start = Instant::now();
        let mut rng = SeededRng::new(seed);
        let attr = match method {
            AttributionMethod::ContextualInfluence => {
                AttributionVector::from(&explainer.as_ref().expect("explainer built").explain(x, &rng)?)
            }
            AttributionMethod::ShapleyMc => shapley_mc(
                predictor,
                x,
                background,
                config.budgets.shapley_budget,
                &mut rng,
                config.output,
            )?,
            AttributionMethod::LimeSurrogate => lime_surrogate(predictor, space, x, &lime, &mut rng, config.output)?,
        };
        Ok((attr, start.elapsed()))
    };

    let mut reports = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let results: Vec<(AttributionVector, Duration)> = if config.parallel {
            seeds.par_iter().map(|&s| one_run(method, s)).collect::<Result<_>>()?
        } else {
            seeds.iter().map(|&s| one_run(method, s)).collect::<Result<_>>()?
        };
        let n = space.len();
        let values: Vec<Vec<f64>> = (0..n)
            .map(|i| results.iter().map(|(a, _)| a.phi[i]).collect())
            .collect();
        let stats: Vec<RunningStats> = values.iter().map(|v| v.iter().copied().collect()).collect();
        reports.push(StabilityReport {
            method,
            names: space.names(),
            mean: stats.iter().map(|s| s.mean()).collect(),
            sd: stats.iter().map(|s| s.sd()).collect(),
            values,
            elapsed: results.iter().map(|(_, d)| *d).collect(),
            seeds: seeds.clone(),
            base_seed: config.seed,
            budgets: config.budgets,
            timing_comparable: !config.parallel,
        });
    }
    Ok(reports)
}

/// Feature rows of `mean±sd` per method, with an elapsed row when
/// `elapsed` is set.
pub fn summarize(reports: &[StabilityReport], elapsed: bool) -> Result<SummaryTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to summarise".into()))?;
    if first.names.is_empty() {
        return Err(Error::InvalidArgument("empty feature list".into()));
    }
    let mut header = vec!["Feature".to_string()];
    header.extend(reports.iter().map(|r| r.method.tag().to_string()));
    let mut rows: Vec<Vec<String>> = first
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut row = vec![name.clone()];
            row.extend(reports.iter().map(|r| mean_sd_cell(r.mean[i], r.sd[i])));
            row
        })
        .collect();
    if elapsed {
        let mut row = vec!["Elapsed".to_string()];
        row.extend(
            reports
                .iter()
                .map(|r| format!("{:.3}s", r.total_elapsed().as_secs_f64())),
        );
        rows.push(row);
    }
    Ok(SummaryTable { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{linear_reference_predictor, OutputSpec};

    #[test]
    fn single_run_is_rejected() {
        let space = FeatureSpace::unit_box(4).unwrap();
        let utility = OutputUtility::new(vec![OutputSpec::declared("y", 0.0, 1.0)]).unwrap();
        let config = StabilityConfig {
            runs: 1,
            ..Default::default()
        };
        let err = run_stability(
            &linear_reference_predictor(),
            &utility,
            &space,
            &Instance::new(vec![0.5; 4]),
            &[Instance::new(vec![0.5; 4])],
            &config,
        )
        .unwrap_err();
        assert!(err.is_usage());
    }

    #[test]
    fn summary_of_zero_variance() {
        let report = StabilityReport {
            method: AttributionMethod::ContextualInfluence,
            names: vec!["x1".into()],
            values: vec![vec![0.4, 0.4]],
            mean: vec![0.4],
            sd: vec![0.0],
            elapsed: vec![Duration::ZERO; 2],
            seeds: vec![1, 2],
            base_seed: 0,
            budgets: Budgets::default(),
            timing_comparable: true,
        };
        let t = summarize(std::slice::from_ref(&report), false).unwrap();
        assert_eq!(t.rows, vec![vec!["x1".to_string(), "0.400±0.000".to_string()]]);
        let empty = StabilityReport {
            names: vec![],
            values: vec![],
            mean: vec![],
            sd: vec![],
            ..report
        };
        assert!(summarize(&[empty], false).is_err());
    }
}
