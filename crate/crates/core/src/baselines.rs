//! Reference explainers: permutation feature importance, Monte-Carlo
//! Shapley values and a LIME-style weighted linear surrogate.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ciu::Explanation;
use crate::error::{Error, Result};
use crate::model::{FeatureKind, FeatureSpace, Instance, Predictor};
use crate::sampling::SeededRng;
use crate::tabular::{Dataset, Target};

/// Default permutations for [`shapley_mc`].
pub const DEFAULT_SHAPLEY_BUDGET: usize = 200;
/// Default perturbations for [`lime_surrogate`].
pub const DEFAULT_LIME_SAMPLES: usize = 1000;
pub const DEFAULT_RIDGE: f64 = 1e-3;
/// Enumeration cap for [`shapley_enumerate`].
pub const MAX_ENUMERATED_FEATURES: usize = 12;

const SHAPLEY_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionMethod {
    ContextualInfluence,
    ShapleyMc,
    LimeSurrogate,
}

impl AttributionMethod {
    pub const ALL: [AttributionMethod; 3] = [
        AttributionMethod::ContextualInfluence,
        AttributionMethod::ShapleyMc,
        AttributionMethod::LimeSurrogate,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            AttributionMethod::ContextualInfluence => "contextual-influence",
            AttributionMethod::ShapleyMc => "shapley-mc",
            AttributionMethod::LimeSurrogate => "lime-surrogate",
        }
    }
}

impl fmt::Display for AttributionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AttributionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contextual-influence" | "ciu" => Ok(AttributionMethod::ContextualInfluence),
            "shapley-mc" | "shapley" => Ok(AttributionMethod::ShapleyMc),
            "lime-surrogate" | "lime" => Ok(AttributionMethod::LimeSurrogate),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// Additive attribution: `f(x) ≈ phi0 + Σ phi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionVector {
    pub method: AttributionMethod,
    pub phi: Vec<f64>,
    /// Intercept (baseline) of the additive model.
    pub phi0: f64,
    /// Per-feature standard error, when the estimator provides one.
    pub std_err: Option<Vec<f64>>,
    pub output: usize,
    pub samples: usize,
    pub seed: u64,
    pub y: f64,
    pub elapsed: Duration,
}

impl AttributionVector {
    pub fn to_json(&self, names: &[String]) -> Value {
        let features: Vec<Value> = names
            .iter()
            .zip(&self.phi)
            .enumerate()
            .map(|(i, (name, phi))| {
                let mut f = json!({ "name": name, "phi": phi });
                if let Some(se) = &self.std_err {
                    f["std_err"] = json!(se[i]);
                }
                f
            })
            .collect();
        json!({
            "method": self.method.tag(),
            "output": self.output,
            "phi0": self.phi0,
            "seed": self.seed,
            "samples": self.samples,
            "y": self.y,
            "features": features,
        })
    }
}

impl From<&Explanation> for AttributionVector {
    fn from(e: &Explanation) -> Self {
        AttributionVector {
            method: AttributionMethod::ContextualInfluence,
            phi: e.influence(),
            phi0: e.phi0,
            std_err: None,
            output: e.output,
            samples: e.samples,
            seed: e.seed,
            y: e.y,
            elapsed: e.elapsed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossSpec {
    /// Mean absolute error of output 0 against a real target.
    Mae,
    /// Share of rows whose arg-max output differs from the class label.
    ClassificationError,
}

fn loss(loss: LossSpec, predictions: &DMatrix<f64>, target: &Target) -> Result<f64> {
    let n = predictions.nrows() as f64;
    match (loss, target) {
        (LossSpec::Mae, Target::Real { values }) => Ok(values
            .iter()
            .enumerate()
            .map(|(r, t)| (predictions[(r, 0)] - t).abs())
            .sum::<f64>()
            / n),
        (LossSpec::ClassificationError, Target::Classes { levels, labels }) => {
            if predictions.ncols() != levels.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} class labels but {} outputs",
                    levels.len(),
                    predictions.ncols()
                )));
            }
            let wrong = labels
                .iter()
                .enumerate()
                .filter(|(r, &label)| argmax(predictions.row(*r).iter().copied()) != label)
                .count();
            Ok(wrong as f64 / n)
        }
        (LossSpec::Mae, Target::Classes { .. }) => Err(Error::InvalidArgument(
            "MAE loss needs a real-valued target".into(),
        )),
        (LossSpec::ClassificationError, Target::Real { .. }) => Err(Error::InvalidArgument(
            "classification error needs a class-label target".into(),
        )),
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Raw permutation importance: for each feature, the mean over `repeats`
/// shuffles of that column of `loss(permuted) − loss(original)`.
///
/// Feature `i` shuffles with `rng.fork(i)`.
pub fn permutation_importance(
    predictor: &dyn Predictor,
    dataset: &Dataset,
    loss_spec: LossSpec,
    repeats: usize,
    rng: &SeededRng,
) -> Result<Vec<f64>> {
    if dataset.len() < 2 {
        return Err(Error::InvalidArgument(
            "permutation undefined for fewer than two rows".into(),
        ));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let base = loss(loss_spec, &predictor.evaluate(&dataset.rows)?, &dataset.target)?;
    let n_features = dataset.space.len();
    let mut importance = Vec::with_capacity(n_features);
    for i in 0..n_features {
        let mut sub = rng.fork(i as u64);
        let column: Vec<f64> = dataset.rows.iter().map(|x| x.get(i)).collect();
        let mut total = 0.0;
        for _ in 0..repeats {
            let mut shuffled = column.clone();
            shuffled.shuffle(&mut sub);
            let rows: Vec<Instance> = dataset
                .rows
                .iter()
                .zip(&shuffled)
                .map(|(x, &v)| x.with_value(i, v))
                .collect();
            total += loss(loss_spec, &predictor.evaluate(&rows)?, &dataset.target)? - base;
        }
        importance.push(total / repeats as f64);
    }
    Ok(importance)
}

/// Permutation-sampling Shapley estimate for output `output`.
///
/// Each sample draws a feature order and a background row `z`, then walks
/// from `z` to `x` switching one feature at a time in that order; the
/// change in output at each switch is that feature's marginal contribution.
/// `budget` is the number of sampled orders. The intercept is the mean
/// prediction over the whole background.
pub fn shapley_mc(
    predictor: &dyn Predictor,
    x: &Instance,
    background: &[Instance],
    budget: usize,
    rng: &mut SeededRng,
    output: usize,
) -> Result<AttributionVector> {
    let start = Instant::now();
    if background.is_empty() {
        return Err(Error::InvalidArgument("empty background".into()));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let n = x.len();
    if let Some(bad) = background.iter().find(|z| z.len() != n) {
        return Err(Error::InvalidInstance(format!(
            "background row has {} values, instance has {n}",
            bad.len()
        )));
    }
    let seed = rng.seed();

    let mut count = 0usize;
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut remaining = budget;
    while remaining > 0 {
        let chunk = remaining.min(SHAPLEY_CHUNK);
        remaining -= chunk;
        let mut orders = Vec::with_capacity(chunk);
        let mut batch = Vec::with_capacity(chunk * (n + 1));
        for _ in 0..chunk {
            order.shuffle(rng);
            let mut current = background[rng.gen_range(0..background.len())].clone();
            batch.push(current.clone());
            for &k in &order {
                current.set(k, x.get(k));
                batch.push(current.clone());
            }
            orders.push(order.clone());
        }
        let ys = predictor.evaluate_output(&batch, output)?;
        for (s, ord) in orders.iter().enumerate() {
            count += 1;
            let chain = &ys[s * (n + 1)..(s + 1) * (n + 1)];
            for (step, &k) in ord.iter().enumerate() {
                let marginal = chain[step + 1] - chain[step];
                let delta = marginal - mean[k];
                mean[k] += delta / count as f64;
                m2[k] += delta * (marginal - mean[k]);
            }
        }
    }

    let std_err = m2
        .iter()
        .map(|&s| {
            if count > 1 {
                (s / (count - 1) as f64 / count as f64).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    let bg = predictor.evaluate_output(background, output)?;
    let phi0 = bg.iter().sum::<f64>() / bg.len() as f64;
    let y = predictor.evaluate_output(std::slice::from_ref(x), output)?[0];
    Ok(AttributionVector {
        method: AttributionMethod::ShapleyMc,
        phi: mean,
        phi0,
        std_err: Some(std_err),
        output,
        samples: budget,
        seed,
        y,
        elapsed: start.elapsed(),
    })
}

/// Exact Shapley values with value function
/// `v(S) = mean_z f(x_S, z_rest)` over `background`, by enumerating all
/// `2^N` coalitions. Limited to [`MAX_ENUMERATED_FEATURES`] features.
pub fn shapley_enumerate(
    predictor: &dyn Predictor,
    x: &Instance,
    background: &[Instance],
    output: usize,
) -> Result<Vec<f64>> {
    let n = x.len();
    if n > MAX_ENUMERATED_FEATURES {
        return Err(Error::InvalidArgument(format!(
            "enumeration is limited to {MAX_ENUMERATED_FEATURES} features, got {n}"
        )));
    }
    if background.is_empty() {
        return Err(Error::InvalidArgument("empty background".into()));
    }
    let coalitions = 1usize << n;
    let mut value = vec![0.0; coalitions];
    for (mask, v) in value.iter_mut().enumerate() {
        let batch: Vec<Instance> = background
            .iter()
            .map(|z| {
                Instance::new(
                    (0..n)
                        .map(|k| if mask & (1 << k) != 0 { x.get(k) } else { z.get(k) })
                        .collect(),
                )
            })
            .collect();
        let ys = predictor.evaluate_output(&batch, output)?;
        *v = ys.iter().sum::<f64>() / ys.len() as f64;
    }
    let factorial = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let weight: Vec<f64> = (0..n)
        .map(|size| factorial(size) * factorial(n - size - 1) / factorial(n))
        .collect();
    Ok((0..n)
        .map(|i| {
            (0..coalitions)
                .filter(|mask| mask & (1 << i) == 0)
                .map(|mask| weight[mask.count_ones() as usize] * (value[mask | (1 << i)] - value[mask]))
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Gaussian kernel width in normalised space; `0.75·√N` when `None`.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: DEFAULT_LIME_SAMPLES,
            kernel_width: None,
            ridge: DEFAULT_RIDGE,
        }
    }
}

/// Fitted surrogate: coefficients on normalised features (intercept
/// first), the instance in normalised space and the mean of each normalised
/// feature over the perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct LimeFit {
    pub coef: Vec<f64>,
    pub x_norm: Vec<f64>,
    pub centre: Vec<f64>,
}

/// Local weighted linear surrogate.
///
/// Perturbations are drawn uniformly over the feature box. Numeric features
/// are min-max normalised; a categorical feature becomes an indicator of
/// "same level as `x`". Each draw is weighted by `exp(-d²/w²)` with `d` the
/// Euclidean distance to `x` in that space, and a ridge-penalised weighted
/// least-squares fit (intercept unpenalised) gives the coefficients.
pub fn lime_fit(
    predictor: &dyn Predictor,
    space: &FeatureSpace,
    x: &Instance,
    config: &LimeConfig,
    rng: &mut SeededRng,
    output: usize,
) -> Result<LimeFit> {
    let n = space.len();
    space.check(x)?;
    if config.n_samples < 2 * n {
        return Err(Error::InvalidArgument(format!(
            "LIME needs at least {} samples for {n} features, got {}",
            2 * n,
            config.n_samples
        )));
    }
    let width = config.kernel_width.unwrap_or(0.75 * (n as f64).sqrt());
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidArgument(format!("kernel width must be positive, got {width}")));
    }
    if !(config.ridge >= 0.0) {
        return Err(Error::InvalidArgument("ridge penalty must be non-negative".into()));
    }

    let normalise = |z: &Instance| -> Vec<f64> {
        space
            .features()
            .iter()
            .enumerate()
            .map(|(i, spec)| match &spec.kind {
                FeatureKind::Numeric { min, max } => (z.get(i) - min) / (max - min),
                FeatureKind::Categorical { .. } => {
                    if z.get(i) == x.get(i) {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    };

    let draws = space.sample_uniform_n(config.n_samples, rng);
    let ys = predictor.evaluate_output(&draws, output)?;
    let x_norm = normalise(x);

    let m = config.n_samples;
    let mut design = DMatrix::zeros(m, n + 1);
    let mut weights = DVector::zeros(m);
    let mut centre = vec![0.0; n];
    for (r, z) in draws.iter().enumerate() {
        let zn = normalise(z);
        design[(r, 0)] = 1.0;
        let mut d2 = 0.0;
        for k in 0..n {
            design[(r, k + 1)] = zn[k];
            centre[k] += zn[k];
            d2 += (zn[k] - x_norm[k]).powi(2);
        }
        weights[r] = (-d2 / (width * width)).exp();
    }
    centre.iter_mut().for_each(|c| *c /= m as f64);

    let weighted = DMatrix::from_fn(m, n + 1, |r, c| design[(r, c)] * weights[r]);
    let mut gram = design.transpose() * &weighted;
    for k in 1..=n {
        gram[(k, k)] += config.ridge;
    }
    let rhs = weighted.transpose() * DVector::from_vec(ys);
    let coef = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Singular(format!("{0}x{0} normal equations", n + 1)))?;
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Singular("non-finite coefficients".into()));
    }
    Ok(LimeFit {
        coef: coef.iter().copied().collect(),
        x_norm,
        centre,
    })
}

/// LIME-style attribution: `phi_i = coef_i · (x_norm_i − centre_i)`, with
/// the surrogate's value at the centre as intercept.
pub fn lime_surrogate(
    predictor: &dyn Predictor,
    space: &FeatureSpace,
    x: &Instance,
    config: &LimeConfig,
    rng: &mut SeededRng,
    output: usize,
) -> Result<AttributionVector> {
    let start = Instant::now();
    let seed = rng.seed();
    let fit = lime_fit(predictor, space, x, config, rng, output)?;
    let n = space.len();
    let phi: Vec<f64> = (0..n)
        .map(|k| fit.coef[k + 1] * (fit.x_norm[k] - fit.centre[k]))
        .collect();
    let phi0 = fit.coef[0] + (0..n).map(|k| fit.coef[k + 1] * fit.centre[k]).sum::<f64>();
    let y = predictor.evaluate_output(std::slice::from_ref(x), output)?[0];
    Ok(AttributionVector {
        method: AttributionMethod::LimeSurrogate,
        phi,
        phi0,
        std_err: None,
        output,
        samples: config.n_samples,
        seed,
        y,
        elapsed: start.elapsed(),
    })
}
