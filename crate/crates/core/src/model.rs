//! Feature spaces, instances, the black-box predictor contract and output
//! utilities.
//!
//! Instances are stored as plain `f64` vectors aligned with the feature
//! space. Categorical slots hold the level index (0-based) as a float; use
//! [`FeatureSpace::encode_json`] and [`FeatureSpace::decode_json`] to move
//! between labels and the encoded form.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::sampling::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric { min: f64, max: f64 },
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>, min: f64, max: f64) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Numeric { min, max },
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: Vec<S>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FeatureKind::Numeric { .. })
    }

    /// Numeric bounds, or `None` for categorical features.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Numeric { min, max } => Some((min, max)),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Numeric { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            FeatureKind::Numeric { min, max } => {
                if !min.is_finite() || !max.is_finite() {
                    return Err(Error::InvalidFeatureSpace(format!(
                        "feature '{}' has non-finite bounds",
                        self.name
                    )));
                }
                if min >= max {
                    return Err(Error::InvalidFeatureSpace(format!(
                        "feature '{}' needs min < max, got [{min}, {max}]",
                        self.name
                    )));
                }
            }
            FeatureKind::Categorical { levels } => {
                if levels.is_empty() {
                    return Err(Error::InvalidFeatureSpace(format!(
                        "feature '{}' has no levels",
                        self.name
                    )));
                }
                let mut seen = HashSet::new();
                for level in levels {
                    if !seen.insert(level.as_str()) {
                        return Err(Error::InvalidFeatureSpace(format!(
                            "feature '{}' repeats level '{level}'",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ordered feature declarations. Index order is the instance layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSpace {
    features: Vec<FeatureSpec>,
}

impl<'de> Deserialize<'de> for FeatureSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            features: Vec<FeatureSpec>,
        }
        let raw = Raw::deserialize(d)?;
        FeatureSpace::new(raw.features).map_err(serde::de::Error::custom)
    }
}

impl FeatureSpace {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidFeatureSpace("no features declared".into()));
        }
        let mut names = HashSet::new();
        for f in &features {
            f.validate()?;
            if !names.insert(f.name.as_str()) {
                return Err(Error::InvalidFeatureSpace(format!(
                    "duplicate feature name '{}'",
                    f.name
                )));
            }
        }
        Ok(FeatureSpace { features })
    }

    /// `n` numeric features named `x1..xn`, each over `[0, 1]`.
    pub fn unit_box(n: usize) -> Result<Self> {
        FeatureSpace::new(
            (1..=n)
                .map(|i| FeatureSpec::numeric(format!("x{i}"), 0.0, 1.0))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> Result<&FeatureSpec> {
        self.features.get(index).ok_or(Error::FeatureIndex {
            index,
            count: self.features.len(),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// Validates an instance against the space and returns the indices of
    /// numeric values that fall outside the declared bounds. Such values are
    /// accepted; only a wrong length, a non-finite value or an unknown level
    /// is an error.
    pub fn check(&self, x: &Instance) -> Result<Vec<usize>> {
        if x.len() != self.len() {
            return Err(Error::InvalidInstance(format!(
                "expected {} values, got {}",
                self.len(),
                x.len()
            )));
        }
        let mut out_of_range = Vec::new();
        for (i, (spec, &v)) in self.features.iter().zip(x.values()).enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "feature '{}' is not finite",
                    spec.name
                )));
            }
            match &spec.kind {
                FeatureKind::Numeric { min, max } => {
                    if v < *min || v > *max {
                        out_of_range.push(i);
                    }
                }
                FeatureKind::Categorical { levels } => {
                    if v.fract() != 0.0 || v < 0.0 || v as usize >= levels.len() {
                        return Err(Error::InvalidInstance(format!(
                            "feature '{}' has invalid level index {v}",
                            spec.name
                        )));
                    }
                }
            }
        }
        Ok(out_of_range)
    }

    /// Encodes a JSON array (positional) or object (by feature name) into an
    /// instance. Categorical values are given as labels.
    pub fn encode_json(&self, value: &Value) -> Result<Instance> {
        let slots: Vec<&Value> = match value {
            Value::Array(items) => items.iter().collect(),
            Value::Object(map) => {
                let mut slots = Vec::with_capacity(self.len());
                for f in &self.features {
                    slots.push(map.get(&f.name).ok_or_else(|| {
                        Error::InvalidInstance(format!("missing value for '{}'", f.name))
                    })?);
                }
                if map.len() != self.len() {
                    let unknown = map
                        .keys()
                        .find(|k| self.index_of(k).is_err())
                        .cloned()
                        .unwrap_or_default();
                    return Err(Error::UnknownFeature(unknown));
                }
                slots
            }
            _ => {
                return Err(Error::InvalidInstance(
                    "instance must be a JSON array or object".into(),
                ))
            }
        };
        if slots.len() != self.len() {
            return Err(Error::InvalidInstance(format!(
                "expected {} values, got {}",
                self.len(),
                slots.len()
            )));
        }
        let mut values = Vec::with_capacity(self.len());
        for (spec, slot) in self.features.iter().zip(slots) {
            values.push(self.encode_value(spec, slot)?);
        }
        let x = Instance::new(values);
        self.check(&x)?;
        Ok(x)
    }

    fn encode_value(&self, spec: &FeatureSpec, slot: &Value) -> Result<f64> {
        match &spec.kind {
            FeatureKind::Numeric { .. } => match slot {
                Value::Number(n) => n.as_f64().ok_or_else(|| {
                    Error::InvalidInstance(format!("bad number for '{}'", spec.name))
                }),
                Value::String(s) => s.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidInstance(format!("'{s}' is not a number for '{}'", spec.name))
                }),
                _ => Err(Error::InvalidInstance(format!(
                    "numeric value expected for '{}'",
                    spec.name
                ))),
            },
            FeatureKind::Categorical { levels } => {
                let label = match slot {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    Value::Bool(b) => b.to_string(),
                    _ => {
                        return Err(Error::InvalidInstance(format!(
                            "label expected for '{}'",
                            spec.name
                        )))
                    }
                };
                levels
                    .iter()
                    .position(|l| *l == label)
                    .map(|p| p as f64)
                    .ok_or_else(|| {
                        Error::InvalidInstance(format!(
                            "'{label}' is not a level of '{}'",
                            spec.name
                        ))
                    })
            }
        }
    }

    /// Inverse of [`FeatureSpace::encode_json`]: a JSON array with numbers
    /// for numeric slots and labels for categorical ones.
    pub fn decode_json(&self, x: &Instance) -> Value {
        Value::Array(
            self.features
                .iter()
                .zip(x.values())
                .map(|(spec, &v)| match &spec.kind {
                    FeatureKind::Numeric { .. } => serde_json::json!(v),
                    FeatureKind::Categorical { levels } => levels
                        .get(v as usize)
                        .map(|l| Value::String(l.clone()))
                        .unwrap_or(Value::Null),
                })
                .collect(),
        )
    }

    /// Human-readable rendering of one slot ("0.63" or "male").
    pub fn format_value(&self, index: usize, v: f64) -> String {
        match self.features.get(index).map(|f| &f.kind) {
            Some(FeatureKind::Categorical { levels }) => levels
                .get(v as usize)
                .cloned()
                .unwrap_or_else(|| format!("#{v}")),
            _ => format!("{}", (v * 1000.0).round() / 1000.0),
        }
    }

    /// One instance drawn uniformly over the feature box (categorical:
    /// uniform over levels).
    pub fn sample_uniform(&self, rng: &mut SeededRng) -> Instance {
        Instance::new(
            self.features
                .iter()
                .map(|f| match &f.kind {
                    FeatureKind::Numeric { min, max } => rng.gen_range(*min..=*max),
                    FeatureKind::Categorical { levels } => rng.gen_range(0..levels.len()) as f64,
                })
                .collect(),
        )
    }

    pub fn sample_uniform_n(&self, n: usize, rng: &mut SeededRng) -> Vec<Instance> {
        (0..n).map(|_| self.sample_uniform(rng)).collect()
    }
}

/// Values aligned with a [`FeatureSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instance(Vec<f64>);

impl Instance {
    pub fn new(values: Vec<f64>) -> Self {
        Instance(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    /// Copy of `self` with slot `index` replaced.
    pub fn with_value(&self, index: usize, value: f64) -> Instance {
        let mut values = self.0.clone();
        values[index] = value;
        Instance(values)
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.0[index] = value;
    }
}

impl From<Vec<f64>> for Instance {
    fn from(values: Vec<f64>) -> Self {
        Instance(values)
    }
}

/// Black-box batch evaluation.
///
/// `evaluate` returns an `n_instances × n_outputs` matrix. Implementations
/// must be deterministic and side-effect free; the same batch always gives
/// the same matrix, and evaluating instances one at a time must agree with
/// evaluating them together.
pub trait Predictor: Send + Sync {
    fn n_outputs(&self) -> usize;

    fn evaluate(&self, batch: &[Instance]) -> Result<DMatrix<f64>>;

    /// Column `output` of [`Predictor::evaluate`].
    fn evaluate_output(&self, batch: &[Instance], output: usize) -> Result<Vec<f64>> {
        let count = self.n_outputs();
        if output >= count {
            return Err(Error::OutputIndex {
                index: output,
                count,
            });
        }
        let m = self.evaluate(batch)?;
        if m.nrows() != batch.len() || m.ncols() != count {
            return Err(Error::Predictor(format!(
                "expected {}x{} predictions, got {}x{}",
                batch.len(),
                count,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m.column(output).iter().copied().collect())
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn n_outputs(&self) -> usize {
        (**self).n_outputs()
    }

    fn evaluate(&self, batch: &[Instance]) -> Result<DMatrix<f64>> {
        (**self).evaluate(batch)
    }
}

impl<P: Predictor + ?Sized> Predictor for std::sync::Arc<P> {
    fn n_outputs(&self) -> usize {
        (**self).n_outputs()
    }

    fn evaluate(&self, batch: &[Instance]) -> Result<DMatrix<f64>> {
        (**self).evaluate(batch)
    }
}

fn check_width(x: &Instance, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::Predictor(format!(
            "expected {n} features, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// `f(x) = intercept + Σ w_i x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearPredictor {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        LinearPredictor { weights, intercept }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (w, v)| acc + w * v)
    }
}

impl Predictor for LinearPredictor {
    fn n_outputs(&self) -> usize {
        1
    }

    fn evaluate(&self, batch: &[Instance]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(batch.len(), 1);
        for (r, x) in batch.iter().enumerate() {
            check_width(x, self.weights.len())?;
            out[(r, 0)] = self.value(x.values());
        }
        Ok(out)
    }
}

/// `f(x) = 0.4x1 + 0.3x2 + 0.2x3 + 0.1x4` over `[0,1]^4`.
pub fn linear_reference_predictor() -> LinearPredictor {
    LinearPredictor::new(vec![0.4, 0.3, 0.2, 0.1], 0.0)
}

/// `f(x) = 0.7x1 sin(10x1) + 0.3x2 sin(10x2) + x3² + (2x4⁴ − 1.5x4²)` over
/// `[0,1]^4`. Additively separable.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonlinearReference;

impl NonlinearReference {
    pub fn value(x: &[f64]) -> f64 {
        let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
        0.7 * x1 * (10.0 * x1).sin()
            + 0.3 * x2 * (10.0 * x2).sin()
            + x3 * x3
            + (2.0 * x4.powi(4) - 1.5 * x4 * x4)
    }
}

impl Predictor for NonlinearReference {
    fn n_outputs(&self) -> usize {
        1
    }

    fn evaluate(&self, batch: &[Instance]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(batch.len(), 1);
        for (r, x) in batch.iter().enumerate() {
            check_width(x, 4)?;
            out[(r, 0)] = Self::value(x.values());
        }
        Ok(out)
    }
}

pub fn nonlinear_reference_predictor() -> NonlinearReference {
    NonlinearReference
}

/// Single-output predictor backed by a closure over the encoded values.
pub struct FnPredictor<F> {
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnPredictor { f }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn n_outputs(&self) -> usize {
        1
    }

    fn evaluate(&self, batch: &[Instance]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_iterator(
            batch.len(),
            1,
            batch.iter().map(|x| (self.f)(x.values())),
        ))
    }
}

/// Affine utility `u(y) = A·y + b` for one output, with the joint output
/// range over all features when it is known up front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub name: String,
    #[serde(rename = "A", default = "one")]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl OutputSpec {
    /// Identity utility over a declared range.
    pub fn declared(name: impl Into<String>, min: f64, max: f64) -> Self {
        OutputSpec {
            name: name.into(),
            a: 1.0,
            b: 0.0,
            min: Some(min),
            max: Some(max),
        }
    }

    /// Identity utility whose range must be estimated.
    pub fn undeclared(name: impl Into<String>) -> Self {
        OutputSpec {
            name: name.into(),
            a: 1.0,
            b: 0.0,
            min: None,
            max: None,
        }
    }

    pub fn declared_range(&self) -> Option<(f64, f64)> {
        self.min.zip(self.max)
    }

    pub fn utility(&self, y: f64) -> f64 {
        self.a * y + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputUtility {
    pub outputs: Vec<OutputSpec>,
}

impl OutputUtility {
    pub fn new(outputs: Vec<OutputSpec>) -> Result<Self> {
        let u = OutputUtility { outputs };
        u.validate()?;
        Ok(u)
    }

    /// Per-class probabilities: `u(y) = y` over `[0, 1]`.
    pub fn probabilities<S: AsRef<str>>(classes: &[S]) -> Self {
        OutputUtility {
            outputs: classes
                .iter()
                .map(|c| OutputSpec::declared(c.as_ref(), 0.0, 1.0))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(Error::InvalidArgument("no outputs declared".into()));
        }
        for o in &self.outputs {
            if !o.a.is_finite() || o.a == 0.0 || !o.b.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "output '{}' needs finite A != 0 and finite b",
                    o.name
                )));
            }
            match (o.min, o.max) {
                (Some(lo), Some(hi)) if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                    return Err(Error::DegenerateRange(format!(
                        "output '{}' declares [{lo}, {hi}]",
                        o.name
                    )))
                }
                (Some(_), None) | (None, Some(_)) => {
                    return Err(Error::InvalidArgument(format!(
                        "output '{}' declares only one range bound",
                        o.name
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn output(&self, index: usize) -> Result<&OutputSpec> {
        self.outputs.get(index).ok_or(Error::OutputIndex {
            index,
            count: self.outputs.len(),
        })
    }
}

/// Feature space plus output utilities, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub space: FeatureSpace,
    pub outputs: Vec<OutputSpec>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(text)?;
        config.utility()?;
        Ok(config)
    }

    pub fn utility(&self) -> Result<OutputUtility> {
        OutputUtility::new(self.outputs.clone())
    }
}

/// Joint output range `[out_min, out_max]` for one output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputRange {
    pub min: f64,
    pub max: f64,
    /// False when taken from the utility declaration.
    pub estimated: bool,
}

impl OutputRange {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Default number of uniform points for range estimation.
pub const RANGE_SAMPLES: usize = 10_000;
const CORNER_FEATURES: usize = 12;
const REFINE_ROUNDS: usize = 3;
const REFINE_GRID: usize = 201;

/// Returns the declared joint range of `output`, or estimates it.
///
/// Estimation evaluates `budget` uniform points plus every corner of the
/// numeric bounds (first 12 numeric features; the rest sit at their
/// midpoint), then polishes the best minimiser and maximiser by coordinate
/// sweeps: each numeric feature over a 201-point grid and each categorical
/// feature over all levels, three rounds.
pub fn output_range_of(
    predictor: &dyn Predictor,
    utility: &OutputUtility,
    space: &FeatureSpace,
    output: usize,
    budget: usize,
    rng: &mut SeededRng,
) -> Result<OutputRange> {
    let spec = utility.output(output)?;
    if let Some((min, max)) = spec.declared_range() {
        return Ok(OutputRange {
            min,
            max,
            estimated: false,
        });
    }
    if budget == 0 {
        return Err(Error::DegenerateRange(format!(
            "output '{}' has no declared range and the sampling budget is zero",
            spec.name
        )));
    }

    let mut candidates = space.sample_uniform_n(budget, rng);
    candidates.extend(corner_points(space));
    let ys = predictor.evaluate_output(&candidates, output)?;

    let (mut lo_idx, mut hi_idx) = (0, 0);
    for (k, &y) in ys.iter().enumerate() {
        if y < ys[lo_idx] {
            lo_idx = k;
        }
        if y > ys[hi_idx] {
            hi_idx = k;
        }
    }
    let (_, lo) = refine(predictor, space, output, &candidates[lo_idx], ys[lo_idx], false)?;
    let (_, hi) = refine(predictor, space, output, &candidates[hi_idx], ys[hi_idx], true)?;

    if !(lo < hi) {
        return Err(Error::DegenerateRange(format!(
            "output '{}' is constant at {lo} over the sampled space",
            spec.name
        )));
    }
    Ok(OutputRange {
        min: lo,
        max: hi,
        estimated: true,
    })
}

fn corner_points(space: &FeatureSpace) -> Vec<Instance> {
    let numeric: Vec<usize> = space
        .features()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_numeric())
        .map(|(i, _)| i)
        .take(CORNER_FEATURES)
        .collect();
    let base = Instance::new(
        space
            .features()
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Numeric { min, max } => 0.5 * (min + max),
                FeatureKind::Categorical { .. } => 0.0,
            })
            .collect(),
    );
    if numeric.is_empty() {
        return vec![base];
    }
    (0u32..(1 << numeric.len()))
        .map(|mask| {
            let mut x = base.clone();
            for (bit, &i) in numeric.iter().enumerate() {
                let (min, max) = space.features()[i].bounds().unwrap();
                x.set(i, if mask & (1 << bit) != 0 { max } else { min });
            }
            x
        })
        .collect()
}

fn refine(
    predictor: &dyn Predictor,
    space: &FeatureSpace,
    output: usize,
    start: &Instance,
    start_y: f64,
    maximise: bool,
) -> Result<(Instance, f64)> {
    let better = |a: f64, b: f64| if maximise { a > b } else { a < b };
    let mut best = start.clone();
    let mut best_y = start_y;
    for _ in 0..REFINE_ROUNDS {
        let mut improved = false;
        for (i, spec) in space.features().iter().enumerate() {
            let values: Vec<f64> = match &spec.kind {
                FeatureKind::Numeric { min, max } => (0..REFINE_GRID)
                    .map(|k| min + (max - min) * k as f64 / (REFINE_GRID - 1) as f64)
                    .collect(),
                FeatureKind::Categorical { levels } => (0..levels.len()).map(|l| l as f64).collect(),
            };
            let batch: Vec<Instance> = values.iter().map(|&v| best.with_value(i, v)).collect();
            let ys = predictor.evaluate_output(&batch, output)?;
            for (x, y) in batch.into_iter().zip(ys) {
                if better(y, best_y) {
                    best = x;
                    best_y = y;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok((best, best_y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn linear_reference_values() {
        let f = linear_reference_predictor();
        let ys = f
            .evaluate_output(
                &[
                    Instance::new(vec![0.5; 4]),
                    Instance::new(vec![0.0; 4]),
                    Instance::new(vec![1.0; 4]),
                ],
                0,
            )
            .unwrap();
        assert!(approx(ys[0], 0.5, 1e-12));
        assert_eq!(ys[1], 0.0);
        assert!(approx(ys[2], 1.0, 1e-12));
    }

    #[test]
    fn nonlinear_reference_values() {
        let f = nonlinear_reference_predictor();
        let ys = f
            .evaluate_output(
                &[
                    Instance::new(vec![0.63, 0.63, 0.59, 0.81]),
                    Instance::new(vec![0.0; 4]),
                    Instance::new(vec![1.0; 4]),
                ],
                0,
            )
            .unwrap();
        assert!(approx(ys[0], 0.235, 1e-3), "{}", ys[0]);
        assert_eq!(ys[1], 0.0);
        // 0.7·sin(10) + 0.3·sin(10) + 1 + 0.5
        assert!(approx(ys[2], 0.9560, 1e-4), "{}", ys[2]);
    }

    #[test]
    fn feature_space_rejects_bad_specs() {
        assert!(FeatureSpace::new(vec![]).is_err());
        assert!(FeatureSpace::new(vec![FeatureSpec::numeric("a", 1.0, 1.0)]).is_err());
        assert!(FeatureSpace::new(vec![FeatureSpec::numeric("a", 0.0, f64::INFINITY)]).is_err());
        assert!(FeatureSpace::new(vec![FeatureSpec::categorical::<&str>("c", vec![])]).is_err());
        assert!(FeatureSpace::new(vec![FeatureSpec::categorical("c", vec!["a", "a"])]).is_err());
        assert!(FeatureSpace::new(vec![
            FeatureSpec::numeric("a", 0.0, 1.0),
            FeatureSpec::numeric("a", 0.0, 2.0)
        ])
        .is_err());
    }

    #[test]
    fn out_of_range_values_are_flagged_not_rejected() {
        let space = FeatureSpace::unit_box(2).unwrap();
        assert_eq!(space.check(&Instance::new(vec![1.5, 0.5])).unwrap(), vec![0]);
        assert!(space.check(&Instance::new(vec![0.5])).is_err());
        assert!(space.check(&Instance::new(vec![f64::NAN, 0.5])).is_err());
    }

    #[test]
    fn json_encoding_round_trip() {
        let space = FeatureSpace::new(vec![
            FeatureSpec::numeric("age", 0.0, 100.0),
            FeatureSpec::categorical("gender", vec!["female", "male"]),
        ])
        .unwrap();
        let v = serde_json::json!({"gender": "male", "age": 8});
        let x = space.encode_json(&v).unwrap();
        assert_eq!(x.values(), &[8.0, 1.0]);
        assert_eq!(space.decode_json(&x), serde_json::json!([8.0, "male"]));
        assert!(space.encode_json(&serde_json::json!([8, "other"])).is_err());
        assert!(space
            .encode_json(&serde_json::json!({"age": 1, "gender": "male", "typo": 3}))
            .is_err());
    }

    #[test]
    fn config_document_parses() {
        let text = r#"{"features":[{"name":"x","type":"numeric","min":0,"max":1},
            {"name":"c","type":"categorical","levels":["a","b"]}],
            "outputs":[{"name":"y","A":1.0,"b":0.0,"min":0.0,"max":1.0}]}"#;
        let config = ModelConfig::from_json(text).unwrap();
        assert_eq!(config.space.len(), 2);
        assert_eq!(config.outputs[0].declared_range(), Some((0.0, 1.0)));
        let again: ModelConfig =
            serde_json::from_str(&serde_json::to_string(&config).unwrap()).unwrap();
        assert_eq!(again, config);

        let bad = r#"{"features":[{"name":"x","type":"numeric","min":2,"max":1}],"outputs":[]}"#;
        assert!(ModelConfig::from_json(bad).is_err());
    }

    #[test]
    fn range_of_linear_reference_is_declared() {
        let utility = OutputUtility::new(vec![OutputSpec::declared("y", 0.0, 1.0)]).unwrap();
        let space = FeatureSpace::unit_box(4).unwrap();
        let r = output_range_of(
            &linear_reference_predictor(),
            &utility,
            &space,
            0,
            0,
            &mut SeededRng::new(1),
        )
        .unwrap();
        assert_eq!((r.min, r.max, r.estimated), (0.0, 1.0, false));
    }

    #[test]
    fn range_of_linear_reference_estimated_hits_corners() {
        let utility = OutputUtility::new(vec![OutputSpec::undeclared("y")]).unwrap();
        let space = FeatureSpace::unit_box(4).unwrap();
        let r = output_range_of(
            &linear_reference_predictor(),
            &utility,
            &space,
            0,
            100,
            &mut SeededRng::new(1),
        )
        .unwrap();
        assert!(r.estimated);
        assert_eq!(r.min, 0.0);
        assert!(approx(r.max, 1.0, 1e-12));
    }

    #[test]
    fn range_of_nonlinear_reference() {
        let utility = OutputUtility::new(vec![OutputSpec::undeclared("y")]).unwrap();
        let space = FeatureSpace::unit_box(4).unwrap();
        let r = output_range_of(
            &nonlinear_reference_predictor(),
            &utility,
            &space,
            0,
            RANGE_SAMPLES,
            &mut SeededRng::new(42),
        )
        .unwrap();
        assert!(approx(r.min, -0.825, 0.01), "{}", r.min);
        assert!(approx(r.max, 2.29, 0.01), "{}", r.max);
    }

    #[test]
    fn range_of_constant_predictor_is_degenerate() {
        let utility = OutputUtility::new(vec![OutputSpec::undeclared("y")]).unwrap();
        let space = FeatureSpace::unit_box(2).unwrap();
        let f = FnPredictor::new(|_| 3.0);
        let err = output_range_of(&f, &utility, &space, 0, 50, &mut SeededRng::new(1)).unwrap_err();
        assert!(matches!(err, Error::DegenerateRange(_)));
        let err = output_range_of(&f, &utility, &space, 0, 0, &mut SeededRng::new(1)).unwrap_err();
        assert!(matches!(err, Error::DegenerateRange(_)));
    }
}
