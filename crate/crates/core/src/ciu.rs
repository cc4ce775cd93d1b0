//! Contextual importance (CI), contextual utility (CU) and contextual
//! influence for a single instance and output.
//!
//! For feature `i` the engine varies `x_i` alone, records the smallest and
//! largest output seen (`ymin`, `ymax`), and relates them to the joint output
//! range `[out_min, out_max]`:
//!
//! ```text
//! CI        = (ymax - ymin) / (out_max - out_min)
//! CU        = |y - yumin| / (ymax - ymin),  yumin = ymin if A > 0 else ymax
//! influence = CI * (CU - phi0)
//! ```
//!
//! Values are never clamped. When the model leaves the declared joint range
//! the raw numbers are kept and the feature is flagged as unstable.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{
    output_range_of, FeatureSpace, Instance, OutputRange, OutputUtility, Predictor, RANGE_SAMPLES,
};
use crate::sampling::{build_sample_set, ceteris_paribus_grid, SeededRng};

/// Default random draws per numeric feature.
pub const DEFAULT_SAMPLES: usize = 100;
/// Default neutral utility level.
pub const DEFAULT_PHI0: f64 = 0.5;

/// Sub-stream reserved for joint-range estimation.
const RANGE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiuValue {
    pub ci: f64,
    pub cu: f64,
    pub influence: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub y: f64,
    /// `ymax == ymin`: the feature cannot move the output here.
    pub degenerate: bool,
    /// The output left the joint range while varying this feature.
    pub instability: bool,
}

impl CiuValue {
    pub fn flags(&self) -> Vec<&'static str> {
        let mut flags = Vec::new();
        if self.degenerate {
            flags.push("degenerate");
        }
        if self.instability {
            flags.push("instability");
        }
        flags
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCiu {
    pub name: String,
    pub value: f64,
    /// The instance value lies outside the feature's declared bounds.
    pub out_of_range: bool,
    pub ciu: CiuValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub features: Vec<FeatureCiu>,
    pub output: usize,
    pub output_name: String,
    pub phi0: f64,
    pub samples: usize,
    pub seed: u64,
    pub range: OutputRange,
    pub y: f64,
    pub elapsed: Duration,
}

impl Explanation {
    pub fn ci(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.ciu.ci).collect()
    }

    pub fn cu(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.ciu.cu).collect()
    }

    pub fn influence(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.ciu.influence).collect()
    }

    pub fn any_instability(&self) -> bool {
        self.features.iter().any(|f| f.ciu.instability)
    }

    /// JSON report block. Timing is left out so reports are reproducible.
    pub fn to_json(&self) -> Value {
        let features: Vec<Value> = self
            .features
            .iter()
            .map(|f| {
                let mut flags = f.ciu.flags();
                if f.out_of_range {
                    flags.push("out_of_range");
                }
                json!({
                    "name": f.name,
                    "value": f.value,
                    "ci": f.ciu.ci,
                    "cu": f.ciu.cu,
                    "influence": f.ciu.influence,
                    "ymin": f.ciu.ymin,
                    "ymax": f.ciu.ymax,
                    "flags": flags,
                })
            })
            .collect();
        json!({
            "method": "ciu",
            "output": self.output,
            "output_name": self.output_name,
            "phi0": self.phi0,
            "seed": self.seed,
            "samples": self.samples,
            "out_min": self.range.min,
            "out_max": self.range.max,
            "range_estimated": self.range.estimated,
            "y": self.y,
            "features": features,
        })
    }
}

/// `(ymax - ymin) / (out_max - out_min)`.
pub fn contextual_importance(ymin: f64, ymax: f64, range: &OutputRange) -> Result<f64> {
    let width = range.width();
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::DegenerateRange(format!(
            "joint range [{}, {}] has no width",
            range.min, range.max
        )));
    }
    Ok((ymax - ymin) / width)
}

/// Returns `(cu, degenerate)`. A degenerate feature (`ymax == ymin`) has
/// CU 0.
pub fn contextual_utility(y: f64, ymin: f64, ymax: f64, utility_slope: f64) -> (f64, bool) {
    let span = ymax - ymin;
    if span == 0.0 {
        return (0.0, true);
    }
    let yumin = if utility_slope < 0.0 { ymax } else { ymin };
    (((y - yumin) / span).abs(), false)
}

pub fn contextual_influence(ci: f64, cu: f64, phi0: f64) -> f64 {
    positive_zero(ci * (cu - phi0))
}

fn positive_zero(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Min and max of output `output` over the perturbation set of `feature`,
/// plus `y = f(x)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_minmax(
    predictor: &dyn Predictor,
    space: &FeatureSpace,
    x: &Instance,
    feature: usize,
    n: usize,
    rng: &mut SeededRng,
    output: usize,
) -> Result<(f64, f64, f64)> {
    let set = build_sample_set(space, x, feature, n, rng)?;
    let ys = predictor.evaluate_output(&set.instances, output)?;
    // Categorical sets do not start with x itself.
    let y = if space.feature(feature)?.is_numeric() {
        ys[0]
    } else {
        ys[x.get(feature) as usize]
    };
    let (ymin, ymax) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(Error::Predictor("non-finite prediction".into()));
    }
    Ok((ymin, ymax, y))
}

/// CIU explainer bound to one predictor, feature space and output, with the
/// joint output range resolved once.
pub struct CiuExplainer<'a> {
    predictor: &'a dyn Predictor,
    space: &'a FeatureSpace,
    output: usize,
    output_name: String,
    slope: f64,
    range: OutputRange,
    pub samples: usize,
    pub phi0: f64,
}

impl<'a> CiuExplainer<'a> {
    /// Uses the declared range of `output`, or estimates it with
    /// [`RANGE_SAMPLES`] points drawn from a dedicated sub-stream of `rng`.
    pub fn new(
        predictor: &'a dyn Predictor,
        space: &'a FeatureSpace,
        utility: &OutputUtility,
        output: usize,
        rng: &SeededRng,
    ) -> Result<Self> {
        let mut range_rng = rng.fork(RANGE_STREAM);
        let range = output_range_of(predictor, utility, space, output, RANGE_SAMPLES, &mut range_rng)?;
        Self::with_range(predictor, space, utility, output, range)
    }

    pub fn with_range(
        predictor: &'a dyn Predictor,
        space: &'a FeatureSpace,
        utility: &OutputUtility,
        output: usize,
        range: OutputRange,
    ) -> Result<Self> {
        let spec = utility.output(output)?;
        if output >= predictor.n_outputs() {
            return Err(Error::OutputIndex {
                index: output,
                count: predictor.n_outputs(),
            });
        }
        if !(range.width() > 0.0) || !range.width().is_finite() {
            return Err(Error::DegenerateRange(format!(
                "joint range [{}, {}] has no width",
                range.min, range.max
            )));
        }
        Ok(CiuExplainer {
            predictor,
            space,
            output,
            output_name: spec.name.clone(),
            slope: spec.a,
            range,
            samples: DEFAULT_SAMPLES,
            phi0: DEFAULT_PHI0,
        })
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn phi0(mut self, phi0: f64) -> Self {
        self.phi0 = phi0;
        self
    }

    pub fn range(&self) -> OutputRange {
        self.range
    }

    pub fn space(&self) -> &FeatureSpace {
        self.space
    }

    /// CIU for one feature. Draws come from `rng` directly.
    pub fn feature_value(&self, x: &Instance, feature: usize, rng: &mut SeededRng) -> Result<CiuValue> {
        let (ymin, ymax, y) =
            estimate_minmax(self.predictor, self.space, x, feature, self.samples, rng, self.output)?;
        Ok(self.value_from(ymin, ymax, y))
    }

    fn value_from(&self, ymin: f64, ymax: f64, y: f64) -> CiuValue {
        let width = self.range.width();
        let ci = (ymax - ymin) / width;
        let (cu, degenerate) = contextual_utility(y, ymin, ymax, self.slope);
        let eps = 1e-12 * width;
        let instability = ymin < self.range.min - eps || ymax > self.range.max + eps;
        CiuValue {
            ci,
            cu,
            influence: if degenerate {
                0.0
            } else {
                contextual_influence(ci, cu, self.phi0)
            },
            ymin,
            ymax,
            y,
            degenerate,
            instability,
        }
    }

    /// Explains `x`. Feature `i` draws from `rng.fork(i)`, so the result
    /// depends only on the seed of `rng` and never on feature order.
    pub fn explain(&self, x: &Instance, rng: &SeededRng) -> Result<Explanation> {
        let start = Instant::now();
        let out_of_range = self.space.check(x)?;
        let mut features = Vec::with_capacity(self.space.len());
        let mut y = f64::NAN;
        for (i, spec) in self.space.features().iter().enumerate() {
            let mut sub = rng.fork(i as u64);
            let ciu = self.feature_value(x, i, &mut sub)?;
            y = ciu.y;
            features.push(FeatureCiu {
                name: spec.name.clone(),
                value: x.get(i),
                out_of_range: out_of_range.contains(&i),
                ciu,
            });
        }
        Ok(Explanation {
            features,
            output: self.output,
            output_name: self.output_name.clone(),
            phi0: self.phi0,
            samples: self.samples,
            seed: rng.seed(),
            range: self.range,
            y,
            elapsed: start.elapsed(),
        })
    }

    /// Ceteris-paribus curve of numeric `feature` with CIU annotations.
    pub fn what_if(
        &self,
        x: &Instance,
        feature: usize,
        grid_size: usize,
        rng: &SeededRng,
    ) -> Result<WhatIf> {
        let points = ceteris_paribus_curve(self.predictor, self.space, x, feature, grid_size, self.output)?;
        let mut sub = rng.fork(feature as u64);
        let ciu = self.feature_value(x, feature, &mut sub)?;
        Ok(WhatIf {
            feature: self.space.feature(feature)?.name.clone(),
            points,
            annotations: CpAnnotations {
                out_min: self.range.min,
                out_max: self.range.max,
                ymin: ciu.ymin,
                ymax: ciu.ymax,
                y: ciu.y,
                y_u0: ciu.ymin + self.phi0 * (ciu.ymax - ciu.ymin),
                x_value: x.get(feature),
            },
            ciu,
        })
    }
}

/// One-shot CIU explanation; resolves the joint range from `utility`.
#[allow(clippy::too_many_arguments)]
pub fn explain_instance(
    predictor: &dyn Predictor,
    utility: &OutputUtility,
    space: &FeatureSpace,
    x: &Instance,
    output: usize,
    n: usize,
    phi0: f64,
    rng: &SeededRng,
) -> Result<Explanation> {
    CiuExplainer::new(predictor, space, utility, output, rng)?
        .samples(n)
        .phi0(phi0)
        .explain(x, rng)
}

/// Display annotations for a ceteris-paribus plot. `y_u0` is the output
/// level at utility `phi0` within `[ymin, ymax]`; it is drawn, never used to
/// decide anything.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpAnnotations {
    pub out_min: f64,
    pub out_max: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub y: f64,
    pub y_u0: f64,
    pub x_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIf {
    pub feature: String,
    pub points: Vec<(f64, f64)>,
    pub annotations: CpAnnotations,
    pub ciu: CiuValue,
}

/// `(x_i, f(x))` over an even grid of numeric `feature`, others fixed.
pub fn ceteris_paribus_curve(
    predictor: &dyn Predictor,
    space: &FeatureSpace,
    x: &Instance,
    feature: usize,
    grid_size: usize,
    output: usize,
) -> Result<Vec<(f64, f64)>> {
    let grid = ceteris_paribus_grid(space, x, feature, grid_size)?;
    let ys = predictor.evaluate_output(&grid, output)?;
    Ok(grid.iter().map(|g| g.get(feature)).zip(ys).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        linear_reference_predictor, nonlinear_reference_predictor, FeatureSpec, FnPredictor,
        OutputSpec,
    };

    fn unit_utility() -> OutputUtility {
        OutputUtility::new(vec![OutputSpec::declared("y", 0.0, 1.0)]).unwrap()
    }

    fn declared(min: f64, max: f64) -> OutputRange {
        OutputRange {
            min,
            max,
            estimated: false,
        }
    }

    #[test]
    fn minmax_linear_feature_one() {
        let space = FeatureSpace::unit_box(4).unwrap();
        let x = Instance::new(vec![0.5; 4]);
        let (lo, hi, y) = estimate_minmax(
            &linear_reference_predictor(),
            &space,
            &x,
            0,
            100,
            &mut SeededRng::new(1),
            0,
        )
        .unwrap();
        assert!((lo - 0.3).abs() < 1e-12 && (hi - 0.7).abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn minmax_nonlinear_feature_four() {
        // 2x^4 - 1.5x^2 on [0,1]: min -0.28125 at sqrt(3/8), max 0.5 at 1.
        let term = |v: f64| 2.0 * v.powi(4) - 1.5 * v * v;
        let oracle_lo = (0..=100_000)
            .map(|k| term(k as f64 / 100_000.0))
            .fold(f64::INFINITY, f64::min);
        assert!((oracle_lo + 0.28125).abs() < 1e-8);

        let space = FeatureSpace::unit_box(4).unwrap();
        let x = Instance::new(vec![0.63, 0.63, 0.59, 0.81]);
        let (lo, hi, _) = estimate_minmax(
            &nonlinear_reference_predictor(),
            &space,
            &x,
            3,
            1000,
            &mut SeededRng::new(42),
            0,
        )
        .unwrap();
        assert!((hi - lo - 0.78125).abs() < 0.01, "{}", hi - lo);
    }

    #[test]
    fn importance_values() {
        assert!((contextual_importance(0.3, 0.7, &declared(0.0, 1.0)).unwrap() - 0.4).abs() < 1e-12);
        let ci = contextual_importance(0.0, 1.0, &declared(-0.825, 2.29)).unwrap();
        assert!((ci - 0.321).abs() < 1e-3);
        assert_eq!(contextual_importance(0.2, 0.2, &declared(0.0, 1.0)).unwrap(), 0.0);
        assert!(contextual_importance(0.2, 0.3, &declared(1.0, 1.0)).is_err());
    }

    #[test]
    fn utility_values() {
        let (cu, d) = contextual_utility(0.5, 0.3, 0.7, 1.0);
        assert!((cu - 0.5).abs() < 1e-12 && !d);
        // x4 term at 0.81 is 2·0.81⁴ − 1.5·0.81² = −0.12322...
        let t = 2.0 * 0.81f64.powi(4) - 1.5 * 0.81 * 0.81;
        let (cu, _) = contextual_utility(t, -0.28125, 0.5, 1.0);
        assert!((cu - 0.202).abs() < 1e-3, "{cu}");
        assert_eq!(contextual_utility(2.0, 2.0, 2.0, 1.0), (0.0, true));
        let (cu, _) = contextual_utility(0.6, 0.3, 0.7, -2.0);
        assert!((cu - 0.25).abs() < 1e-12);
    }

    #[test]
    fn influence_values() {
        assert_eq!(contextual_influence(0.4, 0.5, 0.5), 0.0);
        assert!((contextual_influence(0.300, 0.416, 0.5) + 0.025).abs() < 1e-3);
        assert_eq!(contextual_influence(0.0, 0.9, 0.5), 0.0);
        assert!(contextual_influence(0.0, 0.1, 0.5).is_sign_positive());
    }

    #[test]
    fn explain_linear_reference() {
        let space = FeatureSpace::unit_box(4).unwrap();
        let f = linear_reference_predictor();
        let e = explain_instance(
            &f,
            &unit_utility(),
            &space,
            &Instance::new(vec![0.5; 4]),
            0,
            100,
            0.5,
            &SeededRng::new(42),
        )
        .unwrap();
        for (got, want) in e.ci().iter().zip([0.4, 0.3, 0.2, 0.1]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!(e.cu().iter().all(|c| (c - 0.5).abs() < 1e-9));
        assert!(e.influence().iter().all(|p| p.abs() < 1e-12));
        assert!(!e.any_instability());
    }

    #[test]
    fn zero_budget_is_exact_for_monotone_models() {
        let space = FeatureSpace::unit_box(3).unwrap();
        let f = FnPredictor::new(|x| 0.5 * x[0] + 0.3 * x[1].powi(3) + 0.2 * x[2].sqrt());
        let e = explain_instance(
            &f,
            &unit_utility(),
            &space,
            &Instance::new(vec![0.2, 0.7, 0.4]),
            0,
            0,
            0.5,
            &SeededRng::new(0),
        )
        .unwrap();
        for (got, want) in e.ci().iter().zip([0.5, 0.3, 0.2]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((e.cu()[1] - 0.343).abs() < 1e-12);
    }

    #[test]
    fn degenerate_feature_flags() {
        let space = FeatureSpace::unit_box(3).unwrap();
        let f = FnPredictor::new(|x| 0.5 * x[0] + 0.5 * x[2]);
        let e = explain_instance(
            &f,
            &unit_utility(),
            &space,
            &Instance::new(vec![0.2, 0.7, 0.4]),
            0,
            10,
            0.5,
            &SeededRng::new(0),
        )
        .unwrap();
        let c = e.features[1].ciu;
        assert_eq!((c.ci, c.cu, c.influence), (0.0, 0.0, 0.0));
        assert!(c.degenerate && !c.instability);
        assert_eq!(e.to_json()["features"][1]["flags"], json!(["degenerate"]));
    }

    #[test]
    fn overshoot_is_flagged_not_clamped() {
        let space = FeatureSpace::unit_box(2).unwrap();
        let f = FnPredictor::new(|x| if x[0] > 0.8 { 1.2 } else { x[0] });
        let e = explain_instance(
            &f,
            &unit_utility(),
            &space,
            &Instance::new(vec![0.5, 0.5]),
            0,
            10,
            0.5,
            &SeededRng::new(0),
        )
        .unwrap();
        let c = e.features[0].ciu;
        assert!(c.instability);
        assert!((c.ci - 1.2).abs() < 1e-12);
    }

    #[test]
    fn negative_slope_reverses_utility() {
        let space = FeatureSpace::unit_box(1).unwrap();
        let f = FnPredictor::new(|x| x[0]);
        let utility = OutputUtility::new(vec![OutputSpec {
            name: "cost".into(),
            a: -1.0,
            b: 1.0,
            min: Some(0.0),
            max: Some(1.0),
        }])
        .unwrap();
        let e = explain_instance(&f, &utility, &space, &Instance::new(vec![0.2]), 0, 0, 0.5, &SeededRng::new(0))
            .unwrap();
        assert!((e.cu()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn categorical_feature_uses_all_levels() {
        let space = FeatureSpace::new(vec![
            FeatureSpec::categorical("c", vec!["lo", "mid", "hi"]),
            FeatureSpec::numeric("v", 0.0, 1.0),
        ])
        .unwrap();
        let f = FnPredictor::new(|x| [0.1, 0.4, 0.9][x[0] as usize] * 0.5 + 0.5 * x[1]);
        let e = explain_instance(
            &f,
            &unit_utility(),
            &space,
            &Instance::new(vec![1.0, 0.0]),
            0,
            5,
            0.5,
            &SeededRng::new(0),
        )
        .unwrap();
        let c = e.features[0].ciu;
        assert!((c.ci - 0.4).abs() < 1e-12);
        assert!((c.cu - 0.375).abs() < 1e-12);
        assert!((c.y - 0.2).abs() < 1e-12);
    }

    #[test]
    fn curve_linear_endpoints() {
        let space = FeatureSpace::unit_box(4).unwrap();
        let pts = ceteris_paribus_curve(
            &linear_reference_predictor(),
            &space,
            &Instance::new(vec![0.5; 4]),
            0,
            2,
            0,
        )
        .unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].0, 0.0);
        assert!((pts[0].1 - 0.3).abs() < 1e-12);
        assert!((pts[1].1 - 0.7).abs() < 1e-12);
    }

    #[test]
    fn curve_constant_is_flat() {
        let space = FeatureSpace::unit_box(2).unwrap();
        let f = FnPredictor::new(|_| 0.25);
        let pts = ceteris_paribus_curve(&f, &space, &Instance::new(vec![0.5; 2]), 1, 11, 0).unwrap();
        assert!(pts.iter().all(|p| p.1 == 0.25));
    }

    #[test]
    fn curve_nonlinear_matches_minmax() {
        let space = FeatureSpace::unit_box(4).unwrap();
        let f = nonlinear_reference_predictor();
        let x = Instance::new(vec![0.63, 0.63, 0.59, 0.81]);
        let pts = ceteris_paribus_curve(&f, &space, &x, 0, 101, 0).unwrap();
        let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let (elo, ehi, _) = estimate_minmax(&f, &space, &x, 0, 1000, &mut SeededRng::new(7), 0).unwrap();
        assert!((lo - elo).abs() < 0.01 && (hi - ehi).abs() < 0.01);
    }

    #[test]
    fn what_if_annotations() {
        let space = FeatureSpace::unit_box(4).unwrap();
        let f = linear_reference_predictor();
        let explainer = CiuExplainer::new(&f, &space, &unit_utility(), 0, &SeededRng::new(1)).unwrap();
        let w = explainer
            .what_if(&Instance::new(vec![0.5; 4]), 0, 3, &SeededRng::new(1))
            .unwrap();
        assert!((w.annotations.y_u0 - 0.5).abs() < 1e-12);
        assert_eq!(w.annotations.x_value, 0.5);
        assert_eq!((w.annotations.out_min, w.annotations.out_max), (0.0, 1.0));
    }
}
