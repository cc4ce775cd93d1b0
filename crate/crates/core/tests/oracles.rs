//! Reference values from independent closed forms and dense-grid searches.

use ciu_core::ciu::{ceteris_paribus_curve, estimate_minmax};
use ciu_core::model::{output_range_of, FnPredictor};
use ciu_core::sampling::ceteris_paribus_grid;
use ciu_core::{
    contextual_influence, explain_instance, linear_reference_predictor, nonlinear_reference_predictor,
    CiuExplainer, FeatureSpace, Instance, OutputSpec, OutputUtility, Predictor, SeededRng,
};

fn unit_utility() -> OutputUtility {
    OutputUtility::new(vec![OutputSpec::declared("y", 0.0, 1.0)]).unwrap()
}

fn estimated_utility() -> OutputUtility {
    OutputUtility::new(vec![OutputSpec::undeclared("y")]).unwrap()
}

fn term(i: usize, v: f64) -> f64 {
    match i {
        0 => 0.7 * v * (10.0 * v).sin(),
        1 => 0.3 * v * (10.0 * v).sin(),
        2 => v * v,
        _ => 2.0 * v.powi(4) - 1.5 * v * v,
    }
}

/// Min and max of term `i` over a dense grid of `[0, 1]`.
fn term_extremes(i: usize) -> (f64, f64) {
    let steps = 200_000;
    (0..=steps)
        .map(|k| term(i, k as f64 / steps as f64))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

#[test]
fn reference_point_values() {
    let lin = linear_reference_predictor();
    let nl = nonlinear_reference_predictor();
    let at = |p: &dyn Predictor, x: [f64; 4]| p.evaluate_output(&[Instance::new(x.to_vec())], 0).unwrap()[0];
    assert!((at(&lin, [0.5; 4]) - 0.5).abs() < 1e-12);
    assert_eq!(at(&lin, [0.0; 4]), 0.0);
    assert!((at(&lin, [1.0; 4]) - 1.0).abs() < 1e-12);
    assert!((at(&nl, [0.63, 0.63, 0.59, 0.81]) - 0.235).abs() < 1e-3);
    assert_eq!(at(&nl, [0.0; 4]), 0.0);
    let expected = 0.7 * 10f64.sin() + 0.3 * 10f64.sin() + 1.0 + 0.5;
    assert!((at(&nl, [1.0; 4]) - expected).abs() < 1e-12);
    assert!((expected - 0.9560).abs() < 1e-4);
}

#[test]
fn nonlinear_joint_range_matches_grid_oracle() {
    let (lo, hi) = (0..4).map(term_extremes).fold((0.0, 0.0), |(a, b), (l, h)| (a + l, b + h));
    assert!((lo + 0.825).abs() < 0.01 && (hi - 2.29).abs() < 0.01, "{lo} {hi}");
    let space = FeatureSpace::unit_box(4).unwrap();
    let r = output_range_of(
        &nonlinear_reference_predictor(),
        &estimated_utility(),
        &space,
        0,
        ciu_core::model::RANGE_SAMPLES,
        &mut SeededRng::new(42),
    )
    .unwrap();
    assert!(r.estimated);
    assert!((r.min - lo).abs() < 0.01 && (r.max - hi).abs() < 0.01, "{r:?}");
}

#[test]
fn linear_local_values_are_exact() {
    let space = FeatureSpace::unit_box(4).unwrap();
    let e = explain_instance(
        &linear_reference_predictor(),
        &unit_utility(),
        &space,
        &Instance::new(vec![0.5; 4]),
        0,
        100,
        0.5,
        &SeededRng::new(42),
    )
    .unwrap();
    for (i, w) in [0.4, 0.3, 0.2, 0.1].iter().enumerate() {
        assert!((e.ci()[i] - w).abs() < 1e-9);
        assert!((e.cu()[i] - 0.5).abs() < 1e-9);
        assert!(e.influence()[i].abs() <= 1e-12, "feature {i}: {}", e.influence()[i]);
    }
}

#[test]
fn linear_minmax_for_feature_one() {
    let space = FeatureSpace::unit_box(4).unwrap();
    let (lo, hi, y) = estimate_minmax(
        &linear_reference_predictor(),
        &space,
        &Instance::new(vec![0.5; 4]),
        0,
        0,
        &mut SeededRng::new(0),
        0,
    )
    .unwrap();
    assert!((lo - 0.3).abs() < 1e-12 && (hi - 0.7).abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
}

#[test]
fn nonlinear_local_values_match_term_oracle() {
    let x = [0.63, 0.63, 0.59, 0.81];
    let (out_lo, out_hi) = (0..4).map(term_extremes).fold((0.0, 0.0), |(a, b), (l, h)| (a + l, b + h));
    let space = FeatureSpace::unit_box(4).unwrap();
    let e = explain_instance(
        &nonlinear_reference_predictor(),
        &estimated_utility(),
        &space,
        &Instance::new(x.to_vec()),
        0,
        1000,
        0.5,
        &SeededRng::new(42),
    )
    .unwrap();
    let published_ci = [0.300, 0.128, 0.321, 0.251];
    let published_cu = [0.416, 0.416, 0.348, 0.202];
    let published_phi = [-0.025, -0.011, -0.049, -0.075];
    for i in 0..4 {
        let (lo, hi) = term_extremes(i);
        let ci = (hi - lo) / (out_hi - out_lo);
        let cu = (term(i, x[i]) - lo) / (hi - lo);
        assert!((e.ci()[i] - ci).abs() < 0.01, "CI {i}: {} vs {ci}", e.ci()[i]);
        assert!((e.cu()[i] - cu).abs() < 0.01, "CU {i}: {} vs {cu}", e.cu()[i]);
        assert!((e.ci()[i] - published_ci[i]).abs() < 0.01);
        assert!((e.cu()[i] - published_cu[i]).abs() < 0.01);
        assert!((e.influence()[i] - published_phi[i]).abs() < 0.01);
        assert!(!e.features[i].ciu.instability);
    }
}

#[test]
fn nonlinear_feature_four_span() {
    // 2x⁴ − 1.5x² bottoms out at √(3/8) with −0.28125 and peaks at 1 with 0.5.
    let space = FeatureSpace::unit_box(4).unwrap();
    let (lo, hi, _) = estimate_minmax(
        &nonlinear_reference_predictor(),
        &space,
        &Instance::new(vec![0.63, 0.63, 0.59, 0.81]),
        3,
        1000,
        &mut SeededRng::new(3),
        0,
    )
    .unwrap();
    assert!((hi - lo - 0.78125).abs() < 0.01);
    let x4 = (3.0f64 / 8.0).sqrt();
    assert!((term(3, x4) + 0.28125).abs() < 1e-12);
}

#[test]
fn influence_examples() {
    assert_eq!(contextual_influence(0.4, 0.5, 0.5), 0.0);
    assert!((contextual_influence(0.300, 0.416, 0.5) + 0.025).abs() < 1e-3);
    assert_eq!(contextual_influence(0.0, 0.9, 0.5), 0.0);
}

#[test]
fn monotone_predictor_needs_no_random_samples() {
    let space = FeatureSpace::unit_box(3).unwrap();
    let p = FnPredictor::new(|x: &[f64]| 0.2 * x[0] + 0.5 * x[1].powi(3) + 0.3 * x[2].sqrt());
    let e = explain_instance(
        &p,
        &unit_utility(),
        &space,
        &Instance::new(vec![0.3, 0.6, 0.9]),
        0,
        0,
        0.5,
        &SeededRng::new(9),
    )
    .unwrap();
    for (i, w) in [0.2, 0.5, 0.3].iter().enumerate() {
        assert!((e.ci()[i] - w).abs() < 1e-12);
    }
}

#[test]
fn curve_examples() {
    let space = FeatureSpace::unit_box(4).unwrap();
    let x = Instance::new(vec![0.5; 4]);
    let c = ceteris_paribus_curve(&linear_reference_predictor(), &space, &x, 0, 2, 0).unwrap();
    assert_eq!(c.len(), 2);
    assert!((c[0].0 - 0.0).abs() < 1e-15 && (c[0].1 - 0.3).abs() < 1e-12);
    assert!((c[1].0 - 1.0).abs() < 1e-15 && (c[1].1 - 0.7).abs() < 1e-12);

    let flat = FnPredictor::new(|_: &[f64]| 2.0);
    let c = ceteris_paribus_curve(&flat, &space, &x, 2, 5, 0).unwrap();
    assert!(c.iter().all(|p| p.1 == 2.0));

    let nl = nonlinear_reference_predictor();
    let xn = Instance::new(vec![0.63, 0.63, 0.59, 0.81]);
    let curve = ceteris_paribus_curve(&nl, &space, &xn, 0, 101, 0).unwrap();
    let (lo, hi, _) = estimate_minmax(&nl, &space, &xn, 0, 1000, &mut SeededRng::new(1), 0).unwrap();
    let cmin = curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let cmax = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    assert!((cmin - lo).abs() < 0.01 && (cmax - hi).abs() < 0.01);
}

#[test]
fn grid_spacing() {
    let space = FeatureSpace::new(vec![ciu_core::FeatureSpec::numeric("a", -1.0, 1.0)]).unwrap();
    let x = Instance::new(vec![0.0]);
    let g: Vec<f64> = ceteris_paribus_grid(&space, &x, 0, 5).unwrap().iter().map(|i| i.get(0)).collect();
    assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    assert!(ceteris_paribus_grid(&space, &x, 0, 1).is_err());
}

#[test]
fn what_if_annotations() {
    let space = FeatureSpace::unit_box(4).unwrap();
    let utility = unit_utility();
    let p = linear_reference_predictor();
    let e = CiuExplainer::new(&p, &space, &utility, 0, &SeededRng::new(0)).unwrap();
    let w = e.what_if(&Instance::new(vec![0.5; 4]), 0, 11, &SeededRng::new(0)).unwrap();
    let a = w.annotations;
    assert_eq!((a.out_min, a.out_max), (0.0, 1.0));
    assert!((a.ymin - 0.3).abs() < 1e-12 && (a.ymax - 0.7).abs() < 1e-12);
    assert!((a.y_u0 - 0.5).abs() < 1e-12 && a.x_value == 0.5);
}
