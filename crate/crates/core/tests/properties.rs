use ciu_core::baselines::shapley_enumerate;
use ciu_core::global::normalize_importances;
use ciu_core::model::FnPredictor;
use ciu_core::{
    build_sample_set, contextual_influence, contextual_utility, explain_instance,
    linear_reference_predictor, nonlinear_reference_predictor, CiuExplainer, FeatureSpace,
    FeatureSpec, Instance, OutputSpec, OutputUtility, Predictor, SeededRng,
};
use proptest::prelude::*;

fn unit4() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 4)
}

// Independent re-statement of the nonlinear reference, one term at a time.
fn nonlinear_terms(x: &[f64]) -> [f64; 4] {
    [
        0.7 * x[0] * (10.0 * x[0]).sin(),
        0.3 * x[1] * (10.0 * x[1]).sin(),
        x[2].powi(2),
        2.0 * x[3].powi(4) - 1.5 * x[3].powi(2),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_matches_dot_product(xs in prop::collection::vec(unit4(), 1..50)) {
        let batch: Vec<Instance> = xs.iter().cloned().map(Instance::new).collect();
        let ys = linear_reference_predictor().evaluate_output(&batch, 0).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            let dot: f64 = [0.4, 0.3, 0.2, 0.1].iter().zip(x).map(|(w, v)| w * v).sum();
            prop_assert!((y - dot).abs() <= 1e-12);
        }
    }

    #[test]
    fn nonlinear_matches_term_sum(x in unit4()) {
        let y = nonlinear_reference_predictor().evaluate_output(&[Instance::new(x.clone())], 0).unwrap()[0];
        let expected: f64 = nonlinear_terms(&x).iter().sum();
        prop_assert!((y - expected).abs() <= 1e-12);
    }

    #[test]
    fn batch_evaluation_equals_row_evaluation(xs in prop::collection::vec(unit4(), 1..20)) {
        let p = nonlinear_reference_predictor();
        let batch: Vec<Instance> = xs.iter().cloned().map(Instance::new).collect();
        let whole = p.evaluate_output(&batch, 0).unwrap();
        for (x, y) in batch.iter().zip(&whole) {
            let single = p.evaluate_output(std::slice::from_ref(x), 0).unwrap()[0];
            prop_assert_eq!(single.to_bits(), y.to_bits());
        }
        prop_assert_eq!(whole, p.evaluate_output(&batch, 0).unwrap());
    }

    #[test]
    fn sample_set_shape(x in unit4(), feature in 0usize..4, n in 0usize..40, seed in any::<u64>()) {
        let space = FeatureSpace::unit_box(4).unwrap();
        let x = Instance::new(x);
        let set = build_sample_set(&space, &x, feature, n, &mut SeededRng::new(seed)).unwrap();
        prop_assert_eq!(set.instances.len(), n + 3);
        prop_assert_eq!(&set.instances[0], &x);
        let v = set.varied_values();
        prop_assert_eq!(v[1], 0.0);
        prop_assert_eq!(v[2], 1.0);
        for inst in &set.instances {
            for k in (0..4).filter(|&k| k != feature) {
                prop_assert_eq!(inst.get(k), x.get(k));
            }
            prop_assert!((0.0..=1.0).contains(&inst.get(feature)));
        }
    }

    #[test]
    fn influence_identity_and_bounds(ci in 0.0f64..=1.0, cu in 0.0f64..=1.0, phi0 in 0.0f64..=1.0) {
        let phi = contextual_influence(ci, cu, phi0);
        prop_assert!((phi - ci * (cu - phi0)).abs() <= 1e-15);
        prop_assert!(phi >= -ci * phi0 - 1e-15 && phi <= ci * (1.0 - phi0) + 1e-15);
    }

    #[test]
    fn utility_is_monotone_in_y(lo in -5.0f64..5.0, width in 0.01f64..5.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let hi = lo + width;
        let (ya, yb) = (lo + a * width, lo + b * width);
        let (ua, _) = contextual_utility(ya, lo, hi, 1.0);
        let (ub, _) = contextual_utility(yb, lo, hi, 1.0);
        prop_assert!((ya <= yb) == (ua <= ub + 1e-15));
        let (da, _) = contextual_utility(ya, lo, hi, -1.0);
        let (db, _) = contextual_utility(yb, lo, hi, -1.0);
        prop_assert!((ya <= yb) == (da + 1e-15 >= db));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ua));
    }

    #[test]
    fn nonlinear_ci_does_not_depend_on_other_features(x in unit4(), other in unit4(), seed in any::<u64>()) {
        // Additively separable: the range of f over feature i is set by
        // feature i's own term, whatever the other coordinates are.
        let space = FeatureSpace::unit_box(4).unwrap();
        let utility = OutputUtility::new(vec![OutputSpec::declared("y", -0.825, 2.29)]).unwrap();
        let p = nonlinear_reference_predictor();
        let e = CiuExplainer::new(&p, &space, &utility, 0, &SeededRng::new(0)).unwrap().samples(50);
        let a = e.explain(&Instance::new(x.clone()), &SeededRng::new(seed)).unwrap();
        for i in 0..4 {
            let mut moved = other.clone();
            moved[i] = x[i];
            let b = e.explain(&Instance::new(moved), &SeededRng::new(seed)).unwrap();
            prop_assert!((a.ci()[i] - b.ci()[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn categorical_ciu_matches_brute_force(level in 0usize..3, v in 0.0f64..=1.0, table in prop::collection::vec(-1.0f64..1.0, 3)) {
        let space = FeatureSpace::new(vec![
            FeatureSpec::categorical("c", vec!["a", "b", "c"]),
            FeatureSpec::numeric("v", 0.0, 1.0),
        ]).unwrap();
        let t = table.clone();
        let p = FnPredictor::new(move |x: &[f64]| t[x[0] as usize] + x[1]);
        let utility = OutputUtility::new(vec![OutputSpec::declared("y", -1.0, 2.0)]).unwrap();
        let x = Instance::new(vec![level as f64, v]);
        let e = explain_instance(&p, &utility, &space, &x, 0, 10, 0.5, &SeededRng::new(1)).unwrap();
        let ys: Vec<f64> = table.iter().map(|t| t + v).collect();
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((e.ci()[0] - (hi - lo) / 3.0).abs() <= 1e-12);
        if hi > lo {
            prop_assert!((e.cu()[0] - (ys[level] - lo) / (hi - lo)).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalize_is_idempotent(raw in prop::collection::vec(0.0f64..10.0, 1..8)) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-6);
        let once = normalize_importances(&raw).unwrap();
        let twice = normalize_importances(&once).unwrap();
        prop_assert!((once.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (a, b) in once.iter().zip(twice) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn enumerated_shapley_is_efficient(x in unit4(), bg in prop::collection::vec(unit4(), 1..6)) {
        let p = nonlinear_reference_predictor();
        let background: Vec<Instance> = bg.into_iter().map(Instance::new).collect();
        let x = Instance::new(x);
        let phi = shapley_enumerate(&p, &x, &background, 0).unwrap();
        let fx = p.evaluate_output(std::slice::from_ref(&x), 0).unwrap()[0];
        let base = p.evaluate_output(&background, 0).unwrap().iter().sum::<f64>() / background.len() as f64;
        prop_assert!((phi.iter().sum::<f64>() - (fx - base)).abs() <= 1e-9);
    }
}
