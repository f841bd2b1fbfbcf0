use dynregret::analysis::{assess, dynamic_regret, BoundKind};
use dynregret::geometry::{ComparatorPath, FeasibleSet, Vector};
use dynregret::optimizer::{run, StepRate};
use dynregret::scheduler::{BudgetShape, PathBudget, RatePolicy};
use dynregret::streams::{
    best_segmented_comparator, gen_rademacher, gen_regression, linear_fixed, zero_prefix,
    LossStream, Segmentation,
};
use proptest::prelude::*;

fn v(x: &[f64]) -> Vector {
    Vector::new(x.to_vec()).unwrap()
}

#[test]
fn decisions_depend_only_on_past_gradients() {
    let set = FeasibleSet::unit_ball(2, 1.0).unwrap();
    let base: Vec<Vector> = (0..40)
        .map(|t| v(&[(t as f64 * 0.7).sin(), (t as f64 * 1.3).cos()]))
        .collect();
    let policy = RatePolicy::adaptive(0.5);
    let full = run(&mut linear_fixed(base.clone()).unwrap(), &set, set.center(), &policy, 40)
        .unwrap();
    for k in [1, 7, 20, 39] {
        let mut altered = base.clone();
        for g in &mut altered[k..] {
            *g = g.scale(-3.0);
        }
        let other = run(&mut linear_fixed(altered).unwrap(), &set, set.center(), &policy, 40)
            .unwrap();
        // w_1..w_{k+1} only see g_1..g_k
        for t in 0..=k {
            assert_eq!(full.records[t].decision, other.records[t].decision, "k={k} t={t}");
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let set = FeasibleSet::unit_ball(3, 2.0).unwrap();
    let (stream, _) = gen_regression(&set, 200, 0.01, 0.1, 17).unwrap();
    let policy = RatePolicy::adaptive(1.0);
    let a = run(&mut stream.rewound(), &set, set.center(), &policy, 200).unwrap();
    let b = run(&mut stream.rewound(), &set, set.center(), &policy, 200).unwrap();
    assert_eq!(a, b);
}

#[test]
fn per_coordinate_on_interval_matches_scalar_engine() {
    let set = FeasibleSet::hyper_box(v(&[-1.0]), v(&[2.0])).unwrap();
    let gs: Vec<Vector> = [0.0, 0.0, 1.5, -0.5, 0.0, 2.0, -3.0, 0.25, 0.0, -1.0]
        .iter()
        .map(|g| v(&[*g]))
        .collect();
    let scalar = run(&mut linear_fixed(gs.clone()).unwrap(), &set, v(&[0.5]), &RatePolicy::adaptive(1.5), 10)
        .unwrap();
    let coord = run(
        &mut linear_fixed(gs).unwrap(),
        &set,
        v(&[0.5]),
        &RatePolicy::PerCoordinate { p_hat: vec![1.5] },
        10,
    )
    .unwrap();
    for (a, b) in scalar.records.iter().zip(&coord.records) {
        assert_eq!(a.decision, b.decision);
        assert_eq!(a.next_decision, b.next_decision);
        assert_eq!(a.rate.is_skipped(), b.rate.is_skipped());
    }
}

#[test]
fn zero_prefix_delays_trajectory() {
    let set = FeasibleSet::unit_ball(2, 1.0).unwrap();
    let inner = gen_rademacher(v(&[0.6, 0.8]), 2.0, 50, 3).unwrap();
    let policy = RatePolicy::adaptive(0.0);
    let plain = run(&mut inner.rewound(), &set, v(&[0.1, 0.0]), &policy, 50).unwrap();
    let k = 13;
    let mut wrapped = zero_prefix(k, inner.rewound());
    let delayed = run(&mut wrapped, &set, v(&[0.1, 0.0]), &policy, 50 + k).unwrap();
    for r in &delayed.records[..k] {
        assert_eq!(r.rate, StepRate::Skipped);
        assert_eq!(r.decision, v(&[0.1, 0.0]));
    }
    for (a, b) in plain.records.iter().zip(&delayed.records[k..]) {
        assert_eq!(a.decision, b.decision);
        assert_eq!(a.rate, b.rate);
    }
}

#[test]
fn rademacher_energy_is_exact() {
    let set = FeasibleSet::unit_ball(4, 1.0).unwrap();
    for (l, t) in [(1.0, 1000usize), (0.3, 4096), (7.5, 17)] {
        let mut s = gen_rademacher(Vector::basis(4, 2), l, t, 99).unwrap();
        let trace = run(&mut s, &set, set.center(), &RatePolicy::adaptive(0.0), t).unwrap();
        let g_t = trace.records.last().unwrap().energy;
        let expect = l * (t as f64).sqrt();
        assert!((g_t - expect).abs() <= 1e-12 * expect, "{g_t} vs {expect}");
    }
}

#[test]
fn doubling_rates_nonincreasing_within_segments() {
    let set = FeasibleSet::unit_ball(2, 1.0).unwrap();
    let budget = PathBudget::new(BudgetShape::Sqrt(0.5), 2.0).unwrap();
    for reset_decision in [false, true] {
        let policy = RatePolicy::DoublingReset {
            budget: budget.clone(),
            reset_decision,
        };
        let (mut stream, _) = gen_regression(&set, 1023, 0.005, 0.05, 5).unwrap();
        let trace = run(&mut stream, &set, set.center(), &policy, 1023).unwrap();
        for pair in trace.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.segment != b.segment {
                continue;
            }
            if let (Some(x), Some(y)) = (a.rate.scalar(), b.rate.scalar()) {
                assert!(y <= x, "rate rose within segment {:?}", a.segment);
            }
        }
    }
}

fn gradient_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adaptive_regret_within_bound(
        grads in gradient_sets(),
        p_hat in 0.0..6.0f64,
        pieces in 1usize..5,
    ) {
        let set = FeasibleSet::unit_ball(2, 1.0).unwrap();
        let d = 2.0;
        let t = grads.len();
        let pieces = pieces.min(t);
        let p = d * (pieces - 1) as f64;
        let gs: Vec<Vector> = grads.iter().map(|g| v(g)).collect();
        let policy = RatePolicy::adaptive(p_hat);
        let mut stream = linear_fixed(gs.clone()).unwrap();
        let trace = run(&mut stream, &set, set.center(), &policy, t).unwrap();
        let comp = best_segmented_comparator(&gs, &set, p, Segmentation::Equal(pieces))
            .unwrap()
            .expand(&set)
            .unwrap();
        let mut rep = dynamic_regret(&trace.records, &comp, &stream).unwrap();
        assess(&mut rep, &trace.records, &set, &policy, &comp).unwrap();
        prop_assert!(!rep.has_violation(), "{:?}", rep);
        prop_assert!(rep.checked.contains(&BoundKind::Adaptive));
    }

    #[test]
    fn comparator_budget_is_honoured(grads in gradient_sets(), pieces in 1usize..5) {
        let set = FeasibleSet::unit_ball(2, 1.0).unwrap();
        let t = grads.len();
        let pieces = pieces.min(t);
        let gs: Vec<Vector> = grads.iter().map(|g| v(g)).collect();
        let comp: ComparatorPath =
            best_segmented_comparator(&gs, &set, 2.0 * (pieces - 1) as f64, Segmentation::Equal(pieces))
                .unwrap()
                .expand(&set)
                .unwrap();
        prop_assert!(comp.variation() <= comp.budget() + 1e-9);
        prop_assert_eq!(comp.len(), linear_fixed(gs).unwrap().horizon());
    }
}
