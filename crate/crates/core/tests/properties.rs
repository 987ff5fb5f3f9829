use bell_lab::behavior::{chsh_variants, strategy_count};
use bell_lab::bilocal::{bilocal_value, swapping_behavior, SwappingScenario};
use bell_lab::covariance::{
    check_covariance, frame_indicators, induced_behavior, CovariantModel, Frame,
};
use bell_lab::freewill::{deficit, predetermined_inputs_value};
use bell_lab::quantum::{
    quantum_behavior, werner_state, BlochVector, MeasurementSettings, TwoQubitState,
};
use bell_lab::randomness::{
    expansion_accounting, minentropy_bound, serial_composition, ExpansionStage, TSIRELSON,
};
use bell_lab::sampling::stream_rng;
use bell_lab::*;
use proptest::prelude::*;

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    (2usize..=3, 2usize..=3, 2usize..=3, 2usize..=3)
        .prop_map(|(x, y, a, b)| Scenario::new(x, y, a, b).unwrap())
}

fn direction() -> impl Strategy<Value = BlochVector> {
    (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU)
        .prop_map(|(t, p)| BlochVector::from_angles(t, p))
}

/// Arbitrary (possibly signaling) behavior: each input block normalized separately.
fn behavior_in(s: Scenario) -> impl Strategy<Value = Behavior> {
    prop::collection::vec(0.001f64..1.0, s.table_len()).prop_map(move |raw| {
        let block = s.n_a() * s.n_b();
        let mut p = Vec::with_capacity(raw.len());
        for chunk in raw.chunks(block) {
            let total: f64 = chunk.iter().sum();
            p.extend(chunk.iter().map(|v| v / total));
        }
        Behavior::new(s, p).unwrap()
    })
}

fn expression_in(s: Scenario) -> impl Strategy<Value = BellExpression> {
    prop::collection::vec(-5i32..=5, s.table_len())
        .prop_map(move |c| BellExpression::new(s, c.into_iter().map(f64::from).collect()).unwrap())
}

/// Brute force: best deterministic value by evaluating every vertex.
fn vertex_max(expr: &BellExpression) -> f64 {
    let s = expr.scenario();
    enumerate_strategies(&s)
        .unwrap()
        .iter()
        .map(|st| evaluate(expr, &strategy_behavior(st, &s).unwrap()).unwrap())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest of the eight CHSH forms computed from correlators directly.
fn fine_chsh_max(b: &Behavior) -> f64 {
    let e = |x: usize, y: usize| {
        b.get(x, y, 0, 0) - b.get(x, y, 0, 1) - b.get(x, y, 1, 0) + b.get(x, y, 1, 1)
    };
    let (e00, e01, e10, e11) = (e(0, 0), e(0, 1), e(1, 0), e(1, 1));
    let s = [
        e00 + e01 + e10 - e11,
        e00 + e01 - e10 + e11,
        e00 - e01 + e10 + e11,
        -e00 + e01 + e10 + e11,
    ];
    s.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_behaviors_are_normalized(s in scenario_strategy(), seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        use rand::Rng;
        let strategies = enumerate_strategies(&s).unwrap();
        let pick = &strategies[rng.random_range(0..strategies.len())];
        let b = strategy_behavior(pick, &s).unwrap();
        for x in 0..s.n_x() {
            for y in 0..s.n_y() {
                let total: f64 = (0..s.n_a()).flat_map(|a| (0..s.n_b()).map(move |bb| (a, bb))).map(|(a, bb)| b.get(x, y, a, bb)).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!(b.is_no_signaling(1e-12));
    }

    #[test]
    fn evaluate_is_linear(
        (p, q, e) in scenario_strategy().prop_flat_map(|s| (behavior_in(s), behavior_in(s), expression_in(s))),
        t in 0.0f64..=1.0,
    ) {
        let mix = Behavior::mixture(&[(t, &p), (1.0 - t, &q)]).unwrap();
        let lhs = evaluate(&e, &mix).unwrap();
        let rhs = t * evaluate(&e, &p).unwrap() + (1.0 - t) * evaluate(&e, &q).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn bounds_agree_with_vertex_enumeration(e in scenario_strategy().prop_flat_map(expression_in)) {
        let lb = local_bound(&e).unwrap();
        prop_assert_eq!(lb, vertex_max(&e));
        prop_assert!(lb <= algebraic_bound(&e));
    }

    #[test]
    fn strategy_mixtures_are_local(
        s in scenario_strategy(),
        picks in prop::collection::vec((any::<u32>(), 0.05f64..1.0), 1..=5),
    ) {
        let strategies = enumerate_strategies(&s).unwrap();
        let total: f64 = picks.iter().map(|p| p.1).sum();
        let behaviors: Vec<(f64, Behavior)> = picks
            .iter()
            .map(|(i, w)| (w / total, strategy_behavior(&strategies[*i as usize % strategies.len()], &s).unwrap()))
            .collect();
        let parts: Vec<(f64, &Behavior)> = behaviors.iter().map(|(w, b)| (*w, b)).collect();
        let b = Behavior::mixture(&parts).unwrap();
        prop_assert!(b.is_no_signaling(1e-12));
        let r = is_local(&b).unwrap();
        prop_assert!(r.is_local());
        let back = r.recompose(&s).unwrap();
        let err = back.iter().zip(b.probabilities()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9);
    }

    #[test]
    fn lp_agrees_with_chsh_oracle_on_quantum_behaviors(
        v in 0.0f64..=1.0,
        a0 in direction(), a1 in direction(), b0 in direction(), b1 in direction(),
    ) {
        let settings = MeasurementSettings::new(vec![a0, a1], vec![b0, b1]).unwrap();
        let b = quantum_behavior(&werner_state(v).unwrap(), &settings);
        prop_assert!(b.is_no_signaling(1e-12));
        let oracle = fine_chsh_max(&b);
        prop_assume!((oracle - 2.0).abs() > 1e-7);
        let r = is_local(&b).unwrap();
        prop_assert_eq!(r.is_local(), oracle <= 2.0, "CHSH max {}", oracle);
        if let Some(w) = r.witness() {
            prop_assert!(w.value > 2.0);
            prop_assert!(chsh_variants().iter().any(|c| c.coefficients() == w.expression.coefficients()));
        }
    }

    #[test]
    fn werner_correlators_scale_with_visibility(v in 0.0f64..=1.0, a in direction(), b in direction()) {
        let settings = MeasurementSettings::new(vec![a], vec![b]).unwrap();
        let beh = quantum_behavior(&werner_state(v).unwrap(), &settings);
        let e = beh.correlator(0, 0).unwrap();
        prop_assert!((e + v * a.dot(&b)).abs() < 1e-12);
    }

    #[test]
    fn singlet_respects_tsirelson(a0 in direction(), a1 in direction(), b0 in direction(), b1 in direction()) {
        let settings = MeasurementSettings::new(vec![a0, a1], vec![b0, b1]).unwrap();
        let b = quantum_behavior(&TwoQubitState::singlet(), &settings);
        prop_assert!(fine_chsh_max(&b) <= TSIRELSON + 1e-12);
    }

    #[test]
    fn deficit_identity(n in 1u64..1_000_000, frac in 0.0f64..1.0) {
        let m = 1 + ((n - 1) as f64 * frac) as u64;
        let d = deficit(n, m).unwrap();
        prop_assert!((d.bits + (m as f64).log2() - (n as f64).log2()).abs() < 1e-12);
        prop_assert!(d.bits >= 0.0);
    }

    #[test]
    fn predetermined_inputs_reach_algebraic_bound(e in scenario_strategy().prop_flat_map(expression_in)) {
        let m = predetermined_inputs_value(&e).unwrap();
        prop_assert_eq!(m.value, algebraic_bound(&e));
        prop_assert!(m.observed.is_no_signaling(0.0) || m.value >= local_bound(&e).unwrap());
    }

    #[test]
    fn bilocal_depends_only_on_product(v1 in 0.05f64..=1.0, v2 in 0.05f64..=1.0, t in 0.0f64..=1.0) {
        let p = v1 * v2;
        // Another split of the same product with both factors in [p, 1].
        let u1 = p + t * (1.0 - p);
        let u2 = p / u1;
        let s = |a: f64, b: f64| {
            bilocal_value(&swapping_behavior(&SwappingScenario::standard(a, b).unwrap()).unwrap()).unwrap().s_biloc
        };
        prop_assert!((s(v1, v2) - s(u1, u2)).abs() < 1e-9);
        prop_assert!((s(v1, v2) - (2.0 * p).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn bilocal_is_monotone(v1 in 0.0f64..=1.0, v2 in 0.0f64..=1.0, dv in 0.0f64..=1.0) {
        let s = |a: f64, b: f64| {
            bilocal_value(&swapping_behavior(&SwappingScenario::standard(a, b).unwrap()).unwrap()).unwrap().s_biloc
        };
        let w1 = v1 + dv * (1.0 - v1);
        prop_assert!(s(w1, v2) >= s(v1, v2) - 1e-12);
        prop_assert!(s(v2, w1) >= s(v2, v1) - 1e-12);
    }

    #[test]
    fn minentropy_is_monotone(a in 0.0f64..=TSIRELSON, b in 0.0f64..=TSIRELSON) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (hlo, hhi) = (minentropy_bound(lo).unwrap(), minentropy_bound(hi).unwrap());
        prop_assert!(hlo <= hhi);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&hhi));
    }

    #[test]
    fn net_gain_is_linear_in_rounds(rounds in 0u64..100_000, k in 1u64..10, s in 0.0f64..=TSIRELSON, g in 0.001f64..=1.0) {
        let one = expansion_accounting(&ExpansionStage::binary(rounds, s).unwrap().with_test_probability(g).unwrap());
        let many = expansion_accounting(&ExpansionStage::binary(rounds * k, s).unwrap().with_test_probability(g).unwrap());
        prop_assert!((many.net - k as f64 * one.net).abs() <= 1e-9 * many.net.abs().max(1.0));
    }

    #[test]
    fn ledger_conserves_bits(
        stages in prop::collection::vec((0u64..5_000, 2.0f64..=TSIRELSON, 0.005f64..=1.0), 1..6),
        seed_bits in 0.0f64..50_000.0,
    ) {
        let chain: Vec<ExpansionStage> = stages
            .iter()
            .map(|&(r, s, g)| ExpansionStage::binary(r, s).unwrap().with_test_probability(g).unwrap())
            .collect();
        match serial_composition(&chain, seed_bits) {
            Ok(report) => {
                let certified: f64 = chain.iter().map(|s| s.certified_bits_produced()).sum();
                prop_assert!((report.total_certified - certified).abs() < 1e-9 * certified.max(1.0));
                for e in &report.stages {
                    for v in [e.consumed, e.from_previous, e.from_seed, e.certified, e.previous_unused, e.seed_remaining] {
                        prop_assert!(v >= 0.0);
                    }
                    prop_assert!((e.from_previous + e.from_seed - e.consumed).abs() < 1e-9 * e.consumed.max(1.0));
                }
                prop_assert!(report.total_in <= seed_bits * (1.0 + 1e-12) + 1e-12);
            }
            Err(Error::SeedStarvation { stage, needed, available }) => {
                prop_assert!(stage >= 1 && stage <= chain.len());
                prop_assert!(needed > available);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn random_covariant_models_are_local(lambdas in 1usize..=4, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 1);
        let model = CovariantModel::random_covariant(Scenario::chsh(), lambdas, &mut rng).unwrap();
        prop_assert!(check_covariance(&model).covariant);
        prop_assert_eq!(frame_indicators(&model, Frame::AliceFirst), frame_indicators(&model, Frame::BobFirst));
        let b = induced_behavior(&model).unwrap();
        prop_assert!(b.is_no_signaling(1e-12));
        prop_assert!(is_local(&b).unwrap().is_local());
    }

    #[test]
    fn behavior_json_round_trips(b in scenario_strategy().prop_flat_map(behavior_in)) {
        let text = serde_json::to_string(&b).unwrap();
        let back: Behavior = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, b);
    }
}

#[test]
fn minentropy_grid_is_monotone() {
    let mut prev = minentropy_bound(2.0).unwrap();
    assert_eq!(prev, 0.0);
    let mut s = 2.0;
    while s < TSIRELSON {
        s = (s + 1e-3).min(TSIRELSON);
        let h = minentropy_bound(s).unwrap();
        assert!(h >= prev, "drop at S={s}");
        prev = h;
    }
    for k in 0..=200 {
        assert_eq!(minentropy_bound(k as f64 * 0.01).unwrap(), 0.0);
    }
}

#[test]
fn strategy_counts_match_enumeration() {
    for (x, y, a, b) in [(2, 2, 2, 2), (3, 2, 2, 3), (2, 3, 3, 2)] {
        let s = Scenario::new(x, y, a, b).unwrap();
        assert_eq!(
            strategy_count(&s).unwrap(),
            enumerate_strategies(&s).unwrap().len() as u128
        );
    }
}
