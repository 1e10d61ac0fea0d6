use msv_core::estimators::{hill_estimator, scaling_exponent, MomentSource, MomentTable};
use msv_core::levy::SubordinatorSpec;
use msv_core::pricing::{dyadic_lags, simulate_increments, IncrementTable, InitialState};
use msv_core::stream::{seeded, Domain, StreamFactory};
use msv_core::theory::{ModelParams, ScalingValue, TheoryModel};
use msv_core::volpath::{DriftSpec, GeneralDrift, VolatilityPath};
use msv_core::Scalar;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn drift_strategy() -> impl Strategy<Value = DriftSpec<f64>> {
    prop_oneof![
        (0.1f64..5.0, 1.0f64..4.0).prop_map(|(c, g)| DriftSpec::power_law(c, g).unwrap()),
        (0.1f64..5.0).prop_map(|c| DriftSpec::linear(c).unwrap()),
        (0.1f64..3.0, 1.2f64..3.0).prop_map(|(c, g)| DriftSpec::General(GeneralDrift::power_law(c, g).unwrap())),
        (0.1f64..3.0).prop_map(|c| DriftSpec::General(
            GeneralDrift::new("v+c*v^2", move |v: f64| v + c * v * v, Some(2.0)).unwrap()
        )),
    ]
}

fn closed_form_drift() -> impl Strategy<Value = DriftSpec<f64>> {
    prop_oneof![
        (0.1f64..2.0, 1.0f64..3.0).prop_map(|(c, g)| DriftSpec::power_law(c, g).unwrap()),
        (0.1f64..5.0).prop_map(|c| DriftSpec::linear(c).unwrap()),
    ]
}

/// Theory parameters kept away from `γ = 1`, where the scaling constants
/// degenerate.
fn params() -> impl Strategy<Value = ModelParams<f64>> {
    (0.2f64..4.0, 1.1f64..4.0)
        .prop_filter("alpha + gamma > 2", |(a, g)| a + g > 2.05)
        .prop_map(|(a, g)| ModelParams::new(a, g).unwrap())
}

/// Order grid on `[1, 12]` that stays at least 0.05 from every threshold.
fn safe_orders(p: &ModelParams<f64>, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 1.0 + 11.0 * i as f64 / (n - 1) as f64)
        .filter(|&q| p.thresholds().iter().all(|t| (q - t).abs() >= 0.05))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_semigroup(d in drift_strategy(), v in 1e-3f64..1e3, s in 0.0f64..5.0, t in 0.0f64..5.0) {
        let two_step = d.flow(d.flow(v, s), t);
        let one_step = d.flow(v, s + t);
        prop_assert!(rel(two_step, one_step) < 1e-9, "{d:?}: {two_step} vs {one_step}");
    }

    #[test]
    fn flow_decays_and_is_ordered(
        d in drift_strategy(), v in 1e-3f64..1e3, dv in 0.0f64..10.0, t1 in 0.0f64..5.0, dt in 0.0f64..5.0
    ) {
        prop_assert!(d.flow(v, t1 + dt) <= d.flow(v, t1));
        prop_assert!(d.flow(v, t1) <= d.flow(v + dv, t1));
        prop_assert!(d.flow(v, t1) > 0.0);
    }

    #[test]
    fn integrated_flow_differentiates_to_flow(d in closed_form_drift(), v in 0.1f64..10.0, t in 0.01f64..2.0) {
        let k = d.rate(v) / v * d.exponent().unwrap();
        let step = 1e-3 / (1.0 + k);
        let derivative = (d.integrated_flow(v, t + step) - d.integrated_flow(v, t - step)) / (2.0 * step);
        prop_assert!(rel(derivative, d.flow(v, t)) < 1e-6, "{d:?}: {derivative} vs {}", d.flow(v, t));
    }

    #[test]
    fn path_comparison_bounds(
        d in drift_strategy(),
        v0 in 0.0f64..20.0,
        inflow in 0.0f64..3.0,
        raw in prop::collection::vec((0.0f64..1.0, 0.01f64..50.0), 0..8),
        probe in prop::collection::vec(0.0f64..1.0, 1..10),
    ) {
        let mut jumps = raw;
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        jumps.dedup_by(|a, b| a.0 == b.0);
        jumps.retain(|j| j.0 > 0.0);
        let path = VolatilityPath::from_jumps(&d, inflow, v0, 1.0, &jumps).unwrap();
        for t in probe {
            let v = path.value_at(&d, t);
            let upper = v0 + path.jump_total(t) + inflow * t;
            prop_assert!(v <= upper * (1.0 + 1e-9) + 1e-12, "t={t}: {v} > {upper}");
            prop_assert!(v >= d.flow(v0, t) * (1.0 - 1e-9), "t={t}: {v} < flow");
        }
    }

    #[test]
    fn jump_samples_are_positive(rate in 0.1f64..10.0, x_min in 1e-3f64..10.0, alpha in 0.2f64..5.0, seed in 0u64..1000) {
        let s = SubordinatorSpec::pareto(0.0, rate, x_min, alpha).unwrap();
        let mut rng = seeded(seed);
        for _ in 0..100 {
            prop_assert!(s.sample_jump(&mut rng) >= x_min);
        }
        let times = s.sample_jump_times(2.0, &mut rng);
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn moment_table_norms_increase_with_order(xs in prop::collection::vec(-100.0f64..100.0, 1..300)) {
        let n = xs.len();
        let ivar: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let table = IncrementTable::from_parts(vec![1.0], n, ivar, xs, None).unwrap();
        let qs = [1.0, 1.5, 2.0, 3.0, 4.5, 7.0];
        let m = MomentTable::from_increments(&table, &qs, MomentSource::Increments).unwrap();
        let norms: Vec<f64> = qs.iter().map(|&q| m.at_order(q)[0].moment.estimate.powf(1.0 / q)).collect();
        for w in norms.windows(2) {
            prop_assert!(w[0] <= w[1] * (1.0 + 1e-12), "{norms:?}");
        }
    }

    #[test]
    fn fitted_exponents_over_order_decrease_on_exact_tables(p in params()) {
        let lags: Vec<f64> = dyadic_lags(-12, -3);
        let qs: Vec<f64> = safe_orders(&p, 60)
            .into_iter()
            .filter(|&q| p.theoretical_a(q).unwrap().value().is_some())
            .collect();
        let table = MomentTable::from_exact(&lags, &qs, |h, q| h.powf(p.theoretical_a(q).unwrap().value().unwrap()));
        let ratios: Vec<f64> = qs.iter().map(|&q| scaling_exponent(&table, q).unwrap().slope / q).collect();
        for w in ratios.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{ratios:?}");
        }
    }

    #[test]
    fn slope_ignores_a_constant_factor(
        slope in -2.0f64..4.0,
        noise in prop::collection::vec(0.5f64..2.0, 10),
        c in 1e-6f64..1e6,
    ) {
        let lags: Vec<f64> = dyadic_lags(-12, -3);
        let mut table = MomentTable::from_exact(&lags, &[2.0], |h, _| h.powf(slope));
        let mut entries = table.entries().to_vec();
        for (e, z) in entries.iter_mut().zip(&noise) {
            e.moment.estimate *= z;
            e.moment.stderr = 0.1 * e.moment.estimate * z;
        }
        table = MomentTable::new(entries);
        let a = scaling_exponent(&table, 2.0).unwrap();
        let b = scaling_exponent(&table.scaled(c), 2.0).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-9, "{} vs {}", a.slope, b.slope);
        prop_assert!((b.intercept - a.intercept - c.ln()).abs() < 1e-8);
    }

    #[test]
    fn theory_ratio_decreases_on_a_dense_grid(p in params()) {
        let qs = safe_orders(&p, 400);
        let finite: Vec<f64> =
            qs.iter().filter_map(|&q| p.theoretical_a(q).unwrap().value().map(|a| a / q)).collect();
        for w in finite.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn theory_branch_structure(p in params()) {
        let slope = p.multiscaling_slope();
        prop_assert!(slope < 0.5);
        prop_assert_eq!(slope < 0.0, p.gamma() < 2.0);
        let qs = p.q_star();
        let left = p.diffusive_branch(qs - 1e-9);
        let right = p.multiscaling_branch(qs + 1e-9);
        prop_assert!((left - right).abs() < 1e-6);
        prop_assert!((p.diffusive_branch(qs) - p.stationary_tail_exponent()).abs() < 1e-12);
        prop_assert!((p.multiscaling_branch(qs) - p.stationary_tail_exponent()).abs() < 1e-9);
        if let Some(b) = p.blowup_q() {
            prop_assert!(matches!(p.theoretical_a(b + 0.1).unwrap(), ScalingValue::NegInfinite));
        }
    }

    #[test]
    fn linear_theory_is_diffusive_below_the_cap(alpha in 0.6f64..5.0, q in 1.0f64..10.0) {
        let m = TheoryModel::Linear { alpha: Some(alpha) };
        prop_assume!((q - 2.0 * alpha).abs() > 1e-9);
        match m.a(q).unwrap() {
            ScalingValue::Finite { value, .. } => {
                prop_assert!(q < 2.0 * alpha);
                prop_assert_eq!(value, q / 2.0);
            }
            ScalingValue::NegInfinite => prop_assert!(q > 2.0 * alpha),
        }
    }

    #[test]
    fn hill_scale_invariance(alpha in 0.5f64..4.0, c in 1e-3f64..1e3, seed in 0u64..1000) {
        let mut rng = seeded(seed);
        let xs: Vec<f64> = (0..2000).map(|_| f64::open01(&mut rng).powf(-1.0 / alpha)).collect();
        let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
        let a = hill_estimator(&xs, 100).unwrap().tail_index;
        let b = hill_estimator(&scaled, 100).unwrap().tail_index;
        prop_assert!(rel(a, b) < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn single_precision_tracks_double(c in 0.1f64..3.0, g in 1.0f64..3.0, v in 0.01f64..100.0, t in 0.0f64..5.0) {
        let d64 = DriftSpec::power_law(c, g).unwrap();
        let d32 = DriftSpec::power_law(c as f32, g as f32).unwrap();
        let (v32, t32) = (v as f32, t as f32);
        prop_assert!(rel(d32.flow(v32, t32) as f64, d64.flow(v as f32 as f64, t as f32 as f64)) < 1e-4);
        let i64 = d64.integrated_flow(v as f32 as f64, t as f32 as f64);
        prop_assert!(rel(d32.integrated_flow(v32, t32) as f64, i64) < 1e-4);
    }
}

#[test]
fn replica_streams_do_not_depend_on_the_pool_size() {
    let sub = SubordinatorSpec::pareto(0.0, 1.0, 1.0, 1.0).unwrap();
    let drift = DriftSpec::power_law(1.0, 3.0).unwrap();
    let lags = dyadic_lags(-8, -3);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            simulate_increments(
                &sub,
                &drift,
                &lags,
                2000,
                InitialState::Stationary { burn_in: 50.0 },
                &StreamFactory::new(9, Domain::Increments),
            )
            .unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}
