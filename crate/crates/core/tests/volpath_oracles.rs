use msv_core::levy::SubordinatorSpec;
use msv_core::stream::{seeded, Domain, StreamFactory};
use msv_core::volpath::{
    burn_in_diagnostic, integrated_flow, simulate_path, stationary_samples, DriftSpec, GeneralDrift, VolatilityPath,
};

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let step = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * step);
    }
    s * step
}

fn drifts() -> Vec<DriftSpec<f64>> {
    vec![
        DriftSpec::power_law(1.0, 3.0).unwrap(),
        DriftSpec::power_law(0.7, 1.5).unwrap(),
        DriftSpec::power_law(2.0, 2.0).unwrap(),
        DriftSpec::power_law(1.3, 1.02).unwrap(),
        DriftSpec::linear(0.8).unwrap(),
        DriftSpec::General(GeneralDrift::new("v+v^2", |v: f64| v + v * v, Some(2.0)).unwrap()),
    ]
}

#[test]
fn integrated_flow_against_trapezoid() {
    for d in drifts() {
        for (v0, t) in [(1.0, 1.0), (5.0, 0.3), (0.2, 4.0)] {
            let exact = integrated_flow(v0, t, &d);
            let oracle = trapezoid(|s| d.flow(v0, s), 0.0, t, 200_000);
            assert!((exact - oracle).abs() < 1e-6 * oracle, "{d:?} v0={v0} t={t}: {exact} vs {oracle}");
        }
    }
}

#[test]
fn general_integrator_matches_closed_forms() {
    for (c, g) in [(1.0f64, 3.0), (0.5, 1.5), (1.0, 2.0), (2.0, 1.0)] {
        let closed = DriftSpec::power_law(c, g).unwrap();
        let general = DriftSpec::General(GeneralDrift::power_law(c, g).unwrap());
        for (v0, t) in [(1.0, 1.5), (40.0, 0.01), (0.3, 7.0)] {
            let (a, b) = (closed.flow(v0, t), general.flow(v0, t));
            assert!((a - b).abs() < 1e-8 * a, "flow C={c} γ={g}: {a} vs {b}");
            let (a, b) = (closed.integrated_flow(v0, t), general.integrated_flow(v0, t));
            assert!((a - b).abs() < 1e-8 * a, "integral C={c} γ={g}: {a} vs {b}");
        }
    }
}

#[test]
fn three_jump_path_integral_against_trapezoid() {
    for d in drifts() {
        let path = VolatilityPath::from_jumps(&d, 0.0, 0.8, 2.0, &[(0.3, 1.5), (0.9, 4.0), (1.6, 0.25)]).unwrap();
        for (t0, t1) in [(0.0, 2.0), (0.1, 1.7), (0.5, 0.95)] {
            let exact = path.integrated_variance(&d, t0, t1).unwrap();
            let mut oracle = 0.0;
            let mut edges = vec![t0];
            edges.extend(path.jump_times().into_iter().filter(|&t| t > t0 && t < t1));
            edges.push(t1);
            for w in edges.windows(2) {
                // V is continuous on each open piece; value_before supplies the
                // left limit at the right end
                oracle += trapezoid(
                    |s| {
                        if s == w[1] {
                            path.value_before(&d, s)
                        } else {
                            path.value_at(&d, s)
                        }
                    },
                    w[0],
                    w[1],
                    100_000,
                );
            }
            assert!((exact - oracle).abs() < 1e-6 * oracle, "{d:?} [{t0},{t1}]: {exact} vs {oracle}");
        }
    }
}

#[test]
fn subordinator_drift_path_integral_against_trapezoid() {
    let d = DriftSpec::power_law(1.0, 3.0).unwrap();
    let path = VolatilityPath::from_jumps(&d, 0.4, 0.1, 1.0, &[(0.5, 2.0)]).unwrap();
    let exact = path.integrated_variance(&d, 0.0, 1.0).unwrap();
    let oracle = trapezoid(|s| path.value_before(&d, s), 0.0, 0.5, 500_000)
        + trapezoid(
            |s| {
                if s == 1.0 {
                    path.value_before(&d, s)
                } else {
                    path.value_at(&d, s)
                }
            },
            0.5,
            1.0,
            500_000,
        );
    assert!((exact - oracle).abs() < 1e-6 * oracle, "{exact} vs {oracle}");
}

#[test]
fn flow_examples() {
    let cubic = DriftSpec::power_law(1.0f64, 3.0).unwrap();
    assert!((cubic.flow(1.0, 1.5) - 0.5).abs() < 1e-15);
    let square = DriftSpec::power_law(1.0f64, 2.0).unwrap();
    assert!((square.flow(1.0, 1.0) - 0.5).abs() < 1e-15);
    assert!((integrated_flow(1.0, 1.0, &square) - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn simulated_paths_obey_comparison_bounds() {
    let sub = SubordinatorSpec::pareto(0.2, 3.0, 1.0, 1.0).unwrap();
    for d in drifts() {
        let mut rng = seeded(21);
        for _ in 0..200 {
            let path = simulate_path(&sub, &d, 0.5, 2.0, &mut rng);
            for k in 0..=40 {
                let t = k as f64 * 0.05;
                let v = path.value_at(&d, t);
                let upper = 0.5 + path.jump_total(t) + 0.2 * t;
                assert!(v <= upper * (1.0 + 1e-12), "{d:?} t={t}: {v} > {upper}");
                assert!(v >= d.flow(0.5, t) * (1.0 - 1e-12));
            }
            for (e, post) in path.jumps().iter().zip(path.post_jump_values()) {
                let before = path.value_before(&d, e.time);
                assert!((post - (before + e.size)).abs() <= 1e-12 * post);
            }
        }
    }
}

#[test]
fn ou_stationary_mean_balances_inflow() {
    // E V = λ E J / C for f(v) = C v; Pareto(x_min = 1, α = 3) has mean 1.5
    let sub = SubordinatorSpec::pareto(0.0, 2.0, 1.0, 3.0).unwrap();
    let d = DriftSpec::linear(1.5).unwrap();
    let f = StreamFactory::new(22, Domain::Stationary);
    let v = stationary_samples(&sub, &d, 30.0, 200_000, &f).unwrap();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let target = 2.0 * 1.5 / 1.5;
    assert!((mean - target).abs() < 4.0 * sd / n.sqrt(), "mean {mean} vs {target}");
}

#[test]
fn burn_in_halves_are_indistinguishable() {
    let sub = SubordinatorSpec::pareto(0.0, 1.0, 1.0, 1.0).unwrap();
    let d = DriftSpec::power_law(1.0, 3.0).unwrap();
    let diag = burn_in_diagnostic(&sub, &d, 200.0, 20_000, &StreamFactory::new(23, Domain::Stationary)).unwrap();
    assert!(diag.p_value > 0.001, "{diag:?}");
}
