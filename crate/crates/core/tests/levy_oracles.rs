use msv_core::levy::SubordinatorSpec;
use msv_core::stream::{seeded, Domain, StreamFactory};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn pareto(drift: f64, rate: f64, x_min: f64, alpha: f64) -> SubordinatorSpec<f64> {
    SubordinatorSpec::pareto(drift, rate, x_min, alpha).unwrap()
}

#[test]
fn pareto_median_from_a_million_draws() {
    let s = pareto(0.0, 1.0, 1.0, 1.0);
    let mut rng = seeded(11);
    let mut xs: Vec<f64> = (0..1_000_000).map(|_| s.sample_jump(&mut rng)).collect();
    let mid = xs.len() / 2;
    let (_, median, _) = xs.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    assert!((*median - 2.0).abs() < 0.01, "median {median}");
    assert!(xs.iter().all(|&x| x >= 1.0));
}

#[test]
fn poisson_counts_match_the_pmf() {
    let two = pareto(0.0, 2.0, 1.0, 1.0);
    let mut rng = seeded(12);
    let n = 100_000;
    let mean = (0..n).map(|_| two.sample_jump_times(1.0, &mut rng).len()).sum::<usize>() as f64 / n as f64;
    assert!((mean - 2.0).abs() < 0.03, "mean count {mean}");

    let one = pareto(0.0, 1.0, 1.0, 1.0);
    let zeros = (0..n).filter(|_| one.sample_jump_times(1.0, &mut rng).is_empty()).count() as f64 / n as f64;
    assert!((zeros - (-1f64).exp()).abs() < 0.005, "P(count = 0) = {zeros}");
}

#[test]
fn jump_times_are_strictly_increasing_in_the_horizon() {
    let s = pareto(0.0, 50.0, 1.0, 1.0);
    let mut rng = seeded(13);
    for _ in 0..1000 {
        let t = s.sample_jump_times(0.7, &mut rng);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t.iter().all(|&x| x > 0.0 && x <= 0.7));
    }
}

fn counts_histogram(counts: &[usize], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &c in counts {
        h[c.min(bins - 1)] += 1.0;
    }
    h
}

#[test]
fn poisson_thinning_consistency() {
    // counts on [0, h] and (h, 2h] from independent runs, summed, against
    // counts on [0, 2h]: two-sample chi-square homogeneity test at 1%
    let s = pareto(0.0, 1.5, 1.0, 1.0);
    let h = 1.0;
    let n = 100_000;
    let mut rng = seeded(14);
    let split: Vec<usize> =
        (0..n).map(|_| s.sample_jump_times(h, &mut rng).len() + s.sample_jump_times(h, &mut rng).len()).collect();
    let whole: Vec<usize> = (0..n).map(|_| s.sample_jump_times(2.0 * h, &mut rng).len()).collect();
    let bins = 9;
    let a = counts_histogram(&split, bins);
    let b = counts_histogram(&whole, bins);
    let mut stat = 0.0;
    for k in 0..bins {
        let pooled = (a[k] + b[k]) / (2.0 * n as f64);
        let expected = pooled * n as f64;
        if expected > 0.0 {
            stat += (a[k] - expected).powi(2) / expected + (b[k] - expected).powi(2) / expected;
        }
    }
    let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

#[test]
fn laplace_transform_by_monte_carlo() {
    let s = pareto(0.3, 1.2, 1.0, 1.5);
    let factory = StreamFactory::new(15, Domain::Validation);
    let n = 1_000_000;
    for (ti, &t) in [0.5, 1.0].iter().enumerate() {
        let values: Vec<f64> = (0..n).map(|i| s.sample_value(t, &mut factory.stream((ti * n + i) as u64))).collect();
        for sv in [0.5, 1.0, 2.0] {
            let terms: Vec<f64> = values.iter().map(|l| (-sv * l).exp()).collect();
            let mean = terms.iter().sum::<f64>() / n as f64;
            let var = terms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let exact = (-t * s.laplace_exponent(sv).unwrap()).exp();
            assert!((mean - exact).abs() < 4.0 * se, "t={t} s={sv}: {mean} vs {exact} (se {se})");
        }
    }
}

#[test]
fn laplace_exponent_against_fine_grid_quadrature() {
    // Ψ(1) = 1 + ∫_1^∞ (1 − e^{−x}) 2 x^{−3} dx. Substituting x = 1/u² gives
    // 4 ∫_0^1 (1 − e^{−1/u²}) u³ du, a smooth integrand on [0, 1].
    let s = pareto(1.0, 1.0, 1.0, 2.0);
    let n = 2_000_000;
    let g = |u: f64| {
        if u == 0.0 {
            0.0
        } else {
            4.0 * u * u * u * -(-1.0 / (u * u)).exp_m1()
        }
    };
    let step = 1.0 / n as f64;
    let mut sum = 0.5 * (g(0.0) + g(1.0));
    for i in 1..n {
        sum += g(i as f64 * step);
    }
    let oracle = 1.0 + sum * step;
    let psi = s.laplace_exponent(1.0).unwrap();
    assert!((psi - oracle).abs() < 1e-6, "{psi} vs {oracle}");
}

#[test]
fn tail_mass_regular_variation_ratio() {
    let s = pareto(0.0, 1.0, 1.0, 1.5);
    for t in [10.0, 100.0, 1000.0] {
        let r = s.tail_mass(2.0 * t) / s.tail_mass(t);
        assert!((r - 2f64.powf(-1.5)).abs() < 1e-14);
    }
}
