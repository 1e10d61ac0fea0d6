//! Validation suites.
//!
//! `quick` runs the closed-form and quadrature checks on small grids. `full`
//! runs the acceptance criteria, including the Monte Carlo experiments on the
//! bundled configs in `configs/`.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use msv_core::levy::SubordinatorSpec;
use msv_core::stream::{Domain, StreamFactory};
use msv_core::theory::{ModelParams, ScalingValue};
use msv_core::volpath::{DriftSpec, GeneralDrift};
use msv_core::Scalar;

use crate::config::ExperimentConfig;
use crate::pipeline::{self, Outputs, RunError};
use crate::report::{ExperimentReport, Verdict};

pub const DIFFUSIVE_CONFIG: &str = include_str!("../configs/diffusive.toml");
pub const REFERENCE_CONFIG: &str = include_str!("../configs/reference.toml");
pub const DECREASING_CONFIG: &str = include_str!("../configs/decreasing.toml");
pub const OU_CONFIG: &str = include_str!("../configs/ou.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(id: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { id: id.to_string(), pass, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.id, self.detail)
    }
}

/// Oracle sizes; `full` uses the acceptance sizes.
struct Sizes {
    trapezoid_nodes: usize,
    laplace_draws: usize,
    median_draws: usize,
}

impl Sizes {
    fn of(level: Level) -> Self {
        match level {
            Level::Quick => Self { trapezoid_nodes: 100_000, laplace_draws: 100_000, median_draws: 1_000_000 },
            Level::Full => Self { trapezoid_nodes: 1_000_000, laplace_draws: 1_000_000, median_draws: 1_000_000 },
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn drifts() -> Vec<DriftSpec<f64>> {
    let mut d: Vec<DriftSpec<f64>> = [(1.0, 3.0), (0.5, 1.5), (2.0, 2.0), (1.0, 1.25)]
        .iter()
        .map(|&(c, g)| DriftSpec::power_law(c, g).unwrap())
        .collect();
    d.push(DriftSpec::linear(0.7).unwrap());
    d.push(DriftSpec::General(GeneralDrift::power_law(1.0, 2.5).unwrap()));
    d
}

/// Largest relative error of `φ_t(φ_s(v)) = φ_{s+t}(v)` over a fixed grid.
pub fn semigroup_error(flow: impl Fn(f64, f64) -> f64) -> f64 {
    let vs = [1e-2, 0.5, 1.0, 7.0, 300.0];
    let ts = [0.01, 0.3, 2.5];
    let mut worst = 0.0f64;
    for &v in &vs {
        for &s in &ts {
            for &t in &ts {
                worst = worst.max(rel(flow(flow(v, s), t), flow(v, s + t)));
            }
        }
    }
    worst
}

pub fn semigroup_check(flow: impl Fn(f64, f64) -> f64) -> (bool, f64) {
    let e = semigroup_error(flow);
    (e <= 1e-9, e)
}

/// Closed-form flow of `C v^γ` with the exponent of the bracket
/// deliberately wrong. Used as a mutation fixture for the semigroup check.
pub fn tampered_flow(c: f64, gamma: f64) -> impl Fn(f64, f64) -> f64 {
    move |v: f64, t: f64| v * (1.0 + (gamma - 1.0) * c * t * v.powf(gamma - 1.0)).powf(-1.0 / gamma)
}

fn trapezoid(f: impl Fn(f64) -> f64, t: f64, n: usize) -> f64 {
    let h = t / n as f64;
    let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
    h * (0.5 * (f(0.0) + f(t)) + inner)
}

fn exactness(level: Level) -> CheckResult {
    let sizes = Sizes::of(level);
    let mut notes = Vec::new();
    let mut pass = true;

    let worst = drifts().iter().map(|d| semigroup_error(|v, t| d.flow(v, t))).fold(0.0, f64::max);
    pass &= worst <= 1e-9;
    notes.push(format!("semigroup max rel {worst:.1e} (<= 1e-9)"));

    let mut worst = 0.0f64;
    for d in drifts().iter().filter(|d| !matches!(d, DriftSpec::General(_))) {
        for &(v, t) in &[(0.5, 1.0), (2.0, 0.7), (10.0, 0.2)] {
            let quad = trapezoid(|s| d.flow(v, s), t, sizes.trapezoid_nodes);
            worst = worst.max(rel(d.integrated_flow(v, t), quad));
        }
    }
    pass &= worst <= 1e-6;
    notes.push(format!("integrated_flow vs {}-node trapezoid max rel {worst:.1e} (<= 1e-6)", sizes.trapezoid_nodes));

    let sub = SubordinatorSpec::pareto(0.1f64, 1.0, 1.0, 1.0).unwrap();
    let streams = StreamFactory::new(0, Domain::Validation);
    let mut worst_z = 0.0f64;
    for (i, &(t, s)) in [(0.5, 1.0), (1.0, 0.3), (2.0, 2.0)].iter().enumerate() {
        let mut rng = streams.stream(i as u64);
        let n = sizes.laplace_draws;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let y = (-s * sub.sample_value(t, &mut rng)).exp();
            sum += y;
            sum2 += y * y;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
        let exact = (-t * sub.laplace_exponent(s).unwrap()).exp();
        worst_z = worst_z.max((mean - exact).abs() / se);
    }
    pass &= worst_z <= 4.0;
    notes.push(format!("Laplace MC worst |z| {worst_z:.2} (<= 4)"));

    let mut rng = streams.stream(3);
    let mut draws: Vec<f64> = (0..sizes.median_draws).map(|_| sub.sample_jump(&mut rng)).collect();
    let mid = draws.len() / 2;
    let (_, median, _) = draws.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    // Pareto(x_min = 1, α = 1) has median 2
    pass &= (median - 2.0).abs() <= 0.01;
    notes.push(format!("Pareto median {median:.4} vs 2 (±0.01)"));

    CheckResult::new("6 exactness oracles", pass, notes.join("; "))
}

fn random_params(n: usize) -> Vec<ModelParams<f64>> {
    let mut rng = StreamFactory::new(0, Domain::Validation).stream(100);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let alpha = 0.1 + 4.9 * f64::open01(&mut rng);
        let gamma = 1.01 + 3.99 * f64::open01(&mut rng);
        if let Ok(p) = ModelParams::new(alpha, gamma) {
            out.push(p);
        }
    }
    out
}

fn theory_algebra() -> CheckResult {
    let mut params = vec![ModelParams::new(1.0, 3.0).unwrap(), ModelParams::new(1.0, 1.5).unwrap()];
    params.extend(random_params(50));
    let mut notes = Vec::new();

    let gap = params
        .iter()
        .map(|p| {
            let q = p.q_star();
            (p.diffusive_branch(q) - p.multiscaling_branch(q)).abs()
        })
        .fold(0.0, f64::max);
    let continuous = gap <= 1e-6;
    notes.push(format!("branch gap at q* {gap:.1e} (<= 1e-6)"));

    let grid: Vec<f64> = (0..100).map(|i| 1.0 + 11.0 * i as f64 / 99.0).collect();
    let mut violations = 0;
    for p in &params {
        let ratios: Vec<f64> = grid
            .iter()
            .filter_map(|&q| match p.theoretical_a(q) {
                Ok(ScalingValue::Finite { value, .. }) => Some(value / q),
                Ok(ScalingValue::NegInfinite) => Some(f64::NEG_INFINITY),
                Err(_) => None,
            })
            .collect();
        violations += ratios.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
    }
    let monotone = violations == 0;
    notes.push(format!("A(q)/q increases at {violations} of the grid steps over {} parameter sets", params.len()));

    let slopes: Vec<f64> = random_params(50).iter().map(|p| p.multiscaling_slope()).collect();
    let top = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let below_half = top < 0.5;
    notes.push(format!("max second-branch slope over 50 random (α, γ) {top:.4} (< 0.5)"));

    CheckResult::new("7 theory algebra", continuous && monotone && below_half, notes.join("; "))
}

fn mutation_fixture() -> CheckResult {
    let (pass, e) = semigroup_check(tampered_flow(1.0, 3.0));
    CheckResult::new(
        "semigroup check rejects a tampered flow",
        !pass,
        format!("tampered flow semigroup max rel {e:.1e}"),
    )
}

/// One run of a bundled config with the seed and worker count overridden.
pub struct Run {
    pub config: ExperimentConfig,
    pub outputs: Outputs,
    pub report: ExperimentReport,
}

pub fn run_config(text: &str, seed: u64, workers: usize) -> Result<Run, RunError> {
    let mut config = ExperimentConfig::parse(text)?;
    config.apply_overrides(Some(seed), Some(workers), None);
    let model = config.validate()?;
    let outputs = pipeline::run_stages(&config, &model)?;
    let report = ExperimentReport::new(&config, &model, &outputs);
    Ok(Run { config, outputs, report })
}

fn verdicts_named<'a>(report: &'a ExperimentReport, checks: &[&str]) -> Vec<&'a Verdict> {
    report.verdicts.iter().filter(|v| checks.contains(&v.check.as_str())).collect()
}

fn from_verdicts(id: &str, report: &ExperimentReport, checks: &[&str]) -> CheckResult {
    let vs = verdicts_named(report, checks);
    let pass = vs.len() == checks.len() && vs.iter().all(|v| v.pass);
    let mut detail: Vec<String> = vs.iter().map(|v| format!("{}: {}", v.check, v.detail)).collect();
    if vs.len() != checks.len() {
        detail.push(format!("expected verdicts {checks:?}"));
    }
    CheckResult::new(id, pass, detail.join("; "))
}

fn scratch_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("msv-validate-{}-{tag}", std::process::id()))
}

fn csv_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            out.extend(csv_files(&path)?);
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Runs `text` twice into fresh directories and compares every CSV byte for
/// byte.
pub fn determinism(text: &str, seed: u64, workers: usize) -> Result<CheckResult, RunError> {
    let dirs = [scratch_dir("a"), scratch_dir("b")];
    let mut listings = Vec::new();
    for dir in &dirs {
        let _ = fs::remove_dir_all(dir);
        let mut config = ExperimentConfig::parse(text)?;
        config.apply_overrides(Some(seed), Some(workers), Some(dir));
        let model = config.validate()?;
        let out = pipeline::run_stages(&config, &model)?;
        pipeline::write_artifacts(dir, &config, &model, &out)?;
        let files = csv_files(dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;
        let contents = files
            .iter()
            .map(|f| {
                let bytes = fs::read(f).map_err(|source| RunError::Io { path: f.clone(), source })?;
                Ok((f.strip_prefix(dir).unwrap().to_path_buf(), bytes))
            })
            .collect::<Result<Vec<_>, RunError>>()?;
        listings.push(contents);
    }
    for dir in &dirs {
        let _ = fs::remove_dir_all(dir);
    }
    let names: Vec<String> = listings[0].iter().map(|(p, _)| p.display().to_string()).collect();
    let pass = !listings[0].is_empty() && listings[0] == listings[1];
    Ok(CheckResult::new(
        "8 determinism",
        pass,
        format!("{} CSVs ({}) {}", names.len(), names.join(", "), if pass { "byte-identical" } else { "differ" }),
    ))
}

/// Runs the suite. Monte Carlo criteria use `seed` and `workers`.
pub fn validate(level: Level, seed: u64, workers: usize) -> Result<Vec<CheckResult>, RunError> {
    let mut results = Vec::new();
    if level == Level::Full {
        info!("criterion 1: diffusive branch at 1e5 replicas");
        let run = run_config(DIFFUSIVE_CONFIG, seed, workers)?;
        results.push(from_verdicts("1 diffusive branch", &run.report, &["A(1)", "A(2)", "A(3)"]));

        info!("criteria 2 and 4: reference model at 1e6 replicas");
        let run = run_config(REFERENCE_CONFIG, seed, workers)?;
        results.push(from_verdicts("2 multiscaling branch", &run.report, &["A(8)"]));
        let reference = run.report;

        info!("criterion 3: decreasing regime, tilted sampler");
        let run = run_config(DECREASING_CONFIG, seed, workers)?;
        results.push(from_verdicts("3 decreasing regime", &run.report, &["A(3.5)", "A(5)"]));

        results.push(from_verdicts("4 stationary tail", &reference, &["stationary_tail"]));

        info!("criterion 5: linear drift control");
        let run = run_config(OU_CONFIG, seed, workers)?;
        results.push(from_verdicts("5 linear drift control", &run.report, &["A(1)", "A(2)", "A(4)"]));
    }
    results.push(exactness(level));
    results.push(theory_algebra());
    if level == Level::Full {
        info!("criterion 8: determinism");
        results.push(determinism(DIFFUSIVE_CONFIG, seed, workers)?);
    }
    results.push(mutation_fixture());
    Ok(results)
}
