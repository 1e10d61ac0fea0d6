//! Experiment stages and their CSV artifacts.
//!
//! Streams: replica `r` of the increment table uses stream `r` of domain
//! `Increments` under the master seed; stationary draw `i` of the tail check
//! uses stream `i` of domain `Stationary`; exported path `j` uses stream `j`
//! of domain `Diagnostics`. None of this depends on the worker count.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use msv_core::estimators::{default_hill_k, hill_estimator, HillEstimate, MomentSource, MomentTable, ScalingCurve};
use msv_core::pricing::{simulate_increments, IncrementTable, InitialState};
use msv_core::stream::{Domain, StreamFactory};
use msv_core::theory::{write_theory_csv, TheoryModel};
use msv_core::tilt::{simulate_tilted_increments, JumpTilt};
use msv_core::volpath::{self, VolatilityPath};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Model, Sampler};

pub const INCREMENTS_CSV: &str = "increments.csv";
pub const WEIGHTS_CSV: &str = "weights.csv";
pub const MOMENTS_CSV: &str = "moments.csv";
pub const SCALING_CSV: &str = "scaling.csv";
pub const THEORY_CSV: &str = "theory.csv";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// A module error, tagged with the config section that set it up.
    #[error("{key}: {message}")]
    Module { key: &'static str, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn module(key: &'static str) -> impl Fn(String) -> RunError {
    move |message| RunError::Module { key, message }
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Runs `f` on a pool of exactly `workers` threads.
pub fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool").install(f)
}

pub fn simulate(cfg: &ExperimentConfig, model: &Model) -> Result<IncrementTable<f64>, RunError> {
    let streams = StreamFactory::new(cfg.simulation.seed, Domain::Increments);
    let n = cfg.simulation.n_paths;
    let table = match (cfg.simulation.sampler, model.initial) {
        (Sampler::Tilted, InitialState::Stationary { burn_in }) => simulate_tilted_increments(
            &model.subordinator,
            &model.drift,
            &model.lags,
            n,
            burn_in,
            JumpTilt::default(),
            &streams,
        ),
        (_, init) => simulate_increments(&model.subordinator, &model.drift, &model.lags, n, init, &streams),
    };
    table.map_err(|e| e.to_string()).map_err(module("simulation"))
}

pub fn estimate(
    cfg: &ExperimentConfig,
    model: &Model,
    table: &IncrementTable<f64>,
) -> Result<(MomentTable<f64>, ScalingCurve<f64>), RunError> {
    let source = MomentSource::from(cfg.estimation.source);
    let moments = MomentTable::from_increments(table, &cfg.estimation.q, source)
        .map_err(|e| e.to_string())
        .map_err(module("estimation"))?;
    let curve = ScalingCurve::build(&moments, &cfg.estimation.q, model.theory.as_ref());
    Ok((moments, curve))
}

/// Hill estimate of the stationary tail against `α + γ − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryTail {
    pub draws: usize,
    pub hill: HillEstimate<f64>,
    /// `None` when the drift is not superlinear.
    pub theory: Option<f64>,
}

pub fn stationary_tail(cfg: &ExperimentConfig, model: &Model) -> Result<Option<StationaryTail>, RunError> {
    let n = cfg.estimation.hill_draws;
    if n == 0 {
        return Ok(None);
    }
    let streams = StreamFactory::new(cfg.simulation.seed, Domain::Stationary);
    let draws = volpath::stationary_samples(&model.subordinator, &model.drift, cfg.simulation.burn_in, n, &streams)
        .map_err(|e| e.to_string())
        .map_err(module("simulation"))?;
    let k = cfg.estimation.hill_k.unwrap_or_else(|| default_hill_k(n));
    let hill = hill_estimator(&draws, k).map_err(|e| e.to_string()).map_err(module("estimation"))?;
    let theory = match model.theory {
        Some(TheoryModel::Superlinear(p)) => Some(p.stationary_tail_exponent()),
        _ => None,
    };
    Ok(Some(StationaryTail { draws: n, hill, theory }))
}

pub fn sample_paths(cfg: &ExperimentConfig, model: &Model) -> Result<Vec<VolatilityPath<f64>>, RunError> {
    let streams = StreamFactory::new(cfg.simulation.seed, Domain::Diagnostics);
    let horizon = model.lags[model.lags.len() - 1];
    (0..cfg.output.export_paths as u64)
        .map(|j| {
            let mut rng = streams.stream(j);
            let v0 = match model.initial {
                InitialState::Stationary { burn_in } => {
                    volpath::stationary_sample(&model.subordinator, &model.drift, burn_in, &mut rng)
                        .map_err(|e| e.to_string())
                        .map_err(module("simulation"))?
                }
                InitialState::Fixed(v) => v,
            };
            Ok(volpath::simulate_path(&model.subordinator, &model.drift, v0, horizon, &mut rng))
        })
        .collect()
}

/// Dense plotting grid for the theoretical curve, skipping exact
/// thresholds.
pub fn theory_grid(model: &TheoryModel<f64>, qs: &[f64]) -> Vec<f64> {
    let top = qs.iter().copied().fold(10.0, f64::max).ceil();
    let thresholds = model.thresholds();
    (0..=((top - 1.0) * 20.0).round() as usize)
        .map(|i| 1.0 + i as f64 * 0.05)
        .filter(|q| !thresholds.contains(q))
        .collect()
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf), RunError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_at(&path))?;
    Ok((BufWriter::new(file), path))
}

fn write_with(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<PathBuf, RunError> {
    let (mut w, path) = create(dir, name)?;
    f(&mut w).and_then(|_| w.flush()).map_err(io_at(&path))?;
    Ok(path)
}

pub fn write_increments(dir: &Path, table: &IncrementTable<f64>) -> Result<(), RunError> {
    write_with(dir, INCREMENTS_CSV, |w| table.write_csv(w))?;
    if table.weights().is_some() {
        write_with(dir, WEIGHTS_CSV, |w| table.write_weights_csv(w))?;
    }
    Ok(())
}

/// Reads `increments.csv`, and `weights.csv` when the config uses the
/// tilted sampler.
pub fn read_increments(dir: &Path, cfg: &ExperimentConfig) -> Result<IncrementTable<f64>, RunError> {
    let open = |name: &str| {
        let path = dir.join(name);
        File::open(&path).map(BufReader::new).map_err(|source| RunError::Io { path, source })
    };
    let table =
        IncrementTable::read_csv(open(INCREMENTS_CSV)?).map_err(|e| e.to_string()).map_err(module("simulation"))?;
    if cfg.simulation.sampler != Sampler::Tilted {
        return Ok(table);
    }
    let weights = IncrementTable::<f64>::read_weights_csv(open(WEIGHTS_CSV)?)
        .map_err(|e| e.to_string())
        .map_err(module("simulation"))?;
    table.with_weights(weights).map_err(|e| e.to_string()).map_err(module("simulation"))
}

pub fn write_estimates(dir: &Path, moments: &MomentTable<f64>, curve: &ScalingCurve<f64>) -> Result<(), RunError> {
    write_with(dir, MOMENTS_CSV, |w| moments.write_csv(w))?;
    write_with(dir, SCALING_CSV, |w| curve.write_csv(w))?;
    Ok(())
}

pub fn write_theory(dir: &Path, cfg: &ExperimentConfig, model: &Model) -> Result<bool, RunError> {
    let Some(theory) = &model.theory else {
        return Ok(false);
    };
    let grid = theory_grid(theory, &cfg.estimation.q);
    write_with(dir, THEORY_CSV, |w| write_theory_csv(theory, &grid, w))?;
    Ok(true)
}

pub fn write_paths(dir: &Path, model: &Model, paths: &[VolatilityPath<f64>]) -> Result<(), RunError> {
    let sub = dir.join("paths");
    for (j, p) in paths.iter().enumerate() {
        write_with(&sub, &format!("path_{j}.csv"), |w| p.write_csv(&model.drift, w))?;
    }
    Ok(())
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub table: IncrementTable<f64>,
    pub moments: MomentTable<f64>,
    pub curve: ScalingCurve<f64>,
    pub tail: Option<StationaryTail>,
    pub paths: Vec<VolatilityPath<f64>>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(&'static str, f64)>,
}

/// Simulation, estimation and the stationary tail check, on a pool of
/// `simulation.workers` threads.
pub fn run_stages(cfg: &ExperimentConfig, model: &Model) -> Result<Outputs, RunError> {
    with_pool(cfg.simulation.workers, || {
        let mut timings = Vec::new();
        let mut clock = Instant::now();
        let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
            let s = clock.elapsed().as_secs_f64();
            info!("{name}: {s:.2} s");
            timings.push((name, s));
            clock = Instant::now();
        };
        let table = simulate(cfg, model)?;
        lap("simulate", &mut timings);
        let (moments, curve) = estimate(cfg, model, &table)?;
        lap("estimate", &mut timings);
        let tail = stationary_tail(cfg, model)?;
        lap("stationary_tail", &mut timings);
        let paths = sample_paths(cfg, model)?;
        Ok(Outputs { table, moments, curve, tail, paths, timings })
    })
}

/// Writes every CSV artifact of a run into `dir`.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, model: &Model, out: &Outputs) -> Result<(), RunError> {
    if cfg.output.write_increments {
        write_increments(dir, &out.table)?;
    }
    write_estimates(dir, &out.moments, &out.curve)?;
    write_theory(dir, cfg, model)?;
    write_paths(dir, model, &out.paths)?;
    Ok(())
}
