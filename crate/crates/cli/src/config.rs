//! Experiment configuration.
//!
//! The file is TOML restricted to flat sections (no nested tables, no
//! arrays of tables):
//!
//! ```toml
//! [subordinator]
//! drift = 0.0          # m
//! jump_rate = 1.0
//! alpha = 1.0
//! x_min = 1.0
//! # epsilon = 2.0      # keep only jumps >= epsilon
//!
//! [drift]
//! drift_kind = "power_law"   # power_law | linear | general
//! C = 1.0
//! gamma = 3.0
//!
//! [simulation]
//! lag_exponents = [-12, -3]  # or lags = [...]
//! n_paths = 100000
//! seed = 1
//!
//! [estimation]
//! q = [1.0, 2.0, 3.0]
//! ```
//!
//! `drift_kind = "general"` runs `C v^γ` through the numerical integrator
//! instead of the closed forms.

use std::fmt;
use std::path::{Path, PathBuf};

use log::warn;
use msv_core::estimators::{MomentSource, MIN_LAGS, THRESHOLD_MARGIN};
use msv_core::levy::{LevyError, SubordinatorSpec};
use msv_core::pricing::{dyadic_lags, InitialState};
use msv_core::theory::TheoryModel;
use msv_core::tilt::JumpTilt;
use msv_core::volpath::{self, DriftSpec, GeneralDrift, VolError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JumpLawKind {
    #[default]
    Pareto,
    Atoms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubordinatorSection {
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub jump_law: JumpLawKind,
    pub jump_rate: Option<f64>,
    pub alpha: Option<f64>,
    pub x_min: Option<f64>,
    pub epsilon: Option<f64>,
    pub atom_sizes: Option<Vec<f64>>,
    pub atom_rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    PowerLaw,
    Linear,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub drift_kind: DriftKind,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    #[default]
    Stationary,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    #[default]
    Plain,
    /// Importance sampling of large recent jumps, see [`msv_core::tilt`].
    Tilted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub lags: Option<Vec<f64>>,
    /// Dyadic grid `2^lo ..= 2^hi`.
    pub lag_exponents: Option<[i32; 2]>,
    pub n_paths: usize,
    pub burn_in: f64,
    pub initial: Initial,
    pub v0: Option<f64>,
    pub sampler: Sampler,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            lags: None,
            lag_exponents: None,
            n_paths: 100_000,
            burn_in: volpath::DEFAULT_BURN_IN,
            initial: Initial::Stationary,
            v0: None,
            sampler: Sampler::Plain,
            seed: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Increments,
    Conditional,
}

impl From<SourceKind> for MomentSource {
    fn from(s: SourceKind) -> Self {
        match s {
            SourceKind::Increments => MomentSource::Increments,
            SourceKind::Conditional => MomentSource::Conditional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    pub q: Vec<f64>,
    pub source: SourceKind,
    /// Stationary draws for the tail-index check; 0 skips it.
    pub hill_draws: usize,
    /// Upper order statistics used by the Hill estimator; `n^{2/3}` if unset.
    pub hill_k: Option<usize>,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self { q: vec![1.0, 2.0, 3.0], source: SourceKind::Increments, hill_draws: 0, hill_k: None }
    }
}

/// Tolerances of the verdicts in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksSection {
    pub diffusive_tolerance: f64,
    pub multiscaling_tolerance: f64,
    pub min_r2: f64,
    pub hill_tolerance: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self { diffusive_tolerance: 0.05, multiscaling_tolerance: 0.25, min_r2: 0.98, hill_tolerance: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// `increments.csv` has one row per replica and lag; large runs may
    /// skip it.
    pub write_increments: bool,
    /// Number of sample paths exported to `paths/`.
    pub export_paths: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), write_increments: true, export_paths: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subordinator: SubordinatorSection,
    pub drift: DriftSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Validated model objects built from a config.
#[derive(Debug, Clone)]
pub struct Model {
    pub subordinator: SubordinatorSpec<f64>,
    /// Drift of the jumps removed by `epsilon`, plus `m`: the error bound of
    /// the truncation.
    pub truncation_residual: Option<f64>,
    pub drift: DriftSpec<f64>,
    pub lags: Vec<f64>,
    pub initial: InitialState<f64>,
    pub theory: Option<TheoryModel<f64>>,
    /// Why `theory` is absent.
    pub theory_note: Option<String>,
    /// `(requested, used)` orders moved away from a threshold.
    pub adjusted_orders: Vec<(f64, f64)>,
}

fn positive(key: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(key, format!("{x} must be positive and finite")))
    }
}

fn required(key: &str, x: Option<f64>) -> Result<f64, ConfigError> {
    x.ok_or_else(|| invalid(key, "required"))
}

fn absent<T>(key: &str, x: &Option<T>, why: &str) -> Result<(), ConfigError> {
    match x {
        Some(_) => Err(invalid(key, format!("not allowed {why}"))),
        None => Ok(()),
    }
}

fn levy_error(e: LevyError) -> ConfigError {
    match e {
        LevyError::InvalidParameter { name, value, reason } => {
            invalid(format!("subordinator.{}", name.replace(' ', "_")), format!("{value} {reason}"))
        }
        LevyError::Degenerate { .. } => invalid("subordinator.epsilon", e),
        other => invalid("subordinator", other),
    }
}

fn vol_error(e: VolError) -> ConfigError {
    match e {
        VolError::InvalidDrift { name, .. } => invalid(format!("drift.{}", if name == "c" { "C" } else { name }), e),
        VolError::InvalidRegime { .. } => invalid("drift.gamma", format!("{e} with subordinator.alpha")),
        VolError::BurnIn(_) => invalid("simulation.burn_in", e),
        other => invalid("drift", other),
    }
}

/// Moves `q` to at least [`THRESHOLD_MARGIN`] from every threshold, on the
/// side it started on unless that leaves `q < 1`.
fn avoid_thresholds(q: f64, thresholds: &[f64]) -> Result<f64, ConfigError> {
    let mut out = q;
    for _ in 0..8 {
        let Some(&t) = thresholds.iter().find(|&&t| (out - t).abs() < THRESHOLD_MARGIN) else {
            return Ok(out);
        };
        let mut below = out < t || (out == t && t - THRESHOLD_MARGIN >= 1.0);
        if below && t - THRESHOLD_MARGIN < 1.0 {
            below = false;
        }
        out = if below { t - THRESHOLD_MARGIN } else { t + THRESHOLD_MARGIN };
        // rounding can leave the distance a hair short of the margin
        while (out - t).abs() < THRESHOLD_MARGIN {
            out = if below { out.next_down() } else { out.next_up() };
        }
    }
    Err(invalid(
        "estimation.q",
        format!("{q} cannot be kept {THRESHOLD_MARGIN} away from the thresholds {thresholds:?}"),
    ))
}

impl ExperimentConfig {
    /// Parses without validating; see [`validate`](Self::validate).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, workers: Option<usize>, out: Option<&Path>) {
        if let Some(s) = seed {
            self.simulation.seed = s;
        }
        if let Some(w) = workers {
            self.simulation.workers = w;
        }
        if let Some(o) = out {
            self.output.dir = o.to_path_buf();
        }
    }

    /// SHA-256 of the canonical serialization of every field.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }

    /// Checks every field against the module preconditions and moves orders
    /// off the thresholds of the scaling law (with a warning). Idempotent.
    pub fn validate(&mut self) -> Result<Model, ConfigError> {
        let (subordinator, truncation_residual) = self.build_subordinator()?;
        let drift = self.build_drift()?;
        let sim = &self.simulation;

        let lags = match (&sim.lags, sim.lag_exponents) {
            (Some(_), Some(_)) => return Err(invalid("simulation.lags", "give either lags or lag_exponents")),
            (Some(l), None) => l.clone(),
            (None, Some([lo, hi])) => {
                if lo > hi {
                    return Err(invalid("simulation.lag_exponents", "lower exponent above upper"));
                }
                dyadic_lags(lo, hi)
            }
            (None, None) => dyadic_lags(-12, -3),
        };
        if !lags.iter().all(|&h| h > 0.0 && h.is_finite()) || !lags.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("simulation.lags", "lags must be positive, finite and strictly increasing"));
        }
        if lags.len() < MIN_LAGS {
            return Err(invalid(
                "simulation.lags",
                format!("{} lags, slope fits need at least {MIN_LAGS}", lags.len()),
            ));
        }
        if sim.n_paths == 0 {
            return Err(invalid("simulation.n_paths", "must be at least 1"));
        }
        if sim.workers == 0 {
            return Err(invalid("simulation.workers", "must be at least 1"));
        }
        let initial = match sim.initial {
            Initial::Stationary => {
                absent("simulation.v0", &sim.v0, "with initial = \"stationary\"")?;
                positive("simulation.burn_in", sim.burn_in)?;
                volpath::check_regime(&subordinator, &drift).map_err(vol_error)?;
                InitialState::Stationary { burn_in: sim.burn_in }
            }
            Initial::Fixed => {
                let v0 = required("simulation.v0", sim.v0)?;
                if !(v0 >= 0.0 && v0.is_finite()) {
                    return Err(invalid("simulation.v0", format!("{v0} must be nonnegative and finite")));
                }
                InitialState::Fixed(v0)
            }
        };
        if sim.sampler == Sampler::Tilted {
            if self.subordinator.jump_law != JumpLawKind::Pareto {
                return Err(invalid("simulation.sampler", "tilted sampling needs a Pareto jump law"));
            }
            if !matches!(drift, DriftSpec::PowerLaw { gamma, .. } if gamma > 1.0) {
                return Err(invalid(
                    "simulation.sampler",
                    "tilted sampling needs drift_kind = \"power_law\" with gamma > 1",
                ));
            }
            if sim.initial != Initial::Stationary {
                return Err(invalid("simulation.sampler", "tilted sampling starts from the stationary law"));
            }
            let window = JumpTilt::<f64>::default().before * lags[lags.len() - 1];
            if sim.burn_in <= window {
                return Err(invalid("simulation.burn_in", format!("must exceed the tilt window {window}")));
            }
        }

        let est = &self.estimation;
        if est.q.is_empty() {
            return Err(invalid("estimation.q", "at least one order required"));
        }
        if let Some(&q) = est.q.iter().find(|&&q| !(q >= 1.0 && q.is_finite())) {
            return Err(invalid("estimation.q", format!("order {q} must be at least 1 and finite")));
        }
        if est.hill_draws > 0 {
            volpath::check_regime(&subordinator, &drift).map_err(vol_error)?;
            positive("simulation.burn_in", sim.burn_in)?;
            let k = est.hill_k.unwrap_or_else(|| msv_core::estimators::default_hill_k(est.hill_draws));
            if !(10..est.hill_draws).contains(&k) {
                return Err(invalid("estimation.hill_k", format!("k = {k} needs 10 <= k < hill_draws")));
            }
        } else if est.hill_k.is_some() {
            return Err(invalid("estimation.hill_k", "set without hill_draws"));
        }

        let c = &self.checks;
        for (key, v) in [
            ("checks.diffusive_tolerance", c.diffusive_tolerance),
            ("checks.multiscaling_tolerance", c.multiscaling_tolerance),
            ("checks.hill_tolerance", c.hill_tolerance),
        ] {
            positive(key, v)?;
        }
        if !(0.0..=1.0).contains(&c.min_r2) {
            return Err(invalid("checks.min_r2", format!("{} must be in [0, 1]", c.min_r2)));
        }

        let (theory, theory_note) = match TheoryModel::from_specs(&subordinator, &drift) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let mut adjusted_orders = Vec::new();
        if let Some(t) = &theory {
            let thresholds = t.thresholds();
            for q in &mut self.estimation.q {
                let moved = avoid_thresholds(*q, &thresholds)?;
                if moved != *q {
                    warn!(
                        "estimation.q: {q} is within {THRESHOLD_MARGIN} of a threshold {thresholds:?}, using {moved}"
                    );
                    adjusted_orders.push((*q, moved));
                    *q = moved;
                }
            }
        }
        let qs = &self.estimation.q;
        if (1..qs.len()).any(|i| qs[..i].contains(&qs[i])) {
            return Err(invalid("estimation.q", format!("duplicate orders in {qs:?}")));
        }

        Ok(Model { subordinator, truncation_residual, drift, lags, initial, theory, theory_note, adjusted_orders })
    }

    fn build_subordinator(&self) -> Result<(SubordinatorSpec<f64>, Option<f64>), ConfigError> {
        let s = &self.subordinator;
        let spec = match s.jump_law {
            JumpLawKind::Pareto => {
                let why = "with jump_law = \"pareto\"";
                absent("subordinator.atom_sizes", &s.atom_sizes, why)?;
                absent("subordinator.atom_rates", &s.atom_rates, why)?;
                SubordinatorSpec::pareto(
                    s.drift,
                    required("subordinator.jump_rate", s.jump_rate)?,
                    required("subordinator.x_min", s.x_min)?,
                    required("subordinator.alpha", s.alpha)?,
                )
                .map_err(levy_error)?
            }
            JumpLawKind::Atoms => {
                let why = "with jump_law = \"atoms\"";
                absent("subordinator.jump_rate", &s.jump_rate, why)?;
                absent("subordinator.alpha", &s.alpha, why)?;
                absent("subordinator.x_min", &s.x_min, why)?;
                let sizes = s.atom_sizes.as_ref().ok_or_else(|| invalid("subordinator.atom_sizes", "required"))?;
                let rates = s.atom_rates.as_ref().ok_or_else(|| invalid("subordinator.atom_rates", "required"))?;
                if sizes.len() != rates.len() {
                    return Err(invalid("subordinator.atom_rates", "needs one rate per entry of atom_sizes"));
                }
                let pairs: Vec<(f64, f64)> = sizes.iter().copied().zip(rates.iter().copied()).collect();
                SubordinatorSpec::atoms(s.drift, &pairs).map_err(levy_error)?
            }
        };
        match s.epsilon {
            None => Ok((spec, None)),
            Some(eps) => {
                positive("subordinator.epsilon", eps)?;
                let (kept, residual) = spec.truncate(eps).map_err(levy_error)?;
                Ok((kept, Some(residual)))
            }
        }
    }

    fn build_drift(&self) -> Result<DriftSpec<f64>, ConfigError> {
        let d = &self.drift;
        match d.drift_kind {
            DriftKind::Linear => {
                if d.gamma.is_some_and(|g| g != 1.0) {
                    return Err(invalid("drift.gamma", "must be 1 or absent for drift_kind = \"linear\""));
                }
                DriftSpec::linear(d.c).map_err(vol_error)
            }
            DriftKind::PowerLaw => DriftSpec::power_law(d.c, required("drift.gamma", d.gamma)?).map_err(vol_error),
            DriftKind::General => GeneralDrift::power_law(d.c, required("drift.gamma", d.gamma)?)
                .map(DriftSpec::General)
                .map_err(vol_error),
        }
    }
}
