//! The variance process `dV = −f(V) dt + dL` as a piecewise-deterministic
//! Markov process: deterministic decay between the jumps of `L`, positive
//! jumps at the jump times.
//!
//! For `f(v) = C v^γ` and a driftless subordinator every segment has a closed
//! form. A positive subordinator drift `m` or a general `f` goes through the
//! adaptive integrator in [`crate::ode`].

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::levy::SubordinatorSpec;
use crate::ode;
use crate::scalar::{fmt17, Scalar};
use crate::stream::StreamFactory;

/// Requested relative tolerance of the general-drift integrator.
pub const GENERAL_RTOL: f64 = 1e-10;

/// Default burn-in, in model time units, for stationary sampling.
pub const DEFAULT_BURN_IN: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VolError {
    #[error("invalid drift parameter `{name}` = {value}: {reason}")]
    InvalidDrift { name: &'static str, value: f64, reason: String },
    #[error("no stationary regime: alpha + gamma = {sum} must exceed 2")]
    InvalidRegime { alpha: f64, gamma: f64, sum: f64 },
    #[error("interval [{t0}, {t1}] is not inside (0, {horizon}] with t0 < t1")]
    Range { t0: f64, t1: f64, horizon: f64 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid burn-in {0}")]
    BurnIn(f64),
}

type DriftFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// A user supplied mean-reversion function, validated on a sample grid.
#[derive(Clone)]
pub struct GeneralDrift<T> {
    f: DriftFn<T>,
    exponent: Option<T>,
    label: String,
}

impl<T: Scalar> GeneralDrift<T> {
    /// `exponent` is the declared regular-variation exponent of `f` at
    /// infinity, if known.
    pub fn new<F>(label: impl Into<String>, f: F, exponent: Option<T>) -> Result<Self, VolError>
    where
        F: Fn(T) -> T + Send + Sync + 'static,
    {
        let f0 = f(T::zero());
        if f0 != T::zero() {
            return Err(VolError::InvalidDrift {
                name: "general_fn",
                value: f0.to_f64_lossy(),
                reason: "f(0) must be 0".into(),
            });
        }
        // geometric grid 1e-6 .. 1e6, 241 points
        let mut prev_v = T::zero();
        let mut prev_f = f0;
        for i in 0..=240 {
            let v = T::lit(10f64.powf(-6.0 + 0.05 * i as f64));
            let fv = f(v);
            let slope = (fv - prev_f) / (v - prev_v);
            if !fv.is_finite() || !(fv > T::zero()) || fv < prev_f || !slope.is_finite() {
                return Err(VolError::InvalidDrift {
                    name: "general_fn",
                    value: v.to_f64_lossy(),
                    reason: "f must be finite, positive, increasing and locally Lipschitz".into(),
                });
            }
            prev_v = v;
            prev_f = fv;
        }
        if let Some(e) = exponent {
            if !(e > T::zero()) {
                return Err(VolError::InvalidDrift {
                    name: "exponent",
                    value: e.to_f64_lossy(),
                    reason: "declared exponent must be positive".into(),
                });
            }
        }
        Ok(Self { f: Arc::new(f), exponent, label: label.into() })
    }

    /// Wraps `C v^γ` as a general drift, bypassing the closed forms.
    pub fn power_law(c: T, gamma: T) -> Result<Self, VolError> {
        Self::new(format!("{c}*v^{gamma}"), move |v: T| c * v.powf(gamma), Some(gamma))
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl<T> fmt::Debug for GeneralDrift<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralDrift").field("label", &self.label).finish_non_exhaustive()
    }
}

/// Mean-reversion function `f`.
#[derive(Clone, Debug)]
pub enum DriftSpec<T> {
    /// `f(v) = c v^gamma`, `gamma ≥ 1`.
    PowerLaw {
        c: T,
        gamma: T,
    },
    /// `f(v) = c v` (Ornstein–Uhlenbeck).
    Linear {
        c: T,
    },
    General(GeneralDrift<T>),
}

impl<T: Scalar> DriftSpec<T> {
    pub fn power_law(c: T, gamma: T) -> Result<Self, VolError> {
        check_coefficient(c)?;
        if !(gamma >= T::one()) || !gamma.is_finite() {
            return Err(VolError::InvalidDrift {
                name: "gamma",
                value: gamma.to_f64_lossy(),
                reason: "power-law exponent must be at least 1".into(),
            });
        }
        Ok(DriftSpec::PowerLaw { c, gamma })
    }

    pub fn linear(c: T) -> Result<Self, VolError> {
        check_coefficient(c)?;
        Ok(DriftSpec::Linear { c })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DriftSpec::PowerLaw { .. } => "power_law",
            DriftSpec::Linear { .. } => "linear",
            DriftSpec::General(_) => "general",
        }
    }

    /// `f(v)`.
    pub fn rate(&self, v: T) -> T {
        match self {
            DriftSpec::PowerLaw { c, gamma } => *c * v.powf(*gamma),
            DriftSpec::Linear { c } => *c * v,
            DriftSpec::General(g) => (g.f)(v),
        }
    }

    /// Regular-variation exponent of `f` at infinity, if known.
    pub fn exponent(&self) -> Option<T> {
        match self {
            DriftSpec::PowerLaw { gamma, .. } => Some(*gamma),
            DriftSpec::Linear { .. } => Some(T::one()),
            DriftSpec::General(g) => g.exponent,
        }
    }

    /// Power laws with `1 < γ < 1.05`: accepted, but the scaling constants
    /// degenerate as `γ ↓ 1`.
    pub fn near_linear(&self) -> bool {
        matches!(self, DriftSpec::PowerLaw { gamma, .. }
            if *gamma > T::one() && *gamma < T::lit(1.05))
    }

    /// Solution of `v' = −f(v)` after `dt`.
    pub fn flow(&self, v0: T, dt: T) -> T {
        self.advance(v0, dt, T::zero())
    }

    /// `∫₀^dt` of [`flow`](Self::flow).
    pub fn integrated_flow(&self, v0: T, dt: T) -> T {
        self.evolve(v0, dt, T::zero()).1
    }

    /// Value after `dt` under `v' = inflow − f(v)`.
    pub fn advance(&self, v0: T, dt: T, inflow: T) -> T {
        if dt <= T::zero() {
            return v0;
        }
        if inflow == T::zero() {
            if v0 == T::zero() {
                return T::zero();
            }
            match *self {
                DriftSpec::Linear { c } => return v0 * (-c * dt).exp(),
                DriftSpec::PowerLaw { c, gamma } => {
                    if gamma == T::one() {
                        return v0 * (-c * dt).exp();
                    }
                    let g1 = gamma - T::one();
                    let x = g1 * c * dt * v0.powf(g1);
                    return v0 * (-x.ln_1p() / g1).exp();
                }
                DriftSpec::General(_) => {}
            }
        }
        self.evolve(v0, dt, inflow).0
    }

    /// `(v(dt), ∫₀^dt v)` under `v' = inflow − f(v)`.
    pub fn evolve(&self, v0: T, dt: T, inflow: T) -> (T, T) {
        if dt <= T::zero() {
            return (v0, T::zero());
        }
        if inflow == T::zero() {
            if v0 == T::zero() {
                return (T::zero(), T::zero());
            }
            match *self {
                DriftSpec::Linear { c } => return linear_segment(v0, dt, c),
                DriftSpec::PowerLaw { c, gamma } => {
                    if gamma == T::one() {
                        return linear_segment(v0, dt, c);
                    }
                    let g1 = gamma - T::one();
                    let x = g1 * c * dt * v0.powf(g1);
                    let l = x.ln_1p();
                    let v = v0 * (-l / g1).exp();
                    let two = T::lit(2.0);
                    let integral = if gamma == two {
                        l / c
                    } else {
                        let g2 = gamma - two;
                        v0.powf(-g2) * (g2 / g1 * l).exp_m1() / (c * g2)
                    };
                    return (v, integral);
                }
                DriftSpec::General(_) => {}
            }
        }
        let f = |v: T| self.rate(v);
        ode::evolve(&f, inflow, v0, dt, GENERAL_RTOL)
    }
}

fn linear_segment<T: Scalar>(v0: T, dt: T, c: T) -> (T, T) {
    let e = (-c * dt).exp_m1();
    (v0 * (e + T::one()), -v0 * e / c)
}

fn check_coefficient<T: Scalar>(c: T) -> Result<(), VolError> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(VolError::InvalidDrift {
            name: "C",
            value: c.to_f64_lossy(),
            reason: "must be positive and finite".into(),
        });
    }
    Ok(())
}

/// Solution of `dv/dt = −f(v)` started at `v0`, after `dt`.
pub fn flow<T: Scalar>(v0: T, dt: T, drift: &DriftSpec<T>) -> T {
    drift.flow(v0, dt)
}

/// `∫₀^dt flow(v0, s) ds`.
pub fn integrated_flow<T: Scalar>(v0: T, dt: T, drift: &DriftSpec<T>) -> T {
    drift.integrated_flow(v0, dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent<T> {
    pub time: T,
    pub size: T,
    /// Value right after the jump.
    pub post_value: T,
}

/// One càdlàg trajectory of `V` on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityPath<T> {
    v0: T,
    horizon: T,
    /// Subordinator drift `m` in force between jumps.
    inflow: T,
    jumps: Vec<JumpEvent<T>>,
}

impl<T: Scalar> VolatilityPath<T> {
    /// Builds a path from prescribed `(time, size)` jumps.
    pub fn from_jumps(drift: &DriftSpec<T>, inflow: T, v0: T, horizon: T, jumps: &[(T, T)]) -> Result<Self, VolError> {
        if !(v0 >= T::zero()) || !(horizon > T::zero()) || !(inflow >= T::zero()) {
            return Err(VolError::InvalidPath("v0, inflow must be ≥ 0 and horizon > 0".into()));
        }
        let mut events = Vec::with_capacity(jumps.len());
        let mut t = T::zero();
        let mut v = v0;
        for &(time, size) in jumps {
            if !(time > t) || time > horizon || !(size > T::zero()) {
                return Err(VolError::InvalidPath(format!(
                    "jump ({time}, {size}) out of order, outside (0, horizon] or nonpositive"
                )));
            }
            v = drift.advance(v, time - t, inflow) + size;
            t = time;
            events.push(JumpEvent { time, size, post_value: v });
        }
        Ok(Self { v0, horizon, inflow, jumps: events })
    }

    pub fn v0(&self) -> T {
        self.v0
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn inflow(&self) -> T {
        self.inflow
    }

    pub fn jumps(&self) -> &[JumpEvent<T>] {
        &self.jumps
    }

    pub fn jump_times(&self) -> Vec<T> {
        self.jumps.iter().map(|j| j.time).collect()
    }

    pub fn post_jump_values(&self) -> Vec<T> {
        self.jumps.iter().map(|j| j.post_value).collect()
    }

    /// `i(h)`: number of jumps in `(0, h]`.
    pub fn jump_count(&self, h: T) -> usize {
        self.jumps.partition_point(|j| j.time <= h)
    }

    /// Sum of jump sizes in `(0, t]`.
    pub fn jump_total(&self, t: T) -> T {
        self.jumps[..self.jump_count(t)].iter().fold(T::zero(), |s, j| s + j.size)
    }

    fn segment_start(&self, t: T) -> (T, T) {
        match self.jump_count(t) {
            0 => (T::zero(), self.v0),
            k => {
                let j = &self.jumps[k - 1];
                (j.time, j.post_value)
            }
        }
    }

    /// `V_t` (right-continuous at jump times).
    pub fn value_at(&self, drift: &DriftSpec<T>, t: T) -> T {
        let (start, v) = self.segment_start(t);
        drift.advance(v, t - start, self.inflow)
    }

    /// `V_{t−}`.
    pub fn value_before(&self, drift: &DriftSpec<T>, t: T) -> T {
        let k = self.jumps.partition_point(|j| j.time < t);
        let (start, v) = match k {
            0 => (T::zero(), self.v0),
            k => (self.jumps[k - 1].time, self.jumps[k - 1].post_value),
        };
        drift.advance(v, t - start, self.inflow)
    }

    /// `∫_{t0}^{t1} V_s ds`, summed over jump-free segments.
    pub fn integrated_variance(&self, drift: &DriftSpec<T>, t0: T, t1: T) -> Result<T, VolError> {
        if !(t0 >= T::zero()) || !(t1 > t0) || !(t1 <= self.horizon) {
            return Err(VolError::Range {
                t0: t0.to_f64_lossy(),
                t1: t1.to_f64_lossy(),
                horizon: self.horizon.to_f64_lossy(),
            });
        }
        let (start, v_start) = self.segment_start(t0);
        let mut t = t0;
        let mut v = drift.advance(v_start, t0 - start, self.inflow);
        let mut total = T::zero();
        for j in &self.jumps[self.jump_count(t0)..] {
            if j.time >= t1 {
                break;
            }
            total = total + drift.evolve(v, j.time - t, self.inflow).1;
            t = j.time;
            v = j.post_value;
        }
        Ok(total + drift.evolve(v, t1 - t, self.inflow).1)
    }

    /// `∫_0^{h} V_s ds` for every `h` in an ascending list, in one sweep.
    pub fn cumulative_integrals(&self, drift: &DriftSpec<T>, lags: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(lags.len());
        let mut t = T::zero();
        let mut v = self.v0;
        let mut acc = T::zero();
        let mut next_jump = 0;
        for &h in lags {
            while next_jump < self.jumps.len() && self.jumps[next_jump].time <= h {
                let j = &self.jumps[next_jump];
                acc = acc + drift.evolve(v, j.time - t, self.inflow).1;
                t = j.time;
                v = j.post_value;
                next_jump += 1;
            }
            let (v_h, piece) = drift.evolve(v, h - t, self.inflow);
            acc = acc + piece;
            t = h;
            v = v_h;
            out.push(acc);
        }
        out
    }

    /// CSV with columns `t,event,V`; `event` is `start`, `jump` or `end`.
    pub fn write_csv<W: Write>(&self, drift: &DriftSpec<T>, mut w: W) -> io::Result<()> {
        writeln!(w, "t,event,V")?;
        writeln!(w, "{},start,{}", fmt17(T::zero()), fmt17(self.v0))?;
        for j in &self.jumps {
            writeln!(w, "{},jump,{}", fmt17(j.time), fmt17(j.post_value))?;
        }
        writeln!(w, "{},end,{}", fmt17(self.horizon), fmt17(self.value_at(drift, self.horizon)))
    }
}

/// Exact simulation of `V` on `[0, horizon]` started at `v0`.
pub fn simulate_path<T: Scalar, R: Rng + ?Sized>(
    sub: &SubordinatorSpec<T>,
    drift: &DriftSpec<T>,
    v0: T,
    horizon: T,
    rng: &mut R,
) -> VolatilityPath<T> {
    let inflow = sub.drift();
    let mut jumps = Vec::new();
    let mut t = T::zero();
    let mut v = v0;
    loop {
        let next = t + sub.sample_waiting_time(rng);
        if next > horizon {
            break;
        }
        let size = sub.sample_jump(rng);
        v = drift.advance(v, next - t, inflow) + size;
        t = next;
        jumps.push(JumpEvent { time: t, size, post_value: v });
    }
    VolatilityPath { v0, horizon, inflow, jumps }
}

/// Checks the existence condition `α + γ > 2` of the stationary law.
pub fn check_regime<T: Scalar>(sub: &SubordinatorSpec<T>, drift: &DriftSpec<T>) -> Result<(), VolError> {
    if let (Some(alpha), Some(gamma)) = (sub.tail_exponent(), drift.exponent()) {
        let sum = alpha + gamma;
        if !(sum > T::lit(2.0)) {
            return Err(VolError::InvalidRegime {
                alpha: alpha.to_f64_lossy(),
                gamma: gamma.to_f64_lossy(),
                sum: sum.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

/// Terminal value of a path of length `burn_in` started at 0.
///
/// The law of the result approaches the stationary law as `burn_in` grows;
/// starting below every stationary quantile makes the approach monotone.
pub fn stationary_sample<T: Scalar, R: Rng + ?Sized>(
    sub: &SubordinatorSpec<T>,
    drift: &DriftSpec<T>,
    burn_in: T,
    rng: &mut R,
) -> Result<T, VolError> {
    check_regime(sub, drift)?;
    if !(burn_in >= T::zero()) || !burn_in.is_finite() {
        return Err(VolError::BurnIn(burn_in.to_f64_lossy()));
    }
    Ok(run_from_zero(sub, drift, burn_in, rng))
}

fn run_from_zero<T: Scalar, R: Rng + ?Sized>(
    sub: &SubordinatorSpec<T>,
    drift: &DriftSpec<T>,
    burn_in: T,
    rng: &mut R,
) -> T {
    let inflow = sub.drift();
    let mut t = T::zero();
    let mut v = T::zero();
    loop {
        let next = t + sub.sample_waiting_time(rng);
        if next > burn_in {
            return drift.advance(v, burn_in - t, inflow);
        }
        v = drift.advance(v, next - t, inflow) + sub.sample_jump(rng);
        t = next;
    }
}

/// `n` independent stationary draws; draw `i` uses stream `i` of `streams`.
pub fn stationary_samples<T: Scalar>(
    sub: &SubordinatorSpec<T>,
    drift: &DriftSpec<T>,
    burn_in: T,
    n: usize,
    streams: &StreamFactory,
) -> Result<Vec<T>, VolError> {
    check_regime(sub, drift)?;
    if !(burn_in >= T::zero()) || !burn_in.is_finite() {
        return Err(VolError::BurnIn(burn_in.to_f64_lossy()));
    }
    Ok((0..n as u64).into_par_iter().map(|i| run_from_zero(sub, drift, burn_in, &mut streams.stream(i))).collect())
}

/// Two-sample rank test between draws at `burn_in / 2` and at `burn_in`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurnInDiagnostic {
    pub u_statistic: f64,
    pub z_score: f64,
    /// Two-sided p-value of the Mann–Whitney test (normal approximation).
    pub p_value: f64,
}

pub fn burn_in_diagnostic<T: Scalar>(
    sub: &SubordinatorSpec<T>,
    drift: &DriftSpec<T>,
    burn_in: T,
    n_per_batch: usize,
    streams: &StreamFactory,
) -> Result<BurnInDiagnostic, VolError> {
    let half = stationary_samples(sub, drift, burn_in * T::lit(0.5), n_per_batch, streams)?;
    let shifted = StreamFactory::new(streams.master().wrapping_add(0x5EED), crate::stream::Domain::Diagnostics);
    let full = stationary_samples(sub, drift, burn_in, n_per_batch, &shifted)?;
    let a: Vec<f64> = half.iter().map(|x| x.to_f64_lossy()).collect();
    let b: Vec<f64> = full.iter().map(|x| x.to_f64_lossy()).collect();
    Ok(mann_whitney(&a, &b))
}

/// Mann–Whitney U test with mid-ranks for ties.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> BurnInDiagnostic {
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let mut all: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let group = (j - i + 1) as f64;
        tie_term += group * group * group - group;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_a += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let z = if var > 0.0 { (u - mean) / var.sqrt() } else { 0.0 };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = 2.0 * (1.0 - normal.cdf(z.abs()));
    BurnInDiagnostic { u_statistic: u, z_score: z, p_value: p }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::seeded;

    fn pl(c: f64, g: f64) -> DriftSpec<f64> {
        DriftSpec::power_law(c, g).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn flow_examples() {
        assert_eq!(flow(1.0, 0.0, &pl(1.0, 3.0)), 1.0);
        assert_eq!(flow(1.0, 0.0, &DriftSpec::linear(2.0).unwrap()), 1.0);
        assert!(rel(flow(1.0, 1.5, &pl(1.0, 3.0)), 0.5) < 1e-15);
        assert!(rel(flow(1.0, 1.0, &pl(1.0, 2.0)), 0.5) < 1e-15);
        assert_eq!(flow(0.0, 7.0, &pl(1.0, 3.0)), 0.0);
        assert!(rel(flow(2.0, 1.0, &DriftSpec::linear(1.0).unwrap()), 2.0 / std::f64::consts::E) < 1e-15);
    }

    #[test]
    fn integrated_flow_examples() {
        assert_eq!(integrated_flow(3.0, 0.0, &pl(1.0, 3.0)), 0.0);
        assert!(rel(integrated_flow(1.0, 1.0, &pl(1.0, 2.0)), std::f64::consts::LN_2) < 1e-15);
        // γ = 3: (1 + 2t)^{1/2} − 1 at t = 1
        assert!(rel(integrated_flow(1.0, 1.0, &pl(1.0, 3.0)), 3f64.sqrt() - 1.0) < 1e-14);
        // γ = 1.5, C = 2: 2 (√v0 − (v0^{-1/2} + t)^{-1})
        let v0: f64 = 4.0;
        let expected = (2.0 / 2.0) * (v0.sqrt() - 1.0 / (v0.powf(-0.5) + 2.0));
        assert!(rel(integrated_flow(v0, 2.0, &pl(2.0, 1.5)), expected) < 1e-14);
        assert_eq!(integrated_flow(0.0, 2.0, &pl(1.0, 1.5)), 0.0);
    }

    #[test]
    fn extreme_values_stay_finite() {
        let d = pl(1.0, 3.0);
        let v = flow(1e150, 1e-3, &d);
        assert!((v - (2e-3f64).powf(-0.5)).abs() / v < 1e-12);
        let i = integrated_flow(1e-150, 1e-3, &d);
        assert!(rel(i, 1e-153) < 1e-12);
        let d = pl(1.0, 1.5);
        assert!(integrated_flow(1e300, 1.0, &d).is_finite());
    }

    #[test]
    fn rejects_bad_drifts() {
        assert!(DriftSpec::power_law(0.0, 3.0).is_err());
        assert!(DriftSpec::power_law(1.0, 0.5).is_err());
        assert!(DriftSpec::<f64>::linear(-1.0).is_err());
        assert!(GeneralDrift::new("offset", |v: f64| v + 1.0, None).is_err());
        assert!(GeneralDrift::new("decreasing", |v: f64| -v, None).is_err());
        assert!(GeneralDrift::new("sqrt", |v: f64| v.sqrt(), Some(0.5)).is_ok());
        assert!(pl(1.0, 1.01).near_linear());
        assert!(!pl(1.0, 3.0).near_linear());
    }

    #[test]
    fn general_drift_matches_closed_forms() {
        for &(c, g, v0, dt) in
            &[(1.0, 3.0, 1.0, 1.5), (2.0, 1.5, 10.0, 0.3), (0.5, 2.0, 0.2, 4.0), (1.0, 2.5, 50.0, 0.01)]
        {
            let closed = pl(c, g);
            let general = DriftSpec::General(GeneralDrift::power_law(c, g).unwrap());
            assert!(rel(general.flow(v0, dt), closed.flow(v0, dt)) < 1e-8, "flow {c} {g}");
            assert!(rel(general.integrated_flow(v0, dt), closed.integrated_flow(v0, dt)) < 1e-8, "integral {c} {g}");
        }
    }

    #[test]
    fn f32_flow_is_close_to_f64() {
        let d32 = DriftSpec::<f32>::power_law(1.0, 3.0).unwrap();
        assert!((d32.flow(1.0, 1.5) - 0.5).abs() < 1e-6);
        assert!((d32.integrated_flow(1.0, 1.0) - (3f32.sqrt() - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn path_without_jumps_reduces_to_flow() {
        let sub = SubordinatorSpec::pareto(0.0, 1e-300, 1.0, 1.0).unwrap();
        let d = pl(1.0, 3.0);
        let path = simulate_path(&sub, &d, 1.0, 1.5, &mut seeded(3));
        assert!(path.jumps().is_empty());
        assert!(rel(path.value_at(&d, 1.5), 0.5) < 1e-15);
        let i = path.integrated_variance(&d, 0.0, 1.5).unwrap();
        assert!(rel(i, d.integrated_flow(1.0, 1.5)) < 1e-15);
        let i = path.integrated_variance(&d, 0.5, 1.5).unwrap();
        assert!(rel(i, d.integrated_flow(d.flow(1.0, 0.5), 1.0)) < 1e-14);
    }

    #[test]
    fn zero_start_without_jumps_stays_zero() {
        let d = pl(1.0, 3.0);
        let path = VolatilityPath::from_jumps(&d, 0.0, 0.0, 2.0, &[]).unwrap();
        assert_eq!(path.value_at(&d, 1.3), 0.0);
        assert_eq!(path.integrated_variance(&d, 0.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn forced_jump_adds_exactly() {
        let d = pl(1.0, 3.0);
        let path = VolatilityPath::from_jumps(&d, 0.0, 1.0, 2.0, &[(0.75, 4.0)]).unwrap();
        assert_eq!(path.post_jump_values()[0], d.flow(1.0, 0.75) + 4.0);
        assert_eq!(path.value_before(&d, 0.75), d.flow(1.0, 0.75));
        assert_eq!(path.value_at(&d, 0.75), d.flow(1.0, 0.75) + 4.0);
        assert_eq!(path.jump_count(0.75), 1);
        assert_eq!(path.jump_count(0.7), 0);
    }

    #[test]
    fn integrated_variance_range_errors() {
        let d = pl(1.0, 3.0);
        let path = VolatilityPath::from_jumps(&d, 0.0, 1.0, 2.0, &[]).unwrap();
        assert!(matches!(path.integrated_variance(&d, 1.0, 1.0), Err(VolError::Range { .. })));
        assert!(path.integrated_variance(&d, -0.1, 1.0).is_err());
        assert!(path.integrated_variance(&d, 0.0, 2.5).is_err());
        let tiny = path.integrated_variance(&d, 1.0, 1.0 + 1e-12).unwrap();
        assert!(tiny < 1e-11);
    }

    #[test]
    fn bad_jump_lists_rejected() {
        let d = pl(1.0, 3.0);
        assert!(VolatilityPath::from_jumps(&d, 0.0, 1.0, 2.0, &[(0.5, 1.0), (0.4, 1.0)]).is_err());
        assert!(VolatilityPath::from_jumps(&d, 0.0, 1.0, 2.0, &[(2.5, 1.0)]).is_err());
        assert!(VolatilityPath::from_jumps(&d, 0.0, 1.0, 2.0, &[(0.5, 0.0)]).is_err());
    }

    #[test]
    fn cumulative_integrals_match_interval_integrals() {
        let sub = SubordinatorSpec::pareto(0.0, 3.0, 1.0, 1.0).unwrap();
        let d = pl(1.0, 3.0);
        let path = simulate_path(&sub, &d, 0.7, 2.0, &mut seeded(11));
        assert!(path.jumps().len() >= 2);
        let lags = [0.1, 0.5, 1.0, 2.0];
        let cum = path.cumulative_integrals(&d, &lags);
        for (h, c) in lags.iter().zip(&cum) {
            let direct = path.integrated_variance(&d, 0.0, *h).unwrap();
            assert!(rel(*c, direct) < 1e-12);
        }
    }

    #[test]
    fn path_csv_layout() {
        let d = pl(1.0, 2.0);
        let path = VolatilityPath::from_jumps(&d, 0.0, 1.0, 1.0, &[(0.5, 2.0)]).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,event,V");
        assert!(lines[1].contains(",start,"));
        assert!(lines[2].contains(",jump,"));
        assert!(lines[3].contains(",end,"));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn stationary_sampling_contract() {
        let sub = SubordinatorSpec::pareto(0.0, 1.0, 1.0, 1.0).unwrap();
        let mut rng = seeded(5);
        assert_eq!(stationary_sample(&sub, &pl(1.0, 3.0), 0.0, &mut rng).unwrap(), 0.0);
        let bad = SubordinatorSpec::pareto(0.0, 1.0, 1.0, 0.5).unwrap();
        assert!(matches!(stationary_sample(&bad, &pl(1.0, 1.5), 10.0, &mut rng), Err(VolError::InvalidRegime { .. })));
        assert!(stationary_sample(&sub, &pl(1.0, 3.0), -1.0, &mut rng).is_err());
    }

    #[test]
    fn mann_whitney_detects_shift() {
        let a: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..200).map(|i| i as f64 + 100.0).collect();
        assert!(mann_whitney(&a, &b).p_value < 1e-6);
        let same = mann_whitney(&a, &a);
        assert!((same.z_score).abs() < 1e-12);
        assert!(same.p_value > 0.99);
    }
}
