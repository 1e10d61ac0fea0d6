//! Log-price increments from integrated variance.
//!
//! Since the volatility is independent of the driving Brownian motion,
//! `X_{t+h} − X_t` given the integrated variance `I` is `N(0, I)`. Nested lags
//! on one replica are generated as a Brownian path in trading time, so every
//! lag sees a consistent log-price trajectory.

use std::io::{self, BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::levy::SubordinatorSpec;
use crate::scalar::{fmt17, parse_float, Scalar};
use crate::stream::StreamFactory;
use crate::volpath::{self, DriftSpec, VolError};

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("lags must be positive, finite and strictly ascending")]
    InvalidLags,
    #[error("n_paths must be at least 1")]
    NoPaths,
    #[error(transparent)]
    Volatility(#[from] VolError),
    #[error("increments CSV line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unsupported model: {0}")]
    Unsupported(String),
    #[error("weights: {0}")]
    Weights(String),
}

/// `√I · Z` with `Z` standard normal.
#[inline]
pub fn increment<T: Scalar, R: Rng + ?Sized>(integrated_variance: T, rng: &mut R) -> T {
    debug_assert!(integrated_variance >= T::zero());
    integrated_variance.max(T::zero()).sqrt() * T::standard_normal(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementSample<T> {
    pub replica: usize,
    pub lag: T,
    pub integrated_variance: T,
    pub increment: T,
}

/// How each replica's initial variance is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState<T> {
    /// Terminal value of a burn-in run started at 0.
    Stationary {
        burn_in: T,
    },
    Fixed(T),
}

/// Replica × lag table of `(I, ΔX)`, stored row-major by replica, with
/// optional per-replica likelihood-ratio weights.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementTable<T> {
    lags: Vec<T>,
    n_paths: usize,
    ivar: Vec<T>,
    dx: Vec<T>,
    weights: Option<Vec<T>>,
}

impl<T: Scalar> IncrementTable<T> {
    pub fn from_parts(
        lags: Vec<T>,
        n_paths: usize,
        ivar: Vec<T>,
        dx: Vec<T>,
        weights: Option<Vec<T>>,
    ) -> Result<Self, PricingError> {
        check_lags(&lags)?;
        if n_paths == 0 {
            return Err(PricingError::NoPaths);
        }
        if ivar.len() != n_paths * lags.len() || dx.len() != ivar.len() {
            return Err(PricingError::Parse { line: 0, reason: "table size does not match lags × replicas".into() });
        }
        let table = Self { lags, n_paths, ivar, dx, weights: None };
        match weights {
            Some(w) => table.with_weights(w),
            None => Ok(table),
        }
    }

    /// Attaches per-replica weights, which must be positive and finite.
    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self, PricingError> {
        if weights.len() != self.n_paths {
            return Err(PricingError::Weights(format!("{} weights for {} replicas", weights.len(), self.n_paths)));
        }
        if let Some(w) = weights.iter().find(|&&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(PricingError::Weights(format!("weight {w} is not positive and finite")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn weights(&self) -> Option<&[T]> {
        self.weights.as_deref()
    }

    pub fn lags(&self) -> &[T] {
        &self.lags
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn at(&self, replica: usize, lag: usize) -> usize {
        replica * self.lags.len() + lag
    }

    pub fn sample(&self, replica: usize, lag: usize) -> IncrementSample<T> {
        let i = self.at(replica, lag);
        IncrementSample { replica, lag: self.lags[lag], integrated_variance: self.ivar[i], increment: self.dx[i] }
    }

    pub fn increments(&self, lag: usize) -> Vec<T> {
        (0..self.n_paths).map(|r| self.dx[self.at(r, lag)]).collect()
    }

    pub fn integrated_variances(&self, lag: usize) -> Vec<T> {
        (0..self.n_paths).map(|r| self.ivar[self.at(r, lag)]).collect()
    }

    pub fn samples(&self) -> impl Iterator<Item = IncrementSample<T>> + '_ {
        (0..self.n_paths).flat_map(move |r| (0..self.lags.len()).map(move |l| self.sample(r, l)))
    }

    /// CSV with columns `replica,lag,I,dX`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "replica,lag,I,dX")?;
        for s in self.samples() {
            writeln!(w, "{},{},{},{}", s.replica, fmt17(s.lag), fmt17(s.integrated_variance), fmt17(s.increment))?;
        }
        Ok(())
    }

    /// Reads what [`write_csv`](Self::write_csv) writes. Rows must be grouped
    /// by replica, with the same ascending lags for every replica.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, PricingError> {
        let mut lags: Vec<T> = Vec::new();
        let mut ivar = Vec::new();
        let mut dx = Vec::new();
        let mut replica_count = 0usize;
        let mut current: Option<usize> = None;
        let mut lag_pos = 0usize;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if idx == 0 {
                if line.trim() != "replica,lag,I,dX" {
                    return Err(PricingError::Parse { line: lineno, reason: "bad header".into() });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| PricingError::Parse { line: lineno, reason: reason.into() };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let replica: usize = fields[0].trim().parse().map_err(|_| bad("replica"))?;
            let lag: T = parse_float(fields[1]).ok_or_else(|| bad("lag"))?;
            let i: T = parse_float(fields[2]).ok_or_else(|| bad("I"))?;
            let x: T = parse_float(fields[3]).ok_or_else(|| bad("dX"))?;
            if current != Some(replica) {
                if current.is_some() && lag_pos != lags.len() {
                    return Err(bad("replica has a different lag count"));
                }
                if replica != replica_count {
                    return Err(bad("replicas must be numbered 0, 1, 2, ... in order"));
                }
                current = Some(replica);
                replica_count += 1;
                lag_pos = 0;
            }
            if replica_count == 1 {
                lags.push(lag);
            } else if lag_pos >= lags.len() || lags[lag_pos] != lag {
                return Err(bad("lag grid differs between replicas"));
            }
            lag_pos += 1;
            ivar.push(i);
            dx.push(x);
        }
        if replica_count == 0 {
            return Err(PricingError::NoPaths);
        }
        if lag_pos != lags.len() {
            return Err(PricingError::Parse { line: 0, reason: "truncated final replica".into() });
        }
        Ok(Self { lags, n_paths: replica_count, ivar, dx, weights: None })
    }

    /// Weights CSV with columns `replica,weight`; writes only the header for
    /// an unweighted table.
    pub fn write_weights_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "replica,weight")?;
        for (r, x) in self.weights.iter().flatten().enumerate() {
            writeln!(w, "{},{}", r, fmt17(*x))?;
        }
        Ok(())
    }

    /// Reads [`write_weights_csv`](Self::write_weights_csv) output.
    pub fn read_weights_csv<R: BufRead>(r: R) -> Result<Vec<T>, PricingError> {
        let mut out = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let bad = |reason: &str| PricingError::Parse { line: idx + 1, reason: reason.into() };
            if idx == 0 {
                if line.trim() != "replica,weight" {
                    return Err(bad("bad header"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (r, w) = line.split_once(',').ok_or_else(|| bad("expected 2 fields"))?;
            if r.trim().parse::<usize>().ok() != Some(out.len()) {
                return Err(bad("replicas must be numbered 0, 1, 2, ... in order"));
            }
            out.push(parse_float(w).ok_or_else(|| bad("weight"))?);
        }
        Ok(out)
    }
}

pub(crate) fn check_lags<T: Scalar>(lags: &[T]) -> Result<(), PricingError> {
    let ok = !lags.is_empty()
        && lags.iter().all(|&h| h > T::zero() && h.is_finite())
        && lags.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(PricingError::InvalidLags)
    }
}

/// One replica: initial variance, one path on `[0, max lag]`, and the
/// trading-time Brownian increments at each lag.
fn replica<T: Scalar, R: Rng + ?Sized>(
    sub: &SubordinatorSpec<T>,
    drift: &DriftSpec<T>,
    lags: &[T],
    init: InitialState<T>,
    rng: &mut R,
) -> Result<(Vec<T>, Vec<T>), VolError> {
    let v0 = match init {
        InitialState::Stationary { burn_in } => volpath::stationary_sample(sub, drift, burn_in, rng)?,
        InitialState::Fixed(v) => v,
    };
    let horizon = *lags.last().expect("nonempty lags");
    let path = volpath::simulate_path(sub, drift, v0, horizon, rng);
    let ivar = path.cumulative_integrals(drift, lags);
    let mut x = T::zero();
    let mut prev = T::zero();
    let dx = ivar
        .iter()
        .map(|&i| {
            x = x + increment(i - prev, rng);
            prev = i;
            x
        })
        .collect();
    Ok((ivar, dx))
}

/// Simulates `n_paths` independent replicas; replica `r` uses stream `r`.
///
/// Runs on the current rayon pool. The result does not depend on the pool
/// size.
pub fn simulate_increments<T: Scalar>(
    sub: &SubordinatorSpec<T>,
    drift: &DriftSpec<T>,
    lags: &[T],
    n_paths: usize,
    init: InitialState<T>,
    streams: &StreamFactory,
) -> Result<IncrementTable<T>, PricingError> {
    check_lags(lags)?;
    if n_paths == 0 {
        return Err(PricingError::NoPaths);
    }
    if let InitialState::Stationary { .. } = init {
        volpath::check_regime(sub, drift)?;
    }
    let rows: Vec<(Vec<T>, Vec<T>)> = (0..n_paths)
        .into_par_iter()
        .map(|r| replica(sub, drift, lags, init, &mut streams.stream(r as u64)))
        .collect::<Result<_, _>>()?;
    let mut ivar = Vec::with_capacity(n_paths * lags.len());
    let mut dx = Vec::with_capacity(n_paths * lags.len());
    for (i, x) in rows {
        ivar.extend(i);
        dx.extend(x);
    }
    Ok(IncrementTable { lags: lags.to_vec(), n_paths, ivar, dx, weights: None })
}

/// Geometric lag grid `2^lo, 2^{lo+1}, ..., 2^hi`.
pub fn dyadic_lags<T: Scalar>(lo: i32, hi: i32) -> Vec<T> {
    (lo..=hi).map(|k| T::lit(2f64.powi(k))).collect()
}
