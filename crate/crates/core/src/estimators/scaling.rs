use std::io::{self, BufRead, Write};

use super::moments::{
    conditional_moment, empirical_moment, weighted_conditional_moment, weighted_moment, MomentEstimate,
};
use super::tail::{divergence_diagnostic, DivergenceFlag, MIN_DIAGNOSTIC_SAMPLES};
use super::EstimatorError;
use crate::pricing::IncrementTable;
use crate::scalar::{fmt17, parse_float, Scalar};
use crate::theory::{ScalingValue, TheoryModel};

/// Minimum number of usable lags for a slope fit.
pub const MIN_LAGS: usize = 4;

/// Orders closer than this to a threshold of the scaling law are marked.
pub const THRESHOLD_MARGIN: f64 = 0.05;

/// Which samples a moment is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    /// `mean |ΔX|^q`.
    Increments,
    /// `E|Z|^q · mean I^{q/2}`, the conditional expectation given the
    /// integrated variance.
    Conditional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEntry<T> {
    pub lag: T,
    pub q: T,
    pub moment: MomentEstimate<T>,
    /// `None` when too few samples for the diagnostic.
    pub flag: Option<DivergenceFlag>,
}

/// Moment estimates on a (lag, q) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable<T> {
    entries: Vec<MomentEntry<T>>,
}

impl<T: Scalar> MomentTable<T> {
    pub fn new(entries: Vec<MomentEntry<T>>) -> Self {
        Self { entries }
    }

    /// Moments of every lag and order. A weighted table gives importance
    /// sampling estimates, and its divergence diagnostic runs on
    /// `w^{1/q} |ΔX|`, whose `q`-th powers are the summed terms.
    pub fn from_increments(table: &IncrementTable<T>, qs: &[T], source: MomentSource) -> Result<Self, EstimatorError> {
        let mut entries = Vec::with_capacity(table.lags().len() * qs.len());
        let weights = table.weights();
        for (l, &lag) in table.lags().iter().enumerate() {
            let dx = table.increments(l);
            let ivar = match source {
                MomentSource::Conditional => Some(table.integrated_variances(l)),
                MomentSource::Increments => None,
            };
            for &q in qs {
                let moment = match (&ivar, weights) {
                    (Some(iv), Some(w)) => weighted_conditional_moment(iv, w, q)?,
                    (Some(iv), None) => conditional_moment(iv, q)?,
                    (None, Some(w)) => weighted_moment(&dx, w, q)?,
                    (None, None) => empirical_moment(&dx, q)?,
                };
                let flag = if dx.len() < MIN_DIAGNOSTIC_SAMPLES {
                    None
                } else if let Some(w) = weights {
                    let inv = q.recip();
                    let scaled: Vec<T> = dx.iter().zip(w).map(|(x, &wi)| *x * wi.powf(inv)).collect();
                    Some(divergence_diagnostic(&scaled, q)?.flag)
                } else {
                    Some(divergence_diagnostic(&dx, q)?.flag)
                };
                entries.push(MomentEntry { lag, q, moment, flag });
            }
        }
        Ok(Self { entries })
    }

    /// Noise-free table from a moment function `m(h, q)`.
    pub fn from_exact(lags: &[T], qs: &[T], m: impl Fn(T, T) -> T) -> Self {
        let mut entries = Vec::new();
        for &lag in lags {
            for &q in qs {
                let v = m(lag, q);
                entries.push(MomentEntry {
                    lag,
                    q,
                    moment: MomentEstimate {
                        estimate: v,
                        stderr: T::zero(),
                        n: 1,
                        n_eff: T::one(),
                        batch_means: vec![v],
                        batch_sizes: vec![1],
                        fallback: false,
                    },
                    flag: Some(DivergenceFlag::Stable),
                });
            }
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[MomentEntry<T>] {
        &self.entries
    }

    /// Entries of order `q`, ordered by lag.
    pub fn at_order(&self, q: T) -> Vec<&MomentEntry<T>> {
        let mut v: Vec<&MomentEntry<T>> = self.entries.iter().filter(|e| e.q == q).collect();
        v.sort_by(|a, b| a.lag.partial_cmp(&b.lag).expect("finite lags"));
        v
    }

    pub fn orders(&self) -> Vec<T> {
        let mut qs: Vec<T> = Vec::new();
        for e in &self.entries {
            if !qs.contains(&e.q) {
                qs.push(e.q);
            }
        }
        qs
    }

    /// Multiplies every moment by `c` (affects only the fit intercept).
    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.moment.estimate = e.moment.estimate * c;
            e.moment.stderr = e.moment.stderr * c;
            for b in &mut e.moment.batch_means {
                *b = *b * c;
            }
        }
        out
    }

    /// CSV with columns `lag,q,moment,stderr,n_eff,flag`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "lag,q,moment,stderr,n_eff,flag")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt17(e.lag),
                fmt17(e.q),
                fmt17(e.moment.estimate),
                fmt17(e.moment.stderr),
                fmt17(e.moment.n_eff),
                e.flag.map_or("unchecked", |f| f.as_str())
            )?;
        }
        Ok(())
    }

    /// Reads [`write_csv`](Self::write_csv) output. Batch means are not
    /// stored in the CSV, so fits on a reloaded table use the weighted
    /// least-squares standard error.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, EstimatorError> {
        let mut entries = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let bad = |reason: &str| EstimatorError::Parse { line: idx + 1, reason: reason.into() };
            let line = line.map_err(|e| bad(&e.to_string()))?;
            if idx == 0 {
                if line.trim() != "lag,q,moment,stderr,n_eff,flag" {
                    return Err(bad("bad header"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let num = |i: usize, name: &str| parse_float::<T>(f[i]).ok_or_else(|| bad(name));
            let estimate = num(2, "moment")?;
            let n_eff = num(4, "n_eff")?;
            let flag = match f[5].trim() {
                "unchecked" => None,
                s => Some(DivergenceFlag::parse(s).ok_or_else(|| bad("flag"))?),
            };
            entries.push(MomentEntry {
                lag: num(0, "lag")?,
                q: num(1, "q")?,
                moment: MomentEstimate {
                    estimate,
                    stderr: num(3, "stderr")?,
                    n: n_eff.to_usize().unwrap_or(0),
                    n_eff,
                    batch_means: Vec::new(),
                    batch_sizes: Vec::new(),
                    fallback: false,
                },
                flag,
            });
        }
        Ok(Self { entries })
    }
}

/// Weighted log-log regression of moment against lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit<T> {
    pub slope: T,
    pub intercept: T,
    pub stderr: T,
    pub r_squared: T,
    pub lags_used: usize,
}

struct Wls<T> {
    slope: T,
    intercept: T,
    sxx: T,
    r_squared: T,
    residual_var: T,
}

fn wls<T: Scalar>(x: &[T], y: &[T], w: &[T]) -> Wls<T> {
    let sw = w.iter().fold(T::zero(), |s, &v| s + v);
    let xm = x.iter().zip(w).fold(T::zero(), |s, (&xi, &wi)| s + wi * xi) / sw;
    let ym = y.iter().zip(w).fold(T::zero(), |s, (&yi, &wi)| s + wi * yi) / sw;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for i in 0..x.len() {
        let dx = x[i] - xm;
        let dy = y[i] - ym;
        sxx = sxx + w[i] * dx * dx;
        sxy = sxy + w[i] * dx * dy;
        syy = syy + w[i] * dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr = (0..x.len()).fold(T::zero(), |s, i| {
        let r = y[i] - intercept - slope * x[i];
        s + w[i] * r * r
    });
    let scale = T::lit(1e-24) * (syy + T::one());
    let r_squared = if syy > T::zero() {
        T::one() - ssr / syy
    } else if ssr <= scale {
        T::one()
    } else {
        T::zero()
    };
    let dof = T::from_usize_lossy(x.len().saturating_sub(2).max(1));
    Wls { slope, intercept, sxx, r_squared, residual_var: ssr / dof }
}

/// Estimates `A(q)` as the slope of `log E|ΔX|^q` against `log h`.
///
/// Weights are inverse delta-method variances `(m / stderr)²`; with any zero
/// standard error (noise-free input) all lags get equal weight. The slope
/// standard error is a delete-one-batch jackknife when batch means are
/// available, which accounts for the dependence between nested lags.
pub fn scaling_exponent<T: Scalar>(table: &MomentTable<T>, q: T) -> Result<ScalingFit<T>, EstimatorError> {
    let usable: Vec<&MomentEntry<T>> = table
        .at_order(q)
        .into_iter()
        .filter(|e| {
            e.moment.estimate > T::zero() && e.moment.estimate.is_finite() && e.flag != Some(DivergenceFlag::Divergent)
        })
        .collect();
    if usable.len() < MIN_LAGS {
        return Err(EstimatorError::InsufficientData { q: q.to_f64_lossy(), usable: usable.len(), needed: MIN_LAGS });
    }
    let x: Vec<T> = usable.iter().map(|e| e.lag.ln()).collect();
    let y: Vec<T> = usable.iter().map(|e| e.moment.estimate.ln()).collect();
    let exact = usable.iter().any(|e| !(e.moment.stderr > T::zero()) || !e.moment.stderr.is_finite());
    let w: Vec<T> = if exact {
        vec![T::one(); usable.len()]
    } else {
        usable
            .iter()
            .map(|e| {
                let rel = e.moment.stderr / e.moment.estimate;
                (rel * rel).recip()
            })
            .collect()
    };
    let fit = wls(&x, &y, &w);

    let batches = usable[0].moment.batch_means.len();
    let jackknife_ok = batches >= 2
        && usable.iter().all(|e| e.moment.batch_means.len() == batches && e.moment.batch_sizes.len() == batches);
    let stderr = if jackknife_ok {
        let mut slopes = Vec::with_capacity(batches);
        for drop in 0..batches {
            let yj: Vec<T> = usable
                .iter()
                .map(|e| {
                    let m = &e.moment;
                    let total = T::from_usize_lossy(m.n);
                    let nd = T::from_usize_lossy(m.batch_sizes[drop]);
                    let sum = m.estimate * total - m.batch_means[drop] * nd;
                    (sum / (total - nd)).ln()
                })
                .collect();
            if yj.iter().all(|v| v.is_finite()) {
                slopes.push(wls(&x, &yj, &w).slope);
            }
        }
        let b = T::from_usize_lossy(slopes.len());
        if slopes.len() >= 2 {
            let mean = slopes.iter().fold(T::zero(), |s, &v| s + v) / b;
            let ss = slopes.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean));
            ((b - T::one()) / b * ss).sqrt()
        } else {
            T::infinity()
        }
    } else if exact {
        (fit.residual_var / fit.sxx).sqrt()
    } else {
        fit.sxx.recip().sqrt()
    };
    Ok(ScalingFit {
        slope: fit.slope,
        intercept: fit.intercept,
        stderr,
        r_squared: fit.r_squared,
        lags_used: usable.len(),
    })
}

/// One row of the empirical-vs-theoretical scaling curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint<T> {
    pub q: T,
    /// Absent when the moment is flagged divergent or data are insufficient.
    pub fit: Option<ScalingFit<T>>,
    pub theory: Option<ScalingValue<T>>,
    /// Most frequent per-lag divergence flag.
    pub flag: Option<DivergenceFlag>,
    /// Within [`THRESHOLD_MARGIN`] of a threshold of the scaling law.
    pub near_threshold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCurve<T> {
    pub points: Vec<CurvePoint<T>>,
}

impl<T: Scalar> ScalingCurve<T> {
    pub fn build(table: &MomentTable<T>, qs: &[T], theory: Option<&TheoryModel<T>>) -> Self {
        let points = qs
            .iter()
            .map(|&q| {
                let flags: Vec<DivergenceFlag> = table.at_order(q).iter().filter_map(|e| e.flag).collect();
                let flag = majority(&flags);
                let fit = if flag == Some(DivergenceFlag::Divergent) { None } else { scaling_exponent(table, q).ok() };
                let near_threshold =
                    theory.and_then(|m| m.threshold_distance(q)).is_some_and(|d| d < T::lit(THRESHOLD_MARGIN));
                let theory = theory.and_then(|m| m.a(q).ok());
                CurvePoint { q, fit, theory, flag, near_threshold }
            })
            .collect();
        Self { points }
    }

    pub fn point(&self, q: T) -> Option<&CurvePoint<T>> {
        self.points.iter().find(|p| p.q == q)
    }

    /// CSV with columns `q,A_hat,stderr,r2,A_theory,flag`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "q,A_hat,stderr,r2,A_theory,flag")?;
        for p in &self.points {
            let (a, se, r2) = match &p.fit {
                Some(f) => (fmt17(f.slope), fmt17(f.stderr), fmt17(f.r_squared)),
                None => (String::new(), String::new(), String::new()),
            };
            let theory = p.theory.map(|t| t.to_text()).unwrap_or_default();
            let mut flag = p.flag.map_or("unchecked", |f| f.as_str()).to_string();
            if p.near_threshold {
                flag.push_str("+near_threshold");
            }
            writeln!(w, "{},{},{},{},{},{}", fmt17(p.q), a, se, r2, theory, flag)?;
        }
        Ok(())
    }
}

fn majority(flags: &[DivergenceFlag]) -> Option<DivergenceFlag> {
    if flags.is_empty() {
        return None;
    }
    let count = |f: DivergenceFlag| flags.iter().filter(|&&x| x == f).count();
    let all = [DivergenceFlag::Divergent, DivergenceFlag::Heavy, DivergenceFlag::Stable];
    // ties resolve towards the more severe flag
    all.into_iter().max_by_key(|&f| (count(f), f))
}
