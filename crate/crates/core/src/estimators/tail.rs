use std::fmt;

use super::moments::empirical_moment;
use super::EstimatorError;
use crate::scalar::Scalar;

/// Minimum sample size of [`divergence_diagnostic`].
pub const MIN_DIAGNOSTIC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillEstimate<T> {
    pub tail_index: T,
    pub stderr: T,
    pub k: usize,
    /// Zero log-spacings: the index is infinite.
    pub degenerate: bool,
}

/// Default number of upper order statistics: `n^{2/3}`.
pub fn default_hill_k(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0).floor() as usize).max(10).min(n.saturating_sub(1))
}

/// Hill estimator from the top `k + 1` order statistics: the reciprocal of
/// `(1/k) Σ_{i≤k} ln(X_(i) / X_(k+1))`.
pub fn hill_estimator<T: Scalar>(samples: &[T], k: usize) -> Result<HillEstimate<T>, EstimatorError> {
    let n = samples.len();
    if k < 10 || k >= n {
        return Err(EstimatorError::InvalidK { k, n });
    }
    if let Some(&bad) = samples.iter().find(|&&x| !(x > T::zero())) {
        return Err(EstimatorError::Domain(bad.to_f64_lossy()));
    }
    let mut work = samples.to_vec();
    // descending: positions 0..k hold the k largest, position k the (k+1)-th
    work.select_nth_unstable_by(k, |a, b| b.partial_cmp(a).expect("positive samples"));
    let threshold = work[k].ln();
    let mean_spacing = work[..k].iter().fold(T::zero(), |s, x| s + (x.ln() - threshold)) / T::from_usize_lossy(k);
    let kt = T::from_usize_lossy(k);
    if mean_spacing <= T::zero() {
        return Ok(HillEstimate { tail_index: T::infinity(), stderr: T::infinity(), k, degenerate: true });
    }
    let tail_index = mean_spacing.recip();
    Ok(HillEstimate { tail_index, stderr: tail_index / kt.sqrt(), k, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DivergenceFlag {
    Stable,
    Heavy,
    Divergent,
}

impl DivergenceFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            DivergenceFlag::Stable => "stable",
            DivergenceFlag::Heavy => "heavy",
            DivergenceFlag::Divergent => "divergent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stable" => Some(DivergenceFlag::Stable),
            "heavy" => Some(DivergenceFlag::Heavy),
            "divergent" => Some(DivergenceFlag::Divergent),
            _ => None,
        }
    }
}

impl fmt::Display for DivergenceFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Block counts behind the growth statistic: block sizes `n/256`, `n/128`,
/// `n/64`, i.e. two doublings of the subsample size.
pub const GROWTH_BLOCKS: [usize; 3] = [256, 128, 64];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport<T> {
    pub flag: DivergenceFlag,
    /// Median over disjoint blocks of the block moment, for each entry of
    /// [`GROWTH_BLOCKS`].
    pub nested: [T; 3],
    /// `nested[2] / nested[0]`: growth over two doublings of the subsample.
    pub growth: T,
    /// Hill index of `|x|^q`; `None` when too few nonzero samples.
    pub hill_index: Option<T>,
}

fn median_block_moment<T: Scalar>(powered: &[T], blocks: usize) -> T {
    let n = powered.len();
    let mut means: Vec<T> = (0..blocks)
        .map(|b| {
            let chunk = &powered[b * n / blocks..(b + 1) * n / blocks];
            chunk.iter().fold(T::zero(), |s, &v| s + v) / T::from_usize_lossy(chunk.len())
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite block means"));
    let mid = blocks / 2;
    (means[mid - 1] + means[mid]) * T::lit(0.5)
}

/// Classifies whether `E|x|^q` looks finite.
///
/// The subsample moment at size `b` is the median of the moments of the
/// disjoint blocks of size `b`; a sample mean with infinite expectation
/// grows like `b^{1/a - 1}` where `a` is the tail index of `|x|^q`.
///
/// * `divergent`: the subsample moment more than doubles over two doublings
///   of the subsample size, and the Hill index of `|x|^q` is below 1;
/// * `heavy`: if the Hill index of `|x|^q` is in `[1, 2)`;
/// * `stable`: otherwise. A Hill index below 1 without growth is the
///   pre-asymptotic tail of a distribution with all moments, such as
///   `|Z|^8` for Gaussian `Z`.
pub fn divergence_diagnostic<T: Scalar>(samples: &[T], q: T) -> Result<DivergenceReport<T>, EstimatorError> {
    let n = samples.len();
    if n < MIN_DIAGNOSTIC_SAMPLES {
        return Err(EstimatorError::TooFewSamples { got: n, needed: MIN_DIAGNOSTIC_SAMPLES });
    }
    empirical_moment(&samples[..1], q)?;
    let powered: Vec<T> = samples.iter().map(|x| x.abs().powf(q)).collect();
    let nested = GROWTH_BLOCKS.map(|b| median_block_moment(&powered, b));
    let growth = if nested[0] > T::zero() { nested[2] / nested[0] } else { T::one() };

    let positive: Vec<T> = powered.into_iter().filter(|&v| v > T::zero()).collect();
    let hill_index = if positive.len() > 11 {
        let k = default_hill_k(positive.len());
        Some(hill_estimator(&positive, k)?.tail_index)
    } else {
        None
    };
    let flag = match hill_index {
        Some(h) if h < T::one() && growth > T::lit(2.0) => DivergenceFlag::Divergent,
        Some(h) if h >= T::one() && h < T::lit(2.0) => DivergenceFlag::Heavy,
        _ => DivergenceFlag::Stable,
    };
    Ok(DivergenceReport { flag, nested, growth, hill_index })
}
