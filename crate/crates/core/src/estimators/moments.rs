use statrs::function::gamma::ln_gamma;

use super::EstimatorError;
use crate::scalar::Scalar;

/// Number of equal batches behind every standard error.
pub const BATCHES: usize = 32;

/// Sample mean of `|x|^q` with a batch-means standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate<T> {
    pub estimate: T,
    pub stderr: T,
    pub n: usize,
    /// `s² / stderr²`, capped at `n`.
    pub n_eff: T,
    pub batch_means: Vec<T>,
    pub batch_sizes: Vec<usize>,
    /// Fewer samples than batches: `stderr` is the naive `s/√n`.
    pub fallback: bool,
}

fn check<T: Scalar>(n: usize, q: T) -> Result<(), EstimatorError> {
    if n == 0 {
        return Err(EstimatorError::Empty);
    }
    if !(q >= T::one()) || !q.is_finite() {
        return Err(EstimatorError::InvalidOrder(q.to_f64_lossy()));
    }
    Ok(())
}

pub(crate) fn batch_mean_estimate<T: Scalar>(values: &[T]) -> MomentEstimate<T> {
    let n = values.len();
    let nt = T::from_usize_lossy(n);
    let mean = values.iter().fold(T::zero(), |s, &v| s + v) / nt;
    let sample_var = if n > 1 {
        values.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / T::from_usize_lossy(n - 1)
    } else {
        T::zero()
    };
    if n < BATCHES {
        let stderr = (sample_var / nt).sqrt();
        return MomentEstimate {
            estimate: mean,
            stderr,
            n,
            n_eff: nt,
            batch_means: vec![mean],
            batch_sizes: vec![n],
            fallback: true,
        };
    }
    let mut batch_means = Vec::with_capacity(BATCHES);
    let mut batch_sizes = Vec::with_capacity(BATCHES);
    for b in 0..BATCHES {
        let lo = b * n / BATCHES;
        let hi = (b + 1) * n / BATCHES;
        let chunk = &values[lo..hi];
        batch_means.push(chunk.iter().fold(T::zero(), |s, &v| s + v) / T::from_usize_lossy(chunk.len()));
        batch_sizes.push(chunk.len());
    }
    let bt = T::from_usize_lossy(BATCHES);
    let bm = batch_means.iter().fold(T::zero(), |s, &v| s + v) / bt;
    let bvar = batch_means.iter().fold(T::zero(), |s, &v| s + (v - bm) * (v - bm)) / (bt - T::one());
    let stderr = (bvar / bt).sqrt();
    let n_eff = if stderr > T::zero() { (sample_var / (stderr * stderr)).min(nt) } else { nt };
    MomentEstimate { estimate: mean, stderr, n, n_eff, batch_means, batch_sizes, fallback: false }
}

/// Mean of `|x|^q` over `samples`.
pub fn empirical_moment<T: Scalar>(samples: &[T], q: T) -> Result<MomentEstimate<T>, EstimatorError> {
    check(samples.len(), q)?;
    let values: Vec<T> = samples.iter().map(|x| x.abs().powf(q)).collect();
    Ok(batch_mean_estimate(&values))
}

/// Mean of `w_i |x_i|^q`: the importance-sampling estimate of `E|x|^q` from
/// samples carrying likelihood-ratio weights.
pub fn weighted_moment<T: Scalar>(samples: &[T], weights: &[T], q: T) -> Result<MomentEstimate<T>, EstimatorError> {
    check(samples.len(), q)?;
    check_weights(samples.len(), weights)?;
    let values: Vec<T> = samples.iter().zip(weights).map(|(x, &w)| w * x.abs().powf(q)).collect();
    Ok(batch_mean_estimate(&values))
}

fn check_weights<T: Scalar>(n: usize, weights: &[T]) -> Result<(), EstimatorError> {
    if weights.len() != n {
        return Err(EstimatorError::WeightCount { samples: n, weights: weights.len() });
    }
    match weights.iter().find(|&&w| !(w >= T::zero()) || !w.is_finite()) {
        Some(&w) => Err(EstimatorError::InvalidWeight(w.to_f64_lossy())),
        None => Ok(()),
    }
}

/// Median over `groups` disjoint groups of the group means of `|x|^q`.
/// Reported next to the plain mean as a robustness check.
pub fn median_of_means_moment<T: Scalar>(samples: &[T], q: T, groups: usize) -> Result<T, EstimatorError> {
    check(samples.len(), q)?;
    let groups = groups.clamp(1, samples.len());
    let n = samples.len();
    let mut means: Vec<T> = (0..groups)
        .map(|g| {
            let chunk = &samples[g * n / groups..(g + 1) * n / groups];
            chunk.iter().fold(T::zero(), |s, x| s + x.abs().powf(q)) / T::from_usize_lossy(chunk.len())
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let mid = groups / 2;
    Ok(if groups % 2 == 1 { means[mid] } else { (means[mid - 1] + means[mid]) * T::lit(0.5) })
}

/// `E|Z|^q = 2^{q/2} Γ((q+1)/2) / √π` for standard normal `Z`.
pub fn gaussian_abs_moment<T: Scalar>(q: T) -> T {
    let qf = q.to_f64_lossy();
    let ln = 0.5 * qf * std::f64::consts::LN_2 + ln_gamma(0.5 * (qf + 1.0)) - 0.5 * std::f64::consts::PI.ln();
    T::lit(ln.exp())
}

/// `E|ΔX|^q` estimated as `E|Z|^q · mean(I^{q/2})`, integrating the Gaussian
/// factor out analytically.
pub fn conditional_moment<T: Scalar>(integrated_variances: &[T], q: T) -> Result<MomentEstimate<T>, EstimatorError> {
    check(integrated_variances.len(), q)?;
    let half = q * T::lit(0.5);
    let values: Vec<T> = integrated_variances.iter().map(|i| i.max(T::zero()).powf(half)).collect();
    Ok(scale_estimate(batch_mean_estimate(&values), gaussian_abs_moment(q)))
}

/// Weighted form of [`conditional_moment`].
pub fn weighted_conditional_moment<T: Scalar>(
    integrated_variances: &[T],
    weights: &[T],
    q: T,
) -> Result<MomentEstimate<T>, EstimatorError> {
    check(integrated_variances.len(), q)?;
    check_weights(integrated_variances.len(), weights)?;
    let half = q * T::lit(0.5);
    let values: Vec<T> =
        integrated_variances.iter().zip(weights).map(|(i, &w)| w * i.max(T::zero()).powf(half)).collect();
    Ok(scale_estimate(batch_mean_estimate(&values), gaussian_abs_moment(q)))
}

fn scale_estimate<T: Scalar>(mut est: MomentEstimate<T>, c: T) -> MomentEstimate<T> {
    est.estimate = est.estimate * c;
    est.stderr = est.stderr * c;
    for m in &mut est.batch_means {
        *m = *m * c;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_samples() {
        let e = empirical_moment(&[0.0f64; 100], 2.0).unwrap();
        assert_eq!((e.estimate, e.stderr), (0.0, 0.0));
    }

    #[test]
    fn unit_magnitudes() {
        let e = empirical_moment(&[-1.0f64, 1.0], 3.0).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert!(e.fallback);
    }

    #[test]
    fn errors() {
        assert_eq!(empirical_moment::<f64>(&[], 2.0), Err(EstimatorError::Empty));
        assert!(matches!(empirical_moment(&[1.0f64], 0.5), Err(EstimatorError::InvalidOrder(_))));
    }

    #[test]
    fn batch_layout() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let e = empirical_moment(&xs, 1.0).unwrap();
        assert_eq!(e.batch_means.len(), BATCHES);
        assert_eq!(e.batch_sizes.iter().sum::<usize>(), 1000);
        assert!(!e.fallback);
        assert!((e.estimate - 499.5).abs() < 1e-12);
    }

    #[test]
    fn gaussian_abs_moments() {
        assert!((gaussian_abs_moment(2.0f64) - 1.0).abs() < 1e-14);
        assert!((gaussian_abs_moment(4.0f64) - 3.0).abs() < 1e-13);
        assert!((gaussian_abs_moment(8.0f64) - 105.0).abs() < 1e-10);
        assert!((gaussian_abs_moment(1.0f64) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn unit_weights_reproduce_plain_moments() {
        let xs: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin()).collect();
        let ones = vec![1.0; xs.len()];
        assert_eq!(weighted_moment(&xs, &ones, 3.0).unwrap(), empirical_moment(&xs, 3.0).unwrap());
        let iv: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert_eq!(weighted_conditional_moment(&iv, &ones, 2.5).unwrap(), conditional_moment(&iv, 2.5).unwrap());
        assert!(matches!(weighted_moment(&xs, &ones[1..], 2.0), Err(EstimatorError::WeightCount { .. })));
    }

    #[test]
    fn median_of_means_is_robust_to_one_outlier() {
        let mut xs = vec![1.0f64; 99];
        xs.push(1e6);
        assert_eq!(median_of_means_moment(&xs, 1.0, 9).unwrap(), 1.0);
    }
}
