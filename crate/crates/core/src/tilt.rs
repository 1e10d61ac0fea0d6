//! Importance sampling of the large recent jumps behind small-lag moments.
//!
//! Increment moments at lag `h` above the diffusive range are carried by
//! replicas with a jump of size at least `v∞(h)` within a time of order `h`
//! of the observation window, where `v∞(s)` is the value reached at time `s`
//! by the flow started from infinity. Plain sampling sees such replicas with
//! probability of order `h^{1+α}` or less, so they are absent from any desk
//! scale sample at the smallest lags.
//!
//! With probability `share`, one extra jump `(τ, J)` is added to the jump
//! process, with `|τ|` log-uniform over the window around the observation
//! start and `J` Pareto above `v∞(|τ|)` with a tail index `size_tail`
//! below the jump law's. Jumps inside the window add about `J^{2−γ}` to the
//! integrated variance, so a heavy size proposal is what keeps the variance
//! of the `q`-th moment estimate finite up to the blow-up order. By
//! the Mecke formula the law of the perturbed point process has density
//! `(1 − share) + share · Σ g(t, x) / (λ p(x))` with respect to the original,
//! summed over the jumps inside the window. Each replica carries the
//! reciprocal as its weight, which is at most `1 / (1 − share)`.

use rand::Rng;
use rayon::prelude::*;

use crate::levy::{JumpLaw, SubordinatorSpec};
use crate::pricing::{increment, IncrementTable, PricingError};
use crate::scalar::Scalar;
use crate::stream::StreamFactory;
use crate::volpath::{self, DriftSpec, VolError, VolatilityPath};

/// Extra-jump proposal around the observation window `[0, max lag]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpTilt<T> {
    /// Probability of adding the extra jump, in `(0, 1)`.
    pub share: T,
    /// Lower end of `|τ|` as a fraction of the smallest lag.
    pub lower: T,
    /// Upper end of `|τ|` before the window start, as a multiple of the
    /// largest lag.
    pub before: T,
    /// Tail index of the proposed jump sizes; capped at the jump law's.
    pub size_tail: T,
}

impl<T: Scalar> Default for JumpTilt<T> {
    fn default() -> Self {
        Self { share: T::lit(0.5), lower: T::lit(0.125), before: T::lit(4.0), size_tail: T::lit(0.1) }
    }
}

/// `v∞(s) = (C(γ−1)s)^{-1/(γ−1)}`; `None` unless the drift is a power law
/// with `γ > 1`.
pub fn saturation_scale<T: Scalar>(drift: &DriftSpec<T>, s: T) -> Option<T> {
    match drift {
        DriftSpec::PowerLaw { c, gamma } if *gamma > T::one() => {
            let g1 = *gamma - T::one();
            Some((*c * g1 * s).powf(-g1.recip()))
        }
        _ => None,
    }
}

struct Proposal<T> {
    share: T,
    s_lo: T,
    before: T,
    after: T,
    x_min: T,
    alpha: T,
    size_tail: T,
    rate: T,
    gamma_c: (T, T),
}

impl<T: Scalar> Proposal<T> {
    fn threshold(&self, s: T) -> T {
        let (c, gamma) = self.gamma_c;
        let g1 = gamma - T::one();
        (c * g1 * s).powf(-g1.recip()).max(self.x_min)
    }

    fn upper(&self, tau: T) -> T {
        if tau < T::zero() {
            self.before
        } else {
            self.after
        }
    }

    /// `g(τ, J) / (λ p(J))`.
    fn ratio(&self, tau: T, size: T) -> T {
        let s = tau.abs();
        let hi = self.upper(tau);
        if s < self.s_lo || s > hi {
            return T::zero();
        }
        let m = self.threshold(s);
        if !(size > m) {
            return T::zero();
        }
        let time_density = T::lit(0.5) / (s * (hi / self.s_lo).ln());
        let size_ratio = self.size_tail / self.alpha
            * (m / self.x_min).powf(self.alpha)
            * (size / m).powf(self.alpha - self.size_tail);
        time_density * size_ratio / self.rate
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (T, T) {
        let negative = rng.random::<bool>();
        let hi = if negative { self.before } else { self.after };
        let s = self.s_lo * (hi / self.s_lo).powf(T::open01(rng));
        let m = self.threshold(s);
        let size = m * T::open01(rng).powf(-self.size_tail.recip());
        (if negative { -s } else { s }, size)
    }
}

fn simulate_jumps<T: Scalar, R: Rng + ?Sized>(sub: &SubordinatorSpec<T>, horizon: T, rng: &mut R) -> Vec<(T, T)> {
    let mut out = Vec::new();
    let mut t = T::zero();
    loop {
        t = t + sub.sample_waiting_time(rng);
        if t > horizon {
            return out;
        }
        out.push((t, sub.sample_jump(rng)));
    }
}

fn insert_sorted<T: Scalar>(jumps: &mut Vec<(T, T)>, event: (T, T)) {
    let pos = jumps.partition_point(|j| j.0 < event.0);
    jumps.insert(pos, event);
}

fn tilted_replica<T: Scalar, R: Rng + ?Sized>(
    sub: &SubordinatorSpec<T>,
    drift: &DriftSpec<T>,
    lags: &[T],
    burn_in: T,
    proposal: &Proposal<T>,
    rng: &mut R,
) -> Result<(Vec<T>, Vec<T>, T), VolError> {
    let horizon = *lags.last().expect("nonempty lags");
    // burn-in on [0, burn_in] maps to τ = t − burn_in on [−burn_in, 0]
    let mut before = simulate_jumps(sub, burn_in, rng);
    let mut after = simulate_jumps(sub, horizon, rng);
    if rng.random::<f64>() < proposal.share.to_f64_lossy() {
        let (tau, size) = proposal.draw(rng);
        if tau < T::zero() {
            insert_sorted(&mut before, (burn_in + tau, size));
        } else {
            insert_sorted(&mut after, (tau, size));
        }
    }
    let sum = before
        .iter()
        .map(|&(t, x)| proposal.ratio(t - burn_in, x))
        .chain(after.iter().map(|&(t, x)| proposal.ratio(t, x)))
        .fold(T::zero(), |s, r| s + r);
    let weight = ((T::one() - proposal.share) + proposal.share * sum).recip();

    let inflow = sub.drift();
    let mut v = T::zero();
    let mut t = T::zero();
    for &(time, size) in &before {
        v = drift.advance(v, time - t, inflow) + size;
        t = time;
    }
    let v0 = drift.advance(v, burn_in - t, inflow);
    let path = VolatilityPath::from_jumps(drift, inflow, v0, horizon, &after)?;
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
    Ok((ivar, dx, weight))
}

/// Like [`simulate_increments`](crate::pricing::simulate_increments) from the
/// stationary law, with the extra-jump proposal. The returned table carries
/// one likelihood-ratio weight per replica.
///
/// Requires a Pareto jump law and a power-law drift with `γ > 1`.
pub fn simulate_tilted_increments<T: Scalar>(
    sub: &SubordinatorSpec<T>,
    drift: &DriftSpec<T>,
    lags: &[T],
    n_paths: usize,
    burn_in: T,
    tilt: JumpTilt<T>,
    streams: &StreamFactory,
) -> Result<IncrementTable<T>, PricingError> {
    crate::pricing::check_lags(lags)?;
    if n_paths == 0 {
        return Err(PricingError::NoPaths);
    }
    volpath::check_regime(sub, drift)?;
    let (x_min, alpha) = match sub.law() {
        JumpLaw::Pareto { x_min, alpha } => (*x_min, *alpha),
        JumpLaw::Atoms(_) => return Err(PricingError::Unsupported("tilting needs a Pareto jump law".into())),
    };
    let gamma_c = match drift {
        DriftSpec::PowerLaw { c, gamma } if *gamma > T::one() => (*c, *gamma),
        _ => return Err(PricingError::Unsupported("tilting needs a power-law drift with gamma > 1".into())),
    };
    let positive = |x: T| x > T::zero() && x.is_finite();
    if !(tilt.share > T::zero() && tilt.share < T::one())
        || !positive(tilt.lower)
        || !positive(tilt.before)
        || !positive(tilt.size_tail)
    {
        return Err(PricingError::Unsupported(
            "tilt share must be in (0, 1) and window factors and size tail positive".into(),
        ));
    }
    let horizon = *lags.last().expect("nonempty lags");
    let s_lo = lags[0] * tilt.lower;
    let proposal = Proposal {
        share: tilt.share,
        s_lo,
        before: (horizon * tilt.before).max(s_lo),
        after: horizon.max(s_lo),
        x_min,
        alpha,
        size_tail: tilt.size_tail.min(alpha),
        rate: sub.jump_rate(),
        gamma_c,
    };
    if !(burn_in > proposal.before) || !burn_in.is_finite() {
        return Err(VolError::BurnIn(burn_in.to_f64_lossy()).into());
    }
    let rows: Vec<(Vec<T>, Vec<T>, T)> = (0..n_paths)
        .into_par_iter()
        .map(|r| tilted_replica(sub, drift, lags, burn_in, &proposal, &mut streams.stream(r as u64)))
        .collect::<Result<_, _>>()?;
    let mut ivar = Vec::with_capacity(n_paths * lags.len());
    let mut dx = Vec::with_capacity(n_paths * lags.len());
    let mut weights = Vec::with_capacity(n_paths);
    for (i, x, w) in rows {
        ivar.extend(i);
        dx.extend(x);
        weights.push(w);
    }
    IncrementTable::from_parts(lags.to_vec(), n_paths, ivar, dx, Some(weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Domain;

    #[test]
    fn saturation_scale_matches_flow_from_large_values() {
        let d = DriftSpec::power_law(1.0f64, 1.5).unwrap();
        let s = 0.01;
        let from_huge = d.flow(1e30, s);
        assert!((saturation_scale(&d, s).unwrap() - from_huge).abs() < 1e-9 * from_huge);
        assert!(saturation_scale(&DriftSpec::linear(1.0f64).unwrap(), s).is_none());
    }

    #[test]
    fn unsupported_models_are_rejected() {
        let sub = SubordinatorSpec::pareto(0.0f64, 1.0, 1.0, 3.0).unwrap();
        let lin = DriftSpec::linear(1.0).unwrap();
        let f = StreamFactory::new(1, Domain::Increments);
        let r = simulate_tilted_increments(&sub, &lin, &[0.1, 0.2], 10, 50.0, JumpTilt::default(), &f);
        assert!(matches!(r, Err(PricingError::Unsupported(_))));
    }

    #[test]
    fn weights_are_bounded_with_unit_mean() {
        let sub = SubordinatorSpec::pareto(0.0f64, 1.0, 1.0, 1.0).unwrap();
        let d = DriftSpec::power_law(1.0, 1.5).unwrap();
        let lags = crate::pricing::dyadic_lags(-8, -3);
        let f = StreamFactory::new(3, Domain::Increments);
        let t = simulate_tilted_increments(&sub, &d, &lags, 20_000, 50.0, JumpTilt::default(), &f).unwrap();
        let w = t.weights().unwrap();
        assert!(w.iter().all(|&x| x > 0.0 && x <= 2.0 + 1e-12));
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * sd / n.sqrt(), "mean weight {mean}");
    }
}
