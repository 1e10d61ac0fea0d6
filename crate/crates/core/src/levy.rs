//! Lévy subordinators with a finite characteristic measure.
//!
//! A subordinator here is a drift `m ≥ 0` plus a compound Poisson part with
//! rate `λ` and a positive jump law. The reference jump law is the exact
//! Pareto law, whose tail `ν((u, ∞)) = λ (x_min/u)^α` is a pure power.
//! Infinite-activity measures enter only through [`SubordinatorSpec::truncate`].

use rand::Rng;
use thiserror::Error;

use crate::quadrature::{self, QuadratureError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevyError {
    #[error("invalid subordinator parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("truncation level {epsilon} leaves no jump mass")]
    Degenerate { epsilon: f64 },
    #[error("Laplace exponent at s = {s}: {source}")]
    Quadrature {
        s: f64,
        #[source]
        source: QuadratureError,
    },
}

fn invalid(name: &'static str, value: impl Scalar, reason: &'static str) -> LevyError {
    LevyError::InvalidParameter { name, value: value.to_f64_lossy(), reason }
}

/// One point mass of a discrete jump law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom<T> {
    pub size: T,
    /// Jumps of this size per unit time.
    pub rate: T,
}

/// Law of a single jump size, normalised to a probability distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw<T> {
    /// `P(J > x) = (x_min / x)^alpha` for `x ≥ x_min`.
    Pareto { x_min: T, alpha: T },
    /// Finitely many positive sizes; probabilities are `rate / total rate`.
    Atoms(Vec<Atom<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorSpec<T> {
    drift: T,
    jump_rate: T,
    law: JumpLaw<T>,
}

impl<T: Scalar> SubordinatorSpec<T> {
    /// Drift `m`, jump rate `λ` and Pareto jumps with scale `x_min` and tail exponent `alpha`.
    pub fn pareto(drift: T, jump_rate: T, x_min: T, alpha: T) -> Result<Self, LevyError> {
        check_drift(drift)?;
        if !(jump_rate > T::zero()) || !jump_rate.is_finite() {
            return Err(invalid("jump_rate", jump_rate, "must be positive and finite"));
        }
        if !(x_min > T::zero()) || !x_min.is_finite() {
            return Err(invalid("x_min", x_min, "must be positive and finite"));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(invalid("alpha", alpha, "must be positive and finite"));
        }
        Ok(Self { drift, jump_rate, law: JumpLaw::Pareto { x_min, alpha } })
    }

    /// Discrete jump law given as `(size, rate)` pairs.
    pub fn atoms(drift: T, atoms: &[(T, T)]) -> Result<Self, LevyError> {
        check_drift(drift)?;
        if atoms.is_empty() {
            return Err(invalid("atoms", T::zero(), "at least one atom required"));
        }
        let mut out = Vec::with_capacity(atoms.len());
        for &(size, rate) in atoms {
            if !(size > T::zero()) || !size.is_finite() {
                return Err(invalid("atom size", size, "must be positive and finite"));
            }
            if !(rate > T::zero()) || !rate.is_finite() {
                return Err(invalid("atom rate", rate, "must be positive and finite"));
            }
            out.push(Atom { size, rate });
        }
        out.sort_by(|a, b| a.size.partial_cmp(&b.size).expect("finite sizes"));
        let jump_rate = out.iter().fold(T::zero(), |s, a| s + a.rate);
        Ok(Self { drift, jump_rate, law: JumpLaw::Atoms(out) })
    }

    pub fn drift(&self) -> T {
        self.drift
    }

    pub fn jump_rate(&self) -> T {
        self.jump_rate
    }

    pub fn law(&self) -> &JumpLaw<T> {
        &self.law
    }

    /// Exponent `α` of the regularly varying jump tail; `None` for bounded laws.
    pub fn tail_exponent(&self) -> Option<T> {
        match &self.law {
            JumpLaw::Pareto { alpha, .. } => Some(*alpha),
            JumpLaw::Atoms(_) => None,
        }
    }

    /// Mean jump size, `None` when infinite.
    pub fn mean_jump(&self) -> Option<T> {
        match &self.law {
            JumpLaw::Pareto { x_min, alpha } => (*alpha > T::one()).then(|| *alpha * *x_min / (*alpha - T::one())),
            JumpLaw::Atoms(atoms) => Some(atoms.iter().fold(T::zero(), |s, a| s + a.size * a.rate) / self.jump_rate),
        }
    }

    /// Inverse CDF of the jump law at `u ∈ (0, 1)`.
    ///
    /// For Pareto this is `x_min · u^(-1/α)`, i.e. `u` plays the role of the
    /// survival probability.
    pub fn jump_quantile(&self, u: T) -> T {
        match &self.law {
            JumpLaw::Pareto { x_min, alpha } => *x_min * u.powf(-alpha.recip()),
            JumpLaw::Atoms(atoms) => {
                // survival convention as for Pareto: large u ↦ small jumps
                let mut acc = T::zero();
                let target = (T::one() - u) * self.jump_rate;
                for a in atoms {
                    acc = acc + a.rate;
                    if target < acc {
                        return a.size;
                    }
                }
                atoms.last().expect("nonempty").size
            }
        }
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.jump_quantile(T::open01(rng))
    }

    /// Waiting time until the next jump.
    #[inline]
    pub fn sample_waiting_time<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        T::exp1(rng) / self.jump_rate
    }

    /// Ordered jump times of the compound Poisson part on `(0, horizon]`.
    pub fn sample_jump_times<R: Rng + ?Sized>(&self, horizon: T, rng: &mut R) -> Vec<T> {
        let mut times = Vec::new();
        if !(horizon > T::zero()) {
            return times;
        }
        let mut t = self.sample_waiting_time(rng);
        while t <= horizon {
            times.push(t);
            t = t + self.sample_waiting_time(rng);
        }
        times
    }

    /// One draw of `L_t`.
    pub fn sample_value<R: Rng + ?Sized>(&self, t: T, rng: &mut R) -> T {
        let jumps = self.sample_jump_times(t, rng).len();
        (0..jumps).fold(self.drift * t, |s, _| s + self.sample_jump(rng))
    }

    /// `ν((u, ∞))`.
    pub fn tail_mass(&self, u: T) -> T {
        match &self.law {
            JumpLaw::Pareto { x_min, alpha } => {
                if u <= *x_min {
                    self.jump_rate
                } else {
                    self.jump_rate * (*x_min / u).powf(*alpha)
                }
            }
            JumpLaw::Atoms(atoms) => atoms.iter().filter(|a| a.size > u).fold(T::zero(), |s, a| s + a.rate),
        }
    }

    /// Laplace exponent `Ψ(s) = m s + ∫ (1 − e^{−s x}) ν(dx)`.
    pub fn laplace_exponent(&self, s: T) -> Result<T, LevyError> {
        if !(s >= T::zero()) {
            return Err(invalid("s", s, "Laplace argument must be nonnegative"));
        }
        if s == T::zero() {
            return Ok(T::zero());
        }
        let jump_part = match &self.law {
            JumpLaw::Pareto { x_min, alpha } => {
                // x = x_min u^{-1/α} maps the Pareto law onto u ~ U(0, 1)
                let (x_min, inv_alpha) = (*x_min, alpha.recip());
                let integrand = |u: T| -(-(s * x_min * u.powf(-inv_alpha))).exp_m1();
                let q = quadrature::integrate(integrand, T::zero(), T::one(), 1e-8, T::zero())
                    .map_err(|source| LevyError::Quadrature { s: s.to_f64_lossy(), source })?;
                self.jump_rate * q.value
            }
            JumpLaw::Atoms(atoms) => atoms.iter().fold(T::zero(), |acc, a| acc - a.rate * (-(s * a.size)).exp_m1()),
        };
        Ok(self.drift * s + jump_part)
    }

    /// Restricts the characteristic measure to `[epsilon, ∞)`.
    ///
    /// Returns the finite-activity part together with the mean rate of the
    /// discarded part: `m + ∫_{(0, ε)} x ν(dx)`.
    pub fn truncate(&self, epsilon: T) -> Result<(Self, T), LevyError> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(invalid("epsilon", epsilon, "must be positive and finite"));
        }
        match &self.law {
            JumpLaw::Pareto { x_min, alpha } => {
                let (x_min, alpha) = (*x_min, *alpha);
                if epsilon <= x_min {
                    return Ok((self.clone(), self.drift));
                }
                let kept_rate = self.tail_mass(epsilon);
                // λ ∫_{x_min}^{ε} x · α x_min^α x^{-α-1} dx
                let small_mean = if (alpha - T::one()).abs() < T::epsilon() {
                    self.jump_rate * x_min * (epsilon / x_min).ln()
                } else {
                    let one = T::one();
                    self.jump_rate * alpha * x_min.powf(alpha) * (epsilon.powf(one - alpha) - x_min.powf(one - alpha))
                        / (one - alpha)
                };
                let spec =
                    Self { drift: self.drift, jump_rate: kept_rate, law: JumpLaw::Pareto { x_min: epsilon, alpha } };
                Ok((spec, self.drift + small_mean))
            }
            JumpLaw::Atoms(atoms) => {
                let (kept, dropped): (Vec<&Atom<T>>, Vec<&Atom<T>>) = atoms.iter().partition(|a| a.size >= epsilon);
                if kept.is_empty() {
                    return Err(LevyError::Degenerate { epsilon: epsilon.to_f64_lossy() });
                }
                let residual = dropped.iter().fold(self.drift, |s, a| s + a.size * a.rate);
                let pairs: Vec<(T, T)> = kept.iter().map(|a| (a.size, a.rate)).collect();
                Ok((Self::atoms(self.drift, &pairs)?, residual))
            }
        }
    }
}

fn check_drift<T: Scalar>(drift: T) -> Result<(), LevyError> {
    if !(drift >= T::zero()) || !drift.is_finite() {
        return Err(invalid("drift", drift, "must be nonnegative and finite"));
    }
    Ok(())
}
