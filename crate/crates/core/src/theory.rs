//! Closed-form moment scaling law.
//!
//! For `f(v) ~ C v^γ` with `γ > 1`, jump tail exponent `α` and `α + γ > 2`:
//!
//! * `A(q) = q/2` for `1 ≤ q < q* = 2(α+γ−1)`,
//! * `A(q) = (γ−2)/(2(γ−1)) q + (α+γ−1)/(γ−1)` above `q*` (and, if `γ < 2`,
//!   below `2α/(2−γ)`),
//! * `A(q) = −∞` for `q > 2α/(2−γ)` when `γ < 2`.
//!
//! Linear mean reversion gives the diffusive law up to the moment cap `2α`.
//! The two threshold points themselves are left undetermined.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::levy::SubordinatorSpec;
use crate::scalar::{fmt17, Scalar};
use crate::volpath::DriftSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("invalid model: alpha = {alpha}, gamma = {gamma} (need alpha > 0, gamma > 1, alpha + gamma > 2)")]
    InvalidParams { alpha: f64, gamma: f64 },
    #[error("q = {q} must be at least 1")]
    OrderBelowOne { q: f64 },
    #[error("q = {q} sits exactly on the threshold {threshold}: only the limsup is defined there")]
    Threshold { q: f64, threshold: f64 },
    #[error("scaling law undetermined: {0}")]
    Undetermined(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Diffusive,
    Multiscaling,
    Divergent,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Diffusive => "diffusive",
            Branch::Multiscaling => "multiscaling",
            Branch::Divergent => "divergent",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Value of `A(q)`: finite with its branch, or the `−∞` sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingValue<T> {
    Finite { value: T, branch: Branch },
    NegInfinite,
}

impl<T: Scalar> ScalingValue<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            ScalingValue::Finite { value, .. } => Some(*value),
            ScalingValue::NegInfinite => None,
        }
    }

    pub fn branch(&self) -> Branch {
        match self {
            ScalingValue::Finite { branch, .. } => *branch,
            ScalingValue::NegInfinite => Branch::Divergent,
        }
    }

    /// Text form used in CSV and JSON: the number, or `-inf`.
    pub fn to_text(&self) -> String {
        match self {
            ScalingValue::Finite { value, .. } => fmt17(*value),
            ScalingValue::NegInfinite => "-inf".into(),
        }
    }
}

/// Tail exponent `α` of the jump measure and growth exponent `γ` of `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    alpha: T,
    gamma: T,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(alpha: T, gamma: T) -> Result<Self, TheoryError> {
        let ok = alpha > T::zero()
            && gamma > T::one()
            && alpha + gamma > T::lit(2.0)
            && alpha.is_finite()
            && gamma.is_finite();
        if ok {
            Ok(Self { alpha, gamma })
        } else {
            Err(TheoryError::InvalidParams { alpha: alpha.to_f64_lossy(), gamma: gamma.to_f64_lossy() })
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// `q* = 2(α + γ − 1)`.
    pub fn q_star(&self) -> T {
        T::lit(2.0) * self.stationary_tail_exponent()
    }

    /// `2α/(2 − γ)` for `γ < 2`; `None` stands for `+∞`.
    pub fn blowup_q(&self) -> Option<T> {
        let two = T::lit(2.0);
        (self.gamma < two).then(|| two * self.alpha / (two - self.gamma))
    }

    /// Tail exponent `α + γ − 1` of the stationary variance law.
    pub fn stationary_tail_exponent(&self) -> T {
        self.alpha + self.gamma - T::one()
    }

    /// Slope `(γ−2)/(2(γ−1))` of the branch above `q*`.
    pub fn multiscaling_slope(&self) -> T {
        (self.gamma - T::lit(2.0)) / (T::lit(2.0) * (self.gamma - T::one()))
    }

    /// `q/2`, evaluated regardless of where `q` sits.
    pub fn diffusive_branch(&self, q: T) -> T {
        q * T::lit(0.5)
    }

    /// `(γ−2)/(2(γ−1)) q + (α+γ−1)/(γ−1)`, evaluated regardless of where `q` sits.
    pub fn multiscaling_branch(&self, q: T) -> T {
        self.multiscaling_slope() * q + self.stationary_tail_exponent() / (self.gamma - T::one())
    }

    pub fn thresholds(&self) -> Vec<T> {
        let mut t = vec![self.q_star()];
        t.extend(self.blowup_q());
        t
    }

    /// `A(q)`.
    pub fn theoretical_a(&self, q: T) -> Result<ScalingValue<T>, TheoryError> {
        check_order(q)?;
        for t in self.thresholds() {
            if q == t {
                return Err(threshold_error(q, t));
            }
        }
        if q < self.q_star() {
            return Ok(ScalingValue::Finite { value: self.diffusive_branch(q), branch: Branch::Diffusive });
        }
        match self.blowup_q() {
            Some(b) if q > b => Ok(ScalingValue::NegInfinite),
            _ => Ok(ScalingValue::Finite { value: self.multiscaling_branch(q), branch: Branch::Multiscaling }),
        }
    }
}

fn check_order<T: Scalar>(q: T) -> Result<(), TheoryError> {
    if q >= T::one() && q.is_finite() {
        Ok(())
    } else {
        Err(TheoryError::OrderBelowOne { q: q.to_f64_lossy() })
    }
}

fn threshold_error<T: Scalar>(q: T, t: T) -> TheoryError {
    TheoryError::Threshold { q: q.to_f64_lossy(), threshold: t.to_f64_lossy() }
}

pub fn q_star<T: Scalar>(params: &ModelParams<T>) -> T {
    params.q_star()
}

pub fn blowup_q<T: Scalar>(params: &ModelParams<T>) -> Option<T> {
    params.blowup_q()
}

pub fn theoretical_a<T: Scalar>(params: &ModelParams<T>, q: T) -> Result<ScalingValue<T>, TheoryError> {
    params.theoretical_a(q)
}

pub fn stationary_tail_exponent<T: Scalar>(params: &ModelParams<T>) -> T {
    params.stationary_tail_exponent()
}

/// Scaling law of a full model, covering the linear control as well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TheoryModel<T> {
    Superlinear(ModelParams<T>),
    /// Linear growth of `f`: diffusive scaling below the moment cap `2α`
    /// (no cap when the jump law has bounded support).
    Linear {
        alpha: Option<T>,
    },
}

impl<T: Scalar> TheoryModel<T> {
    pub fn from_specs(sub: &SubordinatorSpec<T>, drift: &DriftSpec<T>) -> Result<Self, TheoryError> {
        let gamma = drift
            .exponent()
            .ok_or_else(|| TheoryError::Undetermined("general drift without declared exponent".into()))?;
        let alpha = sub.tail_exponent();
        if gamma == T::one() {
            return Ok(TheoryModel::Linear { alpha });
        }
        let alpha =
            alpha.ok_or_else(|| TheoryError::Undetermined("jump law without a regularly varying tail".into()))?;
        Ok(TheoryModel::Superlinear(ModelParams::new(alpha, gamma)?))
    }

    pub fn thresholds(&self) -> Vec<T> {
        match self {
            TheoryModel::Superlinear(p) => p.thresholds(),
            TheoryModel::Linear { alpha } => alpha.map(|a| T::lit(2.0) * a).into_iter().collect(),
        }
    }

    pub fn a(&self, q: T) -> Result<ScalingValue<T>, TheoryError> {
        match self {
            TheoryModel::Superlinear(p) => p.theoretical_a(q),
            TheoryModel::Linear { alpha } => {
                check_order(q)?;
                match alpha.map(|a| T::lit(2.0) * a) {
                    Some(cap) if q == cap => Err(threshold_error(q, cap)),
                    Some(cap) if q > cap => Ok(ScalingValue::NegInfinite),
                    _ => Ok(ScalingValue::Finite { value: q * T::lit(0.5), branch: Branch::Diffusive }),
                }
            }
        }
    }

    /// Distance from `q` to the nearest threshold.
    pub fn threshold_distance(&self, q: T) -> Option<T> {
        self.thresholds().into_iter().map(|t| (q - t).abs()).reduce(|a, b| a.min(b))
    }
}

/// Outcome of the multiscaling decision, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiscalingVerdict {
    /// `None` when the drift does not determine the answer.
    pub multiscaling: Option<bool>,
    pub explanation: String,
}

/// Whether the model exhibits multiscaling of moments. `alpha` is the jump
/// tail exponent.
pub fn is_multiscaling<T: Scalar>(drift: &DriftSpec<T>, alpha: T) -> MultiscalingVerdict {
    let gamma = match drift.exponent() {
        Some(g) => g,
        None => {
            return MultiscalingVerdict {
                multiscaling: None,
                explanation: "general drift has no declared regular-variation exponent".into(),
            }
        }
    };
    if gamma <= T::one() {
        return MultiscalingVerdict {
            multiscaling: Some(false),
            explanation: format!("mean reversion grows linearly (exponent {gamma}): scaling stays diffusive"),
        };
    }
    match ModelParams::new(alpha, gamma) {
        Ok(p) => MultiscalingVerdict {
            multiscaling: Some(true),
            explanation: format!(
                "superlinear mean reversion (gamma = {gamma}): A(q) leaves q/2 above q* = {}",
                p.q_star()
            ),
        },
        Err(e) => MultiscalingVerdict { multiscaling: None, explanation: e.to_string() },
    }
}

/// Theoretical curve CSV with columns `q,A_theory,branch`.
pub fn write_theory_csv<T: Scalar, W: Write>(model: &TheoryModel<T>, qs: &[T], mut w: W) -> io::Result<()> {
    writeln!(w, "q,A_theory,branch")?;
    for &q in qs {
        let a = model.a(q).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        writeln!(w, "{},{},{}", fmt17(q), a.to_text(), a.branch())?;
    }
    Ok(())
}
