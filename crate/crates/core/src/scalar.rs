//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};

/// Floating point type the engine is generic over: `f32` or `f64`.
///
/// Sampling hooks live on the trait so that generic code does not need to
/// carry `Distribution<T>` bounds around.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Uniform draw on the open interval (0, 1).
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self;
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Unit-rate exponential draw.
    fn exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance the adaptive routines can actually reach.
    #[inline]
    fn reachable_rtol(requested: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(64.0);
        Self::lit(requested).max(floor)
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }
            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }
            #[inline]
            fn exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Exp1.sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Formats a float with 17 significant digits, the interchange format of
/// every CSV and JSON artifact. Round-trips `f64` exactly.
pub fn fmt17<T: Scalar>(x: T) -> String {
    let v = x.to_f64_lossy();
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{:.16e}", v)
    }
}

/// Parses what [`fmt17`] writes.
pub fn parse_float<T: Scalar>(s: &str) -> Option<T> {
    let v: f64 = match s.trim() {
        "nan" => f64::NAN,
        "inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        other => other.parse().ok()?,
    };
    T::from_f64(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips_f64() {
        for &x in &[0.1f64, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt17(x);
            assert_eq!(parse_float::<f64>(&s).unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt17(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt17(1.0f64), "1.0000000000000000e0");
    }

    #[test]
    fn rtol_floor_depends_on_precision() {
        assert!(f32::reachable_rtol(1e-10) > 1e-6);
        assert_eq!(f64::reachable_rtol(1e-10), 1e-10);
    }
}
