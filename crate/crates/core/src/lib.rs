//! Monte Carlo engine for stochastic volatility models whose variance follows
//! `dV = −f(V) dt + dL`, with `L` a Lévy subordinator with power-law jumps and
//! `f` a (super)linear mean reversion.
//!
//! The crate simulates the variance process exactly, generates log-price
//! increments through the time-changed Brownian representation
//! `X_{t+h} − X_t | I ~ N(0, I)`, estimates the moment scaling exponents
//! `A(q)` from log-log regressions, and evaluates the closed-form scaling law
//! the estimates are compared against.
//!
//! All numerical types are generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

// `!(x > 0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimators;
pub mod levy;
pub mod ode;
pub mod pricing;
pub mod quadrature;
pub mod scalar;
pub mod stream;
pub mod theory;
pub mod tilt;
pub mod volpath;

pub use scalar::Scalar;
pub use stream::{Domain, Stream, StreamFactory};

pub type SubordinatorSpec64 = levy::SubordinatorSpec<f64>;
pub type DriftSpec64 = volpath::DriftSpec<f64>;
pub type VolatilityPath64 = volpath::VolatilityPath<f64>;
pub type IncrementTable64 = pricing::IncrementTable<f64>;
pub type MomentTable64 = estimators::MomentTable<f64>;
pub type ScalingCurve64 = estimators::ScalingCurve<f64>;
pub type ModelParams64 = theory::ModelParams<f64>;

pub type SubordinatorSpec32 = levy::SubordinatorSpec<f32>;
pub type DriftSpec32 = volpath::DriftSpec<f32>;
