//! Higher-order tangent bundles `T^k M` over finite-dimensional charts.
//!
//! Jets compose through the higher-order chain rule, linear connections
//! lift to connection maps on `T^k M`, and the induced trivializations turn
//! `T^k M` into a vector bundle. Every identity relating these objects can be
//! checked numerically (float) or exactly (rationals) at random samples.

pub mod connections;
pub mod error;
pub mod expr;
pub mod jets;
pub mod linalg;
pub mod metrics;
pub mod morphisms;
pub mod oracle;
pub mod report;
pub mod scalar;
pub mod series;
pub mod trivialization;

pub use error::{Error, Result};
pub use scalar::{Backend, MathError, Rational, Scalar};
