//! Free Gibbs measures, free moment measures and free transport.
//!
//! * [`measure`]: probability measures on the line and their transport
//!   functionals.
//! * [`gibbs`]: equilibrium measures of even polynomial potentials.
//! * [`moment`]: the inverse problem `μ = (u')_# ν_u`.
//! * [`nc`]: noncommutative power series, cyclic gradients and Jacobians.
//! * [`sd`]: truncated Schwinger-Dyson trace tables.
//! * [`transport`]: the fixed-point solver for free transport maps.

// `!(x > 0.0)` and friends double as NaN rejection throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gibbs;
pub mod measure;
pub mod moment;
pub mod nc;
pub mod sd;
pub mod transport;

pub use error::{Error, ErrorKind, Result};
