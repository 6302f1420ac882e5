//! Remaining-wall-thickness mapping for cylindrical pipes scanned along a
//! few circumferential lines.
//!
//! Readings are Gaussianized through a fitted marginal (Gaussian mixture,
//! Gumbel or Weibull), interpolated over the unrolled pipe surface with a
//! periodic Matérn-3/2 Gaussian process, and mapped back to millimetres
//! through the marginal's inverse cdf.

pub mod error;
pub mod gof;
pub mod gp;
pub mod grid;
pub mod marginals;
pub mod normal;
pub mod pipeline;
pub mod synthetic;

pub use error::{Error, Result};
