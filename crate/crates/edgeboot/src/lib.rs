//! Edgeworth expansions of bootstrap distributions for smooth functions of
//! k-sample means, together with the Monte Carlo machinery needed to check
//! the expansion's error rate, the boundary-shell bound for polynomial maps
//! of Gaussian vectors, and the high-probability sample events that drive
//! the error analysis.
//!
//! The crate is organized around six subsystems:
//!
//! * [`tensors`] — symmetric moment/cumulant tensors and sparse multivariate
//!   polynomials (exact coefficient arithmetic).
//! * [`edgeworth`] — Hermite tensor tables and construction/evaluation of the
//!   expansion polynomials.
//! * [`smooth_model`] — the statistic catalog, Taylor expansion of a statistic
//!   around the sample means, and approximate cumulants of the expansion.
//! * [`bootstrap`] — the k-sample resampling engine, an exact small-n
//!   enumeration oracle, and the truncated/recentred resampling variables.
//! * [`regions`] — balls and half-lines, boundary neighborhoods, and the
//!   boundary-shell probability experiment.
//! * [`diagnostics`] — sample-event indicators and log-log rate fitting.
//!
//! The `harness` module drives batch experiments from flat config files and
//! emits CSV plus gnuplot-dialect plot scripts; the `edgeboot` binary wraps it.

pub mod bootstrap;
pub mod diagnostics;
pub mod edgeworth;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mc;
pub mod populations;
pub mod regions;
pub mod rng;
pub mod smooth_model;
pub mod tensors;

pub use error::{Error, Result};
pub use mc::McConfig;
