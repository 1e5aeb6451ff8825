//! Armijo-type adaptive stochastic gradient methods.
//!
//! The crate provides a stochastic gradient oracle abstraction, convex and
//! nonconvex solvers whose step sizes are tuned by a doubling line search
//! over a local smoothness estimate, AdaGrad/Adam baselines, and a benchmark
//! harness that runs solver suites over seeds and writes traces, summaries
//! and plots.

pub mod baselines;
pub mod convex;
pub mod error;
pub mod harness;
pub mod nonconvex;
pub mod oracle;
pub mod point;
pub mod problems;
pub mod svg;
pub mod trace;

pub use error::{Error, Result};
pub use point::Point;
