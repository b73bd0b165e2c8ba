//! Computational Lorentzian geometry: curvature, causal structure, principal
//! symbols, adaptive sources, four-wave interaction asymptotics and the
//! reconstruction of spacetime points from earliest light observations.

pub mod adaptive;
pub mod causal;
pub mod geometry;
pub mod interaction;
pub mod linalg;
pub mod reconstruction;
pub mod scalar;
pub mod symbol;

pub use geometry::{Metric, MetricProvider, ScalarFieldFrame, Tensor2, Tensor3};
pub use scalar::{Dual4, Scalar};
