//! Densities, samplers, tangent-limit studies and free-probability identities
//! for q-Ornstein–Uhlenbeck processes and q-Brownian motions.

// `!(a < b)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod freeprob;
pub mod kernels;
pub mod qspecial;
pub mod quadrature;
pub mod sampling;
pub mod simulate;
pub mod tangent;

pub use error::{Error, Result};
pub use freeprob::{ComplexPoint, IdentityKind, IdentityReport, MeasureDensity};
pub use kernels::{KernelQuery, ProcessKind, Support};
pub use qspecial::{QParams, TruncationPolicy};
pub use sampling::{CdfTable, SeedSpec};
pub use simulate::{InitialCondition, JumpStats, PathSample, TimeGrid};
pub use tangent::{ConvergenceReport, TangentCase, TangentKind};
