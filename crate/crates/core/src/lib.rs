//! A numerical laboratory for stochastic localization of log-concave measures.
//!
//! The crate simulates the localization process on weighted point clouds,
//! tracks the trace potential `Γ_t = tr(Q_t^q)`, evaluates the 3-tensor that
//! drives its drift, and checks the inequalities that bound the
//! Cheeger (isoperimetric) coefficient of log-concave densities.
//!
//! * [`measures`]: analytic densities, atomic measures, exponential tilts.
//! * [`localization`]: the SDE, its potential and martingale diagnostics.
//! * [`tensor`]: the 3-tensor, Δ-matrices and trace/moment inequalities.
//! * [`isoperimetry`]: half-space scans, conductance proxies, truncation.
//! * [`bounds`]: closed-form lower bounds and the bound recursion.
//! * [`report`]: the JSON record shared by every checker.
//!
//! All logarithms are natural.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod isoperimetry;
pub mod linalg;
pub mod localization;
pub mod measures;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use measures::{AtomicMeasure, Density, Family, TiltParams};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/localization.md")]
    mod localization {}
    #[doc = include_str!("../../../book/src/tensor.md")]
    mod tensor {}
    #[doc = include_str!("../../../book/src/isoperimetry.md")]
    mod isoperimetry {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
}
