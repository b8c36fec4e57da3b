//! Estimation from coarsely quantized observations of a Gaussian channel.
//!
//! Observations follow `r = Q(f(x, θ) + η)` with `η ~ N(0, σ²I)` and a scalar
//! quantizer `Q` applied per component. The crate provides the quantizer
//! layer, system models, ML/MAP estimators (closed forms and EM), Fisher
//! information and Cramér-Rao bounds, a GNSS array model, and a Monte Carlo
//! sweep harness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod gnss;
pub mod harness;
pub mod models;
pub mod numerics;
pub mod quantizer;

pub use bounds::{crb, CrbResult, FisherMatrix};
pub use error::{Error, Result};
pub use estimators::{EmConfig, EstimateTrace, Prior};
pub use gnss::{CrbReport, GnssScenario, PathSpec};
pub use harness::{Resolution, Scenario, SweepConfig, SweepRow};
pub use models::{GnssParam, SystemModel};
pub use numerics::Interval;
pub use quantizer::{optimize_quantizer, DesignMode, OptimizedQuantizer, Quantizer};
