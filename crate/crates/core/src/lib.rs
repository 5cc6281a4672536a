//! Exact sampling by coupling from the past with layered multishift
//! couplers.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autogamma;
pub mod autonormal;
pub mod cftp;
pub mod coupler;
pub mod error;
pub mod output;
pub mod replicate;
pub mod rng;
pub mod stats;
pub mod toy;
pub mod validation;

pub use cftp::{BoundPair, CftpOptions, CompositeRun, MonotoneModel, RunDiagnostics};
pub use error::{Error, Result};
pub use rng::StreamPath;
