//! Quantum-inspired anomaly detection for collider events: matrix-product
//! embeddings, spaced matrix-product-operator models, hardware-style
//! contraction schedules with exact multiply-accumulate accounting, and
//! bit-accurate fixed-point inference emulation.
//!
//! The crate is organized around the inference pipeline:
//!
//! * [`tensor`] — dense pairwise tensor algebra underlying everything else
//! * [`embedding`] — event preprocessing, product-state normalization,
//!   mutual-information statistics and the spectral site ordering
//! * [`model`] — SMPO / cascaded-SMPO weight layout, construction and
//!   serialization
//! * [`contraction`] — contraction schedules and their MAC cost model
//! * [`executor`] — generic plan execution (float and instrumented)
//! * [`quantization`] — fixed-point formats, plan execution under
//!   fixed-point semantics, precision scans
//! * [`training`] — unsupervised loss, gradients, Adam, early stopping,
//!   anomaly scoring
//! * [`dataset`] / [`metrics`] — file formats, synthetic benchmark data,
//!   ROC / AUC / TPR-at-FPR evaluation
//! * [`reference`] — slow, obviously-correct evaluation routes used to
//!   cross-check the executor
//! * [`cli`] — the `tn-trigger` command-line tool

pub mod autodiff;
pub mod cli;
pub mod contraction;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod executor;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod quantization;
pub mod reference;
pub mod tensor;
pub mod training;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Result, TnError};
