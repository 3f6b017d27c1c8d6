//! Execution-grounded evaluation of generated code.
//!
//! The crate is organised around the evaluation pipeline:
//!
//! - [`corpus`]: tasks, test cases, candidates and the line-delimited file formats.
//! - [`sandbox`]: runs candidates against test cases and derives PassRatio / Executability.
//! - [`testgen`]: grows test suites by type inference, enumeration and reference execution.
//! - [`metrics`]: match-based metrics (BLEU, CodeBLEU, CrystalBLEU, embedding P/R/F, ...).
//! - [`unice`]: the learned scorer producing CodeScore and Exec from unified inputs.
//! - [`stats`]: Kendall-Tau, Spearman, Pearson and MAE against ground truth.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod sandbox;
pub mod stats;
pub mod testgen;
pub mod unice;
pub mod value;

pub use error::{Error, Result};
