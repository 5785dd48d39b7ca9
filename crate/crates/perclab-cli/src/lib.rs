//! Command-line front end of the crossing-probability laboratory.
//!
//! One experiment per invocation, described either by flags or by a
//! JSON config document with a `kind` discriminator ([`config`]). Every
//! subcommand reports through the same comparison table ([`report`]):
//! rows pairing a predicted value with an independently obtained one,
//! rendered as CSV or JSON with full-precision floats. The exit code is
//! the verdict: 0 all checks passed, 1 a numeric check failed, 2 the
//! configuration was invalid ([`run`]).

pub mod config;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, OutputFormat};
pub use report::{ComparisonRow, Document};
