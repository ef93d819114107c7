//! Fuzzy additive models with optional antecedent sculpting.
//!
//! The model family combines a linear projection layer, a bank of
//! single-input TSK fuzzy subnetworks (one per reduced dimension), and an
//! additive aggregation layer. The sculpted variant couples consecutive
//! membership-function centers at a four-sigma spacing so that at most two
//! rules fire for any input, which keeps the rule base readable.
//!
//! Modules:
//! - [`data`]: CSV ingestion, ordinal encoding, z-score normalization,
//!   splitting, and mini-batch planning.
//! - [`membership`]: Gaussian and two-sided Gaussian membership functions
//!   plus the sculpted partition construction.
//! - [`model`]: forward inference for the ten supported variants and exact
//!   learnable-parameter counting.
//! - [`training`]: loss, analytic gradients, finite-difference checking,
//!   Adam, and the mini-batch training loop.
//! - [`experiment`]: multi-seed benchmark runs, RMSE aggregation, and
//!   average-rank tables.
//! - [`explain`]: feature importance, per-prediction traces, and
//!   membership-curve export over the effective universe of discourse.
//! - [`config`]: the JSON experiment configuration file and its validation.

pub mod config;
pub mod data;
pub mod experiment;
pub mod explain;
pub mod membership;
pub mod model;
pub mod training;
