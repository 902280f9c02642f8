//! Building-level epidemic risk modeling on socioecologically structured
//! tabular features.
//!
//! The crate provides the full pipeline:
//!
//! - [`ndcore`] — a dense-tensor reverse-mode autodiff engine with an Adam
//!   optimizer and a finite-difference gradient checker.
//! - [`nn`] — the layers the model architecture needs: embeddings, an LSTM
//!   cell, 1-D convolution, dense layers, sigmoid, and binary cross-entropy.
//! - [`schema`] — the socioecological data model: features declared at
//!   building / estate / TPU level, per-building records, daily case series,
//!   and study-window arithmetic.
//! - [`synthgen`] — a synthetic-data generator that plants known feature
//!   effects and emits a ground-truth manifest, so every downstream claim is
//!   testable at desk scale.
//! - [`mhhcnn`] — the multi-headed hierarchical classifier: one
//!   embedding+LSTM head per feature, per-level convolution, merged dense
//!   classifier, plus training, cutoff search, and k-fold cross-validation.
//! - [`explain`] — permutation-sampling Shapley attribution with an exact
//!   enumeration fallback, per-district rankings, cross-district
//!   inverse-coded scores, and per-building composites.
//! - [`forecast`] — LSTM case-count forecasting with a three-chain
//!   forward-chaining validation schedule comparing history-only and
//!   composite-augmented variants.
//! - [`metrics`] — ROC AUC, MAE/RMSE, and stratified k-fold splitting.

pub mod explain;
pub mod forecast;
pub mod metrics;
pub mod mhhcnn;
pub mod ndcore;
pub mod nn;
pub mod schema;
pub mod synthgen;
