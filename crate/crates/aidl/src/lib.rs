//! Anomaly-based intrusion detection lab.
//!
//! Trains an LSTM binary classifier and a linear-SVM baseline on
//! KDD99/NSL-KDD connection records, with dataset statistics tooling,
//! oracle-checked numerics, and versioned JSON artifacts throughout.

pub mod artifact;
pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod lstm;
pub mod numerics;
pub mod svm;
pub mod training;
