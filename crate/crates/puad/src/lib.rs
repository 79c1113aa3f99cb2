//! Positive-unlabeled anomaly detection.
//!
//! Trains autoencoder- and SVDD-style detectors from unlabeled data that
//! is secretly contaminated with anomalies plus a small labeled-anomaly
//! set. The normal-class risk is estimated from unlabeled and anomaly
//! means via the PU mixture identity and wrapped in an absolute value so
//! the empirical objective cannot diverge below zero. Evaluation reports
//! AUROC overall and split by seen/unseen anomaly type.
//!
//! Modules: [`autodiff`] (reverse-mode core), [`models`] (backbones),
//! [`losses`] (objective family), [`data`] (splits and I/O),
//! [`trainer`] (Adam + early stopping), [`eval`] (AUROC, sweeps,
//! contours), [`cli`] (reproducible experiment commands).

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod models;
pub mod seeding;
pub mod trainer;

pub use error::{Error, Result};
