//! Federated cotraining across participants with heterogeneous label
//! spaces, models and training procedures.
//!
//! Each participant trains a private model, pseudolabels a shared public
//! unlabeled dataset, and uploads only those labels. A coordinator votes the
//! labels into per-category index sets once, and each participant retrains
//! on its private data plus the conflict-free pseudolabels for its own
//! categories.

pub mod aggregation;
pub mod cli;
pub mod domain;
pub mod error;
pub mod learners;
pub mod netproto;
pub mod orchestrator;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};
