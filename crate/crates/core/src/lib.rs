//! Desk-scale unsupervised domain-adaptive embedding learning with synthetic
//! pretraining, two collaboratively refined branches, reliability-filtered
//! pseudo-labels, and retrieval-style evaluation on generated toy domains.

pub mod clustering;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod numerics;
pub mod pipeline;
pub mod translator;

pub use error::{Error, Result};
