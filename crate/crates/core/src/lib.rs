//! Diversified opponent model selection for interactive dynamic influence
//! diagrams.

pub mod diversity;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod features;
pub mod generation;
pub mod idid;
pub mod sim;
pub mod solver;
pub mod stats;
pub mod topk;
pub mod tree;

pub use error::{Error, Result};
