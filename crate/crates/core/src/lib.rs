//! Automated graph learning for transductive node classification.

pub mod autodiff;
pub mod error;
pub mod features;
pub mod graph;
pub mod harness;
pub mod search;
pub mod topo;
pub mod zoo;

pub use error::{Error, Result};
