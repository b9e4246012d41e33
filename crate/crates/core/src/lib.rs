//! Exact minimum sum-of-squares clustering.

pub mod bnb;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod heuristics;
pub mod metrics;
pub mod sdp;

pub use error::{Error, Result};
