//! Scoring engine for capability profiles: centrality-weighted aggregate
//! scores, the cluster stability indices, a commit-reveal perturbation
//! lottery, scaffold classification and governance tiers.

pub mod classification;
pub mod cli;
pub mod error;
pub mod io;
pub mod lottery;
pub mod model;
pub mod report;
pub mod stability;
pub mod synthetic;
pub mod weighting;

pub use error::{Error, Result};
