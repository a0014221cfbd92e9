//! Co-occurrence clustering of discrete image tokens, hallucination
//! analysis, and hidden-state decontamination.

pub mod analysis;
pub mod binio;
pub mod cli;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod rng;
pub mod vtd;

pub use error::{Error, Result};
