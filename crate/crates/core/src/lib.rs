//! Knowledge-graph embeddings over patent metadata and the knowledge
//! proximity measures built on them.

pub mod archive;
pub mod error;
pub mod evaluator;
pub mod expansion;
pub mod graph;
pub mod ingestion;
pub mod models;
pub mod proximity;
pub mod trainer;

pub use error::{Error, Result};
