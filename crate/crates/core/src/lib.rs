//! Graph embedding by sharded random-walk co-occurrence sampling and
//! skip-gram training with on-the-fly negative sampling.
//!
//! The pipeline stages live in their own modules: [`graph`] (ingestion and
//! degree pruning), [`sbm`] (synthetic benchmark graphs), [`sampler`]
//! (co-occurrence sampling into [`records`] shards), [`trainer`]
//! (synchronous and asynchronous training), [`eval`] (quality metrics) and
//! [`pipeline`] (end-to-end runs).

pub mod error;
pub mod eval;
pub mod graph;
pub mod pipeline;
pub mod records;
pub mod rng;
pub mod sampler;
pub mod sbm;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
