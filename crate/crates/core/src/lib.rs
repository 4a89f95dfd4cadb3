//! Active causal experiment design.
//!
//! Given the Markov equivalence class of a causal DAG, choose single-node
//! interventions that orient the whole graph in few steps. The crate provides
//! the structural machinery ([`graph`]), exact class enumeration ([`mec`]),
//! selection policies ([`strategies`]), a graph-embedding Q-network
//! ([`neural`]) trained by Q-learning ([`rl`]), a chordal DAG generator
//! ([`graphgen`]) and an evaluation harness ([`harness`]).

pub mod error;
pub mod graph;
pub mod graphgen;
pub mod harness;
pub mod mec;
pub mod neural;
pub mod rl;
pub mod strategies;

pub use error::{Error, Result};
