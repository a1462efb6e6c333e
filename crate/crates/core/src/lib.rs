//! Core of a pool-based (topology-less) island-model evolutionary algorithm.
//!
//! Nodes evolve independent bit-string populations and exchange migrants only
//! through a shared object store with eventual visibility. This crate holds
//! everything that does not touch the operating system: genomes and
//! operators, the benchmark problems, the per-node generational loop, the
//! migration and termination protocol, and the store/clock abstractions the
//! loop runs against. It builds without `std`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod clock;
pub mod engine;
pub mod genome;
pub mod pool;
pub mod problems;
pub mod store;
#[cfg(test)]
mod testing;

pub use clock::Clock;
pub use engine::{
    init_node, run_node, step_generation, EaParams, NodeError, NodeRunner, NodeState, RunResult,
    StopReason,
};
pub use genome::{
    bit_flip_mutation, hamming, random_genome, tournament_select, uniform_crossover, Genome,
    Individual, RngStream,
};
pub use pool::{EntryKind, PoolClient, PoolEntry, TerminationFlag};
pub use problems::{MmdpInstance, PPeaksInstance, ProblemInstance, ProblemSpec};
pub use store::{SharedStore, StoreError};

/// Errors raised by operators, problems and the protocol.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("invalid state: {0}")]
    InvalidState(&'static str),
    #[error("parse error: {0}")]
    Parse(&'static str),
    #[error("protocol error: {0}")]
    Protocol(&'static str),
    #[error(transparent)]
    Store(#[from] StoreError),
}
