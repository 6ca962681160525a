//! Discrete-time simulator for hormone-driven delivery of small multimedia
//! units in unstructured overlay networks.
//!
//! Peers issue keyword requests; each unmet keyword deposits an artificial
//! hormone that diffuses through the overlay and evaporates over time. Stored
//! units climb the resulting gradient towards demand, replicating on the way
//! according to a configurable strategy, while per-node clean-up policies
//! (LRU / LFU / hormone) keep storage below a trigger level.
//!
//! The crate is organized around the simulation state the engine owns:
//!
//! - [`topology`] — overlay graphs (random and rewired power-law), churn.
//! - [`content`] — unit catalog, keyword tagging, initial replica placement.
//! - [`hormone`] — per-(node, keyword) hormone field and its dynamics.
//! - [`transport`] — gradient-driven moves, link scheduling, replication.
//! - [`cleanup`] — storage triggers and eviction policies.
//! - [`requests`] — request generation, deadlines, fulfillment.
//! - [`engine`] — phase loop binding everything together.
//! - [`metrics`] — delay/failure/utilization statistics and CSV export.
//! - [`ga`] — genetic optimization of the hormone parameter set.
//! - [`cli`] — the `hormsim` command line entry points.

pub mod cleanup;
pub mod cli;
pub mod content;
pub mod engine;
pub mod error;
pub mod ga;
pub mod hormone;
pub mod metrics;
pub mod requests;
pub mod rng;
pub mod scenario;
pub mod topology;
pub mod transport;

pub use error::{Error, Result};

/// Node identifier; nodes are numbered `0..node_count`.
pub type NodeId = usize;
/// Keyword identifier; keyword ids double as popularity ranks (0 = rank 1).
pub type KeywordId = usize;
/// Unit identifier; units are numbered `0..num_units`.
pub type UnitId = usize;
/// Simulation step counter.
pub type Step = u64;
