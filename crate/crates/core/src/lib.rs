//! Chain routing toolkit.
//!
//! Routing strategies built from *complete orders* ("chains"): acyclic
//! digraphs that are irreflexive, asymmetric, transitive and complete.
//! A chain on `n` vertices carries `n-1` arc-disjoint paths from its
//! transmitter to its receiver, which makes it a self-contained,
//! loop-free strategy for reaching a destination.
//!
//! The crate is organised in five layers:
//!
//! * [`digraph`] — the directed-graph substrate: adjacency-matrix I/O,
//!   acyclicity, transitive closure, vertex deletion.
//! * [`flow`] — the independent arc-disjoint-path oracle (unit-capacity
//!   max flow plus a brute-force cross-check).
//! * [`structure`] / [`store`] — the three basic structures (arc, Varc,
//!   chain), chain metrics, and the leveled registry with its acyclic
//!   relation.
//! * [`discovery`] — modified BFS that builds a registry from an
//!   announcement digraph, a combining post-pass, and per-destination
//!   reachability reports.
//! * [`rules`] / [`sim`] — the dynamic safety rules (cycle veto on chain
//!   admission, failover away from failed segments, the chain
//!   establishment protocol) and a deterministic discrete-event
//!   simulator comparing a greedy path-vector baseline against chain
//!   mode.

pub mod digraph;
pub mod discovery;
pub mod flow;
pub mod rules;
pub mod sim;
pub mod store;
pub mod structure;

pub use digraph::{Digraph, PathSet, Role, Vertex};
pub use store::ChainStore;
pub use structure::{ChainMetrics, Structure, StructureId, StructureKind, MAX_CHAIN_SIZE};
