//! Incremental GNN inference on evolving graphs.
//!
//! The crate keeps exact final-layer GNN embeddings up to date while a
//! directed graph mutates under a stream of edge/vertex/feature events.
//! Instead of recomputing affected neighborhoods layer by layer, changed
//! vertices push aggregator-specific delta messages through per-hop inboxes,
//! so a sink pays O(d) to absorb an update rather than O(deg * d) to rebuild
//! its aggregate. A scoped recompute engine serves as the baseline and
//! correctness oracle, and a server/worker simulation runs the same engine
//! over a partitioned graph with halo mailboxes and combiners.
//!
//! Module map:
//! - [`graph`]: mutable dual-adjacency graph, update events, seed extraction.
//! - [`model`]: GNN layer description, dense kernels, the layer update rule.
//! - [`store`]: per-layer embeddings plus per-vertex aggregate summaries,
//!   layer-wise bootstrap, and from-scratch aggregate recomputation.
//! - [`agg`]: delta preparation, inbox combination, and delta application
//!   with no-change / incremental / recompute classification.
//! - [`engine`]: the batched delta-propagation engine and the scoped
//!   recompute baseline.
//! - [`stream`]: trace file format, batcher, and seeded trace generator.
//! - [`dist`]: partitioning, event routing, wire format, and the in-process
//!   server/worker runtime.
//! - [`cost`]: analytical per-hop FLOP estimates and correlation reporting.

pub mod agg;
pub mod cost;
pub mod dist;
pub mod engine;
pub mod graph;
pub mod model;
pub mod num;
pub mod store;
pub mod stream;

pub use graph::{DynamicGraph, GraphError, UpdateEvent, VertexId};
pub use model::{Activation, Aggregator, ModelSpec};
pub use num::{Real, Tolerance};
pub use store::EmbeddingStore;
