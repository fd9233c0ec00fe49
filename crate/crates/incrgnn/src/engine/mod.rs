//! Batched update propagation engines.
//!
//! Both engines apply a batch of events and then run L barrier-synchronized
//! supersteps. The incremental engine seeds per-hop inboxes from the applied
//! events and pushes deltas from changed vertices; the recompute baseline
//! walks the same frontiers but rebuilds every affected aggregate from all
//! in-neighbors. The two share one superstep core ([`core::LocalEngine`]),
//! which the distributed workers drive as well.

mod core;

pub use core::{
    validate_batch_against, ApplyOutcome, EngineError, HaloRecord, LocalEngine, LocalEvent,
    PartitionView,
};

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::agg::InboxValue;
use crate::graph::{DynamicGraph, UpdateEvent, VertexId};
use crate::model::ModelSpec;
use crate::num::Real;
use crate::store::{bootstrap_forward, EmbeddingStore, StoreError};

/// Which propagation strategy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    /// Delta propagation through inboxes ("rp" on the CLI).
    Incremental,
    /// Scoped layer-wise recompute baseline ("rc" on the CLI).
    Recompute,
}

impl EngineKind {
    pub fn tag(self) -> &'static str {
        match self {
            EngineKind::Incremental => "rp",
            EngineKind::Recompute => "rc",
        }
    }

    pub fn parse(s: &str) -> Option<EngineKind> {
        match s {
            "rp" => Some(EngineKind::Incremental),
            "rc" => Some(EngineKind::Recompute),
            _ => None,
        }
    }
}

/// Why a vertex was active in a superstep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveReason {
    Message,
    SelfChange,
    Recompute,
}

/// Per-hop accounting for one batch.
#[derive(Debug, Clone, Default)]
pub struct HopRecord {
    /// Number of active vertices processed at this hop.
    pub active: u64,
    /// Instrumented multiply-add count attributed to this hop (message
    /// preparation and combination into its inboxes, delta application or
    /// aggregate recomputation, and layer updates).
    pub ops: u64,
    pub send_ms: f64,
    pub compute_ms: f64,
}

/// Outcome of processing one batch.
#[derive(Debug, Clone, Default)]
pub struct BatchResult {
    pub events: usize,
    /// Vertices whose final-layer embedding changed (including vertices
    /// created during the batch; deleted vertices are excluded).
    pub changed_final: BTreeSet<VertexId>,
    /// Number of vertices whose input features changed (hop-0 actives).
    pub active_hop0: u64,
    /// Index 0 corresponds to hop 1.
    pub hops: Vec<HopRecord>,
    /// Active vertex sets per hop, for frontier-law checks and fixtures.
    pub frontiers: Vec<BTreeSet<VertexId>>,
    pub apply_ms: f64,
    pub total_ms: f64,
    /// Remote deliveries before combining (partitioned runs; zero otherwise).
    pub remote_raw_msgs: u64,
    /// Remote records actually sent after combining.
    pub remote_sent_msgs: u64,
    /// True when some halo mailbox combined two or more local sources in
    /// one hop this batch.
    pub remote_combiner_multi: bool,
}

impl BatchResult {
    pub fn total_ops(&self) -> u64 {
        self.hops.iter().map(|h| h.ops).sum()
    }
}

/// Per-vertex per-hop mailboxes backed by a slot pool.
///
/// Slots are checked out on the first message to a (vertex, hop) key, stay
/// assigned for the rest of the batch, and are all released afterwards. The
/// pool grows on demand and never shrinks within a run.
#[derive(Debug)]
pub struct InboxPool<T> {
    slots: Vec<Option<InboxValue<T>>>,
    free: Vec<usize>,
    active: HashMap<(VertexId, usize), usize>,
    high_water: usize,
}

impl<T: Real> Default for InboxPool<T> {
    fn default() -> Self {
        InboxPool { slots: Vec::new(), free: Vec::new(), active: HashMap::new(), high_water: 0 }
    }
}

impl<T: Real> InboxPool<T> {
    /// Mutable access to the slot for (v, hop), assigning one on demand.
    pub fn checkout(&mut self, v: VertexId, hop: usize) -> &mut Option<InboxValue<T>> {
        let idx = match self.active.get(&(v, hop)) {
            Some(&idx) => idx,
            None => {
                let idx = match self.free.pop() {
                    Some(idx) => idx,
                    None => {
                        self.slots.push(None);
                        self.slots.len() - 1
                    }
                };
                self.active.insert((v, hop), idx);
                self.high_water = self.high_water.max(self.active.len());
                idx
            }
        };
        &mut self.slots[idx]
    }

    pub fn value(&self, v: VertexId, hop: usize) -> Option<&InboxValue<T>> {
        self.active.get(&(v, hop)).and_then(|&idx| self.slots[idx].as_ref())
    }

    /// Sinks with assigned slots at `hop`, ascending.
    pub fn sinks_at(&self, hop: usize) -> Vec<VertexId> {
        let mut out: Vec<VertexId> =
            self.active.keys().filter(|(_, h)| *h == hop).map(|(v, _)| *v).collect();
        out.sort_unstable();
        out
    }

    /// Returns every slot to the pool. Idempotent.
    pub fn release_all(&mut self) {
        for ((_, _), idx) in self.active.drain() {
            self.slots[idx] = None;
            self.free.push(idx);
        }
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// Maximum number of concurrently assigned slots seen so far.
    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn pool_size(&self) -> usize {
        self.slots.len()
    }
}

/// Single-machine engine: one execution context over the whole graph.
pub struct Engine<T: Real> {
    core: LocalEngine<T>,
}

impl<T: Real> Engine<T> {
    pub fn new(
        graph: DynamicGraph,
        store: EmbeddingStore<T>,
        model: Arc<ModelSpec<T>>,
        kind: EngineKind,
    ) -> Self {
        Engine { core: LocalEngine::new(graph, store, model, kind, None) }
    }

    /// Bootstraps the store from the graph and wraps both in an engine.
    pub fn bootstrap(
        graph: DynamicGraph,
        model: Arc<ModelSpec<T>>,
        kind: EngineKind,
    ) -> Result<Self, StoreError> {
        let store = bootstrap_forward(&graph, &model)?;
        Ok(Engine::new(graph, store, model, kind))
    }

    pub fn graph(&self) -> &DynamicGraph {
        self.core.graph()
    }

    pub fn store(&self) -> &EmbeddingStore<T> {
        self.core.store()
    }

    pub fn model(&self) -> &ModelSpec<T> {
        self.core.model()
    }

    pub fn inbox_pool(&self) -> &InboxPool<T> {
        self.core.inbox_pool()
    }

    /// Applies a batch atomically and propagates it through L supersteps.
    /// Events are validated against the (simulated) evolving structure
    /// before any mutation; a bad event fails the whole batch untouched.
    pub fn process_batch(&mut self, events: &[UpdateEvent]) -> Result<BatchResult, EngineError> {
        let start = std::time::Instant::now();
        self.core.validate_batch(events)?;
        self.core.begin_batch();
        let local: Vec<LocalEvent> = events
            .iter()
            .enumerate()
            .map(|(seq, e)| LocalEvent {
                event: e.clone(),
                compute: true,
                src_owner: 0,
                dst_owner: 0,
                seq: seq as u64,
            })
            .collect();
        let apply_start = std::time::Instant::now();
        let _wave0 = self.core.apply_events(&local)?;
        let apply_ms = apply_start.elapsed().as_secs_f64() * 1e3;
        let layer_count = self.core.model().layer_count();
        for l in 1..=layer_count {
            let _halo = self.core.phase_send(l)?;
            let plan = self.core.plan_fetch(l)?;
            debug_assert!(plan.is_empty(), "single-machine run needs no remote fetch");
            self.core.compute_hop(l, &HashMap::new())?;
        }
        let mut result = self.core.finish_batch();
        result.events = events.len();
        result.apply_ms = apply_ms;
        result.total_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(result)
    }
}

/// From-scratch oracle: a fresh layer-wise forward pass over the current
/// graph. Never reads incremental state.
pub fn oracle_full_recompute<T: Real>(
    g: &DynamicGraph,
    model: &ModelSpec<T>,
) -> Result<EmbeddingStore<T>, StoreError> {
    bootstrap_forward(g, model)
}
