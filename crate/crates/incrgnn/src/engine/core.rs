//! Superstep core shared by the single-machine engines and the distributed
//! workers.
//!
//! One `LocalEngine` owns a graph (the whole graph, or one partition plus
//! halo stubs), the embedding rows of its owned vertices, and the per-batch
//! propagation state. Drivers call, per batch:
//!
//! ```text
//! begin_batch
//! apply_events            -> wave-0 records (edge drops, per-hop seeds)
//! [exchange, ingest_wave0]
//! for l in 1..=L:
//!     phase_send(l)       -> hop-l halo records (deltas or frontier marks)
//!     [exchange, ingest_deltas(l)]
//!     plan_fetch(l)       -> remote embedding ids needed for recomputes
//!     [exchange, answer_fetch / overlay]
//!     compute_hop(l, overlay)
//! finish_batch            -> BatchResult
//! ```
//!
//! The single-machine driver performs no exchanges; every bracketed step is
//! a no-op because nothing is remote.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::agg::{
    apply_delta, attn_convert, attn_convert_ops, combine, combine_attn, prepare_delta,
    prepare_ops, AggregateSummary, DeltaPayload, Disposition, InboxValue, KernelError,
    OldNewEntry, SinkCtx,
};
use crate::graph::{DynamicGraph, GraphError, UpdateEvent, VertexId};
use crate::model::{Aggregator, ModelError, ModelSpec};
use crate::num::Real;
use crate::store::{recompute_aggregate, recompute_ops, EmbeddingStore, StoreError};

use super::{BatchResult, EngineKind, HopRecord, InboxPool};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("event {index} in batch is invalid: {source}")]
    InvalidEvent { index: usize, source: GraphError },
    #[error("engine desync: {0}")]
    Desync(String),
}

/// Partition identity of a worker-scoped engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionView {
    pub my_id: usize,
    pub parts: usize,
}

/// One event as dispatched to an engine, with resolved endpoint owners.
/// `compute == false` marks the structural copy a cut edge sends to the
/// sink's partition.
#[derive(Debug, Clone)]
pub struct LocalEvent {
    pub event: UpdateEvent,
    pub compute: bool,
    pub src_owner: usize,
    pub dst_owner: usize,
    pub seq: u64,
}

/// Records exchanged between workers at hop barriers.
#[derive(Debug, Clone, PartialEq)]
pub enum HaloRecord<T> {
    /// Combined delta (or an event seed, when `seq` is meaningful) destined
    /// for the sink's hop-`hop` inbox.
    Delta { hop: usize, sink: VertexId, seq: u64, value: InboxValue<T> },
    /// Recompute-mode frontier mark.
    Mark { hop: usize, sink: VertexId },
    /// Structural removal of a cut edge caused by a vertex deletion.
    EdgeDrop { src: VertexId, dst: VertexId },
}

/// Seq value for post-apply deltas, which can never be stale.
pub const SEQ_LIVE: u64 = u64::MAX;

/// Wave-0 output of the apply phase, per destination partition.
pub type ApplyOutcome<T> = BTreeMap<usize, Vec<HaloRecord<T>>>;

#[derive(Debug, Clone)]
struct SeedMsg<T> {
    seq: u64,
    source: VertexId,
    sink: VertexId,
    /// None old side = edge added; None new side = edge deleted.
    added: bool,
    weight: f64,
    value: Vec<T>,
}

enum Route<T> {
    /// Monotonic/attention disposition resolved at planning time.
    Apply(Disposition<T>),
    /// Linear-family inbox folded into the stored summary in place.
    FoldInbox,
    Recompute,
    SelfOnly,
}

struct HopPlan<T> {
    l: usize,
    routes: BTreeMap<VertexId, Route<T>>,
}

/// Halo-side combiner: buffers messages per (sink, hop) and emits one record
/// per key (or one per message when combining is disabled, for audits).
struct HaloBuf<T> {
    combine_enabled: bool,
    combined: BTreeMap<(VertexId, usize), (usize, Option<InboxValue<T>>)>,
    raw: Vec<(VertexId, usize, InboxValue<T>)>,
    raw_count: u64,
    multi: bool,
}

impl<T: Real> HaloBuf<T> {
    fn new(combine_enabled: bool) -> Self {
        HaloBuf {
            combine_enabled,
            combined: BTreeMap::new(),
            raw: Vec::new(),
            raw_count: 0,
            multi: false,
        }
    }

    fn push(
        &mut self,
        agg: Aggregator,
        sink: VertexId,
        hop: usize,
        payload: DeltaPayload<T>,
    ) -> Result<(), KernelError> {
        self.raw_count += 1;
        if self.combine_enabled {
            let entry = self.combined.entry((sink, hop)).or_insert((0, None));
            entry.0 += 1;
            if entry.0 > 1 {
                self.multi = true;
            }
            combine(agg, &mut entry.1, payload)
        } else {
            let mut single = None;
            combine(agg, &mut single, payload)?;
            self.raw.push((sink, hop, single.expect("payload combined")));
            Ok(())
        }
    }

    fn drain(self, owner_of: impl Fn(VertexId) -> usize) -> (BTreeMap<usize, Vec<HaloRecord<T>>>, u64, u64, bool) {
        let mut out: BTreeMap<usize, Vec<HaloRecord<T>>> = BTreeMap::new();
        let mut sent = 0u64;
        if self.combine_enabled {
            for ((sink, hop), (_, value)) in self.combined {
                if let Some(value) = value {
                    out.entry(owner_of(sink)).or_default().push(HaloRecord::Delta {
                        hop,
                        sink,
                        seq: SEQ_LIVE,
                        value,
                    });
                    sent += 1;
                }
            }
        } else {
            for (sink, hop, value) in self.raw {
                out.entry(owner_of(sink)).or_default().push(HaloRecord::Delta {
                    hop,
                    sink,
                    seq: SEQ_LIVE,
                    value,
                });
                sent += 1;
            }
        }
        (out, self.raw_count, sent, self.multi)
    }
}

/// Validates a batch against a graph without mutating it, simulating the
/// structural effect of earlier events in the batch.
pub fn validate_batch_against(
    graph: &DynamicGraph,
    events: &[UpdateEvent],
) -> Result<(), EngineError> {
    // Override maps: absent = defer to the graph.
    let mut v_over: HashMap<VertexId, bool> = HashMap::new();
    let mut e_over: HashMap<(VertexId, VertexId), bool> = HashMap::new();

    fn exists_v(g: &DynamicGraph, over: &HashMap<VertexId, bool>, v: VertexId) -> bool {
        over.get(&v).copied().unwrap_or_else(|| g.contains_vertex(v))
    }
    fn exists_e(
        g: &DynamicGraph,
        over: &HashMap<(VertexId, VertexId), bool>,
        src: VertexId,
        dst: VertexId,
    ) -> bool {
        over.get(&(src, dst)).copied().unwrap_or_else(|| g.contains_edge(src, dst))
    }

    let d0 = graph.feature_dim();
    for (index, e) in events.iter().enumerate() {
        let fail = |source: GraphError| EngineError::InvalidEvent { index, source };
        match e {
            UpdateEvent::EdgeAdd { src, dst, weight } => {
                if !weight.is_finite() {
                    return Err(fail(GraphError::BadWeight(*src, *dst)));
                }
                for v in [*src, *dst] {
                    if !exists_v(graph, &v_over, v) {
                        if graph.auto_vertex_add {
                            v_over.insert(v, true);
                        } else {
                            return Err(fail(GraphError::MissingVertex(v)));
                        }
                    }
                }
                if exists_e(graph, &e_over, *src, *dst) {
                    return Err(fail(GraphError::DuplicateEdge(*src, *dst)));
                }
                e_over.insert((*src, *dst), true);
            }
            UpdateEvent::EdgeDel { src, dst } => {
                for v in [*src, *dst] {
                    if !exists_v(graph, &v_over, v) {
                        return Err(fail(GraphError::MissingVertex(v)));
                    }
                }
                if !exists_e(graph, &e_over, *src, *dst) {
                    return Err(fail(GraphError::MissingEdge(*src, *dst)));
                }
                e_over.insert((*src, *dst), false);
            }
            UpdateEvent::VertexAdd { vertex, features } => {
                if exists_v(graph, &v_over, *vertex) {
                    return Err(fail(GraphError::DuplicateVertex(*vertex)));
                }
                if !features.is_empty() && features.len() != d0 {
                    return Err(fail(GraphError::DimensionMismatch {
                        vertex: *vertex,
                        got: features.len(),
                        expected: d0,
                    }));
                }
                v_over.insert(*vertex, true);
            }
            UpdateEvent::VertexDel { vertex } => {
                if !exists_v(graph, &v_over, *vertex) {
                    return Err(fail(GraphError::MissingVertex(*vertex)));
                }
                // Drop every edge currently incident on the vertex.
                if graph.contains_vertex(*vertex) {
                    for &(dst, _) in graph.out_neighbors(*vertex) {
                        e_over.insert((*vertex, dst), false);
                    }
                    for &(src, _) in graph.in_neighbors(*vertex) {
                        e_over.insert((src, *vertex), false);
                    }
                }
                let touching: Vec<(VertexId, VertexId)> = e_over
                    .iter()
                    .filter(|(&(a, b), &on)| on && (a == *vertex || b == *vertex))
                    .map(|(&k, _)| k)
                    .collect();
                for k in touching {
                    e_over.insert(k, false);
                }
                v_over.insert(*vertex, false);
            }
            UpdateEvent::FeatureUpdate { vertex, features } => {
                if !exists_v(graph, &v_over, *vertex) {
                    return Err(fail(GraphError::MissingVertex(*vertex)));
                }
                if features.len() != d0 {
                    return Err(fail(GraphError::DimensionMismatch {
                        vertex: *vertex,
                        got: features.len(),
                        expected: d0,
                    }));
                }
            }
        }
    }
    Ok(())
}

pub struct LocalEngine<T: Real> {
    graph: DynamicGraph,
    store: EmbeddingStore<T>,
    model: Arc<ModelSpec<T>>,
    kind: EngineKind,
    partition: Option<PartitionView>,
    halo_owner: HashMap<VertexId, usize>,
    pub combine_halo: bool,

    inboxes: InboxPool<T>,

    // Per-batch state.
    seeds: Vec<Vec<SeedMsg<T>>>,
    pending_remote: Vec<Vec<(u64, VertexId, InboxValue<T>)>>,
    pending_marks: Vec<BTreeSet<VertexId>>,
    hop0: BTreeMap<VertexId, (Vec<T>, Vec<T>)>,
    profiles: HashMap<VertexId, Vec<Vec<T>>>,
    changed_prev: Vec<(VertexId, Vec<T>, Vec<T>)>,
    recompute_set: BTreeSet<VertexId>,
    rc_prev_frontier: BTreeSet<VertexId>,
    rc_current_frontier: BTreeSet<VertexId>,
    created: BTreeSet<VertexId>,
    victims: HashMap<VertexId, u64>,
    plan: Option<HopPlan<T>>,

    hop_records: Vec<HopRecord>,
    frontiers: Vec<BTreeSet<VertexId>>,
    changed_final: BTreeSet<VertexId>,
    halo_raw: u64,
    halo_sent: u64,
    halo_multi: bool,
}

impl<T: Real> LocalEngine<T> {
    pub fn new(
        graph: DynamicGraph,
        store: EmbeddingStore<T>,
        model: Arc<ModelSpec<T>>,
        kind: EngineKind,
        partition: Option<PartitionView>,
    ) -> Self {
        let ell = model.layer_count();
        LocalEngine {
            graph,
            store,
            model,
            kind,
            partition,
            halo_owner: HashMap::new(),
            combine_halo: true,
            inboxes: InboxPool::default(),
            seeds: vec![Vec::new(); ell],
            pending_remote: vec![Vec::new(); ell + 1],
            pending_marks: vec![BTreeSet::new(); ell + 1],
            hop0: BTreeMap::new(),
            profiles: HashMap::new(),
            changed_prev: Vec::new(),
            recompute_set: BTreeSet::new(),
            rc_prev_frontier: BTreeSet::new(),
            rc_current_frontier: BTreeSet::new(),
            created: BTreeSet::new(),
            victims: HashMap::new(),
            plan: None,
            hop_records: vec![HopRecord::default(); ell + 1],
            frontiers: Vec::new(),
            changed_final: BTreeSet::new(),
            halo_raw: 0,
            halo_sent: 0,
            halo_multi: false,
        }
    }

    pub fn graph(&self) -> &DynamicGraph {
        &self.graph
    }

    pub fn store(&self) -> &EmbeddingStore<T> {
        &self.store
    }

    pub fn model(&self) -> &ModelSpec<T> {
        &self.model
    }

    pub fn inbox_pool(&self) -> &InboxPool<T> {
        &self.inboxes
    }

    pub fn kind(&self) -> EngineKind {
        self.kind
    }

    pub fn register_halo(&mut self, v: VertexId, owner: usize) {
        self.halo_owner.insert(v, owner);
    }

    fn my_id(&self) -> usize {
        self.partition.map(|p| p.my_id).unwrap_or(0)
    }

    /// A vertex is local when this engine stores its embeddings.
    fn is_local(&self, v: VertexId) -> bool {
        self.partition.is_none() || self.store.h(0, v).is_some()
    }

    fn owner_of(&self, v: VertexId) -> usize {
        if self.is_local(v) {
            self.my_id()
        } else {
            *self.halo_owner.get(&v).unwrap_or(&usize::MAX)
        }
    }

    pub fn validate_batch(&self, events: &[UpdateEvent]) -> Result<(), EngineError> {
        validate_batch_against(&self.graph, events)
    }

    pub fn begin_batch(&mut self) {
        let ell = self.model.layer_count();
        for s in &mut self.seeds {
            s.clear();
        }
        for p in &mut self.pending_remote {
            p.clear();
        }
        for m in &mut self.pending_marks {
            m.clear();
        }
        self.hop0.clear();
        self.profiles.clear();
        self.changed_prev.clear();
        self.recompute_set.clear();
        self.rc_prev_frontier.clear();
        self.rc_current_frontier.clear();
        self.created.clear();
        self.victims.clear();
        self.plan = None;
        self.hop_records = vec![HopRecord::default(); ell + 1];
        self.frontiers.clear();
        self.changed_final.clear();
        self.halo_raw = 0;
        self.halo_sent = 0;
        self.halo_multi = false;
    }

    /// Pre-batch embedding rows of a local vertex (captured lazily before
    /// anything in this batch mutates them).
    fn profile_of(&mut self, u: VertexId) -> Result<Vec<Vec<T>>, EngineError> {
        if let Some(p) = self.profiles.get(&u) {
            return Ok(p.clone());
        }
        let ell = self.model.layer_count();
        let mut rows = Vec::with_capacity(ell);
        for l in 0..ell {
            let row = self
                .store
                .h(l, u)
                .ok_or_else(|| EngineError::Desync(format!("no stored row for {u} layer {l}")))?;
            rows.push(row.to_vec());
        }
        self.profiles.insert(u, rows.clone());
        Ok(rows)
    }

    fn init_created(&mut self, v: VertexId) -> Result<(), EngineError> {
        let features: Vec<T> = self
            .graph
            .features_of(v)
            .ok_or_else(|| EngineError::Desync(format!("created vertex {v} missing features")))?
            .iter()
            .map(|&x| T::from_f64(x))
            .collect();
        self.store.init_vertex(v, features, &self.model)?;
        self.created.insert(v);
        let ell = self.model.layer_count();
        let rows: Vec<Vec<T>> =
            (0..ell).map(|l| self.store.h(l, v).expect("just initialized").to_vec()).collect();
        self.profiles.insert(v, rows);
        Ok(())
    }

    fn push_edge_seeds(
        &mut self,
        seq: u64,
        src: VertexId,
        dst: VertexId,
        added: bool,
        weight: f64,
        wave0: &mut HaloBuf0<T>,
    ) -> Result<(), EngineError> {
        let profile = self.profile_of(src)?;
        let ell = self.model.layer_count();
        for l in 1..=ell {
            let value = profile[l - 1].clone();
            if self.is_local(dst) {
                self.seeds[l - 1].push(SeedMsg { seq, source: src, sink: dst, added, weight, value });
            } else {
                let payload = if added {
                    prepare_delta(self.model.aggregator, src, None, Some(&value), weight, 1)?
                } else {
                    prepare_delta(self.model.aggregator, src, Some(&value), None, weight, -1)?
                };
                let mut single = None;
                combine(self.model.aggregator, &mut single, payload)?;
                wave0.push_seed(self.owner_of(dst), l, dst, seq, single.expect("combined"));
            }
        }
        Ok(())
    }

    /// Applies this engine's slice of the batch (already validated by the
    /// caller against global state) and returns wave-0 records for peers.
    pub fn apply_events(&mut self, events: &[LocalEvent]) -> Result<ApplyOutcome<T>, EngineError> {
        let mut wave0 = HaloBuf0::new();
        for ev in events {
            match (&ev.event, ev.compute) {
                (UpdateEvent::EdgeAdd { src, dst, weight }, compute) => {
                    let res = self.graph.apply_event(&ev.event)?;
                    for c in res.created_vertices {
                        let owner = if c == *src { ev.src_owner } else { ev.dst_owner };
                        if self.partition.is_none() || owner == self.my_id() {
                            self.init_created(c)?;
                        } else {
                            self.halo_owner.insert(c, owner);
                        }
                    }
                    if compute {
                        if !self.is_local(*dst) {
                            self.halo_owner.insert(*dst, ev.dst_owner);
                        }
                        if !self.is_local(*src) {
                            return Err(EngineError::Desync(format!(
                                "compute edge event at non-owner of source {src}"
                            )));
                        }
                        self.push_edge_seeds(ev.seq, *src, *dst, true, *weight, &mut wave0)?;
                    } else if !self.is_local(*src) {
                        self.halo_owner.insert(*src, ev.src_owner);
                    }
                }
                (UpdateEvent::EdgeDel { src, dst }, compute) => {
                    let res = self.graph.apply_event(&ev.event)?;
                    if compute {
                        let weight = res.seeds.first().map(|s| s.weight).unwrap_or(1.0);
                        self.push_edge_seeds(ev.seq, *src, *dst, false, weight, &mut wave0)?;
                    }
                }
                (UpdateEvent::VertexAdd { vertex, .. }, compute) => {
                    self.graph.apply_event(&ev.event)?;
                    if compute {
                        self.init_created(*vertex)?;
                    } else {
                        self.halo_owner.insert(*vertex, ev.src_owner);
                    }
                }
                (UpdateEvent::VertexDel { vertex }, compute) => {
                    if !compute {
                        return Err(EngineError::Desync(
                            "vertex deletion routed as no-compute".into(),
                        ));
                    }
                    let profile = self.profile_of(*vertex)?;
                    let res = self.graph.apply_event(&ev.event)?;
                    let ell = self.model.layer_count();
                    for (esrc, edst, w) in &res.removed_edges {
                        if *esrc == *vertex {
                            if *edst == *vertex {
                                continue; // self-loop: sink no longer exists
                            }
                            if self.is_local(*edst) {
                                for l in 1..=ell {
                                    self.seeds[l - 1].push(SeedMsg {
                                        seq: ev.seq,
                                        source: *vertex,
                                        sink: *edst,
                                        added: false,
                                        weight: *w,
                                        value: profile[l - 1].clone(),
                                    });
                                }
                            } else {
                                let owner = self.owner_of(*edst);
                                for l in 1..=ell {
                                    let payload = prepare_delta(
                                        self.model.aggregator,
                                        *vertex,
                                        Some(&profile[l - 1]),
                                        None,
                                        *w,
                                        -1,
                                    )?;
                                    let mut single = None;
                                    combine(self.model.aggregator, &mut single, payload)?;
                                    wave0.push_seed(owner, l, *edst, ev.seq, single.expect("combined"));
                                }
                                wave0.push_drop(owner, *vertex, *edst);
                            }
                        } else if !self.is_local(*esrc) {
                            wave0.push_drop(self.owner_of(*esrc), *esrc, *vertex);
                        }
                    }
                    for hop in &mut self.seeds {
                        hop.retain(|s| s.sink != *vertex);
                    }
                    self.hop0.remove(vertex);
                    self.recompute_set.remove(vertex);
                    self.created.remove(vertex);
                    self.profiles.remove(vertex);
                    self.victims.insert(*vertex, ev.seq);
                    self.store.remove_vertex(*vertex);
                }
                (UpdateEvent::FeatureUpdate { vertex, features }, compute) => {
                    if !compute {
                        return Err(EngineError::Desync(
                            "feature update routed as no-compute".into(),
                        ));
                    }
                    self.profile_of(*vertex)?; // capture pre-batch rows first
                    self.graph.apply_event(&ev.event)?;
                    let new_row: Vec<T> = features.iter().map(|&x| T::from_f64(x)).collect();
                    match self.hop0.get_mut(vertex) {
                        Some(entry) => entry.1 = new_row.clone(),
                        None => {
                            let old = self
                                .store
                                .h(0, *vertex)
                                .expect("feature update targets a local vertex")
                                .to_vec();
                            self.hop0.insert(*vertex, (old, new_row.clone()));
                        }
                    }
                    self.store.set_h(0, *vertex, new_row);
                }
            }
        }

        // Coalesced no-op feature updates drop out of the hop-0 change set.
        self.hop0.retain(|_, (old, new)| old != new);

        // Initial per-mode frontier state.
        match self.kind {
            EngineKind::Incremental => {
                if self.model.aggregator == Aggregator::Attention {
                    self.recompute_set.extend(self.hop0.keys().copied());
                }
                self.changed_prev = self
                    .hop0
                    .iter()
                    .map(|(&v, (old, new))| (v, old.clone(), new.clone()))
                    .collect();
            }
            EngineKind::Recompute => {
                self.rc_prev_frontier = self.hop0.keys().copied().collect();
            }
        }
        Ok(wave0.drain())
    }

    /// Ingests wave-0 records from a peer: structural edge drops plus
    /// event seeds targeting local sinks.
    pub fn ingest_wave0(&mut self, records: Vec<HaloRecord<T>>) -> Result<(), EngineError> {
        for rec in records {
            match rec {
                HaloRecord::EdgeDrop { src, dst } => {
                    if self.graph.contains_edge(src, dst) {
                        self.graph.apply_event(&UpdateEvent::EdgeDel { src, dst })?;
                    }
                }
                HaloRecord::Delta { hop, sink, seq, value } => {
                    self.pending_remote[hop].push((seq, sink, value));
                }
                HaloRecord::Mark { hop, sink } => {
                    self.pending_marks[hop].insert(sink);
                }
            }
        }
        Ok(())
    }

    fn seed_stale(&self, sink: VertexId, seq: u64) -> bool {
        !self.graph.contains_vertex(sink)
            || self.victims.get(&sink).map(|&vd| vd > seq).unwrap_or(false)
    }

    /// Delivers one payload into a local inbox, converting attention
    /// transport at the receiver. Returns the op count charged.
    fn deliver_local(
        &mut self,
        sink: VertexId,
        hop: usize,
        payload: DeltaPayload<T>,
    ) -> Result<u64, EngineError> {
        deliver_payload(&mut self.inboxes, &self.store, &self.model, sink, hop, payload)
    }

    /// Pushes differentials for one hop from the previous hop's changed
    /// vertices. Linear aggregators take a fused path: the delta vector is
    /// built once per source and folded straight into each local inbox, so
    /// a delivery costs no allocation after the sink's first message.
    fn send_differentials(
        &mut self,
        l: usize,
        graph: &DynamicGraph,
        changed: &[(VertexId, Vec<T>, Vec<T>)],
        halo: &mut HaloBuf<T>,
        ops: &mut u64,
    ) -> Result<(), EngineError> {
        let agg = self.model.aggregator;
        match agg {
            Aggregator::Sum | Aggregator::WeightedSum | Aggregator::Mean => {
                let mut delta: Vec<T> = Vec::new();
                for (u, old, new) in changed {
                    if !graph.contains_vertex(*u) {
                        continue;
                    }
                    delta.clear();
                    delta.extend(new.iter().zip(old).map(|(&n, &o)| n - o));
                    *ops += delta.len() as u64; // one preparation per source
                    for &(sink, w) in graph.out_neighbors(*u) {
                        *ops += delta.len() as u64;
                        if is_owned(&self.partition, &self.store, sink) {
                            fuse_linear(agg, self.inboxes.checkout(sink, l), &delta, w)?;
                        } else {
                            let payload = match agg {
                                Aggregator::WeightedSum => {
                                    let ww = T::from_f64(w);
                                    DeltaPayload::Linear(delta.iter().map(|&x| ww * x).collect())
                                }
                                Aggregator::Mean => DeltaPayload::Mean {
                                    sum_delta: delta.clone(),
                                    count_delta: 0,
                                },
                                _ => DeltaPayload::Linear(delta.clone()),
                            };
                            halo.push(agg, sink, l, payload)?;
                        }
                    }
                }
            }
            Aggregator::Max | Aggregator::Min => {
                for (u, old, new) in changed {
                    if !graph.contains_vertex(*u) {
                        continue;
                    }
                    for &(sink, _) in graph.out_neighbors(*u) {
                        *ops += 2 * old.len() as u64;
                        let payload = DeltaPayload::OldNew {
                            source: *u,
                            old: Some(old.clone()),
                            new: Some(new.clone()),
                        };
                        if is_owned(&self.partition, &self.store, sink) {
                            combine(agg, self.inboxes.checkout(sink, l), payload)?;
                        } else {
                            halo.push(agg, sink, l, payload)?;
                        }
                    }
                }
            }
            Aggregator::Attention => {
                let layer = self.model.layer(l);
                for (u, old, new) in changed {
                    if !graph.contains_vertex(*u) {
                        continue;
                    }
                    for &(sink, _) in graph.out_neighbors(*u) {
                        if is_owned(&self.partition, &self.store, sink) {
                            *ops += deliver_attention_pair(
                                &mut self.inboxes,
                                &self.store,
                                layer,
                                sink,
                                l,
                                Some(old),
                                Some(new),
                            )?;
                        } else {
                            *ops += old.len() as u64;
                            halo.push(
                                agg,
                                sink,
                                l,
                                DeltaPayload::OldNew {
                                    source: *u,
                                    old: Some(old.clone()),
                                    new: Some(new.clone()),
                                },
                            )?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Merges one received inbox value (already combined sender-side) into a
    /// local inbox. Attention transport arrives as pairs and is converted
    /// entry by entry.
    fn merge_remote_value(
        &mut self,
        sink: VertexId,
        hop: usize,
        value: InboxValue<T>,
    ) -> Result<u64, EngineError> {
        let agg = self.model.aggregator;
        let mut ops = 0u64;
        match value {
            InboxValue::Linear(v) => {
                ops += v.len() as u64;
                combine(agg, self.inboxes.checkout(sink, hop), DeltaPayload::Linear(v))?;
            }
            InboxValue::Mean { sum_delta, count_delta } => {
                ops += sum_delta.len() as u64;
                combine(
                    agg,
                    self.inboxes.checkout(sink, hop),
                    DeltaPayload::Mean { sum_delta, count_delta },
                )?;
            }
            InboxValue::Pairs(entries) => {
                for OldNewEntry { source, old, new } in entries {
                    ops += self.deliver_local(
                        sink,
                        hop,
                        DeltaPayload::OldNew { source, old, new },
                    )?;
                }
            }
            InboxValue::Attn { .. } => {
                return Err(EngineError::Desync(
                    "attention deltas must travel as old/new pairs".into(),
                ));
            }
        }
        Ok(ops)
    }

    /// Hop entry phase: inject seeds, push deltas from vertices changed at
    /// the previous hop (or grow the recompute frontier), and return the
    /// halo records destined for peers.
    pub fn phase_send(
        &mut self,
        l: usize,
    ) -> Result<BTreeMap<usize, Vec<HaloRecord<T>>>, EngineError> {
        let start = Instant::now();
        let agg = self.model.aggregator;
        let mut halo = HaloBuf::new(self.combine_halo);
        let mut marks: BTreeMap<usize, BTreeSet<VertexId>> = BTreeMap::new();
        let mut ops = 0u64;

        match self.kind {
            EngineKind::Incremental => {
                // Event seeds for this hop, in event order.
                let seeds = std::mem::take(&mut self.seeds[l - 1]);
                for seed in &seeds {
                    if self.seed_stale(seed.sink, seed.seq) {
                        continue;
                    }
                    let payload = if seed.added {
                        prepare_delta(agg, seed.source, None, Some(&seed.value), seed.weight, 1)?
                    } else {
                        prepare_delta(agg, seed.source, Some(&seed.value), None, seed.weight, -1)?
                    };
                    ops += prepare_ops(agg, seed.value.len());
                    ops += self.deliver_local(seed.sink, l, payload)?;
                }
                self.seeds[l - 1] = seeds;

                // Seeds shipped by peers at wave 0.
                let pending = std::mem::take(&mut self.pending_remote[l]);
                for (seq, sink, value) in pending {
                    if self.seed_stale(sink, seq) {
                        continue;
                    }
                    ops += self.merge_remote_value(sink, l, value)?;
                }

                // Differentials from the previous hop's changed vertices.
                let changed = std::mem::take(&mut self.changed_prev);
                let graph = std::mem::take(&mut self.graph);
                let sent = self.send_differentials(l, &graph, &changed, &mut halo, &mut ops);
                self.graph = graph;
                self.changed_prev = changed;
                sent?;
            }
            EngineKind::Recompute => {
                let mut frontier = BTreeSet::new();
                let prev = std::mem::take(&mut self.rc_prev_frontier);
                for &u in &prev {
                    if !self.graph.contains_vertex(u) {
                        continue;
                    }
                    for &(v, _) in self.graph.out_neighbors(u) {
                        if self.is_local(v) {
                            frontier.insert(v);
                        } else {
                            marks.entry(self.owner_of(v)).or_default().insert(v);
                        }
                    }
                    if self.model.self_term(l) && self.is_local(u) {
                        frontier.insert(u);
                    }
                }
                self.rc_prev_frontier = prev;
                for seed in &self.seeds[l - 1] {
                    if !self.seed_stale(seed.sink, seed.seq) {
                        frontier.insert(seed.sink);
                    }
                }
                let pending = std::mem::take(&mut self.pending_remote[l]);
                for (seq, sink, _) in &pending {
                    if !self.seed_stale(*sink, *seq) {
                        frontier.insert(*sink);
                    }
                }
                self.rc_current_frontier = frontier;
            }
        }

        let (mut out, raw, sent, multi) = halo.drain(|v| self.owner_of(v));
        for (owner, sinks) in marks {
            let recs = out.entry(owner).or_default();
            for sink in sinks {
                recs.push(HaloRecord::Mark { hop: l, sink });
            }
        }
        self.halo_raw += raw;
        self.halo_sent += sent;
        self.halo_multi |= multi;
        self.hop_records[l].ops += ops;
        self.hop_records[l].send_ms += start.elapsed().as_secs_f64() * 1e3;
        Ok(out)
    }

    /// Ingests hop-`l` records from a peer (combined deltas or marks).
    pub fn ingest_deltas(&mut self, l: usize, records: Vec<HaloRecord<T>>) -> Result<(), EngineError> {
        let start = Instant::now();
        let mut ops = 0u64;
        for rec in records {
            match rec {
                HaloRecord::Delta { hop, sink, seq: _, value } => {
                    if hop != l {
                        return Err(EngineError::Desync(format!(
                            "hop-{hop} delta arrived during hop {l}"
                        )));
                    }
                    if !self.graph.contains_vertex(sink) {
                        continue;
                    }
                    ops += self.merge_remote_value(sink, l, value)?;
                }
                HaloRecord::Mark { hop, sink } => {
                    if hop != l {
                        return Err(EngineError::Desync(format!(
                            "hop-{hop} mark arrived during hop {l}"
                        )));
                    }
                    if self.graph.contains_vertex(sink) {
                        self.rc_current_frontier.insert(sink);
                    }
                }
                HaloRecord::EdgeDrop { .. } => {
                    return Err(EngineError::Desync("edge drop outside wave 0".into()));
                }
            }
        }
        self.hop_records[l].ops += ops;
        self.hop_records[l].send_ms += start.elapsed().as_secs_f64() * 1e3;
        Ok(())
    }

    /// Classifies the hop's active vertices and reports which remote
    /// embeddings recomputing vertices need, grouped by owner.
    pub fn plan_fetch(&mut self, l: usize) -> Result<BTreeMap<usize, BTreeSet<VertexId>>, EngineError> {
        let mut routes: BTreeMap<VertexId, Route<T>> = BTreeMap::new();
        match self.kind {
            EngineKind::Recompute => {
                for &v in &self.rc_current_frontier {
                    routes.insert(v, Route::Recompute);
                }
            }
            EngineKind::Incremental => {
                let agg = self.model.aggregator;
                let attention = agg == Aggregator::Attention;
                let linear = matches!(
                    agg,
                    Aggregator::Sum | Aggregator::WeightedSum | Aggregator::Mean
                );
                for v in self.inboxes.sinks_at(l) {
                    if !self.graph.contains_vertex(v) {
                        continue;
                    }
                    let route = if linear {
                        // Linear deltas always apply; fold lazily in compute.
                        Route::FoldInbox
                    } else if attention && self.recompute_set.contains(&v) {
                        Route::Recompute
                    } else {
                        let inbox = self.inboxes.value(v, l).expect("assigned slot");
                        let summary = self.store.summary(l, v).expect("local vertex has summary");
                        let ctx = SinkCtx { in_recompute_set: false };
                        match apply_delta(agg, summary, inbox, &ctx)? {
                            Disposition::NeedsRecompute => Route::Recompute,
                            d => Route::Apply(d),
                        }
                    };
                    routes.insert(v, route);
                }
                if self.model.self_term(l) {
                    for (u, _, _) in &self.changed_prev {
                        if self.graph.contains_vertex(*u) {
                            routes.entry(*u).or_insert(Route::SelfOnly);
                        }
                    }
                }
                if attention {
                    for &v in &self.recompute_set {
                        if self.graph.contains_vertex(v) && self.is_local(v) {
                            routes.insert(v, Route::Recompute);
                        }
                    }
                }
            }
        }

        let mut needs: BTreeMap<usize, BTreeSet<VertexId>> = BTreeMap::new();
        if self.partition.is_some() {
            for (v, route) in &routes {
                if matches!(route, Route::Recompute) {
                    for &(u, _) in self.graph.in_neighbors(*v) {
                        if self.store.h(l - 1, u).is_none() {
                            needs.entry(self.owner_of(u)).or_default().insert(u);
                        }
                    }
                }
            }
        }
        self.plan = Some(HopPlan { l, routes });
        Ok(needs)
    }

    /// Serves a peer's fetch request with local previous-layer embeddings.
    pub fn answer_fetch(&self, l: usize, ids: &[VertexId]) -> Vec<(VertexId, Vec<T>)> {
        ids.iter()
            .filter_map(|&v| self.store.h(l - 1, v).map(|row| (v, row.to_vec())))
            .collect()
    }

    /// Executes the planned hop: applies dispositions or recomputes, runs
    /// layer updates, and records bitwise changes.
    pub fn compute_hop(
        &mut self,
        l: usize,
        overlay: &HashMap<VertexId, Vec<T>>,
    ) -> Result<(), EngineError> {
        let start = Instant::now();
        let plan = self
            .plan
            .take()
            .ok_or_else(|| EngineError::Desync("compute without plan".into()))?;
        if plan.l != l {
            return Err(EngineError::Desync("plan/compute hop mismatch".into()));
        }
        let agg = self.model.aggregator;
        let mut ops = 0u64;
        let mut changed: Vec<(VertexId, Vec<T>, Vec<T>)> = Vec::new();
        let frontier: BTreeSet<VertexId> = plan.routes.keys().copied().collect();

        for (v, route) in plan.routes {
            match route {
                Route::Recompute => {
                    let s =
                        recompute_aggregate(&self.graph, &self.store, &self.model, v, l, overlay)?;
                    ops += recompute_ops(&self.model, l, self.graph.in_degree(v));
                    self.store.set_summary(l, v, s);
                }
                Route::FoldInbox => {
                    let inbox = self
                        .inboxes
                        .value(v, l)
                        .ok_or_else(|| EngineError::Desync(format!("no inbox for {v}")))?;
                    let summary = self
                        .store
                        .summary_mut(l, v)
                        .ok_or_else(|| EngineError::Desync(format!("no summary for {v}")))?;
                    ops += fold_linear_inbox(summary, inbox)? as u64;
                }
                Route::Apply(Disposition::Incremental(s)) => {
                    let d = match &s {
                        AggregateSummary::Attention { numer, .. } => numer.len(),
                        AggregateSummary::Mean { sum, .. } => sum.len(),
                        AggregateSummary::Sum(x) | AggregateSummary::WeightedSum(x) => x.len(),
                        AggregateSummary::Extremum { vec, .. } => vec.len(),
                    };
                    ops += d as u64;
                    self.store.set_summary(l, v, s);
                }
                Route::Apply(Disposition::NoChange) => {
                    let self_changed = self.model.self_term(l)
                        && self.changed_prev.iter().any(|(u, _, _)| *u == v);
                    if !self_changed {
                        continue; // pruned: nothing propagates from here
                    }
                }
                Route::Apply(Disposition::NeedsRecompute) => {
                    unreachable!("plan maps recompute dispositions to Route::Recompute")
                }
                Route::SelfOnly => {}
            }

            let h_new = {
                let summary = self
                    .store
                    .summary(l, v)
                    .ok_or_else(|| EngineError::Desync(format!("no summary for {v}")))?;
                let computed;
                let value: &[T] = match summary.value_ref() {
                    Some(slice) => slice,
                    None => {
                        computed = summary.value();
                        &computed
                    }
                };
                let h_prev = self.store.h(l - 1, v).ok_or_else(|| {
                    EngineError::Desync(format!("no row for {v} at layer {}", l - 1))
                })?;
                self.model.layer_update(h_prev, value, l)?
            };
            ops += self.model.layer_update_ops(l);
            let changed_now = self.store.h(l, v).expect("existing row") != h_new.as_slice();
            if changed_now {
                let h_old = self.store.h(l, v).expect("existing row").to_vec();
                self.store.set_h(l, v, h_new.clone());
                changed.push((v, h_old, h_new));
            }
        }

        self.hop_records[l].active = frontier.len() as u64;
        self.hop_records[l].ops += ops;
        self.hop_records[l].compute_ms += start.elapsed().as_secs_f64() * 1e3;
        self.frontiers.push(frontier);

        if agg == Aggregator::Attention && self.kind == EngineKind::Incremental {
            self.recompute_set.extend(changed.iter().map(|(v, _, _)| *v));
        }
        if self.kind == EngineKind::Recompute {
            self.rc_prev_frontier = std::mem::take(&mut self.rc_current_frontier);
        }
        if l == self.model.layer_count() {
            self.changed_final = changed.iter().map(|(v, _, _)| *v).collect();
            for &v in &self.created {
                if self.graph.contains_vertex(v) {
                    self.changed_final.insert(v);
                }
            }
        }
        self.changed_prev = changed;
        Ok(())
    }

    /// Collects the batch result and releases all per-batch state.
    pub fn finish_batch(&mut self) -> BatchResult {
        let ell = self.model.layer_count();
        let result = BatchResult {
            events: 0,
            changed_final: std::mem::take(&mut self.changed_final),
            active_hop0: self.hop0.len() as u64,
            hops: self.hop_records[1..=ell].to_vec(),
            frontiers: std::mem::take(&mut self.frontiers),
            apply_ms: 0.0,
            total_ms: 0.0,
            remote_raw_msgs: self.halo_raw,
            remote_sent_msgs: self.halo_sent,
            remote_combiner_multi: self.halo_multi,
        };
        self.inboxes.release_all();
        result
    }

    /// Consumes the engine, returning graph and store (end-of-run export).
    pub fn into_parts(self) -> (DynamicGraph, EmbeddingStore<T>) {
        (self.graph, self.store)
    }
}

/// A vertex is handled by this engine when it stores its embeddings (the
/// single-machine engine handles everything).
fn is_owned<T: Real>(
    partition: &Option<PartitionView>,
    store: &EmbeddingStore<T>,
    v: VertexId,
) -> bool {
    partition.is_none() || store.h(0, v).is_some()
}

/// Adds one linear-family delta straight into an inbox slot, scaling by the
/// edge weight for weighted sums. The first message to a sink installs the
/// slot value; later ones fold in place.
fn fuse_linear<T: Real>(
    agg: Aggregator,
    slot: &mut Option<InboxValue<T>>,
    delta: &[T],
    weight: f64,
) -> Result<(), KernelError> {
    match agg {
        Aggregator::Sum | Aggregator::WeightedSum => {
            let w = if agg == Aggregator::WeightedSum { T::from_f64(weight) } else { T::one() };
            match slot {
                Some(InboxValue::Linear(acc)) => {
                    if acc.len() != delta.len() {
                        return Err(KernelError::MismatchedDims("linear delivery".into()));
                    }
                    for (a, &x) in acc.iter_mut().zip(delta) {
                        *a += w * x;
                    }
                }
                None => {
                    *slot = Some(InboxValue::Linear(delta.iter().map(|&x| w * x).collect()));
                }
                Some(_) => return Err(KernelError::MixedAggregator),
            }
            Ok(())
        }
        Aggregator::Mean => {
            match slot {
                Some(InboxValue::Mean { sum_delta, .. }) => {
                    if sum_delta.len() != delta.len() {
                        return Err(KernelError::MismatchedDims("mean delivery".into()));
                    }
                    for (a, &x) in sum_delta.iter_mut().zip(delta) {
                        *a += x;
                    }
                }
                None => {
                    *slot = Some(InboxValue::Mean { sum_delta: delta.to_vec(), count_delta: 0 });
                }
                Some(_) => return Err(KernelError::MixedAggregator),
            }
            Ok(())
        }
        _ => Err(KernelError::MixedAggregator),
    }
}

/// Converts one attention transport pair at the receiver and folds it into
/// the sink's inbox. Returns the op count charged.
fn deliver_attention_pair<T: Real>(
    inboxes: &mut InboxPool<T>,
    store: &EmbeddingStore<T>,
    layer: &crate::model::LayerSpec<T>,
    sink: VertexId,
    hop: usize,
    old: Option<&[T]>,
    new: Option<&[T]>,
) -> Result<u64, EngineError> {
    let sink_h = store
        .h(hop - 1, sink)
        .ok_or_else(|| EngineError::Desync(format!("no row for sink {sink}")))?;
    let sides = old.is_some() as usize + new.is_some() as usize;
    let (num_delta, den_delta) = attn_convert(layer, old, new, sink_h)?;
    combine_attn(inboxes.checkout(sink, hop), num_delta, den_delta)?;
    Ok(attn_convert_ops(layer.d_in, layer.d_out, sides) + layer.d_out as u64)
}

/// Folds a combined linear-family inbox into the stored summary in place,
/// returning the component count touched. Matches `apply_delta` semantics
/// for the always-incremental aggregators without allocating.
fn fold_linear_inbox<T: Real>(
    summary: &mut AggregateSummary<T>,
    inbox: &InboxValue<T>,
) -> Result<usize, EngineError> {
    match (summary, inbox) {
        (AggregateSummary::Sum(acc), InboxValue::Linear(delta))
        | (AggregateSummary::WeightedSum(acc), InboxValue::Linear(delta)) => {
            if acc.len() != delta.len() {
                return Err(EngineError::Kernel(KernelError::MismatchedDims(
                    "linear fold".into(),
                )));
            }
            for (a, &x) in acc.iter_mut().zip(delta) {
                *a += x;
            }
            Ok(delta.len())
        }
        (
            AggregateSummary::Mean { sum, count },
            InboxValue::Mean { sum_delta, count_delta },
        ) => {
            if sum.len() != sum_delta.len() {
                return Err(EngineError::Kernel(KernelError::MismatchedDims("mean fold".into())));
            }
            let next = *count + count_delta;
            if next < 0 {
                return Err(EngineError::Kernel(KernelError::NegativeCount));
            }
            *count = next;
            for (a, &x) in sum.iter_mut().zip(sum_delta) {
                *a += x;
            }
            Ok(sum_delta.len())
        }
        _ => Err(EngineError::Kernel(KernelError::MixedAggregator)),
    }
}

/// Generic single-payload delivery used by seeds and remote merges.
fn deliver_payload<T: Real>(
    inboxes: &mut InboxPool<T>,
    store: &EmbeddingStore<T>,
    model: &ModelSpec<T>,
    sink: VertexId,
    hop: usize,
    payload: DeltaPayload<T>,
) -> Result<u64, EngineError> {
    if model.aggregator == Aggregator::Attention {
        if let DeltaPayload::OldNew { old, new, .. } = payload {
            return deliver_attention_pair(
                inboxes,
                store,
                model.layer(hop),
                sink,
                hop,
                old.as_deref(),
                new.as_deref(),
            );
        }
        return Err(EngineError::Kernel(KernelError::MixedAggregator));
    }
    let d = match &payload {
        DeltaPayload::Linear(v) => v.len(),
        DeltaPayload::Mean { sum_delta, .. } => sum_delta.len(),
        DeltaPayload::OldNew { old, new, .. } => {
            old.as_ref().or(new.as_ref()).map(|v| v.len()).unwrap_or(0)
        }
    };
    combine(model.aggregator, inboxes.checkout(sink, hop), payload)?;
    Ok(d as u64)
}

/// Wave-0 buffer: seeds are never combined across events because each
/// carries its own staleness sequence; edge drops are deduplicated.
struct HaloBuf0<T> {
    out: BTreeMap<usize, Vec<HaloRecord<T>>>,
}

impl<T: Real> HaloBuf0<T> {
    fn new() -> Self {
        HaloBuf0 { out: BTreeMap::new() }
    }

    fn push_seed(&mut self, owner: usize, hop: usize, sink: VertexId, seq: u64, value: InboxValue<T>) {
        self.out
            .entry(owner)
            .or_default()
            .push(HaloRecord::Delta { hop, sink, seq, value });
    }

    fn push_drop(&mut self, owner: usize, src: VertexId, dst: VertexId) {
        let recs = self.out.entry(owner).or_default();
        let rec = HaloRecord::EdgeDrop { src, dst };
        if !recs.contains(&rec) {
            recs.push(rec);
        }
    }

    fn drain(self) -> ApplyOutcome<T> {
        self.out
    }
}
