//! Mutable directed graph with per-vertex features and dual adjacency.
//!
//! The graph is the single mutable structure the engines share. Both
//! adjacency directions are kept as sorted edge lists so that mutation is
//! O(degree), neighbor queries are deterministic, and no sparse-matrix
//! rebuild is ever needed when a stream of updates arrives.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

/// Vertex identifier. Ids are non-negative and never reused implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub u64);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(VertexId, VertexId),
    #[error("missing edge {0} -> {1}")]
    MissingEdge(VertexId, VertexId),
    #[error("duplicate vertex {0}")]
    DuplicateVertex(VertexId),
    #[error("missing vertex {0}")]
    MissingVertex(VertexId),
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("feature vector for {vertex} has length {got}, expected {expected}")]
    DimensionMismatch {
        vertex: VertexId,
        got: usize,
        expected: usize,
    },
    #[error("non-finite edge weight on {0} -> {1}")]
    BadWeight(VertexId, VertexId),
}

/// The five mutation kinds a stream can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateEvent {
    EdgeAdd {
        src: VertexId,
        dst: VertexId,
        weight: f64,
    },
    EdgeDel {
        src: VertexId,
        dst: VertexId,
    },
    VertexAdd {
        vertex: VertexId,
        /// Empty means "default to the zero vector".
        features: Vec<f64>,
    },
    VertexDel {
        vertex: VertexId,
    },
    FeatureUpdate {
        vertex: VertexId,
        features: Vec<f64>,
    },
}

impl UpdateEvent {
    /// The vertex the update is incident on and propagation starts from.
    pub fn root(&self) -> VertexId {
        match self {
            UpdateEvent::EdgeAdd { src, .. } | UpdateEvent::EdgeDel { src, .. } => *src,
            UpdateEvent::VertexAdd { vertex, .. }
            | UpdateEvent::VertexDel { vertex }
            | UpdateEvent::FeatureUpdate { vertex, .. } => *vertex,
        }
    }
}

/// How a seed dirties its sink's first-hop state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedKind {
    EdgeAdded,
    EdgeDeleted,
    FeatureChanged,
}

/// One propagation start produced by applying an event.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub root: VertexId,
    pub sink: VertexId,
    pub kind: SeedKind,
    pub weight: f64,
    /// Old/new feature vectors for `FeatureChanged` seeds; edge seeds
    /// resolve their payloads from the embedding store instead.
    pub features: Option<(Vec<f64>, Vec<f64>)>,
}

/// Counts of structural changes one event caused.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StructuralDelta {
    pub edges_added: usize,
    pub edges_removed: usize,
    pub vertices_added: usize,
    pub vertices_removed: usize,
    pub features_updated: usize,
}

/// Result of applying one event: propagation seeds plus bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApplyResult {
    pub seeds: Vec<Seed>,
    /// Edges removed by a VertexDel, as (src, dst, weight).
    pub removed_edges: Vec<(VertexId, VertexId, f64)>,
    /// Vertices created by this event (explicit adds and auto-created
    /// edge endpoints).
    pub created_vertices: Vec<VertexId>,
    pub structural: StructuralDelta,
}

/// Mutable directed graph with features and exact mirror adjacency.
#[derive(Debug, Clone, Default)]
pub struct DynamicGraph {
    out_adj: HashMap<VertexId, Vec<(VertexId, f64)>>,
    in_adj: HashMap<VertexId, Vec<(VertexId, f64)>>,
    features: HashMap<VertexId, Vec<f64>>,
    feature_dim: usize,
    edge_count: usize,
    next_id: u64,
    /// When set, an edge endpoint that does not exist is created with zero
    /// features instead of failing the event.
    pub auto_vertex_add: bool,
}

impl DynamicGraph {
    pub fn new(feature_dim: usize) -> Self {
        DynamicGraph {
            feature_dim,
            ..Default::default()
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn vertex_count(&self) -> usize {
        self.features.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains_vertex(&self, v: VertexId) -> bool {
        self.features.contains_key(&v)
    }

    pub fn contains_edge(&self, src: VertexId, dst: VertexId) -> bool {
        self.out_adj
            .get(&src)
            .map(|l| l.binary_search_by_key(&dst, |e| e.0).is_ok())
            .unwrap_or(false)
    }

    /// Next unused id; tracked across adds so generators never collide.
    pub fn next_id(&self) -> VertexId {
        VertexId(self.next_id)
    }

    /// Vertex ids in ascending order.
    pub fn vertices(&self) -> Vec<VertexId> {
        let mut ids: Vec<VertexId> = self.features.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn features_of(&self, v: VertexId) -> Option<&[f64]> {
        self.features.get(&v).map(|f| f.as_slice())
    }

    /// Out-neighbors of `v` as (sink, weight), sorted by id.
    pub fn out_neighbors(&self, v: VertexId) -> &[(VertexId, f64)] {
        self.out_adj.get(&v).map(|l| l.as_slice()).unwrap_or(&[])
    }

    /// In-neighbors of `v` as (source, weight), sorted by id.
    pub fn in_neighbors(&self, v: VertexId) -> &[(VertexId, f64)] {
        self.in_adj.get(&v).map(|l| l.as_slice()).unwrap_or(&[])
    }

    /// Adjacency copy in deterministic sorted order.
    pub fn neighbors(
        &self,
        v: VertexId,
        incoming: bool,
    ) -> Result<Vec<(VertexId, f64)>, GraphError> {
        if !self.contains_vertex(v) {
            return Err(GraphError::MissingVertex(v));
        }
        Ok(if incoming {
            self.in_neighbors(v).to_vec()
        } else {
            self.out_neighbors(v).to_vec()
        })
    }

    pub fn in_degree(&self, v: VertexId) -> usize {
        self.in_neighbors(v).len()
    }

    /// Average in-degree (|E| / |V|) plus per-vertex in-degrees, sorted by id.
    pub fn degree_stats(&self) -> Result<(f64, Vec<(VertexId, usize)>), GraphError> {
        if self.features.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        let avg = self.edge_count as f64 / self.features.len() as f64;
        let per_vertex = self
            .vertices()
            .into_iter()
            .map(|v| (v, self.in_degree(v)))
            .collect();
        Ok((avg, per_vertex))
    }

    fn ensure_feature_len(&self, v: VertexId, features: &[f64]) -> Result<(), GraphError> {
        if features.len() != self.feature_dim {
            return Err(GraphError::DimensionMismatch {
                vertex: v,
                got: features.len(),
                expected: self.feature_dim,
            });
        }
        Ok(())
    }

    fn insert_vertex(&mut self, v: VertexId, features: Vec<f64>) {
        self.features.insert(v, features);
        self.out_adj.entry(v).or_default();
        self.in_adj.entry(v).or_default();
        self.next_id = self.next_id.max(v.0 + 1);
    }

    fn insert_edge_raw(&mut self, src: VertexId, dst: VertexId, weight: f64) {
        let out = self.out_adj.entry(src).or_default();
        let pos = out.binary_search_by_key(&dst, |e| e.0).unwrap_err();
        out.insert(pos, (dst, weight));
        let inc = self.in_adj.entry(dst).or_default();
        let pos = inc.binary_search_by_key(&src, |e| e.0).unwrap_err();
        inc.insert(pos, (src, weight));
        self.edge_count += 1;
    }

    fn remove_edge_raw(&mut self, src: VertexId, dst: VertexId) -> f64 {
        let out = self.out_adj.get_mut(&src).expect("edge source exists");
        let pos = out
            .binary_search_by_key(&dst, |e| e.0)
            .expect("edge present in out list");
        let (_, w) = out.remove(pos);
        let inc = self.in_adj.get_mut(&dst).expect("edge sink exists");
        let pos = inc
            .binary_search_by_key(&src, |e| e.0)
            .expect("edge present in in list");
        inc.remove(pos);
        self.edge_count -= 1;
        w
    }

    /// Adds a vertex directly (initial load path). Fails on duplicates.
    pub fn add_vertex(&mut self, v: VertexId, features: Vec<f64>) -> Result<(), GraphError> {
        if self.contains_vertex(v) {
            return Err(GraphError::DuplicateVertex(v));
        }
        let features = if features.is_empty() {
            vec![0.0; self.feature_dim]
        } else {
            self.ensure_feature_len(v, &features)?;
            features
        };
        self.insert_vertex(v, features);
        Ok(())
    }

    /// Adds an edge directly (initial load path).
    pub fn add_edge(&mut self, src: VertexId, dst: VertexId, weight: f64) -> Result<(), GraphError> {
        for v in [src, dst] {
            if !self.contains_vertex(v) {
                return Err(GraphError::MissingVertex(v));
            }
        }
        if !weight.is_finite() {
            return Err(GraphError::BadWeight(src, dst));
        }
        if self.contains_edge(src, dst) {
            return Err(GraphError::DuplicateEdge(src, dst));
        }
        self.insert_edge_raw(src, dst, weight);
        Ok(())
    }

    /// Checks an event against the current structure without mutating it.
    pub fn validate_event(&self, e: &UpdateEvent) -> Result<(), GraphError> {
        match e {
            UpdateEvent::EdgeAdd { src, dst, weight } => {
                if !weight.is_finite() {
                    return Err(GraphError::BadWeight(*src, *dst));
                }
                if !self.auto_vertex_add {
                    for v in [src, dst] {
                        if !self.contains_vertex(*v) {
                            return Err(GraphError::MissingVertex(*v));
                        }
                    }
                }
                if self.contains_edge(*src, *dst) {
                    return Err(GraphError::DuplicateEdge(*src, *dst));
                }
                Ok(())
            }
            UpdateEvent::EdgeDel { src, dst } => {
                for v in [src, dst] {
                    if !self.contains_vertex(*v) {
                        return Err(GraphError::MissingVertex(*v));
                    }
                }
                if !self.contains_edge(*src, *dst) {
                    return Err(GraphError::MissingEdge(*src, *dst));
                }
                Ok(())
            }
            UpdateEvent::VertexAdd { vertex, features } => {
                if self.contains_vertex(*vertex) {
                    return Err(GraphError::DuplicateVertex(*vertex));
                }
                if !features.is_empty() {
                    self.ensure_feature_len(*vertex, features)?;
                }
                Ok(())
            }
            UpdateEvent::VertexDel { vertex } => {
                if !self.contains_vertex(*vertex) {
                    return Err(GraphError::MissingVertex(*vertex));
                }
                Ok(())
            }
            UpdateEvent::FeatureUpdate { vertex, features } => {
                if !self.contains_vertex(*vertex) {
                    return Err(GraphError::MissingVertex(*vertex));
                }
                self.ensure_feature_len(*vertex, features)
            }
        }
    }

    /// Applies one event, mutating the graph and reporting the propagation
    /// seeds it creates.
    ///
    /// - `EdgeAdd(u, v)`: one edge-added seed targeting `v`.
    /// - `EdgeDel(u, v)`: one edge-deleted seed targeting `v` carrying the
    ///   old weight.
    /// - `FeatureUpdate(u)`: one seed per out-neighbor with (old, new)
    ///   features, plus a self-seed so `u`'s own first layer refreshes.
    /// - `VertexAdd`: vertex registered, zero seeds.
    /// - `VertexDel(u)`: all incident edges removed first; each removed
    ///   out-edge yields an edge-deleted seed, removed in-edges yield none
    ///   (the sink no longer exists), then `u` and its features are dropped.
    pub fn apply_event(&mut self, e: &UpdateEvent) -> Result<ApplyResult, GraphError> {
        self.validate_event(e)?;
        let mut result = ApplyResult::default();
        match e {
            UpdateEvent::EdgeAdd { src, dst, weight } => {
                for v in [src, dst] {
                    if !self.contains_vertex(*v) {
                        // validate_event only lets this through under
                        // auto_vertex_add.
                        self.insert_vertex(*v, vec![0.0; self.feature_dim]);
                        result.created_vertices.push(*v);
                        result.structural.vertices_added += 1;
                    }
                }
                self.insert_edge_raw(*src, *dst, *weight);
                result.structural.edges_added = 1;
                result.seeds.push(Seed {
                    root: *src,
                    sink: *dst,
                    kind: SeedKind::EdgeAdded,
                    weight: *weight,
                    features: None,
                });
            }
            UpdateEvent::EdgeDel { src, dst } => {
                let w = self.remove_edge_raw(*src, *dst);
                result.structural.edges_removed = 1;
                result.seeds.push(Seed {
                    root: *src,
                    sink: *dst,
                    kind: SeedKind::EdgeDeleted,
                    weight: w,
                    features: None,
                });
            }
            UpdateEvent::VertexAdd { vertex, features } => {
                let features = if features.is_empty() {
                    vec![0.0; self.feature_dim]
                } else {
                    features.clone()
                };
                self.insert_vertex(*vertex, features);
                result.created_vertices.push(*vertex);
                result.structural.vertices_added = 1;
            }
            UpdateEvent::VertexDel { vertex } => {
                let out: Vec<(VertexId, f64)> = self.out_neighbors(*vertex).to_vec();
                let inc: Vec<(VertexId, f64)> = self.in_neighbors(*vertex).to_vec();
                for (dst, w) in out {
                    self.remove_edge_raw(*vertex, dst);
                    result.removed_edges.push((*vertex, dst, w));
                    result.structural.edges_removed += 1;
                    if dst != *vertex {
                        result.seeds.push(Seed {
                            root: *vertex,
                            sink: dst,
                            kind: SeedKind::EdgeDeleted,
                            weight: w,
                            features: None,
                        });
                    }
                }
                for (src, w) in inc {
                    if src == *vertex {
                        continue; // self-loop already removed above
                    }
                    self.remove_edge_raw(src, *vertex);
                    result.removed_edges.push((src, *vertex, w));
                    result.structural.edges_removed += 1;
                }
                self.features.remove(vertex);
                self.out_adj.remove(vertex);
                self.in_adj.remove(vertex);
                result.structural.vertices_removed = 1;
            }
            UpdateEvent::FeatureUpdate { vertex, features } => {
                let old = self.features.get_mut(vertex).expect("validated");
                let old_copy = old.clone();
                *old = features.clone();
                result.structural.features_updated = 1;
                for (dst, w) in self.out_neighbors(*vertex).to_vec() {
                    result.seeds.push(Seed {
                        root: *vertex,
                        sink: dst,
                        kind: SeedKind::FeatureChanged,
                        weight: w,
                        features: Some((old_copy.clone(), features.clone())),
                    });
                }
                result.seeds.push(Seed {
                    root: *vertex,
                    sink: *vertex,
                    kind: SeedKind::FeatureChanged,
                    weight: 1.0,
                    features: Some((old_copy, features.clone())),
                });
            }
        }
        Ok(result)
    }

    /// Cross-checks the dual-adjacency mirror invariant. Intended for tests
    /// and debug assertions on small graphs.
    pub fn check_mirror_invariant(&self) -> Result<(), String> {
        let mut seen = 0usize;
        for (&u, list) in &self.out_adj {
            let mut prev: Option<VertexId> = None;
            for &(v, w) in list {
                if let Some(p) = prev {
                    if p >= v {
                        return Err(format!("out list of {u} not strictly sorted"));
                    }
                }
                prev = Some(v);
                if !self.contains_vertex(v) || !self.contains_vertex(u) {
                    return Err(format!("edge {u} -> {v} references missing vertex"));
                }
                let mirror = self
                    .in_adj
                    .get(&v)
                    .and_then(|l| l.iter().find(|e| e.0 == u))
                    .map(|e| e.1);
                if mirror != Some(w) {
                    return Err(format!("edge {u} -> {v} missing or weight-skewed in in list"));
                }
                seen += 1;
            }
        }
        let in_total: usize = self.in_adj.values().map(|l| l.len()).sum();
        if seen != in_total || seen != self.edge_count {
            return Err(format!(
                "edge counts disagree: out={seen} in={in_total} counter={}",
                self.edge_count
            ));
        }
        for v in self.features.keys() {
            if self.features[v].len() != self.feature_dim {
                return Err(format!("vertex {v} has a feature row of wrong length"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File formats owned by the graph store.
// ---------------------------------------------------------------------------

/// Parses the text graph format: one `u v [w]` edge per line, optional
/// `v <id>` lines declaring isolated vertices, `#` comments.
pub fn read_graph_file(path: &Path, feature_dim: usize) -> Result<DynamicGraph, std::io::Error> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut g = DynamicGraph::new(feature_dim);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let first = parts.next().unwrap();
        let bad = |msg: String| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {}", path.display(), lineno + 1, msg),
            )
        };
        if first == "v" {
            let id: u64 = parts
                .next()
                .ok_or_else(|| bad("vertex line missing id".into()))?
                .parse()
                .map_err(|e| bad(format!("bad vertex id: {e}")))?;
            let v = VertexId(id);
            if !g.contains_vertex(v) {
                g.add_vertex(v, Vec::new()).map_err(|e| bad(e.to_string()))?;
            }
            continue;
        }
        let src: u64 = first.parse().map_err(|e| bad(format!("bad source id: {e}")))?;
        let dst: u64 = parts
            .next()
            .ok_or_else(|| bad("edge line missing sink".into()))?
            .parse()
            .map_err(|e| bad(format!("bad sink id: {e}")))?;
        let weight: f64 = match parts.next() {
            Some(tok) => tok.parse().map_err(|e| bad(format!("bad weight: {e}")))?,
            None => 1.0,
        };
        let (src, dst) = (VertexId(src), VertexId(dst));
        for v in [src, dst] {
            if !g.contains_vertex(v) {
                g.add_vertex(v, Vec::new()).map_err(|e| bad(e.to_string()))?;
            }
        }
        g.add_edge(src, dst, weight).map_err(|e| bad(e.to_string()))?;
    }
    Ok(g)
}

/// Writes the text graph format read by [`read_graph_file`].
pub fn write_graph_file(g: &DynamicGraph, path: &Path) -> Result<(), std::io::Error> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# directed")?;
    for v in g.vertices() {
        if g.out_neighbors(v).is_empty() && g.in_neighbors(v).is_empty() {
            writeln!(w, "v {}", v.0)?;
        }
    }
    for u in g.vertices() {
        for &(v, weight) in g.out_neighbors(u) {
            if weight == 1.0 {
                writeln!(w, "{} {}", u.0, v.0)?;
            } else {
                writeln!(w, "{} {} {}", u.0, v.0, weight)?;
            }
        }
    }
    w.flush()
}

/// Reads the text feature matrix: a `n d0` header line followed by n rows
/// of d0 reals; row i holds the features of vertex i.
pub fn read_feature_file(path: &Path) -> Result<(usize, usize, Vec<Vec<f64>>), std::io::Error> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header: Option<(usize, usize)> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {}", path.display(), lineno + 1, msg),
            )
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        match header {
            None => {
                if toks.len() != 2 {
                    return Err(bad("expected header `n d0`".into()));
                }
                let n = toks[0].parse().map_err(|e| bad(format!("bad n: {e}")))?;
                let d = toks[1].parse().map_err(|e| bad(format!("bad d0: {e}")))?;
                header = Some((n, d));
            }
            Some((_, d)) => {
                if toks.len() != d {
                    return Err(bad(format!("row has {} values, expected {}", toks.len(), d)));
                }
                let mut row = Vec::with_capacity(d);
                for t in toks {
                    row.push(t.parse().map_err(|e| bad(format!("bad value: {e}")))?);
                }
                rows.push(row);
            }
        }
    }
    let (n, d) = header.ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidData, "feature file missing header")
    })?;
    if rows.len() != n {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("feature file declares {} rows, found {}", n, rows.len()),
        ));
    }
    Ok((n, d, rows))
}

/// Writes the text feature matrix read by [`read_feature_file`].
pub fn write_feature_file(
    rows: &[Vec<f64>],
    dim: usize,
    path: &Path,
) -> Result<(), std::io::Error> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{} {}", rows.len(), dim)?;
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                write!(w, " ")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Builds a graph from an edge/feature pair, attaching row i to vertex i.
pub fn attach_features(
    g: &mut DynamicGraph,
    rows: &[Vec<f64>],
    dim: usize,
) -> Result<(), GraphError> {
    for v in g.vertices() {
        let idx = v.0 as usize;
        if idx >= rows.len() {
            return Err(GraphError::DimensionMismatch {
                vertex: v,
                got: 0,
                expected: dim,
            });
        }
        let row = &rows[idx];
        if row.len() != dim {
            return Err(GraphError::DimensionMismatch {
                vertex: v,
                got: row.len(),
                expected: dim,
            });
        }
        *g.features.get_mut(&v).expect("vertex exists") = row.clone();
    }
    g.feature_dim = dim;
    Ok(())
}
