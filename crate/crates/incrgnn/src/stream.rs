//! Trace files: format, parser, batcher, and a seeded synthetic generator.
//!
//! One event per line:
//!
//! ```text
//! EA u v [w]          edge add (weight defaults to 1.0)
//! ED u v              edge delete
//! VA u f_0 .. f_d0-1  vertex add with features
//! VD u                vertex delete
//! FU u f_0 .. f_d0-1  feature update
//! ```
//!
//! `#` starts a comment. The generator tracks live graph state so emitted
//! traces never reference a vertex or edge that does not currently exist.

use std::collections::HashMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{DynamicGraph, UpdateEvent, VertexId};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("feature arity {got} does not match d0 = {expected} at {path}:{line}")]
    DimensionMismatch { path: String, line: usize, got: usize, expected: usize },
    #[error("infeasible trace config: {0}")]
    InfeasibleConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses a trace file into events in file order, checking feature arity.
pub fn parse_trace(path: &Path, d0: usize) -> Result<Vec<UpdateEvent>, StreamError> {
    parse_trace_with(path, Some(d0))
}

/// As [`parse_trace`], optionally skipping the feature-arity check (for
/// consumers that only care about structure, like routing replays).
pub fn parse_trace_with(path: &Path, d0: Option<usize>) -> Result<Vec<UpdateEvent>, StreamError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let pstr = path.display().to_string();
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let err = |msg: String| StreamError::Parse { path: pstr.clone(), line: lineno, msg };
        let mut toks = line.split_whitespace();
        let kind = toks.next().unwrap();
        let mut next_id = |name: &str| -> Result<VertexId, StreamError> {
            let tok = toks.next().ok_or_else(|| err(format!("missing {name}")))?;
            let id: u64 = tok.parse().map_err(|e| err(format!("bad {name}: {e}")))?;
            Ok(VertexId(id))
        };
        match kind {
            "EA" => {
                let src = next_id("source")?;
                let dst = next_id("sink")?;
                let weight = match toks.next() {
                    Some(t) => t.parse().map_err(|e| err(format!("bad weight: {e}")))?,
                    None => 1.0,
                };
                events.push(UpdateEvent::EdgeAdd { src, dst, weight });
            }
            "ED" => {
                let src = next_id("source")?;
                let dst = next_id("sink")?;
                events.push(UpdateEvent::EdgeDel { src, dst });
            }
            "VD" => {
                let vertex = next_id("vertex")?;
                events.push(UpdateEvent::VertexDel { vertex });
            }
            "VA" | "FU" => {
                let vertex = next_id("vertex")?;
                let mut features = Vec::new();
                for t in toks.by_ref() {
                    features.push(t.parse().map_err(|e| err(format!("bad feature: {e}")))?);
                }
                if let Some(d0) = d0 {
                    if features.len() != d0 {
                        return Err(StreamError::DimensionMismatch {
                            path: pstr.clone(),
                            line: lineno,
                            got: features.len(),
                            expected: d0,
                        });
                    }
                }
                if kind == "VA" {
                    events.push(UpdateEvent::VertexAdd { vertex, features });
                } else {
                    events.push(UpdateEvent::FeatureUpdate { vertex, features });
                }
            }
            other => return Err(err(format!("unknown event kind `{other}`"))),
        }
    }
    Ok(events)
}

/// Writes events in the trace format.
pub fn write_trace(events: &[UpdateEvent], path: &Path) -> Result<(), StreamError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for e in events {
        match e {
            UpdateEvent::EdgeAdd { src, dst, weight } => {
                if *weight == 1.0 {
                    writeln!(w, "EA {} {}", src.0, dst.0)?;
                } else {
                    writeln!(w, "EA {} {} {}", src.0, dst.0, weight)?;
                }
            }
            UpdateEvent::EdgeDel { src, dst } => writeln!(w, "ED {} {}", src.0, dst.0)?,
            UpdateEvent::VertexAdd { vertex, features } => {
                write!(w, "VA {}", vertex.0)?;
                for f in features {
                    write!(w, " {f}")?;
                }
                writeln!(w)?;
            }
            UpdateEvent::VertexDel { vertex } => writeln!(w, "VD {}", vertex.0)?,
            UpdateEvent::FeatureUpdate { vertex, features } => {
                write!(w, "FU {}", vertex.0)?;
                for f in features {
                    write!(w, " {f}")?;
                }
                writeln!(w)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Splits events into fixed-size batches, preserving order; the final batch
/// may be short.
pub fn batches(events: &[UpdateEvent], bs: usize) -> impl Iterator<Item = &[UpdateEvent]> {
    assert!(bs >= 1, "batch size must be at least 1");
    events.chunks(bs)
}

/// How edge endpoints are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointSampling {
    Uniform,
    /// Sinks drawn proportionally to current in-degree plus one.
    DegreeProportional,
}

/// Synthetic trace configuration. Probabilities must sum to one.
#[derive(Debug, Clone)]
pub struct TraceConfig {
    pub n_events: usize,
    pub p_edge_add: f64,
    pub p_edge_del: f64,
    pub p_vertex_add: f64,
    pub p_vertex_del: f64,
    pub p_feature_update: f64,
    pub seed: u64,
    /// Feature values drawn uniformly from this range.
    pub feature_range: (f64, f64),
    /// Edge weights drawn uniformly from this range ((1.0, 1.0) = unit).
    pub weight_range: (f64, f64),
    pub sampling: EndpointSampling,
}

impl Default for TraceConfig {
    fn default() -> Self {
        // Additions outnumber deletions so the graph trends upward; the mix
        // is a documented default, fully overridable per run.
        TraceConfig {
            n_events: 1000,
            p_edge_add: 0.55,
            p_edge_del: 0.05,
            p_vertex_add: 0.15,
            p_vertex_del: 0.02,
            p_feature_update: 0.23,
            seed: 1,
            feature_range: (-1.0, 1.0),
            weight_range: (1.0, 1.0),
            sampling: EndpointSampling::Uniform,
        }
    }
}

impl TraceConfig {
    fn probabilities(&self) -> [f64; 5] {
        [
            self.p_edge_add,
            self.p_edge_del,
            self.p_vertex_add,
            self.p_vertex_del,
            self.p_feature_update,
        ]
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        let ps = self.probabilities();
        if ps.iter().any(|&p| p < 0.0) {
            return Err(StreamError::InfeasibleConfig("negative probability".into()));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(StreamError::InfeasibleConfig(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Parses the `key = value` config format; unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<TraceConfig, StreamError> {
        let mut cfg = TraceConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| StreamError::Parse {
                path: "<config>".into(),
                line: idx + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let fval = || -> Result<f64, StreamError> {
                value.parse().map_err(|e| err(format!("bad number: {e}")))
            };
            match key {
                "n_events" => {
                    cfg.n_events = value.parse().map_err(|e| err(format!("bad count: {e}")))?
                }
                "p_edge_add" => cfg.p_edge_add = fval()?,
                "p_edge_del" => cfg.p_edge_del = fval()?,
                "p_vertex_add" => cfg.p_vertex_add = fval()?,
                "p_vertex_del" => cfg.p_vertex_del = fval()?,
                "p_feature_update" => cfg.p_feature_update = fval()?,
                "seed" => cfg.seed = value.parse().map_err(|e| err(format!("bad seed: {e}")))?,
                "feature_min" => cfg.feature_range.0 = fval()?,
                "feature_max" => cfg.feature_range.1 = fval()?,
                "weight_min" => cfg.weight_range.0 = fval()?,
                "weight_max" => cfg.weight_range.1 = fval()?,
                "sampling" => {
                    cfg.sampling = match value {
                        "uniform" => EndpointSampling::Uniform,
                        "degree_proportional" => EndpointSampling::DegreeProportional,
                        other => return Err(err(format!("unknown sampling `{other}`"))),
                    }
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Live structural view the generator maintains while emitting events.
struct LiveState {
    vertices: Vec<VertexId>,
    vertex_pos: HashMap<VertexId, usize>,
    edges: Vec<(VertexId, VertexId)>,
    edge_pos: HashMap<(VertexId, VertexId), usize>,
    in_degree: HashMap<VertexId, usize>,
    next_id: u64,
}

impl LiveState {
    fn from_graph(g: &DynamicGraph) -> Self {
        let mut s = LiveState {
            vertices: Vec::new(),
            vertex_pos: HashMap::new(),
            edges: Vec::new(),
            edge_pos: HashMap::new(),
            in_degree: HashMap::new(),
            next_id: g.next_id().0,
        };
        for v in g.vertices() {
            s.add_vertex(v);
            s.in_degree.insert(v, g.in_degree(v));
        }
        for u in g.vertices() {
            for &(v, _) in g.out_neighbors(u) {
                s.add_edge(u, v);
            }
        }
        s
    }

    fn add_vertex(&mut self, v: VertexId) {
        self.vertex_pos.insert(v, self.vertices.len());
        self.vertices.push(v);
        self.in_degree.entry(v).or_insert(0);
        self.next_id = self.next_id.max(v.0 + 1);
    }

    fn remove_vertex(&mut self, v: VertexId) {
        let pos = self.vertex_pos.remove(&v).expect("live vertex");
        self.vertices.swap_remove(pos);
        if pos < self.vertices.len() {
            self.vertex_pos.insert(self.vertices[pos], pos);
        }
        self.in_degree.remove(&v);
    }

    fn add_edge(&mut self, u: VertexId, v: VertexId) {
        self.edge_pos.insert((u, v), self.edges.len());
        self.edges.push((u, v));
        *self.in_degree.entry(v).or_insert(0) += 1;
    }

    fn remove_edge(&mut self, u: VertexId, v: VertexId) {
        let pos = self.edge_pos.remove(&(u, v)).expect("live edge");
        self.edges.swap_remove(pos);
        if pos < self.edges.len() {
            self.edge_pos.insert(self.edges[pos], pos);
        }
        if let Some(d) = self.in_degree.get_mut(&v) {
            *d -= 1;
        }
    }

    fn incident_edges(&self, v: VertexId) -> Vec<(VertexId, VertexId)> {
        self.edges.iter().copied().filter(|&(a, b)| a == v || b == v).collect()
    }
}

/// Generates a deterministic event stream over the live state of `g0`.
/// Momentarily infeasible kinds (deleting from an edgeless graph) are
/// redrawn; a configuration that can never make progress is rejected.
pub fn generate_trace(
    cfg: &TraceConfig,
    g0: &DynamicGraph,
) -> Result<Vec<UpdateEvent>, StreamError> {
    cfg.validate()?;
    if g0.vertex_count() == 0 {
        return Err(StreamError::InfeasibleConfig("initial graph is empty".into()));
    }
    if cfg.p_edge_del > 0.0 && g0.edge_count() == 0 && cfg.p_edge_add == 0.0 {
        return Err(StreamError::InfeasibleConfig(
            "edge deletions requested on an edgeless graph with no edge additions".into(),
        ));
    }
    let d0 = g0.feature_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut live = LiveState::from_graph(g0);
    let mut events = Vec::with_capacity(cfg.n_events);
    let ps = cfg.probabilities();
    let draw_features = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d0).map(|_| rng.gen_range(cfg.feature_range.0..=cfg.feature_range.1)).collect()
    };

    while events.len() < cfg.n_events {
        let mut roll = rng.gen_range(0.0..1.0);
        let mut kind = 4usize;
        for (i, &p) in ps.iter().enumerate() {
            if roll < p {
                kind = i;
                break;
            }
            roll -= p;
        }
        match kind {
            0 => {
                // Edge add: draw a pair without an existing edge.
                if live.vertices.is_empty() {
                    continue;
                }
                let mut placed = false;
                for _ in 0..64 {
                    let src = *live.vertices.choose(&mut rng).expect("non-empty");
                    let dst = match cfg.sampling {
                        EndpointSampling::Uniform => {
                            *live.vertices.choose(&mut rng).expect("non-empty")
                        }
                        EndpointSampling::DegreeProportional => {
                            // Weight each vertex by in-degree + 1.
                            let total: usize =
                                live.vertices.iter().map(|v| live.in_degree[v] + 1).sum();
                            let mut pick = rng.gen_range(0..total);
                            let mut chosen = live.vertices[0];
                            for &v in &live.vertices {
                                let w = live.in_degree[&v] + 1;
                                if pick < w {
                                    chosen = v;
                                    break;
                                }
                                pick -= w;
                            }
                            chosen
                        }
                    };
                    if live.edge_pos.contains_key(&(src, dst)) {
                        continue;
                    }
                    let weight = if cfg.weight_range.0 == cfg.weight_range.1 {
                        cfg.weight_range.0
                    } else {
                        rng.gen_range(cfg.weight_range.0..=cfg.weight_range.1)
                    };
                    live.add_edge(src, dst);
                    events.push(UpdateEvent::EdgeAdd { src, dst, weight });
                    placed = true;
                    break;
                }
                if !placed {
                    continue; // dense pocket; redraw the kind
                }
            }
            1 => {
                if live.edges.is_empty() {
                    continue;
                }
                let &(src, dst) = live.edges.choose(&mut rng).expect("non-empty");
                live.remove_edge(src, dst);
                events.push(UpdateEvent::EdgeDel { src, dst });
            }
            2 => {
                let vertex = VertexId(live.next_id);
                live.add_vertex(vertex);
                events.push(UpdateEvent::VertexAdd { vertex, features: draw_features(&mut rng) });
            }
            3 => {
                if live.vertices.len() <= 1 {
                    continue;
                }
                let vertex = *live.vertices.choose(&mut rng).expect("non-empty");
                for (a, b) in live.incident_edges(vertex) {
                    live.remove_edge(a, b);
                }
                live.remove_vertex(vertex);
                events.push(UpdateEvent::VertexDel { vertex });
            }
            _ => {
                if live.vertices.is_empty() {
                    continue;
                }
                let vertex = *live.vertices.choose(&mut rng).expect("non-empty");
                events.push(UpdateEvent::FeatureUpdate { vertex, features: draw_features(&mut rng) });
            }
        }
    }
    Ok(events)
}

/// Removes a random share of vertices (dropping incident edges), then
/// removes additional random edges until the edge count also reaches the
/// target share. Vertices first, then edges; survivors keep their ids.
pub fn shrink_snapshot(
    g: &DynamicGraph,
    keep_fraction: f64,
    seed: u64,
) -> Result<DynamicGraph, StreamError> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(StreamError::InfeasibleConfig("keep fraction outside [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = g.clone();
    let target_v = (g.vertex_count() as f64 * keep_fraction).round() as usize;
    let target_e = (g.edge_count() as f64 * keep_fraction).round() as usize;

    let mut vertices = out.vertices();
    vertices.shuffle(&mut rng);
    for &v in vertices.iter().take(g.vertex_count().saturating_sub(target_v)) {
        out.apply_event(&UpdateEvent::VertexDel { vertex: v })
            .expect("deleting an existing vertex");
    }
    let mut edges: Vec<(VertexId, VertexId)> = Vec::new();
    for u in out.vertices() {
        for &(v, _) in out.out_neighbors(u) {
            edges.push((u, v));
        }
    }
    edges.shuffle(&mut rng);
    for &(u, v) in edges.iter().take(out.edge_count().saturating_sub(target_e)) {
        out.apply_event(&UpdateEvent::EdgeDel { src: u, dst: v })
            .expect("deleting an existing edge");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_graph() -> DynamicGraph {
        let mut g = DynamicGraph::new(2);
        for id in 0..10 {
            g.add_vertex(VertexId(id), vec![0.1, 0.2]).unwrap();
        }
        for id in 0..9 {
            g.add_edge(VertexId(id), VertexId(id + 1), 1.0).unwrap();
        }
        g
    }

    #[test]
    fn parse_edge_add_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, "# comment\nEA 3 7 1.0\nED 3 7\nVD 5\n").unwrap();
        let events = parse_trace(&path, 2).unwrap();
        assert_eq!(
            events[0],
            UpdateEvent::EdgeAdd { src: VertexId(3), dst: VertexId(7), weight: 1.0 }
        );
        assert_eq!(events[1], UpdateEvent::EdgeDel { src: VertexId(3), dst: VertexId(7) });
        assert_eq!(events[2], UpdateEvent::VertexDel { vertex: VertexId(5) });
    }

    #[test]
    fn feature_arity_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, "FU 5 0.1 0.2\n").unwrap();
        let err = parse_trace(&path, 3).unwrap_err();
        assert!(matches!(err, StreamError::DimensionMismatch { got: 2, expected: 3, .. }));
    }

    #[test]
    fn generate_write_parse_round_trip() {
        let g = small_graph();
        let cfg = TraceConfig { n_events: 200, seed: 77, ..Default::default() };
        let events = generate_trace(&cfg, &g).unwrap();
        assert_eq!(events.len(), 200);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        write_trace(&events, &path).unwrap();
        let back = parse_trace(&path, 2).unwrap();
        assert_eq!(events, back);
    }

    #[test]
    fn generated_trace_replays_without_structural_errors() {
        let g = small_graph();
        let cfg = TraceConfig { n_events: 2000, seed: 3, ..Default::default() };
        let events = generate_trace(&cfg, &g).unwrap();
        let mut replay = g.clone();
        for e in &events {
            replay.apply_event(e).expect("generated traces are valid");
        }
        replay.check_mirror_invariant().unwrap();
        // Additions outnumber deletions in the default mix.
        assert!(replay.vertex_count() >= g.vertex_count());
        assert!(replay.edge_count() >= g.edge_count());
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let g = small_graph();
        let cfg = TraceConfig { n_events: 300, seed: 9, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.txt");
        let p2 = dir.path().join("b.txt");
        write_trace(&generate_trace(&cfg, &g).unwrap(), &p1).unwrap();
        write_trace(&generate_trace(&cfg, &g).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn degenerate_mix_emits_only_edge_adds() {
        let g = small_graph();
        let cfg = TraceConfig {
            n_events: 5,
            p_edge_add: 1.0,
            p_edge_del: 0.0,
            p_vertex_add: 0.0,
            p_vertex_del: 0.0,
            p_feature_update: 0.0,
            ..Default::default()
        };
        let events = generate_trace(&cfg, &g).unwrap();
        assert!(events.iter().all(|e| matches!(e, UpdateEvent::EdgeAdd { .. })));
    }

    #[test]
    fn empirical_kind_frequencies_match_config() {
        let mut g = DynamicGraph::new(1);
        for id in 0..200 {
            g.add_vertex(VertexId(id), vec![0.0]).unwrap();
        }
        for id in 0..199 {
            g.add_edge(VertexId(id), VertexId(id + 1), 1.0).unwrap();
        }
        let cfg = TraceConfig { n_events: 100_000, seed: 5, ..Default::default() };
        let events = generate_trace(&cfg, &g).unwrap();
        let mut counts = [0usize; 5];
        for e in &events {
            let k = match e {
                UpdateEvent::EdgeAdd { .. } => 0,
                UpdateEvent::EdgeDel { .. } => 1,
                UpdateEvent::VertexAdd { .. } => 2,
                UpdateEvent::VertexDel { .. } => 3,
                UpdateEvent::FeatureUpdate { .. } => 4,
            };
            counts[k] += 1;
        }
        let expected = [0.55, 0.05, 0.15, 0.02, 0.23];
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / events.len() as f64;
            assert!(
                (freq - expected[i]).abs() <= 0.01,
                "kind {i}: frequency {freq} vs expected {}",
                expected[i]
            );
        }
    }

    #[test]
    fn batching_preserves_order_and_short_tail() {
        let g = small_graph();
        let cfg = TraceConfig { n_events: 25, seed: 2, ..Default::default() };
        let events = generate_trace(&cfg, &g).unwrap();
        let sizes: Vec<usize> = batches(&events, 10).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![10, 10, 5]);
        let rejoined: Vec<UpdateEvent> =
            batches(&events, 10).flat_map(|b| b.iter().cloned()).collect();
        assert_eq!(rejoined, events);
        assert_eq!(batches(&events, 1).count(), 25);
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let mut g = DynamicGraph::new(1);
        g.add_vertex(VertexId(0), vec![0.0]).unwrap();
        let cfg = TraceConfig {
            n_events: 10,
            p_edge_add: 0.0,
            p_edge_del: 1.0,
            p_vertex_add: 0.0,
            p_vertex_del: 0.0,
            p_feature_update: 0.0,
            ..Default::default()
        };
        assert!(matches!(generate_trace(&cfg, &g), Err(StreamError::InfeasibleConfig(_))));
    }

    #[test]
    fn config_kv_round_trip() {
        let text = "n_events = 50\np_edge_add = 0.5\np_edge_del = 0.1\np_vertex_add = 0.2\n\
                    p_vertex_del = 0.05\np_feature_update = 0.15\nseed = 42\nsampling = uniform\n";
        let cfg = TraceConfig::from_kv(text).unwrap();
        assert_eq!(cfg.n_events, 50);
        assert_eq!(cfg.seed, 42);
        assert!(TraceConfig::from_kv("p_edge_add = 0.9\n").is_err()); // sums to != 1
        assert!(TraceConfig::from_kv("bogus = 1\n").is_err());
    }

    #[test]
    fn shrink_keeps_roughly_the_requested_share() {
        let mut g = DynamicGraph::new(1);
        for id in 0..100 {
            g.add_vertex(VertexId(id), vec![0.0]).unwrap();
        }
        for a in 0..100u64 {
            for b in 0..100u64 {
                if a != b && (a + b) % 3 == 0 {
                    g.add_edge(VertexId(a), VertexId(b), 1.0).unwrap();
                }
            }
        }
        let shrunk = shrink_snapshot(&g, 0.8, 7).unwrap();
        assert_eq!(shrunk.vertex_count(), 80);
        assert!(shrunk.edge_count() <= (g.edge_count() as f64 * 0.8).round() as usize);
        shrunk.check_mirror_invariant().unwrap();
    }
}
