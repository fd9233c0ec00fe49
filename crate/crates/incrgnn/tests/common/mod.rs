//! Shared fixtures and comparison helpers for integration tests.
// Not every test binary uses every helper.
#![allow(dead_code)]

use std::sync::Arc;

use incrgnn::graph::{DynamicGraph, VertexId};
use incrgnn::model::{
    generate_model, Activation, Aggregator, LayerSpec, Matrix, ModelGenConfig, ModelSpec,
};
use incrgnn::num::{Deviation, Real, Tolerance};
use incrgnn::store::EmbeddingStore;
use incrgnn::stream::{generate_trace, TraceConfig};
use incrgnn::UpdateEvent;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn v(id: u64) -> VertexId {
    VertexId(id)
}

/// Five-vertex cascade fixture: A=0, B=1, C=2, D=3, E=4 with edges A->B,
/// A->D, B->A, B->C, C->D, D->A, E->C and scalar features 1..5. Adding
/// C->A dirties only A at hop 1 and exactly {A, B, D} at hop 2.
pub fn cascade_fixture() -> DynamicGraph {
    let mut g = DynamicGraph::new(1);
    for id in 0..5 {
        g.add_vertex(v(id), vec![(id + 1) as f64]).unwrap();
    }
    for (a, b) in [(0, 1), (0, 3), (1, 0), (1, 2), (2, 3), (3, 0), (4, 2)] {
        g.add_edge(v(a), v(b), 1.0).unwrap();
    }
    g
}

/// Stack of identity layers over scalar embeddings (sum aggregator).
pub fn identity_sum_model<T: Real>(layers: usize) -> Arc<ModelSpec<T>> {
    let specs = (0..layers)
        .map(|_| {
            LayerSpec::new(
                1,
                1,
                Matrix::identity(1),
                None,
                vec![T::zero()],
                T::zero(),
                Activation::Identity,
                None,
            )
            .unwrap()
        })
        .collect();
    Arc::new(ModelSpec::new(Aggregator::Sum, specs).unwrap())
}

/// Random directed graph with `n` vertices, about `edges` edges, `d0`
/// features drawn uniformly from [-1, 1].
pub fn random_graph(n: u64, edges: usize, d0: usize, seed: u64) -> DynamicGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DynamicGraph::new(d0);
    for id in 0..n {
        let f: Vec<f64> = (0..d0).map(|_| rng.gen_range(-1.0..1.0)).collect();
        g.add_vertex(v(id), f).unwrap();
    }
    let mut added = 0;
    let mut tries = 0;
    while added < edges && tries < edges * 20 {
        tries += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if !g.contains_edge(v(a), v(b)) {
            g.add_edge(v(a), v(b), rng.gen_range(0.5..1.5)).unwrap();
            added += 1;
        }
    }
    g
}

pub fn model_for<T: Real>(
    aggregator: Aggregator,
    dims: Vec<usize>,
    seed: u64,
) -> Arc<ModelSpec<T>> {
    let cfg = ModelGenConfig::plain(dims, aggregator, seed);
    Arc::new(generate_model(&cfg).unwrap())
}

pub fn mixed_trace(g: &DynamicGraph, n_events: usize, seed: u64) -> Vec<UpdateEvent> {
    let cfg = TraceConfig { n_events, seed, ..Default::default() };
    generate_trace(&cfg, g).unwrap()
}

/// Largest deviation between two stores at one layer; panics when the two
/// stores disagree on which vertices exist.
pub fn layer_deviation<T: Real>(
    a: &EmbeddingStore<T>,
    b: &EmbeddingStore<T>,
    layer: usize,
) -> Deviation {
    let va = a.vertices();
    let vb = b.vertices();
    assert_eq!(va, vb, "stores cover different vertex sets");
    let mut dev = Deviation::default();
    for &u in &va {
        dev.record_slices(a.h(layer, u).unwrap(), b.h(layer, u).unwrap());
    }
    dev
}

pub fn assert_store_close<T: Real>(
    a: &EmbeddingStore<T>,
    b: &EmbeddingStore<T>,
    layer: usize,
    tol: Tolerance,
    context: &str,
) {
    let va = a.vertices();
    assert_eq!(va, b.vertices(), "{context}: vertex sets differ");
    for &u in &va {
        let ra = a.h(layer, u).unwrap();
        let rb = b.h(layer, u).unwrap();
        assert!(
            tol.check_rows(ra, rb),
            "{context}: vertex {u} layer {layer} differs: {ra:?} vs {rb:?}"
        );
    }
}

/// Community-structured event stream: edges are mostly intra-community and
/// new vertices arrive attached to an existing community member (their first
/// edge), so community-aligned placement keeps cuts low. Returns the initial
/// graph and the stream.
pub fn planted_stream(
    communities: u64,
    per_community: u64,
    n_events: usize,
    p_intra: f64,
    seed: u64,
) -> (DynamicGraph, Vec<UpdateEvent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DynamicGraph::new(1);
    let n0 = communities * per_community;
    for id in 0..n0 {
        g.add_vertex(v(id), vec![0.1]).unwrap();
    }
    // Sparse intra-community scaffold so each community is connected.
    for c in 0..communities {
        let base = c * per_community;
        for i in 0..per_community {
            let a = base + i;
            let b = base + (i * 7 + 1) % per_community;
            if a != b && !g.contains_edge(v(a), v(b)) {
                g.add_edge(v(a), v(b), 1.0).unwrap();
            }
        }
    }
    let mut members: Vec<Vec<u64>> = (0..communities)
        .map(|c| ((c * per_community)..((c + 1) * per_community)).collect())
        .collect();
    let mut next_id = n0;
    // Edge list with a position index so deletions sample in O(1).
    let mut edges: Vec<(u64, u64)> = Vec::new();
    let mut edge_pos: std::collections::HashMap<(u64, u64), usize> =
        std::collections::HashMap::new();
    for u in g.vertices() {
        for &(w, _) in g.out_neighbors(u) {
            edge_pos.insert((u.0, w.0), edges.len());
            edges.push((u.0, w.0));
        }
    }
    let add_edge = |edges: &mut Vec<(u64, u64)>,
                        edge_pos: &mut std::collections::HashMap<(u64, u64), usize>,
                        e: (u64, u64)| {
        edge_pos.insert(e, edges.len());
        edges.push(e);
    };
    let mut events = Vec::with_capacity(n_events);
    while events.len() < n_events {
        let roll: f64 = rng.gen_range(0.0..1.0);
        let c = rng.gen_range(0..communities) as usize;
        if roll < 0.25 {
            // A new vertex joins community c through one edge; the source
            // does not exist yet, exercising placement.
            let dst = members[c][rng.gen_range(0..members[c].len())];
            let src = next_id;
            next_id += 1;
            members[c].push(src);
            add_edge(&mut edges, &mut edge_pos, (src, dst));
            events.push(UpdateEvent::EdgeAdd { src: v(src), dst: v(dst), weight: 1.0 });
        } else if roll < 0.9 {
            // Edge between existing vertices, usually intra-community.
            let intra = rng.gen_range(0.0..1.0) < p_intra;
            let src = members[c][rng.gen_range(0..members[c].len())];
            let cc = if intra { c } else { (c + 1) % communities as usize };
            let dst = members[cc][rng.gen_range(0..members[cc].len())];
            if src == dst || edge_pos.contains_key(&(src, dst)) {
                continue;
            }
            add_edge(&mut edges, &mut edge_pos, (src, dst));
            events.push(UpdateEvent::EdgeAdd { src: v(src), dst: v(dst), weight: 1.0 });
        } else {
            if edges.is_empty() {
                continue;
            }
            let idx = rng.gen_range(0..edges.len());
            let (src, dst) = edges[idx];
            edges.swap_remove(idx);
            edge_pos.remove(&(src, dst));
            if idx < edges.len() {
                edge_pos.insert(edges[idx], idx);
            }
            events.push(UpdateEvent::EdgeDel { src: v(src), dst: v(dst) });
        }
    }
    (g, events)
}

/// Directed graph where every vertex has exactly `delta` in-neighbors drawn
/// at random (a regular in-degree profile).
pub fn regular_in_degree_graph(n: u64, delta: usize, d0: usize, seed: u64) -> DynamicGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DynamicGraph::new(d0);
    for id in 0..n {
        let f: Vec<f64> = (0..d0).map(|_| rng.gen_range(-1.0..1.0)).collect();
        g.add_vertex(v(id), f).unwrap();
    }
    for sink in 0..n {
        let mut chosen = std::collections::HashSet::new();
        while chosen.len() < delta {
            let src = rng.gen_range(0..n);
            if src != sink && chosen.insert(src) {
                g.add_edge(v(src), v(sink), 1.0).unwrap();
            }
        }
    }
    g
}
