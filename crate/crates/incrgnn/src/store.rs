//! Per-layer embeddings plus per-vertex aggregate summaries.
//!
//! The store keeps H^0..H^L and, for each layer, the pre-update aggregate
//! state the incremental engine patches. Embeddings are always derivable
//! from the summaries: H^l[v] = act(update(H^{l-1}[v], value(S^l[v]))).
//! Deltas are applied to the stored aggregate rather than to post-activation
//! embeddings so nonlinear activations stay exact.

use std::collections::HashMap;
use std::io::Write as IoWrite;
use std::path::Path;

use thiserror::Error;

use crate::agg::AggregateSummary;
use crate::graph::{DynamicGraph, GraphError, VertexId};
use crate::model::{Aggregator, ModelError, ModelSpec};
use crate::num::Real;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("snapshot file error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Embedding matrices H^0..H^L and summaries S^1..S^L, keyed by vertex.
#[derive(Debug, Clone)]
pub struct EmbeddingStore<T> {
    h: Vec<HashMap<VertexId, Vec<T>>>,
    s: Vec<HashMap<VertexId, AggregateSummary<T>>>,
}

impl<T: Real> EmbeddingStore<T> {
    pub fn empty(layer_count: usize) -> Self {
        EmbeddingStore {
            h: vec![HashMap::new(); layer_count + 1],
            s: vec![HashMap::new(); layer_count],
        }
    }

    pub fn layer_count(&self) -> usize {
        self.s.len()
    }

    pub fn h(&self, l: usize, v: VertexId) -> Option<&[T]> {
        self.h[l].get(&v).map(|x| x.as_slice())
    }

    pub fn set_h(&mut self, l: usize, v: VertexId, value: Vec<T>) {
        self.h[l].insert(v, value);
    }

    pub fn summary(&self, l: usize, v: VertexId) -> Option<&AggregateSummary<T>> {
        self.s[l - 1].get(&v)
    }

    pub fn summary_mut(&mut self, l: usize, v: VertexId) -> Option<&mut AggregateSummary<T>> {
        self.s[l - 1].get_mut(&v)
    }

    pub fn set_summary(&mut self, l: usize, v: VertexId, s: AggregateSummary<T>) {
        self.s[l - 1].insert(v, s);
    }

    /// Vertices present at layer 0, ascending.
    pub fn vertices(&self) -> Vec<VertexId> {
        let mut ids: Vec<VertexId> = self.h[0].keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn remove_vertex(&mut self, v: VertexId) {
        for layer in &mut self.h {
            layer.remove(&v);
        }
        for layer in &mut self.s {
            layer.remove(&v);
        }
    }

    /// Registers a vertex with the given features; upper layers start from
    /// the empty aggregate (the vertex has no in-edges yet).
    pub fn init_vertex(
        &mut self,
        v: VertexId,
        features: Vec<T>,
        model: &ModelSpec<T>,
    ) -> Result<(), StoreError> {
        self.h[0].insert(v, features);
        for l in 1..=model.layer_count() {
            let layer = model.layer(l);
            let empty = AggregateSummary::empty(model.aggregator, layer.d_in, layer.d_out);
            let h_prev = self.h[l - 1].get(&v).expect("previous layer row just written");
            let h = model.layer_update(h_prev, &empty.value(), l)?;
            self.h[l].insert(v, h);
            self.s[l - 1].insert(v, empty);
        }
        Ok(())
    }
}

/// Rebuilds the layer-`l` aggregate of `v` from scratch over all current
/// in-neighbors, reading H^{l-1}. `overlay` supplies embeddings for
/// neighbors the store does not hold (remote vertices in partitioned runs).
pub fn recompute_aggregate<T: Real>(
    g: &DynamicGraph,
    store: &EmbeddingStore<T>,
    model: &ModelSpec<T>,
    v: VertexId,
    l: usize,
    overlay: &HashMap<VertexId, Vec<T>>,
) -> Result<AggregateSummary<T>, StoreError> {
    let layer = model.layer(l);
    let neighbor_h = |u: VertexId| -> Result<&[T], StoreError> {
        if let Some(h) = store.h(l - 1, u) {
            Ok(h)
        } else if let Some(h) = overlay.get(&u) {
            Ok(h.as_slice())
        } else {
            Err(StoreError::Graph(GraphError::MissingVertex(u)))
        }
    };
    let in_edges = g.in_neighbors(v);
    match model.aggregator {
        Aggregator::Sum => {
            let mut acc = vec![T::zero(); layer.d_in];
            for &(u, _) in in_edges {
                for (a, &x) in acc.iter_mut().zip(neighbor_h(u)?) {
                    *a += x;
                }
            }
            Ok(AggregateSummary::Sum(acc))
        }
        Aggregator::WeightedSum => {
            let mut acc = vec![T::zero(); layer.d_in];
            for &(u, w) in in_edges {
                let w = T::from_f64(w);
                for (a, &x) in acc.iter_mut().zip(neighbor_h(u)?) {
                    *a += w * x;
                }
            }
            Ok(AggregateSummary::WeightedSum(acc))
        }
        Aggregator::Mean => {
            let mut acc = vec![T::zero(); layer.d_in];
            for &(u, _) in in_edges {
                for (a, &x) in acc.iter_mut().zip(neighbor_h(u)?) {
                    *a += x;
                }
            }
            Ok(AggregateSummary::Mean { sum: acc, count: in_edges.len() as i64 })
        }
        Aggregator::Max | Aggregator::Min => {
            let maxing = model.aggregator == Aggregator::Max;
            let mut acc: Option<Vec<T>> = None;
            for &(u, _) in in_edges {
                let h = neighbor_h(u)?;
                match &mut acc {
                    None => acc = Some(h.to_vec()),
                    Some(cur) => {
                        for (a, &x) in cur.iter_mut().zip(h) {
                            if (maxing && x > *a) || (!maxing && x < *a) {
                                *a = x;
                            }
                        }
                    }
                }
            }
            Ok(AggregateSummary::Extremum {
                vec: acc.unwrap_or_else(|| vec![T::zero(); layer.d_in]),
                count: in_edges.len() as i64,
            })
        }
        Aggregator::Attention => {
            let attn = layer.attn.as_ref().expect("attention model has parameters");
            let sink_h = store
                .h(l - 1, v)
                .ok_or(StoreError::Graph(GraphError::MissingVertex(v)))?;
            let sink_t = layer.w_neigh.vec_mul(sink_h);
            let mut numer = vec![T::zero(); layer.d_out];
            let mut denom = T::zero();
            for &(u, _) in in_edges {
                let src_t = layer.w_neigh.vec_mul(neighbor_h(u)?);
                let e = attn.score(&src_t, &sink_t).exp();
                for (a, &x) in numer.iter_mut().zip(&src_t) {
                    *a += e * x;
                }
                denom += e;
            }
            Ok(AggregateSummary::Attention { numer, denom })
        }
    }
}

/// Multiply-add count of one from-scratch aggregate rebuild.
pub fn recompute_ops<T: Real>(model: &ModelSpec<T>, l: usize, in_degree: usize) -> u64 {
    let layer = model.layer(l);
    match model.aggregator {
        Aggregator::Attention => {
            let mm = (layer.d_in * layer.d_out) as u64;
            let per_edge = mm + (2 * layer.d_out) as u64 + layer.d_out as u64;
            mm + in_degree as u64 * per_edge
        }
        _ => (in_degree * layer.d_in) as u64,
    }
}

/// Layer-wise forward pass over the whole graph: H^0 from features, then for
/// each layer every vertex's summary and embedding, strictly layer by layer
/// in ascending vertex order. Deterministic: identical inputs produce
/// bit-identical stores.
pub fn bootstrap_forward<T: Real>(
    g: &DynamicGraph,
    model: &ModelSpec<T>,
) -> Result<EmbeddingStore<T>, StoreError> {
    bootstrap_forward_timed(g, model).map(|(store, _)| store)
}

/// As [`bootstrap_forward`], also reporting wall time per layer in ms.
pub fn bootstrap_forward_timed<T: Real>(
    g: &DynamicGraph,
    model: &ModelSpec<T>,
) -> Result<(EmbeddingStore<T>, Vec<f64>), StoreError> {
    let ell = model.layer_count();
    let mut store = EmbeddingStore::empty(ell);
    let vertices = g.vertices();
    for &v in &vertices {
        let f = g.features_of(v).expect("listed vertex has features");
        if f.len() != model.d0() {
            return Err(StoreError::Graph(GraphError::DimensionMismatch {
                vertex: v,
                got: f.len(),
                expected: model.d0(),
            }));
        }
        store.set_h(0, v, f.iter().map(|&x| T::from_f64(x)).collect());
    }
    let overlay = HashMap::new();
    let mut layer_ms = Vec::with_capacity(ell);
    for l in 1..=ell {
        let t0 = std::time::Instant::now();
        for &v in &vertices {
            let summary = recompute_aggregate(g, &store, model, v, l, &overlay)?;
            let h_prev = store.h(l - 1, v).expect("previous layer complete");
            let h = model.layer_update(h_prev, &summary.value(), l)?;
            store.set_h(l, v, h);
            store.set_summary(l, v, summary);
        }
        layer_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    Ok((store, layer_ms))
}

/// Rebuilds all summaries for the current graph, reusing stored embeddings.
/// Used when loading a snapshot, which persists only the H matrices.
pub fn rebuild_summaries<T: Real>(
    g: &DynamicGraph,
    store: &mut EmbeddingStore<T>,
    model: &ModelSpec<T>,
) -> Result<(), StoreError> {
    let overlay = HashMap::new();
    for l in 1..=model.layer_count() {
        for v in store.vertices() {
            let summary = recompute_aggregate(g, store, model, v, l, &overlay)?;
            store.set_summary(l, v, summary);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Embedding snapshot file.
// ---------------------------------------------------------------------------

const SNAP_MAGIC: &[u8; 4] = b"EMBS";
const SNAP_VERSION: u16 = 1;

/// Binary layout (little-endian):
///
/// ```text
/// magic "EMBS" | u16 version | u8 scalar width (4|8) | u32 L | u64 n
/// u64 ids[n] (ascending)
/// u32 dims[L+1]
/// per layer 0..=L: scalar h[n][d_l] (row order follows ids)
/// ```
pub fn write_snapshot<T: Real>(store: &EmbeddingStore<T>, path: &Path) -> Result<(), StoreError> {
    let ids = store.vertices();
    let ell = store.layer_count();
    let width: u8 = if T::LABEL == "f32" { 4 } else { 8 };
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(SNAP_MAGIC)?;
    w.write_all(&SNAP_VERSION.to_le_bytes())?;
    w.write_all(&[width])?;
    w.write_all(&(ell as u32).to_le_bytes())?;
    w.write_all(&(ids.len() as u64).to_le_bytes())?;
    for v in &ids {
        w.write_all(&v.0.to_le_bytes())?;
    }
    let mut dims = Vec::with_capacity(ell + 1);
    for l in 0..=ell {
        let d = ids
            .first()
            .and_then(|&v| store.h(l, v))
            .map(|row| row.len())
            .unwrap_or(0);
        dims.push(d);
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for l in 0..=ell {
        for &v in &ids {
            let row = store
                .h(l, v)
                .ok_or_else(|| StoreError::Format(format!("missing row for {v} at layer {l}")))?;
            if row.len() != dims[l] {
                return Err(StoreError::Format("ragged embedding rows".into()));
            }
            for x in row {
                if width == 4 {
                    w.write_all(&(x.as_f64() as f32).to_le_bytes())?;
                } else {
                    w.write_all(&x.as_f64().to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`]. The stored scalar width
/// must match `T`: precision is a property of the run, not a conversion.
pub fn read_snapshot<T: Real>(path: &Path) -> Result<EmbeddingStore<T>, StoreError> {
    let data = std::fs::read(path)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], StoreError> {
        if *pos + n > data.len() {
            return Err(StoreError::Format("unexpected end of snapshot".into()));
        }
        let s = &data[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != SNAP_MAGIC {
        return Err(StoreError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != SNAP_VERSION {
        return Err(StoreError::Format("unsupported snapshot version".into()));
    }
    let width = take(&mut pos, 1)?[0];
    let expected_width: u8 = if T::LABEL == "f32" { 4 } else { 8 };
    if width != expected_width {
        return Err(StoreError::Format(format!(
            "snapshot stores {}-byte scalars but the run uses {}",
            width, T::LABEL
        )));
    }
    let ell = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(VertexId(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap())));
    }
    let mut dims = Vec::with_capacity(ell + 1);
    for _ in 0..=ell {
        dims.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
    }
    let mut store = EmbeddingStore::empty(ell);
    for (l, &d) in dims.iter().enumerate() {
        for &v in &ids {
            let mut row = Vec::with_capacity(d);
            for _ in 0..d {
                let x = if width == 4 {
                    f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as f64
                } else {
                    f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap())
                };
                row.push(T::from_f64(x));
            }
            store.set_h(l, v, row);
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, LayerSpec, Matrix, ModelGenConfig};

    fn v(id: u64) -> VertexId {
        VertexId(id)
    }

    fn sum_identity_model(d: usize, layers: usize) -> ModelSpec<f64> {
        let specs = (0..layers)
            .map(|_| {
                LayerSpec::new(
                    d,
                    d,
                    Matrix::identity(d),
                    None,
                    vec![0.0; d],
                    0.0,
                    Activation::Identity,
                    None,
                )
                .unwrap()
            })
            .collect();
        ModelSpec::new(Aggregator::Sum, specs).unwrap()
    }

    #[test]
    fn single_edge_sum_bootstrap() {
        let mut g = DynamicGraph::new(1);
        g.add_vertex(v(0), vec![1.0]).unwrap();
        g.add_vertex(v(1), vec![0.0]).unwrap();
        g.add_edge(v(0), v(1), 1.0).unwrap();
        let m = sum_identity_model(1, 1);
        let store = bootstrap_forward(&g, &m).unwrap();
        assert_eq!(store.h(1, v(1)).unwrap(), &[1.0]);
        assert_eq!(store.h(1, v(0)).unwrap(), &[0.0]);
    }

    #[test]
    fn cascade_fixture_second_layer_sums_first_layer_in_neighbors() {
        // After adding C->A to the fixture, D's second layer is the sum of
        // the first-layer embeddings of its in-neighbors A and C.
        let mut g = crate::graph::tests::cascade_fixture();
        g.apply_event(&crate::graph::UpdateEvent::EdgeAdd {
            src: v(2),
            dst: v(0),
            weight: 1.0,
        })
        .unwrap();
        let m = sum_identity_model(1, 2);
        let store = bootstrap_forward(&g, &m).unwrap();
        let h1_a = store.h(1, v(0)).unwrap()[0];
        let h1_c = store.h(1, v(2)).unwrap()[0];
        let h2_d = store.h(2, v(3)).unwrap()[0];
        assert_eq!(h2_d, h1_a + h1_c);
    }

    #[test]
    fn max_recompute_picks_largest_in_neighbor() {
        let mut g = DynamicGraph::new(1);
        g.add_vertex(v(0), vec![5.0]).unwrap();
        g.add_vertex(v(1), vec![4.0]).unwrap();
        g.add_vertex(v(2), vec![0.0]).unwrap();
        g.add_edge(v(0), v(2), 1.0).unwrap();
        g.add_edge(v(1), v(2), 1.0).unwrap();
        let specs = vec![LayerSpec::new(
            1,
            1,
            Matrix::identity(1),
            None,
            vec![0.0],
            0.0,
            Activation::Identity,
            None,
        )
        .unwrap()];
        let m = ModelSpec::new(Aggregator::Max, specs).unwrap();
        let store = bootstrap_forward(&g, &m).unwrap();
        match store.summary(1, v(2)).unwrap() {
            AggregateSummary::Extremum { vec, count } => {
                assert_eq!(vec, &vec![5.0]);
                assert_eq!(*count, 2);
            }
            other => panic!("unexpected summary {other:?}"),
        }
    }

    #[test]
    fn empty_in_neighborhood_sum_is_zero_vector() {
        let mut g = DynamicGraph::new(2);
        g.add_vertex(v(0), vec![1.0, 2.0]).unwrap();
        let m = sum_identity_model(2, 1);
        let store = bootstrap_forward(&g, &m).unwrap();
        match store.summary(1, v(0)).unwrap() {
            AggregateSummary::Sum(s) => assert_eq!(s, &vec![0.0, 0.0]),
            other => panic!("unexpected summary {other:?}"),
        }
    }

    /// Independent oracle: per-vertex direct evaluation of the layer rule
    /// with its own aggregation loops, no summaries involved.
    pub(crate) fn naive_forward(
        g: &DynamicGraph,
        model: &ModelSpec<f64>,
    ) -> HashMap<VertexId, Vec<Vec<f64>>> {
        let ell = model.layer_count();
        let mut h: HashMap<VertexId, Vec<Vec<f64>>> = HashMap::new();
        for vtx in g.vertices() {
            let f = g.features_of(vtx).unwrap().to_vec();
            h.insert(vtx, vec![f]);
        }
        for l in 1..=ell {
            let layer = model.layer(l);
            let mut next: HashMap<VertexId, Vec<f64>> = HashMap::new();
            for vtx in g.vertices() {
                let ins = g.in_neighbors(vtx);
                let x: Vec<f64> = match model.aggregator {
                    Aggregator::Sum => {
                        let mut acc = vec![0.0; layer.d_in];
                        for &(u, _) in ins {
                            for (a, b) in acc.iter_mut().zip(&h[&u][l - 1]) {
                                *a += b;
                            }
                        }
                        acc
                    }
                    Aggregator::WeightedSum => {
                        let mut acc = vec![0.0; layer.d_in];
                        for &(u, w) in ins {
                            for (a, b) in acc.iter_mut().zip(&h[&u][l - 1]) {
                                *a += w * b;
                            }
                        }
                        acc
                    }
                    Aggregator::Mean => {
                        let mut acc = vec![0.0; layer.d_in];
                        for &(u, _) in ins {
                            for (a, b) in acc.iter_mut().zip(&h[&u][l - 1]) {
                                *a += b;
                            }
                        }
                        if !ins.is_empty() {
                            for a in &mut acc {
                                *a /= ins.len() as f64;
                            }
                        }
                        acc
                    }
                    Aggregator::Max | Aggregator::Min => {
                        let maxing = model.aggregator == Aggregator::Max;
                        let mut acc: Option<Vec<f64>> = None;
                        for &(u, _) in ins {
                            let row = &h[&u][l - 1];
                            match &mut acc {
                                None => acc = Some(row.clone()),
                                Some(cur) => {
                                    for (a, &b) in cur.iter_mut().zip(row) {
                                        if (maxing && b > *a) || (!maxing && b < *a) {
                                            *a = b;
                                        }
                                    }
                                }
                            }
                        }
                        acc.unwrap_or_else(|| vec![0.0; layer.d_in])
                    }
                    Aggregator::Attention => {
                        let attn = layer.attn.as_ref().unwrap();
                        let sink_t = layer.w_neigh.vec_mul(&h[&vtx][l - 1]);
                        let mut numer = vec![0.0; layer.d_out];
                        let mut denom = 0.0;
                        for &(u, _) in ins {
                            let src_t = layer.w_neigh.vec_mul(&h[&u][l - 1]);
                            let e = attn.score(&src_t, &sink_t).exp();
                            for (a, &b) in numer.iter_mut().zip(&src_t) {
                                *a += e * b;
                            }
                            denom += e;
                        }
                        if denom != 0.0 {
                            for a in &mut numer {
                                *a /= denom;
                            }
                        }
                        numer
                    }
                };
                next.insert(vtx, model.layer_update(&h[&vtx][l - 1], &x, l).unwrap());
            }
            for (vtx, row) in next {
                h.get_mut(&vtx).unwrap().push(row);
            }
        }
        h
    }

    #[test]
    fn bootstrap_matches_naive_oracle_on_random_graph() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for aggregator in Aggregator::ALL {
            let mut g = DynamicGraph::new(3);
            for id in 0..50 {
                let f: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                g.add_vertex(v(id), f).unwrap();
            }
            let mut added = 0;
            while added < 150 {
                let a = rng.gen_range(0..50);
                let b = rng.gen_range(0..50);
                if !g.contains_edge(v(a), v(b)) {
                    g.add_edge(v(a), v(b), rng.gen_range(0.5..1.5)).unwrap();
                    added += 1;
                }
            }
            let cfg = ModelGenConfig {
                dims: vec![3, 4, 2],
                aggregator,
                self_weights: aggregator == Aggregator::Sum,
                epsilon: 0.0,
                z_nonlinearity: crate::model::ZNonlinearity::Identity,
                seed: 5,
            };
            let m: ModelSpec<f64> = crate::model::generate_model(&cfg).unwrap();
            let store = bootstrap_forward(&g, &m).unwrap();
            let naive = naive_forward(&g, &m);
            for vtx in g.vertices() {
                for l in 0..=2 {
                    let a = store.h(l, vtx).unwrap();
                    let b = &naive[&vtx][l];
                    for (x, y) in a.iter().zip(b) {
                        let rel = (x - y).abs() / (1.0 + y.abs());
                        assert!(rel < 1e-6, "agg {aggregator:?} vertex {vtx} layer {l}: {x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn bootstrap_is_bit_deterministic() {
        let g = crate::graph::tests::cascade_fixture();
        let cfg = ModelGenConfig::plain(vec![1, 4, 4], Aggregator::Mean, 9);
        let m: ModelSpec<f32> = crate::model::generate_model(&cfg).unwrap();
        let s1 = bootstrap_forward(&g, &m).unwrap();
        let s2 = bootstrap_forward(&g, &m).unwrap();
        for vtx in g.vertices() {
            for l in 0..=2 {
                assert_eq!(s1.h(l, vtx).unwrap(), s2.h(l, vtx).unwrap());
            }
        }
    }

    #[test]
    fn stored_summaries_match_recompute_after_bootstrap() {
        let g = crate::graph::tests::cascade_fixture();
        let cfg = ModelGenConfig::plain(vec![1, 3, 3], Aggregator::Attention, 2);
        let m: ModelSpec<f64> = crate::model::generate_model(&cfg).unwrap();
        let store = bootstrap_forward(&g, &m).unwrap();
        let overlay = HashMap::new();
        for vtx in g.vertices() {
            for l in 1..=2 {
                let fresh = recompute_aggregate(&g, &store, &m, vtx, l, &overlay).unwrap();
                assert_eq!(&fresh, store.summary(l, vtx).unwrap());
            }
        }
    }

    #[test]
    fn attention_denominator_positive_with_in_neighbors() {
        let g = crate::graph::tests::cascade_fixture();
        let cfg = ModelGenConfig::plain(vec![1, 3], Aggregator::Attention, 8);
        let m: ModelSpec<f64> = crate::model::generate_model(&cfg).unwrap();
        let store = bootstrap_forward(&g, &m).unwrap();
        for vtx in g.vertices() {
            if g.in_degree(vtx) > 0 {
                match store.summary(1, vtx).unwrap() {
                    AggregateSummary::Attention { denom, .. } => assert!(*denom > 0.0),
                    other => panic!("unexpected summary {other:?}"),
                }
            }
        }
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let g = crate::graph::tests::cascade_fixture();
        let cfg = ModelGenConfig::plain(vec![1, 4, 2], Aggregator::Sum, 3);
        let m: ModelSpec<f32> = crate::model::generate_model(&cfg).unwrap();
        let store = bootstrap_forward(&g, &m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        write_snapshot(&store, &path).unwrap();
        let back: EmbeddingStore<f32> = read_snapshot(&path).unwrap();
        for vtx in g.vertices() {
            for l in 0..=2 {
                assert_eq!(store.h(l, vtx).unwrap(), back.h(l, vtx).unwrap());
            }
        }
        // Rebuilding summaries from the snapshot reproduces bootstrap state.
        let mut rebuilt = back;
        rebuild_summaries(&g, &mut rebuilt, &m).unwrap();
        for vtx in g.vertices() {
            for l in 1..=2 {
                assert_eq!(store.summary(l, vtx).unwrap(), rebuilt.summary(l, vtx).unwrap());
            }
        }
        // Precision mismatch is refused.
        assert!(read_snapshot::<f64>(&path).is_err());
    }
}
