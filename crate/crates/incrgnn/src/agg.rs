//! Aggregator-specific delta algebra.
//!
//! A source prepares a delta that nullifies its old contribution to a sink
//! and installs the new one; inboxes combine deltas order-independently; the
//! sink applies the combined value to its stored aggregate summary. Linear
//! aggregators always apply incrementally. Monotonic aggregators classify
//! each combined inbox into no-change / incremental / recompute. Attention
//! deltas are converted receiver-side because an edge score depends on both
//! endpoint embeddings.

use thiserror::Error;

use crate::graph::VertexId;
use crate::model::{Aggregator, LayerSpec};
use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("mismatched dims: {0}")]
    MismatchedDims(String),
    #[error("mixed aggregator payloads in one inbox")]
    MixedAggregator,
    #[error("mean count for sink would go negative; graph and summary are out of sync")]
    NegativeCount,
}

/// Stored pre-update aggregate state of one vertex at one layer.
///
/// `value()` is the vector fed to the layer update; keeping the richer state
/// (counts, softmax numerator/denominator) is what makes O(d) incremental
/// application possible.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregateSummary<T> {
    Sum(Vec<T>),
    Mean { sum: Vec<T>, count: i64 },
    WeightedSum(Vec<T>),
    /// Componentwise max or min over in-neighbors. The count distinguishes
    /// "no in-neighbors" (value defined as the zero vector) from a real
    /// extremum, so the first contributor installs itself instead of being
    /// compared against the placeholder.
    Extremum { vec: Vec<T>, count: i64 },
    Attention { numer: Vec<T>, denom: T },
}

impl<T: Real> AggregateSummary<T> {
    pub fn empty(agg: Aggregator, d_in: usize, d_out: usize) -> Self {
        match agg {
            Aggregator::Sum => AggregateSummary::Sum(vec![T::zero(); d_in]),
            Aggregator::Mean => AggregateSummary::Mean { sum: vec![T::zero(); d_in], count: 0 },
            Aggregator::WeightedSum => AggregateSummary::WeightedSum(vec![T::zero(); d_in]),
            Aggregator::Max | Aggregator::Min => {
                AggregateSummary::Extremum { vec: vec![T::zero(); d_in], count: 0 }
            }
            Aggregator::Attention => {
                AggregateSummary::Attention { numer: vec![T::zero(); d_out], denom: T::zero() }
            }
        }
    }

    /// The aggregated vector as consumed by the layer update.
    pub fn value(&self) -> Vec<T> {
        match self.value_ref() {
            Some(slice) => slice.to_vec(),
            None => match self {
                AggregateSummary::Mean { sum, count } => {
                    if *count == 0 {
                        vec![T::zero(); sum.len()]
                    } else {
                        let c = T::from_f64(*count as f64);
                        sum.iter().map(|&x| x / c).collect()
                    }
                }
                AggregateSummary::Attention { numer, denom } => {
                    if *denom == T::zero() {
                        vec![T::zero(); numer.len()]
                    } else {
                        numer.iter().map(|&x| x / *denom).collect()
                    }
                }
                _ => unreachable!("value_ref covers the borrowable variants"),
            },
        }
    }

    /// Borrowed form of [`value`] for the variants whose stored vector is
    /// the aggregated value itself.
    pub fn value_ref(&self) -> Option<&[T]> {
        match self {
            AggregateSummary::Sum(v) | AggregateSummary::WeightedSum(v) => Some(v),
            AggregateSummary::Extremum { vec, .. } => Some(vec),
            _ => None,
        }
    }
}

/// Payload a source prepares for one sink's next-hop inbox.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaPayload<T> {
    /// sum / weighted_sum: the (possibly weighted) new-minus-old vector.
    Linear(Vec<T>),
    /// mean: sum delta plus the in-degree change at the sink.
    Mean { sum_delta: Vec<T>, count_delta: i64 },
    /// max / min and attention transport: old and new source embeddings.
    /// `None` stands for "no contribution" (edge add has no old value, edge
    /// delete has no new one).
    OldNew { source: VertexId, old: Option<Vec<T>>, new: Option<Vec<T>> },
}

/// Combined per-(vertex, hop) mailbox contents.
#[derive(Debug, Clone, PartialEq)]
pub enum InboxValue<T> {
    Linear(Vec<T>),
    Mean { sum_delta: Vec<T>, count_delta: i64 },
    /// Attention after receiver-side conversion.
    Attn { num_delta: Vec<T>, den_delta: T },
    /// Buffered old/new pairs for monotonic classification, coalesced per
    /// source (first old, last new).
    Pairs(Vec<OldNewEntry<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OldNewEntry<T> {
    pub source: VertexId,
    pub old: Option<Vec<T>>,
    pub new: Option<Vec<T>>,
}

/// Outcome of applying a combined inbox to a summary.
#[derive(Debug, Clone, PartialEq)]
pub enum Disposition<T> {
    /// Summary untouched; the vertex emits nothing downstream.
    NoChange,
    Incremental(AggregateSummary<T>),
    /// The summary must be rebuilt from all in-neighbors.
    NeedsRecompute,
}

fn check_dims<T>(old: &Option<Vec<T>>, new: &Option<Vec<T>>) -> Result<usize, KernelError> {
    match (old, new) {
        (Some(a), Some(b)) => {
            if a.len() != b.len() {
                Err(KernelError::MismatchedDims("old/new length".into()))
            } else {
                Ok(a.len())
            }
        }
        (Some(a), None) => Ok(a.len()),
        (None, Some(b)) => Ok(b.len()),
        (None, None) => Err(KernelError::MismatchedDims("both old and new absent".into())),
    }
}

/// Prepares the delta a source sends when its embedding moves from `old`
/// to `new` over an edge of `weight`. Absent old/new encode edge addition
/// and deletion; `count_delta` carries the sink in-degree change for mean.
pub fn prepare_delta<T: Real>(
    agg: Aggregator,
    source: VertexId,
    old: Option<&[T]>,
    new: Option<&[T]>,
    weight: f64,
    count_delta: i64,
) -> Result<DeltaPayload<T>, KernelError> {
    let old_v = old.map(|s| s.to_vec());
    let new_v = new.map(|s| s.to_vec());
    let d = check_dims(&old_v, &new_v)?;
    match agg {
        Aggregator::Sum | Aggregator::WeightedSum => {
            let w = if agg == Aggregator::WeightedSum { T::from_f64(weight) } else { T::one() };
            let mut delta = vec![T::zero(); d];
            if let Some(n) = &new_v {
                for (dst, &x) in delta.iter_mut().zip(n) {
                    *dst += w * x;
                }
            }
            if let Some(o) = &old_v {
                for (dst, &x) in delta.iter_mut().zip(o) {
                    *dst -= w * x;
                }
            }
            Ok(DeltaPayload::Linear(delta))
        }
        Aggregator::Mean => {
            let mut delta = vec![T::zero(); d];
            if let Some(n) = &new_v {
                for (dst, &x) in delta.iter_mut().zip(n) {
                    *dst += x;
                }
            }
            if let Some(o) = &old_v {
                for (dst, &x) in delta.iter_mut().zip(o) {
                    *dst -= x;
                }
            }
            Ok(DeltaPayload::Mean { sum_delta: delta, count_delta })
        }
        Aggregator::Max | Aggregator::Min | Aggregator::Attention => {
            Ok(DeltaPayload::OldNew { source, old: old_v, new: new_v })
        }
    }
}

/// Multiply-add cost of preparing one delta. Old/new transport involves no
/// arithmetic but is accounted as vector traffic of length d so hop costs
/// stay comparable across aggregators.
pub fn prepare_ops(_agg: Aggregator, d: usize) -> u64 {
    d as u64
}

/// Converts an old/new attention transport into numerator/denominator
/// deltas at the receiver, which knows its own embedding.
///
/// For each present side: `exp(score(a, [h_u W, h_v W])) * (h_u W)` enters
/// the numerator and the bare exponential the denominator; the old side is
/// subtracted, the new side added.
pub fn attn_convert<T: Real>(
    layer: &LayerSpec<T>,
    old: Option<&[T]>,
    new: Option<&[T]>,
    sink_h: &[T],
) -> Result<(Vec<T>, T), KernelError> {
    let attn = layer
        .attn
        .as_ref()
        .ok_or_else(|| KernelError::MismatchedDims("layer lacks attention parameters".into()))?;
    let sink_t = layer.w_neigh.vec_mul(sink_h);
    let mut num_delta = vec![T::zero(); layer.d_out];
    let mut den_delta = T::zero();
    if let Some(n) = new {
        let src_t = layer.w_neigh.vec_mul(n);
        let e = attn.score(&src_t, &sink_t).exp();
        for (dst, &x) in num_delta.iter_mut().zip(&src_t) {
            *dst += e * x;
        }
        den_delta += e;
    }
    if let Some(o) = old {
        let src_t = layer.w_neigh.vec_mul(o);
        let e = attn.score(&src_t, &sink_t).exp();
        for (dst, &x) in num_delta.iter_mut().zip(&src_t) {
            *dst -= e * x;
        }
        den_delta -= e;
    }
    Ok((num_delta, den_delta))
}

/// Multiply-add cost of one attention conversion (sink transform, up to two
/// source transforms, and the score dot products).
pub fn attn_convert_ops(d_in: usize, d_out: usize, sides: usize) -> u64 {
    let mm = (d_in * d_out) as u64;
    let score = (2 * d_out) as u64;
    mm + sides as u64 * (mm + score + d_out as u64)
}

fn coalesce_pair<T>(list: &mut Vec<OldNewEntry<T>>, entry: OldNewEntry<T>) {
    // Pairs from the same source within a batch chain first-old -> last-new.
    if let Some(existing) = list.iter_mut().find(|e| e.source == entry.source) {
        existing.new = entry.new;
    } else {
        list.push(entry);
    }
}

/// Folds one payload into an inbox value. For attention the payload must
/// already be converted (pass an `Attn` seeded inbox via [`combine_attn`]).
pub fn combine<T: Real>(
    agg: Aggregator,
    inbox: &mut Option<InboxValue<T>>,
    payload: DeltaPayload<T>,
) -> Result<(), KernelError> {
    match (agg, payload) {
        (Aggregator::Sum | Aggregator::WeightedSum, DeltaPayload::Linear(delta)) => {
            match inbox {
                None => *inbox = Some(InboxValue::Linear(delta)),
                Some(InboxValue::Linear(acc)) => {
                    if acc.len() != delta.len() {
                        return Err(KernelError::MismatchedDims("linear combine".into()));
                    }
                    for (a, b) in acc.iter_mut().zip(delta) {
                        *a += b;
                    }
                }
                Some(_) => return Err(KernelError::MixedAggregator),
            }
            Ok(())
        }
        (Aggregator::Mean, DeltaPayload::Mean { sum_delta, count_delta }) => {
            match inbox {
                None => *inbox = Some(InboxValue::Mean { sum_delta, count_delta }),
                Some(InboxValue::Mean { sum_delta: acc, count_delta: c }) => {
                    if acc.len() != sum_delta.len() {
                        return Err(KernelError::MismatchedDims("mean combine".into()));
                    }
                    for (a, b) in acc.iter_mut().zip(sum_delta) {
                        *a += b;
                    }
                    *c += count_delta;
                }
                Some(_) => return Err(KernelError::MixedAggregator),
            }
            Ok(())
        }
        (Aggregator::Max | Aggregator::Min, DeltaPayload::OldNew { source, old, new }) => {
            check_dims(&old, &new)?;
            match inbox {
                None => {
                    *inbox = Some(InboxValue::Pairs(vec![OldNewEntry { source, old, new }]));
                }
                Some(InboxValue::Pairs(list)) => {
                    coalesce_pair(list, OldNewEntry { source, old, new });
                }
                Some(_) => return Err(KernelError::MixedAggregator),
            }
            Ok(())
        }
        (Aggregator::Attention, DeltaPayload::OldNew { source, old, new }) => {
            // Unconverted transport: buffer as pairs (halo mailboxes do this;
            // local delivery converts before combining).
            check_dims(&old, &new)?;
            match inbox {
                None => {
                    *inbox = Some(InboxValue::Pairs(vec![OldNewEntry { source, old, new }]));
                }
                Some(InboxValue::Pairs(list)) => {
                    coalesce_pair(list, OldNewEntry { source, old, new });
                }
                Some(_) => return Err(KernelError::MixedAggregator),
            }
            Ok(())
        }
        _ => Err(KernelError::MixedAggregator),
    }
}

/// Folds converted attention deltas into an inbox value.
pub fn combine_attn<T: Real>(
    inbox: &mut Option<InboxValue<T>>,
    num_delta: Vec<T>,
    den_delta: T,
) -> Result<(), KernelError> {
    match inbox {
        None => {
            *inbox = Some(InboxValue::Attn { num_delta, den_delta });
            Ok(())
        }
        Some(InboxValue::Attn { num_delta: acc, den_delta: d }) => {
            if acc.len() != num_delta.len() {
                return Err(KernelError::MismatchedDims("attention combine".into()));
            }
            for (a, b) in acc.iter_mut().zip(num_delta) {
                *a += b;
            }
            *d += den_delta;
            Ok(())
        }
        Some(_) => Err(KernelError::MixedAggregator),
    }
}

/// Context the sink supplies when applying a combined inbox value.
pub struct SinkCtx {
    /// Set when the engine has already decided this vertex rebuilds from
    /// scratch this hop (attention recompute set).
    pub in_recompute_set: bool,
}

/// Applies a combined inbox value to the sink's summary:
///
/// - sum / weighted_sum / converted attention: always incremental.
/// - mean: incremental on (sum, count); a negative resulting count is a
///   desynchronization error.
/// - max / min: componentwise classification over the buffered pairs —
///   pure no-ops prune propagation, covering raises apply incrementally,
///   and any retraction of a contributing extremum forces a recompute.
pub fn apply_delta<T: Real>(
    agg: Aggregator,
    summary: &AggregateSummary<T>,
    inbox: &InboxValue<T>,
    ctx: &SinkCtx,
) -> Result<Disposition<T>, KernelError> {
    if agg == Aggregator::Attention && ctx.in_recompute_set {
        return Ok(Disposition::NeedsRecompute);
    }
    match (summary, inbox) {
        (AggregateSummary::Sum(cur), InboxValue::Linear(delta)) => {
            if cur.len() != delta.len() {
                return Err(KernelError::MismatchedDims("sum apply".into()));
            }
            let next = cur.iter().zip(delta).map(|(&a, &b)| a + b).collect();
            Ok(Disposition::Incremental(AggregateSummary::Sum(next)))
        }
        (AggregateSummary::WeightedSum(cur), InboxValue::Linear(delta)) => {
            if cur.len() != delta.len() {
                return Err(KernelError::MismatchedDims("weighted_sum apply".into()));
            }
            let next = cur.iter().zip(delta).map(|(&a, &b)| a + b).collect();
            Ok(Disposition::Incremental(AggregateSummary::WeightedSum(next)))
        }
        (AggregateSummary::Mean { sum, count }, InboxValue::Mean { sum_delta, count_delta }) => {
            if sum.len() != sum_delta.len() {
                return Err(KernelError::MismatchedDims("mean apply".into()));
            }
            let next_count = count + count_delta;
            if next_count < 0 {
                return Err(KernelError::NegativeCount);
            }
            let next = sum.iter().zip(sum_delta).map(|(&a, &b)| a + b).collect();
            Ok(Disposition::Incremental(AggregateSummary::Mean {
                sum: next,
                count: next_count,
            }))
        }
        (AggregateSummary::Attention { numer, denom }, InboxValue::Attn { num_delta, den_delta }) => {
            if numer.len() != num_delta.len() {
                return Err(KernelError::MismatchedDims("attention apply".into()));
            }
            let next = numer.iter().zip(num_delta).map(|(&a, &b)| a + b).collect();
            Ok(Disposition::Incremental(AggregateSummary::Attention {
                numer: next,
                denom: *denom + *den_delta,
            }))
        }
        (AggregateSummary::Extremum { vec, count }, InboxValue::Pairs(pairs)) => {
            Ok(classify_extremum(agg, vec, *count, pairs))
        }
        _ => Err(KernelError::MixedAggregator),
    }
}

/// Componentwise three-way classification for max/min.
///
/// Coalesced pairs preserve the net in-degree change: an absent old side is
/// an edge addition (+1), an absent new side a deletion (-1).
fn classify_extremum<T: Real>(
    agg: Aggregator,
    cur: &[T],
    count: i64,
    pairs: &[OldNewEntry<T>],
) -> Disposition<T> {
    let maxing = agg == Aggregator::Max;
    // a "beats" b when it would replace it under this extremum.
    let beats = |a: T, b: T| if maxing { a > b } else { a < b };

    let count_delta: i64 = pairs
        .iter()
        .map(|e| e.old.is_none() as i64 - e.new.is_none() as i64)
        .sum();
    let next_count = count + count_delta;

    if count == 0 {
        // No existing contributors: the additions in this inbox are the
        // entire in-neighborhood, so their fold is the true extremum.
        let mut next: Option<Vec<T>> = None;
        for entry in pairs {
            if let Some(new) = &entry.new {
                match &mut next {
                    None => next = Some(new.clone()),
                    Some(acc) => {
                        for (dst, &x) in acc.iter_mut().zip(new) {
                            if beats(x, *dst) {
                                *dst = x;
                            }
                        }
                    }
                }
            }
        }
        return match next {
            Some(vec) => Disposition::Incremental(AggregateSummary::Extremum {
                vec,
                count: next_count,
            }),
            None => Disposition::NoChange,
        };
    }

    let mut any_raise = false;
    for entry in pairs {
        for (j, &c) in cur.iter().enumerate() {
            if let Some(old) = &entry.old {
                let o = old[j];
                let retracting = match &entry.new {
                    None => true,
                    Some(new) => beats(o, new[j]),
                };
                if o == c && retracting {
                    // A value sitting at the extremum is lowered or removed:
                    // the true extremum may now be elsewhere.
                    return Disposition::NeedsRecompute;
                }
            }
            if let Some(new) = &entry.new {
                if beats(new[j], c) {
                    any_raise = true;
                }
            }
        }
    }
    if !any_raise && next_count == count {
        return Disposition::NoChange;
    }
    let mut next = cur.to_vec();
    for entry in pairs {
        if let Some(new) = &entry.new {
            for (dst, &x) in next.iter_mut().zip(new) {
                if beats(x, *dst) {
                    *dst = x;
                }
            }
        }
    }
    Disposition::Incremental(AggregateSummary::Extremum { vec: next, count: next_count })
}
