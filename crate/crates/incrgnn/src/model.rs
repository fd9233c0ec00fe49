//! L-layer GNN description and the per-vertex layer update rule.
//!
//! A layer maps a vertex's previous embedding `h_prev` and its aggregated
//! neighbor value `x` to
//!
//! ```text
//! h = act( (1 + eps) * h_prev * W_self  +  x * W_neigh  +  bias )
//! ```
//!
//! with row-vector-times-matrix orientation. `W_self = 0, eps = 0` is plain
//! graph convolution; a nonzero `W_self` gives the sampling-free SAGE form;
//! `eps != 0` with shared weights gives the isomorphism-network form. For the
//! attention aggregator the neighbor value is already transformed (the
//! per-edge contribution is `h_u * W_neigh` weighted by softmax attention),
//! so the `W_neigh` factor is skipped in the update.

use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("model file error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Neighborhood aggregation kind; one per model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Sum,
    Mean,
    WeightedSum,
    Max,
    Min,
    Attention,
}

impl Aggregator {
    pub const ALL: [Aggregator; 6] = [
        Aggregator::Sum,
        Aggregator::Mean,
        Aggregator::WeightedSum,
        Aggregator::Max,
        Aggregator::Min,
        Aggregator::Attention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Sum => "sum",
            Aggregator::Mean => "mean",
            Aggregator::WeightedSum => "weighted_sum",
            Aggregator::Max => "max",
            Aggregator::Min => "min",
            Aggregator::Attention => "attention",
        }
    }

    pub fn parse(s: &str) -> Option<Aggregator> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Monotonic aggregators classify deltas instead of folding them.
    pub fn is_monotonic(self) -> bool {
        matches!(self, Aggregator::Max | Aggregator::Min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: &mut [T]) {
        if self == Activation::Relu {
            for v in x {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
    }
}

/// Nonlinearity applied to raw attention scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZNonlinearity {
    Identity,
    LeakyRelu { slope: f64 },
}

impl ZNonlinearity {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            ZNonlinearity::Identity => z,
            ZNonlinearity::LeakyRelu { slope } => {
                if z < T::zero() {
                    z * T::from_f64(slope)
                } else {
                    z
                }
            }
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            if row.len() != c {
                return Err(ModelError::DimensionMismatch("ragged matrix rows".into()));
            }
            data.extend(row.iter().map(|&v| T::from_f64(v)));
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == T::zero())
    }

    /// `out += x * M` for a row vector `x` of length `rows`.
    #[inline]
    pub fn accumulate_vec_mul(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let row = self.row(i);
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }

    /// `x * M` as a fresh vector.
    pub fn vec_mul(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        self.accumulate_vec_mul(x, &mut out);
        out
    }
}

/// Attention parameters for one layer: score vector of length `2 * d_out`.
#[derive(Debug, Clone)]
pub struct AttnParams<T> {
    pub a: Vec<T>,
    pub z_nonlinearity: ZNonlinearity,
}

impl<T: Real> AttnParams<T> {
    /// Raw score for an edge given both transformed endpoint embeddings.
    #[inline]
    pub fn score(&self, src_t: &[T], dst_t: &[T]) -> T {
        debug_assert_eq!(self.a.len(), src_t.len() + dst_t.len());
        let mut z = T::zero();
        for (av, xv) in self.a.iter().zip(src_t.iter().chain(dst_t.iter())) {
            z += *av * *xv;
        }
        self.z_nonlinearity.apply(z)
    }
}

/// One GNN layer: dimensions, weights, and update parameters.
#[derive(Debug, Clone)]
pub struct LayerSpec<T> {
    pub d_in: usize,
    pub d_out: usize,
    pub w_neigh: Matrix<T>,
    pub w_self: Option<Matrix<T>>,
    pub bias: Vec<T>,
    pub epsilon: T,
    pub activation: Activation,
    pub attn: Option<AttnParams<T>>,
    /// True when the update reads the vertex's own previous embedding.
    self_dep: bool,
}

impl<T: Real> LayerSpec<T> {
    pub fn new(
        d_in: usize,
        d_out: usize,
        w_neigh: Matrix<T>,
        w_self: Option<Matrix<T>>,
        bias: Vec<T>,
        epsilon: T,
        activation: Activation,
        attn: Option<AttnParams<T>>,
    ) -> Result<Self, ModelError> {
        if w_neigh.rows != d_in || w_neigh.cols != d_out {
            return Err(ModelError::DimensionMismatch(format!(
                "neighbor weights are {}x{}, layer is {}x{}",
                w_neigh.rows, w_neigh.cols, d_in, d_out
            )));
        }
        if let Some(ws) = &w_self {
            if ws.rows != d_in || ws.cols != d_out {
                return Err(ModelError::DimensionMismatch("self weights shape".into()));
            }
        }
        if bias.len() != d_out {
            return Err(ModelError::DimensionMismatch("bias length".into()));
        }
        if let Some(at) = &attn {
            if at.a.len() != 2 * d_out {
                return Err(ModelError::DimensionMismatch("attention vector length".into()));
            }
        }
        let self_dep = w_self.as_ref().map(|m| !m.is_zero()).unwrap_or(false);
        Ok(LayerSpec { d_in, d_out, w_neigh, w_self, bias, epsilon, activation, attn, self_dep })
    }

    pub fn self_dep(&self) -> bool {
        self.self_dep
    }
}

/// Whole-model description: immutable after load, shared by all engines.
#[derive(Debug, Clone)]
pub struct ModelSpec<T> {
    pub aggregator: Aggregator,
    layers: Vec<LayerSpec<T>>,
}

impl<T: Real> ModelSpec<T> {
    pub fn new(aggregator: Aggregator, layers: Vec<LayerSpec<T>>) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::DimensionMismatch("model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].d_out != pair[1].d_in {
                return Err(ModelError::DimensionMismatch(format!(
                    "layer output dim {} feeds layer input dim {}",
                    pair[0].d_out, pair[1].d_in
                )));
            }
        }
        if aggregator == Aggregator::Attention && layers.iter().any(|l| l.attn.is_none()) {
            return Err(ModelError::DimensionMismatch(
                "attention aggregator requires attention parameters on every layer".into(),
            ));
        }
        Ok(ModelSpec { aggregator, layers })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Layer `l` for `l` in `1..=L`.
    pub fn layer(&self, l: usize) -> &LayerSpec<T> {
        &self.layers[l - 1]
    }

    pub fn layers(&self) -> &[LayerSpec<T>] {
        &self.layers
    }

    pub fn d0(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn d_final(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out
    }

    /// Whether a vertex whose previous-layer embedding changed must refresh
    /// its own layer-`l` embedding even with an empty inbox. Attention models
    /// always do: the sink embedding enters every score on its in-edges.
    pub fn self_term(&self, l: usize) -> bool {
        self.aggregator == Aggregator::Attention || self.layer(l).self_dep()
    }

    /// Applies the update rule for layer `l`.
    ///
    /// `x` is the aggregated neighbor value: dimension `d_{l-1}` for all
    /// aggregators except attention, whose summaries already live in `d_l`.
    pub fn layer_update(&self, h_prev: &[T], x: &[T], l: usize) -> Result<Vec<T>, ModelError> {
        let layer = self.layer(l);
        if h_prev.len() != layer.d_in {
            return Err(ModelError::DimensionMismatch(format!(
                "h_prev has dim {}, layer {} expects {}",
                h_prev.len(),
                l,
                layer.d_in
            )));
        }
        let expected_x = if self.aggregator == Aggregator::Attention {
            layer.d_out
        } else {
            layer.d_in
        };
        if x.len() != expected_x {
            return Err(ModelError::DimensionMismatch(format!(
                "aggregate has dim {}, layer {} expects {}",
                x.len(),
                l,
                expected_x
            )));
        }
        let mut out = layer.bias.clone();
        if self.aggregator == Aggregator::Attention {
            for (o, &xv) in out.iter_mut().zip(x) {
                *o += xv;
            }
        } else {
            layer.w_neigh.accumulate_vec_mul(x, &mut out);
        }
        if let Some(ws) = &layer.w_self {
            let scale = T::one() + layer.epsilon;
            if scale == T::one() {
                ws.accumulate_vec_mul(h_prev, &mut out);
            } else {
                let scaled: Vec<T> = h_prev.iter().map(|&v| v * scale).collect();
                ws.accumulate_vec_mul(&scaled, &mut out);
            }
        }
        layer.activation.apply(&mut out);
        Ok(out)
    }

    /// Multiply-add count one `layer_update` call performs; bookkeeping
    /// excluded. Used by the instrumented operation counters.
    pub fn layer_update_ops(&self, l: usize) -> u64 {
        let layer = self.layer(l);
        let mut ops = layer.d_out as u64; // bias add
        if self.aggregator != Aggregator::Attention {
            ops += (layer.d_in * layer.d_out) as u64;
        } else {
            ops += layer.d_out as u64;
        }
        if layer.w_self.is_some() {
            ops += (layer.d_in * layer.d_out) as u64 + layer.d_in as u64;
        }
        ops
    }
}

// ---------------------------------------------------------------------------
// Seeded model generation.
// ---------------------------------------------------------------------------

/// Knobs for the seeded generator; mirrors what the model file stores.
#[derive(Debug, Clone)]
pub struct ModelGenConfig {
    pub dims: Vec<usize>,
    pub aggregator: Aggregator,
    /// Attach self weights (independent of the neighbor weights).
    pub self_weights: bool,
    /// Share the neighbor weights as self weights and set this epsilon.
    pub epsilon: f64,
    pub z_nonlinearity: ZNonlinearity,
    pub seed: u64,
}

impl ModelGenConfig {
    pub fn plain(dims: Vec<usize>, aggregator: Aggregator, seed: u64) -> Self {
        ModelGenConfig {
            dims,
            aggregator,
            self_weights: false,
            epsilon: 0.0,
            z_nonlinearity: ZNonlinearity::Identity,
            seed,
        }
    }
}

/// Draws a model with uniform weights in `[-s, s]`, `s = 1/sqrt(d_in)`.
/// Hidden layers use relu, the final layer identity.
pub fn generate_model<T: Real>(cfg: &ModelGenConfig) -> Result<ModelSpec<T>, ModelError> {
    if cfg.dims.len() < 2 {
        return Err(ModelError::DimensionMismatch("need at least dims = [d0, d1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ell = cfg.dims.len() - 1;
    let mut layers = Vec::with_capacity(ell);
    for l in 1..=ell {
        let (d_in, d_out) = (cfg.dims[l - 1], cfg.dims[l]);
        let scale = 1.0 / (d_in as f64).sqrt();
        let mut draw_matrix = |r: usize, c: usize| -> Matrix<T> {
            let mut m = Matrix::zeros(r, c);
            for v in &mut m.data {
                *v = T::from_f64(rng.gen_range(-scale..scale));
            }
            m
        };
        let w_neigh = draw_matrix(d_in, d_out);
        let w_self = if cfg.epsilon != 0.0 {
            Some(w_neigh.clone())
        } else if cfg.self_weights {
            Some(draw_matrix(d_in, d_out))
        } else {
            None
        };
        let bias: Vec<T> = (0..d_out).map(|_| T::from_f64(rng.gen_range(-scale..scale))).collect();
        let attn = if cfg.aggregator == Aggregator::Attention {
            let a: Vec<T> = (0..2 * d_out)
                .map(|_| T::from_f64(rng.gen_range(-scale..scale)))
                .collect();
            Some(AttnParams { a, z_nonlinearity: cfg.z_nonlinearity })
        } else {
            None
        };
        let activation = if l == ell { Activation::Identity } else { Activation::Relu };
        layers.push(LayerSpec::new(
            d_in,
            d_out,
            w_neigh,
            w_self,
            bias,
            T::from_f64(cfg.epsilon),
            activation,
            attn,
        )?);
    }
    ModelSpec::new(cfg.aggregator, layers)
}

// ---------------------------------------------------------------------------
// Model files: JSON variant plus a little-endian binary layout.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LayerFile {
    d_in: usize,
    d_out: usize,
    activation: Activation,
    epsilon: f64,
    w_neigh: Vec<Vec<f64>>,
    #[serde(default)]
    w_self: Option<Vec<Vec<f64>>>,
    bias: Vec<f64>,
    #[serde(default)]
    attn_a: Option<Vec<f64>>,
    #[serde(default)]
    z_nonlinearity: Option<ZNonlinearity>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    aggregator: Aggregator,
    layers: Vec<LayerFile>,
}

fn matrix_to_rows<T: Real>(m: &Matrix<T>) -> Vec<Vec<f64>> {
    (0..m.rows).map(|i| m.row(i).iter().map(|v| v.as_f64()).collect()).collect()
}

fn model_to_file<T: Real>(model: &ModelSpec<T>) -> ModelFile {
    ModelFile {
        aggregator: model.aggregator,
        layers: model
            .layers()
            .iter()
            .map(|l| LayerFile {
                d_in: l.d_in,
                d_out: l.d_out,
                activation: l.activation,
                epsilon: l.epsilon.as_f64(),
                w_neigh: matrix_to_rows(&l.w_neigh),
                w_self: l.w_self.as_ref().map(matrix_to_rows),
                bias: l.bias.iter().map(|v| v.as_f64()).collect(),
                attn_a: l.attn.as_ref().map(|a| a.a.iter().map(|v| v.as_f64()).collect()),
                z_nonlinearity: l.attn.as_ref().map(|a| a.z_nonlinearity),
            })
            .collect(),
    }
}

fn model_from_file<T: Real>(file: ModelFile) -> Result<ModelSpec<T>, ModelError> {
    let mut layers = Vec::with_capacity(file.layers.len());
    for lf in file.layers {
        let attn = match lf.attn_a {
            Some(a) => Some(AttnParams {
                a: a.into_iter().map(T::from_f64).collect(),
                z_nonlinearity: lf.z_nonlinearity.unwrap_or(ZNonlinearity::Identity),
            }),
            None => None,
        };
        layers.push(LayerSpec::new(
            lf.d_in,
            lf.d_out,
            Matrix::from_rows(lf.w_neigh)?,
            lf.w_self.map(Matrix::from_rows).transpose()?,
            lf.bias.into_iter().map(T::from_f64).collect(),
            T::from_f64(lf.epsilon),
            lf.activation,
            attn,
        )?);
    }
    ModelSpec::new(file.aggregator, layers)
}

const MODEL_MAGIC: &[u8; 4] = b"GNNM";
const MODEL_VERSION: u16 = 1;

/// Binary layout (all integers and floats little-endian):
///
/// ```text
/// magic "GNNM" | u16 version | u8 aggregator | u8 z_nonlinearity | f64 slope
/// u32 L | u32 dims[L+1]
/// per layer l=1..L:
///   u8 activation | f64 epsilon | u8 has_w_self | u8 has_attn
///   f64 w_neigh[d_in*d_out] (row-major)
///   f64 w_self[d_in*d_out] (if has_w_self)
///   f64 bias[d_out]
///   f64 attn_a[2*d_out] (if has_attn)
/// ```
pub fn write_model_binary<T: Real>(model: &ModelSpec<T>, path: &Path) -> Result<(), ModelError> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(match model.aggregator {
        Aggregator::Sum => 0,
        Aggregator::Mean => 1,
        Aggregator::WeightedSum => 2,
        Aggregator::Max => 3,
        Aggregator::Min => 4,
        Aggregator::Attention => 5,
    });
    let (z_kind, slope) = model
        .layers()
        .iter()
        .find_map(|l| l.attn.as_ref())
        .map(|a| match a.z_nonlinearity {
            ZNonlinearity::Identity => (0u8, 0.0),
            ZNonlinearity::LeakyRelu { slope } => (1u8, slope),
        })
        .unwrap_or((0, 0.0));
    out.push(z_kind);
    out.extend_from_slice(&slope.to_le_bytes());
    let ell = model.layer_count() as u32;
    out.extend_from_slice(&ell.to_le_bytes());
    out.extend_from_slice(&(model.d0() as u32).to_le_bytes());
    for l in model.layers() {
        out.extend_from_slice(&(l.d_out as u32).to_le_bytes());
    }
    for l in model.layers() {
        out.push(match l.activation {
            Activation::Identity => 0,
            Activation::Relu => 1,
        });
        out.extend_from_slice(&l.epsilon.as_f64().to_le_bytes());
        out.push(l.w_self.is_some() as u8);
        out.push(l.attn.is_some() as u8);
        for v in &l.w_neigh.data {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        if let Some(ws) = &l.w_self {
            for v in &ws.data {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        for v in &l.bias {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        if let Some(at) = &l.attn {
            for v in &at.a {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct ByteCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.data.len() {
            return Err(ModelError::Format("unexpected end of file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }
}

pub fn read_model_binary<T: Real>(path: &Path) -> Result<ModelSpec<T>, ModelError> {
    let data = std::fs::read(path)?;
    let mut cur = ByteCursor { data: &data, pos: 0 };
    if cur.take(4)? != MODEL_MAGIC {
        return Err(ModelError::Format("bad magic".into()));
    }
    if cur.u16()? != MODEL_VERSION {
        return Err(ModelError::Format("unsupported version".into()));
    }
    let aggregator = match cur.u8()? {
        0 => Aggregator::Sum,
        1 => Aggregator::Mean,
        2 => Aggregator::WeightedSum,
        3 => Aggregator::Max,
        4 => Aggregator::Min,
        5 => Aggregator::Attention,
        other => return Err(ModelError::Format(format!("unknown aggregator code {other}"))),
    };
    let z_kind = cur.u8()?;
    let slope = cur.f64()?;
    let z_nonlinearity = match z_kind {
        0 => ZNonlinearity::Identity,
        1 => ZNonlinearity::LeakyRelu { slope },
        other => return Err(ModelError::Format(format!("unknown score nonlinearity {other}"))),
    };
    let ell = cur.u32()? as usize;
    let mut dims = Vec::with_capacity(ell + 1);
    for _ in 0..=ell {
        dims.push(cur.u32()? as usize);
    }
    let mut layers = Vec::with_capacity(ell);
    for l in 1..=ell {
        let (d_in, d_out) = (dims[l - 1], dims[l]);
        let activation = match cur.u8()? {
            0 => Activation::Identity,
            1 => Activation::Relu,
            other => return Err(ModelError::Format(format!("unknown activation code {other}"))),
        };
        let epsilon = cur.f64()?;
        let has_self = cur.u8()? != 0;
        let has_attn = cur.u8()? != 0;
        let w_neigh = Matrix {
            rows: d_in,
            cols: d_out,
            data: cur.f64_vec(d_in * d_out)?.into_iter().map(T::from_f64).collect(),
        };
        let w_self = if has_self {
            Some(Matrix {
                rows: d_in,
                cols: d_out,
                data: cur.f64_vec(d_in * d_out)?.into_iter().map(T::from_f64).collect(),
            })
        } else {
            None
        };
        let bias: Vec<T> = cur.f64_vec(d_out)?.into_iter().map(T::from_f64).collect();
        let attn = if has_attn {
            Some(AttnParams {
                a: cur.f64_vec(2 * d_out)?.into_iter().map(T::from_f64).collect(),
                z_nonlinearity,
            })
        } else {
            None
        };
        layers.push(LayerSpec::new(
            d_in,
            d_out,
            w_neigh,
            w_self,
            bias,
            T::from_f64(epsilon),
            activation,
            attn,
        )?);
    }
    ModelSpec::new(aggregator, layers)
}

pub fn write_model_json<T: Real>(model: &ModelSpec<T>, path: &Path) -> Result<(), ModelError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &model_to_file(model))
        .map_err(|e| ModelError::Format(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn read_model_json<T: Real>(path: &Path) -> Result<ModelSpec<T>, ModelError> {
    let file = std::fs::File::open(path)?;
    let mut s = String::new();
    std::io::BufReader::new(file).read_to_string(&mut s)?;
    let parsed: ModelFile =
        serde_json::from_str(&s).map_err(|e| ModelError::Format(e.to_string()))?;
    model_from_file(parsed)
}

/// Loads a model, sniffing binary by magic and falling back to JSON.
pub fn read_model<T: Real>(path: &Path) -> Result<ModelSpec<T>, ModelError> {
    let mut head = [0u8; 4];
    {
        let mut f = std::fs::File::open(path)?;
        let n = f.read(&mut head)?;
        if n < 4 {
            return Err(ModelError::Format("file too short".into()));
        }
    }
    if &head == MODEL_MAGIC {
        read_model_binary(path)
    } else {
        read_model_json(path)
    }
}
