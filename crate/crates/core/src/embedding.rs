//! Learned message-passing vertex embeddings.
//!
//! Every iteration, each vertex reads the previous embedding of one neighbor
//! drawn at random and runs a shared LSTM transfer function over the
//! concatenation of its own features and that message:
//!
//! ```text
//! nu_i  = [onehot(deg i), mu_i]
//! l_i   = [nu_i, onehot(deg j), mu_j]          j uniform in N(i)
//! x, c  = message(l_i), 0
//! repeat L times: x, c = lstm(x, c)
//! mu_i' = lstm(self(nu_i), c).h
//! ```
//!
//! Neighbor draws depend only on `(seed, vertex, iteration)` so the chain of
//! messages that produced any embedding can be regenerated, which is what
//! [`walk_backprop`] differentiates through.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::contract;
use crate::graph::Graph;
use crate::nn::{Dense, Grads, LstmCell, Mat, ParamStore};
use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const ENCODING_SIZE: usize = 32;
pub const DEFAULT_EMBED_DIM: usize = 128;

/// Position `floor(value / max * size)`, clamped to `size - 1`; `max == 0`
/// maps to position 0.
pub fn encode_onehot(value: usize, max: usize, size: usize) -> Result<usize> {
    if value > max {
        return Err(Error::Contract(format!("one-hot value {value} exceeds max {max}")));
    }
    if size == 0 {
        return Err(Error::Param("encoding size must be positive".into()));
    }
    if max == 0 {
        return Ok(0);
    }
    let pos = (value as u128 * size as u128 / max as u128) as usize;
    Ok(pos.min(size - 1))
}

pub fn onehot_vec(value: usize, max: usize, size: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; size];
    v[encode_onehot(value, max, size)?] = 1.0;
    Ok(v)
}

/// Union of one-hot positions; distinct values may share a bit.
pub fn encode_multihot<I>(values: I, max: usize, size: usize) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = usize>,
{
    let mut v = vec![0.0; size];
    for value in values {
        v[encode_onehot(value, max, size)?] = 1.0;
    }
    Ok(v)
}

/// Degree one-hot with the graph's max degree (1 for edgeless graphs).
pub fn degree_feature(g: &Graph, v: usize) -> usize {
    encode_onehot(g.degree(v), g.max_degree().max(1), ENCODING_SIZE).expect("degree <= max")
}

/// The shared transfer function.
#[derive(Clone, Debug)]
pub struct TransferNet {
    /// `[onehot(d_i), mu_i, onehot(d_j), mu_j]` to LSTM width.
    pub message: Dense,
    /// `[onehot(d_i), mu_i]` to LSTM width, fed to the final step.
    pub own: Dense,
    pub lstm: LstmCell,
    pub dim: usize,
}

impl TransferNet {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut Rng) -> Result<Self> {
        let own_width = ENCODING_SIZE + dim;
        Ok(TransferNet {
            message: Dense::new(store, &format!("{prefix}.message"), 2 * own_width, dim, false, rng)?,
            own: Dense::new(store, &format!("{prefix}.own"), own_width, dim, false, rng)?,
            lstm: LstmCell::new(store, &format!("{prefix}.lstm"), dim, rng)?,
            dim,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingParams {
    /// Message-passing rounds `T`.
    pub iterations: usize,
    /// LSTM steps per round `L`.
    pub depth: usize,
    pub seed: u64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            iterations: 3,
            depth: 2,
            seed: 0,
        }
    }
}

/// Neighbor read by vertex `v` in round `t` (1-based); `None` when isolated.
pub fn sampled_neighbor(g: &Graph, seed: u64, v: usize, t: usize) -> Option<usize> {
    let nb = g.neighbors(v);
    if nb.is_empty() {
        None
    } else {
        Some(nb[rng::mixed_index(seed, v as u64, t as u64, nb.len())] as usize)
    }
}

/// Per-round embeddings; row `v` of round `T` is the vertex embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vertex_count: usize,
    pub params: EmbeddingParams,
    /// `rounds[t - 1]` holds `mu^(t)`; round 0 is implicitly zero.
    pub rounds: Vec<Mat>,
    zero: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vertex_count: usize, params: EmbeddingParams, rounds: Vec<Mat>) -> Self {
        EmbeddingTable {
            dim,
            vertex_count,
            params,
            rounds,
            zero: vec![0.0; dim],
        }
    }

    /// `mu_v^(t)`, zero for `t == 0`.
    pub fn at(&self, t: usize, v: usize) -> &[f64] {
        if t == 0 {
            &self.zero
        } else {
            self.rounds[t - 1].row(v)
        }
    }

    pub fn row(&self, v: usize) -> &[f64] {
        self.at(self.rounds.len(), v)
    }

    pub fn iterations(&self) -> usize {
        self.rounds.len()
    }
}

fn check_params(params: &EmbeddingParams) -> Result<()> {
    if params.depth == 0 {
        return Err(Error::Param("LSTM depth must be at least 1".into()));
    }
    Ok(())
}

pub fn compute_embeddings(
    g: &Graph,
    net: &TransferNet,
    store: &ParamStore,
    params: EmbeddingParams,
) -> Result<EmbeddingTable> {
    let seed = params.seed;
    compute_embeddings_with(g, net, store, params, |v, t| sampled_neighbor(g, seed, v, t))
}

/// [`compute_embeddings`] with a caller-supplied neighbor choice.
pub fn compute_embeddings_with<S>(
    g: &Graph,
    net: &TransferNet,
    store: &ParamStore,
    params: EmbeddingParams,
    sampler: S,
) -> Result<EmbeddingTable>
where
    S: Fn(usize, usize) -> Option<usize>,
{
    check_params(&params)?;
    let n = g.vertex_count();
    let d = net.dim;
    let s = ENCODING_SIZE;
    let deg: Vec<usize> = (0..n).map(|v| degree_feature(g, v)).collect();
    let mut rounds: Vec<Mat> = Vec::with_capacity(params.iterations);
    let zero = Mat::zeros(n, d);
    for t in 1..=params.iterations {
        let prev = rounds.last().unwrap_or(&zero);
        let mut own_in = Mat::zeros(n, s + d);
        let mut msg_in = Mat::zeros(n, 2 * (s + d));
        for v in 0..n {
            let row = own_in.row_mut(v);
            row[deg[v]] = 1.0;
            row[s..].copy_from_slice(prev.row(v));
            let own_row = own_in.row(v).to_vec();
            let m = msg_in.row_mut(v);
            m[..s + d].copy_from_slice(&own_row);
            if let Some(j) = sampler(v, t) {
                m[s + d + deg[j]] = 1.0;
                m[2 * s + d..].copy_from_slice(prev.row(j));
            }
        }
        let mut x = net.message.forward(store, &msg_in)?;
        let mut c = Mat::zeros(n, d);
        for _ in 0..params.depth {
            let (h, c2, _) = net.lstm.forward(store, &x, &c)?;
            x = h;
            c = c2;
        }
        let y = net.own.forward(store, &own_in)?;
        let (mu, _, _) = net.lstm.forward(store, &y, &c)?;
        rounds.push(mu);
    }
    Ok(EmbeddingTable::new(d, n, params, rounds))
}

/// Vertices of the message chain ending at `vertex` in the last round:
/// entry `t - 1` is the vertex updated in round `t`. The chain starts later
/// than round 1 when it reaches an isolated vertex.
pub fn sample_walk(g: &Graph, vertex: usize, params: &EmbeddingParams) -> Vec<(usize, usize)> {
    let mut walk = Vec::new();
    let mut v = vertex;
    let mut t = params.iterations;
    while t >= 1 {
        walk.push((t, v));
        match sampled_neighbor(g, params.seed, v, t) {
            Some(j) if t > 1 => v = j,
            _ => break,
        }
        t -= 1;
    }
    walk.reverse();
    walk
}

struct WalkStep {
    msg_in: Mat,
    own_in: Mat,
    lstm: Vec<crate::nn::layers::LstmCache>,
    final_cache: crate::nn::layers::LstmCache,
    /// Whether the message embedding is itself on the walk.
    chained: bool,
}

fn walk_forward(
    g: &Graph,
    net: &TransferNet,
    store: &ParamStore,
    table: &EmbeddingTable,
    vertex: usize,
) -> Result<(Vec<WalkStep>, Vec<f64>)> {
    if vertex >= g.vertex_count() || table.vertex_count != g.vertex_count() {
        return Err(contract!("walk vertex {vertex} outside the embedded graph"));
    }
    let params = table.params;
    check_params(&params)?;
    let (s, d) = (ENCODING_SIZE, net.dim);
    let walk = sample_walk(g, vertex, &params);
    let mut steps = Vec::with_capacity(walk.len());
    let mut carried: Option<Vec<f64>> = None;
    for &(t, v) in &walk {
        let mut own_in = Mat::zeros(1, s + d);
        own_in.data[degree_feature(g, v)] = 1.0;
        own_in.data[s..].copy_from_slice(table.at(t - 1, v));
        let mut msg_in = Mat::zeros(1, 2 * (s + d));
        msg_in.data[..s + d].copy_from_slice(&own_in.data);
        let chained = carried.is_some();
        if let Some(j) = sampled_neighbor(g, params.seed, v, t) {
            msg_in.data[s + d + degree_feature(g, j)] = 1.0;
            let mu_j = carried.take().unwrap_or_else(|| table.at(t - 1, j).to_vec());
            msg_in.data[2 * s + d..].copy_from_slice(&mu_j);
        }
        let mut x = net.message.forward(store, &msg_in)?;
        let mut c = Mat::zeros(1, d);
        let mut caches = Vec::with_capacity(params.depth);
        for _ in 0..params.depth {
            let (h, c2, cache) = net.lstm.forward(store, &x, &c)?;
            caches.push(cache);
            x = h;
            c = c2;
        }
        let y = net.own.forward(store, &own_in)?;
        let (mu, _, final_cache) = net.lstm.forward(store, &y, &c)?;
        steps.push(WalkStep {
            msg_in,
            own_in,
            lstm: caches,
            final_cache,
            chained,
        });
        carried = Some(mu.data);
    }
    Ok((steps, carried.unwrap_or_else(|| vec![0.0; d])))
}

/// Recomputes `mu_vertex^(T)` along its message chain, with every embedding
/// off the chain read from `table` as a constant.
pub fn walk_output(
    g: &Graph,
    net: &TransferNet,
    store: &ParamStore,
    table: &EmbeddingTable,
    vertex: usize,
) -> Result<Vec<f64>> {
    walk_forward(g, net, store, table, vertex).map(|(_, mu)| mu)
}

/// Backpropagates `upstream` (gradient on `mu_vertex^(T)`) into the transfer
/// parameters along the sampled message chain only; embeddings off the chain
/// are treated as constants. With zero rounds nothing is accumulated.
pub fn walk_backprop(
    g: &Graph,
    net: &TransferNet,
    store: &ParamStore,
    table: &EmbeddingTable,
    vertex: usize,
    upstream: &[f64],
    grads: &mut Grads,
) -> Result<()> {
    let d = net.dim;
    if upstream.len() != d {
        return Err(contract!("upstream gradient has {} entries, expected {d}", upstream.len()));
    }
    let (steps, _) = walk_forward(g, net, store, table, vertex)?;
    let s = ENCODING_SIZE;
    let mut dmu = Mat::from_vec(1, d, upstream.to_vec())?;
    for step in steps.iter().rev() {
        let (dy, dc) = net
            .lstm
            .backward(store, &step.final_cache, &dmu, &Mat::zeros(1, d), grads);
        net.own.backward(store, &step.own_in, &dy, grads);
        let mut dx = Mat::zeros(1, d);
        let mut dc = dc;
        for cache in step.lstm.iter().rev() {
            let (dx_prev, dc_prev) = net.lstm.backward(store, cache, &dx, &dc, grads);
            dx = dx_prev;
            dc = dc_prev;
        }
        let dmsg = net.message.backward(store, &step.msg_in, &dx, grads);
        if !step.chained {
            break;
        }
        dmu = Mat::from_vec(1, d, dmsg.data[2 * s + d..].to_vec())?;
    }
    Ok(())
}
