//! Network inputs assembled from a coloring state and an embedding table.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;

use super::FcnConfig;
use crate::coloring::{ActionSet, ColoringState};
use crate::embedding::{encode_multihot, encode_onehot, EmbeddingTable, ENCODING_SIZE};
use crate::error::contract;
use crate::nn::Mat;
use crate::rng;
use crate::Result;

pub const GRAPH_CONTEXT_WIDTH: usize = 4 * ENCODING_SIZE;

/// How the vertices representing an existing color are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSetRule {
    /// The most recently colored members, newest first.
    Recent,
    /// A uniform sample of members, seeded by `(seed, t, color)`.
    Random { seed: u64 },
}

/// Everything the networks see at one move. Embedding references are kept as
/// vertex ids (`None` is zero padding) so gradients can be routed back to
/// the embeddings that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Contexts {
    /// Blocks: vertex count (by bit length), colors used, vertices colored,
    /// multi-hot of the valid existing colors.
    pub graph: Vec<f64>,
    /// The last `w` colored vertices then the next `w` in visitation order.
    pub problem: Vec<Option<u32>>,
    /// One set of `m` vertices per candidate; the new-color set is empty.
    pub color_sets: Vec<Vec<Option<u32>>>,
    /// Candidates in network order: valid colors ascending, `new` last.
    pub actions: ActionSet,
    /// Whether the candidate cap dropped valid colors.
    pub capped: bool,
}

impl Contexts {
    pub fn candidate_count(&self) -> usize {
        self.color_sets.len()
    }
}

/// Upper end of the color-count encodings: the greedy bound `max_degree + 1`.
fn color_scale(state: &ColoringState) -> usize {
    state.graph().max_degree() + 1
}

fn bit_length(n: usize) -> usize {
    (usize::BITS - n.leading_zeros()) as usize
}

pub fn build_contexts(
    state: &ColoringState,
    table: &EmbeddingTable,
    cfg: &FcnConfig,
) -> Result<Contexts> {
    let n = state.vertex_count();
    if table.vertex_count != n {
        return Err(contract!(
            "embedding table has {} rows for a graph of {n} vertices",
            table.vertex_count
        ));
    }
    if table.dim != cfg.embed_dim {
        return Err(contract!(
            "embedding width {} but the network expects {}",
            table.dim,
            cfg.embed_dim
        ));
    }
    let mut actions = state.valid_actions()?;
    let capped = actions.cap(cfg.candidate_cap);
    let t = state.t();
    let s = ENCODING_SIZE;
    let scale = color_scale(state);

    let mut graph = vec![0.0; GRAPH_CONTEXT_WIDTH];
    graph[encode_onehot(bit_length(n).min(s), s, s)?] = 1.0;
    graph[s + encode_onehot(state.colors_used().min(scale), scale, s)?] = 1.0;
    graph[2 * s + encode_onehot(t, n, s)?] = 1.0;
    let valid = encode_multihot(
        actions.existing.iter().map(|&c| (c as usize).min(scale)),
        scale,
        s,
    )?;
    graph[3 * s..].copy_from_slice(&valid);

    let w = cfg.window;
    let order = state.order();
    let problem = (0..2 * w)
        .map(|k| {
            let pos = t as isize - w as isize + k as isize;
            (pos >= 0 && (pos as usize) < n).then(|| order[pos as usize])
        })
        .collect();

    let m = cfg.set_size;
    let mut color_sets: Vec<Vec<Option<u32>>> = actions
        .existing
        .iter()
        .map(|&c| {
            let members = state.members(c);
            let mut set: Vec<Option<u32>> = match cfg.color_sets {
                ColorSetRule::Recent => members.iter().rev().take(m).map(|&v| Some(v)).collect(),
                ColorSetRule::Random { seed } => {
                    let mut r = rng::rng(rng::mix(seed, t as u64, c as u64));
                    let mut picks: Vec<usize> =
                        sample(&mut r, members.len(), m.min(members.len())).into_vec();
                    picks.sort_unstable();
                    picks.into_iter().map(|i| Some(members[i])).collect()
                }
            };
            set.resize(m, None);
            set
        })
        .collect();
    color_sets.push(vec![None; m]);

    Ok(Contexts {
        graph,
        problem,
        color_sets,
        actions,
        capped,
    })
}

/// Dense inputs for a batch of moves.
#[derive(Clone, Debug)]
pub struct BatchInputs {
    /// `B x 128`.
    pub graph: Mat,
    /// `(B * 2w) x D`, move-major.
    pub problem: Mat,
    /// `(sum of candidates) x (m * D)`.
    pub sets: Mat,
    /// Candidate count per move.
    pub candidates: Vec<usize>,
    pub window: usize,
}

impl BatchInputs {
    pub fn moves(&self) -> usize {
        self.graph.rows
    }

    pub fn assemble(items: &[(&Contexts, &EmbeddingTable)], cfg: &FcnConfig) -> Result<Self> {
        let b = items.len();
        let d = cfg.embed_dim;
        let w2 = 2 * cfg.window;
        let m = cfg.set_size;
        let total: usize = items.iter().map(|(c, _)| c.candidate_count()).sum();
        let mut graph = Mat::zeros(b, GRAPH_CONTEXT_WIDTH);
        let mut problem = Mat::zeros(b * w2, d);
        let mut sets = Mat::zeros(total, m * d);
        let mut candidates = Vec::with_capacity(b);
        let mut row = 0;
        for (i, (ctx, table)) in items.iter().enumerate() {
            if ctx.problem.len() != w2 || ctx.graph.len() != GRAPH_CONTEXT_WIDTH {
                return Err(contract!("context built for a different configuration"));
            }
            graph.row_mut(i).copy_from_slice(&ctx.graph);
            for (k, v) in ctx.problem.iter().enumerate() {
                if let Some(v) = v {
                    problem.row_mut(i * w2 + k).copy_from_slice(table.row(*v as usize));
                }
            }
            for set in &ctx.color_sets {
                let dst = sets.row_mut(row);
                for (k, v) in set.iter().enumerate() {
                    if let Some(v) = v {
                        dst[k * d..(k + 1) * d].copy_from_slice(table.row(*v as usize));
                    }
                }
                row += 1;
            }
            candidates.push(ctx.candidate_count());
        }
        Ok(BatchInputs {
            graph,
            problem,
            sets,
            candidates,
            window: cfg.window,
        })
    }
}
