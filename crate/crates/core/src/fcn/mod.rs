//! FastColorNet: the policy/value network `(p, v) = f(state)`.
//!
//! The V-network runs a residual Conv1D stack over the problem context
//! (embeddings of the vertices around the current move), pools it, appends
//! the graph context and feeds a residual fully connected stack ending in a
//! (win, tie, lose) softmax.
//!
//! The P-network scores every candidate color independently from
//! `[graph context, pooled problem context, embeddings of that color's
//! vertices]`, mixes the per-candidate features with a second Conv1D stack
//! running across candidates and normalizes with a softmax whose length is
//! the number of candidates.

mod context;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

pub use context::{build_contexts, BatchInputs, ColorSetRule, Contexts, GRAPH_CONTEXT_WIDTH};

use crate::coloring::{ColoringState, Outcome};
use crate::embedding::{
    compute_embeddings, walk_backprop, EmbeddingParams, EmbeddingTable, TransferNet,
    DEFAULT_EMBED_DIM,
};
use crate::error::contract;
use crate::graph::Graph;
use crate::nn::layers::{BnCache, ConvCache};
use crate::nn::{
    adam_step, apply_bn_updates, cross_entropy, pool, pool_backward, relu, relu_backward,
    softmax, AdamState, BatchNorm, BnUpdate, Conv1d, Dense, Grads, Mat, Mode, ParamStore,
    Pooling,
};
use crate::rng::{self, Rng};
use crate::Result;

/// What the P-network's per-candidate scorer sees of the problem context.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemInput {
    /// The conv output pooled to one vector.
    Pooled,
    /// The whole conv output sequence, flattened.
    Raw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcnConfig {
    pub embed_dim: usize,
    pub embed_iterations: usize,
    pub embed_depth: usize,
    pub embed_seed: u64,
    /// Problem context half-width `w`.
    pub window: usize,
    /// Vertices per candidate color set `m`.
    pub set_size: usize,
    pub conv_channels: usize,
    pub conv_layers: usize,
    pub conv_kernel: usize,
    pub v_width: usize,
    pub v_layers: usize,
    pub p_width: usize,
    pub p_layers: usize,
    /// At most this many existing colors are scored (plus `new`).
    pub candidate_cap: usize,
    pub pooling: Pooling,
    pub problem_input: ProblemInput,
    pub color_sets: ColorSetRule,
    /// Probability that a context embedding gets a gradient walk in training.
    pub walk_prob: f64,
    /// Most walks attached per move.
    pub walk_budget: usize,
    /// Zero the output layers at initialization (uniform p, uniform v3).
    pub zero_init_heads: bool,
}

impl Default for FcnConfig {
    fn default() -> Self {
        FcnConfig {
            embed_dim: DEFAULT_EMBED_DIM,
            embed_iterations: 3,
            embed_depth: 2,
            embed_seed: 0,
            window: 8,
            set_size: 4,
            conv_channels: 128,
            conv_layers: 3,
            conv_kernel: 7,
            v_width: 512,
            v_layers: 3,
            p_width: 512,
            p_layers: 5,
            candidate_cap: 256,
            pooling: Pooling::Mean,
            problem_input: ProblemInput::Pooled,
            color_sets: ColorSetRule::Recent,
            walk_prob: 0.25,
            walk_budget: 16,
            zero_init_heads: true,
        }
    }
}

impl FcnConfig {
    pub fn embedding_params(&self) -> EmbeddingParams {
        EmbeddingParams {
            iterations: self.embed_iterations,
            depth: self.embed_depth,
            seed: self.embed_seed,
        }
    }
}

struct Block<L> {
    layer: L,
    norm: BatchNorm,
    residual: bool,
}

struct BlockTape<C> {
    input: Mat,
    layer: C,
    norm: BnCache,
    act: Mat,
}

/// Residual `x + relu(bn(conv(x)))` layers (no skip where widths differ).
struct ConvStack {
    blocks: Vec<Block<Conv1d>>,
}

impl ConvStack {
    fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        channels: usize,
        layers: usize,
        kernel: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(layers);
        for k in 0..layers {
            let cin = if k == 0 { inputs } else { channels };
            blocks.push(Block {
                layer: Conv1d::new(store, &format!("{name}.{k}.conv"), cin, channels, kernel, rng)?,
                norm: BatchNorm::new(store, &format!("{name}.{k}.bn"), channels, rng)?,
                residual: cin == channels,
            });
        }
        Ok(ConvStack { blocks })
    }

    fn forward(
        &self,
        p: &ParamStore,
        x: &Mat,
        lens: &[usize],
        mode: Mode,
        ups: &mut Vec<BnUpdate>,
    ) -> Result<(Mat, Vec<BlockTape<ConvCache>>)> {
        let mut x = x.clone();
        let mut tape = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (z, cc) = b.layer.forward(p, &x, lens)?;
            let (zn, bc) = b.norm.forward(p, &z, mode, ups)?;
            let act = relu(&zn);
            let out = if b.residual { x.add(&act) } else { act.clone() };
            tape.push(BlockTape {
                input: x,
                layer: cc,
                norm: bc,
                act,
            });
            x = out;
        }
        Ok((x, tape))
    }

    fn backward(
        &self,
        p: &ParamStore,
        tape: &[BlockTape<ConvCache>],
        lens: &[usize],
        dy: Mat,
        g: &mut Grads,
    ) -> Mat {
        let mut dy = dy;
        for (b, t) in self.blocks.iter().zip(tape).rev() {
            let dz = b.norm.backward(p, &t.norm, &relu_backward(&t.act, &dy), g);
            let mut dx = b.layer.backward(p, &t.layer, lens, &dz, g);
            if b.residual {
                dx.add_assign(&dy);
            }
            dy = dx;
        }
        dy
    }
}

/// Residual `x + relu(bn(dense(x)))` layers (no skip where widths differ).
struct FcStack {
    blocks: Vec<Block<Dense>>,
}

impl FcStack {
    fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        width: usize,
        layers: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(layers);
        for k in 0..layers {
            let cin = if k == 0 { inputs } else { width };
            blocks.push(Block {
                layer: Dense::new(store, &format!("{name}.{k}.dense"), cin, width, false, rng)?,
                norm: BatchNorm::new(store, &format!("{name}.{k}.bn"), width, rng)?,
                residual: cin == width,
            });
        }
        Ok(FcStack { blocks })
    }

    fn forward(
        &self,
        p: &ParamStore,
        x: &Mat,
        mode: Mode,
        ups: &mut Vec<BnUpdate>,
    ) -> Result<(Mat, Vec<BlockTape<()>>)> {
        let mut x = x.clone();
        let mut tape = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let z = b.layer.forward(p, &x)?;
            let (zn, bc) = b.norm.forward(p, &z, mode, ups)?;
            let act = relu(&zn);
            let out = if b.residual { x.add(&act) } else { act.clone() };
            tape.push(BlockTape {
                input: x,
                layer: (),
                norm: bc,
                act,
            });
            x = out;
        }
        Ok((x, tape))
    }

    fn backward(&self, p: &ParamStore, tape: &[BlockTape<()>], dy: Mat, g: &mut Grads) -> Mat {
        let mut dy = dy;
        for (b, t) in self.blocks.iter().zip(tape).rev() {
            let dz = b.norm.backward(p, &t.norm, &relu_backward(&t.act, &dy), g);
            let mut dx = b.layer.backward(p, &t.input, &dz, g);
            if b.residual {
                dx.add_assign(&dy);
            }
            dy = dx;
        }
        dy
    }
}

struct VNet {
    conv: ConvStack,
    fc: FcStack,
    head: Dense,
}

pub struct VTape {
    lens: Vec<usize>,
    conv: Vec<BlockTape<ConvCache>>,
    pool: crate::nn::layers::PoolCache,
    fc: Vec<BlockTape<()>>,
    head_in: Mat,
    pooled_width: usize,
}

struct PNet {
    conv: ConvStack,
    scorer: FcStack,
    feature: Dense,
    mix: ConvStack,
    head: Dense,
}

pub struct PTape {
    lens: Vec<usize>,
    conv: Vec<BlockTape<ConvCache>>,
    pool: Option<crate::nn::layers::PoolCache>,
    context_width: usize,
    scorer: Vec<BlockTape<()>>,
    feature_in: Mat,
    mix: Vec<BlockTape<ConvCache>>,
    head_in: Mat,
    candidates: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetOutput {
    /// Distribution over the candidates, in [`Contexts::actions`] order.
    pub p: Vec<f64>,
    /// (win, tie, lose).
    pub v3: [f64; 3],
    /// `v3[win] - v3[lose]`.
    pub v: f64,
}

impl NetOutput {
    pub fn p_win(&self) -> f64 {
        self.v3[0]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    /// A supported target met a probability below the log clamp.
    pub clamped: bool,
}

/// `-(pi . ln p) - ln v3[z]`.
pub fn fcn_loss(p: &[f64], v3: &[f64; 3], pi: &[f64], z: Outcome) -> Result<LossValue> {
    if p.len() != pi.len() {
        return Err(contract!("policy has {} entries, target {}", p.len(), pi.len()));
    }
    let mass: f64 = pi.iter().sum();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(contract!("policy target sums to {mass}"));
    }
    let (policy, c1) = cross_entropy(p, pi);
    let mut target = [0.0; 3];
    target[z.index()] = 1.0;
    let (value, c2) = cross_entropy(v3, &target);
    Ok(LossValue {
        total: policy + value,
        policy,
        value,
        clamped: c1 || c2,
    })
}

/// One training example: contexts plus the embeddings/graph they refer to.
pub struct TrainItem<'a> {
    pub contexts: &'a Contexts,
    pub table: &'a EmbeddingTable,
    pub graph: &'a Graph,
    pub pi: &'a [f64],
    pub z: Outcome,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clamped: usize,
    pub walks: usize,
}

/// Gradients of a batch, ready for an optimizer step.
pub struct BatchGradients {
    pub stats: StepStats,
    pub grads: Grads,
    pub bn_updates: Vec<BnUpdate>,
}

pub struct FastColorNet {
    pub cfg: FcnConfig,
    pub embed: TransferNet,
    v: VNet,
    p: PNet,
}

impl FastColorNet {
    /// Registers every parameter in a fresh store; `seed` fixes the init.
    pub fn new(cfg: FcnConfig, seed: u64) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new();
        let net = Self::register(cfg, &mut store, seed)?;
        Ok((net, store))
    }

    /// Rebuilds the layer graph for `cfg` and registers it in `store`.
    /// Registration order is fixed, so the same config and seed always give
    /// the same parameter names and values.
    pub fn register(cfg: FcnConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        if cfg.window == 0 || cfg.set_size == 0 || cfg.conv_layers == 0 {
            return Err(crate::Error::Param("window, set size and conv depth must be positive".into()));
        }
        if cfg.v_layers == 0 || cfg.p_layers == 0 {
            return Err(crate::Error::Param("fully connected stacks need a layer".into()));
        }
        let mut r = rng::rng(seed);
        let d = cfg.embed_dim;
        let c = cfg.conv_channels;
        let embed = TransferNet::new(store, "embed", d, &mut r)?;
        let v = VNet {
            conv: ConvStack::new(store, "v.seq", d, c, cfg.conv_layers, cfg.conv_kernel, &mut r)?,
            fc: FcStack::new(store, "v.fc", c + GRAPH_CONTEXT_WIDTH, cfg.v_width, cfg.v_layers, &mut r)?,
            head: Dense::new(store, "v.head", cfg.v_width, 3, cfg.zero_init_heads, &mut r)?,
        };
        let context_width = match cfg.problem_input {
            ProblemInput::Pooled => c,
            ProblemInput::Raw => 2 * cfg.window * c,
        };
        let scorer_in = GRAPH_CONTEXT_WIDTH + context_width + cfg.set_size * d;
        let p = PNet {
            conv: ConvStack::new(store, "p.seq", d, c, cfg.conv_layers, cfg.conv_kernel, &mut r)?,
            scorer: FcStack::new(store, "p.fc", scorer_in, cfg.p_width, cfg.p_layers, &mut r)?,
            feature: Dense::new(store, "p.feature", cfg.p_width, c, false, &mut r)?,
            mix: ConvStack::new(store, "p.mix", c, c, cfg.conv_layers, cfg.conv_kernel, &mut r)?,
            head: Dense::new(store, "p.head", c, 1, cfg.zero_init_heads, &mut r)?,
        };
        Ok(FastColorNet { cfg, embed, v, p })
    }

    pub fn embed_graph(&self, store: &ParamStore, g: &Graph) -> Result<EmbeddingTable> {
        compute_embeddings(g, &self.embed, store, self.cfg.embedding_params())
    }

    pub fn contexts(&self, state: &ColoringState, table: &EmbeddingTable) -> Result<Contexts> {
        build_contexts(state, table, &self.cfg)
    }

    fn problem_lens(&self, inputs: &BatchInputs) -> Vec<usize> {
        vec![2 * self.cfg.window; inputs.moves()]
    }

    /// V-network logits, `B x 3`.
    pub fn v_forward(
        &self,
        store: &ParamStore,
        inputs: &BatchInputs,
        mode: Mode,
        ups: &mut Vec<BnUpdate>,
    ) -> Result<(Mat, VTape)> {
        let lens = self.problem_lens(inputs);
        let (seq, conv) = self.v.conv.forward(store, &inputs.problem, &lens, mode, ups)?;
        let (pooled, pool_cache) = pool(&seq, &lens, self.cfg.pooling)?;
        let fc_in = Mat::hcat(&[&pooled, &inputs.graph])?;
        let (h, fc) = self.v.fc.forward(store, &fc_in, mode, ups)?;
        let logits = self.v.head.forward(store, &h)?;
        Ok((
            logits,
            VTape {
                lens,
                conv,
                pool: pool_cache,
                fc,
                head_in: h,
                pooled_width: pooled.cols,
            },
        ))
    }

    /// Returns the gradient on the problem-context embeddings.
    pub fn v_backward(&self, store: &ParamStore, tape: &VTape, dlogits: &Mat, g: &mut Grads) -> Mat {
        let dh = self.v.head.backward(store, &tape.head_in, dlogits, g);
        let dfc_in = self.v.fc.backward(store, &tape.fc, dh, g);
        let parts = dfc_in.hsplit(&[tape.pooled_width, GRAPH_CONTEXT_WIDTH]);
        let dseq = pool_backward(&tape.pool, &parts[0]);
        self.v.conv.backward(store, &tape.conv, &tape.lens, dseq, g)
    }

    /// P-network logits, one per candidate, moves concatenated.
    pub fn p_forward(
        &self,
        store: &ParamStore,
        inputs: &BatchInputs,
        mode: Mode,
        ups: &mut Vec<BnUpdate>,
    ) -> Result<(Vec<f64>, PTape)> {
        if inputs.candidates.contains(&0) {
            return Err(contract!("a move has no candidate colors"));
        }
        let lens = self.problem_lens(inputs);
        let (seq, conv) = self.p.conv.forward(store, &inputs.problem, &lens, mode, ups)?;
        let (context, pool_cache) = match self.cfg.problem_input {
            ProblemInput::Pooled => {
                let (m, c) = pool(&seq, &lens, self.cfg.pooling)?;
                (m, Some(c))
            }
            ProblemInput::Raw => {
                let width = seq.cols * 2 * self.cfg.window;
                (Mat::from_vec(inputs.moves(), width, seq.data)?, None)
            }
        };
        let total = inputs.sets.rows;
        let gw = GRAPH_CONTEXT_WIDTH;
        let cw = context.cols;
        let sw = inputs.sets.cols;
        let mut scorer_in = Mat::zeros(total, gw + cw + sw);
        let mut row = 0;
        for (b, &k) in inputs.candidates.iter().enumerate() {
            for _ in 0..k {
                let dst = scorer_in.row_mut(row);
                dst[..gw].copy_from_slice(inputs.graph.row(b));
                dst[gw..gw + cw].copy_from_slice(context.row(b));
                dst[gw + cw..].copy_from_slice(inputs.sets.row(row));
                row += 1;
            }
        }
        let (h, scorer) = self.p.scorer.forward(store, &scorer_in, mode, ups)?;
        let feat = self.p.feature.forward(store, &h)?;
        let (mixed, mix) = self.p.mix.forward(store, &feat, &inputs.candidates, mode, ups)?;
        let logits = self.p.head.forward(store, &mixed)?;
        Ok((
            logits.data,
            PTape {
                lens,
                conv,
                pool: pool_cache,
                context_width: cw,
                scorer,
                feature_in: h,
                mix,
                head_in: mixed,
                candidates: inputs.candidates.clone(),
            },
        ))
    }

    /// Returns gradients on the problem-context and color-set embeddings.
    pub fn p_backward(
        &self,
        store: &ParamStore,
        tape: &PTape,
        dlogits: &[f64],
        g: &mut Grads,
    ) -> Result<(Mat, Mat)> {
        let dlogits = Mat::from_vec(dlogits.len(), 1, dlogits.to_vec())?;
        let dmixed = self.p.head.backward(store, &tape.head_in, &dlogits, g);
        let dfeat = self.p.mix.backward(store, &tape.mix, &tape.candidates, dmixed, g);
        let dh = self.p.feature.backward(store, &tape.feature_in, &dfeat, g);
        let din = self.p.scorer.backward(store, &tape.scorer, dh, g);
        let gw = GRAPH_CONTEXT_WIDTH;
        let cw = tape.context_width;
        let sw = din.cols - gw - cw;
        let moves = tape.candidates.len();
        let mut dcontext = Mat::zeros(moves, cw);
        let mut dsets = Mat::zeros(din.rows, sw);
        let mut row = 0;
        for (b, &k) in tape.candidates.iter().enumerate() {
            for _ in 0..k {
                let src = din.row(row);
                for (d, v) in dcontext.row_mut(b).iter_mut().zip(&src[gw..gw + cw]) {
                    *d += v;
                }
                dsets.row_mut(row).copy_from_slice(&src[gw + cw..]);
                row += 1;
            }
        }
        let dseq = match &tape.pool {
            Some(cache) => pool_backward(cache, &dcontext),
            None => Mat::from_vec(moves * 2 * self.cfg.window, self.cfg.conv_channels, dcontext.data)?,
        };
        let dproblem = self.p.conv.backward(store, &tape.conv, &tape.lens, dseq, g);
        Ok((dproblem, dsets))
    }

    /// Batched inference in eval mode.
    pub fn evaluate(&self, store: &ParamStore, inputs: &BatchInputs) -> Result<Vec<NetOutput>> {
        let mut ups = Vec::new();
        let (vlogits, _) = self.v_forward(store, inputs, Mode::Eval, &mut ups)?;
        let (plogits, _) = self.p_forward(store, inputs, Mode::Eval, &mut ups)?;
        Ok(split_outputs(&vlogits, &plogits, &inputs.candidates))
    }

    pub fn predict(
        &self,
        store: &ParamStore,
        contexts: &Contexts,
        table: &EmbeddingTable,
    ) -> Result<NetOutput> {
        let inputs = BatchInputs::assemble(&[(contexts, table)], &self.cfg)?;
        Ok(self.evaluate(store, &inputs)?.pop().expect("one move"))
    }

    /// Loss and parameter gradients for fixed input matrices, averaged over
    /// the batch. Returns the gradients on the problem and set inputs too.
    pub fn loss_and_grads(
        &self,
        store: &ParamStore,
        inputs: &BatchInputs,
        pis: &[&[f64]],
        zs: &[Outcome],
        mode: Mode,
    ) -> Result<(LossValue, Grads, Mat, Mat, Vec<BnUpdate>)> {
        let b = inputs.moves();
        if pis.len() != b || zs.len() != b {
            return Err(contract!("{b} moves but {} targets", pis.len()));
        }
        let mut ups = Vec::new();
        let (vlogits, vtape) = self.v_forward(store, inputs, mode, &mut ups)?;
        let (plogits, ptape) = self.p_forward(store, inputs, mode, &mut ups)?;
        let outputs = split_outputs(&vlogits, &plogits, &inputs.candidates);
        let scale = 1.0 / b as f64;
        let mut total = LossValue::default();
        let mut dv = Mat::zeros(b, 3);
        let mut dp = Vec::with_capacity(plogits.len());
        for (i, out) in outputs.iter().enumerate() {
            let l = fcn_loss(&out.p, &out.v3, pis[i], zs[i])?;
            total.total += l.total * scale;
            total.policy += l.policy * scale;
            total.value += l.value * scale;
            total.clamped |= l.clamped;
            for k in 0..3 {
                let target = if k == zs[i].index() { 1.0 } else { 0.0 };
                dv.row_mut(i)[k] = (out.v3[k] - target) * scale;
            }
            dp.extend(out.p.iter().zip(pis[i]).map(|(p, t)| (p - t) * scale));
        }
        let mut grads = Grads::zeros_like(store);
        let mut dproblem = self.v_backward(store, &vtape, &dv, &mut grads);
        let (dproblem_p, dsets) = self.p_backward(store, &ptape, &dp, &mut grads)?;
        dproblem.add_assign(&dproblem_p);
        Ok((total, grads, dproblem, dsets, ups))
    }

    /// Full training gradients: network loss plus walk-truncated
    /// backpropagation into the transfer function for a random subset of the
    /// context embeddings.
    pub fn batch_gradients(
        &self,
        store: &ParamStore,
        batch: &[TrainItem<'_>],
        rng: &mut Rng,
    ) -> Result<BatchGradients> {
        if batch.is_empty() {
            return Err(crate::Error::State("empty training batch".into()));
        }
        let items: Vec<(&Contexts, &EmbeddingTable)> =
            batch.iter().map(|it| (it.contexts, it.table)).collect();
        let inputs = BatchInputs::assemble(&items, &self.cfg)?;
        let pis: Vec<&[f64]> = batch.iter().map(|it| it.pi).collect();
        let zs: Vec<Outcome> = batch.iter().map(|it| it.z).collect();
        let (loss, mut grads, dproblem, dsets, bn_updates) =
            self.loss_and_grads(store, &inputs, &pis, &zs, Mode::Train)?;

        let d = self.cfg.embed_dim;
        let w2 = 2 * self.cfg.window;
        let mut walks = 0;
        let mut set_row = 0;
        for (i, item) in batch.iter().enumerate() {
            let mut refs: Vec<(u32, &[f64])> = Vec::new();
            for (k, v) in item.contexts.problem.iter().enumerate() {
                if let Some(v) = v {
                    refs.push((*v, dproblem.row(i * w2 + k)));
                }
            }
            for set in &item.contexts.color_sets {
                let row = dsets.row(set_row);
                for (k, v) in set.iter().enumerate() {
                    if let Some(v) = v {
                        refs.push((*v, &row[k * d..(k + 1) * d]));
                    }
                }
                set_row += 1;
            }
            let mut budget = self.cfg.walk_budget;
            for (v, upstream) in refs {
                if budget == 0 {
                    break;
                }
                if rng.random::<f64>() < self.cfg.walk_prob {
                    walk_backprop(item.graph, &self.embed, store, item.table, v as usize, upstream, &mut grads)?;
                    budget -= 1;
                    walks += 1;
                }
            }
        }
        Ok(BatchGradients {
            stats: StepStats {
                loss: loss.total,
                policy_loss: loss.policy,
                value_loss: loss.value,
                clamped: usize::from(loss.clamped),
                walks,
            },
            grads,
            bn_updates,
        })
    }

    /// Forward, backward and one Adam update. Non-finite losses leave the
    /// parameters untouched and are reported as an error.
    pub fn train_step(
        &self,
        store: &mut ParamStore,
        adam: &mut AdamState,
        batch: &[TrainItem<'_>],
        rng: &mut Rng,
    ) -> Result<StepStats> {
        let bg = self.batch_gradients(store, batch, rng)?;
        if !bg.stats.loss.is_finite() || !bg.grads.is_finite() {
            return Err(crate::Error::State(format!("non-finite loss {}", bg.stats.loss)));
        }
        adam_step(store, &bg.grads, adam)?;
        apply_bn_updates(store, &bg.bn_updates);
        Ok(bg.stats)
    }
}

fn split_outputs(vlogits: &Mat, plogits: &[f64], candidates: &[usize]) -> Vec<NetOutput> {
    let mut start = 0;
    candidates
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let p = softmax(&plogits[start..start + k]);
            start += k;
            let v = softmax(vlogits.row(i));
            let v3 = [v[0], v[1], v[2]];
            NetOutput {
                p,
                v3,
                v: v3[0] - v3[2],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
