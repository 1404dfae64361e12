//! Finite-difference report over every layer, the embedding walk and both
//! networks. Each entry is the largest relative error between analytic and
//! central-difference gradients (parameters and inputs).

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::coloring::Outcome;
use crate::embedding::{compute_embeddings, walk_backprop, walk_output, EmbeddingParams, TransferNet};
use crate::fcn::{BatchInputs, FastColorNet, FcnConfig, GRAPH_CONTEXT_WIDTH};
use crate::graph::Graph;
use crate::nn::{
    cross_entropy, finite_diff_check, input_diff_check, pool, pool_backward, softmax,
    softmax_cross_entropy_grad, BatchNorm, Conv1d, Dense, Grads, LstmCell, Mat, Mode, ParamStore,
    Pooling,
};
use crate::rng::{self, Rng};
use crate::Result;

pub const EPS: f64 = 1e-5;
const SAMPLES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub name: &'static str,
    pub max_error: f64,
}

fn fill(r: &mut Rng, rows: usize, cols: usize) -> Mat {
    let data = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
    Mat::from_vec(rows, cols, data).expect("shape")
}

fn dot(a: &Mat, b: &Mat) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

fn with_data(m: &Mat, data: &[f64]) -> Mat {
    Mat::from_vec(m.rows, m.cols, data.to_vec()).expect("shape")
}

fn dense(r: &mut Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "d", 4, 3, false, r)?;
    let x = fill(r, 5, 4);
    let up = fill(r, 5, 3);
    let mut g = Grads::zeros_like(&store);
    let dx = layer.backward(&store, &x, &up, &mut g);
    let f = |s: &ParamStore, x: &Mat| dot(&layer.forward(s, x).unwrap(), &up);
    let e1 = finite_diff_check(&store, &g, |s| f(s, &x), EPS, SAMPLES, 1);
    let e2 = input_diff_check(&x.data, &dx.data, |d| f(&store, &with_data(&x, d)), EPS);
    Ok(e1.max(e2))
}

fn conv(r: &mut Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let layer = Conv1d::new(&mut store, "c", 3, 2, 3, r)?;
    let lens = [4, 1, 3];
    let x = fill(r, 8, 3);
    let up = fill(r, 8, 2);
    let (_, cache) = layer.forward(&store, &x, &lens)?;
    let mut g = Grads::zeros_like(&store);
    let dx = layer.backward(&store, &cache, &lens, &up, &mut g);
    let f = |s: &ParamStore, x: &Mat| dot(&layer.forward(s, x, &lens).unwrap().0, &up);
    let e1 = finite_diff_check(&store, &g, |s| f(s, &x), EPS, SAMPLES, 2);
    let e2 = input_diff_check(&x.data, &dx.data, |d| f(&store, &with_data(&x, d)), EPS);
    Ok(e1.max(e2))
}

fn batchnorm(r: &mut Rng, mode: Mode) -> Result<f64> {
    let mut store = ParamStore::new();
    let layer = BatchNorm::new(&mut store, "bn", 3, r)?;
    for (id, lo) in [(layer.gamma, 0.5), (layer.beta, -1.0), (layer.running_mean, -1.0), (layer.running_var, 0.5)] {
        for v in store.get_mut(id).data.iter_mut() {
            *v = r.random_range(lo..lo + 1.0);
        }
    }
    let x = fill(r, 6, 3);
    let up = fill(r, 6, 3);
    let (_, cache) = layer.forward(&store, &x, mode, &mut Vec::new())?;
    let mut g = Grads::zeros_like(&store);
    let dx = layer.backward(&store, &cache, &up, &mut g);
    let f = |s: &ParamStore, x: &Mat| dot(&layer.forward(s, x, mode, &mut Vec::new()).unwrap().0, &up);
    let e1 = finite_diff_check(&store, &g, |s| f(s, &x), EPS, SAMPLES, 3);
    let e2 = input_diff_check(&x.data, &dx.data, |d| f(&store, &with_data(&x, d)), EPS);
    Ok(e1.max(e2))
}

fn lstm(r: &mut Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "l", 3, r)?;
    let x = fill(r, 2, 3);
    let c = fill(r, 2, 3);
    let (uh, uc) = (fill(r, 2, 3), fill(r, 2, 3));
    let (_, _, cache) = cell.forward(&store, &x, &c)?;
    let mut g = Grads::zeros_like(&store);
    let (dx, dc) = cell.backward(&store, &cache, &uh, &uc, &mut g);
    let f = |s: &ParamStore, x: &Mat, c: &Mat| {
        let (h, c2, _) = cell.forward(s, x, c).unwrap();
        dot(&h, &uh) + dot(&c2, &uc)
    };
    let e1 = finite_diff_check(&store, &g, |s| f(s, &x, &c), EPS, SAMPLES, 4);
    let e2 = input_diff_check(&x.data, &dx.data, |d| f(&store, &with_data(&x, d), &c), EPS);
    let e3 = input_diff_check(&c.data, &dc.data, |d| f(&store, &x, &with_data(&c, d)), EPS);
    Ok(e1.max(e2).max(e3))
}

fn pooling(r: &mut Rng, kind: Pooling) -> Result<f64> {
    let lens = [3, 1, 2];
    let x = fill(r, 6, 4);
    let up = fill(r, 3, 4);
    let (_, cache) = pool(&x, &lens, kind)?;
    let dx = pool_backward(&cache, &up);
    Ok(input_diff_check(
        &x.data,
        &dx.data,
        |d| dot(&pool(&with_data(&x, d), &lens, kind).unwrap().0, &up),
        EPS,
    ))
}

fn softmax_ce(r: &mut Rng) -> f64 {
    let logits: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
    let target = [0.1, 0.0, 0.6, 0.3, 0.0];
    let grad = softmax_cross_entropy_grad(&softmax(&logits), &target);
    input_diff_check(&logits, &grad, |l| cross_entropy(&softmax(l), &target).0, EPS)
}

fn walk(r: &mut Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    let net = TransferNet::new(&mut store, "embed", 5, r)?;
    let g = Graph::path(3);
    let params = EmbeddingParams {
        iterations: 2,
        depth: 2,
        seed: 1,
    };
    let table = compute_embeddings(&g, &net, &store, params)?;
    let up: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut grads = Grads::zeros_like(&store);
    walk_backprop(&g, &net, &store, &table, 1, &up, &mut grads)?;
    let f = |s: &ParamStore| {
        let mu = walk_output(&g, &net, s, &table, 1).unwrap();
        mu.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
    };
    Ok(finite_diff_check(&store, &grads, f, EPS, 40, 5))
}

/// A small configuration with every block present.
pub fn tiny_config() -> FcnConfig {
    FcnConfig {
        embed_dim: 6,
        embed_iterations: 2,
        embed_depth: 1,
        window: 2,
        set_size: 2,
        conv_channels: 5,
        conv_layers: 2,
        conv_kernel: 3,
        v_width: 7,
        v_layers: 2,
        p_width: 6,
        p_layers: 2,
        zero_init_heads: false,
        ..Default::default()
    }
}

fn random_inputs(cfg: &FcnConfig, candidates: &[usize], r: &mut Rng) -> BatchInputs {
    let b = candidates.len();
    let total = candidates.iter().sum();
    BatchInputs {
        graph: fill(r, b, GRAPH_CONTEXT_WIDTH),
        problem: fill(r, b * 2 * cfg.window, cfg.embed_dim),
        sets: fill(r, total, cfg.set_size * cfg.embed_dim),
        candidates: candidates.to_vec(),
        window: cfg.window,
    }
}

fn problem_probe(x: &BatchInputs, d: &[f64]) -> BatchInputs {
    let mut p = x.clone();
    p.problem.data.copy_from_slice(d);
    p
}

fn sets_probe(x: &BatchInputs, d: &[f64]) -> BatchInputs {
    let mut p = x.clone();
    p.sets.data.copy_from_slice(d);
    p
}

fn v_network(net: &FastColorNet, store: &ParamStore, x: &BatchInputs, r: &mut Rng) -> Result<f64> {
    let up = fill(r, x.moves(), 3);
    let (_, tape) = net.v_forward(store, x, Mode::Eval, &mut Vec::new())?;
    let mut g = Grads::zeros_like(store);
    let dproblem = net.v_backward(store, &tape, &up, &mut g);
    let f = |s: &ParamStore, x: &BatchInputs| dot(&net.v_forward(s, x, Mode::Eval, &mut Vec::new()).unwrap().0, &up);
    let e1 = finite_diff_check(store, &g, |s| f(s, x), EPS, 6, 6);
    let e2 = input_diff_check(&x.problem.data, &dproblem.data, |d| f(store, &problem_probe(x, d)), EPS);
    Ok(e1.max(e2))
}

fn p_network(net: &FastColorNet, store: &ParamStore, x: &BatchInputs, r: &mut Rng) -> Result<f64> {
    let total: usize = x.candidates.iter().sum();
    let up: Vec<f64> = (0..total).map(|_| r.random_range(-1.0..1.0)).collect();
    let (_, tape) = net.p_forward(store, x, Mode::Eval, &mut Vec::new())?;
    let mut g = Grads::zeros_like(store);
    let (dproblem, dsets) = net.p_backward(store, &tape, &up, &mut g)?;
    let f = |s: &ParamStore, x: &BatchInputs| {
        let (l, _) = net.p_forward(s, x, Mode::Eval, &mut Vec::new()).unwrap();
        l.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
    };
    let e1 = finite_diff_check(store, &g, |s| f(s, x), EPS, 6, 7);
    let e2 = input_diff_check(&x.problem.data, &dproblem.data, |d| f(store, &problem_probe(x, d)), EPS);
    let e3 = input_diff_check(&x.sets.data, &dsets.data, |d| f(store, &sets_probe(x, d)), EPS);
    Ok(e1.max(e2).max(e3))
}

fn full_loss(net: &FastColorNet, store: &ParamStore, x: &BatchInputs) -> Result<f64> {
    let pis: Vec<Vec<f64>> = x
        .candidates
        .iter()
        .map(|&k| {
            let mut pi = vec![0.0; k];
            pi[0] = 0.7;
            pi[k - 1] += 0.3;
            pi
        })
        .collect();
    let pis: Vec<&[f64]> = pis.iter().map(|p| &p[..]).collect();
    let zs: Vec<Outcome> = (0..x.moves()).map(|i| Outcome::from_index(i % 3).unwrap()).collect();
    let (_, g, dproblem, dsets, _) = net.loss_and_grads(store, x, &pis, &zs, Mode::Eval)?;
    let f = |s: &ParamStore, x: &BatchInputs| net.loss_and_grads(s, x, &pis, &zs, Mode::Eval).unwrap().0.total;
    let e1 = finite_diff_check(store, &g, |s| f(s, x), EPS, 6, 8);
    let e2 = input_diff_check(&x.problem.data, &dproblem.data, |d| f(store, &problem_probe(x, d)), EPS);
    let e3 = input_diff_check(&x.sets.data, &dsets.data, |d| f(store, &sets_probe(x, d)), EPS);
    Ok(e1.max(e2).max(e3))
}

/// Runs every check with batch norm in eval mode for the networks.
pub fn gradient_report(seed: u64) -> Result<Vec<GradientCheck>> {
    let mut r = rng::rng(seed);
    let mut out = Vec::new();
    let mut push = |name, max_error| out.push(GradientCheck { name, max_error });
    push("dense", dense(&mut r)?);
    push("conv1d", conv(&mut r)?);
    push("batchnorm-eval", batchnorm(&mut r, Mode::Eval)?);
    push("batchnorm-train", batchnorm(&mut r, Mode::Train)?);
    push("lstm", lstm(&mut r)?);
    push("pool-mean", pooling(&mut r, Pooling::Mean)?);
    push("pool-max", pooling(&mut r, Pooling::Max)?);
    push("softmax-ce", softmax_ce(&mut r));
    push("embedding-walk", walk(&mut r)?);

    let cfg = tiny_config();
    let (net, mut store) = FastColorNet::new(cfg.clone(), seed)?;
    // Zero biases put rows with all-zero inputs exactly on a relu kink.
    let ids: Vec<_> = store.ids().filter(|&id| store.is_trainable(id)).collect();
    for id in ids {
        for v in store.get_mut(id).data.iter_mut() {
            *v += r.random_range(-0.1..0.1);
        }
    }
    let x = random_inputs(&cfg, &[3, 1, 4], &mut r);
    push("v-network", v_network(&net, &store, &x, &mut r)?);
    push("p-network", p_network(&net, &store, &x, &mut r)?);
    push("fcn-loss", full_loss(&net, &store, &x)?);
    Ok(out)
}
