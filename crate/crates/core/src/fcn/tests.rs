use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::*;
use crate::coloring::{Action, ColoringState};
use crate::graph::Graph;
use crate::nn::{finite_diff_check, input_diff_check, AdamConfig};

fn tiny_cfg() -> FcnConfig {
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

fn random_inputs(cfg: &FcnConfig, candidates: &[usize], seed: u64) -> BatchInputs {
    let mut r = rng::rng(seed);
    let mut fill = |rows: usize, cols: usize| {
        let data = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
        Mat::from_vec(rows, cols, data).unwrap()
    };
    let b = candidates.len();
    let total = candidates.iter().sum();
    BatchInputs {
        graph: fill(b, GRAPH_CONTEXT_WIDTH),
        problem: fill(b * 2 * cfg.window, cfg.embed_dim),
        sets: fill(total, cfg.set_size * cfg.embed_dim),
        candidates: candidates.to_vec(),
        window: cfg.window,
    }
}

fn targets(candidates: &[usize]) -> (Vec<Vec<f64>>, Vec<Outcome>) {
    let pis = candidates
        .iter()
        .map(|&k| {
            let mut pi = vec![0.0; k];
            pi[0] = 0.7;
            pi[k - 1] += 0.3;
            pi
        })
        .collect();
    let zs = (0..candidates.len())
        .map(|i| Outcome::from_index(i % 3).unwrap())
        .collect();
    (pis, zs)
}

fn check_full_gradients(cfg: FcnConfig, mode: Mode) {
    let (net, store) = FastColorNet::new(cfg.clone(), 11).unwrap();
    let candidates = [3, 1, 4];
    let inputs = random_inputs(&cfg, &candidates, 5);
    let (pis, zs) = targets(&candidates);
    let pis: Vec<&[f64]> = pis.iter().map(|p| &p[..]).collect();
    let (_, grads, dproblem, dsets, _) = net.loss_and_grads(&store, &inputs, &pis, &zs, mode).unwrap();
    let loss = |s: &ParamStore, x: &BatchInputs| net.loss_and_grads(s, x, &pis, &zs, mode).unwrap().0.total;

    let err = finite_diff_check(&store, &grads, |s| loss(s, &inputs), 1e-5, 6, 1);
    assert!(err < 1e-4, "parameter gradient error {err}");

    let err = input_diff_check(
        &inputs.problem.data,
        &dproblem.data,
        |x| {
            let mut probe = inputs.clone();
            probe.problem.data.copy_from_slice(x);
            loss(&store, &probe)
        },
        1e-5,
    );
    assert!(err < 1e-4, "problem input gradient error {err}");

    let err = input_diff_check(
        &inputs.sets.data,
        &dsets.data,
        |x| {
            let mut probe = inputs.clone();
            probe.sets.data.copy_from_slice(x);
            loss(&store, &probe)
        },
        1e-5,
    );
    assert!(err < 1e-4, "set input gradient error {err}");
}

#[test]
fn full_network_gradients_eval_mode() {
    check_full_gradients(tiny_cfg(), Mode::Eval);
}

#[test]
fn full_network_gradients_train_mode() {
    check_full_gradients(tiny_cfg(), Mode::Train);
}

#[test]
fn raw_context_and_max_pool_gradients() {
    check_full_gradients(
        FcnConfig {
            problem_input: ProblemInput::Raw,
            pooling: Pooling::Max,
            ..tiny_cfg()
        },
        Mode::Eval,
    );
}

#[test]
fn outputs_are_distributions() {
    let cfg = tiny_cfg();
    let (net, store) = FastColorNet::new(cfg.clone(), 2).unwrap();
    let inputs = random_inputs(&cfg, &[1, 5, 2], 3);
    for out in net.evaluate(&store, &inputs).unwrap() {
        assert!((out.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((out.v3.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(out.v3.iter().all(|&x| x >= 0.0));
        assert!((-1.0..=1.0).contains(&out.v));
        assert_eq!(out.v, out.v3[0] - out.v3[2]);
    }
    let single = net.evaluate(&store, &inputs).unwrap();
    assert_eq!(single[0].p, vec![1.0]);
}

#[test]
fn zero_heads_give_uniform_outputs() {
    let cfg = FcnConfig {
        zero_init_heads: true,
        ..tiny_cfg()
    };
    let (net, store) = FastColorNet::new(cfg.clone(), 2).unwrap();
    let inputs = random_inputs(&cfg, &[4, 7], 3);
    let out = net.evaluate(&store, &inputs).unwrap();
    for (o, k) in out.iter().zip([4, 7]) {
        for &p in &o.p {
            assert!((p - 1.0 / k as f64).abs() < 1e-12);
        }
        assert_eq!(o.v, 0.0);
    }
}

#[test]
fn empty_candidate_list_is_rejected() {
    let cfg = tiny_cfg();
    let (net, store) = FastColorNet::new(cfg.clone(), 2).unwrap();
    let mut inputs = random_inputs(&cfg, &[2], 3);
    inputs.candidates = vec![0];
    inputs.sets = Mat::zeros(0, inputs.sets.cols);
    assert!(net.p_forward(&store, &inputs, Mode::Eval, &mut Vec::new()).is_err());
}

#[test]
fn identical_candidates_permute_with_identity_mixer() {
    let cfg = tiny_cfg();
    let (net, mut store) = FastColorNet::new(cfg.clone(), 4).unwrap();
    // Zero conv weights make every mixer block the identity.
    let ids: Vec<_> = store.ids().filter(|&id| store.name(id).starts_with("p.mix.")).collect();
    for id in ids {
        if store.name(id).ends_with(".conv.w") {
            store.get_mut(id).data.fill(0.0);
        }
    }
    let inputs = random_inputs(&cfg, &[4], 9);
    let mut swapped = inputs.clone();
    let (a, c) = (inputs.sets.row(0).to_vec(), inputs.sets.row(2).to_vec());
    swapped.sets.row_mut(0).copy_from_slice(&c);
    swapped.sets.row_mut(2).copy_from_slice(&a);
    let mut dup = inputs.clone();
    dup.sets.row_mut(3).copy_from_slice(&a);

    let p = net.evaluate(&store, &inputs).unwrap()[0].p.clone();
    let q = net.evaluate(&store, &swapped).unwrap()[0].p.clone();
    assert!((p[0] - q[2]).abs() < 1e-12 && (p[2] - q[0]).abs() < 1e-12);
    assert!((p[1] - q[1]).abs() < 1e-12 && (p[3] - q[3]).abs() < 1e-12);
    let d = net.evaluate(&store, &dup).unwrap()[0].p.clone();
    assert!((d[0] - d[3]).abs() < 1e-12);
}

fn table_for(net: &FastColorNet, store: &ParamStore, g: &Graph) -> EmbeddingTable {
    net.embed_graph(store, g).unwrap()
}

#[test]
fn first_move_contexts() {
    let cfg = tiny_cfg();
    let (net, store) = FastColorNet::new(cfg.clone(), 0).unwrap();
    let g = Arc::new(Graph::cycle(6));
    let table = table_for(&net, &store, &g);
    let state = ColoringState::new(g);
    let ctx = net.contexts(&state, &table).unwrap();
    assert_eq!(ctx.problem, vec![None, None, Some(0), Some(1)]);
    assert_eq!(ctx.color_sets, vec![vec![None, None]]);
    for block in ctx.graph.chunks(ENCODING) {
        let ones = block.iter().filter(|&&x| x == 1.0).count();
        assert!(ones <= 1);
    }
    assert!(ctx.graph[3 * ENCODING..].iter().all(|&x| x == 0.0));
}

const ENCODING: usize = crate::embedding::ENCODING_SIZE;

#[test]
fn forced_move_on_k4() {
    let cfg = tiny_cfg();
    let (net, store) = FastColorNet::new(cfg.clone(), 0).unwrap();
    let g = Arc::new(Graph::complete(4));
    let table = table_for(&net, &store, &g);
    let mut state = ColoringState::new(g);
    state.apply(Action::New).unwrap();
    state.apply(Action::New).unwrap();
    let ctx = net.contexts(&state, &table).unwrap();
    assert_eq!(ctx.candidate_count(), 1);
    assert_eq!(net.predict(&store, &ctx, &table).unwrap().p, vec![1.0]);
}

#[test]
fn path_color_sets() {
    let cfg = FcnConfig {
        set_size: 4,
        ..tiny_cfg()
    };
    let (net, store) = FastColorNet::new(cfg.clone(), 0).unwrap();
    let g = Arc::new(Graph::path(5));
    let table = table_for(&net, &store, &g);
    let mut state = ColoringState::new(g);
    state.apply(Action::New).unwrap();
    state.apply(Action::New).unwrap();
    let ctx = net.contexts(&state, &table).unwrap();
    assert_eq!(ctx.actions.existing, vec![0]);
    assert_eq!(ctx.color_sets[0], vec![Some(0), None, None, None]);
    assert_eq!(ctx.color_sets[1], vec![None; 4]);
    let inputs = BatchInputs::assemble(&[(&ctx, &table)], &cfg).unwrap();
    assert_eq!(&inputs.sets.row(0)[..6], table.row(0));
    assert!(inputs.sets.row(0)[6..].iter().all(|&x| x == 0.0));
}

#[test]
fn recent_members_newest_first() {
    let cfg = tiny_cfg();
    let (net, store) = FastColorNet::new(cfg.clone(), 0).unwrap();
    let g = Arc::new(Graph::empty(5));
    let table = table_for(&net, &store, &g);
    let mut state = ColoringState::new(g);
    state.apply(Action::New).unwrap();
    for _ in 0..3 {
        state.apply(Action::Existing(0)).unwrap();
    }
    let ctx = net.contexts(&state, &table).unwrap();
    assert_eq!(ctx.color_sets[0], vec![Some(3), Some(2)]);
}

#[test]
fn table_size_mismatch_is_contract_error() {
    let cfg = tiny_cfg();
    let (net, store) = FastColorNet::new(cfg, 0).unwrap();
    let table = table_for(&net, &store, &Graph::path(3));
    let state = ColoringState::new(Arc::new(Graph::path(4)));
    assert!(matches!(net.contexts(&state, &table), Err(crate::Error::Contract(_))));
}

#[test]
fn value_ignores_rows_outside_the_window() {
    let cfg = tiny_cfg();
    let (net, store) = FastColorNet::new(cfg.clone(), 3).unwrap();
    let g = Arc::new(Graph::path(12));
    let table = table_for(&net, &store, &g);
    let mut state = ColoringState::new(g);
    for _ in 0..6 {
        let a = state.smallest_valid().unwrap();
        state.apply(a).unwrap();
    }
    let ctx = net.contexts(&state, &table).unwrap();
    let mut far = table.clone();
    for v in [0usize, 1, 2, 9, 10, 11] {
        for round in &mut far.rounds {
            round.row_mut(v).iter_mut().for_each(|x| *x += 3.0);
        }
    }
    let a = net.predict(&store, &ctx, &table).unwrap();
    let b = net.predict(&store, &ctx, &far).unwrap();
    assert_eq!(a.v3, b.v3);
}

#[test]
fn loss_examples() {
    let l = fcn_loss(&[0.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 1.0], Outcome::Win).unwrap();
    assert_eq!(l.total, 0.0);
    let l = fcn_loss(&[0.5, 0.5], &[0.25, 0.5, 0.25], &[0.5, 0.5], Outcome::Tie).unwrap();
    assert!((l.total - (2f64.ln() + 2f64.ln())).abs() < 1e-12);
    let l = fcn_loss(&[0.5, 0.5], &[0.5, 0.25, 0.25], &[0.5, 0.5], Outcome::Lose).unwrap();
    assert!((l.total - (2f64.ln() + 4f64.ln())).abs() < 1e-12);
    assert!(!l.clamped);
    let l = fcn_loss(&[1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0], Outcome::Win).unwrap();
    assert!(l.clamped && l.total.is_finite());
    assert!(fcn_loss(&[1.0], &[1.0, 0.0, 0.0], &[0.5, 0.5], Outcome::Win).is_err());
    assert!(fcn_loss(&[0.5, 0.5], &[1.0, 0.0, 0.0], &[0.5, 0.2], Outcome::Win).is_err());
}

fn colored_graph(net: &FastColorNet, store: &ParamStore) -> (Arc<Graph>, EmbeddingTable, Vec<Contexts>) {
    let g = Arc::new(crate::graph::gen_er(10, 0.4, 7).unwrap());
    let table = table_for(net, store, &g);
    let mut state = ColoringState::new(g.clone());
    let mut ctxs = Vec::new();
    while !state.is_complete() {
        ctxs.push(net.contexts(&state, &table).unwrap());
        let a = state.smallest_valid().unwrap();
        state.apply(a).unwrap();
    }
    (g, table, ctxs)
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let cfg = tiny_cfg();
    let (net, mut store) = FastColorNet::new(cfg, 0).unwrap();
    let (g, table, ctxs) = colored_graph(&net, &store);
    let pis = uniform_targets(&ctxs);
    let batch: Vec<_> = ctxs.iter().zip(&pis).map(|(c, pi)| item(c, &table, &g, pi)).collect();
    let mut adam = AdamState::new(&store, AdamConfig { lr: 0.0, ..Default::default() });
    let before: Vec<Vec<f64>> = store
        .ids()
        .filter(|&id| store.is_trainable(id))
        .map(|id| store.get(id).data.clone())
        .collect();
    let stats = net.train_step(&mut store, &mut adam, &batch, &mut rng::rng(0)).unwrap();
    assert!(stats.walks > 0);
    let after: Vec<Vec<f64>> = store
        .ids()
        .filter(|&id| store.is_trainable(id))
        .map(|id| store.get(id).data.clone())
        .collect();
    assert_eq!(before, after);
}

fn uniform_targets(ctxs: &[Contexts]) -> Vec<Vec<f64>> {
    ctxs.iter()
        .map(|c| vec![1.0 / c.candidate_count() as f64; c.candidate_count()])
        .collect()
}

fn item<'a>(ctx: &'a Contexts, table: &'a EmbeddingTable, g: &'a Graph, pi: &'a [f64]) -> TrainItem<'a> {
    TrainItem {
        contexts: ctx,
        table,
        graph: g,
        pi,
        z: Outcome::Win,
    }
}

#[test]
fn walks_reach_the_transfer_parameters() {
    // Batch norm in training mode needs more than one move per batch.
    let cfg = FcnConfig {
        walk_prob: 1.0,
        ..tiny_cfg()
    };
    let (net, store) = FastColorNet::new(cfg.clone(), 0).unwrap();
    let (g, table, ctxs) = colored_graph(&net, &store);
    let pis = uniform_targets(&ctxs);
    let batch: Vec<_> = ctxs.iter().zip(&pis).map(|(c, pi)| item(c, &table, &g, pi)).collect();
    let bg = net.batch_gradients(&store, &batch, &mut rng::rng(0)).unwrap();
    assert!(bg.stats.walks > 0 && bg.stats.walks <= cfg.walk_budget * batch.len());
    let id = store.id("embed.message.w").unwrap();
    assert!(bg.grads.get(id).iter().any(|&x| x != 0.0));

    let off = FastColorNet::new(FcnConfig { walk_prob: 0.0, ..cfg }, 0).unwrap().0;
    let bg = off.batch_gradients(&store, &batch, &mut rng::rng(0)).unwrap();
    assert_eq!(bg.stats.walks, 0);
    assert!(bg.grads.get(id).iter().all(|&x| x == 0.0));
}

#[test]
fn repeated_steps_reduce_loss() {
    let cfg = tiny_cfg();
    let (net, mut store) = FastColorNet::new(cfg, 0).unwrap();
    let (g, table, ctxs) = colored_graph(&net, &store);
    let pis: Vec<Vec<f64>> = ctxs
        .iter()
        .map(|c| {
            let mut pi = vec![0.0; c.candidate_count()];
            pi[0] = 1.0;
            pi
        })
        .collect();
    let batch: Vec<TrainItem<'_>> = ctxs
        .iter()
        .zip(&pis)
        .map(|(c, pi)| item(c, &table, &g, pi))
        .collect();
    let mut adam = AdamState::new(&store, AdamConfig::default());
    let mut r = rng::rng(1);
    let first = net.train_step(&mut store, &mut adam, &batch, &mut r).unwrap().loss;
    let mut last = first;
    for _ in 0..200 {
        last = net.train_step(&mut store, &mut adam, &batch, &mut r).unwrap().loss;
    }
    assert!(last < 0.5 * first, "{first} -> {last}");
}

