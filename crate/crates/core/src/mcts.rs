//! Monte Carlo tree search over the coloring game.
//!
//! Single-agent search: every edge keeps `(P, N, Q)`, selection maximizes
//! `Q + c * P * sqrt(sum N) / (1 + N)`, and backup averages leaf values into
//! `Q` without sign changes. Leaves whose outcome is already fixed (end of the
//! scoring window, or decided by the color-count bounds) are scored exactly
//! instead of by the evaluator.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};

use crate::coloring::{outcome_vs_baseline, Action, ActionSet, ColoringState, Outcome};
use crate::embedding::EmbeddingTable;
use crate::error::contract;
use crate::fcn::FastColorNet;
use crate::nn::ParamStore;
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_EXPLORATION: f64 = 1.5;
pub const DEFAULT_SIMULATIONS: usize = 128;

/// `Q + c * P * sqrt(total) / (1 + n)`.
pub fn ucb_score(q: f64, prior: f64, n: u32, total: u32, c: f64) -> f64 {
    q + c * prior * libm::sqrt(total as f64) / (1.0 + n as f64)
}

/// Running mean update of one edge: returns the new `(Q, N)`. The
/// incremental form keeps the mean of a constant exact.
pub fn backup_edge(q: f64, n: u32, v: f64) -> (f64, u32) {
    (q + (v - q) / (n as f64 + 1.0), n + 1)
}

/// The part of the game that is scored: moves up to `end` (an absolute move
/// index) against the baseline's color count after the same move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub end: usize,
    pub baseline_colors: usize,
}

impl Window {
    /// Whole game against a final color count.
    pub fn full(state: &ColoringState, baseline_colors: usize) -> Self {
        Window {
            end: state.vertex_count(),
            baseline_colors,
        }
    }

    /// The outcome if it no longer depends on the remaining moves. Colors
    /// never decrease and each move adds at most one, so the agent loses once
    /// it is above the baseline and wins once even a new color on every
    /// remaining move stays below it.
    pub fn decided(&self, state: &ColoringState) -> Option<Outcome> {
        let colors = state.colors_used();
        let remaining = self.end.saturating_sub(state.t());
        if remaining == 0 || state.is_complete() {
            return Some(outcome_vs_baseline(colors, self.baseline_colors));
        }
        if colors > self.baseline_colors {
            Some(Outcome::Lose)
        } else if colors + remaining < self.baseline_colors {
            Some(Outcome::Win)
        } else {
            None
        }
    }
}

/// Priors over `actions` (in order) and a value in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub actions: ActionSet,
    pub priors: Vec<f64>,
    pub value: f64,
}

pub trait Evaluator {
    fn evaluate(&mut self, state: &ColoringState) -> Result<Evaluation>;
}

/// Uniform priors over the valid actions and a constant value.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformEvaluator {
    pub value: f64,
}

impl Evaluator for UniformEvaluator {
    fn evaluate(&mut self, state: &ColoringState) -> Result<Evaluation> {
        let actions = state.valid_actions()?;
        let k = actions.len();
        Ok(Evaluation {
            actions,
            priors: vec![1.0 / k as f64; k],
            value: self.value,
        })
    }
}

/// FastColorNet priors and `v` on a graph with cached embeddings.
pub struct NetEvaluator<'a> {
    pub net: &'a FastColorNet,
    pub store: &'a ParamStore,
    pub table: &'a EmbeddingTable,
    /// Network evaluations so far.
    pub calls: usize,
}

impl<'a> NetEvaluator<'a> {
    pub fn new(net: &'a FastColorNet, store: &'a ParamStore, table: &'a EmbeddingTable) -> Self {
        NetEvaluator {
            net,
            store,
            table,
            calls: 0,
        }
    }
}

impl Evaluator for NetEvaluator<'_> {
    fn evaluate(&mut self, state: &ColoringState) -> Result<Evaluation> {
        let ctx = self.net.contexts(state, self.table)?;
        let out = self.net.predict(self.store, &ctx, self.table)?;
        self.calls += 1;
        Ok(Evaluation {
            actions: ctx.actions,
            priors: out.p,
            value: out.v,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MctsConfig {
    pub exploration: f64,
    pub simulations: usize,
    /// `(alpha, fraction)` of Dirichlet noise mixed into the root priors.
    pub root_noise: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            exploration: DEFAULT_EXPLORATION,
            simulations: DEFAULT_SIMULATIONS,
            root_noise: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub action: Action,
    pub prior: f64,
    pub n: u32,
    pub q: f64,
    child: Option<u32>,
}

impl Edge {
    pub fn is_expanded(&self) -> bool {
        self.child.is_some()
    }
}

#[derive(Clone, Debug)]
struct Node {
    edges: Vec<Edge>,
    /// Exact value of a decided state; such nodes have no edges.
    fixed: Option<f64>,
}

pub struct SearchTree {
    nodes: Vec<Node>,
    state: ColoringState,
    window: Window,
    cfg: MctsConfig,
    simulations: usize,
    noise_draws: u64,
}

impl SearchTree {
    pub fn new(state: ColoringState, window: Window, cfg: MctsConfig) -> Result<Self> {
        if state.is_complete() {
            return Err(Error::State("cannot search from a complete coloring".into()));
        }
        if !(cfg.exploration >= 0.0) {
            return Err(Error::Param("exploration constant must be non-negative".into()));
        }
        Ok(SearchTree {
            nodes: Vec::new(),
            state,
            window,
            cfg,
            simulations: 0,
            noise_draws: 0,
        })
    }

    pub fn state(&self) -> &ColoringState {
        &self.state
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Simulations run since the tree was created.
    pub fn simulations(&self) -> usize {
        self.simulations
    }

    /// Live nodes in the arena.
    pub fn arena_len(&self) -> usize {
        self.nodes.len()
    }

    /// Root edges in action order; empty before the first search.
    pub fn root_edges(&self) -> &[Edge] {
        self.nodes.first().map_or(&[], |n| &n.edges)
    }

    /// Edges below the root child reached by `action`, if it was expanded.
    pub fn child_edges(&self, action: Action) -> Option<&[Edge]> {
        let e = self.root_edges().iter().find(|e| e.action == action)?;
        e.child.map(|c| &self.nodes[c as usize].edges[..])
    }

    pub fn root_visits(&self) -> u32 {
        self.root_edges().iter().map(|e| e.n).sum()
    }

    fn make_node<E: Evaluator>(&mut self, eval: &mut E, root: bool) -> Result<(Node, f64)> {
        let out = eval.evaluate(&self.state)?;
        if out.actions.len() != out.priors.len() || out.actions.is_empty() {
            return Err(contract!(
                "evaluator returned {} priors for {} actions",
                out.priors.len(),
                out.actions.len()
            ));
        }
        let mut priors = out.priors;
        if root {
            if let Some((alpha, frac)) = self.cfg.root_noise {
                let noise = self.dirichlet(alpha, priors.len())?;
                for (p, n) in priors.iter_mut().zip(noise) {
                    *p = (1.0 - frac) * *p + frac * n;
                }
            }
        }
        let edges = out
            .actions
            .iter()
            .zip(priors)
            .map(|(action, prior)| Edge {
                action,
                prior,
                n: 0,
                q: 0.0,
                child: None,
            })
            .collect();
        Ok((Node { edges, fixed: None }, out.value.clamp(-1.0, 1.0)))
    }

    fn dirichlet(&mut self, alpha: f64, k: usize) -> Result<Vec<f64>> {
        let gamma = Gamma::new(alpha, 1.0).map_err(|_| Error::Param("Dirichlet alpha must be positive".into()))?;
        let mut r = rng::rng(rng::mix(self.cfg.seed, self.state.t() as u64, self.noise_draws));
        self.noise_draws += 1;
        let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut r)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 {
            draws.iter_mut().for_each(|d| *d /= sum);
        } else {
            draws = vec![1.0 / k as f64; k];
        }
        Ok(draws)
    }

    fn select(&self, node: usize) -> usize {
        let edges = &self.nodes[node].edges;
        let total: u32 = edges.iter().map(|e| e.n).sum();
        let c = self.cfg.exploration;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, e) in edges.iter().enumerate() {
            let s = ucb_score(e.q, e.prior, e.n, total, c);
            if s > best_score || (s == best_score && e.prior > edges[best].prior) {
                best = i;
                best_score = s;
            }
        }
        best
    }

    fn simulate<E: Evaluator>(&mut self, eval: &mut E) -> Result<()> {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut node = 0usize;
        let mut applied = 0;
        let result = loop {
            if let Some(v) = self.nodes[node].fixed {
                break Ok(v);
            }
            let k = self.select(node);
            path.push((node, k));
            let edge = self.nodes[node].edges[k];
            if let Err(e) = self.state.apply(edge.action) {
                break Err(e);
            }
            applied += 1;
            match edge.child {
                Some(child) => node = child as usize,
                None => {
                    let (leaf, v) = match self.window.decided(&self.state) {
                        Some(o) => (
                            Node {
                                edges: Vec::new(),
                                fixed: Some(o.value()),
                            },
                            o.value(),
                        ),
                        None => match self.make_node(eval, false) {
                            Ok(x) => x,
                            Err(e) => break Err(e),
                        },
                    };
                    self.nodes.push(leaf);
                    self.nodes[node].edges[k].child = Some((self.nodes.len() - 1) as u32);
                    break Ok(v);
                }
            }
        };
        for _ in 0..applied {
            self.state.undo()?;
        }
        let v = result?;
        for (node, k) in path {
            let e = &mut self.nodes[node].edges[k];
            (e.q, e.n) = backup_edge(e.q, e.n, v);
        }
        self.simulations += 1;
        Ok(())
    }

    /// Runs `simulations` select/expand/backup passes from the root.
    pub fn search<E: Evaluator>(&mut self, eval: &mut E, simulations: usize) -> Result<()> {
        if simulations == 0 {
            return Err(Error::Param("at least one simulation is required".into()));
        }
        if self.nodes.is_empty() {
            let (root, _) = self.make_node(eval, true)?;
            self.nodes.push(root);
        }
        for _ in 0..simulations {
            self.simulate(eval)?;
        }
        Ok(())
    }

    /// `pi(a) ~ N(a)^(1/tau)`; `tau == 0` is the argmax (lowest index on ties).
    pub fn policy(&self, tau: f64) -> Result<Vec<f64>> {
        let counts: Vec<u32> = self.root_edges().iter().map(|e| e.n).collect();
        visit_policy(&counts, tau)
    }

    /// Index of the most visited root action (lowest index on ties).
    pub fn best_index(&self) -> Option<usize> {
        let edges = self.root_edges();
        let max = edges.iter().map(|e| e.n).max()?;
        edges.iter().position(|e| e.n == max)
    }

    /// Draws a root action index from `pi` with temperature 1.
    pub fn sample_index(&self, r: &mut rng::Rng) -> Result<usize> {
        let pi = self.policy(1.0)?;
        let mut x: f64 = r.random();
        for (i, p) in pi.iter().enumerate() {
            if x < *p {
                return Ok(i);
            }
            x -= p;
        }
        Ok(pi.iter().rposition(|&p| p > 0.0).unwrap_or(0))
    }

    /// Plays `action` and keeps its subtree; everything else is dropped.
    pub fn advance_root(&mut self, action: Action) -> Result<()> {
        let child = match self.root_edges().iter().find(|e| e.action == action) {
            Some(e) => e.child,
            None if self.nodes.is_empty() => None,
            None => return Err(contract!("{action:?} is not a root action")),
        };
        self.state.apply(action)?;
        self.nodes = match child {
            Some(c) if self.nodes[c as usize].fixed.is_none() => self.compact(c as usize),
            _ => Vec::new(),
        };
        Ok(())
    }

    fn compact(&mut self, root: usize) -> Vec<Node> {
        let mut old = core::mem::take(&mut self.nodes);
        let mut out: Vec<Node> = Vec::new();
        let mut stack = vec![(root, None::<(usize, usize)>)];
        while let Some((id, parent)) = stack.pop() {
            let node = core::mem::replace(
                &mut old[id],
                Node {
                    edges: Vec::new(),
                    fixed: None,
                },
            );
            let new_id = out.len();
            if let Some((p, k)) = parent {
                out[p].edges[k].child = Some(new_id as u32);
            }
            for (k, e) in node.edges.iter().enumerate() {
                if let Some(c) = e.child {
                    stack.push((c as usize, Some((new_id, k))));
                }
            }
            out.push(node);
        }
        out
    }
}

/// `pi(a) ~ counts(a)^(1/tau)`; `tau == 0` is the argmax (lowest index on
/// ties).
pub fn visit_policy(counts: &[u32], tau: f64) -> Result<Vec<f64>> {
    let total: u64 = counts.iter().map(|&n| n as u64).sum();
    if total == 0 {
        return Err(Error::State("no visits at the root".into()));
    }
    if !(tau >= 0.0) {
        return Err(Error::Param("temperature must be non-negative".into()));
    }
    let mut pi = vec![0.0; counts.len()];
    if tau == 0.0 {
        let max = *counts.iter().max().unwrap();
        pi[counts.iter().position(|&n| n == max).unwrap()] = 1.0;
        return Ok(pi);
    }
    let max = *counts.iter().max().unwrap() as f64;
    for (p, &n) in pi.iter_mut().zip(counts) {
        *p = if n == 0 { 0.0 } else { libm::pow(n as f64 / max, 1.0 / tau) };
    }
    let sum: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= sum);
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coloring::brute_force_chromatic;
    use crate::graph::Graph;
    use alloc::sync::Arc;

    #[test]
    fn ucb_examples() {
        assert_eq!(ucb_score(0.0, 0.5, 0, 4, 1.0), 1.0);
        assert_eq!(ucb_score(0.2, 0.5, 3, 4, 2.0), 0.7);
        assert_eq!(ucb_score(0.3, 0.9, 0, 0, 1.5), 0.3);
    }

    #[test]
    fn backup_examples() {
        assert_eq!(backup_edge(0.5, 3, 1.0), (0.625, 4));
        assert_eq!(backup_edge(0.0, 0, -1.0), (-1.0, 1));
        let (mut q, mut n) = (0.0, 0);
        for _ in 0..7 {
            (q, n) = backup_edge(q, n, 0.3);
        }
        assert_eq!(q, 0.3);
    }

    #[test]
    fn visit_policy_examples() {
        assert_eq!(visit_policy(&[3, 1], 1.0).unwrap(), vec![0.75, 0.25]);
        assert_eq!(visit_policy(&[2, 5, 5], 0.0).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(visit_policy(&[0, 0], 1.0).is_err());
        let sharp = visit_policy(&[2, 5, 4], 0.05).unwrap();
        assert!(sharp[1] > 0.98);
    }

    struct Fixed(Vec<f64>);

    impl Evaluator for Fixed {
        fn evaluate(&mut self, state: &ColoringState) -> Result<Evaluation> {
            let actions = state.valid_actions()?;
            let priors = if actions.len() == self.0.len() {
                self.0.clone()
            } else {
                vec![1.0 / actions.len() as f64; actions.len()]
            };
            Ok(Evaluation {
                actions,
                priors,
                value: 0.0,
            })
        }
    }

    #[test]
    fn prior_breaks_fresh_ties() {
        // Vertex 1 can take color 0 or new.
        let g = Arc::new(Graph::empty(3));
        let mut s = ColoringState::new(g);
        s.apply(Action::New).unwrap();
        let mut tree = SearchTree::new(s, Window { end: 3, baseline_colors: 2 }, MctsConfig::default()).unwrap();
        tree.search(&mut Fixed(vec![0.1, 0.9]), 1).unwrap();
        assert_eq!(tree.root_edges()[1].n, 1);
        assert_eq!(tree.root_edges()[0].n, 0);
    }

    #[test]
    fn forced_root() {
        let g = Arc::new(Graph::complete(4));
        let s = ColoringState::new(g);
        let mut tree = SearchTree::new(s, Window { end: 4, baseline_colors: 4 }, MctsConfig::default()).unwrap();
        tree.search(&mut UniformEvaluator::default(), 5).unwrap();
        assert_eq!(tree.root_edges().len(), 1);
        assert_eq!(tree.policy(1.0).unwrap(), vec![1.0]);
        assert_eq!(tree.root_visits(), 5);
    }

    #[test]
    fn decided_leaf_values() {
        let g = Arc::new(Graph::path(3));
        let mut s = ColoringState::new(g);
        s.apply(Action::New).unwrap();
        s.apply(Action::New).unwrap();
        s.apply(Action::Existing(0)).unwrap();
        assert_eq!(Window { end: 3, baseline_colors: 3 }.decided(&s), Some(Outcome::Win));
        assert_eq!(Window { end: 3, baseline_colors: 2 }.decided(&s), Some(Outcome::Tie));
        let mut s = ColoringState::new(Arc::new(Graph::empty(6)));
        s.apply(Action::New).unwrap();
        s.apply(Action::New).unwrap();
        let w = Window { end: 4, baseline_colors: 2 };
        assert_eq!(w.decided(&s), None);
        assert_eq!(Window { end: 4, baseline_colors: 1 }.decided(&s), Some(Outcome::Lose));
        assert_eq!(Window { end: 4, baseline_colors: 5 }.decided(&s), Some(Outcome::Win));
        assert_eq!(Window { end: 4, baseline_colors: 4 }.decided(&s), None);
        assert_eq!(Window { end: 2, baseline_colors: 2 }.decided(&s), Some(Outcome::Tie));
    }

    #[test]
    fn rewarded_child_collects_visits() {
        // Coloring vertex 1 with color 0 leads to a win, new to a loss.
        let g = Arc::new(Graph::empty(2));
        let mut s = ColoringState::new(g);
        s.apply(Action::New).unwrap();
        let mut tree = SearchTree::new(s, Window { end: 2, baseline_colors: 1 }, MctsConfig::default()).unwrap();
        tree.search(&mut UniformEvaluator::default(), 100).unwrap();
        let e = tree.root_edges();
        assert!(e[0].n > e[1].n);
        assert_eq!(e[0].q, 0.0);
        assert_eq!(e[1].q, -1.0);
        assert_eq!(tree.root_visits(), 100);
    }

    #[test]
    fn search_leaves_root_state_untouched() {
        let g = Arc::new(crate::graph::gen_er(8, 0.5, 3).unwrap());
        let s = ColoringState::new(g);
        let before = s.clone();
        let mut tree = SearchTree::new(s, Window { end: 8, baseline_colors: 4 }, MctsConfig::default()).unwrap();
        tree.search(&mut UniformEvaluator::default(), 64).unwrap();
        assert_eq!(tree.state().colors(), before.colors());
        assert_eq!(tree.state().t(), 0);
        for e in tree.root_edges() {
            assert!((-1.0..=1.0).contains(&e.q));
        }
    }

    #[test]
    fn advance_keeps_subtree_and_shrinks_arena() {
        let g = Arc::new(Graph::cycle(7));
        let s = ColoringState::new(g);
        let mut tree = SearchTree::new(s, Window { end: 7, baseline_colors: 3 }, MctsConfig::default()).unwrap();
        tree.search(&mut UniformEvaluator::default(), 200).unwrap();
        let first = tree.root_edges()[0].action;
        tree.advance_root(first).unwrap();
        tree.search(&mut UniformEvaluator::default(), 50).unwrap();
        let before = tree.arena_len();
        let pick = tree.root_edges()[tree.best_index().unwrap()].action;
        let kept: Vec<u32> = tree.child_edges(pick).unwrap().iter().map(|e| e.n).collect();
        tree.advance_root(pick).unwrap();
        let after: Vec<u32> = tree.root_edges().iter().map(|e| e.n).collect();
        assert_eq!(kept, after);
        assert!(tree.arena_len() < before);
        assert_eq!(tree.state().t(), 2);
    }

    #[test]
    fn forced_chain_keeps_visits() {
        let g = Arc::new(Graph::complete(5));
        let s = ColoringState::new(g);
        let mut tree = SearchTree::new(s, Window { end: 5, baseline_colors: 5 }, MctsConfig::default()).unwrap();
        tree.search(&mut UniformEvaluator::default(), 10).unwrap();
        let mut visits = tree.root_visits();
        for _ in 0..2 {
            tree.advance_root(Action::New).unwrap();
            let next = tree.root_visits();
            assert_eq!(next, visits - 1);
            visits = next;
        }
    }

    #[test]
    fn root_noise_is_a_distribution() {
        let g = Arc::new(Graph::empty(6));
        let mut s = ColoringState::new(g);
        for _ in 0..3 {
            s.apply(Action::New).unwrap();
        }
        let cfg = MctsConfig {
            root_noise: Some((0.3, 0.25)),
            seed: 4,
            ..Default::default()
        };
        let mut tree = SearchTree::new(s, Window { end: 6, baseline_colors: 4 }, cfg).unwrap();
        tree.search(&mut UniformEvaluator::default(), 1).unwrap();
        let priors: Vec<f64> = tree.root_edges().iter().map(|e| e.prior).collect();
        assert!((priors.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(priors.iter().any(|&p| (p - 0.25).abs() > 1e-6));
    }

    /// Best reachable value from `state` under the window.
    fn exhaustive(state: &mut ColoringState, w: &Window) -> f64 {
        if let Some(o) = w.decided(state) {
            return o.value();
        }
        let mut best = f64::NEG_INFINITY;
        for a in state.valid_actions().unwrap().iter().collect::<Vec<_>>() {
            state.apply(a).unwrap();
            best = best.max(exhaustive(state, w));
            state.undo().unwrap();
        }
        best
    }

    #[test]
    fn matches_exhaustive_search_on_small_graphs() {
        for seed in 0..12u64 {
            let g = Arc::new(crate::graph::gen_er(7, 0.45, seed).unwrap());
            let chi = brute_force_chromatic(&g).unwrap();
            let mut s = ColoringState::new(g.clone());
            s.apply(Action::New).unwrap();
            let w = Window::full(&s, chi + 1);
            let mut tree = SearchTree::new(s.clone(), w, MctsConfig::default()).unwrap();
            tree.search(&mut UniformEvaluator::default(), 3000).unwrap();
            let mut probe = s.clone();
            let best = exhaustive(&mut probe, &w);
            let a = tree.root_edges()[tree.best_index().unwrap()].action;
            probe.apply(a).unwrap();
            assert_eq!(exhaustive(&mut probe, &w), best, "seed {seed}");
            assert_eq!(best, 1.0);
        }
    }
}
