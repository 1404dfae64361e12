//! Coloring as a deterministic decision process.
//!
//! A [`ColoringState`] is the partial assignment after `t` moves along a fixed
//! visitation order. A move gives the next vertex either an already used color
//! that none of its colored neighbors carry, or a fresh color whose id is the
//! current color count, so ids are always dense.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::Graph;
use crate::{Error, Result};

const UNCOLORED: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Existing(u32),
    New,
}

/// Legal moves at a state: valid used colors in ascending order, then `new`.
/// Action index `k` means `existing[k]` for `k < existing.len()`, `new` last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSet {
    pub existing: Vec<u32>,
    pub includes_new: bool,
}

impl ActionSet {
    pub fn len(&self) -> usize {
        self.existing.len() + usize::from(self.includes_new)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Option<Action> {
        match self.existing.get(index) {
            Some(&c) => Some(Action::Existing(c)),
            None if self.includes_new && index == self.existing.len() => Some(Action::New),
            None => None,
        }
    }

    pub fn index_of(&self, action: Action) -> Option<usize> {
        match action {
            Action::Existing(c) => self.existing.binary_search(&c).ok(),
            Action::New if self.includes_new => Some(self.existing.len()),
            Action::New => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        self.existing
            .iter()
            .map(|&c| Action::Existing(c))
            .chain(self.includes_new.then_some(Action::New))
    }

    /// Keeps only the `cap` lowest existing colors (plus `new`). Returns
    /// whether anything was dropped.
    pub fn cap(&mut self, cap: usize) -> bool {
        if self.existing.len() > cap {
            self.existing.truncate(cap);
            true
        } else {
            false
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Win,
    Tie,
    Lose,
}

impl Outcome {
    pub fn value(self) -> f64 {
        match self {
            Outcome::Win => 1.0,
            Outcome::Tie => 0.0,
            Outcome::Lose => -1.0,
        }
    }

    /// Position in the value head's (win, tie, lose) distribution.
    pub fn index(self) -> usize {
        match self {
            Outcome::Win => 0,
            Outcome::Tie => 1,
            Outcome::Lose => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        [Outcome::Win, Outcome::Tie, Outcome::Lose].get(i).copied()
    }
}

/// Fewer colors than the baseline wins, the same number ties, more loses.
pub fn outcome_vs_baseline(agent_colors: usize, baseline_colors: usize) -> Outcome {
    match agent_colors.cmp(&baseline_colors) {
        core::cmp::Ordering::Less => Outcome::Win,
        core::cmp::Ordering::Equal => Outcome::Tie,
        core::cmp::Ordering::Greater => Outcome::Lose,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeuristicKind {
    /// Vertex-id order.
    Unordered,
    /// Static degree, largest first.
    Ordered,
    /// Largest dynamic degree first; coloring a vertex decrements the dynamic
    /// degree of its uncolored neighbors.
    Dynamic,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 3] = [
        HeuristicKind::Unordered,
        HeuristicKind::Ordered,
        HeuristicKind::Dynamic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeuristicKind::Unordered => "unordered",
            HeuristicKind::Ordered => "ordered",
            HeuristicKind::Dynamic => "dynamic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug)]
pub struct ColoringState {
    graph: Arc<Graph>,
    order: Arc<[u32]>,
    t: usize,
    color_of: Vec<u32>,
    color_members: Vec<Vec<u32>>,
}

impl ColoringState {
    /// Empty assignment visiting vertices in id order.
    pub fn new(graph: Arc<Graph>) -> Self {
        let order: Arc<[u32]> = (0..graph.vertex_count() as u32).collect();
        Self::with_order(graph, order).expect("identity is a permutation")
    }

    pub fn with_order(graph: Arc<Graph>, order: Arc<[u32]>) -> Result<Self> {
        let n = graph.vertex_count();
        if order.len() != n {
            return Err(Error::Contract(format!(
                "order has {} entries for {n} vertices",
                order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &v in order.iter() {
            let v = v as usize;
            if v >= n || core::mem::replace(&mut seen[v], true) {
                return Err(Error::Contract("order is not a permutation".into()));
            }
        }
        Ok(ColoringState {
            graph,
            order,
            t: 0,
            color_of: vec![UNCOLORED; n],
            color_members: Vec::new(),
        })
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn order(&self) -> &Arc<[u32]> {
        &self.order
    }

    /// Number of moves made so far, which is also the next position in the order.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn vertex_count(&self) -> usize {
        self.color_of.len()
    }

    pub fn is_complete(&self) -> bool {
        self.t == self.vertex_count()
    }

    pub fn colors_used(&self) -> usize {
        self.color_members.len()
    }

    pub fn color_of(&self, v: usize) -> Option<u32> {
        match self.color_of[v] {
            UNCOLORED => None,
            c => Some(c),
        }
    }

    /// Vertices of color `c` in the order they received it.
    pub fn members(&self, c: u32) -> &[u32] {
        &self.color_members[c as usize]
    }

    pub fn current_vertex(&self) -> Option<usize> {
        self.order.get(self.t).map(|&v| v as usize)
    }

    /// The diagnostic per-step reward: minus the colors used so far.
    pub fn step_reward(&self) -> f64 {
        -(self.colors_used() as f64)
    }

    pub fn valid_actions(&self) -> Result<ActionSet> {
        let v = self
            .current_vertex()
            .ok_or_else(|| Error::State("coloring is complete".into()))?;
        let k = self.colors_used();
        let mut blocked = vec![false; k];
        for &u in self.graph.neighbors(v) {
            let c = self.color_of[u as usize];
            if c != UNCOLORED {
                blocked[c as usize] = true;
            }
        }
        let existing = (0..k as u32).filter(|&c| !blocked[c as usize]).collect();
        Ok(ActionSet {
            existing,
            includes_new: true,
        })
    }

    /// Whether `c` is free at the current vertex; `O(deg)`.
    pub fn is_valid_color(&self, c: u32) -> bool {
        let Some(v) = self.current_vertex() else {
            return false;
        };
        (c as usize) < self.colors_used()
            && self
                .graph
                .neighbors(v)
                .iter()
                .all(|&u| self.color_of[u as usize] != c)
    }

    /// Smallest color not carried by a colored neighbor (possibly `new`).
    pub fn smallest_valid(&self) -> Result<Action> {
        let v = self
            .current_vertex()
            .ok_or_else(|| Error::State("coloring is complete".into()))?;
        let k = self.colors_used();
        let mut blocked = vec![false; k];
        for &u in self.graph.neighbors(v) {
            let c = self.color_of[u as usize];
            if c != UNCOLORED {
                blocked[c as usize] = true;
            }
        }
        Ok(match blocked.iter().position(|&b| !b) {
            Some(c) => Action::Existing(c as u32),
            None => Action::New,
        })
    }

    pub fn apply(&mut self, action: Action) -> Result<u32> {
        let v = self
            .current_vertex()
            .ok_or_else(|| Error::State("coloring is complete".into()))?;
        let c = match action {
            Action::New => {
                self.color_members.push(Vec::new());
                (self.color_members.len() - 1) as u32
            }
            Action::Existing(c) => {
                if !self.is_valid_color(c) {
                    return Err(Error::Contract(format!(
                        "color {c} is not valid for vertex {v} at move {}",
                        self.t
                    )));
                }
                c
            }
        };
        self.color_of[v] = c;
        self.color_members[c as usize].push(v as u32);
        self.t += 1;
        Ok(c)
    }

    /// Reverts the most recent move.
    pub fn undo(&mut self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::State("no move to undo".into()));
        }
        self.t -= 1;
        let v = self.order[self.t] as usize;
        let c = self.color_of[v] as usize;
        self.color_members[c].pop();
        if self.color_members[c].is_empty() {
            self.color_members.pop();
        }
        self.color_of[v] = UNCOLORED;
        Ok(())
    }

    /// Applies a color id as produced by an earlier run (`id == colors_used`
    /// means `new`).
    pub fn apply_color(&mut self, c: u32) -> Result<()> {
        let action = if c as usize == self.colors_used() {
            Action::New
        } else {
            Action::Existing(c)
        };
        self.apply(action).map(|_| ())
    }

    /// Action taken to give the vertex at position `t` its color, as a color id.
    pub fn color_at_move(&self, t: usize) -> Option<u32> {
        self.order
            .get(t)
            .and_then(|&v| self.color_of(v as usize))
    }

    pub fn color_sequence(&self) -> Vec<u32> {
        (0..self.t).map(|t| self.color_at_move(t).unwrap()).collect()
    }

    pub fn colors(&self) -> Vec<Option<u32>> {
        (0..self.vertex_count()).map(|v| self.color_of(v)).collect()
    }

    /// Full invariant check: prefix-proper, dense ids, member lists consistent.
    pub fn check_invariants(&self) -> Result<()> {
        let colored = self.color_of.iter().filter(|&&c| c != UNCOLORED).count();
        if colored != self.t {
            return Err(Error::State(format!("{colored} colored after {} moves", self.t)));
        }
        let mut total = 0;
        for (c, members) in self.color_members.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::State(format!("color {c} unused")));
            }
            total += members.len();
            for &v in members {
                if self.color_of[v as usize] != c as u32 {
                    return Err(Error::State(format!("member list of {c} is stale")));
                }
            }
        }
        if total != colored {
            return Err(Error::State("member lists do not partition".into()));
        }
        for (u, v) in self.graph.edges() {
            let (a, b) = (self.color_of[u], self.color_of[v]);
            if a != UNCOLORED && a == b {
                return Err(Error::State(format!("edge ({u}, {v}) monochromatic")));
            }
        }
        Ok(())
    }
}

/// Checks that `colors` is a complete proper coloring of `g`; returns the
/// number of distinct colors.
pub fn verify_coloring(g: &Graph, colors: &[u32]) -> Result<usize> {
    if colors.len() != g.vertex_count() {
        return Err(Error::Contract(format!(
            "{} colors for {} vertices",
            colors.len(),
            g.vertex_count()
        )));
    }
    for (u, v) in g.edges() {
        if colors[u] == colors[v] {
            return Err(Error::State(format!(
                "edge ({u}, {v}) has both endpoints colored {}",
                colors[u]
            )));
        }
    }
    Ok(colors.iter().collect::<BTreeSet<_>>().len())
}

/// Vertex order used by a heuristic.
pub fn heuristic_order(g: &Graph, kind: HeuristicKind) -> Vec<u32> {
    let n = g.vertex_count();
    match kind {
        HeuristicKind::Unordered => (0..n as u32).collect(),
        HeuristicKind::Ordered => {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by_key(|&v| (core::cmp::Reverse(g.degree(v as usize)), v));
            order
        }
        HeuristicKind::Dynamic => dynamic_order(g),
    }
}

/// Dynamic-degree order with bucket queues keyed by current dynamic degree.
/// Ties go to the smallest id. The max pointer only moves down, since
/// dynamic degrees only decrease.
fn dynamic_order(g: &Graph) -> Vec<u32> {
    let n = g.vertex_count();
    let mut dyn_deg: Vec<usize> = g.degrees().collect();
    let mut buckets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); g.max_degree() + 1];
    for v in 0..n {
        buckets[dyn_deg[v]].insert(v as u32);
    }
    let mut done = vec![false; n];
    let mut top = g.max_degree();
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        while buckets[top].is_empty() {
            top -= 1;
        }
        let v = buckets[top].pop_first().unwrap() as usize;
        done[v] = true;
        order.push(v as u32);
        for &u in g.neighbors(v) {
            let u = u as usize;
            if !done[u] {
                let d = dyn_deg[u];
                buckets[d].remove(&(u as u32));
                dyn_deg[u] = d - 1;
                buckets[d - 1].insert(u as u32);
            }
        }
    }
    order
}

/// Greedy smallest-color along an explicit order.
pub fn greedy_along(graph: Arc<Graph>, order: Arc<[u32]>) -> Result<ColoringState> {
    let mut state = ColoringState::with_order(graph, order)?;
    while !state.is_complete() {
        let a = state.smallest_valid()?;
        state.apply(a)?;
    }
    Ok(state)
}

/// One of the baseline heuristics. Returns the complete state and its color count.
pub fn greedy_color(graph: Arc<Graph>, kind: HeuristicKind) -> (ColoringState, usize) {
    let order: Arc<[u32]> = heuristic_order(&graph, kind).into();
    let state = greedy_along(graph, order).expect("heuristic order is a permutation");
    let k = state.colors_used();
    (state, k)
}

/// log10 of the product of branching factors along the heuristic's trajectory.
pub fn estimate_mdp_size(graph: Arc<Graph>, kind: HeuristicKind) -> f64 {
    let order: Arc<[u32]> = heuristic_order(&graph, kind).into();
    let mut state = ColoringState::with_order(graph, order).expect("permutation");
    let mut log10_states = 0.0;
    while !state.is_complete() {
        let actions = state.valid_actions().expect("incomplete");
        log10_states += libm::log10(actions.len() as f64);
        let a = state.smallest_valid().expect("incomplete");
        state.apply(a).expect("valid");
    }
    log10_states
}

pub const DEFAULT_CHROMATIC_CAP: usize = 12;

pub fn brute_force_chromatic(g: &Graph) -> Result<usize> {
    brute_force_chromatic_capped(g, DEFAULT_CHROMATIC_CAP)
}

/// Exact chromatic number by backtracking between a greedy-clique lower bound
/// and the dynamic heuristic's upper bound.
pub fn brute_force_chromatic_capped(g: &Graph, cap: usize) -> Result<usize> {
    let n = g.vertex_count();
    if n > cap {
        return Err(Error::Size {
            limit: cap,
            actual: n,
        });
    }
    if n == 0 {
        return Ok(0);
    }
    let order = heuristic_order(g, HeuristicKind::Ordered);
    let mut clique: Vec<usize> = Vec::new();
    for &v in &order {
        if clique.iter().all(|&u| g.has_edge(u, v as usize)) {
            clique.push(v as usize);
        }
    }
    let (_, upper) = greedy_color(Arc::new(g.clone()), HeuristicKind::Dynamic);
    let mut colors = vec![UNCOLORED; n];
    for k in clique.len()..upper {
        colors.fill(UNCOLORED);
        if colorable(g, &order, 0, k, &mut colors, 0) {
            return Ok(k);
        }
    }
    Ok(upper)
}

fn colorable(g: &Graph, order: &[u32], pos: usize, k: usize, colors: &mut [u32], used: u32) -> bool {
    if pos == order.len() {
        return true;
    }
    let v = order[pos] as usize;
    // Colors above `used` are interchangeable, so only try one fresh color.
    let limit = (used + 1).min(k as u32);
    for c in 0..limit {
        if g.neighbors(v).iter().all(|&u| colors[u as usize] != c) {
            colors[v] = c;
            if colorable(g, order, pos + 1, k, colors, used.max(c + 1)) {
                return true;
            }
            colors[v] = UNCOLORED;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(g: Graph) -> Arc<Graph> {
        Arc::new(g)
    }

    #[test]
    fn actions_on_k4_are_forced() {
        let mut s = ColoringState::new(arc(Graph::complete(4)));
        s.apply(Action::New).unwrap();
        s.apply(Action::New).unwrap();
        let a = s.valid_actions().unwrap();
        assert!(a.existing.is_empty());
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn actions_on_empty_and_path() {
        let mut s = ColoringState::new(arc(Graph::empty(3)));
        s.apply(Action::New).unwrap();
        assert_eq!(s.valid_actions().unwrap().len(), 2);

        let mut p = ColoringState::new(arc(Graph::path(3)));
        p.apply(Action::New).unwrap();
        p.apply(Action::New).unwrap();
        let a = p.valid_actions().unwrap();
        assert_eq!(a.existing, vec![0]);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![Action::Existing(0), Action::New]);
    }

    #[test]
    fn completed_state_has_no_actions() {
        let mut s = ColoringState::new(arc(Graph::empty(1)));
        s.apply(Action::New).unwrap();
        assert!(matches!(s.valid_actions(), Err(Error::State(_))));
        assert!(matches!(s.apply(Action::New), Err(Error::State(_))));
    }

    #[test]
    fn invalid_action_is_rejected() {
        let mut s = ColoringState::new(arc(Graph::path(2)));
        s.apply(Action::New).unwrap();
        assert!(matches!(s.apply(Action::Existing(0)), Err(Error::Contract(_))));
        assert!(matches!(s.apply(Action::Existing(5)), Err(Error::Contract(_))));
    }

    #[test]
    fn new_increments_colors() {
        let mut s = ColoringState::new(arc(Graph::empty(3)));
        s.apply(Action::New).unwrap();
        let before = s.colors_used();
        assert_eq!(s.apply(Action::New).unwrap(), before as u32);
        assert_eq!(s.colors_used(), before + 1);
    }

    #[test]
    fn crown_alternating_order_greedy() {
        let (state, k) = greedy_color(arc(Graph::crown(4)), HeuristicKind::Unordered);
        assert_eq!(k, 4);
        state.check_invariants().unwrap();
        assert_eq!(brute_force_chromatic(&Graph::crown(4)).unwrap(), 2);
    }

    #[test]
    fn heuristics_on_named_graphs() {
        for kind in HeuristicKind::ALL {
            assert_eq!(greedy_color(arc(Graph::complete(6)), kind).1, 6);
        }
        assert_eq!(greedy_color(arc(Graph::star(5)), HeuristicKind::Ordered).1, 2);
        assert_eq!(heuristic_order(&Graph::star(5), HeuristicKind::Ordered)[0], 0);
    }

    #[test]
    fn dynamic_order_ties_by_id() {
        // Degrees 1,2,2,1: take 1 (tie with 2), then 2 (tie with 3), then 0, 3.
        let order = heuristic_order(&Graph::path(4), HeuristicKind::Dynamic);
        assert_eq!(order, vec![1, 2, 0, 3]);
    }

    #[test]
    fn outcomes() {
        assert_eq!(outcome_vs_baseline(3, 4), Outcome::Win);
        assert_eq!(outcome_vs_baseline(4, 4), Outcome::Tie);
        assert_eq!(outcome_vs_baseline(5, 4), Outcome::Lose);
        assert_eq!(Outcome::Lose.value(), -1.0);
    }

    #[test]
    fn mdp_size_examples() {
        assert_eq!(estimate_mdp_size(arc(Graph::complete(4)), HeuristicKind::Unordered), 0.0);
        let e = estimate_mdp_size(arc(Graph::empty(3)), HeuristicKind::Unordered);
        assert!((e - libm::log10(4.0)).abs() < 1e-12);
    }

    #[test]
    fn mdp_size_ignores_forced_prefix() {
        // A clique joined to every body vertex: its moves are forced and its
        // colors stay blocked for the body, so the body's branching is unchanged.
        for body in [Graph::empty(3), Graph::path(4), Graph::cycle(5)] {
            let m = 3;
            let n = body.vertex_count();
            let mut edges: Vec<(usize, usize)> = Graph::complete(m).edges().collect();
            edges.extend(body.edges().map(|(u, v)| (u + m, v + m)));
            edges.extend((0..m).flat_map(|c| (0..n).map(move |v| (c, v + m))));
            let joined = Graph::from_edges(m + n, edges).unwrap().0;
            let a = estimate_mdp_size(arc(body), HeuristicKind::Unordered);
            let b = estimate_mdp_size(arc(joined), HeuristicKind::Unordered);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chromatic_oracle() {
        assert_eq!(brute_force_chromatic(&Graph::cycle(5)).unwrap(), 3);
        assert_eq!(brute_force_chromatic(&Graph::petersen()).unwrap(), 3);
        assert_eq!(brute_force_chromatic(&Graph::complete(5)).unwrap(), 5);
        assert_eq!(brute_force_chromatic(&Graph::empty(4)).unwrap(), 1);
        assert!(matches!(
            brute_force_chromatic(&Graph::empty(13)),
            Err(Error::Size { limit: 12, actual: 13 })
        ));
    }

    #[test]
    fn verify_rejects_improper() {
        let g = Graph::path(3);
        assert_eq!(verify_coloring(&g, &[0, 1, 0]).unwrap(), 2);
        assert!(verify_coloring(&g, &[0, 0, 1]).is_err());
        assert!(verify_coloring(&g, &[0, 1]).is_err());
    }
}
