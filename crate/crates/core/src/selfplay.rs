//! Self-play against a frozen baseline with limited run-ahead.
//!
//! The baseline policy colors the whole graph once; its color count after
//! every move is the reference. A segment starts at a sampled move, plays a
//! few MCTS moves, completes the scoring window with the fast policy and
//! labels the segment's moves with the window outcome.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng as _;

use crate::coloring::{heuristic_order, Action, ActionSet, ColoringState, HeuristicKind, Outcome};
use crate::embedding::EmbeddingTable;
use crate::error::contract;
use crate::fcn::{Contexts, FastColorNet, TrainItem};
use crate::graph::Graph;
use crate::mcts::{Evaluator, MctsConfig, SearchTree, Window};
use crate::nn::ParamStore;
use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const DEFAULT_RUN_AHEAD: usize = 256;
pub const DEFAULT_SEGMENT: usize = 8;
pub const DEFAULT_SAMPLE_FIRST_K: usize = 30;
pub const DEFAULT_BUFFER_CAPACITY: usize = 1 << 20;

/// A deterministic one-move-at-a-time coloring policy.
pub trait MovePolicy {
    fn choose(&mut self, state: &ColoringState) -> Result<Action>;
}

/// Smallest valid color along the given order.
#[derive(Clone, Copy, Debug, Default)]
pub struct GreedySmallest;

impl MovePolicy for GreedySmallest {
    fn choose(&mut self, state: &ColoringState) -> Result<Action> {
        state.smallest_valid()
    }
}

/// Argmax of the P-network (lowest index on ties), no search.
pub struct NetGreedy<'a> {
    pub net: &'a FastColorNet,
    pub store: &'a ParamStore,
    pub table: &'a EmbeddingTable,
}

impl MovePolicy for NetGreedy<'_> {
    fn choose(&mut self, state: &ColoringState) -> Result<Action> {
        let ctx = self.net.contexts(state, self.table)?;
        if ctx.candidate_count() == 1 {
            return Ok(ctx.actions.get(0).expect("one candidate"));
        }
        let out = self.net.predict(self.store, &ctx, self.table)?;
        let mut best = 0;
        for (i, &p) in out.p.iter().enumerate() {
            if p > out.p[best] {
                best = i;
            }
        }
        Ok(ctx.actions.get(best).expect("index within candidates"))
    }
}

/// Plays `policy` until `stop` holds or the coloring is complete.
pub fn play_until<P, F>(state: &mut ColoringState, policy: &mut P, mut stop: F) -> Result<()>
where
    P: MovePolicy + ?Sized,
    F: FnMut(&ColoringState) -> bool,
{
    while !state.is_complete() && !stop(state) {
        let a = policy.choose(state)?;
        state.apply(a)?;
    }
    Ok(())
}

/// The state after `start_t` moves of `policy` from the empty coloring.
pub fn fast_forward<P: MovePolicy + ?Sized>(
    graph: Arc<Graph>,
    order: Arc<[u32]>,
    start_t: usize,
    policy: &mut P,
) -> Result<ColoringState> {
    let mut state = ColoringState::with_order(graph, order)?;
    if start_t > state.vertex_count() {
        return Err(contract!("start move {start_t} beyond {} vertices", state.vertex_count()));
    }
    play_until(&mut state, policy, |s| s.t() >= start_t)?;
    Ok(state)
}

/// The baseline's complete run: colors used after every move.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineTrace {
    pub cumulative: Vec<usize>,
    pub coloring: Vec<u32>,
}

impl BaselineTrace {
    /// Colors used after `t` moves.
    pub fn colors_after(&self, t: usize) -> usize {
        match t {
            0 => 0,
            t => self.cumulative[t.min(self.cumulative.len()) - 1],
        }
    }

    /// The baseline score of the whole graph.
    pub fn chi(&self) -> usize {
        self.colors_after(self.cumulative.len())
    }
}

pub fn baseline_score<P: MovePolicy + ?Sized>(
    graph: Arc<Graph>,
    order: Arc<[u32]>,
    policy: &mut P,
) -> Result<BaselineTrace> {
    let mut state = ColoringState::with_order(graph, order)?;
    let mut cumulative = Vec::with_capacity(state.vertex_count());
    while !state.is_complete() {
        let a = policy.choose(&state)?;
        state.apply(a)?;
        cumulative.push(state.colors_used());
    }
    Ok(BaselineTrace {
        cumulative,
        coloring: state.colors().into_iter().map(|c| c.expect("complete")).collect(),
    })
}

/// The fixed visitation order used by the agent: the dynamic (most
/// constrained first) order, computed once per graph.
pub fn agent_order(g: &Graph) -> Arc<[u32]> {
    heuristic_order(g, HeuristicKind::Dynamic).into()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeConfig {
    /// Moves past the segment start that are scored.
    pub run_ahead: usize,
    /// MCTS moves per sampled position.
    pub segment: usize,
    /// Moves before this index sample from `pi`; later ones take the argmax.
    pub sample_first_k: usize,
    pub move_sample_rate: f64,
    pub mcts: MctsConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            run_ahead: DEFAULT_RUN_AHEAD,
            segment: DEFAULT_SEGMENT,
            sample_first_k: DEFAULT_SAMPLE_FIRST_K,
            move_sample_rate: 0.1,
            mcts: MctsConfig::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run_ahead == 0 || self.segment == 0 {
            return Err(Error::Param("run-ahead and segment length must be at least 1".into()));
        }
        if !(self.move_sample_rate > 0.0 && self.move_sample_rate <= 1.0) {
            return Err(Error::Param("move sample rate must be in (0, 1]".into()));
        }
        if self.mcts.simulations == 0 {
            return Err(Error::Param("at least one simulation per move".into()));
        }
        Ok(())
    }
}

/// A graph with its visitation order, shared by every record on it.
#[derive(Clone, Debug)]
pub struct GameRef {
    pub id: usize,
    pub graph: Arc<Graph>,
    pub order: Arc<[u32]>,
}

impl GameRef {
    pub fn new(id: usize, graph: Arc<Graph>) -> Self {
        let order = agent_order(&graph);
        GameRef { id, graph, order }
    }
}

/// One `(G, C, pi, z)` tuple. `C` is the first `t` colors of `trajectory`.
#[derive(Clone, Debug)]
pub struct MoveRecord {
    pub game: GameRef,
    pub trajectory: Arc<[u32]>,
    pub t: usize,
    pub actions: ActionSet,
    pub pi: Vec<f64>,
    pub z: Outcome,
}

impl MoveRecord {
    pub fn state(&self) -> Result<ColoringState> {
        let mut s = ColoringState::with_order(self.game.graph.clone(), self.game.order.clone())?;
        for &c in &self.trajectory[..self.t] {
            s.apply_color(c)?;
        }
        Ok(s)
    }
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub start_t: usize,
    pub window_end: usize,
    pub records: Vec<MoveRecord>,
    pub z: Outcome,
    /// Agent colors when the outcome was settled.
    pub agent_colors: usize,
    pub baseline_colors: usize,
    /// The outcome was settled before the window end.
    pub aborted: bool,
    /// Moves made by the fast policy after the search moves.
    pub fast_moves: usize,
}

/// Plays one segment from `state` (already fast-forwarded to its start).
pub fn play_segment<E, P>(
    game: &GameRef,
    state: ColoringState,
    baseline: &BaselineTrace,
    cfg: &EpisodeConfig,
    eval: &mut E,
    fast: &mut P,
    seed: u64,
) -> Result<Segment>
where
    E: Evaluator + ?Sized,
    P: MovePolicy + ?Sized,
{
    cfg.validate()?;
    if baseline.cumulative.len() != state.vertex_count() {
        return Err(contract!("baseline trace does not match the graph"));
    }
    let start_t = state.t();
    let n = state.vertex_count();
    let end = (start_t + cfg.run_ahead).min(n);
    let window = Window {
        end,
        baseline_colors: baseline.colors_after(end),
    };
    let mut r = rng::rng(rng::mix(seed, game.id as u64, start_t as u64));
    let mut moves: Vec<(usize, ActionSet, Vec<f64>)> = Vec::new();
    let mut state = state;
    let mcts = MctsConfig {
        seed: rng::mix(seed, game.id as u64, !(start_t as u64)),
        ..cfg.mcts
    };
    if window.decided(&state).is_none() {
        let mut tree = SearchTree::new(state, window, mcts)?;
        for _ in 0..cfg.segment.min(end - start_t) {
            if window.decided(tree.state()).is_some() {
                break;
            }
            tree.search(&mut EvalRef(eval), cfg.mcts.simulations)?;
            let pi = tree.policy(1.0)?;
            let k = if tree.state().t() < cfg.sample_first_k {
                tree.sample_index(&mut r)?
            } else {
                tree.best_index().expect("searched root")
            };
            let actions = ActionSet {
                existing: tree
                    .root_edges()
                    .iter()
                    .filter_map(|e| match e.action {
                        Action::Existing(c) => Some(c),
                        Action::New => None,
                    })
                    .collect(),
                includes_new: tree.root_edges().iter().any(|e| e.action == Action::New),
            };
            moves.push((tree.state().t(), actions, pi));
            let a = tree.root_edges()[k].action;
            tree.advance_root(a)?;
        }
        state = tree.state().clone();
    }
    let searched_t = state.t();
    play_until(&mut state, fast, |s| window.decided(s).is_some())?;
    let z = window.decided(&state).expect("window settles by its end");
    let trajectory: Arc<[u32]> = state.color_sequence()[..searched_t].into();
    let records = moves
        .into_iter()
        .map(|(t, actions, pi)| MoveRecord {
            game: game.clone(),
            trajectory: trajectory.clone(),
            t,
            actions,
            pi,
            z,
        })
        .collect();
    Ok(Segment {
        start_t,
        window_end: end,
        records,
        z,
        agent_colors: state.colors_used(),
        baseline_colors: window.baseline_colors,
        aborted: state.t() < end,
        fast_moves: state.t() - searched_t,
    })
}

struct EvalRef<'a, E: ?Sized>(&'a mut E);

impl<E: Evaluator + ?Sized> Evaluator for EvalRef<'_, E> {
    fn evaluate(&mut self, state: &ColoringState) -> Result<crate::mcts::Evaluation> {
        self.0.evaluate(state)
    }
}

/// Uniform sample without replacement of `round(rate * total)` move indices
/// over all graphs; returns sorted `(graph index, move)` pairs.
pub fn sample_positions(sizes: &[usize], rate: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if sizes.is_empty() {
        return Err(Error::Param("no graphs to sample from".into()));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Param("move sample rate must be in [0, 1]".into()));
    }
    let total: usize = sizes.iter().sum();
    let k = libm::round(rate * total as f64) as usize;
    let mut picks = sample(&mut rng::rng(seed), total, k.min(total)).into_vec();
    picks.sort_unstable();
    let mut out = Vec::with_capacity(picks.len());
    let mut g = 0;
    let mut base = 0;
    for p in picks {
        while p >= base + sizes[g] {
            base += sizes[g];
            g += 1;
        }
        out.push((g, p - base));
    }
    Ok(out)
}

/// Bounded FIFO of move records.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    records: VecDeque<MoveRecord>,
    appended: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Param("buffer capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            records: VecDeque::new(),
            appended: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Records ever appended, evicted ones included.
    pub fn appended(&self) -> u64 {
        self.appended
    }

    pub fn append<I: IntoIterator<Item = MoveRecord>>(&mut self, records: I) {
        for r in records {
            if self.records.len() == self.capacity {
                self.records.pop_front();
            }
            self.records.push_back(r);
            self.appended += 1;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &MoveRecord> {
        self.records.iter()
    }

    /// Uniform with replacement.
    pub fn sample(&self, batch: usize, r: &mut Rng) -> Result<Vec<&MoveRecord>> {
        if self.records.is_empty() {
            return Err(Error::State("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..batch)
            .map(|_| &self.records[r.random_range(0..self.records.len())])
            .collect())
    }

    /// Distinct graph allocations referenced by the stored records.
    pub fn distinct_graphs(&self) -> usize {
        self.records
            .iter()
            .map(|r| Arc::as_ptr(&r.game.graph) as usize)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Embedding tables per graph id for one parameter version.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingCache {
    version: u64,
    tables: BTreeMap<usize, Arc<EmbeddingTable>>,
    computed: usize,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every table if `version` differs from the cached one.
    pub fn sync(&mut self, version: u64) {
        if version != self.version {
            self.tables.clear();
            self.version = version;
        }
    }

    pub fn get(
        &mut self,
        game: &GameRef,
        net: &FastColorNet,
        store: &ParamStore,
        version: u64,
    ) -> Result<Arc<EmbeddingTable>> {
        self.sync(version);
        if let Some(t) = self.tables.get(&game.id) {
            return Ok(t.clone());
        }
        let t = Arc::new(net.embed_graph(store, &game.graph)?);
        self.tables.insert(game.id, t.clone());
        self.computed += 1;
        Ok(t)
    }

    pub fn insert(&mut self, id: usize, table: Arc<EmbeddingTable>, version: u64) {
        self.sync(version);
        self.tables.insert(id, table);
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Tables computed (not served from the cache) so far.
    pub fn computed(&self) -> usize {
        self.computed
    }
}

/// A record turned into network inputs with the current embeddings.
pub struct TrainingExample {
    pub contexts: Contexts,
    pub table: Arc<EmbeddingTable>,
    pub graph: Arc<Graph>,
    pub pi: Vec<f64>,
    pub z: Outcome,
}

impl TrainingExample {
    pub fn from_record(
        record: &MoveRecord,
        net: &FastColorNet,
        table: Arc<EmbeddingTable>,
    ) -> Result<Self> {
        let state = record.state()?;
        let contexts = net.contexts(&state, &table)?;
        if contexts.actions != record.actions {
            return Err(contract!("record actions do not match the candidates at move {}", record.t));
        }
        Ok(TrainingExample {
            contexts,
            table,
            graph: record.game.graph.clone(),
            pi: record.pi.clone(),
            z: record.z,
        })
    }

    pub fn item(&self) -> TrainItem<'_> {
        TrainItem {
            contexts: &self.contexts,
            table: &self.table,
            graph: &self.graph,
            pi: &self.pi,
            z: self.z,
        }
    }
}
