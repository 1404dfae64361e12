//! Policy iteration (self-play, training, gating) and evaluation.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use fastcolor_core::coloring::{greedy_color, verify_coloring, ColoringState, HeuristicKind, Outcome};
use fastcolor_core::embedding::EmbeddingTable;
use fastcolor_core::fcn::{FastColorNet, StepStats};
use fastcolor_core::graph::Graph;
use fastcolor_core::mcts::{MctsConfig, NetEvaluator, SearchTree, Window};
use fastcolor_core::nn::{AdamConfig, AdamState, ParamStore};
use fastcolor_core::rng::{self, Rng};
use fastcolor_core::selfplay::{
    baseline_score, play_segment, play_until, sample_positions, BaselineTrace, EmbeddingCache, GameRef,
    GreedySmallest, MovePolicy, NetGreedy, ReplayBuffer, Segment, TrainingExample,
};

use crate::checkpoint::{Checkpoint, GateRecord};
use crate::config::TrainConfig;
use crate::error::{Error, Result};

/// Greedy decoding of the P-network along the game's order; verified.
pub fn model_coloring(
    net: &FastColorNet,
    params: &ParamStore,
    game: &GameRef,
    table: &EmbeddingTable,
) -> Result<Vec<u32>> {
    let mut state = ColoringState::with_order(game.graph.clone(), game.order.clone())?;
    play_until(&mut state, &mut NetGreedy { net, store: params, table }, |_| false)?;
    finish(&game.graph, &state)
}

fn finish(g: &Graph, state: &ColoringState) -> Result<Vec<u32>> {
    let colors: Vec<u32> = state
        .colors()
        .into_iter()
        .map(|c| c.ok_or_else(|| Error::Core(fastcolor_core::Error::State("coloring incomplete".into()))))
        .collect::<Result<_>>()?;
    verify_coloring(g, &colors)?;
    Ok(colors)
}

/// Root statistics of one search move.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub move_index: usize,
    pub action: String,
    pub prior: f64,
    pub visits: u32,
    pub q: f64,
    pub pi: f64,
}

/// Search-guided decoding: every move runs `mcts.simulations` simulations
/// and takes the most visited action. The window is the whole graph scored
/// against the model's own greedy coloring.
pub fn mcts_coloring(
    net: &FastColorNet,
    params: &ParamStore,
    game: &GameRef,
    table: &EmbeddingTable,
    mcts: MctsConfig,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<Vec<u32>> {
    let greedy = model_coloring(net, params, game, table)?;
    let chi = count_colors(&greedy);
    let state = ColoringState::with_order(game.graph.clone(), game.order.clone())?;
    if state.is_complete() {
        return Ok(Vec::new());
    }
    let window = Window::full(&state, chi);
    let mut tree = SearchTree::new(state, window, mcts)?;
    let mut eval = NetEvaluator::new(net, params, table);
    while !tree.state().is_complete() {
        tree.search(&mut eval, mcts.simulations)?;
        let best = tree.best_index().expect("searched root");
        if let Some(rows) = trace.as_deref_mut() {
            let pi = tree.policy(1.0)?;
            for (e, p) in tree.root_edges().iter().zip(pi) {
                rows.push(TraceRow {
                    move_index: tree.state().t(),
                    action: format!("{:?}", e.action),
                    prior: e.prior,
                    visits: e.n,
                    q: e.q,
                    pi: p,
                });
            }
        }
        let a = tree.root_edges()[best].action;
        tree.advance_root(a)?;
    }
    finish(&game.graph, tree.state())
}

pub fn count_colors(colors: &[u32]) -> usize {
    colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0)
}

/// Accept iff the candidate's average is no worse; ties go to the candidate.
pub fn gate_model(candidate_avg: f64, incumbent_avg: f64) -> bool {
    candidate_avg <= incumbent_avg
}

pub fn mean(xs: &[usize]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<usize>() as f64 / xs.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Heuristic(HeuristicKind),
    Greedy,
    Mcts,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Heuristic(k) => k.name(),
            Method::Greedy => "model",
            Method::Mcts => "model-mcts",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "model" => Some(Method::Greedy),
            "model-mcts" => Some(Method::Mcts),
            _ => HeuristicKind::parse(s).map(Method::Heuristic),
        }
    }
}

/// Per-graph color counts for every method, all verified proper.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub methods: Vec<String>,
    /// `colors[g][m]`.
    pub colors: Vec<Vec<usize>>,
    pub seconds: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

impl EvalReport {
    pub fn average(&self, m: usize) -> f64 {
        let col: Vec<usize> = self.colors.iter().map(|r| r[m]).collect();
        mean(&col)
    }

    pub fn averages(&self) -> Vec<f64> {
        (0..self.methods.len()).map(|m| self.average(m)).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    /// Method `m` against the per-graph best of the heuristic columns.
    pub fn tally_vs_heuristics(&self, m: usize) -> Tally {
        let heuristics: Vec<usize> = HeuristicKind::ALL
            .iter()
            .filter_map(|k| self.index_of(k.name()))
            .collect();
        let mut t = Tally::default();
        for row in &self.colors {
            let Some(best) = heuristics.iter().map(|&h| row[h]).min() else {
                continue;
            };
            match fastcolor_core::coloring::outcome_vs_baseline(row[m], best) {
                Outcome::Win => t.wins += 1,
                Outcome::Tie => t.ties += 1,
                Outcome::Lose => t.losses += 1,
            }
        }
        t
    }
}

/// A network with its parameters.
pub struct Model<'a> {
    pub net: &'a FastColorNet,
    pub params: &'a ParamStore,
    pub mcts: MctsConfig,
}

pub fn evaluate(graphs: &[Arc<Graph>], methods: &[Method], model: Option<&Model<'_>>) -> Result<EvalReport> {
    let mut report = EvalReport {
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        colors: Vec::with_capacity(graphs.len()),
        seconds: vec![0.0; methods.len()],
    };
    for (i, g) in graphs.iter().enumerate() {
        let game = GameRef::new(i, g.clone());
        let mut table: Option<EmbeddingTable> = None;
        let mut row = Vec::with_capacity(methods.len());
        for (k, &m) in methods.iter().enumerate() {
            let start = Instant::now();
            let colors = match m {
                Method::Heuristic(kind) => {
                    let (state, _) = greedy_color(g.clone(), kind);
                    finish(g, &state)?
                }
                Method::Greedy | Method::Mcts => {
                    let model = model.ok_or_else(|| Error::Config("model method without a model".into()))?;
                    if table.is_none() {
                        table = Some(model.net.embed_graph(model.params, g)?);
                    }
                    let table = table.as_ref().unwrap();
                    if m == Method::Greedy {
                        model_coloring(model.net, model.params, &game, table)?
                    } else {
                        mcts_coloring(model.net, model.params, &game, table, model.mcts, None)?
                    }
                }
            };
            report.seconds[k] += start.elapsed().as_secs_f64();
            row.push(count_colors(&colors));
        }
        report.colors.push(row);
    }
    Ok(report)
}

/// One row of the training curve. Everything here is a deterministic
/// function of the config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub steps: usize,
    pub clamped: usize,
    pub walks: usize,
    pub segments: usize,
    pub records: usize,
    pub buffer: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub aborted: usize,
    pub candidate_avg_colors: f64,
    /// Average of the gated (best) model after this iteration.
    pub eval_avg_colors: f64,
    pub accepted: bool,
}

impl IterationMetrics {
    pub fn win_rate(&self) -> f64 {
        if self.segments == 0 {
            0.0
        } else {
            self.wins as f64 / self.segments as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IterationTiming {
    pub selfplay: f64,
    pub train: f64,
    pub gate: f64,
}

/// Per-segment summary for the episode log.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SegmentLog {
    pub iteration: usize,
    pub graph: usize,
    pub start_t: usize,
    pub window_end: usize,
    pub moves: usize,
    pub z: &'static str,
    pub agent_colors: usize,
    pub baseline_colors: usize,
    pub aborted: bool,
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Win => "win",
        Outcome::Tie => "tie",
        Outcome::Lose => "lose",
    }
}

impl SegmentLog {
    fn new(iteration: usize, graph: usize, s: &Segment) -> Self {
        SegmentLog {
            iteration,
            graph,
            start_t: s.start_t,
            window_end: s.window_end,
            moves: s.records.len(),
            z: outcome_name(s.z),
            agent_colors: s.agent_colors,
            baseline_colors: s.baseline_colors,
            aborted: s.aborted,
        }
    }
}

/// The frozen best policy: the bootstrap heuristic or a gated model.
struct Best {
    params: Option<ParamStore>,
    train_tables: Vec<Arc<EmbeddingTable>>,
    baselines: Vec<BaselineTrace>,
    avg: f64,
}

/// Policy-iteration state. `step` runs one iteration.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub net: FastColorNet,
    pub params: ParamStore,
    pub adam: AdamState,
    pub buffer: ReplayBuffer,
    pub games: Vec<GameRef>,
    pub eval_games: Vec<GameRef>,
    pub gating: Vec<GateRecord>,
    pub iteration: usize,
    best: Best,
    cache: EmbeddingCache,
    version: u64,
    steps_since_refresh: usize,
    rng: Rng,
}

fn games(graphs: Vec<Graph>) -> Vec<GameRef> {
    graphs
        .into_iter()
        .enumerate()
        .map(|(i, g)| GameRef::new(i, Arc::new(g)))
        .collect()
}

fn greedy_policy<'a>(
    net: &'a FastColorNet,
    params: Option<&'a ParamStore>,
    table: Option<&'a EmbeddingTable>,
) -> Box<dyn MovePolicy + 'a> {
    match (params, table) {
        (Some(store), Some(table)) => Box::new(NetGreedy { net, store, table }),
        _ => Box::new(GreedySmallest),
    }
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let train = games(cfg.train.load()?);
        let eval = games(cfg.eval.load()?);
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let (net, params) = FastColorNet::new(cfg.fcn.clone(), cfg.seed)?;
        let adam = AdamState::new(&params, AdamConfig { lr: cfg.lr, ..Default::default() });
        let baselines = train
            .iter()
            .map(|g| baseline_score(g.graph.clone(), g.order.clone(), &mut GreedySmallest))
            .collect::<fastcolor_core::Result<Vec<_>>>()?;
        let bootstrap: Vec<usize> = eval
            .iter()
            .map(|g| baseline_score(g.graph.clone(), g.order.clone(), &mut GreedySmallest).map(|b| b.chi()))
            .collect::<fastcolor_core::Result<_>>()?;
        Ok(Trainer {
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            rng: rng::rng(rng::mix(cfg.seed, 0x7a1, 0)),
            cfg,
            net,
            params,
            adam,
            games: train,
            eval_games: eval,
            gating: Vec::new(),
            iteration: 0,
            best: Best {
                params: None,
                train_tables: Vec::new(),
                baselines,
                avg: mean(&bootstrap),
            },
            cache: EmbeddingCache::new(),
            version: 0,
            steps_since_refresh: 0,
        })
    }

    /// Resumes from a checkpoint; the best model is the checkpoint's
    /// parameters if it has accepted one.
    pub fn resume(ck: Checkpoint, net: FastColorNet) -> Result<Self> {
        let mut t = Trainer::new(ck.config.clone())?;
        t.net = net;
        t.params = ck.params;
        t.adam = ck.adam;
        t.iteration = ck.iteration;
        t.gating = ck.gating;
        if t.gating.iter().any(|g| g.accepted) {
            let avg = t.greedy_average(&t.params, &t.eval_games)?;
            t.promote(t.params.clone(), avg)?;
        }
        Ok(t)
    }

    pub fn best_avg(&self) -> f64 {
        self.best.avg
    }

    pub fn best_params(&self) -> Option<&ParamStore> {
        self.best.params.as_ref()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            params: self.params.clone(),
            adam: self.adam.clone(),
            iteration: self.iteration,
            gating: self.gating.clone(),
        }
    }

    /// Average greedy colors of `params` over `games`.
    pub fn greedy_average(&self, params: &ParamStore, games: &[GameRef]) -> Result<f64> {
        let mut counts = Vec::with_capacity(games.len());
        for g in games {
            let table = self.net.embed_graph(params, &g.graph)?;
            counts.push(count_colors(&model_coloring(&self.net, params, g, &table)?));
        }
        Ok(mean(&counts))
    }

    fn promote(&mut self, params: ParamStore, avg: f64) -> Result<()> {
        let tables = self
            .games
            .iter()
            .map(|g| self.net.embed_graph(&params, &g.graph).map(Arc::new))
            .collect::<fastcolor_core::Result<Vec<_>>>()?;
        let baselines = self
            .games
            .iter()
            .zip(&tables)
            .map(|(g, t)| {
                let mut p = NetGreedy {
                    net: &self.net,
                    store: &params,
                    table: t,
                };
                baseline_score(g.graph.clone(), g.order.clone(), &mut p)
            })
            .collect::<fastcolor_core::Result<Vec<_>>>()?;
        self.best = Best {
            params: Some(params),
            train_tables: tables,
            baselines,
            avg,
        };
        Ok(())
    }

    fn selfplay(&mut self, m: &mut IterationMetrics, log: &mut Vec<SegmentLog>) -> Result<()> {
        let sizes: Vec<usize> = self.games.iter().map(|g| g.graph.vertex_count()).collect();
        let seed = rng::mix(self.cfg.seed, self.iteration as u64, 1);
        let positions = sample_positions(&sizes, self.cfg.episode.move_sample_rate, seed)?;
        let mcts = self.cfg.mcts();
        let episode = fastcolor_core::selfplay::EpisodeConfig { mcts, ..self.cfg.episode };
        for (gi, t) in positions {
            let game = self.games[gi].clone();
            let baseline = &self.best.baselines[gi];
            // The best policy's own trajectory is the fast-forward.
            let mut state = ColoringState::with_order(game.graph.clone(), game.order.clone())?;
            for &v in &game.order[..t] {
                state.apply_color(baseline.coloring[v as usize])?;
            }
            let table = self.cache.get(&game, &self.net, &self.params, self.version)?;
            let mut eval = NetEvaluator::new(&self.net, &self.params, &table);
            let best_table = self.best.train_tables.get(gi).map(|t| &**t);
            let mut fast = greedy_policy(&self.net, self.best.params.as_ref(), best_table);
            let seg = play_segment(&game, state, baseline, &episode, &mut eval, fast.as_mut(), seed)?;
            m.segments += 1;
            m.records += seg.records.len();
            match seg.z {
                Outcome::Win => m.wins += 1,
                Outcome::Tie => m.ties += 1,
                Outcome::Lose => m.losses += 1,
            }
            m.aborted += usize::from(seg.aborted);
            log.push(SegmentLog::new(self.iteration, gi, &seg));
            self.buffer.append(seg.records);
        }
        m.buffer = self.buffer.len();
        Ok(())
    }

    fn train(&mut self, m: &mut IterationMetrics) -> Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let mut total = StepStats::default();
        for _ in 0..self.cfg.steps_per_iteration {
            if self.steps_since_refresh == self.cfg.embed_refresh {
                self.version += 1;
                self.steps_since_refresh = 0;
            }
            let records: Vec<_> = self
                .buffer
                .sample(self.cfg.batch_size, &mut self.rng)?
                .into_iter()
                .cloned()
                .collect();
            let examples = records
                .iter()
                .map(|r| {
                    let table = self.cache.get(&r.game, &self.net, &self.params, self.version)?;
                    TrainingExample::from_record(r, &self.net, table)
                })
                .collect::<fastcolor_core::Result<Vec<_>>>()?;
            let items: Vec<_> = examples.iter().map(|e| e.item()).collect();
            let s = self
                .net
                .train_step(&mut self.params, &mut self.adam, &items, &mut self.rng)
                .map_err(|e| Error::Diverged {
                    iteration: self.iteration,
                    msg: e.to_string(),
                })?;
            total.loss += s.loss;
            total.policy_loss += s.policy_loss;
            total.value_loss += s.value_loss;
            total.clamped += s.clamped;
            total.walks += s.walks;
            self.steps_since_refresh += 1;
            m.steps += 1;
        }
        // The parameters moved; cached tables are stale from here on.
        self.version += 1;
        self.steps_since_refresh = 0;
        let k = m.steps.max(1) as f64;
        m.loss = total.loss / k;
        m.policy_loss = total.policy_loss / k;
        m.value_loss = total.value_loss / k;
        m.clamped = total.clamped;
        m.walks = total.walks;
        Ok(())
    }

    fn gate(&mut self, m: &mut IterationMetrics) -> Result<()> {
        let avg = self.greedy_average(&self.params, &self.eval_games)?;
        let accepted = gate_model(avg, self.best.avg);
        self.gating.push(GateRecord {
            iteration: self.iteration,
            candidate_avg: avg,
            incumbent_avg: self.best.avg,
            accepted,
        });
        if accepted {
            self.promote(self.params.clone(), avg)?;
        }
        m.candidate_avg_colors = avg;
        m.accepted = accepted;
        m.eval_avg_colors = self.best.avg;
        Ok(())
    }

    /// A self-play generation without training, for inspecting episodes.
    pub fn selfplay_only(&mut self, log: &mut Vec<SegmentLog>) -> Result<IterationMetrics> {
        let mut m = IterationMetrics {
            iteration: self.iteration,
            ..Default::default()
        };
        self.selfplay(&mut m, log)?;
        Ok(m)
    }

    /// Self-play, training and gating for one iteration.
    pub fn step(&mut self, log: &mut Vec<SegmentLog>) -> Result<(IterationMetrics, IterationTiming)> {
        self.iteration += 1;
        let mut m = IterationMetrics {
            iteration: self.iteration,
            ..Default::default()
        };
        let mut timing = IterationTiming::default();
        let t0 = Instant::now();
        self.selfplay(&mut m, log)?;
        timing.selfplay = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        self.train(&mut m)?;
        timing.train = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        self.gate(&mut m)?;
        timing.gate = t2.elapsed().as_secs_f64();
        Ok((m, timing))
    }

    /// The row reported before any training.
    pub fn bootstrap_metrics(&self) -> IterationMetrics {
        IterationMetrics {
            iteration: 0,
            candidate_avg_colors: self.best.avg,
            eval_avg_colors: self.best.avg,
            ..Default::default()
        }
    }
}

/// Per-method averages keyed by name, for summaries.
pub fn averages_by_name(r: &EvalReport) -> BTreeMap<String, f64> {
    r.methods.iter().cloned().zip(r.averages()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gating_rule() {
        assert!(gate_model(29.5, 30.1));
        assert!(gate_model(30.0, 30.0));
        assert!(!gate_model(30.2, 30.1));
    }

    #[test]
    fn average_decides_gating_not_single_graphs() {
        let candidate = [10, 12, 14];
        let incumbent = [11, 11, 13];
        assert!(!gate_model(mean(&candidate), mean(&incumbent)));
    }

    #[test]
    fn empty_evaluation() {
        let r = evaluate(&[], &[Method::Heuristic(HeuristicKind::Ordered)], None).unwrap();
        assert!(r.colors.is_empty());
        assert_eq!(r.averages(), vec![0.0]);
    }

    #[test]
    fn heuristics_on_known_graphs() {
        let graphs = vec![Arc::new(Graph::complete(5)), Arc::new(Graph::crown(4))];
        let methods: Vec<Method> = HeuristicKind::ALL.iter().map(|&k| Method::Heuristic(k)).collect();
        let r = evaluate(&graphs, &methods, None).unwrap();
        assert_eq!(r.colors[0], vec![5, 5, 5]);
        assert_eq!(r.colors[1][0], 4);
        let t = r.tally_vs_heuristics(0);
        assert_eq!(t.wins + t.ties + t.losses, 2);
    }

    #[test]
    fn model_methods_need_a_model() {
        let graphs = vec![Arc::new(Graph::path(3))];
        assert!(evaluate(&graphs, &[Method::Greedy], None).is_err());
    }
}
