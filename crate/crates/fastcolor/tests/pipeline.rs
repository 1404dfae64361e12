use std::sync::Arc;

use fastcolor::checkpoint::Checkpoint;
use fastcolor::config::{Dataset, TrainConfig};
use fastcolor::pipeline::{evaluate, Method, Trainer};
use fastcolor::report::Table;
use fastcolor::run::policy_iteration;
use fastcolor_core::coloring::HeuristicKind;
use fastcolor_core::fcn::FcnConfig;
use fastcolor_core::graph::GraphSource;

fn tiny(iterations: usize) -> TrainConfig {
    let er = GraphSource::ErdosRenyi { n: 16, p: 0.5 };
    let mut cfg = TrainConfig {
        train: Dataset::random(er.clone(), 3, 4),
        eval: Dataset::random(er, 3, 4),
        fcn: FcnConfig {
            embed_dim: 8,
            conv_channels: 8,
            conv_layers: 1,
            v_width: 16,
            v_layers: 1,
            p_width: 16,
            p_layers: 1,
            ..FcnConfig::default()
        },
        iterations,
        steps_per_iteration: 4,
        batch_size: 4,
        ..TrainConfig::default()
    };
    cfg.episode.mcts.simulations = 16;
    cfg
}

#[test]
fn zero_iterations_reports_the_bootstrap_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(0);
    let graphs: Vec<_> = cfg.eval.load().unwrap().into_iter().map(Arc::new).collect();
    let summary = policy_iteration(Trainer::new(cfg).unwrap(), dir.path()).unwrap();
    assert_eq!(summary.metrics.len(), 1);
    let dynamic = evaluate(&graphs, &[Method::Heuristic(HeuristicKind::Dynamic)], None).unwrap();
    assert_eq!(summary.best_avg, dynamic.average(0));
    let t = Table::read(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(t.column("iteration").unwrap(), vec![0.0]);
}

#[test]
fn run_writes_curve_and_resumable_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let summary = policy_iteration(Trainer::new(tiny(3)).unwrap(), dir.path()).unwrap();
    let t = Table::read(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(t.column("iteration").unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
    let gated: Vec<f64> = t.column("eval_avg_colors").unwrap();
    assert!(gated.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*gated.last().unwrap(), summary.best_avg);
    assert_eq!(Table::read(&dir.path().join("timing.csv")).unwrap().rows.len(), 3);
    let episodes = std::fs::read_to_string(dir.path().join("episodes.jsonl")).unwrap();
    let total: f64 = t.column("segments").unwrap().iter().sum();
    assert_eq!(episodes.lines().count(), total as usize);

    let (ck, net) = Checkpoint::load(&dir.path().join("checkpoints/latest")).unwrap();
    assert_eq!(ck.iteration, 3);
    assert_eq!(ck.gating.len(), 3);
    let mut cfg = ck.config.clone();
    cfg.iterations = 4;
    let resumed = Trainer::resume(Checkpoint { config: cfg, ..ck }, net).unwrap();
    assert_eq!(resumed.iteration, 3);
    let out = dir.path().join("more");
    let more = policy_iteration(resumed, &out).unwrap();
    assert_eq!(more.metrics.len(), 1);
    assert_eq!(more.metrics[0].iteration, 4);
}
