use std::sync::Arc;

use fastcolor_core::coloring::ColoringState;
use fastcolor_core::graph::Graph;
use fastcolor_core::mcts::{MctsConfig, SearchTree, UniformEvaluator, Window};
use fastcolor_core::rng;
use rand::seq::SliceRandom;

/// Plays a whole coloring with `sims` simulations per move, keeping the tree.
fn play(g: Arc<Graph>, order: Vec<u32>, baseline: usize, sims: usize) -> usize {
    let state = ColoringState::with_order(g, order.into()).unwrap();
    let window = Window::full(&state, baseline);
    let mut tree = SearchTree::new(state, window, MctsConfig::default()).unwrap();
    while !tree.state().is_complete() {
        tree.search(&mut UniformEvaluator::default(), sims).unwrap();
        let a = tree.root_edges()[tree.best_index().unwrap()].action;
        tree.advance_root(a).unwrap();
    }
    tree.state().colors_used()
}

#[test]
fn crown_search_finds_two_colorings() {
    let g = Arc::new(Graph::crown(4));
    let mut found = 0;
    for seed in 0..100 {
        let mut order: Vec<u32> = (0..8).collect();
        order.shuffle(&mut rng::rng(seed));
        if play(g.clone(), order, 3, 512) == 2 {
            found += 1;
        }
    }
    assert!(found >= 95, "{found} of 100");
}
