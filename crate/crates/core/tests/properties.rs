use std::collections::BTreeSet;
use std::sync::Arc;

use fastcolor_core::coloring::{
    brute_force_chromatic, greedy_color, outcome_vs_baseline, verify_coloring, ColoringState, HeuristicKind,
    Outcome,
};
use fastcolor_core::embedding::{encode_multihot, encode_onehot};
use fastcolor_core::graph::{gen_er, gen_ws, Graph};
use fastcolor_core::mcts::{backup_edge, ucb_score, visit_policy, Window};
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..n * n)
            .prop_map(move |edges| Graph::from_edges(n, edges).unwrap().0)
    })
}

/// A graph plus a permutation of its vertices.
fn ordered_graph(max_n: usize) -> impl Strategy<Value = (Graph, Vec<u32>)> {
    graph_strategy(max_n).prop_flat_map(|g| {
        let order: Vec<u32> = (0..g.vertex_count() as u32).collect();
        (Just(g), Just(order).prop_shuffle())
    })
}

proptest! {
    #[test]
    fn built_graphs_are_simple_and_symmetric(n in 1usize..20, raw in prop::collection::vec((0usize..20, 0usize..20), 0..80)) {
        let edges: Vec<_> = raw.into_iter().map(|(u, v)| (u % n, v % n)).collect();
        let (g, stats) = Graph::from_edges(n, edges.clone()).unwrap();
        g.validate().unwrap();
        let unique: BTreeSet<_> = edges.iter().filter(|(u, v)| u != v).map(|&(u, v)| (u.min(v), u.max(v))).collect();
        prop_assert_eq!(g.edge_count(), unique.len());
        prop_assert_eq!(stats.self_loops, edges.iter().filter(|(u, v)| u == v).count());
        for (u, v) in g.edges() {
            prop_assert!(u < v);
            prop_assert!(g.has_edge(v, u));
        }
        prop_assert_eq!(g.degrees().sum::<usize>(), 2 * g.edge_count());
        prop_assert_eq!(g.max_degree(), g.degrees().max().unwrap_or(0));
    }

    #[test]
    fn generators_are_valid_and_seeded(n in 5usize..40, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let a = gen_er(n, p, seed).unwrap();
        a.validate().unwrap();
        prop_assert_eq!(&a, &gen_er(n, p, seed).unwrap());
        let w = gen_ws(n, 4, p, seed).unwrap();
        w.validate().unwrap();
        prop_assert_eq!(w.edge_count(), n * 2);
    }

    #[test]
    fn apply_and_undo_round_trip((g, order) in ordered_graph(10), picks in prop::collection::vec(any::<prop::sample::Index>(), 10)) {
        let g = Arc::new(g);
        let mut s = ColoringState::with_order(g.clone(), order.into()).unwrap();
        let mut history = vec![(s.colors(), s.colors_used())];
        for pick in &picks {
            if s.is_complete() {
                break;
            }
            let actions = s.valid_actions().unwrap();
            let a = actions.get(pick.index(actions.len())).unwrap();
            s.apply(a).unwrap();
            s.check_invariants().unwrap();
            history.push((s.colors(), s.colors_used()));
        }
        if s.is_complete() {
            let colors: Vec<u32> = s.colors().into_iter().map(|c| c.unwrap()).collect();
            prop_assert_eq!(verify_coloring(&g, &colors).unwrap(), s.colors_used());
        }
        while s.t() > 0 {
            history.pop();
            s.undo().unwrap();
            s.check_invariants().unwrap();
            let (colors, used) = history.last().unwrap();
            prop_assert_eq!(&s.colors(), colors);
            prop_assert_eq!(s.colors_used(), *used);
        }
        prop_assert!(s.undo().is_err());
    }

    #[test]
    fn heuristics_are_proper_and_bounded(g in graph_strategy(9)) {
        let g = Arc::new(g);
        let chi = brute_force_chromatic(&g).unwrap();
        for kind in HeuristicKind::ALL {
            let (state, k) = greedy_color(g.clone(), kind);
            let colors: Vec<u32> = state.colors().into_iter().map(|c| c.unwrap()).collect();
            verify_coloring(&g, &colors).unwrap();
            prop_assert!(k >= chi);
            prop_assert!(k <= g.max_degree() + 1);
        }
    }

    #[test]
    fn onehot_is_monotone(a in 0usize..1000, b in 0usize..1000, extra in 0usize..1000, size in 1usize..64) {
        let max = a.max(b) + extra;
        let (lo, hi) = (a.min(b), a.max(b));
        let (i, j) = (encode_onehot(lo, max, size).unwrap(), encode_onehot(hi, max, size).unwrap());
        prop_assert!(i <= j && j < size);
        prop_assert_eq!(encode_onehot(max, max, size).unwrap(), if max == 0 { 0 } else { size - 1 });
        let multi = encode_multihot([lo, hi], max, size).unwrap();
        prop_assert_eq!(multi.iter().filter(|&&x| x == 1.0).count(), if i == j { 1 } else { 2 });
    }

    #[test]
    fn visit_policy_is_a_distribution(counts in prop::collection::vec(0u32..50, 1..8), tau in prop_oneof![Just(0.0), 0.1f64..3.0]) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let pi = visit_policy(&counts, tau).unwrap();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (p, &c) in pi.iter().zip(&counts) {
            if c == 0 {
                prop_assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn ucb_and_backup_stay_in_range(q in -1.0f64..=1.0, v in -1.0f64..=1.0, n in 0u32..1000, prior in 0.0f64..=1.0, extra in 0u32..1000) {
        let (q2, n2) = backup_edge(q, n, v);
        prop_assert_eq!(n2, n + 1);
        prop_assert!((-1.0..=1.0).contains(&q2));
        prop_assert!(q2 >= q.min(v) - 1e-15 && q2 <= q.max(v) + 1e-15);
        let total = n + extra;
        prop_assert!(ucb_score(q, prior, n, total, 1.0) >= q);
        prop_assert!(ucb_score(q, prior, n, total, 1.0) >= ucb_score(q, prior, n + 1, total, 1.0));
    }

    #[test]
    fn outcome_is_antisymmetric(a in 0usize..100, b in 0usize..100) {
        let x = outcome_vs_baseline(a, b);
        let y = outcome_vs_baseline(b, a);
        prop_assert_eq!(x.value(), -y.value());
        prop_assert_eq!(x == Outcome::Tie, a == b);
    }

    #[test]
    fn window_decisions_hold_for_any_continuation(
        (g, order) in ordered_graph(9),
        baseline in 1usize..9,
        prefix in any::<prop::sample::Index>(),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 9),
    ) {
        let g = Arc::new(g);
        let n = g.vertex_count();
        let mut s = ColoringState::with_order(g, order.into()).unwrap();
        let window = Window { end: n, baseline_colors: baseline };
        let stop = prefix.index(n + 1);
        let mut picks = picks.into_iter();
        let mut play = |s: &mut ColoringState| {
            let actions = s.valid_actions().unwrap();
            let a = actions.get(picks.next().unwrap().index(actions.len())).unwrap();
            s.apply(a).unwrap();
        };
        while s.t() < stop {
            play(&mut s);
        }
        let early = window.decided(&s);
        while !s.is_complete() {
            play(&mut s);
        }
        let full = outcome_vs_baseline(s.colors_used(), baseline);
        if let Some(z) = early {
            prop_assert_eq!(z, full);
        }
    }
}
