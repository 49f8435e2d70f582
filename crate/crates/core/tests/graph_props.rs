#![allow(clippy::needless_range_loop)]

use gridshare_core::fixtures;
use gridshare_core::graph::{consensus_round, metropolis_weights, run_consensus, CommGraph, ConsensusState};
use proptest::prelude::*;

fn connected_graph() -> impl Strategy<Value = CommGraph> {
    (1usize..9)
        .prop_flat_map(|n| {
            let parents = proptest::collection::vec(any::<prop::sample::Index>(), n.saturating_sub(1));
            let chords = proptest::collection::vec((0..n, 0..n), 0..n * 2);
            (Just(n), parents, chords)
        })
        .prop_map(|(n, parents, chords)| {
            let ids: Vec<u32> = (1..=n as u32).collect();
            let mut edges: Vec<(u32, u32)> =
                parents.iter().enumerate().map(|(k, p)| (ids[p.index(k + 1)], ids[k + 1])).collect();
            edges.extend(chords.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (ids[a], ids[b])));
            metropolis_weights(&edges, &ids).unwrap()
        })
}

fn graph_and_values() -> impl Strategy<Value = (CommGraph, Vec<f64>)> {
    connected_graph().prop_flat_map(|g| {
        let n = g.len();
        (Just(g), proptest::collection::vec(-1e3f64..1e3, n))
    })
}

proptest! {
    #[test]
    fn weights_doubly_stochastic(g in connected_graph()) {
        let w = g.weights();
        for i in 0..g.len() {
            let row: f64 = w[i].iter().sum();
            let col: f64 = w.iter().map(|r| r[i]).sum();
            prop_assert!((row - 1.0).abs() < 1e-12 && (col - 1.0).abs() < 1e-12);
            for j in 0..g.len() {
                prop_assert!(w[i][j] >= 0.0);
                let edge = g.neighbors(i).iter().any(|&(k, _)| k == j);
                prop_assert!(w[i][j] == 0.0 || i == j || edge);
            }
        }
    }

    #[test]
    fn rounds_conserve_mass_and_contract((g, x) in graph_and_values()) {
        let norm: f64 = x.iter().map(|v| v.abs()).sum();
        let mut state = ConsensusState::new(x);
        for _ in 0..30 {
            let next = consensus_round(&state, &g).unwrap();
            let before: f64 = state.values.iter().sum();
            let after: f64 = next.values.iter().sum();
            prop_assert!((before - after).abs() <= 1e-12 * norm.max(1.0));
            prop_assert!(next.spread() <= state.spread() + 1e-12);
            state = next;
        }
    }

    #[test]
    fn limit_is_the_mean((g, x) in graph_and_values()) {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let out = run_consensus(&x, &g, 1e-10, 100_000).unwrap();
        for v in out.values {
            prop_assert!((v - mean).abs() < 1e-9);
        }
    }
}

#[test]
fn fixture_graphs_reach_the_mean() {
    for s in [fixtures::three_agent(), fixtures::arbitrage_t2(), fixtures::all_passive()] {
        let g = s.graph();
        let x: Vec<f64> = (0..g.len()).map(|i| (i as f64 + 1.0).powi(2) - 3.5).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let out = run_consensus(&x, g, 1e-12, 10_000).unwrap();
        assert!(out.values.iter().all(|v| (v - mean).abs() < 1e-9));
    }
}
