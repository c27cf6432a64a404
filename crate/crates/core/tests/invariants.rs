//! Cross-module invariants on generated graphs and single broadcast steps.

use bga_core::analysis::{degree_imbalance_drift, martingale_oracle, variance_oracle};
use bga_core::engine::{step_bound, uniform_values};
use bga_core::graph::{self, Graph};
use bga_core::StateVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn family_graph() -> impl Strategy<Value = Graph> {
    prop_oneof![
        (2usize..40).prop_map(|n| graph::complete(n).unwrap()),
        (3usize..60).prop_map(|n| graph::ring(n).unwrap()),
        (1usize..4, 3usize..7).prop_map(|(k, s)| graph::torus_lattice(k, s).unwrap()),
        (1usize..8).prop_map(|d| graph::hypercube(d).unwrap()),
        (2usize..4, 2usize..5).prop_map(|(s, d)| graph::de_bruijn(s, d).unwrap()),
        (2usize..80, any::<u64>()).prop_map(|(n, seed)| graph::random_geometric_seeded(n, seed).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn adjacency_lists_are_transposes(g in family_graph()) {
        let mut forward: Vec<(usize, usize)> = g.edges().collect();
        let mut backward: Vec<(usize, usize)> = (0..g.n())
            .flat_map(|u| g.in_neighbors(u).iter().map(move |&v| (v, u)))
            .collect();
        forward.sort_unstable();
        backward.sort_unstable();
        prop_assert_eq!(&forward, &backward);
        prop_assert!(forward.iter().all(|&(v, u)| v != u && u < g.n()));
        let out_total: usize = (0..g.n()).map(|v| g.out_degree(v)).sum();
        prop_assert_eq!(out_total, g.edge_count());
    }

    #[test]
    fn documents_round_trip(g in family_graph()) {
        let back = Graph::from_json(&g.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.n(), g.n());
        prop_assert_eq!(back.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
        prop_assert_eq!(back.family(), g.family());
    }

    #[test]
    fn deterministic_families_are_regular_and_balanced(
        which in 0usize..4, a in 3usize..20, b in 1usize..4
    ) {
        let (g, deg) = match which {
            0 => (graph::complete(a).unwrap(), a - 1),
            1 => (graph::ring(a).unwrap(), 2),
            2 => (graph::torus_lattice(b, a.min(8)).unwrap(), 2 * b),
            _ => (graph::hypercube(b + 2).unwrap(), b + 2),
        };
        prop_assert!(g.is_balanced() && g.is_symmetric() && g.is_connected());
        prop_assert!((0..g.n()).all(|v| g.out_degree(v) == deg && g.in_degree(v) == deg));
    }

    #[test]
    fn rgg_is_a_function_of_its_seed(n in 2usize..120, seed in any::<u64>()) {
        let a = graph::random_geometric_seeded(n, seed).unwrap();
        let b = graph::random_geometric_seeded(n, seed).unwrap();
        prop_assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        prop_assert!(a.is_symmetric());
    }

    #[test]
    fn de_bruijn_out_degree(s in 2usize..5, d in 2usize..5) {
        let g = graph::de_bruijn(s, d).unwrap();
        for v in 0..g.n() {
            // Only the constant words lose their self-loop.
            let shifted = (v * s) % g.n();
            let loses = (0..s).any(|j| shifted + j == v);
            prop_assert_eq!(g.out_degree(v), s - usize::from(loses));
        }
    }

    #[test]
    fn step_oracles_agree(g in family_graph(), q in 0.01f64..=1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = StateVector::new(uniform_values(&mut rng, g.n(), 1.0f64)).unwrap();
        let drift = martingale_oracle(&state, &g, q);
        prop_assert!((drift - degree_imbalance_drift(&state, &g, q)).abs() <= 1e-12);
        if g.is_balanced() {
            prop_assert!(drift.abs() <= 1e-12);
            prop_assert!(variance_oracle(&state, &g, q).holds());
        }
        let cap = step_bound(&g, q, 1.0);
        for v in 0..g.n() {
            prop_assert!(state.average_increment(&g, v, q).abs() <= cap * (1.0 + 1e-12));
        }
    }
}

/// Sampled one-step increments average to the enumerated expectation.
#[test]
fn sampled_increments_match_exact_drift() {
    const M: usize = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for g in [
        graph::de_bruijn(2, 5).unwrap(),
        graph::de_bruijn(3, 3).unwrap(),
        graph::ring(24).unwrap(),
        graph::complete(12).unwrap(),
    ] {
        for q in [0.2, 0.5, 0.9] {
            let state = StateVector::new(uniform_values(&mut rng, g.n(), 1.0f64)).unwrap();
            let n = g.n();
            let mean_exact = martingale_oracle(&state, &g, q);
            let second: f64 = (0..n).map(|v| state.average_increment(&g, v, q).powi(2)).sum::<f64>() / n as f64;
            let var_exact = second - mean_exact * mean_exact;
            let sampled: f64 = (0..M)
                .map(|_| {
                    let v = rng.gen_range(0..n as u64) as usize;
                    let mut next = state.clone();
                    let before = next.average_from_scratch();
                    next.broadcast(&g, v, q);
                    next.average_from_scratch() - before
                })
                .sum::<f64>()
                / M as f64;
            let tol = 4.0 * (var_exact / M as f64).sqrt() + 1e-15;
            assert!(
                (sampled - mean_exact).abs() <= tol,
                "{:?} q={q}: sampled {sampled}, exact {mean_exact}, tol {tol}",
                g.family()
            );
        }
    }
}
