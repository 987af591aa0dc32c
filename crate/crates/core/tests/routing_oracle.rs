mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaychain::mesh::{
    build_link_graph, compute_tables, gossip_positions, relay, tau_ticks, RelayOutcome,
    RoutingState,
};
use relaychain::{DropReason, LinkGraph, NodeId, Vec2};

fn graph(seed: u64, n: usize, p: f64) -> LinkGraph {
    random_graph(&mut ChaCha8Rng::seed_from_u64(seed), n, p)
}

fn id(i: usize) -> NodeId {
    NodeId(i as u16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn hop_counts_match_floyd_warshall(seed in any::<u64>(), n in 2usize..=8, p in 0.3f64..0.8) {
        let g = graph(seed, n, p);
        let oracle = floyd_warshall(&g);
        let tables = compute_tables(&g);
        for s in 0..n {
            for d in 0..n {
                if s != d {
                    prop_assert_eq!(tables[s].get(id(d)).map(|r| r.hop_count), oracle[s][d]);
                }
            }
        }
    }

    #[test]
    fn next_hop_is_the_lowest_id_on_a_shortest_path(seed in any::<u64>(), n in 2usize..=8, p in 0.3f64..0.8) {
        let g = graph(seed, n, p);
        let oracle = floyd_warshall(&g);
        let tables = compute_tables(&g);
        for s in 0..n {
            for d in (0..n).filter(|&d| d != s) {
                let Some(hops) = oracle[s][d] else { continue };
                let expect = g.neighbors(id(s)).filter(|h| oracle[h.index()][d] == Some(hops - 1)).min();
                prop_assert_eq!(tables[s].next_hop(id(d)), expect);
            }
        }
    }

    #[test]
    fn fresh_tables_deliver_exactly_the_reachable_pairs(seed in any::<u64>(), n in 2usize..=8, p in 0.3f64..0.8) {
        let g = graph(seed, n, p);
        let oracle = floyd_warshall(&g);
        // With no convergence delay tables always match the graph.
        let mut state = RoutingState::converged(&LinkGraph::empty(n), 0);
        state.tick(&g, 1, 0);
        for s in 0..n {
            for d in (0..n).filter(|&d| d != s) {
                let out = relay(id(s), id(d), &state.tables, &g);
                match oracle[s][d] {
                    Some(h) => {
                        prop_assert!(out.is_delivered());
                        prop_assert_eq!(out.trace().len(), h as usize + 1);
                    }
                    None => {
                        let no_route = matches!(out, RelayOutcome::Dropped { reason: DropReason::NoRoute, .. });
                        prop_assert!(no_route);
                    }
                }
            }
        }
    }

    #[test]
    fn stale_tables_drop_where_the_route_breaks(
        seed in any::<u64>(),
        n in 3usize..=8,
        p in 0.3f64..0.8,
        cut in 0.1f64..0.6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let before = random_graph(&mut rng, n, p);
        let mut after = before.clone();
        for (a, b) in before.edges() {
            if rng.random_bool(cut) {
                after.set(a, b, false);
            }
        }
        let stale = compute_tables(&before);
        for s in 0..n {
            for d in (0..n).filter(|&d| d != s) {
                let out = relay(id(s), id(d), &stale, &after);
                let trace = out.trace();
                for w in trace.windows(2) {
                    prop_assert!(after.linked(w[0], w[1]));
                }
                if let RelayOutcome::Dropped { at, reason, .. } = out {
                    prop_assert_eq!(Some(&at), trace.last());
                    match reason {
                        DropReason::LinkDown => {
                            let next = stale[at.index()].next_hop(id(d)).unwrap();
                            prop_assert!(before.linked(at, next) && !after.linked(at, next));
                        }
                        DropReason::NoRoute => prop_assert!(stale[at.index()].next_hop(id(d)).is_none()),
                        DropReason::TtlExceeded => prop_assert!(false, "loop on a removal-only change"),
                    }
                }
            }
        }
    }

    #[test]
    fn disc_graph_is_symmetric_and_boundary_inclusive(seed in any::<u64>(), n in 2usize..=8, r in 1.0f64..15.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos: Vec<Vec2> = (0..n).map(|_| vec2(&mut rng, 10.0)).collect();
        let g = build_link_graph(&pos, r, &[], false);
        for a in 0..n {
            prop_assert!(!g.linked(id(a), id(a)));
            for b in 0..n {
                prop_assert_eq!(g.linked(id(a), id(b)), g.linked(id(b), id(a)));
                if a != b {
                    prop_assert_eq!(g.linked(id(a), id(b)), pos[a].distance(pos[b]) <= r);
                }
            }
        }
    }

    #[test]
    fn gossip_reaches_only_one_hop_neighbors(seed in any::<u64>(), n in 2usize..=8, p in 0.3f64..0.8, now in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n, p);
        let pos: Vec<Vec2> = (0..n).map(|_| vec2(&mut rng, 10.0)).collect();
        let snaps = gossip_positions(&pos, &g, now);
        for (i, snap) in snaps.iter().enumerate() {
            prop_assert_eq!(snap.len(), g.neighbors(id(i)).count());
            for (j, report) in &snap.entries {
                prop_assert!(g.linked(id(i), *j));
                prop_assert_eq!(report.position, pos[j.index()]);
                prop_assert_eq!(report.tick, now);
            }
        }
    }
}

#[test]
fn exact_range_is_a_link() {
    let g = build_link_graph(
        &[
            Vec2::ZERO,
            Vec2::new(20.0, 0.0),
            Vec2::new(40.0 + 1e-9, 0.0),
        ],
        20.0,
        &[],
        false,
    );
    assert!(g.linked(id(0), id(1)));
    assert!(!g.linked(id(1), id(2)));
}

#[test]
fn tables_wait_for_a_quiet_period() {
    let tau = tau_ticks(3.0, 0.1);
    assert_eq!(tau, 30);
    let g0 = LinkGraph::from_edges(3, &[(0, 1), (1, 2)]);
    let g1 = LinkGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
    let mut state = RoutingState::converged(&g0, 0);
    assert!(state.tick(&g1, 10, tau));
    for now in 11..10 + tau {
        assert!(!state.tick(&g1, now, tau));
        assert_eq!(state.table(id(0)).get(id(2)).unwrap().hop_count, 2);
    }
    state.tick(&g1, 10 + tau, tau);
    assert_eq!(state.table(id(0)).get(id(2)).unwrap().hop_count, 1);
    assert!(state.is_converged());
}

#[test]
fn a_new_change_restarts_the_timer() {
    let tau = 30;
    let graphs = [
        LinkGraph::from_edges(3, &[(0, 1)]),
        LinkGraph::from_edges(3, &[(0, 1), (1, 2)]),
        LinkGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]),
    ];
    let mut state = RoutingState::converged(&graphs[0], 0);
    state.tick(&graphs[1], 5, tau);
    state.tick(&graphs[2], 20, tau);
    for now in 21..50 {
        state.tick(&graphs[2], now, tau);
        assert!(state.table(id(0)).get(id(2)).is_none(), "tick {now}");
    }
    state.tick(&graphs[2], 50, tau);
    assert_eq!(state.last_change(), 20);
    assert_eq!(state.table(id(0)).get(id(2)).unwrap().hop_count, 1);
}

#[test]
fn many_random_graphs_agree_with_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..2000 {
        let n = rng.random_range(1..=12);
        let p = rng.random_range(0.0..1.0);
        let g = random_graph(&mut rng, n, p);
        let oracle = floyd_warshall(&g);
        let tables = compute_tables(&g);
        for s in 0..n {
            let bfs = g.bfs_hops(id(s));
            for d in 0..n {
                assert_eq!(bfs[d], oracle[s][d]);
                if s != d {
                    assert_eq!(tables[s].get(id(d)).map(|r| r.hop_count), oracle[s][d]);
                }
            }
        }
    }
}
