//! Fixtures shared by the benchmarks.

use relaychain::nsb::{eval_task, TaskEval, TaskRequest};
use relaychain::{LinkGraph, Vec2};

/// A three-task stack of the kind an on-path robot composes.
pub fn on_path_stack(p: Vec2) -> Vec<TaskEval> {
    [
        TaskRequest::avoid(Vec2::new(p.x + 0.6, p.y), 0.5, 0.5),
        TaskRequest::distance_from(Vec2::new(p.x - 12.0, p.y), 16.0, 0.5),
        TaskRequest::equal_distance(
            Vec2::new(p.x - 12.0, p.y),
            Vec2::new(p.x + 9.0, p.y + 1.0),
            0.5,
        ),
    ]
    .iter()
    .map(|t| eval_task(t, p).expect("non-degenerate fixture"))
    .collect()
}

/// Path graph 0–1–…–(n−1) with a chord between every second node.
pub fn chain_graph(n: u16) -> LinkGraph {
    let mut edges: Vec<(u16, u16)> = (1..n).map(|i| (i - 1, i)).collect();
    edges.extend((2..n).step_by(2).map(|i| (i - 2, i)));
    LinkGraph::from_edges(n as usize, &edges)
}
