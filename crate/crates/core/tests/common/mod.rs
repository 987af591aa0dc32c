//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use relaychain::mesh::LinkGraph;
use relaychain::nsb::{self, Mat2, TaskEval, TaskRequest};
use relaychain::runlog::PacketLog;
use relaychain::sim::unicycle::{integrate, unicycle_track, UnicycleLimits, UnicyclePose};
use relaychain::{NodeId, Vec2};

pub const CORRIDOR_LIMITS: UnicycleLimits = UnicycleLimits {
    u_max: 0.2,
    omega_max: 2.0,
    k_omega: 2.0,
};

pub fn vec2(rng: &mut impl Rng, half: f64) -> Vec2 {
    Vec2::new(rng.random_range(-half..half), rng.random_range(-half..half))
}

/// A random task at least 0.1 m away from its degenerate configurations.
pub fn random_task(rng: &mut impl Rng, p: Vec2) -> TaskRequest {
    let gain = rng.random_range(0.1..2.0);
    let far = |rng: &mut dyn rand::RngCore, from: Vec2| loop {
        let q = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        if q.distance(from) > 0.1 {
            return q;
        }
    };
    match rng.random_range(0..4) {
        0 => TaskRequest::distance_from(far(rng, p), rng.random_range(0.0..5.0), gain),
        1 => {
            let a = far(rng, p);
            TaskRequest::equal_distance(a, far(rng, a), gain)
        }
        2 => TaskRequest::move_to(vec2(rng, 10.0), gain),
        _ => TaskRequest::avoid(far(rng, p), rng.random_range(0.1..1.0), gain),
    }
}

pub fn random_stack(rng: &mut impl Rng, size: usize) -> (Vec2, Vec<TaskRequest>, Vec<TaskEval>) {
    let p = vec2(rng, 10.0);
    let reqs: Vec<_> = (0..size).map(|_| random_task(rng, p)).collect();
    let evals = reqs
        .iter()
        .map(|r| nsb::eval_task(r, p).expect("non-degenerate task"))
        .collect();
    (p, reqs, evals)
}

/// Central finite-difference Jacobian of the task value.
pub fn fd_jacobian(req: &TaskRequest, p: Vec2, h: f64) -> Vec<[f64; 2]> {
    let value = |q: Vec2| nsb::eval_task(req, q).unwrap().value;
    let dx = Vec2::new(h, 0.0);
    let dy = Vec2::new(0.0, h);
    let (xp, xm, yp, ym) = (value(p + dx), value(p - dx), value(p + dy), value(p - dy));
    (0..xp.len())
        .map(|i| [(xp[i] - xm[i]) / (2.0 * h), (yp[i] - ym[i]) / (2.0 * h)])
        .collect()
}

pub fn frobenius(rows: &[[f64; 2]]) -> f64 {
    rows.iter()
        .map(|r| r[0] * r[0] + r[1] * r[1])
        .sum::<f64>()
        .sqrt()
}

pub fn jacobian_rel_error(req: &TaskRequest, eval: &TaskEval, p: Vec2) -> f64 {
    let fd = fd_jacobian(req, p, 1e-6);
    let diff: Vec<[f64; 2]> = eval
        .jacobian
        .iter()
        .zip(&fd)
        .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
        .collect();
    frobenius(&diff) / frobenius(&eval.jacobian).max(1e-12)
}

pub fn mat_max_abs_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

pub fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn stacked(evals: &[TaskEval]) -> Vec<[f64; 2]> {
    evals
        .iter()
        .flat_map(|e| e.jacobian.iter().copied())
        .collect()
}

pub fn row_times(rows: &[[f64; 2]], v: Vec2) -> f64 {
    rows.iter()
        .map(|r| (r[0] * v.x + r[1] * v.y).abs())
        .fold(0.0, f64::max)
}

/// All-pairs hop counts by Floyd–Warshall.
pub fn floyd_warshall(g: &LinkGraph) -> Vec<Vec<Option<u32>>> {
    let n = g.node_count();
    let mut d = vec![vec![None; n]; n];
    for i in 0..n {
        d[i][i] = Some(0);
        for j in 0..n {
            if i != j && g.linked(NodeId(i as u16), NodeId(j as u16)) {
                d[i][j] = Some(1);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> LinkGraph {
    let mut g = LinkGraph::empty(n);
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                g.set(NodeId(a as u16), NodeId(b as u16), true);
            }
        }
    }
    g
}

/// One robot regulating the equal-distance task through the same NSB and
/// unicycle path the simulator uses. Returns |σ| after `ticks` steps.
pub fn equal_distance_run(
    start: UnicyclePose,
    p1: Vec2,
    p2: Vec2,
    gain: f64,
    dt: f64,
    ticks: u64,
) -> f64 {
    let task = TaskRequest::equal_distance(p1, p2, gain);
    let mut pose = start;
    for _ in 0..ticks {
        let eval = nsb::eval_task(&task, pose.position).unwrap();
        let v = nsb::compose(&[eval], nsb::DEFAULT_DAMPING, CORRIDOR_LIMITS.u_max).unwrap();
        let (u, w) = unicycle_track(&pose, v, &CORRIDOR_LIMITS);
        pose = integrate(&pose, u, w, dt);
    }
    nsb::eval_task(&task, pose.position).unwrap().value[0].abs()
}

/// Drops that are not within `window` ticks after a topology change.
pub fn late_drops(log: &PacketLog, topology_changes: &[u64], window: u64) -> Vec<u64> {
    log.rows
        .iter()
        .filter(|r| !r.delivered())
        .map(|r| r.tick)
        .filter(|&t| {
            let i = topology_changes.partition_point(|&c| c <= t);
            i == 0 || t - topology_changes[i - 1] > window
        })
        .collect()
}
