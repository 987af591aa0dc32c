use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointReached {
    pub index: usize,
    pub tick: u64,
    pub time: f64,
    pub path_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeTransition {
    pub tick: u64,
    pub node: u16,
}

/// Run-level counters; `packets_sent = packets_delivered + packets_dropped`
/// holds after every tick since relaying finishes within the tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Metrics {
    pub ticks: u64,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub drops_by_reason: BTreeMap<String, u64>,
    pub connected_ticks: u64,
    /// Half-open `[start, end)` tick ranges without an agent→base route.
    pub disconnected_intervals: Vec<[u64; 2]>,
    pub topology_changes: Vec<u64>,
    pub max_agent_path_distance: f64,
    pub waypoints_reached: Vec<WaypointReached>,
    pub free_to_on_path: Vec<ModeTransition>,
    pub max_step_displacement: f64,
    /// Smallest robot–wall distance seen; None without walls.
    pub min_wall_distance: Option<f64>,
    pub fallbacks: BTreeMap<String, u64>,
}

impl Metrics {
    pub fn delivery_ratio(&self) -> f64 {
        if self.packets_sent == 0 {
            1.0
        } else {
            self.packets_delivered as f64 / self.packets_sent as f64
        }
    }

    pub(crate) fn record_connectivity(&mut self, tick: u64, connected: bool) {
        if connected {
            self.connected_ticks += 1;
            return;
        }
        match self.disconnected_intervals.last_mut() {
            Some(iv) if iv[1] == tick => iv[1] = tick + 1,
            _ => self.disconnected_intervals.push([tick, tick + 1]),
        }
    }
}

/// Arc-length position along a polyline, used as path distance from the base.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGauge {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
    origin: Vec2,
}

impl PathGauge {
    pub fn new(centerline: &[Vec2], origin: Vec2) -> Self {
        let mut cumulative = Vec::with_capacity(centerline.len());
        let mut acc = 0.0;
        for (i, p) in centerline.iter().enumerate() {
            if i > 0 {
                acc += p.distance(centerline[i - 1]);
            }
            cumulative.push(acc);
        }
        Self {
            points: centerline.to_vec(),
            cumulative,
            origin,
        }
    }

    /// Arc length of the projection of `p` onto the polyline; Euclidean
    /// distance from the origin when the polyline has fewer than two points.
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.points.len() < 2 {
            return p.distance(self.origin);
        }
        let mut best = (f64::INFINITY, 0.0);
        for i in 1..self.points.len() {
            let seg = crate::geometry::Segment::new(self.points[i - 1], self.points[i]);
            let q = seg.closest_point(p);
            let d = q.distance(p);
            if d < best.0 {
                best = (d, self.cumulative[i - 1] + q.distance(self.points[i - 1]));
            }
        }
        best.1
    }
}
