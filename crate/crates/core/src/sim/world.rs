//! Wall geometry and the simulated range finder.

use crate::geometry::{Segment, Vec2};
use crate::scenario::Bounds;

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub walls: Vec<Segment>,
    pub bounds: Bounds,
}

impl World {
    pub fn new(walls: Vec<Segment>, bounds: Bounds) -> Self {
        Self { walls, bounds }
    }

    /// Distance from `p` to the nearest wall (infinite without walls).
    pub fn wall_distance(&self, p: Vec2) -> f64 {
        self.walls
            .iter()
            .map(|w| w.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Nearest obstacle point seen from `position`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleHit {
    pub point: Vec2,
    pub distance: f64,
}

/// Closest point over all walls and the other robots (taken as points)
/// within `range`.
pub fn lrf_scan(position: Vec2, world: &World, others: &[Vec2], range: f64) -> Option<ObstacleHit> {
    let (wall, robot) = lrf_split(position, world, others, range);
    match (wall, robot) {
        (Some(w), Some(r)) => Some(if r.distance < w.distance { r } else { w }),
        (w, r) => w.or(r),
    }
}

/// Nearest wall point and nearest robot within `range`, kept apart so both
/// can be avoided at once.
pub fn lrf_split(
    position: Vec2,
    world: &World,
    others: &[Vec2],
    range: f64,
) -> (Option<ObstacleHit>, Option<ObstacleHit>) {
    let nearest = |points: &mut dyn Iterator<Item = Vec2>| {
        points
            .map(|point| ObstacleHit {
                point,
                distance: point.distance(position),
            })
            .filter(|h| h.distance <= range)
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
    };
    let wall = nearest(&mut world.walls.iter().map(|w| w.closest_point(position)));
    let robot = nearest(&mut others.iter().copied());
    (wall, robot)
}

/// The avoidance task fires only close to an obstacle and while the commanded
/// velocity points toward it.
pub fn obstacle_active(p: Vec2, v_cmd: Vec2, obstacle: Vec2, d_threshold: f64) -> bool {
    p.distance(obstacle) < d_threshold && v_cmd.dot(obstacle - p) > 0.0
}
