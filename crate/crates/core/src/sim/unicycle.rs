//! Low-level heading/speed control for a unicycle.

use crate::geometry::{wrap_angle, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnicyclePose {
    pub position: Vec2,
    /// Heading in (−π, π].
    pub heading: f64,
}

impl UnicyclePose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnicycleLimits {
    pub u_max: f64,
    pub omega_max: f64,
    pub k_omega: f64,
}

/// Advancing and angular velocity that track a planar velocity command.
///
/// The robot turns toward the commanded direction at `k_ω·θₑ` and only
/// advances with the component of the command along its heading.
pub fn unicycle_track(pose: &UnicyclePose, v_des: Vec2, limits: &UnicycleLimits) -> (f64, f64) {
    let speed = v_des.norm();
    if speed < 1e-12 {
        return (0.0, 0.0);
    }
    let err = wrap_angle(v_des.y.atan2(v_des.x) - pose.heading);
    let omega = (limits.k_omega * err).clamp(-limits.omega_max, limits.omega_max);
    let u = (speed * err.cos().max(0.0)).clamp(0.0, limits.u_max);
    (u, omega)
}

/// Forward-Euler step of the unicycle kinematics.
pub fn integrate(pose: &UnicyclePose, u: f64, omega: f64, dt: f64) -> UnicyclePose {
    let (s, c) = pose.heading.sin_cos();
    UnicyclePose {
        position: Vec2::new(pose.position.x + u * c * dt, pose.position.y + u * s * dt),
        heading: wrap_angle(pose.heading + omega * dt),
    }
}
