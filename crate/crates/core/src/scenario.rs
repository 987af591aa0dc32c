//! Scenario files.
//!
//! A scenario is a TOML document. Only `[world]`, `[base]` and `[agent]`
//! are required; every other section and key falls back to a default.
//! Unknown keys are rejected. See the README for the full grammar.

use crate::behavior::{FreeStrategy, Gains};
use crate::geometry::{Segment, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Source of the bundled corridor scenario.
pub const CORRIDOR_TOML: &str = include_str!("../scenarios/corridor.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl From<[f64; 4]> for Bounds {
    fn from(b: [f64; 4]) -> Self {
        Bounds {
            min: Vec2::new(b[0], b[1]),
            max: Vec2::new(b[2], b[3]),
        }
    }
}

impl From<Bounds> for [f64; 4] {
    fn from(b: Bounds) -> Self {
        [b.min.x, b.min.y, b.max.x, b.max.y]
    }
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default)]
    pub walls: Vec<Segment>,
    /// `[xmin, ymin, xmax, ymax]`; derived from the geometry when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    /// Polyline starting at the base along which path distance is measured.
    /// Euclidean distance from the base is used when empty.
    #[serde(default)]
    pub centerline: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSpec {
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub start: Vec2,
    #[serde(default)]
    pub heading: f64,
    pub waypoints: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub start: Vec2,
    #[serde(default)]
    pub heading: f64,
    /// A frozen robot never moves (used to sever links on purpose).
    #[serde(default)]
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSpec {
    pub r_max: f64,
    pub tau_route: f64,
    pub los: bool,
}

impl Default for RadioSpec {
    fn default() -> Self {
        Self {
            r_max: 20.0,
            tau_route: 3.0,
            los: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSpec {
    pub v_max: f64,
    pub damping: f64,
    pub gains: Gains,
    pub alpha_stretch: f64,
    pub t_backtrack: f64,
    pub strategy: FreeStrategy,
    pub capture_radius: f64,
    pub help_cooldown: f64,
    pub d_threshold: f64,
    pub d_safe: f64,
    pub lrf_range: f64,
    pub k_omega: f64,
    pub omega_max: f64,
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            v_max: 0.2,
            damping: crate::nsb::DEFAULT_DAMPING,
            gains: Gains::default(),
            alpha_stretch: 0.8,
            t_backtrack: 10.0,
            strategy: FreeStrategy::default(),
            capture_radius: 0.3,
            help_cooldown: 5.0,
            d_threshold: 1.0,
            d_safe: 0.5,
            lrf_range: 4.0,
            k_omega: 2.0,
            omega_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            dt: 0.1,
            duration: 600.0,
            seed: 0,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub world: WorldSpec,
    pub base: BaseSpec,
    pub agent: AgentSpec,
    #[serde(default)]
    pub support: Vec<SupportSpec>,
    #[serde(default)]
    pub radio: RadioSpec,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub sim: SimSpec,
}

fn default_name() -> String {
    "scenario".to_string()
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |i| before.len() - i - 1)
        + 1;
    (line, column)
}

/// Parses, resolves defaults and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut s: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |r| line_col(text, r.start));
        ScenarioError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    s.resolve();
    s.validate()?;
    Ok(s)
}

impl Scenario {
    pub fn corridor() -> Scenario {
        parse_scenario(CORRIDOR_TOML).expect("bundled corridor scenario is valid")
    }

    /// Serializes the fully resolved scenario back to TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn all_positions(&self) -> impl Iterator<Item = Vec2> + '_ {
        std::iter::once(self.base.position)
            .chain(std::iter::once(self.agent.start))
            .chain(self.agent.waypoints.iter().copied())
            .chain(self.support.iter().map(|s| s.start))
    }

    fn resolve(&mut self) {
        if self.world.bounds.is_some() {
            return;
        }
        let pts: Vec<Vec2> = self
            .all_positions()
            .chain(self.world.walls.iter().flat_map(|w| [w.a, w.b]))
            .filter(|p| p.is_finite())
            .collect();
        let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&Vec2) -> f64| {
            pts.iter().map(get).fold(init, f)
        };
        let pad = 1.0;
        self.world.bounds = Some(Bounds {
            min: Vec2::new(
                fold(f64::min, f64::INFINITY, |p| p.x) - pad,
                fold(f64::min, f64::INFINITY, |p| p.y) - pad,
            ),
            max: Vec2::new(
                fold(f64::max, f64::NEG_INFINITY, |p| p.x) + pad,
                fold(f64::max, f64::NEG_INFINITY, |p| p.y) + pad,
            ),
        });
    }

    pub fn bounds(&self) -> Bounds {
        self.world.bounds.expect("resolved scenario has bounds")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(
                    field,
                    format!("must be a finite positive number, got {v}"),
                ))
            }
        }
        fn non_negative(field: &str, v: f64) -> Result<(), ScenarioError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(
                    field,
                    format!("must be finite and non-negative, got {v}"),
                ))
            }
        }
        fn finite(field: &str, p: Vec2) -> Result<(), ScenarioError> {
            if p.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, "coordinates must be finite"))
            }
        }

        positive("radio.r_max", self.radio.r_max)?;
        non_negative("radio.tau_route", self.radio.tau_route)?;
        let c = &self.control;
        positive("control.v_max", c.v_max)?;
        non_negative("control.damping", c.damping)?;
        positive("control.gains.distance", c.gains.distance)?;
        positive("control.gains.goal", c.gains.goal)?;
        positive("control.gains.equal_distance", c.gains.equal_distance)?;
        positive("control.gains.obstacle", c.gains.obstacle)?;
        positive("control.alpha_stretch", c.alpha_stretch)?;
        if c.alpha_stretch > 1.0 {
            return Err(invalid("control.alpha_stretch", "must not exceed 1"));
        }
        non_negative("control.t_backtrack", c.t_backtrack)?;
        positive("control.capture_radius", c.capture_radius)?;
        non_negative("control.help_cooldown", c.help_cooldown)?;
        positive("control.d_threshold", c.d_threshold)?;
        positive("control.d_safe", c.d_safe)?;
        if c.d_safe >= c.d_threshold {
            return Err(invalid(
                "control.d_safe",
                "must be smaller than control.d_threshold",
            ));
        }
        positive("control.lrf_range", c.lrf_range)?;
        positive("control.k_omega", c.k_omega)?;
        positive("control.omega_max", c.omega_max)?;
        positive("sim.dt", self.sim.dt)?;
        non_negative("sim.duration", self.sim.duration)?;
        non_negative("sim.noise_sigma", self.sim.noise_sigma)?;

        for (i, w) in self.world.walls.iter().enumerate() {
            let field = format!("world.walls[{i}]");
            finite(&field, w.a)?;
            finite(&field, w.b)?;
            if !(w.length() > 0.0) {
                return Err(invalid(&field, "wall has zero length"));
            }
        }
        for (i, p) in self.world.centerline.iter().enumerate() {
            finite(&format!("world.centerline[{i}]"), *p)?;
        }
        let b = self.bounds();
        finite("world.bounds", b.min)?;
        finite("world.bounds", b.max)?;
        if !(b.min.x < b.max.x && b.min.y < b.max.y) {
            return Err(invalid(
                "world.bounds",
                "min corner must be below max corner",
            ));
        }
        if self.agent.waypoints.is_empty() {
            return Err(invalid(
                "agent.waypoints",
                "at least one waypoint is required",
            ));
        }
        let mut checks: Vec<(String, Vec2)> = vec![
            ("base.position".into(), self.base.position),
            ("agent.start".into(), self.agent.start),
        ];
        checks.extend(
            self.agent
                .waypoints
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("agent.waypoints[{i}]"), *p)),
        );
        checks.extend(
            self.support
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("support[{i}].start"), s.start)),
        );
        for (field, p) in checks {
            finite(&field, p)?;
            if !b.contains(p) {
                return Err(invalid(&field, "position lies outside world.bounds"));
            }
        }
        if !self.agent.heading.is_finite() {
            return Err(invalid("agent.heading", "must be finite"));
        }
        for (i, s) in self.support.iter().enumerate() {
            if !s.heading.is_finite() {
                return Err(invalid(&format!("support[{i}].heading"), "must be finite"));
            }
        }
        if self.support.len() > u16::MAX as usize - 2 {
            return Err(invalid("support", "too many support robots"));
        }
        Ok(())
    }

    pub fn tick_count(&self) -> u64 {
        (self.sim.duration / self.sim.dt).round() as u64
    }
}
