//! Relay-chain simulator: support robots keep a multi-hop radio route between
//! a fixed base and a roaming agent using prioritized null-space task control.

pub mod behavior;
pub mod geometry;
pub mod mesh;
pub mod nsb;
pub mod runlog;
pub mod scenario;
pub mod sim;

pub use behavior::{AgentState, FreeStrategy, FsmParams, Gains, SupportState};
pub use geometry::{Segment, Vec2};
pub use mesh::{DropReason, LinkGraph, NodeId, Roster, RoutingTable};
pub use nsb::{NsbError, TaskEval, TaskKind, TaskRequest};
pub use runlog::{run, run_in_memory, summarize, RunReport};
pub use scenario::{parse_scenario, Scenario, ScenarioError};
pub use sim::metrics::Metrics;
pub use sim::{Simulation, TickOutput};
