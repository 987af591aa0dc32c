//! Per-robot finite state system.
//!
//! Support robots decide, from local information only, whether they are on
//! the agent→base forwarding path and pick their prioritized tasks
//! accordingly. The agent follows its waypoints and halts or backtracks when
//! its traffic stops reaching the base.

use crate::geometry::Vec2;
use crate::mesh::{NeighborReport, NeighborSnapshot, NodeId, RoutingTable};
use crate::nsb::{TaskKind, TaskRequest};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FreeStrategy {
    /// Equal distance from the base and the first hop toward the agent.
    #[default]
    #[serde(rename = "A")]
    BaseAndAgentHop,
    /// Equal distance from the first hops toward the base and toward the agent.
    #[serde(rename = "B")]
    BaseHopAndAgentHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gains {
    pub distance: f64,
    pub goal: f64,
    pub equal_distance: f64,
    pub obstacle: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            distance: 0.5,
            goal: 0.5,
            equal_distance: 0.5,
            obstacle: 0.5,
        }
    }
}

/// Static constants every FSM step may read.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmParams {
    pub base: NodeId,
    pub agent: NodeId,
    pub base_position: Vec2,
    pub r_max: f64,
    pub alpha_stretch: f64,
    pub capture_radius: f64,
    pub help_cooldown_ticks: u64,
    pub t_backtrack_ticks: u64,
    pub strategy: FreeStrategy,
    pub gains: Gains,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportState {
    OnPath,
    Free,
    LostPredecessor,
    Helping,
}

impl SupportState {
    pub fn as_str(self) -> &'static str {
        match self {
            SupportState::OnPath => "on_path",
            SupportState::Free => "free",
            SupportState::LostPredecessor => "lost_predecessor",
            SupportState::Helping => "helping",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportMode {
    pub state: SupportState,
    pub predecessor: Option<NodeId>,
    pub successor: Option<NodeId>,
    pub last_known_predecessor_pos: Option<Vec2>,
    pub help_target: Option<Vec2>,
    pub help_requester: Option<NodeId>,
    /// The requester's hop count to the agent when it last asked.
    pub help_agent_hops: u32,
    /// Tick of the last help request this robot issued.
    pub last_help_issued: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Predecessor,
    Successor,
}

impl Default for SupportMode {
    fn default() -> Self {
        Self::free()
    }
}

impl SupportMode {
    pub fn free() -> Self {
        Self {
            state: SupportState::Free,
            predecessor: None,
            successor: None,
            last_known_predecessor_pos: None,
            help_target: None,
            help_requester: None,
            help_agent_hops: u32::MAX,
            last_help_issued: None,
        }
    }

    fn with_state(&self, state: SupportState) -> Self {
        Self {
            state,
            predecessor: None,
            successor: None,
            last_known_predecessor_pos: None,
            help_target: None,
            help_requester: None,
            help_agent_hops: u32::MAX,
            last_help_issued: self.last_help_issued,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelpRequest {
    pub requester: NodeId,
    /// The single neighbor asked to move.
    pub helper: NodeId,
    /// Which of the requester's path links is strained.
    pub side: Side,
    pub midpoint: Vec2,
    pub issue_tick: u64,
    /// Requester's hop count to the agent; `u32::MAX` without a route.
    pub agent_hops: u32,
}

/// Last position learned for every node ever heard as a one-hop neighbor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PositionMemory {
    entries: BTreeMap<NodeId, NeighborReport>,
}

impl PositionMemory {
    pub fn learn(&mut self, snapshot: &NeighborSnapshot) {
        for (id, report) in &snapshot.entries {
            self.entries.insert(*id, *report);
        }
    }

    pub fn position(&self, id: NodeId) -> Option<Vec2> {
        self.entries.get(&id).map(|r| r.position)
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.entries.values().map(|r| r.position)
    }
}

/// Everything a robot is allowed to look at when deciding what to do.
#[derive(Debug, Clone, Copy)]
pub struct LocalView<'a> {
    pub id: NodeId,
    pub tick: u64,
    pub position: Vec2,
    pub table: &'a RoutingTable,
    pub snapshot: &'a NeighborSnapshot,
    pub memory: &'a PositionMemory,
}

impl LocalView<'_> {
    /// Usable route to `dest`: a table entry whose next hop is still heard.
    pub fn has_route(&self, dest: NodeId) -> bool {
        self.table
            .next_hop(dest)
            .is_some_and(|h| self.snapshot.contains(h))
    }

    /// Position of `id`: the base constant, a current report, or the last
    /// remembered one. The flag is false when the current report was missing.
    fn resolve(&self, id: NodeId, params: &FsmParams) -> Option<(Vec2, bool)> {
        if id == params.base {
            return Some((params.base_position, true));
        }
        if let Some(p) = self.snapshot.position(id) {
            return Some((p, true));
        }
        self.memory.position(id).map(|p| (p, false))
    }
}

/// Conditions that made a robot fall back to a default behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fallback {
    MissingNeighborPosition(NodeId),
    Disconnected,
    NoAgentRoute,
    NoBacktrackTarget,
}

impl Fallback {
    pub fn label(self) -> &'static str {
        match self {
            Fallback::MissingNeighborPosition(_) => "missing_neighbor_position",
            Fallback::Disconnected => "disconnected",
            Fallback::NoAgentRoute => "no_agent_route",
            Fallback::NoBacktrackTarget => "no_backtrack_target",
        }
    }
}

/// Ordered task list (highest priority first) plus side outputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskPlan {
    pub tasks: Vec<TaskRequest>,
    pub help: Option<HelpRequest>,
    pub fallback: Option<Fallback>,
}

impl TaskPlan {
    fn hold(fallback: Fallback) -> Self {
        Self {
            tasks: vec![],
            help: None,
            fallback: Some(fallback),
        }
    }

    /// Puts an obstacle-avoidance task in front of everything else.
    pub fn with_obstacle(mut self, obstacle: Vec2, safe_distance: f64, gain: f64) -> Self {
        self.tasks
            .insert(0, TaskRequest::avoid(obstacle, safe_distance, gain));
        self
    }

    pub fn kinds(&self) -> Vec<TaskKind> {
        self.tasks.iter().map(|t| t.kind).collect()
    }
}

/// Path membership from this robot's involvement in forwarding the agent's
/// traffic. `trace` is the hop sequence of the agent's current packet,
/// including a partial sequence when it was dropped; a robot only reads its
/// own position in it (who handed it the packet and whom it handed it to).
pub fn classify(
    prev: &SupportMode,
    view: &LocalView,
    trace: &[NodeId],
    params: &FsmParams,
) -> SupportMode {
    let route_to_base = view.has_route(params.base);
    let lost = |pred: NodeId| {
        let mut m = prev.with_state(SupportState::LostPredecessor);
        m.predecessor = Some(pred);
        m.last_known_predecessor_pos = view.resolve(pred, params).map(|(p, _)| p);
        m
    };

    if let Some(i) = trace
        .iter()
        .skip(1)
        .position(|&n| n == view.id)
        .map(|i| i + 1)
    {
        let successor = trace[i - 1];
        if let Some(&pred) = trace.get(i + 1) {
            let mut m = prev.with_state(SupportState::OnPath);
            m.predecessor = Some(pred);
            m.successor = Some(successor);
            return m;
        }
        // The agent's packet stopped here.
        let pred = match prev.state {
            SupportState::OnPath | SupportState::LostPredecessor => prev.predecessor,
            _ => None,
        }
        .or_else(|| view.table.next_hop(params.base));
        if !route_to_base {
            if let Some(pred) = pred {
                let m = lost(pred);
                if m.last_known_predecessor_pos.is_some() {
                    return m;
                }
            }
            return prev.with_state(SupportState::Free);
        }
        let mut m = prev.with_state(SupportState::OnPath);
        m.predecessor = pred;
        m.successor = Some(successor);
        return m;
    }

    // The agent's traffic reaches the base without this robot, or the robot
    // lost its own way to the base; otherwise a path robot whose chain is
    // broken further downstream keeps its place and tries to restore it.
    let delivered = trace.last() == Some(&params.base);
    match prev.state {
        SupportState::OnPath if route_to_base && !delivered => prev.clone(),
        SupportState::OnPath if !route_to_base => {
            if let Some(pred) = prev.predecessor.filter(|p| !view.snapshot.contains(*p)) {
                let m = lost(pred);
                if m.last_known_predecessor_pos.is_some() {
                    return m;
                }
            }
            prev.with_state(SupportState::Free)
        }
        SupportState::LostPredecessor if !route_to_base => prev.clone(),
        SupportState::Helping => match prev.help_target {
            Some(t) if t.distance(view.position) > params.capture_radius => prev.clone(),
            _ => prev.with_state(SupportState::Free),
        },
        _ => prev.with_state(SupportState::Free),
    }
}

/// On-path robots sit on the bisector of their predecessor and successor and
/// ask free neighbors for help when either link is over-stretched.
pub fn tasks_on_path(mode: &SupportMode, view: &LocalView, params: &FsmParams) -> TaskPlan {
    let mut plan = TaskPlan::default();
    let (Some(pred), Some(succ)) = (mode.predecessor, mode.successor) else {
        return plan;
    };
    // A link that is already down is left alone: chasing a remembered
    // position only makes it flap and keeps the routing from settling.
    let mut ends = [None, None];
    for (slot, id) in ends.iter_mut().zip([pred, succ]) {
        match view.resolve(id, params) {
            Some((p, true)) => *slot = Some(p),
            _ => plan.fallback = Some(Fallback::MissingNeighborPosition(id)),
        }
    }
    let (Some(pred_pos), Some(succ_pos)) = (ends[0], ends[1]) else {
        return plan;
    };
    plan.tasks.push(TaskRequest::equal_distance(
        pred_pos,
        succ_pos,
        params.gains.equal_distance,
    ));

    let d_pred = view.position.distance(pred_pos);
    let d_succ = view.position.distance(succ_pos);
    let limit = params.alpha_stretch * params.r_max;
    let cooled = mode
        .last_help_issued
        .is_none_or(|t| view.tick.saturating_sub(t) >= params.help_cooldown_ticks);
    // The chain grows at the agent end, so that link goes first.
    let side = if d_succ > limit {
        Side::Successor
    } else if d_pred > limit {
        Side::Predecessor
    } else {
        return plan;
    };
    if !cooled {
        return plan;
    }
    let strained = match side {
        Side::Predecessor => pred_pos,
        Side::Successor => succ_pos,
    };
    let midpoint = view.position.midpoint(strained);
    plan.help = pick_helper(mode, view, strained, params).map(|helper| HelpRequest {
        requester: view.id,
        helper,
        side,
        midpoint,
        issue_tick: view.tick,
        agent_hops: view
            .table
            .get(params.agent)
            .map_or(u32::MAX, |r| r.hop_count),
    });
    plan
}

/// The neighbor closest to the middle of the link towards `far`, other than
/// this robot's own path links. Neighbors nearer `far` than this robot are
/// left to whoever sits at that end, so two relays never pull one robot back
/// and forth.
fn pick_helper(
    mode: &SupportMode,
    view: &LocalView,
    far: Vec2,
    params: &FsmParams,
) -> Option<NodeId> {
    let excluded = [
        Some(params.base),
        Some(params.agent),
        mode.predecessor,
        mode.successor,
    ];
    let midpoint = view.position.midpoint(far);
    view.snapshot
        .entries
        .iter()
        .filter(|(id, _)| !excluded.contains(&Some(**id)))
        .filter(|(_, e)| e.position.distance(view.position) <= e.position.distance(far))
        .min_by(|a, b| {
            let da = a.1.position.distance(midpoint);
            let db = b.1.position.distance(midpoint);
            da.total_cmp(&db).then(a.0.cmp(b.0))
        })
        .map(|(id, _)| *id)
}

/// A robot that lost its predecessor heads for where it last saw it.
pub fn tasks_lost(mode: &SupportMode, params: &FsmParams) -> TaskPlan {
    match mode.last_known_predecessor_pos {
        Some(p) => TaskPlan {
            tasks: vec![TaskRequest::move_to(p, params.gains.goal)],
            ..TaskPlan::default()
        },
        None => TaskPlan::hold(Fallback::NoBacktrackTarget),
    }
}

pub fn tasks_free(view: &LocalView, params: &FsmParams) -> TaskPlan {
    if !view.has_route(params.base) {
        return TaskPlan::hold(Fallback::Disconnected);
    }
    let Some(agent_hop) = view.table.next_hop(params.agent) else {
        return TaskPlan::hold(Fallback::NoAgentRoute);
    };
    let base_side = match params.strategy {
        FreeStrategy::BaseAndAgentHop => params.base,
        FreeStrategy::BaseHopAndAgentHop => match view.table.next_hop(params.base) {
            Some(h) => h,
            None => return TaskPlan::hold(Fallback::Disconnected),
        },
    };
    let mut plan = TaskPlan::default();
    let mut resolve = |id: NodeId| match view.resolve(id, params) {
        Some((p, fresh)) => {
            if !fresh {
                plan.fallback = Some(Fallback::MissingNeighborPosition(id));
            }
            Some(p)
        }
        None => {
            plan.fallback = Some(Fallback::MissingNeighborPosition(id));
            None
        }
    };
    let (Some(a), Some(b)) = (resolve(base_side), resolve(agent_hop)) else {
        return plan;
    };
    plan.tasks.push(TaskRequest::equal_distance(
        a,
        b,
        params.gains.equal_distance,
    ));
    plan
}

pub fn tasks_helping(mode: &SupportMode, params: &FsmParams) -> TaskPlan {
    match mode.help_target {
        Some(t) => TaskPlan {
            tasks: vec![TaskRequest::move_to(t, params.gains.goal)],
            ..TaskPlan::default()
        },
        None => TaskPlan::default(),
    }
}

/// Free robots take the oldest pending request (lowest requester id on
/// ties); a helper refreshes its target when its requester re-issues.
/// Robots in any other state ignore requests.
pub fn accept_help(requests: &[HelpRequest], mode: &SupportMode) -> SupportMode {
    let adopt = |r: &HelpRequest| {
        let mut m = mode.with_state(SupportState::Helping);
        m.help_target = Some(r.midpoint);
        m.help_requester = Some(r.requester);
        m.help_agent_hops = r.agent_hops;
        m
    };
    // Links nearer the agent are served first since that is where the chain grows.
    let best = |pool: &mut dyn Iterator<Item = &HelpRequest>| {
        pool.min_by_key(|r| (r.agent_hops, r.issue_tick, r.requester))
            .copied()
    };
    match mode.state {
        SupportState::Free => match best(&mut requests.iter()) {
            Some(r) => adopt(&r),
            None => mode.clone(),
        },
        SupportState::Helping => {
            let closer = best(
                &mut requests
                    .iter()
                    .filter(|r| r.agent_hops < mode.help_agent_hops),
            );
            if let Some(r) = closer {
                return adopt(&r);
            }
            let newest = requests
                .iter()
                .filter(|r| Some(r.requester) == mode.help_requester)
                .max_by_key(|r| r.issue_tick);
            match newest {
                Some(r) => adopt(r),
                None => mode.clone(),
            }
        }
        _ => mode.clone(),
    }
}

/// One support-robot step: classification, help adoption, task selection.
/// `inbox` holds requests from one-hop neighbors; only those addressed to
/// this robot are considered.
pub fn support_step(
    prev: &SupportMode,
    view: &LocalView,
    trace: &[NodeId],
    inbox: &[HelpRequest],
    params: &FsmParams,
) -> (SupportMode, TaskPlan) {
    let classified = classify(prev, view, trace, params);
    let mine: Vec<HelpRequest> = inbox
        .iter()
        .filter(|r| r.helper == view.id)
        .copied()
        .collect();
    let mut mode = accept_help(&mine, &classified);
    let plan = match mode.state {
        SupportState::OnPath => tasks_on_path(&mode, view, params),
        SupportState::LostPredecessor => tasks_lost(&mode, params),
        SupportState::Free => tasks_free(view, params),
        SupportState::Helping => tasks_helping(&mode, params),
    };
    if plan.help.is_some() {
        mode.last_help_issued = Some(view.tick);
    }
    (mode, plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentState {
    Navigate,
    Halt,
    Backtrack,
}

impl AgentState {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentState::Navigate => "navigate",
            AgentState::Halt => "halt",
            AgentState::Backtrack => "backtrack",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentMode {
    pub state: AgentState,
    pub waypoint_index: usize,
    pub halt_started: Option<u64>,
    /// Last position of the agent's first hop toward the base while connected.
    pub last_first_hop_pos: Option<Vec2>,
    pub mission_complete: bool,
}

impl Default for AgentMode {
    fn default() -> Self {
        Self {
            state: AgentState::Navigate,
            waypoint_index: 0,
            halt_started: None,
            last_first_hop_pos: None,
            mission_complete: false,
        }
    }
}

/// What the agent knows this tick. `connected` is true when its traffic
/// currently reaches the base.
#[derive(Debug, Clone, Copy)]
pub struct AgentView<'a> {
    pub local: LocalView<'a>,
    pub connected: bool,
}

pub fn agent_step(
    mode: &AgentMode,
    view: &AgentView,
    waypoints: &[Vec2],
    params: &FsmParams,
) -> (AgentMode, TaskPlan) {
    assert!(!waypoints.is_empty(), "agent needs at least one waypoint");
    let now = view.local.tick;
    let mut m = mode.clone();
    if view.connected {
        if let Some(p) = view
            .local
            .table
            .next_hop(params.base)
            .and_then(|h| view.local.resolve(h, params))
            .map(|(p, _)| p)
        {
            m.last_first_hop_pos = Some(p);
        }
    }

    let navigate = |m: &mut AgentMode| {
        m.state = AgentState::Navigate;
        m.halt_started = None;
        let last = waypoints.len() - 1;
        if view.local.position.distance(waypoints[m.waypoint_index]) <= params.capture_radius {
            if m.waypoint_index < last {
                m.waypoint_index += 1;
            } else {
                m.mission_complete = true;
            }
        }
        TaskPlan {
            tasks: vec![TaskRequest::move_to(
                waypoints[m.waypoint_index],
                params.gains.goal,
            )],
            ..TaskPlan::default()
        }
    };

    let plan = match (mode.state, view.connected) {
        (_, true) => navigate(&mut m),
        (AgentState::Navigate, false) => {
            m.state = AgentState::Halt;
            m.halt_started = Some(now);
            TaskPlan::default()
        }
        (AgentState::Halt, false) => {
            let started = mode.halt_started.unwrap_or(now);
            if now.saturating_sub(started) >= params.t_backtrack_ticks {
                m.state = AgentState::Backtrack;
                backtrack_plan(&m, params)
            } else {
                TaskPlan::default()
            }
        }
        (AgentState::Backtrack, false) => backtrack_plan(&m, params),
    };
    (m, plan)
}

fn backtrack_plan(mode: &AgentMode, params: &FsmParams) -> TaskPlan {
    match mode.last_first_hop_pos {
        Some(p) => TaskPlan {
            tasks: vec![TaskRequest::move_to(p, params.gains.goal)],
            ..TaskPlan::default()
        },
        None => TaskPlan::hold(Fallback::NoBacktrackTarget),
    }
}
