//! Fixed-step world simulation.
//!
//! One tick runs, in order: radio graph → position gossip → routing →
//! path tracing and classification → help-request delivery → FSM → task
//! composition (with obstacle injection) → unicycle motion for every robot
//! at once → the agent's data packet → metrics.

pub mod metrics;
pub mod unicycle;
pub mod world;

use crate::behavior::{
    agent_step, support_step, AgentMode, AgentView, FsmParams, HelpRequest, LocalView,
    PositionMemory, SupportMode, SupportState, TaskPlan,
};
use crate::geometry::Vec2;
use crate::mesh::{
    build_link_graph, gossip_positions, relay, relay_packet, tau_ticks, DropReason, LinkGraph,
    NodeId, Packet, RelayOutcome, Role, Roster, RoutingState,
};
use crate::nsb::{self, TaskKind};
use crate::scenario::Scenario;
use metrics::{Metrics, ModeTransition, PathGauge, WaypointReached};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use unicycle::{integrate, unicycle_track, UnicycleLimits, UnicyclePose};
use world::{lrf_split, obstacle_active, World};

#[derive(Debug, Clone, PartialEq)]
pub enum NodeMode {
    Base,
    Support(SupportMode),
    Agent(AgentMode),
}

impl NodeMode {
    pub fn label(&self) -> &'static str {
        match self {
            NodeMode::Base => "base",
            NodeMode::Support(m) => m.state.as_str(),
            NodeMode::Agent(m) => m.state.as_str(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub tick: u64,
    pub poses: Vec<UnicyclePose>,
    pub modes: Vec<NodeMode>,
    pub memory: Vec<PositionMemory>,
    pub routing: RoutingState,
    pub pending_help: Vec<HelpRequest>,
    pub next_seq: u64,
    pub metrics: Metrics,
    /// Per-tick flag: the agent's packet reached the base.
    pub connectivity: Vec<bool>,
    rng: ChaCha8Rng,
}

impl SimState {
    pub fn time(&self, dt: f64) -> f64 {
        self.tick as f64 * dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub pose: UnicyclePose,
    pub mode: &'static str,
    pub on_path: bool,
    pub predecessor: Option<NodeId>,
    pub successor: Option<NodeId>,
    pub tasks: Vec<TaskKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub seq: u64,
    pub created_tick: u64,
    pub drop_reason: Option<DropReason>,
    pub hop_trace: Vec<NodeId>,
}

impl PacketRecord {
    pub fn delivered(&self) -> bool {
        self.drop_reason.is_none()
    }
}

/// Everything observable about one tick, for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub tick: u64,
    pub time: f64,
    pub nodes: Vec<NodeRecord>,
    pub packet: PacketRecord,
    pub topology_changed: bool,
    pub connected: bool,
}

pub struct Simulation {
    scenario: Scenario,
    roster: Roster,
    params: FsmParams,
    world: World,
    gauge: PathGauge,
    limits: UnicycleLimits,
    frozen: Vec<bool>,
    tau_ticks: u64,
    noise: Option<Normal<f64>>,
    state: SimState,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Self {
        Self::with_seed(scenario.clone(), scenario.sim.seed)
    }

    pub fn with_seed(scenario: Scenario, seed: u64) -> Self {
        let roster = Roster::new(scenario.support.len());
        let c = &scenario.control;
        let dt = scenario.sim.dt;
        let ticks = |secs: f64| (secs / dt).round() as u64;
        let params = FsmParams {
            base: roster.base,
            agent: roster.agent,
            base_position: scenario.base.position,
            r_max: scenario.radio.r_max,
            alpha_stretch: c.alpha_stretch,
            capture_radius: c.capture_radius,
            help_cooldown_ticks: ticks(c.help_cooldown),
            t_backtrack_ticks: ticks(c.t_backtrack),
            strategy: c.strategy,
            gains: c.gains,
        };
        let world = World::new(scenario.world.walls.clone(), scenario.bounds());
        let gauge = PathGauge::new(&scenario.world.centerline, scenario.base.position);
        let limits = UnicycleLimits {
            u_max: c.v_max,
            omega_max: c.omega_max,
            k_omega: c.k_omega,
        };

        let mut poses = vec![UnicyclePose::new(scenario.base.position, 0.0)];
        let mut modes = vec![NodeMode::Base];
        let mut frozen = vec![true];
        for s in &scenario.support {
            poses.push(UnicyclePose::new(s.start, s.heading));
            modes.push(NodeMode::Support(SupportMode::free()));
            frozen.push(s.frozen);
        }
        poses.push(UnicyclePose::new(
            scenario.agent.start,
            scenario.agent.heading,
        ));
        modes.push(NodeMode::Agent(AgentMode::default()));
        frozen.push(false);

        let positions: Vec<Vec2> = poses.iter().map(|p| p.position).collect();
        let graph = graph_for(&scenario, &positions);
        let routing = RoutingState::converged(&graph, 0);
        let noise = (scenario.sim.noise_sigma > 0.0)
            .then(|| Normal::new(0.0, scenario.sim.noise_sigma).expect("validated sigma"));
        let n = roster.len();
        let mut metrics = Metrics::default();
        metrics.min_wall_distance = min_wall_distance(&world, &roster, &positions);

        Self {
            tau_ticks: tau_ticks(scenario.radio.tau_route, dt),
            roster,
            params,
            world,
            gauge,
            limits,
            frozen,
            noise,
            state: SimState {
                tick: 0,
                poses,
                modes,
                memory: vec![PositionMemory::default(); n],
                routing,
                pending_help: vec![],
                next_seq: 0,
                metrics,
                connectivity: vec![],
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
            scenario,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn metrics(&self) -> &Metrics {
        &self.state.metrics
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn path_gauge(&self) -> &PathGauge {
        &self.gauge
    }

    pub fn agent_mode(&self) -> &AgentMode {
        match &self.state.modes[self.roster.agent.index()] {
            NodeMode::Agent(m) => m,
            _ => unreachable!("agent slot holds an agent mode"),
        }
    }

    /// Runs `ticks` steps, discarding per-tick output.
    pub fn run_ticks(&mut self, ticks: u64) {
        for _ in 0..ticks {
            self.step();
        }
    }

    pub fn step(&mut self) -> TickOutput {
        let now = self.state.tick;
        let dt = self.scenario.sim.dt;
        let n = self.roster.len();
        let (base, agent) = (self.roster.base, self.roster.agent);

        // (1) radio graph from true positions.
        let truth: Vec<Vec2> = self.state.poses.iter().map(|p| p.position).collect();
        let graph = graph_for(&self.scenario, &truth);

        // (2) gossip of self-reported (optionally noisy) positions.
        let reported: Vec<Vec2> = match self.noise {
            Some(dist) => truth
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if i == base.index() {
                        *p
                    } else {
                        let rng = &mut self.state.rng;
                        *p + Vec2::new(dist.sample(rng), dist.sample(rng))
                    }
                })
                .collect(),
            None => truth.clone(),
        };
        let snapshots = gossip_positions(&reported, &graph, now);
        for (mem, snap) in self.state.memory.iter_mut().zip(&snapshots) {
            mem.learn(snap);
        }

        // (3) routing with convergence latency.
        let changed = self.state.routing.tick(&graph, now, self.tau_ticks);
        if changed {
            self.state.metrics.topology_changes.push(now);
        }
        let tables = &self.state.routing.tables;

        // (4) where the agent's traffic goes right now.
        let probe = relay(agent, base, tables, &graph);
        let connected = probe.is_delivered();
        let trace = probe.trace().to_vec();

        // (5)–(7) per-node decisions; all read the pre-motion state.
        let pending = std::mem::take(&mut self.state.pending_help);
        let mut new_modes = Vec::with_capacity(n);
        let mut commands = vec![Vec2::ZERO; n];
        let mut records = Vec::with_capacity(n);
        let mut fallbacks: Vec<String> = vec![];
        let mut agent_transition = None;
        for id in self.roster.ids() {
            let i = id.index();
            let view = LocalView {
                id,
                tick: now,
                position: reported[i],
                table: &tables[i],
                snapshot: &snapshots[i],
                memory: &self.state.memory[i],
            };
            let (mode, plan) = match &self.state.modes[i] {
                NodeMode::Base => (NodeMode::Base, TaskPlan::default()),
                NodeMode::Support(prev) => {
                    let inbox: Vec<HelpRequest> = pending
                        .iter()
                        .filter(|r| r.requester != id && graph.linked(r.requester, id))
                        .copied()
                        .collect();
                    let (m, plan) = support_step(prev, &view, &trace, &inbox, &self.params);
                    if prev.state == SupportState::Free && m.state == SupportState::OnPath {
                        self.state.metrics.free_to_on_path.push(ModeTransition {
                            tick: now,
                            node: id.0,
                        });
                    }
                    if let Some(h) = plan.help {
                        self.state.pending_help.push(h);
                    }
                    (NodeMode::Support(m), plan)
                }
                NodeMode::Agent(prev) => {
                    let av = AgentView {
                        local: view,
                        connected,
                    };
                    let (m, plan) =
                        agent_step(prev, &av, &self.scenario.agent.waypoints, &self.params);
                    agent_transition = Some((prev.clone(), m.clone()));
                    (NodeMode::Agent(m), plan)
                }
            };
            if let Some(f) = plan.fallback {
                fallbacks.push(f.label().to_string());
            }
            let plan = if self.frozen[i] {
                plan
            } else {
                let others: Vec<Vec2> = truth
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, p)| *p)
                    .collect();
                let (v, plan) = self.command(plan, reported[i], truth[i], &others, &mut fallbacks);
                commands[i] = v;
                plan
            };
            let (predecessor, successor) = match &mode {
                NodeMode::Support(m) => (m.predecessor, m.successor),
                _ => (None, None),
            };
            let on_path = match &mode {
                NodeMode::Support(m) => m.state == SupportState::OnPath,
                _ => connected,
            };
            records.push(NodeRecord {
                id,
                pose: self.state.poses[i],
                mode: mode.label(),
                on_path,
                predecessor,
                successor,
                tasks: plan.kinds(),
            });
            new_modes.push(mode);
        }
        self.state.modes = new_modes;
        if let Some((prev, next)) = agent_transition {
            self.note_waypoints(&prev, &next, now);
        }
        for f in fallbacks {
            *self.state.metrics.fallbacks.entry(f).or_insert(0) += 1;
        }

        // (8) synchronous motion.
        for i in 0..n {
            if self.frozen[i] {
                continue;
            }
            let pose = self.state.poses[i];
            let (u, w) = unicycle_track(&pose, commands[i], &self.limits);
            let next = integrate(&pose, u, w, dt);
            let moved = next.position.distance(pose.position);
            let m = &mut self.state.metrics;
            m.max_step_displacement = m.max_step_displacement.max(moved);
            self.state.poses[i] = next;
        }
        let after: Vec<Vec2> = self.state.poses.iter().map(|p| p.position).collect();
        if let Some(d) = min_wall_distance(&self.world, &self.roster, &after) {
            let m = &mut self.state.metrics;
            m.min_wall_distance = Some(m.min_wall_distance.map_or(d, |x| x.min(d)));
        }

        // (9) the agent's data packet.
        let mut pkt = Packet::new(self.state.next_seq, agent, base, now);
        self.state.next_seq += 1;
        let outcome = relay_packet(&mut pkt, &self.state.routing.tables, &graph);
        let drop_reason = match outcome {
            RelayOutcome::Delivered(_) => None,
            RelayOutcome::Dropped { reason, .. } => Some(reason),
        };

        // (10) metrics.
        let m = &mut self.state.metrics;
        m.ticks += 1;
        m.packets_sent += 1;
        match drop_reason {
            None => m.packets_delivered += 1,
            Some(r) => {
                m.packets_dropped += 1;
                *m.drops_by_reason.entry(r.as_str().to_string()).or_insert(0) += 1;
            }
        }
        m.record_connectivity(now, connected);
        let agent_dist = self.gauge.distance(truth[agent.index()]);
        m.max_agent_path_distance = m.max_agent_path_distance.max(agent_dist);
        self.state.connectivity.push(connected);

        self.state.tick += 1;
        TickOutput {
            tick: now,
            time: now as f64 * dt,
            nodes: records,
            packet: PacketRecord {
                seq: pkt.seq,
                created_tick: pkt.created_tick,
                drop_reason,
                hop_trace: pkt.hop_trace,
            },
            topology_changed: changed,
            connected,
        }
    }

    fn note_waypoints(&mut self, prev: &AgentMode, next: &AgentMode, now: u64) {
        let dt = self.scenario.sim.dt;
        let mut reached = vec![];
        if next.waypoint_index > prev.waypoint_index {
            reached.push(prev.waypoint_index);
        }
        if next.mission_complete && !prev.mission_complete {
            reached.push(next.waypoint_index);
        }
        for index in reached {
            let wp = self.scenario.agent.waypoints[index];
            self.state.metrics.waypoints_reached.push(WaypointReached {
                index,
                tick: now,
                time: now as f64 * dt,
                path_distance: self.gauge.distance(wp),
            });
        }
    }

    /// Composes the plan at the estimated position, adding obstacle avoidance
    /// in front when the resulting command heads into a nearby obstacle.
    fn command(
        &self,
        plan: TaskPlan,
        estimate: Vec2,
        truth: Vec2,
        others: &[Vec2],
        fallbacks: &mut Vec<String>,
    ) -> (Vec2, TaskPlan) {
        let c = &self.scenario.control;
        let v0 = self.compose_plan(&plan, estimate, fallbacks);
        // A wall inside the safety margin outranks a nearer robot; otherwise a
        // robot squeezed between a neighbor and the wall gets pushed into it.
        let hit = match lrf_split(truth, &self.world, others, c.lrf_range) {
            (Some(w), _) if w.distance < c.d_safe => w,
            (Some(w), Some(r)) => {
                if r.distance < w.distance {
                    r
                } else {
                    w
                }
            }
            (w, r) => match w.or(r) {
                Some(h) => h,
                None => return (v0, plan),
            },
        };
        let obstacle = estimate + (hit.point - truth);
        if !obstacle_active(estimate, v0, obstacle, c.d_threshold) {
            return (v0, plan);
        }
        let plan = plan.with_obstacle(obstacle, c.d_safe, c.gains.obstacle);
        let v = self.compose_plan(&plan, estimate, fallbacks);
        (v, plan)
    }

    fn compose_plan(&self, plan: &TaskPlan, at: Vec2, fallbacks: &mut Vec<String>) -> Vec2 {
        if plan.tasks.is_empty() {
            return Vec2::ZERO;
        }
        let c = &self.scenario.control;
        let evals: Result<Vec<_>, _> = plan.tasks.iter().map(|t| nsb::eval_task(t, at)).collect();
        match evals.and_then(|e| nsb::compose(&e, c.damping, c.v_max)) {
            Ok(v) => v,
            Err(e) => {
                fallbacks.push(format!("nsb: {e}"));
                Vec2::ZERO
            }
        }
    }
}

fn graph_for(scenario: &Scenario, positions: &[Vec2]) -> LinkGraph {
    build_link_graph(
        positions,
        scenario.radio.r_max,
        &scenario.world.walls,
        scenario.radio.los,
    )
}

fn min_wall_distance(world: &World, roster: &Roster, positions: &[Vec2]) -> Option<f64> {
    if world.walls.is_empty() {
        return None;
    }
    roster
        .ids()
        .filter(|id| roster.role(*id) != Role::Base)
        .map(|id| world.wall_distance(positions[id.index()]))
        .reduce(f64::min)
}
