//! Disc-graph radio, link-state routing and store-and-forward relay.

use crate::geometry::{Segment, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Base,
    Agent,
    Support,
}

/// Node numbering for a scenario: the base is 0, support robots are
/// `1..=n`, the agent is `n + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster {
    pub base: NodeId,
    pub agent: NodeId,
    pub supports: Vec<NodeId>,
}

impl Roster {
    pub fn new(support_count: usize) -> Self {
        let supports = (1..=support_count).map(|i| NodeId(i as u16)).collect();
        Self {
            base: NodeId(0),
            agent: NodeId(support_count as u16 + 1),
            supports,
        }
    }

    pub fn len(&self) -> usize {
        self.supports.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn role(&self, id: NodeId) -> Role {
        if id == self.base {
            Role::Base
        } else if id == self.agent {
            Role::Agent
        } else {
            Role::Support
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len()).map(|i| NodeId(i as u16))
    }
}

/// Symmetric adjacency over nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkGraph {
    n: usize,
    adj: Vec<bool>,
}

impl LinkGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            adj: vec![false; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(u16, u16)]) -> Self {
        let mut g = Self::empty(n);
        for &(a, b) in edges {
            g.set(NodeId(a), NodeId(b), true);
        }
        g
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, a: NodeId, b: NodeId, linked: bool) {
        if a == b {
            return;
        }
        let (i, j) = (a.index(), b.index());
        self.adj[i * self.n + j] = linked;
        self.adj[j * self.n + i] = linked;
    }

    pub fn linked(&self, a: NodeId, b: NodeId) -> bool {
        let (i, j) = (a.index(), b.index());
        i < self.n && j < self.n && self.adj[i * self.n + j]
    }

    pub fn neighbors(&self, a: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let i = a.index();
        (0..self.n)
            .filter(move |&j| self.adj[i * self.n + j])
            .map(|j| NodeId(j as u16))
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.adj[i * self.n + j] {
                    out.push((NodeId(i as u16), NodeId(j as u16)));
                }
            }
        }
        out
    }

    /// Hop distances from `src` (None when unreachable).
    pub fn bfs_hops(&self, src: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[src.index()] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.index()].unwrap_or(0);
            for v in self.neighbors(u) {
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Builds the radio graph: an edge wherever two nodes are within `r_max`
/// (boundary inclusive) and, when `los_enabled`, no wall crosses the line
/// between them.
pub fn build_link_graph(
    positions: &[Vec2],
    r_max: f64,
    walls: &[Segment],
    los_enabled: bool,
) -> LinkGraph {
    let n = positions.len();
    let mut g = LinkGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            let (p, q) = (positions[i], positions[j]);
            if p.distance(q) > r_max {
                continue;
            }
            if los_enabled && walls.iter().any(|w| w.blocks(p, q)) {
                continue;
            }
            g.set(NodeId(i as u16), NodeId(j as u16), true);
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub next_hop: NodeId,
    pub hop_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    pub owner: NodeId,
    pub entries: BTreeMap<NodeId, Route>,
    /// Tick at which the table was last recomputed.
    pub epoch: u64,
}

impl RoutingTable {
    pub fn empty(owner: NodeId) -> Self {
        Self {
            owner,
            entries: BTreeMap::new(),
            epoch: 0,
        }
    }

    pub fn get(&self, dest: NodeId) -> Option<&Route> {
        self.entries.get(&dest)
    }

    pub fn next_hop(&self, dest: NodeId) -> Option<NodeId> {
        self.get(dest).map(|r| r.next_hop)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Shortest-hop tables for every node; ties between equally short next hops
/// go to the lowest node id.
pub fn compute_tables(graph: &LinkGraph) -> Vec<RoutingTable> {
    let n = graph.node_count();
    let hops: Vec<Vec<Option<u32>>> = (0..n).map(|d| graph.bfs_hops(NodeId(d as u16))).collect();
    (0..n)
        .map(|s| {
            let owner = NodeId(s as u16);
            let mut entries = BTreeMap::new();
            for (d, to_dest) in hops.iter().enumerate() {
                if d == s {
                    continue;
                }
                let Some(h) = to_dest[s] else { continue };
                // Neighbors are enumerated in ascending id order.
                let next = graph
                    .neighbors(owner)
                    .find(|v| to_dest[v.index()] == Some(h - 1))
                    .expect("BFS distance implies a neighbor one hop closer");
                entries.insert(
                    NodeId(d as u16),
                    Route {
                        next_hop: next,
                        hop_count: h,
                    },
                );
            }
            RoutingTable {
                owner,
                entries,
                epoch: 0,
            }
        })
        .collect()
}

/// Routing state with a convergence delay.
///
/// Tables are recomputed from the current graph only once the graph has been
/// unchanged for `tau_ticks` ticks; until then every node keeps the tables
/// computed from the previous stable topology.
#[derive(Debug, Clone)]
pub struct RoutingState {
    pub tables: Vec<RoutingTable>,
    table_graph: LinkGraph,
    last_graph: LinkGraph,
    last_change: u64,
}

impl RoutingState {
    /// Starts converged on `graph`.
    pub fn converged(graph: &LinkGraph, now: u64) -> Self {
        let mut tables = compute_tables(graph);
        for t in &mut tables {
            t.epoch = now;
        }
        Self {
            tables,
            table_graph: graph.clone(),
            last_graph: graph.clone(),
            last_change: now,
        }
    }

    /// Advances routing to tick `now`. Returns true if `graph` differs from the
    /// previous tick's graph (a topology change).
    pub fn tick(&mut self, graph: &LinkGraph, now: u64, tau_ticks: u64) -> bool {
        let changed = *graph != self.last_graph;
        if changed {
            self.last_graph = graph.clone();
            self.last_change = now;
        }
        if *graph != self.table_graph && now.saturating_sub(self.last_change) >= tau_ticks {
            self.tables = compute_tables(graph);
            for t in &mut self.tables {
                t.epoch = now;
            }
            self.table_graph = graph.clone();
        }
        changed
    }

    pub fn table(&self, id: NodeId) -> &RoutingTable {
        &self.tables[id.index()]
    }

    pub fn is_converged(&self) -> bool {
        self.table_graph == self.last_graph
    }

    pub fn last_change(&self) -> u64 {
        self.last_change
    }
}

pub fn tau_ticks(tau_route: f64, dt: f64) -> u64 {
    (tau_route / dt).round().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoRoute,
    LinkDown,
    TtlExceeded,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no_route",
            DropReason::LinkDown => "link_down",
            DropReason::TtlExceeded => "ttl_exceeded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "no_route" => Some(DropReason::NoRoute),
            "link_down" => Some(DropReason::LinkDown),
            "ttl_exceeded" => Some(DropReason::TtlExceeded),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub hop_trace: Vec<NodeId>,
    pub created_tick: u64,
    pub delivered_tick: Option<u64>,
}

impl Packet {
    pub fn new(seq: u64, src: NodeId, dst: NodeId, created_tick: u64) -> Self {
        Self {
            seq,
            src,
            dst,
            hop_trace: vec![src],
            created_tick,
            delivered_tick: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelayOutcome {
    Delivered(Vec<NodeId>),
    Dropped {
        at: NodeId,
        reason: DropReason,
        trace: Vec<NodeId>,
    },
}

impl RelayOutcome {
    pub fn trace(&self) -> &[NodeId] {
        match self {
            RelayOutcome::Delivered(t) => t,
            RelayOutcome::Dropped { trace, .. } => trace,
        }
    }

    pub fn is_delivered(&self) -> bool {
        matches!(self, RelayOutcome::Delivered(_))
    }
}

/// Walks next-hop pointers from `src` to `dst`, requiring each hop to be
/// both in the forwarding node's table and physically linked right now.
pub fn relay(src: NodeId, dst: NodeId, tables: &[RoutingTable], graph: &LinkGraph) -> RelayOutcome {
    let mut trace = vec![src];
    let mut at = src;
    let ttl = graph.node_count();
    while at != dst {
        if trace.len() > ttl {
            return RelayOutcome::Dropped {
                at,
                reason: DropReason::TtlExceeded,
                trace,
            };
        }
        let Some(next) = tables.get(at.index()).and_then(|t| t.next_hop(dst)) else {
            return RelayOutcome::Dropped {
                at,
                reason: DropReason::NoRoute,
                trace,
            };
        };
        if !graph.linked(at, next) {
            return RelayOutcome::Dropped {
                at,
                reason: DropReason::LinkDown,
                trace,
            };
        }
        trace.push(next);
        at = next;
    }
    RelayOutcome::Delivered(trace)
}

/// Forwards `pkt` and records its hop trace (and delivery tick when it
/// arrives; transmission completes within the tick it was created).
pub fn relay_packet(pkt: &mut Packet, tables: &[RoutingTable], graph: &LinkGraph) -> RelayOutcome {
    let outcome = relay(pkt.src, pkt.dst, tables, graph);
    pkt.hop_trace = outcome.trace().to_vec();
    if outcome.is_delivered() {
        pkt.delivered_tick = Some(pkt.created_tick);
    }
    outcome
}

/// Hop sequence an agent→base packet would take now, or None if it would be
/// dropped.
pub fn current_path(
    agent: NodeId,
    base: NodeId,
    tables: &[RoutingTable],
    graph: &LinkGraph,
) -> Option<Vec<NodeId>> {
    match relay(agent, base, tables, graph) {
        RelayOutcome::Delivered(t) => Some(t),
        RelayOutcome::Dropped { .. } => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborReport {
    pub position: Vec2,
    pub tick: u64,
}

/// Positions most recently heard from one-hop neighbors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborSnapshot {
    pub entries: BTreeMap<NodeId, NeighborReport>,
}

impl NeighborSnapshot {
    pub fn position(&self, id: NodeId) -> Option<Vec2> {
        self.entries.get(&id).map(|r| r.position)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Every node learns the reported positions of exactly its one-hop neighbors.
pub fn gossip_positions(reported: &[Vec2], graph: &LinkGraph, now: u64) -> Vec<NeighborSnapshot> {
    (0..graph.node_count())
        .map(|i| NeighborSnapshot {
            entries: graph
                .neighbors(NodeId(i as u16))
                .map(|j| {
                    (
                        j,
                        NeighborReport {
                            position: reported[j.index()],
                            tick: now,
                        },
                    )
                })
                .collect(),
        })
        .collect()
}
