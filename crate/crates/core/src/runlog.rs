//! Run orchestration, log emission and packet-log summaries.
//!
//! Every CSV log starts with one `#` line that names the log kind and its
//! schema version, then a header row, then LF-terminated rows in tick order.

use crate::mesh::{DropReason, NodeId};
use crate::scenario::Scenario;
use crate::sim::metrics::Metrics;
use crate::sim::{NodeRecord, Simulation, TickOutput};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const PACKETS_FILE: &str = "packets.csv";
pub const MODES_FILE: &str = "modes.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const RESOLVED_SCENARIO_FILE: &str = "scenario.resolved.toml";

pub const TRAJECTORY_HEADER: &str = "tick,time,id,x,y,heading,mode,on_path";
pub const PACKETS_HEADER: &str = "seq,tick,time,src,dst,delivered,drop_reason,hops,hop_trace";
pub const MODES_HEADER: &str = "tick,time,id,mode,predecessor,successor,tasks";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to encode metrics: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported log: {0}")]
    Schema(String),
}

/// Simulated times at which the mission reached its milestones.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseTiming {
    /// Index of the waypoint farthest along the path from the base.
    pub farthest_waypoint: usize,
    pub farthest_path_distance: f64,
    pub outbound_complete: Option<f64>,
    pub mission_complete: Option<f64>,
    pub simulated_duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub metrics: Metrics,
    pub phases: PhaseTiming,
    /// Fully resolved scenario, including any CLI overrides.
    pub config: Scenario,
}

/// The four logs of a run, fully rendered.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunLogs {
    pub trajectory: String,
    pub packets: String,
    pub modes: String,
    pub metrics: String,
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    schema_version: u32,
    scenario: &'a str,
    seed: u64,
    dt: f64,
    ticks: u64,
    delivery_ratio: f64,
    phases: &'a PhaseTiming,
    metrics: &'a Metrics,
}

/// Runs the scenario for its full duration and keeps the logs in memory.
pub fn run_in_memory(scenario: &Scenario) -> Result<(RunReport, RunLogs), RunError> {
    let dt = scenario.sim.dt;
    let mut sim = Simulation::new(scenario.clone());
    let mut writer = LogWriter::new(dt);
    for _ in 0..scenario.tick_count() {
        let out = sim.step();
        writer.push(&out);
    }
    let phases = phase_timing(&sim);
    let metrics = sim.metrics().clone();
    let doc = MetricsDocument {
        schema_version: SCHEMA_VERSION,
        scenario: &scenario.name,
        seed: scenario.sim.seed,
        dt,
        ticks: metrics.ticks,
        delivery_ratio: metrics.delivery_ratio(),
        phases: &phases,
        metrics: &metrics,
    };
    let mut logs = writer.finish();
    logs.metrics = serde_json::to_string_pretty(&doc)? + "\n";
    let report = RunReport {
        metrics,
        phases,
        config: scenario.clone(),
    };
    Ok((report, logs))
}

/// Runs the scenario and writes all logs plus the resolved scenario into
/// `output_dir`, creating it if needed.
pub fn run(scenario: &Scenario, output_dir: &Path) -> Result<RunReport, RunError> {
    let (report, logs) = run_in_memory(scenario)?;
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(output_dir).map_err(io(output_dir))?;
    let files = [
        (TRAJECTORY_FILE, logs.trajectory.as_str()),
        (PACKETS_FILE, logs.packets.as_str()),
        (MODES_FILE, logs.modes.as_str()),
        (METRICS_FILE, logs.metrics.as_str()),
        (RESOLVED_SCENARIO_FILE, &scenario.to_toml()),
    ];
    for (name, body) in files {
        let path = output_dir.join(name);
        std::fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(report)
}

fn phase_timing(sim: &Simulation) -> PhaseTiming {
    let scenario = sim.scenario();
    let gauge = sim.path_gauge();
    let (farthest_waypoint, farthest_path_distance) = scenario
        .agent
        .waypoints
        .iter()
        .enumerate()
        .map(|(i, w)| (i, gauge.distance(*w)))
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    let reached = &sim.metrics().waypoints_reached;
    let outbound_complete = reached
        .iter()
        .find(|w| w.index == farthest_waypoint)
        .map(|w| w.time);
    let last = scenario.agent.waypoints.len() - 1;
    let mission_complete = sim
        .agent_mode()
        .mission_complete
        .then(|| {
            reached
                .iter()
                .rev()
                .find(|w| w.index == last)
                .map(|w| w.time)
        })
        .flatten();
    PhaseTiming {
        farthest_waypoint,
        farthest_path_distance,
        outbound_complete,
        mission_complete,
        simulated_duration: sim.state().time(scenario.sim.dt),
    }
}

fn fmt_opt(id: Option<NodeId>) -> String {
    id.map(|n| n.to_string()).unwrap_or_default()
}

fn join_ids(ids: &[NodeId]) -> String {
    ids.iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Incremental CSV renderer fed one tick at a time.
pub struct LogWriter {
    trajectory: String,
    packets: String,
    modes: String,
    last_mode: Vec<Option<String>>,
}

impl LogWriter {
    pub fn new(dt: f64) -> Self {
        let head = |kind: &str, header: &str| {
            format!("# relaychain {kind} schema_version={SCHEMA_VERSION} dt={dt}\n{header}\n")
        };
        Self {
            trajectory: head("trajectory", TRAJECTORY_HEADER),
            packets: head("packets", PACKETS_HEADER),
            modes: head("modes", MODES_HEADER),
            last_mode: vec![],
        }
    }

    pub fn push(&mut self, out: &TickOutput) {
        let (tick, time) = (out.tick, out.time);
        if self.last_mode.len() < out.nodes.len() {
            self.last_mode.resize(out.nodes.len(), None);
        }
        for rec in &out.nodes {
            let p = rec.pose.position;
            let _ = writeln!(
                self.trajectory,
                "{tick},{time:.3},{},{:.6},{:.6},{:.6},{},{}",
                rec.id, p.x, p.y, rec.pose.heading, rec.mode, rec.on_path as u8
            );
            self.push_mode(tick, time, rec);
        }
        let pkt = &out.packet;
        let reason = pkt.drop_reason.map(DropReason::as_str).unwrap_or("");
        let src = pkt.hop_trace.first().copied().unwrap_or(NodeId(0));
        let _ = writeln!(
            self.packets,
            "{},{},{time:.3},{src},0,{},{reason},{},{}",
            pkt.seq,
            pkt.created_tick,
            pkt.delivered() as u8,
            pkt.hop_trace.len().saturating_sub(1),
            join_ids(&pkt.hop_trace)
        );
    }

    /// Mode rows are emitted only when a node's mode, route neighbours or
    /// active task stack change.
    fn push_mode(&mut self, tick: u64, time: f64, rec: &NodeRecord) {
        let tasks = rec
            .tasks
            .iter()
            .map(|k| k.as_str())
            .collect::<Vec<_>>()
            .join("+");
        let body = format!(
            "{},{},{},{}",
            rec.mode,
            fmt_opt(rec.predecessor),
            fmt_opt(rec.successor),
            tasks
        );
        let slot = &mut self.last_mode[rec.id.index()];
        if slot.as_deref() == Some(body.as_str()) {
            return;
        }
        let _ = writeln!(self.modes, "{tick},{time:.3},{},{body}", rec.id);
        *slot = Some(body);
    }

    pub fn finish(self) -> RunLogs {
        RunLogs {
            trajectory: self.trajectory,
            packets: self.packets,
            modes: self.modes,
            metrics: String::new(),
        }
    }
}

/// One parsed row of a packet log.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRow {
    pub seq: u64,
    pub tick: u64,
    pub time: f64,
    pub src: NodeId,
    pub dst: NodeId,
    pub drop_reason: Option<DropReason>,
    pub hop_trace: Vec<NodeId>,
}

impl PacketRow {
    pub fn delivered(&self) -> bool {
        self.drop_reason.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketLog {
    pub dt: f64,
    pub rows: Vec<PacketRow>,
}

fn parse_preamble(line: &str, kind: &str) -> Result<f64, LogError> {
    let mut parts = line
        .strip_prefix("# relaychain ")
        .map(str::split_whitespace)
        .ok_or_else(|| LogError::Schema("missing '# relaychain' schema line".into()))?;
    if parts.next() != Some(kind) {
        return Err(LogError::Schema(format!("expected a {kind} log")));
    }
    let mut version = None;
    let mut dt = None;
    for kv in parts {
        match kv.split_once('=') {
            Some(("schema_version", v)) => version = v.parse::<u32>().ok(),
            Some(("dt", v)) => dt = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    match version {
        Some(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(LogError::Schema(format!(
                "schema_version {v} is not supported"
            )))
        }
        None => return Err(LogError::Schema("missing schema_version".into())),
    }
    dt.filter(|d| *d > 0.0)
        .ok_or_else(|| LogError::Schema("missing or invalid dt".into()))
}

pub fn parse_packet_log(text: &str) -> Result<PacketLog, LogError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| LogError::Schema("empty log".into()))?;
    let dt = parse_preamble(first, "packets")?;
    match lines.next() {
        Some((_, h)) if h == PACKETS_HEADER => {}
        Some((i, _)) => {
            return Err(LogError::Malformed {
                line: i + 1,
                message: format!("expected header '{PACKETS_HEADER}'"),
            })
        }
        None => return Err(LogError::Schema("missing header".into())),
    }
    let mut rows = vec![];
    for (i, line) in lines {
        let bad = |message: String| LogError::Malformed {
            line: i + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(format!("expected 9 fields, found {}", f.len())));
        }
        let num = |idx: usize, name: &str| {
            f[idx]
                .parse::<u64>()
                .map_err(|_| bad(format!("invalid {name} '{}'", f[idx])))
        };
        let node = |idx: usize, name: &str| {
            f[idx]
                .parse::<u16>()
                .map(NodeId)
                .map_err(|_| bad(format!("invalid {name} '{}'", f[idx])))
        };
        let drop_reason = match (f[5], f[6]) {
            ("1", "") => None,
            ("0", r) => Some(
                DropReason::parse(r).ok_or_else(|| bad(format!("unknown drop reason '{r}'")))?,
            ),
            _ => return Err(bad("inconsistent delivered/drop_reason".into())),
        };
        let hop_trace = if f[8].is_empty() {
            vec![]
        } else {
            f[8].split(';')
                .map(|s| s.parse::<u16>().map(NodeId))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("invalid hop_trace '{}'", f[8])))?
        };
        rows.push(PacketRow {
            seq: num(0, "seq")?,
            tick: num(1, "tick")?,
            time: f[2]
                .parse()
                .map_err(|_| bad(format!("invalid time '{}'", f[2])))?,
            src: node(3, "src")?,
            dst: node(4, "dst")?,
            drop_reason,
            hop_trace,
        });
    }
    Ok(PacketLog { dt, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossWindow {
    pub start: f64,
    pub end: f64,
    pub sent: u64,
    pub dropped: u64,
    /// Drops from the start of the run up to the end of this window.
    pub cumulative_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossSeries {
    pub window: f64,
    pub windows: Vec<LossWindow>,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

pub const DEFAULT_SUMMARY_WINDOW: f64 = 10.0;

/// Packet loss per fixed window of simulated time, plus running totals.
/// Windows cover the whole log, so empty stretches show as zero.
pub fn summarize(log: &PacketLog, window: f64) -> LossSeries {
    let window_ticks = ((window / log.dt).round() as u64).max(1);
    let window = window_ticks as f64 * log.dt;
    let count = log
        .rows
        .iter()
        .map(|r| r.tick / window_ticks + 1)
        .max()
        .unwrap_or(0) as usize;
    let mut windows: Vec<LossWindow> = (0..count)
        .map(|k| LossWindow {
            start: k as f64 * window,
            end: (k + 1) as f64 * window,
            sent: 0,
            dropped: 0,
            cumulative_dropped: 0,
        })
        .collect();
    let mut delivered = 0;
    for r in &log.rows {
        let w = &mut windows[(r.tick / window_ticks) as usize];
        w.sent += 1;
        if r.delivered() {
            delivered += 1;
        } else {
            w.dropped += 1;
        }
    }
    let mut acc = 0;
    for w in &mut windows {
        acc += w.dropped;
        w.cumulative_dropped = acc;
    }
    LossSeries {
        window,
        windows,
        sent: log.rows.len() as u64,
        delivered,
        dropped: acc,
    }
}

impl LossSeries {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# relaychain loss schema_version={SCHEMA_VERSION} window={}\nstart,end,sent,dropped,cumulative_dropped\n",
            self.window
        );
        for w in &self.windows {
            let _ = writeln!(
                s,
                "{:.3},{:.3},{},{},{}",
                w.start, w.end, w.sent, w.dropped, w.cumulative_dropped
            );
        }
        s
    }
}
