//! Deterministic discrete-event executor.
//!
//! Events are ordered by `(time, seq)`; every random draw (link jitter and
//! loss) comes from one ChaCha8 stream seeded by the scenario and consumed in
//! event order, so a scenario and seed always yield the same trace bytes.

mod scenario;
mod trace;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::protocol::{
    self, Action, Dest, Input, Message, MessageKind, NodeState, Payload, ProtocolConfig, TimerKind,
};
use crate::time::{SimDuration, SimTime};
use crate::topology::{NodeId, Topology};

pub use scenario::{DelayModel, FaultSpec, Scenario, ScenarioError, ScheduledFault};
pub use trace::{
    routing_details, RoutingSnapshot, Trace, TraceEvent, TraceRecord, SNAPSHOT_MARKER,
};

#[derive(Debug, Clone, PartialEq)]
enum Event {
    Deliver { to: NodeId, msg: Message },
    Timer { node: NodeId, kind: TimerKind },
    Fault(FaultSpec),
    GenerateData { node: NodeId },
}

#[derive(Debug, Clone, Copy, Default)]
struct DataUnit {
    live_copies: u32,
    delivered: bool,
}

/// A running simulation. Most callers just use [`run`].
pub struct Simulation {
    topology: Topology,
    nodes: BTreeMap<NodeId, NodeState>,
    queue: BTreeMap<(SimTime, u64), Event>,
    next_seq: u64,
    rng: ChaCha8Rng,
    now: SimTime,
    cfg: ProtocolConfig,
    delay: DelayModel,
    horizon: SimTime,
    data_interval: Option<SimDuration>,
    data_overrides: BTreeMap<NodeId, Option<SimDuration>>,
    data_stop: SimTime,
    records: Vec<TraceRecord>,
    units: BTreeMap<(NodeId, u64), DataUnit>,
}

impl Simulation {
    pub fn new(sc: &Scenario) -> Self {
        let topology = sc.topology.clone();
        let base = topology.base_station();
        let mut nodes = BTreeMap::new();
        for id in topology.nodes() {
            nodes.insert(id, Self::fresh_node(&topology, id, id == base));
        }
        let mut sim = Self {
            topology,
            nodes,
            queue: BTreeMap::new(),
            next_seq: 0,
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            now: SimTime::ZERO,
            cfg: sc.protocol.clone(),
            delay: sc.delay.clone(),
            horizon: sc.horizon,
            data_interval: sc.data_interval,
            data_overrides: sc.data_overrides.clone(),
            data_stop: SimTime(sc.horizon.0.saturating_sub(sc.data_drain.0)),
            records: Vec::new(),
            units: BTreeMap::new(),
        };
        for f in &sc.faults {
            sim.push(f.at, Event::Fault(f.spec.clone()));
        }
        let sensors: Vec<NodeId> = sim.nodes.keys().copied().filter(|&n| n != base).collect();
        for n in sensors {
            sim.schedule_data(n, SimTime::ZERO, true);
        }
        sim.apply(base, &Input::StartBeacon);
        sim
    }

    fn fresh_node(topology: &Topology, id: NodeId, is_base: bool) -> NodeState {
        let mut s = NodeState::new(id, is_base);
        s.position = topology.position(id);
        for n in topology.neighbors(id) {
            if let Some(p) = topology.position(n) {
                s.neighbor_positions.insert(n, p);
            }
        }
        s
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeState> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeState> + '_ {
        self.nodes.values()
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Routing fields of every alive node right now.
    pub fn snapshot(&self) -> RoutingSnapshot {
        RoutingSnapshot {
            nodes: self
                .nodes
                .values()
                .filter(|s| s.alive)
                .map(|s| (s.id, s.routing()))
                .collect(),
        }
    }

    fn push(&mut self, at: SimTime, ev: Event) {
        self.queue.insert((at, self.next_seq), ev);
        self.next_seq += 1;
    }

    fn record(&mut self, node: NodeId, event: TraceEvent, details: impl Into<String>) {
        self.records.push(TraceRecord {
            time: self.now,
            node,
            event,
            details: details.into(),
        });
    }

    fn schedule_data(&mut self, node: NodeId, from: SimTime, first: bool) {
        let cadence = match self.data_overrides.get(&node) {
            Some(c) => *c,
            None => self.data_interval,
        };
        let Some(every) = cadence else {
            return;
        };
        // Spread first readings by id so sensors do not fire together.
        let offset = if first {
            SimDuration(every.0 * u64::from(node.0 % 16) / 16)
        } else {
            SimDuration::ZERO
        };
        let at = from + every + offset;
        if at <= self.data_stop {
            self.push(at, Event::GenerateData { node });
        }
    }

    /// Processes every event up to and including `until`.
    pub fn run_until(&mut self, until: SimTime) {
        let until = until.min(self.horizon);
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > until {
                break;
            }
            let ((at, _), ev) = entry.remove_entry();
            self.now = at;
            self.dispatch(ev);
        }
        self.now = self.now.max(until);
    }

    /// Applies a fault at the current time, outside the schedule.
    pub fn inject_fault(&mut self, spec: &FaultSpec) {
        self.dispatch(Event::Fault(spec.clone()));
    }

    /// Runs to the horizon and closes the trace with the final snapshot.
    pub fn finish(mut self) -> Trace {
        self.run_until(self.horizon);
        self.now = self.horizon;
        let held: Vec<(NodeId, u64)> = self
            .units
            .iter()
            .filter(|(_, u)| !u.delivered && u.live_copies > 0)
            .map(|(&k, _)| k)
            .collect();
        for (origin, seq) in held {
            self.record(
                origin,
                TraceEvent::Held,
                format!("origin={origin} seq={seq}"),
            );
        }
        let snapshot = self.snapshot();
        Trace {
            records: self.records,
            snapshot: Some(snapshot),
        }
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Deliver { to, msg } => self.deliver(to, msg),
            Event::Timer { node, kind } => {
                let live = self
                    .nodes
                    .get(&node)
                    .is_some_and(|s| s.alive && s.timers.get(&kind) == Some(&self.now));
                if live {
                    self.record(node, TraceEvent::Timer, kind.name());
                    self.apply(node, &Input::Timer(kind));
                }
            }
            Event::GenerateData { node } => {
                if self.nodes.get(&node).is_some_and(|s| s.alive) {
                    self.apply(node, &Input::GenerateData);
                }
                self.schedule_data(node, self.now, false);
            }
            Event::Fault(spec) => self.fault(&spec),
        }
    }

    fn deliver(&mut self, to: NodeId, msg: Message) {
        let alive = |n: NodeId| self.nodes.get(&n).is_some_and(|s| s.alive);
        if !alive(to) || !alive(msg.src) {
            self.drop_message(to, &msg, "node_dead");
            return;
        }
        self.record(to, TraceEvent::Recv, msg.to_string());
        self.apply(to, &Input::Receive(msg));
    }

    fn drop_message(&mut self, at: NodeId, msg: &Message, reason: &str) {
        self.record(at, TraceEvent::Drop, format!("{reason} {msg}"));
        if let Payload::Data(p) = &msg.payload {
            self.record(
                at,
                TraceEvent::DataDrop,
                format!("origin={} seq={} reason={reason}", p.origin, p.seq),
            );
            self.lose_copy(p.origin, p.seq);
        }
    }

    fn lose_copy(&mut self, origin: NodeId, seq: u64) {
        if let Some(u) = self.units.get_mut(&(origin, seq)) {
            u.live_copies = u.live_copies.saturating_sub(1);
        }
    }

    fn apply(&mut self, node: NodeId, input: &Input) {
        let Some(state) = self.nodes.get(&node) else {
            return;
        };
        let before = state.routing();
        let t = protocol::step(state, input, self.now, &self.cfg);
        let after = t.state.routing();
        self.nodes.insert(node, t.state);
        if before != after {
            self.record(node, TraceEvent::State, routing_details(&after));
        }
        for a in t.actions {
            self.act(node, a);
        }
    }

    fn act(&mut self, node: NodeId, action: Action) {
        match action {
            Action::Send(m) => self.transmit(node, m),
            Action::Arm(kind, at) => self.push(at, Event::Timer { node, kind }),
            Action::DataCreated { seq, copies } => {
                self.units.insert(
                    (node, seq),
                    DataUnit {
                        live_copies: copies,
                        delivered: false,
                    },
                );
                self.record(
                    node,
                    TraceEvent::DataGen,
                    format!("origin={node} seq={seq} copies={copies}"),
                );
            }
            Action::DataDelivered { origin, seq } => {
                if let Some(u) = self.units.get_mut(&(origin, seq)) {
                    u.live_copies = u.live_copies.saturating_sub(1);
                    u.delivered = true;
                }
                self.record(
                    node,
                    TraceEvent::DataDeliver,
                    format!("origin={origin} seq={seq}"),
                );
            }
            Action::DataDropped {
                origin,
                seq,
                reason,
            } => {
                self.lose_copy(origin, seq);
                self.record(
                    node,
                    TraceEvent::DataDrop,
                    format!("origin={origin} seq={seq} reason={}", reason.name()),
                );
            }
            Action::ParentSwitched { from, to } => {
                self.record(node, TraceEvent::Switch, format!("from={from} to={to}"))
            }
            Action::Ignored(why) => self.record(node, TraceEvent::Note, why),
            Action::MetricFallback => self.record(
                node,
                TraceEvent::Note,
                "location metric without positions, using hops",
            ),
        }
    }

    fn transmit(&mut self, from: NodeId, msg: Message) {
        self.record(from, TraceEvent::Send, msg.to_string());
        let recipients: Vec<NodeId> = match msg.dst {
            Dest::Broadcast => self
                .topology
                .neighbors(from)
                .filter(|n| self.nodes.get(n).is_some_and(|s| s.alive))
                .collect(),
            Dest::Node(to) => {
                if !self.topology.are_adjacent(from, to) {
                    self.drop_message(to, &msg, "out_of_range");
                    return;
                }
                vec![to]
            }
        };
        for to in recipients {
            let lost = self.rng.gen::<f64>() < self.delay.loss_probability;
            let extra = if self.delay.jitter.0 > 0 {
                self.rng.gen_range(0..=self.delay.jitter.0)
            } else {
                0
            };
            if lost {
                self.drop_message(to, &msg, "lost");
                continue;
            }
            let at = self.now + self.delay.base_latency + SimDuration(extra);
            self.push(
                at,
                Event::Deliver {
                    to,
                    msg: msg.clone(),
                },
            );
        }
    }

    fn fail_node(&mut self, id: NodeId, details: String) {
        let Some(s) = self.nodes.get_mut(&id) else {
            return;
        };
        if !s.alive {
            return;
        }
        s.alive = false;
        let lost: Vec<(NodeId, u64)> = s.buffer.drain(..).map(|p| (p.origin, p.seq)).collect();
        self.record(id, TraceEvent::Fail, details);
        for (origin, seq) in lost {
            self.lose_copy(origin, seq);
            self.record(
                id,
                TraceEvent::DataDrop,
                format!("origin={origin} seq={seq} reason=node_dead"),
            );
        }
    }

    fn fault(&mut self, spec: &FaultSpec) {
        match *spec {
            FaultSpec::NodeFail { id } => self.fail_node(id, String::new()),
            FaultSpec::AreaFail { cx, cy, radius } => {
                let centre = crate::scalar::Point::new(cx, cy);
                let victims: Vec<NodeId> = self
                    .nodes
                    .values()
                    .filter(|s| s.alive)
                    .filter(|s| {
                        self.topology
                            .position(s.id)
                            .is_some_and(|p| p.distance(&centre) <= radius)
                    })
                    .map(|s| s.id)
                    .collect();
                for v in victims {
                    self.fail_node(v, format!("area {cx} {cy} {radius}"));
                }
            }
            FaultSpec::NodeRecover { id } => {
                let Some(s) = self.nodes.get_mut(&id) else {
                    return;
                };
                if s.alive {
                    self.record(id, TraceEvent::Note, "recover ignored, node is alive");
                    return;
                }
                s.alive = true;
                self.record(id, TraceEvent::Recover, "");
                self.apply(id, &Input::Recover);
            }
            FaultSpec::NodeJoin { id, x, y, range } => {
                let placement = scenario::join_placement(id, x, y, range);
                let partners = match self.topology.add_placement(placement) {
                    Ok(p) => p,
                    Err(e) => {
                        self.record(id, TraceEvent::Note, format!("join rejected: {e}"));
                        return;
                    }
                };
                for p in &partners {
                    if let Some(s) = self.nodes.get_mut(p) {
                        s.neighbor_positions.insert(id, placement.pos);
                    }
                }
                self.nodes
                    .insert(id, Self::fresh_node(&self.topology, id, false));
                self.record(id, TraceEvent::Join, format!("x={x} y={y} range={range}"));
                self.apply(id, &Input::Join);
                self.schedule_data(id, self.now, true);
            }
        }
    }
}

/// Runs a scenario to its horizon.
pub fn run(sc: &Scenario) -> Trace {
    Simulation::new(sc).finish()
}

/// Whether a record counts as routing activity for quiescence.
fn is_activity(r: &TraceRecord, request_streak: &mut BTreeMap<NodeId, u32>) -> bool {
    // An orphan that keeps asking with no answer is in a steady state once
    // it has sent this many unanswered REQUESTs.
    const STEADY_RESENDS: u32 = 3;
    match r.event {
        TraceEvent::State | TraceEvent::Fail | TraceEvent::Recover | TraceEvent::Join => {
            request_streak.remove(&r.node);
            true
        }
        TraceEvent::Send => match r.message_kind() {
            Some(MessageKind::Request) => {
                let n = request_streak.entry(r.node).or_insert(0);
                *n += 1;
                *n <= STEADY_RESENDS
            }
            Some(k) => k.is_repair(),
            None => false,
        },
        _ => false,
    }
}

/// Routing activity times at or after `from`.
pub fn activity_times(trace: &Trace, from: SimTime) -> Vec<SimTime> {
    let mut streak = BTreeMap::new();
    trace
        .records
        .iter()
        .filter(|r| is_activity(r, &mut streak))
        .map(|r| r.time)
        .filter(|&t| t >= from)
        .collect()
}

/// First time at or after `from` followed by `settle` of routing silence
/// that fits before `horizon`. Silence means no REQUEST, REPLY, PENDING or
/// BACK_N transmissions and no routing field changes; an orphan repeating
/// an unanswered REQUEST counts as silent after its third try.
pub fn quiesce(
    trace: &Trace,
    from: SimTime,
    settle: SimDuration,
    horizon: SimTime,
) -> Option<SimTime> {
    let mut candidate = from;
    for t in activity_times(trace, from) {
        if t.saturating_since(candidate) > settle {
            break;
        }
        candidate = t;
    }
    (candidate + settle <= horizon).then_some(candidate)
}
