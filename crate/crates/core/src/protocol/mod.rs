//! Per-node routing state machine.
//!
//! Every node probes its parent with FORWARD and expects BACK_Y (parent
//! connected, with its hop count) or BACK_N (parent cut off, with the
//! distance to the break). Silence past `timeout_ppt` means the parent is
//! gone: the node broadcasts REQUEST, tells its children with PENDING and
//! picks a new parent among the neighbours that REPLY. PENDING travels down
//! the tree faster than refreshed hop counts travel up a FORWARD/BACK round
//! trip, which starves routing loops formed from stale replies.
//!
//! Handlers are pure: [`step`] maps `(state, input, now)` to the next state
//! plus the actions the engine must carry out. Timers live inside the state
//! as deadlines; an expiry whose deadline no longer matches is stale.

pub mod config;
pub mod message;
pub mod metric;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::scalar::Point;
use crate::time::SimTime;
use crate::topology::NodeId;

pub use config::{Metric, ProtocolConfig};
pub use message::{DataPacket, Dest, Hops, Message, MessageKind, Payload};
pub use metric::{best_candidate, metric_score, MetricView, ParentCandidate, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerKind {
    /// Periodic FORWARD to the parent.
    Probe,
    /// Deadline for the BACK answering the last FORWARD.
    Ppt,
    /// Periodic REQUEST while looking for a parent.
    RequestResend,
    /// Delayed REQUEST after BACK_N, or after exceeding `max_hops`.
    Backoff,
    PendingForward,
    /// End of the REPLY gathering window.
    ReplyWindow,
    JoinRetry,
    /// End of the JOIN_INFO gathering window.
    JoinWindow,
    /// Give-up deadline for a two-copy parent switch race.
    SwitchRace,
}

impl TimerKind {
    pub fn name(self) -> &'static str {
        match self {
            TimerKind::Probe => "probe",
            TimerKind::Ppt => "ppt",
            TimerKind::RequestResend => "request_resend",
            TimerKind::Backoff => "backoff",
            TimerKind::PendingForward => "pending_forward",
            TimerKind::ReplyWindow => "reply_window",
            TimerKind::JoinRetry => "join_retry",
            TimerKind::JoinWindow => "join_window",
            TimerKind::SwitchRace => "switch_race",
        }
    }
}

impl fmt::Display for TimerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    BufferFull,
    Ttl,
    NodeDead,
    Lost,
}

impl DropReason {
    pub fn name(self) -> &'static str {
        match self {
            DropReason::BufferFull => "buffer_full",
            DropReason::Ttl => "ttl",
            DropReason::NodeDead => "node_dead",
            DropReason::Lost => "lost",
        }
    }
}

/// An in-progress two-copy race towards a neighbour advertising a shorter
/// path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchRace {
    pub neighbor: NodeId,
    pub neighbor_hops: u32,
    pub parent: NodeId,
    pub seq: u64,
}

/// Everything one sensor node knows.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub is_base: bool,
    pub alive: bool,
    pub parent: Option<NodeId>,
    pub hops: Hops,
    pub broken_hops: u32,
    pub pending: bool,
    pub pending_hops: u32,
    pub neighbors: BTreeSet<NodeId>,
    /// Child id and the time of its last FORWARD.
    pub children: BTreeMap<NodeId, SimTime>,
    pub request_senders: BTreeSet<NodeId>,
    pub position: Option<Point<f64>>,
    pub neighbor_positions: BTreeMap<NodeId, Point<f64>>,
    /// Neighbour and the time its failure was detected.
    pub recent_failed_neighbors: BTreeMap<NodeId, SimTime>,
    /// Armed timers and their deadlines.
    pub timers: BTreeMap<TimerKind, SimTime>,
    pub beacon_seen: bool,
    pub candidates: BTreeMap<NodeId, ParentCandidate>,
    pub joining: bool,
    pub join_offers: BTreeMap<NodeId, u32>,
    pub buffer: VecDeque<DataPacket>,
    pub next_seq: u64,
    pub race: Option<SwitchRace>,
}

impl NodeState {
    pub fn new(id: NodeId, is_base: bool) -> Self {
        Self {
            id,
            is_base,
            alive: true,
            parent: None,
            hops: if is_base {
                Hops::Finite(0)
            } else {
                Hops::Infinite
            },
            broken_hops: 0,
            pending: false,
            pending_hops: 0,
            neighbors: BTreeSet::new(),
            children: BTreeMap::new(),
            request_senders: BTreeSet::new(),
            position: None,
            neighbor_positions: BTreeMap::new(),
            recent_failed_neighbors: BTreeMap::new(),
            timers: BTreeMap::new(),
            beacon_seen: false,
            candidates: BTreeMap::new(),
            joining: false,
            join_offers: BTreeMap::new(),
            buffer: VecDeque::new(),
            next_seq: 0,
            race: None,
        }
    }

    pub fn with_neighbors(mut self, neighbors: impl IntoIterator<Item = NodeId>) -> Self {
        self.neighbors.extend(neighbors);
        self
    }

    pub fn is_connected(&self) -> bool {
        self.hops.is_finite() && !self.pending
    }

    pub fn timer_armed(&self, kind: TimerKind) -> bool {
        self.timers.contains_key(&kind)
    }

    pub fn routing(&self) -> RoutingFields {
        RoutingFields {
            parent: self.parent,
            hops: self.hops,
            broken_hops: self.broken_hops,
            pending: self.pending,
        }
    }

    fn is_fresh_child(&self, n: NodeId, now: SimTime, cfg: &ProtocolConfig) -> bool {
        self.children
            .get(&n)
            .is_some_and(|&seen| now - seen <= cfg.child_timeout())
    }

    fn metric_view(&self, now: SimTime, cfg: &ProtocolConfig) -> MetricView {
        let failed_positions = self
            .recent_failed_neighbors
            .iter()
            .filter(|(_, &t)| now - t <= cfg.failure_memory)
            .filter_map(|(n, _)| self.neighbor_positions.get(n).copied())
            .collect();
        MetricView {
            position: self.position,
            failed_positions,
        }
    }
}

/// The observable routing fields of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutingFields {
    pub parent: Option<NodeId>,
    pub hops: Hops,
    pub broken_hops: u32,
    pub pending: bool,
}

/// What can happen to a node.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    /// The base station starts the beacon flood.
    StartBeacon,
    Receive(Message),
    Timer(TimerKind),
    GenerateData,
    /// A freshly deployed node starts looking for a parent.
    Join,
    /// A repaired node comes back with blank routing state.
    Recover,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Send(Message),
    Arm(TimerKind, SimTime),
    /// A new data unit was created with this many copies in flight.
    DataCreated {
        seq: u64,
        copies: u32,
    },
    /// A copy reached the base station.
    DataDelivered {
        origin: NodeId,
        seq: u64,
    },
    DataDropped {
        origin: NodeId,
        seq: u64,
        reason: DropReason,
    },
    ParentSwitched {
        from: NodeId,
        to: NodeId,
    },
    /// Input deliberately ignored; the reason goes to the trace.
    Ignored(&'static str),
    /// LOCATION metric requested without positions.
    MetricFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: NodeState,
    pub actions: Vec<Action>,
}

struct Cx<'a> {
    now: SimTime,
    cfg: &'a ProtocolConfig,
    out: Vec<Action>,
}

impl Cx<'_> {
    fn send(&mut self, m: Message) {
        self.out.push(Action::Send(m));
    }
}

/// Applies one input to a node. Dead nodes ignore everything.
pub fn step(state: &NodeState, input: &Input, now: SimTime, cfg: &ProtocolConfig) -> Transition {
    let mut s = state.clone();
    let mut cx = Cx {
        now,
        cfg,
        out: Vec::new(),
    };
    if s.alive {
        s.apply(&mut cx, input);
    }
    Transition {
        state: s,
        actions: cx.out,
    }
}

impl NodeState {
    fn arm(&mut self, cx: &mut Cx, kind: TimerKind, after: crate::time::SimDuration) {
        let at = cx.now + after;
        self.timers.insert(kind, at);
        cx.out.push(Action::Arm(kind, at));
    }

    fn arm_if_idle(&mut self, cx: &mut Cx, kind: TimerKind, after: crate::time::SimDuration) {
        if !self.timer_armed(kind) {
            self.arm(cx, kind, after);
        }
    }

    fn cancel(&mut self, kind: TimerKind) {
        self.timers.remove(&kind);
    }

    fn apply(&mut self, cx: &mut Cx, input: &Input) {
        match input {
            Input::StartBeacon => self.start_beacon(cx),
            Input::Receive(m) => self.receive(cx, m),
            Input::Timer(kind) => self.timer(cx, *kind),
            Input::GenerateData => self.generate_data(cx),
            Input::Join => self.start_join(cx),
            Input::Recover => self.recover(cx),
        }
    }

    fn receive(&mut self, cx: &mut Cx, m: &Message) {
        if m.src == self.id {
            return;
        }
        self.neighbors.insert(m.src);
        match &m.payload {
            Payload::Beacon { hops } => self.on_beacon(cx, m.src, *hops),
            Payload::Forward => self.on_forward(cx, m.src),
            Payload::BackY { hops } => self.on_back_y(cx, m.src, *hops),
            Payload::BackN { broken_hops } => self.on_back_n(cx, m.src, *broken_hops),
            Payload::Request => self.on_request(cx, m.src),
            Payload::Reply { hops, parent } => self.on_reply(cx, m.src, *hops, *parent),
            Payload::Pending { pending_hops } => self.on_pending(cx, m.src, *pending_hops),
            Payload::Data(p) => self.forward_data(cx, p.clone()),
            Payload::DataAck {
                origin,
                seq,
                via,
                route,
            } => self.on_data_ack(cx, *origin, *seq, *via, route),
            Payload::JoinProbe => self.on_join_probe(cx, m.src),
            Payload::JoinInfo { hops } => self.on_join_info(cx, m.src, *hops, m.dst),
        }
    }

    fn timer(&mut self, cx: &mut Cx, kind: TimerKind) {
        if self.timers.get(&kind) != Some(&cx.now) {
            return;
        }
        self.timers.remove(&kind);
        match kind {
            TimerKind::Probe => self.probe_parent(cx),
            TimerKind::Ppt => self.on_ppt_timeout(cx),
            TimerKind::RequestResend => self.on_request_resend(cx),
            TimerKind::Backoff => self.on_backoff(cx),
            TimerKind::PendingForward => self.on_pending_forward(cx),
            TimerKind::ReplyWindow => self.on_reply_window(cx),
            TimerKind::JoinRetry => self.on_join_retry(cx),
            TimerKind::JoinWindow => self.on_join_window(cx),
            TimerKind::SwitchRace => self.race = None,
        }
    }

    // ---- beacon bootstrap ----

    fn start_beacon(&mut self, cx: &mut Cx) {
        if !self.is_base {
            cx.out
                .push(Action::Ignored("only the base station starts the beacon"));
            return;
        }
        self.beacon_seen = true;
        cx.send(Message::broadcast(self.id, Payload::Beacon { hops: 0 }));
    }

    fn on_beacon(&mut self, cx: &mut Cx, from: NodeId, hops: u32) {
        if self.is_base || self.beacon_seen {
            return;
        }
        self.beacon_seen = true;
        self.parent = Some(from);
        self.hops = self.bounded_hops(cx, hops);
        cx.send(Message::broadcast(
            self.id,
            Payload::Beacon { hops: hops + 1 },
        ));
        // Spread first probes over one interval so nodes do not probe in lockstep.
        let phase = cx.cfg.probe_interval.as_micros() * u64::from(self.id.0 % 16) / 16;
        let first = cx.cfg.probe_interval + crate::time::SimDuration(phase);
        self.arm(cx, TimerKind::Probe, first);
    }

    fn bounded_hops(&self, cx: &Cx, parent_hops: u32) -> Hops {
        let h = parent_hops.saturating_add(1);
        if h >= cx.cfg.max_hops {
            Hops::Infinite
        } else {
            Hops::Finite(h)
        }
    }

    // ---- failure detection ----

    fn probe_parent(&mut self, cx: &mut Cx) {
        if self.is_base {
            return;
        }
        let child_timeout = cx.cfg.child_timeout();
        let now = cx.now;
        self.children.retain(|_, seen| now - *seen <= child_timeout);
        match self.parent {
            Some(p) => {
                cx.send(Message::to(self.id, p, Payload::Forward));
                self.arm_if_idle(cx, TimerKind::Ppt, cx.cfg.timeout_ppt);
                self.arm(cx, TimerKind::Probe, cx.cfg.probe_interval);
            }
            None => {
                cx.send(Message::broadcast(self.id, Payload::Request));
                self.arm_if_idle(cx, TimerKind::RequestResend, cx.cfg.request_resend_timeout);
            }
        }
    }

    fn on_forward(&mut self, cx: &mut Cx, from: NodeId) {
        if self.parent != Some(from) {
            self.children.insert(from, cx.now);
        }
        let reply = match self.hops {
            Hops::Finite(h) if !self.pending => Payload::BackY { hops: h },
            _ => Payload::BackN {
                broken_hops: self.broken_hops.max(1),
            },
        };
        cx.send(Message::to(self.id, from, reply));
    }

    fn on_back_y(&mut self, cx: &mut Cx, from: NodeId, hops: u32) {
        if self.parent != Some(from) {
            cx.out
                .push(Action::Ignored("BACK_Y from a node that is not the parent"));
            return;
        }
        self.cancel(TimerKind::Ppt);
        match self.bounded_hops(cx, hops) {
            Hops::Finite(h) => {
                self.hops = Hops::Finite(h);
                self.on_connected(cx);
            }
            Hops::Infinite => {
                // Too far from the base station: unconnected, and the next
                // probe cycle starts the search.
                self.hops = Hops::Infinite;
                self.broken_hops = 1;
                if !self.timer_armed(TimerKind::RequestResend) {
                    self.arm_if_idle(cx, TimerKind::Backoff, cx.cfg.probe_interval);
                }
            }
        }
    }

    fn on_ppt_timeout(&mut self, cx: &mut Cx) {
        let Some(parent) = self.parent.take() else {
            return;
        };
        self.recent_failed_neighbors.insert(parent, cx.now);
        self.hops = Hops::Infinite;
        self.broken_hops = 1;
        self.cancel(TimerKind::Probe);
        self.cancel(TimerKind::Backoff);
        cx.send(Message::broadcast(self.id, Payload::Request));
        self.send_pending_to_children(cx, 1);
        self.arm(cx, TimerKind::RequestResend, cx.cfg.request_resend_timeout);
    }

    fn on_back_n(&mut self, cx: &mut Cx, from: NodeId, broken_hops: u32) {
        if self.parent != Some(from) {
            cx.out
                .push(Action::Ignored("BACK_N from a node that is not the parent"));
            return;
        }
        self.cancel(TimerKind::Ppt);
        self.broken_hops = broken_hops.saturating_add(1);
        self.hops = Hops::Infinite;
        self.send_pending_to_children(cx, 1);
        if !self.timer_armed(TimerKind::RequestResend) {
            let wait = cx.cfg.backn_backoff_base * u64::from(broken_hops.max(1));
            self.arm_if_idle(cx, TimerKind::Backoff, wait);
        }
    }

    fn on_backoff(&mut self, cx: &mut Cx) {
        if self.hops.is_finite() {
            return;
        }
        // Give up on the old parent; it is found again through REPLY if it
        // reconnects.
        self.parent = None;
        self.cancel(TimerKind::Probe);
        self.cancel(TimerKind::Ppt);
        cx.send(Message::broadcast(self.id, Payload::Request));
        self.arm(cx, TimerKind::RequestResend, cx.cfg.request_resend_timeout);
    }

    // ---- failure information propagation ----

    fn send_pending_to_children(&mut self, cx: &mut Cx, pending_hops: u32) {
        let now = cx.now;
        let kids: Vec<NodeId> = self
            .children
            .keys()
            .copied()
            .filter(|&c| self.is_fresh_child(c, now, cx.cfg))
            .collect();
        for c in kids {
            cx.send(Message::to(self.id, c, Payload::Pending { pending_hops }));
        }
    }

    fn on_pending(&mut self, cx: &mut Cx, from: NodeId, pending_hops: u32) {
        if self.parent != Some(from) {
            cx.out.push(Action::Ignored(
                "PENDING from a node that is not the parent",
            ));
            return;
        }
        let was_pending = self.pending;
        self.pending = true;
        self.pending_hops = pending_hops.saturating_add(1);
        self.broken_hops = self.pending_hops;
        // Forward once per pending episode; a PENDING coming round a loop
        // stops at the first node that already knows.
        if !was_pending {
            self.arm(cx, TimerKind::PendingForward, cx.cfg.pending_forward_delay);
        }
    }

    fn on_pending_forward(&mut self, cx: &mut Cx) {
        if self.pending {
            self.send_pending_to_children(cx, self.pending_hops);
        }
    }

    // ---- new parent detection ----

    fn on_request_resend(&mut self, cx: &mut Cx) {
        if self.hops.is_finite() {
            return;
        }
        cx.send(Message::broadcast(self.id, Payload::Request));
        self.arm(cx, TimerKind::RequestResend, cx.cfg.request_resend_timeout);
    }

    fn on_request(&mut self, cx: &mut Cx, from: NodeId) {
        if self.is_base {
            cx.send(Message::to(
                self.id,
                from,
                Payload::Reply {
                    hops: 0,
                    parent: self.id,
                },
            ));
            return;
        }
        if self.is_fresh_child(from, cx.now, cx.cfg) || self.parent == Some(from) {
            return;
        }
        match (self.hops, self.parent) {
            (Hops::Finite(h), Some(p)) if !self.pending => {
                cx.send(Message::to(
                    self.id,
                    from,
                    Payload::Reply { hops: h, parent: p },
                ));
            }
            _ => {
                self.request_senders.insert(from);
            }
        }
    }

    fn on_reply(&mut self, cx: &mut Cx, from: NodeId, hops: u32, parent: NodeId) {
        if self.is_base || self.hops.is_finite() || self.joining {
            return;
        }
        self.candidates.insert(
            from,
            ParentCandidate {
                neighbor: from,
                hops: Hops::Finite(hops),
                neighbor_parent: parent,
                position: self.neighbor_positions.get(&from).copied(),
            },
        );
        self.arm_if_idle(cx, TimerKind::ReplyWindow, cx.cfg.timeout_ppt);
    }

    // ---- new parent selection ----

    fn on_reply_window(&mut self, cx: &mut Cx) {
        let candidates: Vec<ParentCandidate> =
            std::mem::take(&mut self.candidates).into_values().collect();
        self.select_new_parent(cx, &candidates);
    }

    fn acceptable(&self, c: &ParentCandidate, cx: &Cx) -> bool {
        let Some(h) = c.hops.finite() else {
            return false;
        };
        c.neighbor != self.id
            && c.neighbor_parent != self.id
            && !self.is_fresh_child(c.neighbor_parent, cx.now, cx.cfg)
            && h.saturating_add(1) < cx.cfg.max_hops
    }

    fn select_new_parent(&mut self, cx: &mut Cx, candidates: &[ParentCandidate]) {
        if self.hops.is_finite() {
            return;
        }
        let survivors: Vec<&ParentCandidate> = candidates
            .iter()
            .filter(|c| self.acceptable(c, cx))
            .collect();
        let view = self.metric_view(cx.now, cx.cfg);
        match best_candidate(survivors, &view, cx.cfg) {
            Some((winner, score)) => {
                if score.fell_back {
                    cx.out.push(Action::MetricFallback);
                }
                let hops = winner.hops.finite().unwrap() + 1;
                self.adopt_parent(cx, winner.neighbor, hops);
            }
            None => {
                cx.out
                    .push(Action::Ignored("no acceptable parent candidate"));
                if self.parent.is_none() {
                    self.arm_if_idle(cx, TimerKind::RequestResend, cx.cfg.request_resend_timeout);
                }
            }
        }
    }

    fn adopt_parent(&mut self, cx: &mut Cx, parent: NodeId, hops: u32) {
        self.parent = Some(parent);
        self.hops = Hops::Finite(hops);
        self.children.remove(&parent);
        self.cancel(TimerKind::Ppt);
        // Confirm the choice at once; this also makes us the parent's child.
        cx.send(Message::to(self.id, parent, Payload::Forward));
        self.arm(cx, TimerKind::Ppt, cx.cfg.timeout_ppt);
        self.arm(cx, TimerKind::Probe, cx.cfg.probe_interval);
        self.on_connected(cx);
    }

    /// Bookkeeping common to every (re)connection.
    fn on_connected(&mut self, cx: &mut Cx) {
        self.pending = false;
        self.pending_hops = 0;
        self.broken_hops = 0;
        self.candidates.clear();
        for t in [
            TimerKind::RequestResend,
            TimerKind::Backoff,
            TimerKind::ReplyWindow,
            TimerKind::PendingForward,
        ] {
            self.cancel(t);
        }
        let (Hops::Finite(h), Some(p)) = (self.hops, self.parent) else {
            return;
        };
        for n in std::mem::take(&mut self.request_senders) {
            if n != p {
                cx.send(Message::to(
                    self.id,
                    n,
                    Payload::Reply { hops: h, parent: p },
                ));
            }
        }
        while let Some(mut packet) = self.buffer.pop_front() {
            packet.trail.push(self.id);
            cx.send(Message::to(self.id, p, Payload::Data(packet)));
        }
    }

    // ---- data ----

    fn generate_data(&mut self, cx: &mut Cx) {
        if self.is_base {
            return;
        }
        if self.pending {
            cx.out
                .push(Action::Ignored("data generation paused while pending"));
            return;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        cx.out.push(Action::DataCreated { seq, copies: 1 });
        let packet = DataPacket {
            origin: self.id,
            seq,
            via: None,
            trail: Vec::new(),
        };
        self.forward_data(cx, packet);
    }

    fn forward_data(&mut self, cx: &mut Cx, mut packet: DataPacket) {
        if self.is_base {
            cx.out.push(Action::DataDelivered {
                origin: packet.origin,
                seq: packet.seq,
            });
            let mut route: Vec<NodeId> = packet.trail.iter().rev().copied().collect();
            if !route.is_empty() {
                let next = route.remove(0);
                cx.send(Message::to(
                    self.id,
                    next,
                    Payload::DataAck {
                        origin: packet.origin,
                        seq: packet.seq,
                        via: packet.via,
                        route,
                    },
                ));
            }
            return;
        }
        let ttl = 2 * cx.cfg.max_hops as usize;
        if packet.trail.len() >= ttl {
            cx.out.push(Action::DataDropped {
                origin: packet.origin,
                seq: packet.seq,
                reason: DropReason::Ttl,
            });
            return;
        }
        match (self.is_connected(), self.parent) {
            (true, Some(p)) => {
                packet.trail.push(self.id);
                cx.send(Message::to(self.id, p, Payload::Data(packet)));
            }
            _ => {
                self.buffer.push_back(packet);
                if self.buffer.len() > cx.cfg.data_buffer_capacity {
                    let old = self.buffer.pop_front().unwrap();
                    cx.out.push(Action::DataDropped {
                        origin: old.origin,
                        seq: old.seq,
                        reason: DropReason::BufferFull,
                    });
                }
            }
        }
    }

    fn on_data_ack(
        &mut self,
        cx: &mut Cx,
        origin: NodeId,
        seq: u64,
        via: Option<NodeId>,
        route: &[NodeId],
    ) {
        if origin == self.id {
            self.on_race_ack(cx, seq, via);
            return;
        }
        if let Some((&next, rest)) = route.split_first() {
            cx.send(Message::to(
                self.id,
                next,
                Payload::DataAck {
                    origin,
                    seq,
                    via,
                    route: rest.to_vec(),
                },
            ));
        }
    }

    // ---- joins and parent improvement ----

    fn start_join(&mut self, cx: &mut Cx) {
        if self.is_base || self.parent.is_some() {
            cx.out.push(Action::Ignored("join requires a fresh node"));
            return;
        }
        self.joining = true;
        cx.send(Message::broadcast(self.id, Payload::JoinProbe));
        self.arm(cx, TimerKind::JoinRetry, cx.cfg.request_resend_timeout);
    }

    fn on_join_retry(&mut self, cx: &mut Cx) {
        if self.joining {
            cx.send(Message::broadcast(self.id, Payload::JoinProbe));
            self.arm(cx, TimerKind::JoinRetry, cx.cfg.request_resend_timeout);
        }
    }

    fn on_join_probe(&mut self, cx: &mut Cx, from: NodeId) {
        let hops = if self.is_connected() {
            self.hops
        } else {
            Hops::Infinite
        };
        cx.send(Message::to(self.id, from, Payload::JoinInfo { hops }));
    }

    fn on_join_info(&mut self, cx: &mut Cx, from: NodeId, hops: Hops, dst: Dest) {
        if self.joining {
            if let Hops::Finite(h) = hops {
                self.join_offers.insert(from, h);
                self.arm_if_idle(cx, TimerKind::JoinWindow, cx.cfg.timeout_ppt);
            }
            return;
        }
        // A broadcast JOIN_INFO is a newly joined node announcing itself.
        if dst == Dest::Broadcast {
            if let Hops::Finite(h) = hops {
                self.consider_shorter_parent(cx, from, h);
            }
        }
    }

    fn on_join_window(&mut self, cx: &mut Cx) {
        let offers = std::mem::take(&mut self.join_offers);
        let best = offers
            .iter()
            .filter(|(_, &h)| h.saturating_add(1) < cx.cfg.max_hops)
            .min_by_key(|(&n, &h)| (h, n));
        let Some((&parent, &h)) = best else {
            return;
        };
        self.joining = false;
        self.beacon_seen = true;
        self.cancel(TimerKind::JoinRetry);
        self.adopt_parent(cx, parent, h + 1);
        cx.send(Message::broadcast(
            self.id,
            Payload::JoinInfo {
                hops: Hops::Finite(h + 1),
            },
        ));
    }

    fn consider_shorter_parent(&mut self, cx: &mut Cx, neighbor: NodeId, neighbor_hops: u32) {
        let (Hops::Finite(own), Some(parent)) = (self.hops, self.parent) else {
            return;
        };
        if self.is_base
            || self.pending
            || self.race.is_some()
            || neighbor == parent
            || neighbor_hops.saturating_add(1) >= own
        {
            return;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        cx.out.push(Action::DataCreated { seq, copies: 2 });
        for via in [neighbor, parent] {
            let packet = DataPacket {
                origin: self.id,
                seq,
                via: Some(via),
                trail: vec![self.id],
            };
            cx.send(Message::to(self.id, via, Payload::Data(packet)));
        }
        self.race = Some(SwitchRace {
            neighbor,
            neighbor_hops,
            parent,
            seq,
        });
        self.arm(cx, TimerKind::SwitchRace, cx.cfg.request_resend_timeout);
    }

    fn on_race_ack(&mut self, cx: &mut Cx, seq: u64, via: Option<NodeId>) {
        let Some(race) = self.race.filter(|r| r.seq == seq) else {
            return;
        };
        self.race = None;
        self.cancel(TimerKind::SwitchRace);
        if via == Some(race.neighbor) && self.parent == Some(race.parent) && self.is_connected() {
            let old = race.parent;
            self.parent = Some(race.neighbor);
            self.hops = Hops::Finite(race.neighbor_hops + 1);
            self.children.remove(&race.neighbor);
            cx.out.push(Action::ParentSwitched {
                from: old,
                to: race.neighbor,
            });
        }
    }

    fn recover(&mut self, cx: &mut Cx) {
        let mut fresh = NodeState::new(self.id, self.is_base);
        fresh.neighbors = std::mem::take(&mut self.neighbors);
        fresh.position = self.position;
        fresh.neighbor_positions = std::mem::take(&mut self.neighbor_positions);
        fresh.next_seq = self.next_seq;
        *self = fresh;
        if self.is_base {
            self.beacon_seen = true;
            return;
        }
        cx.send(Message::broadcast(self.id, Payload::Request));
        self.arm(cx, TimerKind::RequestResend, cx.cfg.request_resend_timeout);
    }
}

// Named entry points for the individual handlers.

pub fn init_from_beacon(
    state: &NodeState,
    beacon: &Message,
    now: SimTime,
    cfg: &ProtocolConfig,
) -> Transition {
    step(state, &Input::Receive(beacon.clone()), now, cfg)
}

/// Runs a probe as if the probe timer fired now.
pub fn probe_parent(state: &NodeState, now: SimTime, cfg: &ProtocolConfig) -> Transition {
    fire(state, TimerKind::Probe, now, cfg)
}

pub fn handle_ppt_timeout(state: &NodeState, now: SimTime, cfg: &ProtocolConfig) -> Transition {
    fire(state, TimerKind::Ppt, now, cfg)
}

pub fn handle_request_resend_timeout(
    state: &NodeState,
    now: SimTime,
    cfg: &ProtocolConfig,
) -> Transition {
    fire(state, TimerKind::RequestResend, now, cfg)
}

fn fire(state: &NodeState, kind: TimerKind, now: SimTime, cfg: &ProtocolConfig) -> Transition {
    let mut s = state.clone();
    s.timers.insert(kind, now);
    step(&s, &Input::Timer(kind), now, cfg)
}

/// Runs parent selection over an explicit candidate set.
pub fn select_new_parent(
    state: &NodeState,
    candidates: &[ParentCandidate],
    now: SimTime,
    cfg: &ProtocolConfig,
) -> Transition {
    let mut s = state.clone();
    let mut cx = Cx {
        now,
        cfg,
        out: Vec::new(),
    };
    if s.alive {
        s.select_new_parent(&mut cx, candidates);
    }
    Transition {
        state: s,
        actions: cx.out,
    }
}

pub fn forward_data(
    state: &NodeState,
    packet: DataPacket,
    now: SimTime,
    cfg: &ProtocolConfig,
) -> Transition {
    let mut s = state.clone();
    let mut cx = Cx {
        now,
        cfg,
        out: Vec::new(),
    };
    if s.alive {
        s.forward_data(&mut cx, packet);
    }
    Transition {
        state: s,
        actions: cx.out,
    }
}

pub fn node_join(state: &NodeState, now: SimTime, cfg: &ProtocolConfig) -> Transition {
    step(state, &Input::Join, now, cfg)
}

pub fn consider_shorter_parent(
    state: &NodeState,
    neighbor: NodeId,
    neighbor_hops: u32,
    now: SimTime,
    cfg: &ProtocolConfig,
) -> Transition {
    let mut s = state.clone();
    let mut cx = Cx {
        now,
        cfg,
        out: Vec::new(),
    };
    if s.alive {
        s.consider_shorter_parent(&mut cx, neighbor, neighbor_hops);
    }
    Transition {
        state: s,
        actions: cx.out,
    }
}
