//! Post-run verification: parent cycles, the reachability oracle, delivery
//! accounting, message counts and convergence times.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::loops::{canonicalize_nodes, enumerate_all_loops, CycleKey, LoopReport};
use crate::protocol::{Hops, MessageKind, RoutingFields};
use crate::sim::{quiesce, RoutingSnapshot, Scenario, Trace, TraceEvent};
use crate::time::{SimDuration, SimTime};
use crate::topology::{NodeId, NodePlacement, Topology};

/// Every cycle of the parent graph, canonicalized. Each node has at most
/// one parent, so a coloured pointer walk meets each cycle exactly once.
pub fn detect_parent_cycles(snapshot: &RoutingSnapshot) -> Vec<CycleKey> {
    let parent = snapshot.parent_map();
    #[derive(Clone, Copy, PartialEq)]
    enum Colour {
        Active,
        Done,
    }
    let mut colour: BTreeMap<NodeId, Colour> = BTreeMap::new();
    let mut cycles = Vec::new();
    for &start in parent.keys() {
        if colour.contains_key(&start) {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        loop {
            match colour.get(&v) {
                Some(Colour::Active) => {
                    let at = path.iter().position(|&p| p == v).unwrap();
                    cycles.push(canonicalize_nodes(&path[at..]));
                    break;
                }
                Some(Colour::Done) => break,
                None => {}
            }
            colour.insert(v, Colour::Active);
            path.push(v);
            match parent.get(&v) {
                Some(&p) => v = p,
                None => break,
            }
        }
        for p in path {
            colour.insert(p, Colour::Done);
        }
    }
    cycles.sort();
    cycles
}

/// Nodes reachable from the base station over links between survivors.
pub fn reachability_oracle(topology: &Topology, dead: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let base = topology.base_station();
    let mut seen = BTreeSet::new();
    if dead.contains(&base) {
        return seen;
    }
    seen.insert(base);
    let mut queue = VecDeque::from([base]);
    while let Some(v) = queue.pop_front() {
        for w in topology.neighbors(v) {
            if !dead.contains(&w) && seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen
}

/// All cycles of the connectivity graph, by BLOCK search.
pub fn connectivity_loop_report(topology: &Topology) -> Vec<LoopReport> {
    enumerate_all_loops(topology)
}

/// Pairs every enumerated cycle with whether it was observed as a parent
/// cycle.
pub fn annotate_observed(
    reports: &[LoopReport],
    observed: &BTreeSet<CycleKey>,
) -> Vec<(CycleKey, bool)> {
    let all: BTreeSet<CycleKey> = reports.iter().flat_map(LoopReport::canonical_set).collect();
    all.into_iter()
        .map(|k| {
            let seen = observed.contains(&k);
            (k, seen)
        })
        .collect()
}

/// How often to look for parent cycles while replaying a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Every(SimDuration),
    /// After every instant at which some routing field changed.
    EveryChange,
}

fn blank(is_base: bool) -> RoutingFields {
    RoutingFields {
        parent: None,
        hops: if is_base {
            Hops::Finite(0)
        } else {
            Hops::Infinite
        },
        broken_hops: 0,
        pending: false,
    }
}

/// World state rebuilt from trace records.
#[derive(Debug, Clone)]
pub struct Replay {
    pub topology: Topology,
    pub snapshot: RoutingSnapshot,
    pub dead: BTreeSet<NodeId>,
}

impl Replay {
    pub fn new(topology: &Topology) -> Self {
        let base = topology.base_station();
        Self {
            topology: topology.clone(),
            snapshot: RoutingSnapshot {
                nodes: topology.nodes().map(|n| (n, blank(n == base))).collect(),
            },
            dead: BTreeSet::new(),
        }
    }

    pub fn apply(&mut self, r: &crate::sim::TraceRecord) {
        let base = self.topology.base_station();
        match r.event {
            TraceEvent::State => {
                if let Some(f) = r.routing() {
                    self.snapshot.nodes.insert(r.node, f);
                }
            }
            TraceEvent::Fail => {
                self.dead.insert(r.node);
                self.snapshot.nodes.remove(&r.node);
            }
            TraceEvent::Recover => {
                self.dead.remove(&r.node);
                self.snapshot.nodes.insert(r.node, blank(r.node == base));
            }
            TraceEvent::Join => {
                let num = |k: &str| r.field(k).and_then(|v| v.parse::<f64>().ok());
                if let (Some(x), Some(y), Some(range)) = (num("x"), num("y"), num("range")) {
                    let _ = self
                        .topology
                        .add_placement(NodePlacement::new(r.node.0, x, y, range));
                }
                self.snapshot.nodes.insert(r.node, blank(false));
            }
            _ => {}
        }
    }
}

/// Every parent cycle seen while replaying `trace`, with the sample time.
pub fn transient_loops(
    trace: &Trace,
    topology: &Topology,
    sampling: Sampling,
    horizon: SimTime,
) -> Vec<(SimTime, CycleKey)> {
    let mut replay = Replay::new(topology);
    let mut found = Vec::new();
    let mut check = |at: SimTime, snap: &RoutingSnapshot| {
        for c in detect_parent_cycles(snap) {
            found.push((at, c));
        }
    };
    let records = &trace.records;
    match sampling {
        Sampling::EveryChange => {
            let mut i = 0;
            while i < records.len() {
                let t = records[i].time;
                let mut changed = false;
                while i < records.len() && records[i].time == t {
                    changed |= records[i].event == TraceEvent::State;
                    replay.apply(&records[i]);
                    i += 1;
                }
                if changed {
                    check(t, &replay.snapshot);
                }
            }
        }
        Sampling::Every(step) => {
            let step = step.max(SimDuration(1));
            let mut i = 0;
            let mut at = SimTime::ZERO + step;
            while at <= horizon {
                while i < records.len() && records[i].time <= at {
                    replay.apply(&records[i]);
                    i += 1;
                }
                check(at, &replay.snapshot);
                at += step;
            }
        }
    }
    found
}

/// Per data unit accounting, keyed by `(origin, seq)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataLedger {
    pub generated: BTreeMap<(NodeId, u64), SimTime>,
    pub delivered: BTreeSet<(NodeId, u64)>,
    pub dropped: BTreeSet<(NodeId, u64)>,
    pub held: BTreeSet<(NodeId, u64)>,
    /// Units the trace marks as held at the horizon.
    pub held_marked: BTreeSet<(NodeId, u64)>,
}

impl DataLedger {
    pub fn from_trace(trace: &Trace) -> Self {
        let mut live: BTreeMap<(NodeId, u64), i64> = BTreeMap::new();
        let mut ledger = DataLedger::default();
        for r in &trace.records {
            let Some(unit) = r.data_unit() else {
                continue;
            };
            match r.event {
                TraceEvent::DataGen => {
                    let copies = r.field("copies").and_then(|c| c.parse().ok()).unwrap_or(1);
                    live.insert(unit, copies);
                    ledger.generated.insert(unit, r.time);
                }
                TraceEvent::DataDeliver => {
                    *live.entry(unit).or_default() -= 1;
                    ledger.delivered.insert(unit);
                }
                TraceEvent::DataDrop => *live.entry(unit).or_default() -= 1,
                TraceEvent::Held => {
                    ledger.held_marked.insert(unit);
                }
                _ => {}
            }
        }
        for (&unit, &n) in &live {
            if ledger.delivered.contains(&unit) {
                continue;
            }
            if n > 0 {
                ledger.held.insert(unit);
            } else {
                ledger.dropped.insert(unit);
            }
        }
        ledger
    }

    /// generated = delivered + dropped + held, and the held units match the
    /// trace's own horizon markers.
    pub fn conserved(&self) -> bool {
        self.generated.len() == self.delivered.len() + self.dropped.len() + self.held.len()
            && self.held == self.held_marked
    }

    /// Delivered share of the units generated within `[from, to]`; 1.0 when
    /// none were.
    pub fn ratio_between(&self, from: SimTime, to: SimTime) -> f64 {
        let window: Vec<&(NodeId, u64)> = self
            .generated
            .iter()
            .filter(|(_, &t)| t >= from && t <= to)
            .map(|(u, _)| u)
            .collect();
        if window.is_empty() {
            return 1.0;
        }
        let ok = window.iter().filter(|u| self.delivered.contains(u)).count();
        ok as f64 / window.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultConvergence {
    pub at: SimTime,
    pub what: String,
    pub converged_after: Option<SimDuration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// The trace had no final snapshot; figures describe the prefix only.
    pub partial: bool,
    pub delivery_ratio: f64,
    /// Delivery ratio for data generated between the final quiescence and
    /// the start of the drain window.
    pub post_convergence_delivery_ratio: Option<f64>,
    pub data: DataLedger,
    pub message_counts: BTreeMap<MessageKind, usize>,
    pub convergence: Vec<FaultConvergence>,
    /// Quiescence after the last fault (or after start-up).
    pub quiescence: Option<SimTime>,
    pub transient_loops: Vec<(SimTime, CycleKey)>,
    pub final_cycles: Vec<CycleKey>,
    pub orphan_count: usize,
    /// Survivors whose finite-hops status disagrees with the oracle.
    pub oracle_mismatches: Vec<NodeId>,
    pub final_snapshot: RoutingSnapshot,
}

impl RunReport {
    pub fn repair_messages(&self) -> usize {
        self.message_counts
            .iter()
            .filter(|(k, _)| k.is_repair())
            .map(|(_, n)| n)
            .sum()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("partial", self.partial.to_string());
        kv("delivery_ratio", format!("{:.6}", self.delivery_ratio));
        kv(
            "post_convergence_delivery_ratio",
            self.post_convergence_delivery_ratio
                .map_or("none".into(), |r| format!("{r:.6}")),
        );
        kv("data_generated", self.data.generated.len().to_string());
        kv("data_delivered", self.data.delivered.len().to_string());
        kv("data_dropped", self.data.dropped.len().to_string());
        kv("data_held", self.data.held.len().to_string());
        kv("data_conserved", self.data.conserved().to_string());
        for k in MessageKind::ALL {
            kv(
                &format!("messages.{}", k.name()),
                self.message_counts
                    .get(&k)
                    .copied()
                    .unwrap_or(0)
                    .to_string(),
            );
        }
        for (i, c) in self.convergence.iter().enumerate() {
            kv(&format!("fault.{i}.time_us"), c.at.to_string());
            kv(&format!("fault.{i}.what"), c.what.clone());
            kv(
                &format!("fault.{i}.convergence_us"),
                c.converged_after
                    .map_or("none".into(), |d| d.as_micros().to_string()),
            );
        }
        kv(
            "quiescence_us",
            self.quiescence.map_or("none".into(), |t| t.to_string()),
        );
        kv("transient_loops", self.transient_loops.len().to_string());
        for (t, c) in &self.transient_loops {
            kv("transient_loop", format!("{t} {c}"));
        }
        kv("final_cycles", self.final_cycles.len().to_string());
        kv("orphan_count", self.orphan_count.to_string());
        let mism: Vec<String> = self
            .oracle_mismatches
            .iter()
            .map(|n| n.to_string())
            .collect();
        kv(
            "oracle_mismatches",
            if mism.is_empty() {
                "none".into()
            } else {
                mism.join(",")
            },
        );
        out
    }
}

/// Summarizes a run. The scenario supplies the topology and timing knobs.
pub fn summarize(trace: &Trace, scenario: &Scenario) -> RunReport {
    summarize_with(trace, scenario, Sampling::Every(scenario.sample_interval))
}

pub fn summarize_with(trace: &Trace, scenario: &Scenario, sampling: Sampling) -> RunReport {
    let horizon = match (&trace.snapshot, trace.records.last()) {
        (Some(_), _) => scenario.horizon,
        (None, Some(r)) => r.time,
        (None, None) => SimTime::ZERO,
    };
    let mut replay = Replay::new(&scenario.topology);
    for r in &trace.records {
        replay.apply(r);
    }
    let final_snapshot = trace
        .snapshot
        .clone()
        .unwrap_or_else(|| replay.snapshot.clone());
    let base = scenario.topology.base_station();

    let data = DataLedger::from_trace(trace);
    let delivery_ratio = if data.generated.is_empty() {
        1.0
    } else {
        data.delivered.len() as f64 / data.generated.len() as f64
    };

    let mut message_counts = BTreeMap::new();
    for r in trace.of_event(TraceEvent::Send) {
        if let Some(k) = r.message_kind() {
            *message_counts.entry(k).or_insert(0) += 1;
        }
    }

    let mut convergence: Vec<FaultConvergence> = Vec::new();
    for r in &trace.records {
        if !matches!(
            r.event,
            TraceEvent::Fail | TraceEvent::Recover | TraceEvent::Join
        ) {
            continue;
        }
        let what = format!("{} {}", r.event, r.node);
        match convergence.last_mut() {
            Some(last) if last.at == r.time => last.what = format!("{}, {what}", last.what),
            _ => convergence.push(FaultConvergence {
                at: r.time,
                what,
                converged_after: None,
            }),
        }
    }
    for c in &mut convergence {
        c.converged_after =
            quiesce(trace, c.at, scenario.settle_window, horizon).map(|q| q.saturating_since(c.at));
    }
    let last_fault = convergence.last().map_or(SimTime::ZERO, |c| c.at);
    let quiescence = quiesce(trace, last_fault, scenario.settle_window, horizon);
    let drain_start = SimTime(scenario.horizon.0.saturating_sub(scenario.data_drain.0));
    let post_convergence_delivery_ratio = quiescence.map(|q| data.ratio_between(q, drain_start));

    let reachable = reachability_oracle(&replay.topology, &replay.dead);
    let oracle_mismatches = final_snapshot
        .nodes
        .iter()
        .filter(|(n, r)| r.hops.is_finite() != reachable.contains(n))
        .map(|(&n, _)| n)
        .collect();
    let orphan_count = final_snapshot
        .nodes
        .iter()
        .filter(|(&n, r)| n != base && !r.hops.is_finite())
        .count();

    RunReport {
        partial: !trace.is_complete(),
        delivery_ratio,
        post_convergence_delivery_ratio,
        message_counts,
        convergence,
        quiescence,
        transient_loops: transient_loops(trace, &scenario.topology, sampling, horizon),
        final_cycles: detect_parent_cycles(&final_snapshot),
        orphan_count,
        oracle_mismatches,
        data,
        final_snapshot,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run, FaultSpec};

    fn snap(pairs: &[(u32, u32)]) -> RoutingSnapshot {
        let mut s = RoutingSnapshot::default();
        for &(a, p) in pairs {
            s.nodes.insert(
                NodeId(a),
                RoutingFields {
                    parent: Some(NodeId(p)),
                    hops: Hops::Finite(1),
                    broken_hops: 0,
                    pending: false,
                },
            );
        }
        s
    }

    fn key(ids: &[u32]) -> CycleKey {
        canonicalize_nodes(&ids.iter().map(|&i| NodeId(i)).collect::<Vec<_>>())
    }

    #[test]
    fn cycles_in_parent_graph() {
        assert_eq!(
            detect_parent_cycles(&snap(&[(1, 2), (2, 1)])),
            [key(&[1, 2])]
        );
        assert!(detect_parent_cycles(&snap(&[(2, 1), (3, 1), (4, 3)])).is_empty());
        let s = snap(&[(2, 3), (3, 4), (4, 2), (5, 2), (6, 7), (7, 6), (8, 9)]);
        assert_eq!(detect_parent_cycles(&s), [key(&[2, 3, 4]), key(&[6, 7])]);
    }

    #[test]
    fn oracle_bfs() {
        let five_node = crate::topology::five_node();
        let none = BTreeSet::new();
        assert_eq!(reachability_oracle(&five_node, &none).len(), 5);
        let dead = BTreeSet::from([NodeId(3)]);
        let got: Vec<u32> = reachability_oracle(&five_node, &dead)
            .into_iter()
            .map(|n| n.0)
            .collect();
        assert_eq!(got, [1, 2, 4, 5]);
        let line = Topology::from_pairs(&[(1, 2), (2, 3), (3, 4)], 1).unwrap();
        let got: Vec<u32> = reachability_oracle(&line, &BTreeSet::from([NodeId(2)]))
            .into_iter()
            .map(|n| n.0)
            .collect();
        assert_eq!(got, [1]);
        assert!(reachability_oracle(&line, &BTreeSet::from([NodeId(1)])).is_empty());
    }

    #[test]
    fn connectivity_loops() {
        let all: usize = connectivity_loop_report(&crate::topology::five_node())
            .iter()
            .map(LoopReport::loop_count)
            .sum();
        assert_eq!(all, 13);
        let tree = Topology::from_pairs(&[(1, 2), (1, 3), (3, 4)], 1).unwrap();
        assert_eq!(
            connectivity_loop_report(&tree)
                .iter()
                .map(LoopReport::loop_count)
                .sum::<usize>(),
            0
        );
    }

    #[test]
    fn failure_free_report() {
        let sc = Scenario::new(Topology::from_pairs(&[(1, 2), (2, 3), (3, 4), (2, 4)], 1).unwrap());
        let report = summarize(&run(&sc), &sc);
        assert!(!report.partial);
        assert_eq!(report.delivery_ratio, 1.0);
        assert_eq!(report.repair_messages(), 0);
        assert!(report.data.conserved());
        assert!(report.oracle_mismatches.is_empty());
        assert!(report.render().contains("messages.REQUEST=0\n"));
    }

    #[test]
    fn single_failure_recovers_delivery() {
        let topo = Topology::from_pairs(&[(1, 2), (1, 3), (2, 4), (3, 4), (4, 5)], 1).unwrap();
        let sc = Scenario::new(topo)
            .with_fault(SimTime(20_000_000), FaultSpec::NodeFail { id: NodeId(2) });
        let report = summarize(&run(&sc), &sc);
        assert!(report.quiescence.is_some());
        assert!(
            report.oracle_mismatches.is_empty(),
            "{:?}",
            report.final_snapshot
        );
        assert!(report.final_cycles.is_empty());
        assert_eq!(report.post_convergence_delivery_ratio, Some(1.0));
        assert!(report.data.conserved());
    }

    #[test]
    fn truncated_trace_is_partial() {
        let sc = Scenario::new(Topology::from_pairs(&[(1, 2)], 1).unwrap());
        let mut t = run(&sc);
        t.snapshot = None;
        t.records.truncate(3);
        let report = summarize(&t, &sc);
        assert!(report.partial);
    }
}
