use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::protocol::{Hops, MessageKind, RoutingFields};
use crate::time::SimTime;
use crate::topology::{NodeId, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceEvent {
    Send,
    Recv,
    Drop,
    Timer,
    State,
    Fail,
    Recover,
    Join,
    DataGen,
    DataDeliver,
    DataDrop,
    /// Data still buffered or in flight at the horizon.
    Held,
    Switch,
    Note,
}

impl TraceEvent {
    const ALL: [TraceEvent; 14] = [
        TraceEvent::Send,
        TraceEvent::Recv,
        TraceEvent::Drop,
        TraceEvent::Timer,
        TraceEvent::State,
        TraceEvent::Fail,
        TraceEvent::Recover,
        TraceEvent::Join,
        TraceEvent::DataGen,
        TraceEvent::DataDeliver,
        TraceEvent::DataDrop,
        TraceEvent::Held,
        TraceEvent::Switch,
        TraceEvent::Note,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TraceEvent::Send => "send",
            TraceEvent::Recv => "recv",
            TraceEvent::Drop => "drop",
            TraceEvent::Timer => "timer",
            TraceEvent::State => "state",
            TraceEvent::Fail => "fail",
            TraceEvent::Recover => "recover",
            TraceEvent::Join => "join",
            TraceEvent::DataGen => "data_gen",
            TraceEvent::DataDeliver => "data_deliver",
            TraceEvent::DataDrop => "data_drop",
            TraceEvent::Held => "held",
            TraceEvent::Switch => "switch",
            TraceEvent::Note => "note",
        }
    }
}

impl FromStr for TraceEvent {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown trace event '{s}'"))
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub node: NodeId,
    pub event: TraceEvent,
    pub details: String,
}

impl TraceRecord {
    /// Message kind of a send, recv or drop record.
    pub fn message_kind(&self) -> Option<MessageKind> {
        let mut words = self.details.split_whitespace();
        match self.event {
            TraceEvent::Send | TraceEvent::Recv => MessageKind::from_name(words.next()?),
            TraceEvent::Drop => MessageKind::from_name(words.nth(1)?),
            _ => None,
        }
    }

    /// Value of a `key=value` token in the details.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.details
            .split_whitespace()
            .find_map(|w| w.strip_prefix(key)?.strip_prefix('='))
    }

    pub fn routing(&self) -> Option<RoutingFields> {
        if self.event != TraceEvent::State {
            return None;
        }
        Some(RoutingFields {
            parent: parse_parent(self.field("parent")?).ok()?,
            hops: self.field("hops")?.parse().ok()?,
            broken_hops: self.field("broken_hops")?.parse().ok()?,
            pending: parse_flag(self.field("pending")?).ok()?,
        })
    }

    /// `(origin, seq)` of a data record.
    pub fn data_unit(&self) -> Option<(NodeId, u64)> {
        Some((
            self.field("origin")?.parse().ok()?,
            self.field("seq")?.parse().ok()?,
        ))
    }
}

pub fn routing_details(r: &RoutingFields) -> String {
    format!(
        "parent={} hops={} broken_hops={} pending={}",
        r.parent.map_or_else(|| "-".to_string(), |p| p.to_string()),
        r.hops,
        r.broken_hops,
        u8::from(r.pending)
    )
}

fn parse_parent(s: &str) -> Result<Option<NodeId>, String> {
    if s == "-" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| format!("bad parent '{s}'"))
    }
}

fn parse_flag(s: &str) -> Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("bad flag '{s}'")),
    }
}

/// Routing fields of every alive node at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoutingSnapshot {
    pub nodes: BTreeMap<NodeId, RoutingFields>,
}

impl RoutingSnapshot {
    pub fn parent_map(&self) -> BTreeMap<NodeId, NodeId> {
        self.nodes
            .iter()
            .filter_map(|(&n, r)| r.parent.map(|p| (n, p)))
            .collect()
    }

    pub fn finite_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|(_, r)| r.hops.is_finite())
            .map(|(&n, _)| n)
    }

    pub fn hops(&self, n: NodeId) -> Option<Hops> {
        self.nodes.get(&n).map(|r| r.hops)
    }
}

pub const SNAPSHOT_MARKER: &str = "# snapshot";
const HEADER: &str = "# time_us\tnode\tevent\tdetails";

/// Full record of one run. `snapshot` is the final routing state; it is
/// absent when the trace was cut short.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub snapshot: Option<RoutingSnapshot>,
}

impl Trace {
    pub fn is_complete(&self) -> bool {
        self.snapshot.is_some()
    }

    pub fn of_event(&self, event: TraceEvent) -> impl Iterator<Item = &TraceRecord> + '_ {
        self.records.iter().filter(move |r| r.event == event)
    }

    /// Number of transmissions of `kind` (one per send, broadcasts count once).
    pub fn sent(&self, kind: MessageKind) -> usize {
        self.of_event(TraceEvent::Send)
            .filter(|r| r.message_kind() == Some(kind))
            .count()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.time, r.node, r.event, r.details);
        }
        if let Some(snap) = &self.snapshot {
            out.push_str(SNAPSHOT_MARKER);
            out.push('\n');
            for (n, r) in &snap.nodes {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    n,
                    r.parent.map_or_else(|| "-".to_string(), |p| p.to_string()),
                    r.hops,
                    r.broken_hops,
                    u8::from(r.pending)
                );
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut trace = Trace::default();
        let mut in_snapshot = false;
        let mut last = SimTime::ZERO;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            if raw.trim_end() == SNAPSHOT_MARKER {
                if in_snapshot {
                    return Err(ParseError::new(line, "second snapshot section"));
                }
                in_snapshot = true;
                trace.snapshot = Some(RoutingSnapshot::default());
                continue;
            }
            if raw.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            let err = |m: String| ParseError::new(line, m);
            if in_snapshot {
                let [node, parent, hops, broken, pending] = cols[..] else {
                    return Err(err("snapshot rows have 5 columns".into()));
                };
                let fields = RoutingFields {
                    parent: parse_parent(parent).map_err(err)?,
                    hops: hops
                        .parse()
                        .map_err(|_| err(format!("bad hops '{hops}'")))?,
                    broken_hops: broken
                        .parse()
                        .map_err(|_| err(format!("bad broken_hops '{broken}'")))?,
                    pending: parse_flag(pending).map_err(err)?,
                };
                let id = node
                    .parse()
                    .map_err(|_| err(format!("bad node '{node}'")))?;
                trace.snapshot.as_mut().unwrap().nodes.insert(id, fields);
                continue;
            }
            let [time, node, event, details] = cols[..] else {
                return Err(err("trace rows have 4 columns".into()));
            };
            let time = SimTime(
                time.parse()
                    .map_err(|_| err(format!("bad time '{time}'")))?,
            );
            if time < last {
                return Err(err("time goes backwards".into()));
            }
            last = time;
            trace.records.push(TraceRecord {
                time,
                node: node
                    .parse()
                    .map_err(|_| err(format!("bad node '{node}'")))?,
                event: event.parse().map_err(err)?,
                details: details.to_string(),
            });
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut snap = RoutingSnapshot::default();
        snap.nodes.insert(
            NodeId(2),
            RoutingFields {
                parent: Some(NodeId(1)),
                hops: Hops::Finite(1),
                broken_hops: 0,
                pending: false,
            },
        );
        snap.nodes.insert(
            NodeId(3),
            RoutingFields {
                parent: None,
                hops: Hops::Infinite,
                broken_hops: 1,
                pending: true,
            },
        );
        let trace = Trace {
            records: vec![
                TraceRecord {
                    time: SimTime(0),
                    node: NodeId(1),
                    event: TraceEvent::Send,
                    details: "BEACON 1 * hops=0".into(),
                },
                TraceRecord {
                    time: SimTime(5),
                    node: NodeId(2),
                    event: TraceEvent::State,
                    details: routing_details(&snap.nodes[&NodeId(2)]),
                },
                TraceRecord {
                    time: SimTime(9),
                    node: NodeId(3),
                    event: TraceEvent::Drop,
                    details: "node_dead REQUEST 4 *".into(),
                },
            ],
            snapshot: Some(snap.clone()),
        };
        let text = trace.render();
        let back = Trace::parse(&text).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.records[1].routing(), Some(snap.nodes[&NodeId(2)]));
        assert_eq!(back.records[2].message_kind(), Some(MessageKind::Request));
        assert_eq!(back.sent(MessageKind::Beacon), 1);
    }

    #[test]
    fn truncated_trace_has_no_snapshot() {
        let t = Trace::parse("0\t1\tsend\tBEACON 1 * hops=0\n").unwrap();
        assert!(!t.is_complete());
        let err = Trace::parse("5\t1\tsend\tx\n3\t1\tsend\tx\n").unwrap_err();
        assert_eq!(err.line, 2);
    }
}
