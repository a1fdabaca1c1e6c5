use std::fmt;

use crate::topology::NodeId;

/// Hop distance to the base station; `Infinite` means not connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Hops {
    Finite(u32),
    #[default]
    Infinite,
}

impl Hops {
    pub fn is_finite(self) -> bool {
        matches!(self, Hops::Finite(_))
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Hops::Finite(h) => Some(h),
            Hops::Infinite => None,
        }
    }
}

impl fmt::Display for Hops {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hops::Finite(h) => write!(f, "{h}"),
            Hops::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Hops {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "inf" {
            Ok(Hops::Infinite)
        } else {
            s.parse().map(Hops::Finite)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Node(NodeId),
    Broadcast,
}

impl fmt::Display for Dest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dest::Node(n) => write!(f, "{n}"),
            Dest::Broadcast => f.write_str("*"),
        }
    }
}

/// One sensor reading on its way to the base station.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPacket {
    pub origin: NodeId,
    pub seq: u64,
    /// First hop chosen by the origin when racing two copies.
    pub via: Option<NodeId>,
    /// Nodes this copy has passed, origin first. Acks retrace it.
    pub trail: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Forward,
    BackY {
        hops: u32,
    },
    BackN {
        broken_hops: u32,
    },
    Request,
    Reply {
        hops: u32,
        parent: NodeId,
    },
    Pending {
        pending_hops: u32,
    },
    Beacon {
        hops: u32,
    },
    Data(DataPacket),
    DataAck {
        origin: NodeId,
        seq: u64,
        via: Option<NodeId>,
        route: Vec<NodeId>,
    },
    JoinProbe,
    JoinInfo {
        hops: Hops,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Forward,
    BackY,
    BackN,
    Request,
    Reply,
    Pending,
    Beacon,
    Data,
    DataAck,
    JoinProbe,
    JoinInfo,
}

impl MessageKind {
    pub const ALL: [MessageKind; 11] = [
        MessageKind::Forward,
        MessageKind::BackY,
        MessageKind::BackN,
        MessageKind::Request,
        MessageKind::Reply,
        MessageKind::Pending,
        MessageKind::Beacon,
        MessageKind::Data,
        MessageKind::DataAck,
        MessageKind::JoinProbe,
        MessageKind::JoinInfo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Forward => "FORWARD",
            MessageKind::BackY => "BACK_Y",
            MessageKind::BackN => "BACK_N",
            MessageKind::Request => "REQUEST",
            MessageKind::Reply => "REPLY",
            MessageKind::Pending => "PENDING",
            MessageKind::Beacon => "BEACON",
            MessageKind::Data => "DATA",
            MessageKind::DataAck => "DATA_ACK",
            MessageKind::JoinProbe => "JOIN_PROBE",
            MessageKind::JoinInfo => "JOIN_INFO",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Traffic that only exists while the tree is being repaired.
    pub fn is_repair(self) -> bool {
        matches!(
            self,
            MessageKind::Request | MessageKind::Reply | MessageKind::Pending | MessageKind::BackN
        )
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub src: NodeId,
    pub dst: Dest,
    pub payload: Payload,
}

impl Message {
    pub fn to(src: NodeId, dst: NodeId, payload: Payload) -> Self {
        Self {
            src,
            dst: Dest::Node(dst),
            payload,
        }
    }

    pub fn broadcast(src: NodeId, payload: Payload) -> Self {
        Self {
            src,
            dst: Dest::Broadcast,
            payload,
        }
    }

    pub fn kind(&self) -> MessageKind {
        match &self.payload {
            Payload::Forward => MessageKind::Forward,
            Payload::BackY { .. } => MessageKind::BackY,
            Payload::BackN { .. } => MessageKind::BackN,
            Payload::Request => MessageKind::Request,
            Payload::Reply { .. } => MessageKind::Reply,
            Payload::Pending { .. } => MessageKind::Pending,
            Payload::Beacon { .. } => MessageKind::Beacon,
            Payload::Data(_) => MessageKind::Data,
            Payload::DataAck { .. } => MessageKind::DataAck,
            Payload::JoinProbe => MessageKind::JoinProbe,
            Payload::JoinInfo { .. } => MessageKind::JoinInfo,
        }
    }
}

fn join_ids(ids: &[NodeId]) -> String {
    ids.iter()
        .map(NodeId::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn opt(n: Option<NodeId>) -> String {
    n.map_or_else(|| "-".to_string(), |n| n.to_string())
}

/// `KIND src dst payload..`, payload fields in declaration order.
impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.kind(), self.src, self.dst)?;
        match &self.payload {
            Payload::Forward | Payload::Request | Payload::JoinProbe => Ok(()),
            Payload::BackY { hops } | Payload::Beacon { hops } => write!(f, " hops={hops}"),
            Payload::BackN { broken_hops } => write!(f, " broken_hops={broken_hops}"),
            Payload::Reply { hops, parent } => write!(f, " hops={hops} parent={parent}"),
            Payload::Pending { pending_hops } => write!(f, " pending_hops={pending_hops}"),
            Payload::Data(p) => write!(
                f,
                " origin={} seq={} via={} trail={}",
                p.origin,
                p.seq,
                opt(p.via),
                join_ids(&p.trail)
            ),
            Payload::DataAck {
                origin,
                seq,
                via,
                route,
            } => {
                write!(
                    f,
                    " origin={origin} seq={seq} via={} route={}",
                    opt(*via),
                    join_ids(route)
                )
            }
            Payload::JoinInfo { hops } => write!(f, " hops={hops}"),
        }
    }
}
