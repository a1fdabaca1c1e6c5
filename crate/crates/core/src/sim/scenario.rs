use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::protocol::ProtocolConfig;
use crate::time::{SimDuration, SimTime};
use crate::topology::{NodeId, NodePlacement, Topology};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("topology {path}: {source}")]
    Topology {
        path: PathBuf,
        source: crate::topology::ParseError,
    },
    #[error("{0}")]
    Invalid(String),
}

fn at_line(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

/// Link timing and loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    pub base_latency: SimDuration,
    /// Upper bound of the uniform extra delay.
    pub jitter: SimDuration,
    pub loss_probability: f64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self {
            base_latency: SimDuration::from_millis(10),
            jitter: SimDuration::from_millis(2),
            loss_probability: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaultSpec {
    NodeFail {
        id: NodeId,
    },
    AreaFail {
        cx: f64,
        cy: f64,
        radius: f64,
    },
    NodeRecover {
        id: NodeId,
    },
    NodeJoin {
        id: NodeId,
        x: f64,
        y: f64,
        range: f64,
    },
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultSpec::NodeFail { id } => write!(f, "fault node {id}"),
            FaultSpec::AreaFail { cx, cy, radius } => write!(f, "fault area {cx} {cy} {radius}"),
            FaultSpec::NodeRecover { id } => write!(f, "recover {id}"),
            FaultSpec::NodeJoin { id, x, y, range } => write!(f, "join {id} {x} {y} {range}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledFault {
    pub at: SimTime,
    pub spec: FaultSpec,
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub seed: u64,
    pub horizon: SimTime,
    pub protocol: ProtocolConfig,
    pub delay: DelayModel,
    pub faults: Vec<ScheduledFault>,
    /// Default data cadence for every sensor; `None` disables data.
    pub data_interval: Option<SimDuration>,
    /// Per-node cadence overrides; `None` silences that node.
    pub data_overrides: BTreeMap<NodeId, Option<SimDuration>>,
    /// No new data is generated this close to the horizon, so every
    /// reading has time to arrive.
    pub data_drain: SimDuration,
    /// Snapshot cadence for transient loop detection.
    pub sample_interval: SimDuration,
    pub settle_window: SimDuration,
}

impl Scenario {
    pub fn new(topology: Topology) -> Self {
        let protocol = ProtocolConfig::default();
        Self {
            topology,
            seed: 0,
            horizon: SimTime::ZERO + SimDuration::from_secs(60),
            sample_interval: protocol.probe_interval,
            settle_window: protocol.probe_interval * 3,
            protocol,
            delay: DelayModel::default(),
            faults: Vec::new(),
            data_interval: Some(SimDuration::from_secs(5)),
            data_overrides: BTreeMap::new(),
            data_drain: SimDuration::from_secs(5),
        }
    }

    pub fn with_fault(mut self, at: SimTime, spec: FaultSpec) -> Self {
        self.faults.push(ScheduledFault { at, spec });
        self.faults.sort_by_key(|f| f.at);
        self
    }

    /// Data cadence for `node`, if it generates data at all.
    pub fn data_cadence(&self, node: NodeId) -> Option<SimDuration> {
        match self.data_overrides.get(&node) {
            Some(c) => *c,
            None => self.data_interval,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses a scenario; `topology` paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut topology = None;
        let mut settings: Vec<(usize, String, String)> = Vec::new();
        let mut faults = Vec::new();
        let mut data = Vec::new();
        let mut seed = None;
        let mut horizon = None;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let arity = |n: usize| {
                if words.len() == n {
                    Ok(())
                } else {
                    Err(at_line(
                        line,
                        format!("'{}' expects {} arguments", words[0], n - 1),
                    ))
                }
            };
            match words[0] {
                "topology" => {
                    arity(2)?;
                    if topology.is_some() {
                        return Err(at_line(line, "topology given twice"));
                    }
                    let path = base_dir.join(words[1]);
                    let text =
                        std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io {
                            path: path.clone(),
                            source,
                        })?;
                    let topo = Topology::parse(&text)
                        .map_err(|source| ScenarioError::Topology { path, source })?;
                    topology = Some(topo);
                }
                "seed" => {
                    arity(2)?;
                    seed = Some(
                        words[1]
                            .parse::<u64>()
                            .map_err(|_| at_line(line, "seed must be an integer"))?,
                    );
                }
                "horizon" => {
                    arity(2)?;
                    let h = secs(words[1]).filter(|d| *d > SimDuration::ZERO);
                    horizon = Some(h.ok_or_else(|| {
                        at_line(line, "horizon must be a positive number of seconds")
                    })?);
                }
                "set" => {
                    arity(3)?;
                    settings.push((line, words[1].to_string(), words[2].to_string()));
                }
                "fault" | "recover" | "join" => faults.push((line, parse_fault(line, &words)?)),
                "data" => {
                    arity(4)?;
                    if words[2] != "every" {
                        return Err(at_line(line, "expected 'data <node> every <seconds>'"));
                    }
                    let node = node_id(line, words[1])?;
                    let every = secs(words[3]).ok_or_else(|| at_line(line, "bad data interval"))?;
                    data.push((line, node, (every > SimDuration::ZERO).then_some(every)));
                }
                other => return Err(at_line(line, format!("unknown directive '{other}'"))),
            }
        }

        let topology = topology
            .ok_or_else(|| ScenarioError::Invalid("scenario has no topology line".into()))?;
        let mut sc = Scenario::new(topology);
        if let Some(s) = seed {
            sc.seed = s;
        }
        if let Some(h) = horizon {
            sc.horizon = SimTime::ZERO + h;
        }
        let mut sample = None;
        let mut settle = None;
        for (line, key, value) in settings {
            if sc
                .protocol
                .set(&key, &value)
                .map_err(|e| at_line(line, e))?
            {
                continue;
            }
            let dur = |allow_zero: bool| {
                secs(&value)
                    .filter(|d| allow_zero || *d > SimDuration::ZERO)
                    .ok_or_else(|| at_line(line, format!("bad duration '{value}' for {key}")))
            };
            match key.as_str() {
                "base_latency" => sc.delay.base_latency = dur(false)?,
                "jitter" => sc.delay.jitter = dur(true)?,
                "loss_probability" => {
                    let p: f64 = value
                        .parse()
                        .map_err(|_| at_line(line, "bad probability"))?;
                    if !(0.0..1.0).contains(&p) {
                        return Err(at_line(line, "loss_probability must be in [0, 1)"));
                    }
                    sc.delay.loss_probability = p;
                }
                "data_interval" => {
                    let d = dur(true)?;
                    sc.data_interval = (d > SimDuration::ZERO).then_some(d);
                }
                "data_drain" => sc.data_drain = dur(true)?,
                "sample_interval" => sample = Some(dur(false)?),
                "settle_window" => settle = Some(dur(false)?),
                _ => return Err(at_line(line, format!("unknown setting '{key}'"))),
            }
        }
        sc.sample_interval = sample.unwrap_or(sc.protocol.probe_interval);
        sc.settle_window = settle.unwrap_or(sc.protocol.probe_interval * 3);

        let mut known: Vec<NodeId> = sc.topology.nodes().collect();
        for (line, f) in &faults {
            match &f.spec {
                FaultSpec::NodeFail { id } | FaultSpec::NodeRecover { id }
                    if !known.contains(id) =>
                {
                    return Err(at_line(*line, format!("unknown node {id}")));
                }
                FaultSpec::AreaFail { .. } if !sc.topology.is_placement_mode() => {
                    return Err(at_line(*line, "area failure needs a placement topology"));
                }
                FaultSpec::NodeJoin { id, range, .. } => {
                    if !sc.topology.is_placement_mode() {
                        return Err(at_line(*line, "join needs a placement topology"));
                    }
                    if known.contains(id) {
                        return Err(at_line(*line, format!("node {id} already exists")));
                    }
                    if *range <= 0.0 {
                        return Err(at_line(*line, "range must be positive"));
                    }
                    known.push(*id);
                }
                _ => {}
            }
        }
        for (line, node, every) in data {
            if !known.contains(&node) {
                return Err(at_line(line, format!("unknown node {node}")));
            }
            sc.data_overrides.insert(node, every);
        }
        sc.faults = faults.into_iter().map(|(_, f)| f).collect();
        sc.faults.sort_by_key(|f| f.at);
        Ok(sc)
    }
}

fn secs(s: &str) -> Option<SimDuration> {
    s.parse::<f64>().ok().and_then(SimDuration::from_secs_f64)
}

fn node_id(line: usize, s: &str) -> Result<NodeId, ScenarioError> {
    s.parse()
        .map_err(|_| at_line(line, format!("bad node id '{s}'")))
}

fn num(line: usize, s: &str) -> Result<f64, ScenarioError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| at_line(line, format!("bad number '{s}'")))
}

fn parse_fault(line: usize, w: &[&str]) -> Result<ScheduledFault, ScenarioError> {
    let time = |s: &str| {
        secs(s)
            .map(|d| SimTime::ZERO + d)
            .ok_or_else(|| at_line(line, format!("bad time '{s}'")))
    };
    let (spec, t) = match (w[0], w.get(1).copied(), w.len()) {
        ("fault", Some("node"), 4) => (FaultSpec::NodeFail { id: node_id(line, w[2])? }, w[3]),
        ("fault", Some("area"), 6) => {
            let radius = num(line, w[4])?;
            if radius < 0.0 {
                return Err(at_line(line, "radius must be non-negative"));
            }
            (FaultSpec::AreaFail { cx: num(line, w[2])?, cy: num(line, w[3])?, radius }, w[5])
        }
        ("recover", _, 3) => (FaultSpec::NodeRecover { id: node_id(line, w[1])? }, w[2]),
        ("join", _, 6) => (
            FaultSpec::NodeJoin {
                id: node_id(line, w[1])?,
                x: num(line, w[2])?,
                y: num(line, w[3])?,
                range: num(line, w[4])?,
            },
            w[5],
        ),
        _ => {
            return Err(at_line(
                line,
                "expected 'fault node <id> <t>', 'fault area <cx> <cy> <r> <t>', 'recover <id> <t>' or 'join <id> <x> <y> <range> <t>'",
            ))
        }
    };
    Ok(ScheduledFault { at: time(t)?, spec })
}

/// Placement for a join fault.
pub(crate) fn join_placement(id: NodeId, x: f64, y: f64, range: f64) -> NodePlacement<f64> {
    NodePlacement::new(id.0, x, y, range)
}
