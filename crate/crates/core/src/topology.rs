//! Physical network model: node placement, radio connectivity, explicit
//! edge lists, and the line-node incidence matrix used by the loop search.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::{Point, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u32);

/// Identifier of one undirected link ("line").
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LineId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(NodeId)
    }
}

impl FromStr for LineId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(LineId)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate line id {0}")]
    DuplicateLine(LineId),
    #[error("line {line} is a self-loop on node {node}")]
    SelfLoop { line: LineId, node: NodeId },
    #[error("nodes {0} and {1} are already joined by another line")]
    MultiEdge(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown line {0}")]
    UnknownLine(LineId),
    #[error("node {0}: range must be positive and coordinates finite")]
    BadPlacement(NodeId),
    #[error("base station {0} is not part of the topology")]
    MissingBase(NodeId),
    #[error("topology has explicit edges, not placements")]
    NotPlacementMode,
    #[error("could not generate a connected topology in {0} attempts")]
    Disconnected(u32),
    #[error("at least two nodes are required")]
    TooSmall,
}

/// Failure while reading a topology file; carries the 1-based line number.
#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// One sensor's location and radio radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePlacement<S> {
    pub id: NodeId,
    pub pos: Point<S>,
    pub range: S,
}

impl<S: Scalar> NodePlacement<S> {
    pub fn new(id: u32, x: S, y: S, range: S) -> Self {
        Self {
            id: NodeId(id),
            pos: Point::new(x, y),
            range,
        }
    }

    fn is_valid(&self) -> bool {
        self.pos.is_finite() && self.range.is_finite() && self.range > S::zero()
    }

    /// Links are bidirectional, so the shorter of the two radii decides.
    pub fn links_with(&self, other: &Self) -> bool {
        self.pos.distance(&other.pos) <= self.range.min(other.range)
    }
}

/// Physical network graph.
///
/// Either every node has a placement (unit-disk mode) and edges are derived
/// from geometry, or the edges were given explicitly and there are no
/// placements.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology<S = f64> {
    placements: Option<BTreeMap<NodeId, NodePlacement<S>>>,
    edges: BTreeMap<LineId, (NodeId, NodeId)>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    base_station: NodeId,
}

/// Builds the unit-disk graph over `placements`. Line ids follow ascending
/// `(min id, max id)` order starting at 1.
pub fn build_unit_disk<S: Scalar>(
    placements: impl IntoIterator<Item = NodePlacement<S>>,
    base_station: NodeId,
) -> Result<Topology<S>, TopologyError> {
    let mut by_id = BTreeMap::new();
    for p in placements {
        if !p.is_valid() {
            return Err(TopologyError::BadPlacement(p.id));
        }
        if by_id.insert(p.id, p).is_some() {
            return Err(TopologyError::DuplicateNode(p.id));
        }
    }
    if !by_id.contains_key(&base_station) {
        return Err(TopologyError::MissingBase(base_station));
    }
    let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> =
        by_id.keys().map(|&id| (id, BTreeSet::new())).collect();
    let mut edges = BTreeMap::new();
    let nodes: Vec<&NodePlacement<S>> = by_id.values().collect();
    let mut next = 1;
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            if a.links_with(b) {
                edges.insert(LineId(next), (a.id, b.id));
                next += 1;
                adjacency.get_mut(&a.id).unwrap().insert(b.id);
                adjacency.get_mut(&b.id).unwrap().insert(a.id);
            }
        }
    }
    Ok(Topology {
        placements: Some(by_id),
        edges,
        adjacency,
        base_station,
    })
}

impl<S: Scalar> Topology<S> {
    /// Explicit-edge mode. The node set is the edge endpoints plus the base
    /// station.
    pub fn from_edges(
        edges: impl IntoIterator<Item = (LineId, NodeId, NodeId)>,
        base_station: NodeId,
    ) -> Result<Self, TopologyError> {
        let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        adjacency.insert(base_station, BTreeSet::new());
        let mut map = BTreeMap::new();
        for (line, a, b) in edges {
            if a == b {
                return Err(TopologyError::SelfLoop { line, node: a });
            }
            if map.contains_key(&line) {
                return Err(TopologyError::DuplicateLine(line));
            }
            if adjacency.get(&a).is_some_and(|n| n.contains(&b)) {
                return Err(TopologyError::MultiEdge(a.min(b), a.max(b)));
            }
            map.insert(line, (a.min(b), a.max(b)));
            adjacency.entry(a).or_default().insert(b);
            adjacency.entry(b).or_default().insert(a);
        }
        Ok(Topology {
            placements: None,
            edges: map,
            adjacency,
            base_station,
        })
    }

    /// Explicit-edge mode with line ids numbered 1.. in the given order.
    pub fn from_pairs(pairs: &[(u32, u32)], base_station: u32) -> Result<Self, TopologyError> {
        Self::from_edges(
            pairs
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| (LineId(i as u32 + 1), NodeId(a), NodeId(b))),
            NodeId(base_station),
        )
    }

    pub fn base_station(&self) -> NodeId {
        self.base_station
    }

    pub fn is_placement_mode(&self) -> bool {
        self.placements.is_some()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.adjacency.contains_key(&id)
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&id).into_iter().flatten().copied()
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency.get(&id).map_or(0, BTreeSet::len)
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|n| n.contains(&b))
    }

    /// Edges as `(line, low id, high id)` in ascending line order.
    pub fn edges(&self) -> impl Iterator<Item = (LineId, NodeId, NodeId)> + '_ {
        self.edges.iter().map(|(&l, &(a, b))| (l, a, b))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn placement(&self, id: NodeId) -> Option<&NodePlacement<S>> {
        self.placements.as_ref()?.get(&id)
    }

    pub fn placements(&self) -> impl Iterator<Item = &NodePlacement<S>> + '_ {
        self.placements.iter().flat_map(|p| p.values())
    }

    pub fn position(&self, id: NodeId) -> Option<Point<S>> {
        self.placement(id).map(|p| p.pos)
    }

    /// Adds a node to a placement-mode topology. New links get fresh line ids
    /// above the current maximum, in ascending partner order. Returns the new
    /// neighbours.
    pub fn add_placement(&mut self, p: NodePlacement<S>) -> Result<Vec<NodeId>, TopologyError> {
        if !p.is_valid() {
            return Err(TopologyError::BadPlacement(p.id));
        }
        let placements = self
            .placements
            .as_mut()
            .ok_or(TopologyError::NotPlacementMode)?;
        if placements.contains_key(&p.id) {
            return Err(TopologyError::DuplicateNode(p.id));
        }
        let first = self.edges.keys().next_back().map_or(1, |l| l.0 + 1);
        let partners: Vec<NodeId> = placements
            .values()
            .filter(|q| p.links_with(q))
            .map(|q| q.id)
            .collect();
        placements.insert(p.id, p);
        self.adjacency.insert(p.id, BTreeSet::new());
        for (next, &q) in (first..).zip(&partners) {
            self.edges.insert(LineId(next), (p.id.min(q), p.id.max(q)));
            self.adjacency.get_mut(&p.id).unwrap().insert(q);
            self.adjacency.get_mut(&q).unwrap().insert(p.id);
        }
        Ok(partners)
    }

    /// True when every node is reachable from the base station.
    pub fn is_connected(&self) -> bool {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([self.base_station]);
        seen.insert(self.base_station);
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.len() == self.adjacency.len()
    }

    /// Parses the line-oriented topology format.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut base = None;
        let mut placements = Vec::new();
        let mut edges = Vec::new();
        let mut first_node_line = None;
        let mut first_edge_line = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let num = |idx: usize, what: &str| -> Result<u32, ParseError> {
                fields
                    .get(idx)
                    .ok_or_else(|| ParseError::new(lineno, format!("missing {what}")))?
                    .parse::<u32>()
                    .map_err(|_| ParseError::new(lineno, format!("bad {what} '{}'", fields[idx])))
            };
            let real = |idx: usize, what: &str| -> Result<S, ParseError> {
                fields
                    .get(idx)
                    .ok_or_else(|| ParseError::new(lineno, format!("missing {what}")))?
                    .parse::<S>()
                    .map_err(|_| ParseError::new(lineno, format!("bad {what} '{}'", fields[idx])))
            };
            let expect_len = |n: usize| -> Result<(), ParseError> {
                if fields.len() != n {
                    return Err(ParseError::new(
                        lineno,
                        format!(
                            "'{}' expects {} fields, got {}",
                            fields[0],
                            n - 1,
                            fields.len() - 1
                        ),
                    ));
                }
                Ok(())
            };
            match fields[0] {
                "base" => {
                    expect_len(2)?;
                    if base.is_some() {
                        return Err(ParseError::new(lineno, "base station declared twice"));
                    }
                    base = Some(NodeId(num(1, "base id")?));
                }
                "node" => {
                    expect_len(5)?;
                    first_node_line.get_or_insert(lineno);
                    let p = NodePlacement {
                        id: NodeId(num(1, "node id")?),
                        pos: Point::new(real(2, "x")?, real(3, "y")?),
                        range: real(4, "range")?,
                    };
                    placements.push((lineno, p));
                }
                "edge" => {
                    expect_len(4)?;
                    first_edge_line.get_or_insert(lineno);
                    edges.push((
                        lineno,
                        LineId(num(1, "line id")?),
                        NodeId(num(2, "endpoint")?),
                        NodeId(num(3, "endpoint")?),
                    ));
                }
                other => {
                    return Err(ParseError::new(
                        lineno,
                        format!("unknown directive '{other}'"),
                    ))
                }
            }
        }
        if let (Some(n), Some(e)) = (first_node_line, first_edge_line) {
            return Err(ParseError::new(
                n.max(e),
                "node and edge lines cannot be mixed; use either placements or explicit edges",
            ));
        }
        let last = text.lines().count().max(1);
        let base = base.ok_or_else(|| ParseError::new(last, "missing 'base <id>' line"))?;
        if first_node_line.is_some() {
            let mut seen = BTreeSet::new();
            for (lineno, p) in &placements {
                if !seen.insert(p.id) {
                    return Err(ParseError::new(
                        *lineno,
                        format!("duplicate node id {}", p.id),
                    ));
                }
                if !p.is_valid() {
                    return Err(ParseError::new(
                        *lineno,
                        TopologyError::BadPlacement(p.id).to_string(),
                    ));
                }
            }
            build_unit_disk(placements.into_iter().map(|(_, p)| p), base)
                .map_err(|e| ParseError::new(last, e.to_string()))
        } else {
            // Validate one edge at a time so errors point at the right line.
            let mut acc: Vec<(LineId, NodeId, NodeId)> = Vec::new();
            for (lineno, l, a, b) in edges {
                acc.push((l, a, b));
                Topology::<S>::from_edges(acc.iter().copied(), base)
                    .map_err(|e| ParseError::new(lineno, e.to_string()))?;
            }
            Topology::from_edges(acc, base).map_err(|e| ParseError::new(last, e.to_string()))
        }
    }

    /// Renders the topology in the same format [`Topology::parse`] reads.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "base {}", self.base_station).unwrap();
        match &self.placements {
            Some(ps) => {
                for p in ps.values() {
                    writeln!(out, "node {} {} {} {}", p.id, p.pos.x, p.pos.y, p.range).unwrap();
                }
            }
            None => {
                for (l, a, b) in self.edges() {
                    writeln!(out, "edge {l} {a} {b}").unwrap();
                }
            }
        }
        out
    }
}

/// Uniform random placement in `[0,width] x [0,height]`, node 0 as base
/// station, resampled until the unit-disk graph is connected.
pub fn random_connected<S: Scalar>(
    n: u32,
    width: S,
    height: S,
    range: S,
    seed: u64,
) -> Result<Topology<S>, TopologyError> {
    const MAX_ATTEMPTS: u32 = 1000;
    if n < 2 {
        return Err(TopologyError::TooSmall);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width.to_f64_lossy(), height.to_f64_lossy());
    for _ in 0..MAX_ATTEMPTS {
        let placements = (0..n).map(|id| {
            // Millimetre resolution keeps generated files short and exact.
            let x = (rng.gen::<f64>() * w * 1000.0).round() / 1000.0;
            let y = (rng.gen::<f64>() * h * 1000.0).round() / 1000.0;
            NodePlacement::new(id, S::from_f64_lossy(x), S::from_f64_lossy(y), range)
        });
        let topo = build_unit_disk(placements.collect::<Vec<_>>(), NodeId(0))?;
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(TopologyError::Disconnected(MAX_ATTEMPTS))
}

/// Line-node incidence matrix: for each node, its incident lines (ascending
/// line id) with the far-end node of each.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LniMatrix {
    rows: BTreeMap<NodeId, Vec<(LineId, NodeId)>>,
}

pub fn build_lni<S: Scalar>(topology: &Topology<S>) -> LniMatrix {
    let mut rows: BTreeMap<NodeId, Vec<(LineId, NodeId)>> =
        topology.nodes().map(|n| (n, Vec::new())).collect();
    // edges() iterates in ascending line order, so rows come out sorted
    for (line, a, b) in topology.edges() {
        rows.get_mut(&a).unwrap().push((line, b));
        rows.get_mut(&b).unwrap().push((line, a));
    }
    LniMatrix { rows }
}

impl LniMatrix {
    pub fn row(&self, node: NodeId) -> &[(LineId, NodeId)] {
        self.rows.get(&node).map_or(&[], Vec::as_slice)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.rows.keys().copied()
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        self.rows.contains_key(&node)
    }

    /// Sum of all row lengths; twice the number of remaining lines.
    pub fn total_len(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.values().all(Vec::is_empty)
    }

    fn endpoints(&self, line: LineId) -> Option<(NodeId, NodeId)> {
        self.rows.iter().find_map(|(&n, row)| {
            row.iter()
                .find(|(l, _)| *l == line)
                .map(|&(_, far)| (n, far))
        })
    }

    /// Drops `line` from both endpoint rows, keeping the order of the
    /// remaining entries.
    pub fn remove_line(&mut self, line: LineId) -> Result<(), TopologyError> {
        let (a, b) = self
            .endpoints(line)
            .ok_or(TopologyError::UnknownLine(line))?;
        for n in [a, b] {
            if let Some(row) = self.rows.get_mut(&n) {
                row.retain(|(l, _)| *l != line);
            }
        }
        Ok(())
    }

    /// Drops every line incident to `node`.
    pub fn remove_node_lines(&mut self, node: NodeId) -> Result<(), TopologyError> {
        let row = std::mem::take(
            self.rows
                .get_mut(&node)
                .ok_or(TopologyError::UnknownNode(node))?,
        );
        for (line, far) in row {
            if let Some(r) = self.rows.get_mut(&far) {
                r.retain(|(l, _)| *l != line);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) use tests::five_node;

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn five_node() -> Topology<f64> {
        Topology::from_pairs(
            &[
                (1, 2),
                (2, 3),
                (1, 3),
                (3, 4),
                (4, 5),
                (1, 5),
                (3, 5),
                (2, 4),
            ],
            1,
        )
        .unwrap()
    }

    #[test]
    fn unit_disk_within_and_beyond_range() {
        let t = build_unit_disk(
            [
                NodePlacement::new(0, 0.0, 0.0, 10.0),
                NodePlacement::new(1, 5.0, 0.0, 10.0),
            ],
            NodeId(0),
        )
        .unwrap();
        assert_eq!(t.edge_count(), 1);
        let t = build_unit_disk(
            [
                NodePlacement::new(0, 0.0, 0.0, 10.0),
                NodePlacement::new(1, 11.0, 0.0, 10.0),
            ],
            NodeId(0),
        )
        .unwrap();
        assert_eq!(t.edge_count(), 0);
    }

    #[test]
    fn collinear_chain() {
        let t = build_unit_disk(
            (0..3)
                .map(|i| NodePlacement::new(i, 8.0 * i as f64, 0.0, 10.0))
                .collect::<Vec<_>>(),
            NodeId(0),
        )
        .unwrap();
        let e: Vec<_> = t.edges().collect();
        assert_eq!(
            e,
            vec![
                (LineId(1), NodeId(0), NodeId(1)),
                (LineId(2), NodeId(1), NodeId(2))
            ]
        );
        assert!(!t.are_adjacent(NodeId(0), NodeId(2)));
    }

    #[test]
    fn asymmetric_range_uses_minimum() {
        let t = build_unit_disk(
            [
                NodePlacement::new(0, 0.0f32, 0.0, 20.0),
                NodePlacement::new(1, 15.0, 0.0, 10.0),
            ],
            NodeId(0),
        )
        .unwrap();
        assert_eq!(t.edge_count(), 0);
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = build_unit_disk(
            [
                NodePlacement::new(3, 0.0, 0.0, 1.0),
                NodePlacement::new(3, 1.0, 0.0, 1.0),
            ],
            NodeId(3),
        )
        .unwrap_err();
        assert_eq!(err, TopologyError::DuplicateNode(NodeId(3)));
    }

    #[test]
    fn lni_of_five_node() {
        let lni = build_lni(&five_node());
        assert_eq!(lni.row(NodeId(1)).len(), 3);
        assert_eq!(lni.total_len(), 16);
        let row1: Vec<_> = lni.row(NodeId(1)).iter().map(|(_, n)| n.0).collect();
        assert_eq!(row1, vec![2, 3, 5]);
    }

    #[test]
    fn lni_small_cases() {
        let t = Topology::<f64>::from_pairs(&[(1, 2)], 1).unwrap();
        let lni = build_lni(&t);
        assert_eq!(lni.row(NodeId(1)).len(), 1);
        assert_eq!(lni.row(NodeId(2)).len(), 1);
        let t = Topology::<f64>::from_pairs(&[], 1).unwrap();
        assert!(build_lni(&t).is_empty());
    }

    #[test]
    fn remove_line_keeps_order() {
        let mut lni = build_lni(&five_node());
        lni.remove_line(LineId(1)).unwrap();
        assert_eq!(lni.row(NodeId(1)).len(), 2);
        assert_eq!(lni.row(NodeId(2)).len(), 2);
        let row2: Vec<_> = lni.row(NodeId(2)).iter().map(|(l, _)| l.0).collect();
        assert_eq!(row2, vec![2, 8]);
        assert_eq!(
            lni.remove_line(LineId(1)),
            Err(TopologyError::UnknownLine(LineId(1)))
        );
    }

    #[test]
    fn remove_line_matches_rebuild() {
        let mut lni = build_lni(&five_node());
        lni.remove_line(LineId(4)).unwrap();
        let reduced = Topology::<f64>::from_edges(
            five_node().edges().filter(|(l, _, _)| *l != LineId(4)),
            NodeId(1),
        )
        .unwrap();
        assert_eq!(lni, build_lni(&reduced));
    }

    #[test]
    fn leaf_row_empties() {
        let t = Topology::<f64>::from_pairs(&[(1, 2), (2, 3)], 1).unwrap();
        let mut lni = build_lni(&t);
        lni.remove_line(LineId(2)).unwrap();
        assert!(lni.row(NodeId(3)).is_empty());
    }

    #[test]
    fn remove_node_lines_of_five_node() {
        let mut lni = build_lni(&five_node());
        lni.remove_node_lines(NodeId(1)).unwrap();
        assert!(lni.row(NodeId(1)).is_empty());
        let mut remaining: Vec<(u32, u32)> = Vec::new();
        for n in lni.nodes() {
            for &(_, far) in lni.row(n) {
                if n < far {
                    remaining.push((n.0, far.0));
                }
            }
        }
        remaining.sort();
        assert_eq!(remaining, vec![(2, 3), (2, 4), (3, 4), (3, 5), (4, 5)]);
        assert_eq!(
            lni.remove_node_lines(NodeId(42)),
            Err(TopologyError::UnknownNode(NodeId(42)))
        );
    }

    #[test]
    fn remove_isolated_and_all_nodes() {
        let t = Topology::<f64>::from_pairs(&[(2, 3)], 1).unwrap();
        let mut lni = build_lni(&t);
        let before = lni.clone();
        lni.remove_node_lines(NodeId(1)).unwrap();
        assert_eq!(lni, before);
        let mut lni = build_lni(&five_node());
        for n in 1..=5 {
            lni.remove_node_lines(NodeId(n)).unwrap();
        }
        assert!(lni.is_empty());
    }

    #[test]
    fn parse_rejects_mixed_and_multi_edges() {
        let err = Topology::<f64>::parse("base 1\nnode 1 0 0 5\nedge 1 1 2\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = Topology::<f64>::parse("base 1\nedge 1 1 2\nedge 2 2 1\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("already joined"));
        let err = Topology::<f64>::parse("base 1\nedge 1 1 1\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = Topology::<f64>::parse("edge 1 1 2\n").unwrap_err();
        assert!(err.message.contains("base"));
        let err = Topology::<f64>::parse("base 1\nnode 1 0 0 5\nnode 1 1 0 5\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = Topology::<f64>::parse("base 1\nnode 1 0 0 -5\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = Topology::<f64>::parse("base 1\nfoo\n").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn parse_render_round_trip() {
        let text = "# fig 5\nbase 1\nedge 1 1 2\nedge 2 2 3 # trailing\n\nedge 3 1 3\n";
        let t = Topology::<f64>::parse(text).unwrap();
        assert_eq!(t.edge_count(), 3);
        assert_eq!(Topology::<f64>::parse(&t.render()).unwrap(), t);
        let g = random_connected(12, 50.0f64, 50.0, 20.0, 7).unwrap();
        assert_eq!(Topology::<f64>::parse(&g.render()).unwrap(), g);
    }

    #[test]
    fn generator_is_deterministic_and_connected() {
        let a = random_connected(25, 60.0f64, 60.0, 18.0, 3).unwrap();
        let b = random_connected(25, 60.0f64, 60.0, 18.0, 3).unwrap();
        assert_eq!(a.render(), b.render());
        assert!(a.is_connected());
        let pair = random_connected(2, 1.0f64, 1.0, 5.0, 0).unwrap();
        assert_eq!(pair.edge_count(), 1);
        assert_eq!(
            random_connected(30, 1000.0f64, 1000.0, 1.0, 0),
            Err(TopologyError::Disconnected(1000))
        );
        assert_eq!(
            random_connected(1, 1.0f64, 1.0, 1.0, 0),
            Err(TopologyError::TooSmall)
        );
    }

    #[test]
    fn join_appends_lines() {
        let mut t = build_unit_disk(
            [
                NodePlacement::new(0, 0.0, 0.0, 10.0),
                NodePlacement::new(1, 8.0, 0.0, 10.0),
            ],
            NodeId(0),
        )
        .unwrap();
        let partners = t
            .add_placement(NodePlacement::new(7, 4.0, 3.0, 10.0))
            .unwrap();
        assert_eq!(partners, vec![NodeId(0), NodeId(1)]);
        let lines: Vec<_> = t.edges().map(|(l, _, _)| l.0).collect();
        assert_eq!(lines, vec![1, 2, 3]);
        let mut explicit = five_node();
        assert_eq!(
            explicit.add_placement(NodePlacement::new(9, 0.0, 0.0, 1.0)),
            Err(TopologyError::NotPlacementMode)
        );
    }
}
