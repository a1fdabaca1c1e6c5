//! Enumeration of every simple cycle ("loop") through a source node.
//!
//! The search works on the line-node incidence matrix. Loops that share the
//! same second node form a BLOCK. A block is opened by taking the first line
//! left in the source's row and removing it from the matrix, so every loop
//! found inside the block must return to the source over a different line.
//! Within a block the partial loop is extended one node at a time; each found
//! loop is stored as a row and the search resumes from a copy of that row
//! without its closing entry. Lines already tried from a node are held in
//! that node's LCON set and are freed again when the search steps back past
//! the node. LECON collects every line used by the loops of the block.
//!
//! [`oracle_cycles_through`] is an independent brute-force enumerator used
//! for verification; it shares no search code with the block search.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::topology::{build_lni, LineId, LniMatrix, NodeId, Topology};

/// A closed walk `source, v1, .., vk, source` with distinct interior nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Loop {
    nodes: Vec<NodeId>,
}

impl Loop {
    /// Validates the closed-walk shape; adjacency is not checked here.
    pub fn new(nodes: Vec<NodeId>) -> Result<Self, LoopError> {
        if nodes.len() < 4 {
            return Err(LoopError::TooShort(nodes.len()));
        }
        if nodes.first() != nodes.last() {
            return Err(LoopError::NotClosed);
        }
        let interior = &nodes[..nodes.len() - 1];
        let distinct: BTreeSet<_> = interior.iter().collect();
        if distinct.len() != interior.len() {
            return Err(LoopError::RepeatedNode);
        }
        Ok(Self { nodes })
    }

    pub fn from_ids(ids: &[u32]) -> Result<Self, LoopError> {
        Self::new(ids.iter().map(|&i| NodeId(i)).collect())
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn second(&self) -> NodeId {
        self.nodes[1]
    }

    /// Number of distinct nodes on the loop.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn canonical(&self) -> CycleKey {
        canonicalize_nodes(&self.nodes[..self.nodes.len() - 1])
    }
}

impl fmt::Display for Loop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str("->")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LoopError {
    #[error("a loop needs at least three distinct nodes, got {0} entries")]
    TooShort(usize),
    #[error("a loop must start and end at the same node")]
    NotClosed,
    #[error("a loop may not revisit a node")]
    RepeatedNode,
}

/// Rotation- and reflection-invariant identity of an undirected cycle: the
/// cycle starting at its smallest node, in the direction whose second entry
/// is smaller.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CycleKey(pub Vec<NodeId>);

impl fmt::Display for CycleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.0 {
            write!(f, "{n}->")?;
        }
        match self.0.first() {
            Some(n) => write!(f, "{n}"),
            None => Ok(()),
        }
    }
}

pub fn canonicalize(l: &Loop) -> CycleKey {
    l.canonical()
}

/// Canonical key for an open cycle listing (no repeated closing node).
pub fn canonicalize_nodes(cycle: &[NodeId]) -> CycleKey {
    let n = cycle.len();
    if n == 0 {
        return CycleKey(Vec::new());
    }
    let start = (0..n).min_by_key(|&i| cycle[i]).unwrap();
    let forward: Vec<NodeId> = (0..n).map(|k| cycle[(start + k) % n]).collect();
    let backward: Vec<NodeId> = (0..n).map(|k| cycle[(start + n - k) % n]).collect();
    CycleKey(forward.min(backward))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub second_node: NodeId,
    pub loops: Vec<Loop>,
    /// Every line used by at least one loop of the block (LECON).
    pub lines: BTreeSet<LineId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopReport {
    pub source: NodeId,
    pub blocks: Vec<Block>,
}

impl LoopReport {
    pub fn nblock(&self) -> usize {
        self.blocks.len()
    }

    pub fn loops(&self) -> impl Iterator<Item = &Loop> + '_ {
        self.blocks.iter().flat_map(|b| b.loops.iter())
    }

    pub fn loop_count(&self) -> usize {
        self.blocks.iter().map(|b| b.loops.len()).sum()
    }

    pub fn canonical_set(&self) -> BTreeSet<CycleKey> {
        self.loops().map(Loop::canonical).collect()
    }
}

/// Working state of one block search.
#[derive(Debug, Default)]
struct SearchState {
    /// Found loops of the current block, one per row; the last row is the
    /// one being extended.
    loop_rows: Vec<Vec<NodeId>>,
    /// Lines of the partial loop in the working row, parallel to its hops.
    row_lines: Vec<LineId>,
    /// Lines travelled by the loops of this block.
    lecon: BTreeSet<LineId>,
    /// Per node on the working row: lines already taken from that node.
    lcon: BTreeMap<NodeId, BTreeSet<LineId>>,
    level: usize,
    nrestnode: NodeId,
}

impl SearchState {
    fn open(source: NodeId, second: NodeId, first_line: LineId) -> Self {
        let mut st = SearchState {
            loop_rows: vec![vec![source, second]],
            row_lines: vec![first_line],
            nrestnode: second,
            level: 1,
            ..Default::default()
        };
        st.lcon.insert(second, BTreeSet::new());
        st
    }

    fn row(&self) -> &Vec<NodeId> {
        self.loop_rows.last().unwrap()
    }

    fn row_mut(&mut self) -> &mut Vec<NodeId> {
        self.loop_rows.last_mut().unwrap()
    }

    /// Next line from NRESTNODE that is neither in its LCON nor leads back
    /// into the working row (the source itself excepted).
    fn next_free_line(&mut self, lni: &LniMatrix, source: NodeId) -> Option<(LineId, NodeId)> {
        let node = self.nrestnode;
        let tried = self.lcon.entry(node).or_default();
        for &(line, far) in lni.row(node) {
            if tried.contains(&line) {
                continue;
            }
            tried.insert(line);
            let row = self.loop_rows.last().unwrap();
            if far != source && row.contains(&far) {
                continue;
            }
            return Some((line, far));
        }
        None
    }

    fn close_loop(&mut self, source: NodeId, line: LineId) -> Loop {
        self.lecon.extend(self.row_lines.iter().copied());
        self.lecon.insert(line);
        let mut closed = self.row().clone();
        closed.push(source);
        // The stored row keeps the closing entry; the working copy does not.
        let copy = self.row().clone();
        self.row_mut().push(source);
        self.loop_rows.push(copy);
        Loop::new(closed).expect("block search produced a malformed loop")
    }

    fn advance(&mut self, line: LineId, node: NodeId) {
        self.row_mut().push(node);
        self.row_lines.push(line);
        self.level += 1;
        self.nrestnode = node;
        // A node entered on a new prefix starts with all of its lines free.
        self.lcon.insert(node, BTreeSet::new());
    }

    /// Steps one column back. Returns false once the search would drop the
    /// second node, which ends the block.
    fn retreat(&mut self) -> bool {
        if self.level <= 1 {
            return false;
        }
        let dropped = self.row_mut().pop().unwrap();
        self.row_lines.pop();
        self.lcon.remove(&dropped);
        self.level -= 1;
        self.nrestnode = *self.row().last().unwrap();
        true
    }
}

fn search_block(lni: &LniMatrix, source: NodeId, second: NodeId, first_line: LineId) -> Block {
    let mut st = SearchState::open(source, second, first_line);
    let mut loops = Vec::new();
    loop {
        match st.next_free_line(lni, source) {
            Some((line, far)) if far == source => {
                if st.row().len() >= 3 {
                    loops.push(st.close_loop(source, line));
                }
            }
            Some((line, far)) => st.advance(line, far),
            None => {
                if !st.retreat() {
                    break;
                }
            }
        }
    }
    Block {
        second_node: second,
        loops,
        lines: st.lecon,
    }
}

/// Runs all blocks for `source` and leaves the matrix with every line of
/// `source` removed.
fn search_source(lni: &mut LniMatrix, source: NodeId) -> LoopReport {
    let mut blocks = Vec::new();
    // A source with N lines yields N - 1 blocks: every loop through the last
    // line also uses an earlier one and was found already.
    while lni.row(source).len() >= 2 {
        let (first_line, second) = lni.row(source)[0];
        lni.remove_line(first_line)
            .expect("line taken from the matrix");
        blocks.push(search_block(lni, source, second, first_line));
    }
    lni.remove_node_lines(source)
        .expect("source is in the matrix");
    LoopReport { source, blocks }
}

/// Every simple cycle through `source`, grouped into blocks by second node.
/// Unknown or low-degree sources yield an empty report.
pub fn enumerate_loops_from_source<S: Scalar>(
    topology: &Topology<S>,
    source: NodeId,
) -> LoopReport {
    let mut lni = build_lni(topology);
    if !lni.contains_node(source) {
        return LoopReport {
            source,
            blocks: Vec::new(),
        };
    }
    search_source(&mut lni, source)
}

/// Reports for successive sources in ascending id, each on the network
/// reduced by the previous sources. The last two nodes cannot close a loop
/// and are not searched.
pub fn enumerate_all_loops<S: Scalar>(topology: &Topology<S>) -> Vec<LoopReport> {
    let mut lni = build_lni(topology);
    let nodes: Vec<NodeId> = lni.nodes().collect();
    let searched = nodes.len().saturating_sub(2);
    nodes[..searched]
        .iter()
        .map(|&s| search_source(&mut lni, s))
        .collect()
}

/// Brute force: every simple path between two neighbours of `source` that
/// avoids `source` closes one cycle. Each cycle is reached from both ends and
/// deduplicated by its canonical key.
pub fn oracle_cycles_through<S: Scalar>(
    topology: &Topology<S>,
    source: NodeId,
) -> BTreeSet<CycleKey> {
    let adj: BTreeMap<NodeId, Vec<NodeId>> = topology
        .nodes()
        .map(|n| (n, topology.neighbors(n).collect()))
        .collect();
    let mut out = BTreeSet::new();
    let Some(starts) = adj.get(&source) else {
        return out;
    };
    for &start in starts {
        let mut path = vec![source, start];
        oracle_dfs(&adj, source, &mut path, &mut out);
    }
    out
}

fn oracle_dfs(
    adj: &BTreeMap<NodeId, Vec<NodeId>>,
    source: NodeId,
    path: &mut Vec<NodeId>,
    out: &mut BTreeSet<CycleKey>,
) {
    let tip = *path.last().unwrap();
    for &next in &adj[&tip] {
        if next == source {
            if path.len() >= 3 {
                out.insert(canonicalize_nodes(path));
            }
        } else if !path.contains(&next) {
            path.push(next);
            oracle_dfs(adj, source, path, out);
            path.pop();
        }
    }
}

/// All simple cycles of the graph: union of the per-node oracle sets.
pub fn oracle_all_cycles<S: Scalar>(topology: &Topology<S>) -> BTreeSet<CycleKey> {
    topology
        .nodes()
        .flat_map(|n| oracle_cycles_through(topology, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::five_node;

    fn keys(loops: &[&[u32]]) -> BTreeSet<CycleKey> {
        loops
            .iter()
            .map(|l| Loop::from_ids(l).unwrap().canonical())
            .collect()
    }

    const FIVE_NODE_LOOPS: [&[u32]; 10] = [
        &[1, 2, 3, 1],
        &[1, 2, 3, 4, 5, 1],
        &[1, 2, 3, 5, 1],
        &[1, 2, 4, 3, 1],
        &[1, 2, 4, 3, 5, 1],
        &[1, 2, 4, 5, 1],
        &[1, 2, 4, 5, 3, 1],
        &[1, 3, 4, 5, 1],
        &[1, 3, 2, 4, 5, 1],
        &[1, 3, 5, 1],
    ];

    #[test]
    fn five_node_from_node_1() {
        let report = enumerate_loops_from_source(&five_node(), NodeId(1));
        assert_eq!(report.nblock(), 2);
        let sizes: Vec<_> = report.blocks.iter().map(|b| b.loops.len()).collect();
        assert_eq!(sizes, vec![7, 3]);
        assert_eq!(report.blocks[0].second_node, NodeId(2));
        assert_eq!(report.blocks[1].second_node, NodeId(3));
        assert_eq!(report.canonical_set(), keys(&FIVE_NODE_LOOPS));
        for b in &report.blocks {
            assert!(b.loops.iter().all(|l| l.second() == b.second_node));
        }
    }

    #[test]
    fn five_node_oracle_matches_list() {
        assert_eq!(
            oracle_cycles_through(&five_node(), NodeId(1)),
            keys(&FIVE_NODE_LOOPS)
        );
    }

    #[test]
    fn five_node_all_loops() {
        let reports = enumerate_all_loops(&five_node());
        let total: usize = reports.iter().map(LoopReport::loop_count).sum();
        assert_eq!(total, 13);
        assert_eq!(reports[0].loop_count(), 10);
        assert_eq!(reports.len(), 3);
        let union: BTreeSet<_> = reports.iter().flat_map(|r| r.canonical_set()).collect();
        assert_eq!(union, oracle_all_cycles(&five_node()));
    }

    #[test]
    fn small_graphs() {
        let tri = Topology::<f64>::from_pairs(&[(1, 2), (2, 3), (1, 3)], 1).unwrap();
        let r = enumerate_loops_from_source(&tri, NodeId(1));
        assert_eq!(r.loop_count(), 1);
        assert_eq!(r.canonical_set(), keys(&[&[1, 2, 3, 1]]));

        let path = Topology::<f64>::from_pairs(&[(1, 2), (2, 3)], 1).unwrap();
        assert_eq!(
            enumerate_loops_from_source(&path, NodeId(1)).loop_count(),
            0
        );

        let k4 = Topology::<f64>::from_pairs(&[(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)], 1)
            .unwrap();
        let r = enumerate_loops_from_source(&k4, NodeId(1));
        assert_eq!(r.loop_count(), 6);
        assert_eq!(r.canonical_set(), oracle_cycles_through(&k4, NodeId(1)));
        assert_eq!(r.nblock(), 2);
    }

    #[test]
    fn all_loops_small_cases() {
        let forest = Topology::<f64>::from_pairs(&[(1, 2), (2, 3), (4, 5)], 1).unwrap();
        assert!(enumerate_all_loops(&forest)
            .iter()
            .all(|r| r.loop_count() == 0));
        let two = Topology::<f64>::from_pairs(&[(1, 2), (2, 3), (1, 3), (4, 5), (5, 6), (4, 6)], 1)
            .unwrap();
        let total: usize = enumerate_all_loops(&two)
            .iter()
            .map(LoopReport::loop_count)
            .sum();
        assert_eq!(total, 2);
    }

    #[test]
    fn oracle_small_cases() {
        let star = Topology::<f64>::from_pairs(&[(1, 2), (1, 3), (1, 4)], 1).unwrap();
        assert!(oracle_cycles_through(&star, NodeId(1)).is_empty());
        assert_eq!(
            enumerate_loops_from_source(&star, NodeId(1)).loop_count(),
            0
        );
        let c4 = Topology::<f64>::from_pairs(&[(1, 2), (2, 3), (3, 4), (4, 1)], 1).unwrap();
        for s in 1..=4 {
            assert_eq!(oracle_cycles_through(&c4, NodeId(s)).len(), 1);
        }
    }

    #[test]
    fn unknown_source_is_empty() {
        let r = enumerate_loops_from_source(&five_node(), NodeId(99));
        assert_eq!(r.nblock(), 0);
        assert!(oracle_cycles_through(&five_node(), NodeId(99)).is_empty());
    }

    #[test]
    fn canonical_keys() {
        let a = Loop::from_ids(&[1, 2, 3, 1]).unwrap();
        let b = Loop::from_ids(&[1, 3, 2, 1]).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.canonical(), a.canonical());
        let c = Loop::from_ids(&[1, 2, 4, 5, 3, 1]).unwrap();
        let d = Loop::from_ids(&[1, 3, 2, 4, 5, 1]).unwrap();
        assert_ne!(c.canonical(), d.canonical());
        let rotated = Loop::from_ids(&[4, 5, 3, 1, 2, 4]).unwrap();
        assert_eq!(rotated.canonical(), c.canonical());
        assert_eq!(c.to_string(), "1->2->4->5->3->1");
    }

    #[test]
    fn malformed_loops_rejected() {
        assert_eq!(Loop::from_ids(&[1, 2, 1]), Err(LoopError::TooShort(3)));
        assert_eq!(Loop::from_ids(&[1, 2, 3, 4]), Err(LoopError::NotClosed));
        assert_eq!(
            Loop::from_ids(&[1, 2, 3, 2, 1]),
            Err(LoopError::RepeatedNode)
        );
    }
}
