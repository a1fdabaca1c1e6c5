use std::collections::BTreeSet;

use proptest::prelude::*;

use sensornet::loops::{
    enumerate_all_loops, enumerate_loops_from_source, oracle_all_cycles, oracle_cycles_through,
    CycleKey,
};
use sensornet::topology::build_lni;
use sensornet::{NodeId, Topology};

/// Connected graph on `1..=n`: a random spanning tree plus extra edges.
fn graph() -> impl Strategy<Value = Topology> {
    (3u32..=8)
        .prop_flat_map(|n| {
            let tree = (2..=n)
                .map(|v| (1..v).prop_map(move |p| (p, v)))
                .collect::<Vec<_>>();
            let extra = proptest::collection::vec((1..=n, 1..=n), 0..(n as usize * 2));
            (Just(n), tree, extra)
        })
        .prop_map(|(_, tree, extra)| {
            let mut pairs: BTreeSet<(u32, u32)> = tree.into_iter().collect();
            for (a, b) in extra {
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
            let pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
            Topology::from_pairs(&pairs, 1).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn block_search_matches_oracle(topo in graph()) {
        for s in topo.nodes() {
            let report = enumerate_loops_from_source(&topo, s);
            prop_assert_eq!(report.canonical_set(), oracle_cycles_through(&topo, s));
            for b in &report.blocks {
                prop_assert!(b.loops.iter().all(|l| l.source() == s && l.second() == b.second_node));
            }
            // no loop is listed twice
            prop_assert_eq!(report.loop_count(), report.canonical_set().len());
        }
        let reports = enumerate_all_loops(&topo);
        let union: BTreeSet<CycleKey> = reports.iter().flat_map(|r| r.canonical_set()).collect();
        let total: usize = reports.iter().map(|r| r.loop_count()).sum();
        prop_assert_eq!(total, union.len());
        prop_assert_eq!(union, oracle_all_cycles(&topo));
    }

    #[test]
    fn lni_counts_each_line_twice(topo in graph()) {
        let mut lni = build_lni(&topo);
        prop_assert_eq!(lni.total_len(), 2 * topo.edge_count());
        for v in topo.nodes() {
            prop_assert_eq!(lni.row(v).len(), topo.degree(v));
        }
        let lines: Vec<_> = topo.edges().map(|(l, _, _)| l).collect();
        for (k, l) in lines.into_iter().enumerate() {
            lni.remove_line(l).unwrap();
            prop_assert_eq!(lni.total_len(), 2 * (topo.edge_count() - k - 1));
        }
        prop_assert!(lni.is_empty());
    }

    #[test]
    fn canonical_form_ignores_rotation_and_direction(topo in graph()) {
        for key in oracle_all_cycles(&topo) {
            let nodes: Vec<NodeId> = key.0.clone();
            for shift in 0..nodes.len() {
                let mut rotated = nodes.clone();
                rotated.rotate_left(shift);
                prop_assert_eq!(&sensornet::loops::canonicalize_nodes(&rotated), &key);
                rotated.reverse();
                prop_assert_eq!(&sensornet::loops::canonicalize_nodes(&rotated), &key);
            }
        }
    }
}
