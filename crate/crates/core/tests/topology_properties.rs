use std::collections::BTreeSet;

use chemreservoir::topology::{build_topology, export_dot, TopologyError, TopologySpec};
use dot_parser::{ast, canonical};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use proptest::prelude::*;

/// Chord endpoints by walking every node and keeping multiples of the step.
fn brute_force_chords(n: usize, l: usize, s: usize) -> Vec<(usize, usize)> {
    (0..n).filter(|i| i % s == 0).map(|i| (i, (i + l) % n)).collect()
}

fn valid_spec() -> impl Strategy<Value = TopologySpec> {
    (3usize..=40).prop_flat_map(|n| (Just(n), 1..n, 1..=n))
        .prop_map(|(n, l, s)| TopologySpec::new(n, l, s))
}

proptest! {
    #[test]
    fn chords_match_brute_force(spec in valid_spec()) {
        let topo = build_topology(spec).unwrap();
        let chords: Vec<_> = topo.chord_edges.iter().map(|e| (e.from, e.to)).collect();
        prop_assert_eq!(
            chords,
            brute_force_chords(spec.num_nodes, spec.chord_length, spec.chord_step)
        );
        prop_assert_eq!(topo.cycle_edges.len(), spec.num_nodes);
        prop_assert_eq!(topo.edge_count(), spec.num_nodes + spec.num_nodes.div_ceil(spec.chord_step));
        prop_assert!(topo.chord_edges.iter().all(|e| e.from != e.to));
    }

    #[test]
    fn strongly_connected(spec in valid_spec()) {
        let topo = build_topology(spec).unwrap();
        let mut g = DiGraph::<(), ()>::new();
        let nodes: Vec<_> = (0..topo.num_nodes).map(|_| g.add_node(())).collect();
        for (_, e) in topo.edges() {
            g.add_edge(nodes[e.from], nodes[e.to], ());
        }
        prop_assert_eq!(kosaraju_scc(&g).len(), 1);
    }

    #[test]
    fn building_is_pure(spec in valid_spec()) {
        prop_assert_eq!(build_topology(spec).unwrap(), build_topology(spec).unwrap());
        prop_assert_eq!(
            export_dot(&build_topology(spec).unwrap()),
            export_dot(&build_topology(spec).unwrap())
        );
    }

    #[test]
    fn dot_round_trips(spec in valid_spec()) {
        let topo = build_topology(spec).unwrap();
        let dot = export_dot(&topo);
        let parsed = canonical::Graph::from(ast::Graph::try_from(dot.as_str()).unwrap());
        prop_assert!(parsed.is_digraph);

        let text = |id: &ast::ID<'_>| -> String { id.clone().into() };
        let mut from_dot: Vec<(usize, usize, String)> = Vec::new();
        for e in parsed.edges.set {
            let kind = e
                .attr
                .elems
                .iter()
                .find(|(k, _)| text(k) == "kind")
                .map(|(_, v)| text(v))
                .unwrap_or_default();
            from_dot.push((e.from.parse().unwrap(), e.to.parse().unwrap(), kind));
        }
        let expected: Vec<_> = topo
            .cycle_edges
            .iter()
            .map(|e| (e.from, e.to, "cycle".to_string()))
            .chain(topo.chord_edges.iter().map(|e| (e.from, e.to, "chord".to_string())))
            .collect();
        prop_assert_eq!(from_dot, expected);

        let ids: BTreeSet<usize> = parsed.nodes.set.keys().map(|k| k.parse().unwrap()).collect();
        prop_assert_eq!(ids, (0..spec.num_nodes).collect::<BTreeSet<_>>());
        let input = &parsed.nodes.set["0"];
        prop_assert!(input
            .attr
            .elems
            .iter()
            .any(|(k, v)| text(k) == "role" && text(v) == "input"));
    }

    #[test]
    fn out_of_range_specs_are_rejected(n in 0usize..60, l in 0usize..80, s in 0usize..80) {
        let spec = TopologySpec::new(n, l, s);
        let valid = n >= 3 && (1..n).contains(&l) && (1..=n).contains(&s);
        match build_topology(spec) {
            Ok(_) => prop_assert!(valid),
            Err(e) => {
                prop_assert!(!valid);
                let expected_kind = if n < 3 {
                    matches!(e, TopologyError::TooFewNodes { .. })
                } else if !(1..n).contains(&l) {
                    matches!(e, TopologyError::ChordLength { .. })
                } else {
                    matches!(e, TopologyError::ChordStep { .. })
                };
                prop_assert!(expected_kind, "{e:?}");
            }
        }
    }
}

#[test]
fn six_node_example() {
    let topo = build_topology(TopologySpec::new(6, 2, 3)).unwrap();
    let chords: Vec<_> = topo.chord_edges.iter().map(|e| (e.from, e.to)).collect();
    assert_eq!(chords, vec![(0, 2), (3, 5)]);
    assert_eq!(topo.edge_count(), 8);
}
