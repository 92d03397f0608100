//! Cycle-with-chords reservoir graphs.
//!
//! Nodes are pseudo-molecules, directed edges are pseudo-rules. Every
//! topology is a directed ring `i -> (i + 1) mod n` plus chords
//! `i -> (i + chord_length) mod n` originating at every multiple of
//! `chord_step`. Inflow always enters at node 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of the node that receives the inflow.
pub const INPUT_NODE: usize = 0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("num_nodes must be at least 3, got {0}")]
    TooFewNodes(usize),
    #[error("chord_length must satisfy 1 <= chord_length < num_nodes ({num_nodes}), got {chord_length}")]
    ChordLength {
        chord_length: usize,
        num_nodes: usize,
    },
    #[error("chord_step must satisfy 1 <= chord_step <= num_nodes ({num_nodes}), got {chord_step}")]
    ChordStep { chord_step: usize, num_nodes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologySpec {
    pub num_nodes: usize,
    pub chord_length: usize,
    pub chord_step: usize,
}

impl TopologySpec {
    pub fn new(num_nodes: usize, chord_length: usize, chord_step: usize) -> Self {
        Self {
            num_nodes,
            chord_length,
            chord_step,
        }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.num_nodes < 3 {
            return Err(TopologyError::TooFewNodes(self.num_nodes));
        }
        if self.chord_length == 0 || self.chord_length >= self.num_nodes {
            return Err(TopologyError::ChordLength {
                chord_length: self.chord_length,
                num_nodes: self.num_nodes,
            });
        }
        if self.chord_step == 0 || self.chord_step > self.num_nodes {
            return Err(TopologyError::ChordStep {
                chord_step: self.chord_step,
                num_nodes: self.num_nodes,
            });
        }
        Ok(())
    }

    /// Number of chord origins, `ceil(num_nodes / chord_step)`.
    pub fn chord_count(&self) -> usize {
        self.num_nodes.div_ceil(self.chord_step)
    }

    /// Total number of reaction channels (cycle edges plus chords).
    pub fn edge_count(&self) -> usize {
        self.num_nodes + self.chord_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Cycle,
    Chord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub spec: TopologySpec,
    pub num_nodes: usize,
    pub input_node: usize,
    pub cycle_edges: Vec<Edge>,
    pub chord_edges: Vec<Edge>,
}

/// Builds the ring and its chords. Cycle edges come in index order, chord
/// origins ascend from node 0.
pub fn build_topology(spec: TopologySpec) -> Result<Topology, TopologyError> {
    spec.validate()?;
    let n = spec.num_nodes;
    let cycle_edges = (0..n)
        .map(|i| Edge {
            from: i,
            to: (i + 1) % n,
        })
        .collect();
    let chord_edges = (0..n)
        .step_by(spec.chord_step)
        .map(|i| Edge {
            from: i,
            to: (i + spec.chord_length) % n,
        })
        .collect();
    Ok(Topology {
        spec,
        num_nodes: n,
        input_node: INPUT_NODE,
        cycle_edges,
        chord_edges,
    })
}

impl Topology {
    pub fn edge_count(&self) -> usize {
        self.cycle_edges.len() + self.chord_edges.len()
    }

    /// All edges in reaction-channel order: cycle edges first, then chords.
    /// Per-edge rate vectors are indexed in this order.
    pub fn edges(&self) -> impl Iterator<Item = (EdgeKind, Edge)> + '_ {
        self.cycle_edges
            .iter()
            .map(|&e| (EdgeKind::Cycle, e))
            .chain(self.chord_edges.iter().map(|&e| (EdgeKind::Chord, e)))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Renders the topology as a Graphviz digraph. Cycle edges carry
/// `kind="cycle"`, chords `kind="chord"`; the input node is tagged
/// `role="input"`.
pub fn export_dot(topology: &Topology) -> String {
    let s = &topology.spec;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "digraph reservoir_n{}_l{}_s{} {{",
        s.num_nodes, s.chord_length, s.chord_step
    );
    for v in 0..topology.num_nodes {
        if v == topology.input_node {
            let _ = writeln!(
                out,
                "  {v} [role=\"input\", style=\"filled\", fillcolor=\"lightblue\"];"
            );
        } else {
            let _ = writeln!(out, "  {v};");
        }
    }
    for (kind, e) in topology.edges() {
        let (tag, color) = match kind {
            EdgeKind::Cycle => ("cycle", "blue"),
            EdgeKind::Chord => ("chord", "orange"),
        };
        let _ = writeln!(
            out,
            "  {} -> {} [kind=\"{tag}\", color=\"{color}\"];",
            e.from, e.to
        );
    }
    out.push_str("}\n");
    out
}
