//! Exact stochastic simulation of a unimolecular reservoir network.
//!
//! Three kinds of event channels:
//!
//! * input: `a = input_rate_scaling * signal(t)`, adds one molecule to the
//!   input node;
//! * reaction per edge `u -> v`: `a = reaction_rate_scaling * rate_e * x[u]`,
//!   moves one molecule from `u` to `v`;
//! * output per node `v`: `a = outflow_rate * x[v]`, removes one molecule.
//!
//! Events are drawn with the Gillespie direct method. The inflow is constant
//! within each signal segment, so a waiting time that crosses a segment
//! boundary is discarded: time advances to the boundary and a fresh waiting
//! time is drawn with the new propensities. By memorylessness this is exact.
//!
//! Every reaction and output channel of a node is proportional to that
//! node's count, so channels are grouped per node and node totals are kept
//! in a binary sum tree. Selection is still proportional to propensity; it
//! just costs `O(log n)` per event instead of a linear scan.
//!
//! [`mean_field_ode`] integrates the expected counts. Because every
//! channel is at most first order the expectations obey the linear system
//! `dx/dt = A x + b(t)` exactly, which makes it an independent oracle for
//! the sampler.

use std::io;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds;
use crate::seeding::rng_from_seed;
use crate::signal::StepSignal;
use crate::topology::{Edge, Topology, INPUT_NODE};

/// RK4 step used by [`mean_field_ode`]; integer-second segment boundaries
/// always fall on a step.
pub const ODE_STEP: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("expected {expected} reaction rates, got {got}")]
    RateDimension { expected: usize, got: usize },
    #[error("parameter {name} = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("signal covers {signal}s but {requested}s were requested")]
    SignalTooShort { signal: u32, requested: u32 },
    #[error("total_time must be positive")]
    EmptyHorizon,
    #[error("edge {from} -> {to} references a node outside 0..{num_nodes}")]
    BadEdge {
        from: usize,
        to: usize,
        num_nodes: usize,
    },
}

/// Nodes plus directed conversion channels. Edge order fixes the order of
/// the per-edge rate vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionNetwork {
    pub num_nodes: usize,
    pub input_node: usize,
    pub edges: Vec<Edge>,
}

impl ReactionNetwork {
    pub fn new(num_nodes: usize, edges: Vec<Edge>) -> Result<Self, SimulationError> {
        if let Some(e) = edges
            .iter()
            .find(|e| e.from >= num_nodes || e.to >= num_nodes)
        {
            return Err(SimulationError::BadEdge {
                from: e.from,
                to: e.to,
                num_nodes,
            });
        }
        Ok(Self {
            num_nodes,
            input_node: INPUT_NODE,
            edges,
        })
    }
}

impl From<&Topology> for ReactionNetwork {
    fn from(t: &Topology) -> Self {
        Self {
            num_nodes: t.num_nodes,
            input_node: t.input_node,
            edges: t.edges().map(|(_, e)| e).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub reaction_rates: Vec<f64>,
    pub outflow_rate: f64,
    pub input_rate_scaling: f64,
    pub reaction_rate_scaling: f64,
}

impl NetworkParams {
    pub fn uniform(edge_count: usize, rate: f64, outflow_rate: f64) -> Self {
        Self {
            reaction_rates: vec![rate; edge_count],
            outflow_rate,
            input_rate_scaling: 1.0,
            reaction_rate_scaling: 1.0,
        }
    }

    pub fn validate(&self, network: &ReactionNetwork) -> Result<(), SimulationError> {
        if self.reaction_rates.len() != network.edges.len() {
            return Err(SimulationError::RateDimension {
                expected: network.edges.len(),
                got: self.reaction_rates.len(),
            });
        }
        let check = |name, value: f64, r: bounds::Range| {
            if r.contains(value) {
                Ok(())
            } else {
                Err(SimulationError::OutOfBounds {
                    name,
                    value,
                    lo: r.lo,
                    hi: r.hi,
                })
            }
        };
        check("outflow_rate", self.outflow_rate, bounds::OUTFLOW_RATE)?;
        check(
            "input_rate_scaling",
            self.input_rate_scaling,
            bounds::INPUT_RATE_SCALING,
        )?;
        check(
            "reaction_rate_scaling",
            self.reaction_rate_scaling,
            bounds::REACTION_RATE_SCALING,
        )?;
        for &r in &self.reaction_rates {
            check("reaction_rate", r, bounds::REACTION_RATE)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub counts: Vec<u64>,
    pub time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStats {
    /// Input events fired inside each signal segment.
    pub input_per_segment: Vec<u64>,
    pub reactions: u64,
    pub outputs: u64,
}

impl EventStats {
    pub fn total(&self) -> u64 {
        self.input_per_segment.iter().sum::<u64>() + self.reactions + self.outputs
    }
}

/// Counts sampled on the integer grid `t = 0, 1, ..., total_time - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_times: Vec<u32>,
    pub num_nodes: usize,
    /// Row-major `(sample_times.len() x num_nodes)`.
    pub states: Vec<u64>,
    pub seed: u64,
    pub stats: EventStats,
}

impl Trajectory {
    pub fn num_samples(&self) -> usize {
        self.sample_times.len()
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.states[i * self.num_nodes..(i + 1) * self.num_nodes]
    }

    pub fn get(&self, i: usize, node: usize) -> u64 {
        self.states[i * self.num_nodes + node]
    }

    /// Builds a trajectory directly from rows; used by harnesses that
    /// inject synthetic features.
    pub fn from_rows(sample_times: Vec<u32>, rows: Vec<Vec<u64>>) -> Self {
        let num_nodes = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == num_nodes));
        assert_eq!(sample_times.len(), rows.len());
        Self {
            sample_times,
            num_nodes,
            states: rows.concat(),
            seed: 0,
            stats: EventStats::default(),
        }
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let header = std::iter::once("t".to_string()).chain((0..self.num_nodes).map(|v| v.to_string()));
        wr.write_record(header)?;
        for (i, t) in self.sample_times.iter().enumerate() {
            let rec = std::iter::once(t.to_string()).chain(self.row(i).iter().map(u64::to_string));
            wr.write_record(rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Complete binary tree of partial sums over per-node propensities.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(n: usize) -> Self {
        let leaves = n.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn weight(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    fn set(&mut self, i: usize, w: f64) {
        let mut idx = self.leaves + i;
        self.nodes[idx] = w;
        idx /= 2;
        while idx >= 1 {
            self.nodes[idx] = self.nodes[2 * idx] + self.nodes[2 * idx + 1];
            idx /= 2;
        }
    }

    /// Leaf `i` such that the cumulative weight before `i` is `<= u` and
    /// the cumulative weight through `i` is `> u`, with the offset into it.
    fn find(&self, mut u: f64) -> (usize, f64) {
        let mut idx = 1;
        while idx < self.leaves {
            let left = self.nodes[2 * idx];
            if u < left {
                idx *= 2;
            } else {
                u -= left;
                idx = 2 * idx + 1;
            }
        }
        let mut leaf = idx - self.leaves;
        if self.weight(leaf) <= 0.0 {
            // only reachable through rounding at a zero-weight right edge
            leaf = (0..self.leaves)
                .rev()
                .find(|&j| self.weight(j) > 0.0)
                .expect("find called on a tree with positive total");
            u = self.weight(leaf) * 0.5;
        }
        (leaf, u.min(self.weight(leaf)))
    }
}

/// Per-node exit channels: `None` is outflow, `Some(v)` a conversion to `v`.
struct NodeChannels {
    targets: Vec<Vec<(Option<usize>, f64)>>,
    unit_rate: Vec<f64>,
}

impl NodeChannels {
    fn new(network: &ReactionNetwork, params: &NetworkParams) -> Self {
        let mut targets: Vec<Vec<(Option<usize>, f64)>> = (0..network.num_nodes)
            .map(|_| vec![(None, params.outflow_rate)])
            .collect();
        for (e, &k) in network.edges.iter().zip(&params.reaction_rates) {
            targets[e.from].push((Some(e.to), params.reaction_rate_scaling * k));
        }
        let unit_rate = targets
            .iter()
            .map(|chs| chs.iter().map(|&(_, r)| r).sum())
            .collect();
        Self { targets, unit_rate }
    }

    fn pick(&self, node: usize, mut u: f64) -> Option<usize> {
        let chs = &self.targets[node];
        for &(target, r) in chs {
            if u < r {
                return target;
            }
            u -= r;
        }
        chs.last().and_then(|&(t, _)| t)
    }
}

fn check_inputs(
    network: &ReactionNetwork,
    params: &NetworkParams,
    signal: &StepSignal,
    total_time: u32,
) -> Result<(), SimulationError> {
    params.validate(network)?;
    if total_time == 0 {
        return Err(SimulationError::EmptyHorizon);
    }
    if signal.total_time < total_time {
        return Err(SimulationError::SignalTooShort {
            signal: signal.total_time,
            requested: total_time,
        });
    }
    Ok(())
}

/// Runs one exact trajectory from the all-zero state over `[0, total_time)`.
pub fn simulate(
    network: &ReactionNetwork,
    params: &NetworkParams,
    signal: &StepSignal,
    total_time: u32,
    seed: u64,
) -> Result<Trajectory, SimulationError> {
    check_inputs(network, params, signal, total_time)?;
    let n = network.num_nodes;
    let horizon = f64::from(total_time);
    let channels = NodeChannels::new(network, params);
    let mut rng = rng_from_seed(seed);
    let mut tree = SumTree::new(n);
    let mut state = ReservoirState {
        counts: vec![0; n],
        time: 0.0,
    };
    let samples = total_time as usize;
    let mut states = Vec::with_capacity(samples * n);
    let mut stats = EventStats {
        input_per_segment: vec![0; signal.num_segments()],
        ..EventStats::default()
    };

    let record_until = |states: &mut Vec<u64>, counts: &[u64], t: f64| {
        while states.len() < samples * n && ((states.len() / n.max(1)) as f64) < t {
            states.extend_from_slice(counts);
        }
    };

    let mut segment = 0usize;
    loop {
        let seg_end = signal.segment_end(segment).min(horizon);
        let a_in = params.input_rate_scaling * signal.segment_values[segment];
        let a0 = a_in + tree.total();
        let dt = if a0 > 0.0 {
            let e: f64 = Exp1.sample(&mut rng);
            e / a0
        } else {
            f64::INFINITY
        };
        let t_next = state.time + dt;
        if t_next >= seg_end {
            record_until(&mut states, &state.counts, seg_end);
            state.time = seg_end;
            if seg_end >= horizon {
                break;
            }
            segment += 1;
            continue;
        }
        record_until(&mut states, &state.counts, t_next);
        state.time = t_next;

        let u = rng.random::<f64>() * a0;
        if u < a_in {
            let v = network.input_node;
            state.counts[v] += 1;
            tree.set(v, state.counts[v] as f64 * channels.unit_rate[v]);
            stats.input_per_segment[segment] += 1;
            continue;
        }
        let (node, offset) = tree.find(u - a_in);
        debug_assert!(state.counts[node] > 0);
        let per_molecule = offset / state.counts[node] as f64;
        state.counts[node] -= 1;
        tree.set(node, state.counts[node] as f64 * channels.unit_rate[node]);
        match channels.pick(node, per_molecule) {
            Some(to) => {
                state.counts[to] += 1;
                tree.set(to, state.counts[to] as f64 * channels.unit_rate[to]);
                stats.reactions += 1;
            }
            None => stats.outputs += 1,
        }
    }
    debug_assert_eq!(states.len(), samples * n);

    Ok(Trajectory {
        sample_times: (0..total_time).collect(),
        num_nodes: n,
        states,
        seed,
        stats,
    })
}

/// Expected counts on the same grid as [`simulate`], `(total_time x n)`.
pub fn mean_field_ode(
    network: &ReactionNetwork,
    params: &NetworkParams,
    signal: &StepSignal,
    total_time: u32,
) -> Result<DMatrix<f64>, SimulationError> {
    check_inputs(network, params, signal, total_time)?;
    let n = network.num_nodes;
    let steps_per_second = (1.0 / ODE_STEP).round() as usize;
    let h = 1.0 / steps_per_second as f64;
    let rates: Vec<f64> = params
        .reaction_rates
        .iter()
        .map(|k| params.reaction_rate_scaling * k)
        .collect();

    let deriv = |x: &[f64], inflow: f64, dx: &mut [f64]| {
        for (d, &xi) in dx.iter_mut().zip(x) {
            *d = -params.outflow_rate * xi;
        }
        for (e, &k) in network.edges.iter().zip(&rates) {
            let flux = k * x[e.from];
            dx[e.from] -= flux;
            dx[e.to] += flux;
        }
        dx[network.input_node] += inflow;
    };

    let mut out = DMatrix::zeros(total_time as usize, n);
    let mut x = vec![0.0; n];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for second in 0..total_time as usize {
        for (j, &xj) in x.iter().enumerate() {
            out[(second, j)] = xj;
        }
        for sub in 0..steps_per_second {
            let t = second as f64 + sub as f64 * h;
            let inflow = params.input_rate_scaling
                * signal.value_at(t).expect("t inside checked horizon");
            deriv(&x, inflow, &mut k1);
            for j in 0..n {
                tmp[j] = x[j] + 0.5 * h * k1[j];
            }
            deriv(&tmp, inflow, &mut k2);
            for j in 0..n {
                tmp[j] = x[j] + 0.5 * h * k2[j];
            }
            deriv(&tmp, inflow, &mut k3);
            for j in 0..n {
                tmp[j] = x[j] + h * k3[j];
            }
            deriv(&tmp, inflow, &mut k4);
            for j in 0..n {
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, TopologySpec};

    fn single_node() -> ReactionNetwork {
        ReactionNetwork::new(1, vec![]).unwrap()
    }

    fn birth_death_params() -> NetworkParams {
        NetworkParams::uniform(0, 0.5, 0.5)
    }

    #[test]
    fn sum_tree_selects_proportionally() {
        let mut t = SumTree::new(5);
        t.set(0, 1.0);
        t.set(2, 2.0);
        t.set(4, 3.0);
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.find(0.5).0, 0);
        assert_eq!(t.find(1.0).0, 2);
        assert_eq!(t.find(2.9).0, 2);
        assert_eq!(t.find(3.0).0, 4);
        assert_eq!(t.find(5.999).0, 4);
        t.set(4, 0.0);
        assert_eq!(t.find(2.99).0, 2);
        // rounding slack past the total falls on the last positive leaf
        assert_eq!(t.find(3.0).0, 2);
    }

    #[test]
    fn zero_inflow_stays_empty() {
        let topo = build_topology(TopologySpec::new(5, 2, 2)).unwrap();
        let net = ReactionNetwork::from(&topo);
        let params = NetworkParams::uniform(net.edges.len(), 0.5, 0.5);
        let signal = StepSignal::constant(20, 0.0).unwrap();
        let traj = simulate(&net, &params, &signal, 20, 3).unwrap();
        assert_eq!(traj.num_samples(), 20);
        assert!(traj.states.iter().all(|&c| c == 0));
        assert_eq!(traj.stats.total(), 0);
        let ode = mean_field_ode(&net, &params, &signal, 20).unwrap();
        assert!(ode.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let topo = build_topology(TopologySpec::new(30, 10, 5)).unwrap();
        let net = ReactionNetwork::from(&topo);
        let params = NetworkParams::uniform(net.edges.len(), 0.5, 0.2);
        let signal = crate::signal::generate_step_signal(50, 2, 100.0, 1).unwrap();
        let a = simulate(&net, &params, &signal, 50, 11).unwrap();
        let b = simulate(&net, &params, &signal, 50, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate(&net, &params, &signal, 50, 12).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn birth_death_ode_closed_form() {
        let signal = StepSignal::constant(30, 10.0).unwrap();
        let ode = mean_field_ode(&single_node(), &birth_death_params(), &signal, 30).unwrap();
        for t in 0..30 {
            let exact = 20.0 * (1.0 - (-0.5 * t as f64).exp());
            assert!((ode[(t, 0)] - exact).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn ode_mass_balance_on_pure_cycle() {
        let net = ReactionNetwork::new(
            3,
            vec![
                Edge { from: 0, to: 1 },
                Edge { from: 1, to: 2 },
                Edge { from: 2, to: 0 },
            ],
        )
        .unwrap();
        let params = NetworkParams {
            reaction_rates: vec![0.3, 0.7, 0.5],
            outflow_rate: 0.25,
            input_rate_scaling: 2.0,
            reaction_rate_scaling: 1.0,
        };
        let signal = StepSignal::constant(100, 6.0).unwrap();
        let ode = mean_field_ode(&net, &params, &signal, 100).unwrap();
        let mass: f64 = ode.row(99).iter().sum();
        // total mass obeys dM/dt = a_in - mu M
        assert!((mass - 12.0 / 0.25).abs() < 1e-6, "mass={mass}");
    }

    #[test]
    fn rejects_mismatched_params() {
        let topo = build_topology(TopologySpec::new(10, 3, 5)).unwrap();
        let net = ReactionNetwork::from(&topo);
        let signal = StepSignal::constant(10, 1.0).unwrap();
        let short = NetworkParams::uniform(3, 0.5, 0.5);
        assert!(matches!(
            simulate(&net, &short, &signal, 10, 1),
            Err(SimulationError::RateDimension { expected: 12, got: 3 })
        ));
        let mut bad = NetworkParams::uniform(12, 0.5, 0.5);
        bad.outflow_rate = 2.0;
        assert!(matches!(
            simulate(&net, &bad, &signal, 10, 1),
            Err(SimulationError::OutOfBounds { .. })
        ));
        let ok = NetworkParams::uniform(12, 0.5, 0.5);
        assert!(matches!(
            simulate(&net, &ok, &signal, 20, 1),
            Err(SimulationError::SignalTooShort { .. })
        ));
        assert!(ReactionNetwork::new(2, vec![Edge { from: 0, to: 2 }]).is_err());
    }

    #[test]
    fn trajectory_csv_header() {
        let net = single_node();
        let signal = StepSignal::constant(3, 10.0).unwrap();
        let traj = simulate(&net, &birth_death_params(), &signal, 3, 5).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,0");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,0");
    }
}
