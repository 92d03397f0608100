use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, Range};
use crate::seeding::Rng;
use crate::ssa::NetworkParams;
use crate::topology::TopologySpec;

use super::{InnerSteps, OuterSteps};

/// Outer-level genes. All integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologyGenome {
    pub num_nodes: u32,
    pub inflow_amount: u32,
    pub chord_length: u32,
    pub chord_step: u32,
}

/// Inner-level genes; `reaction_rates` has one entry per edge of the
/// topology the genome was created for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsGenome {
    pub outflow_rate: f64,
    pub input_rate_scaling: f64,
    pub reaction_rate_scaling: f64,
    pub reaction_rates: Vec<f64>,
}

fn int_range(r: Range) -> (u32, u32) {
    (r.lo as u32, r.hi as u32)
}

fn uniform_int<R: rand::Rng + ?Sized>(rng: &mut R, r: Range) -> u32 {
    let (lo, hi) = int_range(r);
    rng.random_range(lo..=hi)
}

fn uniform_real<R: rand::Rng + ?Sized>(rng: &mut R, r: Range) -> f64 {
    rng.random_range(r.lo..=r.hi)
}

fn bump_int<R: rand::Rng + ?Sized>(rng: &mut R, x: u32, step: u32, r: Range) -> u32 {
    let (lo, hi) = int_range(r);
    let moved = if rng.random_bool(0.5) {
        x.saturating_add(step)
    } else {
        x.saturating_sub(step)
    };
    moved.clamp(lo, hi)
}

fn bump_real<R: rand::Rng + ?Sized>(rng: &mut R, x: f64, step: f64, r: Range) -> f64 {
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    r.clamp(x + sign * step)
}

fn swap_if<T, R: rand::Rng + ?Sized>(rng: &mut R, p: f64, a: &mut T, b: &mut T) {
    if rng.random_bool(p) {
        std::mem::swap(a, b);
    }
}

impl TopologyGenome {
    pub fn random(rng: &mut Rng) -> Self {
        Self {
            num_nodes: uniform_int(rng, bounds::NUM_NODES),
            inflow_amount: uniform_int(rng, bounds::INFLOW_AMOUNT),
            chord_length: uniform_int(rng, bounds::CHORD_LENGTH),
            chord_step: uniform_int(rng, bounds::CHORD_STEP),
        }
    }

    pub fn spec(&self) -> TopologySpec {
        TopologySpec::new(
            self.num_nodes as usize,
            self.chord_length as usize,
            self.chord_step as usize,
        )
    }

    pub fn edge_count(&self) -> usize {
        self.spec().edge_count()
    }

    pub fn in_bounds(&self) -> bool {
        bounds::NUM_NODES.contains(f64::from(self.num_nodes))
            && bounds::INFLOW_AMOUNT.contains(f64::from(self.inflow_amount))
            && bounds::CHORD_LENGTH.contains(f64::from(self.chord_length))
            && bounds::CHORD_STEP.contains(f64::from(self.chord_step))
    }

    /// Each gene moves by exactly `+step` or `-step` with probability
    /// `indpb`, then is clamped to its range.
    pub fn mutate(&mut self, rng: &mut Rng, indpb: f64, steps: &OuterSteps) {
        if rng.random_bool(indpb) {
            self.num_nodes = bump_int(rng, self.num_nodes, steps.num_nodes, bounds::NUM_NODES);
        }
        if rng.random_bool(indpb) {
            self.inflow_amount =
                bump_int(rng, self.inflow_amount, steps.inflow_amount, bounds::INFLOW_AMOUNT);
        }
        if rng.random_bool(indpb) {
            self.chord_length =
                bump_int(rng, self.chord_length, steps.chord_length, bounds::CHORD_LENGTH);
        }
        if rng.random_bool(indpb) {
            self.chord_step = bump_int(rng, self.chord_step, steps.chord_step, bounds::CHORD_STEP);
        }
    }

    /// Uniform crossover.
    pub fn crossover(a: &mut Self, b: &mut Self, rng: &mut Rng, swap_prob: f64) {
        swap_if(rng, swap_prob, &mut a.num_nodes, &mut b.num_nodes);
        swap_if(rng, swap_prob, &mut a.inflow_amount, &mut b.inflow_amount);
        swap_if(rng, swap_prob, &mut a.chord_length, &mut b.chord_length);
        swap_if(rng, swap_prob, &mut a.chord_step, &mut b.chord_step);
    }

    pub fn genes(&self) -> [u32; 4] {
        [
            self.num_nodes,
            self.inflow_amount,
            self.chord_length,
            self.chord_step,
        ]
    }
}

impl ParamsGenome {
    pub fn random(rng: &mut Rng, edge_count: usize) -> Self {
        let outflow_rate = uniform_real(rng, bounds::OUTFLOW_RATE);
        let input_rate_scaling = uniform_real(rng, bounds::INPUT_RATE_SCALING);
        let reaction_rate_scaling = uniform_real(rng, bounds::REACTION_RATE_SCALING);
        let reaction_rates = (0..edge_count)
            .map(|_| uniform_real(rng, bounds::REACTION_RATE))
            .collect();
        Self {
            outflow_rate,
            input_rate_scaling,
            reaction_rate_scaling,
            reaction_rates,
        }
    }

    pub fn in_bounds(&self) -> bool {
        bounds::OUTFLOW_RATE.contains(self.outflow_rate)
            && bounds::INPUT_RATE_SCALING.contains(self.input_rate_scaling)
            && bounds::REACTION_RATE_SCALING.contains(self.reaction_rate_scaling)
            && self
                .reaction_rates
                .iter()
                .all(|&r| bounds::REACTION_RATE.contains(r))
    }

    pub fn mutate(&mut self, rng: &mut Rng, indpb: f64, steps: &InnerSteps) {
        if rng.random_bool(indpb) {
            self.outflow_rate =
                bump_real(rng, self.outflow_rate, steps.outflow_rate, bounds::OUTFLOW_RATE);
        }
        if rng.random_bool(indpb) {
            self.input_rate_scaling = bump_real(
                rng,
                self.input_rate_scaling,
                steps.rate_scaling,
                bounds::INPUT_RATE_SCALING,
            );
        }
        if rng.random_bool(indpb) {
            self.reaction_rate_scaling = bump_real(
                rng,
                self.reaction_rate_scaling,
                steps.rate_scaling,
                bounds::REACTION_RATE_SCALING,
            );
        }
        for r in &mut self.reaction_rates {
            if rng.random_bool(indpb) {
                *r = bump_real(rng, *r, steps.reaction_rate, bounds::REACTION_RATE);
            }
        }
    }

    /// Uniform crossover; parents with different rate-vector lengths pass
    /// through unchanged.
    pub fn crossover(a: &mut Self, b: &mut Self, rng: &mut Rng, swap_prob: f64) {
        if a.reaction_rates.len() != b.reaction_rates.len() {
            return;
        }
        swap_if(rng, swap_prob, &mut a.outflow_rate, &mut b.outflow_rate);
        swap_if(rng, swap_prob, &mut a.input_rate_scaling, &mut b.input_rate_scaling);
        swap_if(
            rng,
            swap_prob,
            &mut a.reaction_rate_scaling,
            &mut b.reaction_rate_scaling,
        );
        for (x, y) in a.reaction_rates.iter_mut().zip(b.reaction_rates.iter_mut()) {
            swap_if(rng, swap_prob, x, y);
        }
    }

    pub fn to_params(&self) -> NetworkParams {
        NetworkParams {
            reaction_rates: self.reaction_rates.clone(),
            outflow_rate: self.outflow_rate,
            input_rate_scaling: self.input_rate_scaling,
            reaction_rate_scaling: self.reaction_rate_scaling,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    #[test]
    fn random_genomes_in_bounds() {
        let mut rng = rng_from_seed(9);
        for _ in 0..200 {
            let t = TopologyGenome::random(&mut rng);
            assert!(t.in_bounds());
            let p = ParamsGenome::random(&mut rng, t.edge_count());
            assert!(p.in_bounds());
            assert_eq!(p.reaction_rates.len(), t.edge_count());
        }
    }

    #[test]
    fn node_mutation_moves_by_ten() {
        let steps = OuterSteps::default();
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let mut g = TopologyGenome {
                num_nodes: 150,
                inflow_amount: 100,
                chord_length: 15,
                chord_step: 15,
            };
            g.mutate(&mut rng, 1.0, &steps);
            assert!(g.num_nodes == 140 || g.num_nodes == 160);
            assert!(g.inflow_amount == 90 || g.inflow_amount == 110);
            assert!(g.chord_length == 13 || g.chord_length == 17);
            assert!(g.chord_step == 13 || g.chord_step == 17);
        }
    }

    #[test]
    fn mutation_clamps_at_bounds() {
        let steps = OuterSteps::default();
        let mut rng = rng_from_seed(4);
        let mut seen_top = false;
        for _ in 0..100 {
            let mut g = TopologyGenome {
                num_nodes: 300,
                inflow_amount: 50,
                chord_length: 25,
                chord_step: 5,
            };
            g.mutate(&mut rng, 1.0, &steps);
            assert!(g.num_nodes == 300 || g.num_nodes == 290);
            seen_top |= g.num_nodes == 300;
            assert!(g.in_bounds());
        }
        assert!(seen_top);

        let mut p = ParamsGenome {
            outflow_rate: 1.0,
            input_rate_scaling: 10.0,
            reaction_rate_scaling: 1.0,
            reaction_rates: vec![0.1; 20],
        };
        for _ in 0..50 {
            p.mutate(&mut rng, 1.0, &InnerSteps::default());
            assert!(p.in_bounds());
        }
    }

    #[test]
    fn zero_indpb_leaves_genome_alone() {
        let mut rng = rng_from_seed(5);
        let g0 = TopologyGenome::random(&mut rng);
        let mut g = g0;
        g.mutate(&mut rng, 0.0, &OuterSteps::default());
        assert_eq!(g, g0);
    }

    #[test]
    fn crossover_conserves_genes() {
        let mut rng = rng_from_seed(6);
        let a0 = ParamsGenome::random(&mut rng, 12);
        let b0 = ParamsGenome::random(&mut rng, 12);
        let (mut a, mut b) = (a0.clone(), b0.clone());
        ParamsGenome::crossover(&mut a, &mut b, &mut rng, 0.5);
        for i in 0..12 {
            let mut got = [a.reaction_rates[i], b.reaction_rates[i]];
            let mut want = [a0.reaction_rates[i], b0.reaction_rates[i]];
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            assert_eq!(got, want);
        }

        let mut c = ParamsGenome::random(&mut rng, 5);
        let c0 = c.clone();
        let mut d = a0.clone();
        ParamsGenome::crossover(&mut c, &mut d, &mut rng, 1.0);
        assert_eq!(c, c0);
        assert_eq!(d, a0);
    }
}
