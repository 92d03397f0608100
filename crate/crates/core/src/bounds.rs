//! Search-space boundaries for topology and kinetic parameters.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

pub const NUM_NODES: Range = Range::new(50.0, 300.0);
pub const INFLOW_AMOUNT: Range = Range::new(50.0, 200.0);
pub const CHORD_LENGTH: Range = Range::new(5.0, 25.0);
pub const CHORD_STEP: Range = Range::new(5.0, 25.0);
pub const INPUT_RATE_SCALING: Range = Range::new(1.0, 10.0);
pub const REACTION_RATE_SCALING: Range = Range::new(1.0, 10.0);
pub const OUTFLOW_RATE: Range = Range::new(0.05, 1.0);
pub const REACTION_RATE: Range = Range::new(0.1, 1.0);
