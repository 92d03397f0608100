//! Chemically-inspired reservoir computing.
//!
//! A reservoir is a directed ring of pseudo-molecules with chord shortcuts
//! ([`topology`]). A random step inflow ([`signal`]) feeds node 0 and the
//! network is simulated exactly with a Gillespie engine ([`ssa`]). Sampled
//! counts feed a ridge readout ([`readout`]) trained on short- and
//! long-term memory targets ([`tasks`]). A two-level genetic algorithm
//! ([`evolver`]) searches topologies and kinetic parameters; [`cli`] wires
//! it all to files.

pub mod bounds;
pub mod cli;
pub mod evolver;
pub mod readout;
pub mod seeding;
pub mod signal;
pub mod ssa;
pub mod tasks;
pub mod topology;
