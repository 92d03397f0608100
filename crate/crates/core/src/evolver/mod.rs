//! Two-level genetic search.
//!
//! The outer level evolves [`TopologyGenome`]s. Scoring one topology runs a
//! complete inner GA over [`ParamsGenome`]s for it, and the topology's
//! fitness is the best inner fitness. Fitness is always "lower is better"
//! (test-set NRMSE for the real pipeline).
//!
//! Seeds: the outer GA draws from `derive(master, OuterGa)`, the inner GA of
//! outer individual `(g, i)` from `derive(master, InnerGa, [g, i])`, and the
//! evaluation of inner individual `(h, j)` seeds its simulation with
//! `derive(master, Ssa, [g, i, h, j])`.

mod engine;
mod genome;
mod pipeline;

use std::io;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::readout::ReadoutError;
use crate::seeding::{derive_rng, derive_seed, Purpose};
use crate::signal::SignalError;
use crate::ssa::SimulationError;
use crate::tasks::TaskError;
use crate::topology::TopologyError;

pub use engine::{run_ga, Evaluation, GaRun, Individual, LevelConfig};
pub use genome::{ParamsGenome, TopologyGenome};
pub use pipeline::{
    evaluate_params, run_pipeline, score_trajectory, PipelineObjective, PipelineRun,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("genome outside search bounds: {0}")]
    OutOfBounds(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error("no inner evaluation succeeded: {0}")]
    InnerFailed(String),
}

/// Scores one (topology, params) pair. Implementations must be pure in
/// their arguments so that parallel evaluation stays reproducible.
pub trait Objective: Sync {
    fn evaluate(
        &self,
        topology: &TopologyGenome,
        params: &ParamsGenome,
        seed: u64,
    ) -> Result<f64, EvalError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterSteps {
    pub num_nodes: u32,
    pub inflow_amount: u32,
    pub chord_length: u32,
    pub chord_step: u32,
}

impl Default for OuterSteps {
    fn default() -> Self {
        Self {
            num_nodes: 10,
            inflow_amount: 10,
            chord_length: 2,
            chord_step: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerSteps {
    pub outflow_rate: f64,
    pub reaction_rate: f64,
    /// Shared by input and reaction rate scaling.
    pub rate_scaling: f64,
}

impl Default for InnerSteps {
    fn default() -> Self {
        Self {
            outflow_rate: 0.2,
            reaction_rate: 0.1,
            rate_scaling: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub elite_size: usize,
    pub tournament_size: usize,
    pub indpb: f64,
    pub crossover_swap: f64,
    pub outer_steps: OuterSteps,
    pub inner_steps: InnerSteps,
    pub outer_generations: usize,
    pub inner_generations: usize,
    /// Wall-clock cutoffs in seconds; `None` gives a deterministic run.
    pub outer_budget_seconds: Option<f64>,
    pub inner_budget_seconds: Option<f64>,
    pub master_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 4,
            elite_size: 2,
            tournament_size: 3,
            indpb: 0.5,
            crossover_swap: 0.5,
            outer_steps: OuterSteps::default(),
            inner_steps: InnerSteps::default(),
            outer_generations: 10,
            inner_generations: 10,
            outer_budget_seconds: Some(10_000.0),
            inner_budget_seconds: Some(500.0),
            master_seed: 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("elite_size ({elite}) must be smaller than population_size ({population})")]
    Elites { elite: usize, population: usize },
    #[error("tournament_size must be at least 1")]
    Tournament,
    #[error("{0} must be a probability in [0, 1]")]
    Probability(&'static str),
    #[error("wall-clock budgets must be positive")]
    Budget,
}

impl GaConfig {
    pub fn deterministic(mut self) -> Self {
        self.outer_budget_seconds = None;
        self.inner_budget_seconds = None;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.elite_size >= self.population_size {
            return Err(ConfigError::Elites {
                elite: self.elite_size,
                population: self.population_size,
            });
        }
        if self.tournament_size == 0 {
            return Err(ConfigError::Tournament);
        }
        if !(0.0..=1.0).contains(&self.indpb) {
            return Err(ConfigError::Probability("indpb"));
        }
        if !(0.0..=1.0).contains(&self.crossover_swap) {
            return Err(ConfigError::Probability("crossover_swap"));
        }
        let bad_budget = |b: Option<f64>| b.is_some_and(|s| !(s > 0.0));
        if bad_budget(self.outer_budget_seconds) || bad_budget(self.inner_budget_seconds) {
            return Err(ConfigError::Budget);
        }
        Ok(())
    }

    fn level(&self, generations: usize, budget: Option<f64>) -> LevelConfig {
        LevelConfig {
            population_size: self.population_size,
            elite_size: self.elite_size,
            tournament_size: self.tournament_size,
            indpb: self.indpb,
            crossover_swap: self.crossover_swap,
            generations,
            budget: budget.map(Duration::from_secs_f64),
        }
    }
}

/// One row of a fitness log: a population member in a given generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord<G> {
    pub generation: usize,
    pub individual_index: usize,
    pub genome: G,
    /// Test NRMSE; `inf` for failed evaluations.
    pub fitness: f64,
    pub seed: u64,
    /// Carried over unchanged from the previous generation.
    pub elite: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerResult {
    pub topology: TopologyGenome,
    pub best: ParamsGenome,
    pub best_fitness: f64,
    pub best_seed: u64,
    pub ga_seed: u64,
    pub generation_min: Vec<f64>,
    pub log: Vec<FitnessRecord<ParamsGenome>>,
    pub stopped_by_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerRun {
    pub outer_generation: usize,
    pub outer_index: usize,
    pub result: InnerResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterResult {
    pub best_topology: TopologyGenome,
    pub best_params: ParamsGenome,
    pub best_fitness: f64,
    /// Position at which the best topology was evaluated.
    pub best_origin: (usize, usize),
    pub generation_min: Vec<f64>,
    pub log: Vec<FitnessRecord<TopologyGenome>>,
    /// One entry per outer evaluation, in `(generation, index)` order.
    pub inner_runs: Vec<InnerRun>,
    pub stopped_by_budget: bool,
}

fn bounds_error(topology: &TopologyGenome, params: Option<&ParamsGenome>) -> Option<EvalError> {
    if !topology.in_bounds() {
        return Some(EvalError::OutOfBounds(format!("{topology:?}")));
    }
    let p = params?;
    if !p.in_bounds() {
        return Some(EvalError::OutOfBounds("params genome".into()));
    }
    if p.reaction_rates.len() != topology.edge_count() {
        return Some(EvalError::OutOfBounds(format!(
            "{} reaction rates for {} edges",
            p.reaction_rates.len(),
            topology.edge_count()
        )));
    }
    None
}

/// Searches kinetic parameters for one topology. `outer_position` is the
/// `(generation, index)` of the outer individual being scored.
pub fn run_inner_ga<O: Objective + ?Sized>(
    topology: &TopologyGenome,
    objective: &O,
    config: &GaConfig,
    outer_position: (usize, usize),
) -> InnerResult {
    let (og, oi) = (outer_position.0 as u64, outer_position.1 as u64);
    let ga_seed = derive_seed(config.master_seed, Purpose::InnerGa, &[og, oi]);
    let mut rng = crate::seeding::rng_from_seed(ga_seed);
    let level = config.level(config.inner_generations, config.inner_budget_seconds);
    let edges = topology.edge_count();
    let steps = config.inner_steps;

    let run = run_ga(
        &level,
        &mut rng,
        |r| ParamsGenome::random(r, edges),
        |g: &mut ParamsGenome, r| g.mutate(r, level.indpb, &steps),
        |a, b, r| ParamsGenome::crossover(a, b, r, level.crossover_swap),
        |params, generation, index| {
            let seed = derive_seed(
                config.master_seed,
                Purpose::Ssa,
                &[og, oi, generation as u64, index as u64],
            );
            let fitness = match bounds_error(topology, Some(params)) {
                Some(e) => Err(e),
                None => objective.evaluate(topology, params, seed),
            };
            Evaluation {
                fitness,
                seed,
                extra: None::<()>,
            }
        },
    );
    InnerResult {
        topology: *topology,
        best: run.best.genome,
        best_fitness: run.best.fitness,
        best_seed: run.best.seed,
        ga_seed,
        generation_min: run.generation_min,
        log: run.log,
        stopped_by_budget: run.stopped_by_budget,
    }
}

pub fn run_outer_ga<O: Objective + ?Sized>(objective: &O, config: &GaConfig) -> OuterResult {
    let mut rng = derive_rng(config.master_seed, Purpose::OuterGa, &[]);
    let level = config.level(config.outer_generations, config.outer_budget_seconds);
    let steps = config.outer_steps;

    let run = run_ga(
        &level,
        &mut rng,
        TopologyGenome::random,
        |g: &mut TopologyGenome, r| g.mutate(r, level.indpb, &steps),
        |a, b, r| TopologyGenome::crossover(a, b, r, level.crossover_swap),
        |topology, generation, index| {
            if let Some(e) = bounds_error(topology, None) {
                return Evaluation {
                    fitness: Err(e),
                    seed: 0,
                    extra: None,
                };
            }
            let inner = run_inner_ga(topology, objective, config, (generation, index));
            let fitness = if inner.best_fitness.is_finite() {
                Ok(inner.best_fitness)
            } else {
                let first = inner
                    .log
                    .iter()
                    .find_map(|r| r.error.clone())
                    .unwrap_or_default();
                Err(EvalError::InnerFailed(first))
            };
            Evaluation {
                fitness,
                seed: inner.ga_seed,
                extra: Some(inner),
            }
        },
    );

    let best_inner = run
        .best
        .extra
        .clone()
        .expect("outer individuals within bounds always carry an inner result");
    OuterResult {
        best_topology: run.best.genome,
        best_params: best_inner.best,
        best_fitness: run.best.fitness,
        best_origin: run.best.born,
        generation_min: run.generation_min,
        log: run.log,
        inner_runs: run
            .evaluated
            .into_iter()
            .filter_map(|ind| {
                ind.extra.map(|result| InnerRun {
                    outer_generation: ind.born.0,
                    outer_index: ind.born.1,
                    result,
                })
            })
            .collect(),
        stopped_by_budget: run.stopped_by_budget,
    }
}

fn fmt_fitness(f: f64) -> String {
    if f.is_finite() {
        f.to_string()
    } else {
        "inf".to_string()
    }
}

/// Outer fitness log: one row per population member per generation.
pub fn write_outer_log<W: io::Write>(
    records: &[FitnessRecord<TopologyGenome>],
    w: W,
) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "generation",
        "individual_index",
        "elite",
        "num_nodes",
        "inflow_amount",
        "chord_length",
        "chord_step",
        "seed",
        "nrmse",
        "error",
    ])?;
    for r in records {
        let g = r.genome.genes();
        wr.write_record([
            r.generation.to_string(),
            r.individual_index.to_string(),
            r.elite.to_string(),
            g[0].to_string(),
            g[1].to_string(),
            g[2].to_string(),
            g[3].to_string(),
            r.seed.to_string(),
            fmt_fitness(r.fitness),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Inner fitness logs of every outer evaluation, concatenated. Reaction
/// rates are joined with `;`.
pub fn write_inner_logs<W: io::Write>(runs: &[InnerRun], w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "outer_generation",
        "outer_index",
        "generation",
        "individual_index",
        "elite",
        "outflow_rate",
        "input_rate_scaling",
        "reaction_rate_scaling",
        "reaction_rates",
        "seed",
        "nrmse",
        "error",
    ])?;
    for run in runs {
        for r in &run.result.log {
            let rates = r
                .genome
                .reaction_rates
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(";");
            wr.write_record([
                run.outer_generation.to_string(),
                run.outer_index.to_string(),
                r.generation.to_string(),
                r.individual_index.to_string(),
                r.elite.to_string(),
                r.genome.outflow_rate.to_string(),
                r.genome.input_rate_scaling.to_string(),
                r.genome.reaction_rate_scaling.to_string(),
                rates,
                r.seed.to_string(),
                fmt_fitness(r.fitness),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds;

    /// Distance of the normalised inner genes from an interior point.
    struct Sphere;

    impl Objective for Sphere {
        fn evaluate(&self, _: &TopologyGenome, p: &ParamsGenome, _: u64) -> Result<f64, EvalError> {
            let norm = |x: f64, r: bounds::Range| (x - r.lo) / (r.hi - r.lo) - 0.3;
            let mut s = norm(p.outflow_rate, bounds::OUTFLOW_RATE).powi(2)
                + norm(p.input_rate_scaling, bounds::INPUT_RATE_SCALING).powi(2)
                + norm(p.reaction_rate_scaling, bounds::REACTION_RATE_SCALING).powi(2);
            s += p
                .reaction_rates
                .iter()
                .map(|&r| norm(r, bounds::REACTION_RATE).powi(2))
                .sum::<f64>();
            Ok(s)
        }
    }

    /// Prefers sparse chords and mid-sized rings.
    struct TopologyBowl;

    impl Objective for TopologyBowl {
        fn evaluate(&self, t: &TopologyGenome, p: &ParamsGenome, _: u64) -> Result<f64, EvalError> {
            let n = (f64::from(t.num_nodes) - 80.0) / 250.0;
            let s = (f64::from(t.chord_step) - 11.0) / 20.0;
            Ok(n * n + s * s + p.outflow_rate * 1e-3)
        }
    }

    fn quick(seed: u64, outer: usize, inner: usize) -> GaConfig {
        GaConfig {
            outer_generations: outer,
            inner_generations: inner,
            master_seed: seed,
            ..GaConfig::default()
        }
        .deterministic()
    }

    fn small_topology() -> TopologyGenome {
        TopologyGenome {
            num_nodes: 50,
            inflow_amount: 100,
            chord_length: 5,
            chord_step: 25,
        }
    }

    #[test]
    fn inner_sphere_improves() {
        let r = run_inner_ga(&small_topology(), &Sphere, &quick(1, 0, 30), (0, 0));
        assert_eq!(r.generation_min.len(), 31);
        assert!(r.best_fitness < r.generation_min[0]);
        assert!(r.generation_min.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.best.reaction_rates.len(), 52);
        for g in 0..=30 {
            assert_eq!(r.log.iter().filter(|x| x.generation == g).count(), 4);
        }
    }

    #[test]
    fn outer_tracks_inner_best_and_dimensions() {
        let r = run_outer_ga(&TopologyBowl, &quick(2, 4, 2));
        assert!(r.generation_min.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.best_params.reaction_rates.len(), r.best_topology.edge_count());
        for run in &r.inner_runs {
            for rec in &run.result.log {
                assert_eq!(rec.genome.reaction_rates.len(), run.result.topology.edge_count());
            }
        }
        // 4 initial + 2 per later generation
        assert_eq!(r.inner_runs.len(), 4 + 4 * 2);
        let logged_best = r
            .log
            .iter()
            .map(|x| x.fitness)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(logged_best, r.best_fitness);
    }

    #[test]
    fn outer_run_is_reproducible() {
        let a = run_outer_ga(&TopologyBowl, &quick(5, 3, 2));
        let b = run_outer_ga(&TopologyBowl, &quick(5, 3, 2));
        assert_eq!(a, b);
        let c = run_outer_ga(&TopologyBowl, &quick(6, 3, 2));
        assert_ne!(a.log, c.log);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = GaConfig {
            elite_size: 4,
            ..GaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GaConfig {
            indpb: 1.5,
            ..GaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GaConfig {
            inner_budget_seconds: Some(0.0),
            ..GaConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn out_of_bounds_genome_is_rejected_before_evaluation() {
        let t = TopologyGenome {
            num_nodes: 400,
            ..small_topology()
        };
        let r = run_inner_ga(&t, &Sphere, &quick(1, 0, 1), (0, 0));
        assert_eq!(r.best_fitness, f64::INFINITY);
        assert!(r.log.iter().all(|x| x.error.as_deref().unwrap().contains("bounds")));
    }

    #[test]
    fn log_csv_marks_failures() {
        let t = TopologyGenome {
            num_nodes: 400,
            ..small_topology()
        };
        let r = run_inner_ga(&t, &Sphere, &quick(1, 0, 0), (0, 0));
        let mut buf = Vec::new();
        write_inner_logs(
            &[InnerRun {
                outer_generation: 0,
                outer_index: 0,
                result: r,
            }],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().contains(",inf,"));
    }
}
