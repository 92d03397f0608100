//! Generational loop shared by both levels.
//!
//! Each generation keeps the best `elite_size` finite-fitness individuals
//! unchanged and fills the rest of the population with offspring: two
//! tournament winners are cloned, mated, mutated and evaluated. Offspring of
//! one generation are evaluated in parallel; results are collected in index
//! order, so scheduling never affects the outcome.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::seeding::Rng;
use rand::Rng as _;

use super::{EvalError, FitnessRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelConfig {
    pub population_size: usize,
    pub elite_size: usize,
    pub tournament_size: usize,
    pub indpb: f64,
    pub crossover_swap: f64,
    pub generations: usize,
    pub budget: Option<Duration>,
}

pub struct Evaluation<X> {
    pub fitness: Result<f64, EvalError>,
    pub seed: u64,
    pub extra: Option<X>,
}

#[derive(Debug, Clone)]
pub struct Individual<G, X> {
    pub genome: G,
    pub fitness: f64,
    pub seed: u64,
    pub error: Option<String>,
    pub extra: Option<X>,
    /// `(generation, index)` at which this individual was evaluated.
    pub born: (usize, usize),
}

pub struct GaRun<G, X> {
    pub best: Individual<G, X>,
    pub generation_min: Vec<f64>,
    pub log: Vec<FitnessRecord<G>>,
    /// Evaluated individuals in `(generation, index)` order.
    pub evaluated: Vec<Individual<G, X>>,
    pub stopped_by_budget: bool,
}

fn sanitize(f: Result<f64, EvalError>) -> (f64, Option<String>) {
    match f {
        Ok(v) if v.is_finite() && v >= 0.0 => (v, None),
        Ok(v) => (f64::INFINITY, Some(format!("non-finite fitness {v}"))),
        Err(e) => (f64::INFINITY, Some(e.to_string())),
    }
}

fn tournament<'a, G, X>(
    population: &'a [Individual<G, X>],
    size: usize,
    rng: &mut Rng,
) -> &'a Individual<G, X> {
    let mut best = &population[rng.random_range(0..population.len())];
    for _ in 1..size {
        let c = &population[rng.random_range(0..population.len())];
        if c.fitness < best.fitness {
            best = c;
        }
    }
    best
}

pub fn run_ga<G, X, I, M, C, E>(
    cfg: &LevelConfig,
    rng: &mut Rng,
    mut init: I,
    mutate: M,
    crossover: C,
    evaluate: E,
) -> GaRun<G, X>
where
    G: Clone + Send + Sync,
    X: Clone + Send,
    I: FnMut(&mut Rng) -> G,
    M: Fn(&mut G, &mut Rng),
    C: Fn(&mut G, &mut G, &mut Rng),
    E: Fn(&G, usize, usize) -> Evaluation<X> + Sync,
{
    assert!(cfg.population_size >= 1 && cfg.elite_size < cfg.population_size);
    let start = Instant::now();
    let mut log = Vec::new();
    let mut evaluated = Vec::new();
    let mut generation_min = Vec::new();

    let eval_batch = |genomes: Vec<G>, generation: usize, first_index: usize| {
        let results: Vec<Evaluation<X>> = genomes
            .par_iter()
            .enumerate()
            .map(|(i, g)| evaluate(g, generation, first_index + i))
            .collect();
        genomes
            .into_iter()
            .zip(results)
            .enumerate()
            .map(|(i, (genome, ev))| {
                let (fitness, error) = sanitize(ev.fitness);
                Individual {
                    genome,
                    fitness,
                    seed: ev.seed,
                    error,
                    extra: ev.extra,
                    born: (generation, first_index + i),
                }
            })
            .collect::<Vec<_>>()
    };

    let initial: Vec<G> = (0..cfg.population_size).map(|_| init(rng)).collect();
    let mut population = eval_batch(initial, 0, 0);
    evaluated.extend(population.iter().cloned());

    let mut stopped_by_budget = false;
    let mut generation = 0;
    loop {
        record(&mut log, &population, generation);
        generation_min.push(
            population
                .iter()
                .map(|i| i.fitness)
                .fold(f64::INFINITY, f64::min),
        );
        if generation >= cfg.generations {
            break;
        }
        if cfg.budget.is_some_and(|b| start.elapsed() >= b) {
            stopped_by_budget = true;
            break;
        }
        generation += 1;

        let mut ranked: Vec<&Individual<G, X>> = population.iter().collect();
        ranked.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        let elites: Vec<Individual<G, X>> = ranked
            .into_iter()
            .filter(|i| i.fitness.is_finite())
            .take(cfg.elite_size)
            .cloned()
            .collect();

        let needed = cfg.population_size - elites.len();
        let mut offspring = Vec::with_capacity(needed + 1);
        while offspring.len() < needed {
            let mut a = tournament(&population, cfg.tournament_size, rng).genome.clone();
            let mut b = tournament(&population, cfg.tournament_size, rng).genome.clone();
            crossover(&mut a, &mut b, rng);
            mutate(&mut a, rng);
            mutate(&mut b, rng);
            offspring.push(a);
            offspring.push(b);
        }
        offspring.truncate(needed);

        let children = eval_batch(offspring, generation, elites.len());
        evaluated.extend(children.iter().cloned());
        population = elites.into_iter().chain(children).collect();
    }

    let best = population
        .iter()
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .expect("non-empty population")
        .clone();
    GaRun {
        best,
        generation_min,
        log,
        evaluated,
        stopped_by_budget,
    }
}

fn record<G: Clone, X>(
    log: &mut Vec<FitnessRecord<G>>,
    population: &[Individual<G, X>],
    generation: usize,
) {
    for (index, ind) in population.iter().enumerate() {
        log.push(FitnessRecord {
            generation,
            individual_index: index,
            genome: ind.genome.clone(),
            fitness: ind.fitness,
            seed: ind.seed,
            elite: ind.born.0 != generation,
            error: ind.error.clone(),
        });
    }
}
