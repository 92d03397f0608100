//! Full evaluation path: topology -> signal -> simulation -> targets ->
//! split -> ridge fit -> test NRMSE.

use serde::{Deserialize, Serialize};

use crate::readout::{self, nrmse, Dataset, Predictions, ReadoutError, ReadoutReport};
use crate::seeding::{derive_seed, Purpose};
use crate::signal::{generate_step_signal, StepSignal};
use crate::ssa::{simulate, NetworkParams, ReactionNetwork, Trajectory};
use crate::tasks::{assemble_dataset, TargetSeries, Task};
use crate::topology::{build_topology, Topology, TopologySpec};

use super::{bounds_error, EvalError, Objective, ParamsGenome, TopologyGenome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineObjective {
    pub task: Task,
    pub step_size: u32,
    pub total_time: u32,
    pub ridge_lambda: f64,
    /// Shared by every evaluation so all candidates see the same input
    /// pattern (scaled by their own inflow amount).
    pub signal_seed: u64,
}

impl PipelineObjective {
    pub fn new(task: Task, step_size: u32, total_time: u32, ridge_lambda: f64, master_seed: u64) -> Self {
        Self {
            task,
            step_size,
            total_time,
            ridge_lambda,
            signal_seed: derive_seed(master_seed, Purpose::Signal, &[]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub topology: Topology,
    pub params: NetworkParams,
    pub signal: StepSignal,
    pub targets: TargetSeries,
    pub trajectory: Trajectory,
    pub dataset: Dataset,
    pub report: ReadoutReport,
    pub predictions: Predictions,
}

/// Rejects target series whose test window is flat before any simulation
/// is spent on them; NRMSE is undefined there.
fn check_scorable(targets: &TargetSeries) -> Result<(), ReadoutError> {
    let usable: Vec<f64> = targets.defined().map(|(_, v)| v).collect();
    if usable.len() < readout::MIN_SPLIT_ROWS {
        return Err(ReadoutError::TooFewRows {
            needed: readout::MIN_SPLIT_ROWS,
            got: usable.len(),
        });
    }
    let train = usable.len() * readout::TRAIN_FRACTION_NUM / readout::TRAIN_FRACTION_DEN;
    let test = &usable[train..];
    nrmse(test, test).map(|_| ())
}

/// The readout half of the pipeline, usable with any trajectory.
pub fn score_trajectory(
    trajectory: &Trajectory,
    targets: &TargetSeries,
    ridge_lambda: f64,
) -> Result<(Dataset, ReadoutReport, Predictions), EvalError> {
    let dataset = assemble_dataset(trajectory, targets)?;
    let (report, predictions) = readout::train_and_score(&dataset, ridge_lambda)?;
    Ok((dataset, report, predictions))
}

pub fn run_pipeline(
    objective: &PipelineObjective,
    spec: TopologySpec,
    inflow_amount: f64,
    params: &NetworkParams,
    ssa_seed: u64,
) -> Result<PipelineRun, EvalError> {
    let topology = build_topology(spec)?;
    let signal = generate_step_signal(
        objective.total_time,
        objective.step_size,
        inflow_amount,
        objective.signal_seed,
    )?;
    // targets come from the signal alone
    let grid: Vec<u32> = (0..objective.total_time).collect();
    let targets = objective.task.targets(&signal, &grid)?;
    check_scorable(&targets)?;

    let network = ReactionNetwork::from(&topology);
    let trajectory = simulate(&network, params, &signal, objective.total_time, ssa_seed)?;
    let (dataset, report, predictions) =
        score_trajectory(&trajectory, &targets, objective.ridge_lambda)?;
    Ok(PipelineRun {
        topology,
        params: params.clone(),
        signal,
        targets,
        trajectory,
        dataset,
        report,
        predictions,
    })
}

/// Test-set NRMSE of one genome pair. Genomes must lie inside the search
/// bounds.
pub fn evaluate_params(
    topology: &TopologyGenome,
    params: &ParamsGenome,
    objective: &PipelineObjective,
    ssa_seed: u64,
) -> Result<f64, EvalError> {
    if let Some(e) = bounds_error(topology, Some(params)) {
        return Err(e);
    }
    let run = run_pipeline(
        objective,
        topology.spec(),
        f64::from(topology.inflow_amount),
        &params.to_params(),
        ssa_seed,
    )?;
    Ok(run.report.test_nrmse)
}

impl Objective for PipelineObjective {
    fn evaluate(
        &self,
        topology: &TopologyGenome,
        params: &ParamsGenome,
        seed: u64,
    ) -> Result<f64, EvalError> {
        evaluate_params(topology, params, self, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    fn genome() -> TopologyGenome {
        TopologyGenome {
            num_nodes: 50,
            inflow_amount: 60,
            chord_length: 5,
            chord_step: 10,
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let objective = PipelineObjective::new(Task::Short, 2, 50, 1.0, 1);
        let mut rng = rng_from_seed(8);
        let params = ParamsGenome::random(&mut rng, genome().edge_count());
        let a = evaluate_params(&genome(), &params, &objective, 42).unwrap();
        let b = evaluate_params(&genome(), &params, &objective, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite() && a >= 0.0);
    }

    #[test]
    fn flat_test_window_fails_without_simulating() {
        let objective = PipelineObjective::new(Task::Short, 25, 50, 1.0, 1);
        let mut rng = rng_from_seed(8);
        let params = ParamsGenome::random(&mut rng, genome().edge_count());
        assert!(matches!(
            evaluate_params(&genome(), &params, &objective, 1),
            Err(EvalError::Readout(ReadoutError::ZeroVariance))
        ));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let objective = PipelineObjective::new(Task::Short, 2, 50, 1.0, 1);
        let mut rng = rng_from_seed(8);
        let params = ParamsGenome::random(&mut rng, 3);
        assert!(matches!(
            evaluate_params(&genome(), &params, &objective, 1),
            Err(EvalError::OutOfBounds(_))
        ));
    }

    #[test]
    fn oracle_features_give_perfect_memory() {
        // integer-valued signal so lagged copies fit in count columns
        let values: Vec<f64> = (0..25).map(|k| ((k * 37 + 11) % 41) as f64).collect();
        let signal = StepSignal::from_segments(2, values).unwrap();
        let grid: Vec<u32> = (0..50).collect();
        let q = |t: u32, lag: u32| -> u64 {
            t.checked_sub(lag)
                .map_or(0, |s| signal.value_at(f64::from(s)).unwrap() as u64)
        };
        for task in [Task::Short, Task::long(6).unwrap()] {
            let (l1, l2) = match task {
                Task::Short => (1, 2),
                Task::Long { tau } => (tau, 3 * tau / 2),
            };
            // node 0 is dropped; nodes 1 and 2 hold the lagged inputs
            let rows = grid.iter().map(|&t| vec![999, q(t, l1), q(t, l2), 5]).collect();
            let traj = Trajectory::from_rows(grid.clone(), rows);
            let targets = task.targets(&signal, &grid).unwrap();
            let (_, report, _) = score_trajectory(&traj, &targets, 1e-9).unwrap();
            assert!(report.test_nrmse < 1e-6, "{task}: {}", report.test_nrmse);
        }
    }
}
