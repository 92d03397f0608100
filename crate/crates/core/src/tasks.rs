//! Memory-capacity targets and dataset assembly.
//!
//! Short-term task: `y(t) = Q(t - 1) + 2 Q(t - 2)`.
//! Long-term task: `y(t) = Q(t - tau) + 0.5 Q(t - 1.5 tau)`.
//!
//! `Q` is the inflow signal value; all lags are whole seconds on the
//! sample grid. Samples whose lags reach before `t = 0` are washout.

use std::fmt;
use std::io;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::readout::Dataset;
use crate::signal::StepSignal;
use crate::ssa::Trajectory;
use crate::topology::INPUT_NODE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("tau must be positive and even so that 1.5 * tau is a whole second, got {0}")]
    BadTau(u32),
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error("trajectory grid ({trajectory} samples) does not match targets ({targets})")]
    GridMismatch { trajectory: usize, targets: usize },
    #[error("trajectory sample times differ from target sample times")]
    TimeMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Short,
    Long { tau: u32 },
}

impl Task {
    pub fn long(tau: u32) -> Result<Self, TaskError> {
        if tau == 0 || !tau.is_multiple_of(2) {
            return Err(TaskError::BadTau(tau));
        }
        Ok(Task::Long { tau })
    }

    /// Largest lag, which is also the washout length in samples.
    pub fn washout(&self) -> u32 {
        match *self {
            Task::Short => 2,
            Task::Long { tau } => 3 * tau / 2,
        }
    }

    pub fn targets(
        &self,
        signal: &StepSignal,
        sample_times: &[u32],
    ) -> Result<TargetSeries, TaskError> {
        match *self {
            Task::Short => Ok(short_term_target(signal, sample_times)),
            Task::Long { tau } => long_term_target(signal, tau, sample_times),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Short => write!(f, "short"),
            Task::Long { tau } => write!(f, "long(tau={tau})"),
        }
    }
}

/// Target values aligned with `sample_times`; `None` marks washout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSeries {
    pub sample_times: Vec<u32>,
    pub values: Vec<Option<f64>>,
}

impl TargetSeries {
    pub fn washout(&self) -> usize {
        self.values.iter().take_while(|v| v.is_none()).count()
    }

    pub fn defined(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.sample_times
            .iter()
            .zip(&self.values)
            .filter_map(|(&t, v)| v.map(|v| (t, v)))
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "target"])?;
        for (t, v) in self.defined() {
            wr.write_record([t.to_string(), v.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn lagged(signal: &StepSignal, t: u32, lag: u32) -> Option<f64> {
    let s = t.checked_sub(lag)?;
    signal.value_at(f64::from(s)).ok()
}

fn build(
    sample_times: &[u32],
    f: impl Fn(u32) -> Option<f64>,
) -> TargetSeries {
    TargetSeries {
        sample_times: sample_times.to_vec(),
        values: sample_times.iter().map(|&t| f(t)).collect(),
    }
}

pub fn short_term_target(signal: &StepSignal, sample_times: &[u32]) -> TargetSeries {
    build(sample_times, |t| {
        Some(lagged(signal, t, 1)? + 2.0 * lagged(signal, t, 2)?)
    })
}

pub fn long_term_target(
    signal: &StepSignal,
    tau: u32,
    sample_times: &[u32],
) -> Result<TargetSeries, TaskError> {
    Task::long(tau)?;
    let far = 3 * tau / 2;
    Ok(build(sample_times, |t| {
        Some(lagged(signal, t, tau)? + 0.5 * lagged(signal, t, far)?)
    }))
}

/// Drops the input-node column and the washout rows, pairing each
/// remaining sample with its target.
pub fn assemble_dataset(
    trajectory: &Trajectory,
    targets: &TargetSeries,
) -> Result<Dataset, TaskError> {
    let samples = trajectory.num_samples();
    if samples == 0 || trajectory.num_nodes == 0 {
        return Err(TaskError::EmptyTrajectory);
    }
    if samples != targets.values.len() {
        return Err(TaskError::GridMismatch {
            trajectory: samples,
            targets: targets.values.len(),
        });
    }
    if trajectory.sample_times != targets.sample_times {
        return Err(TaskError::TimeMismatch);
    }
    let rows: Vec<usize> = (0..samples)
        .filter(|&i| targets.values[i].is_some())
        .collect();
    let feature_nodes: Vec<usize> = (0..trajectory.num_nodes)
        .filter(|&v| v != INPUT_NODE)
        .collect();
    let features = DMatrix::from_fn(rows.len(), feature_nodes.len(), |r, c| {
        trajectory.get(rows[r], feature_nodes[c]) as f64
    });
    let y = DVector::from_iterator(
        rows.len(),
        rows.iter().map(|&i| targets.values[i].expect("filtered")),
    );
    Ok(Dataset {
        features,
        targets: y,
        sample_times: rows.iter().map(|&i| trajectory.sample_times[i]).collect(),
        washout: targets.washout(),
    })
}
