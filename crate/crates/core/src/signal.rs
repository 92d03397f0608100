//! Seeded random step inflow.
//!
//! The signal is piecewise constant on half-open segments
//! `[k * step, (k + 1) * step)`. Each segment value is the base inflow
//! amount scaled by a draw from a normal distribution with mean 0.5 and
//! standard deviation 0.25, truncated to `[0, 1]` by rejection.

use std::io;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::rng_from_seed;

pub const TRUNC_MEAN: f64 = 0.5;
pub const TRUNC_SD: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("total_time and step_size must be positive (got {total_time}, {step_size})")]
    NonPositiveTime { total_time: u32, step_size: u32 },
    #[error("step_size {step_size} does not divide total_time {total_time}")]
    NotDivisible { total_time: u32, step_size: u32 },
    #[error("inflow amount must be positive and finite, got {0}")]
    BadInflow(f64),
    #[error("segment values must be finite and non-negative")]
    BadSegment,
    #[error("time {t} outside signal domain [0, {total_time})")]
    OutOfRange { t: f64, total_time: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSignal {
    pub total_time: u32,
    pub step_size: u32,
    pub inflow_amount: f64,
    pub segment_values: Vec<f64>,
    /// `None` for hand-built signals.
    pub seed: Option<u64>,
}

fn check_grid(total_time: u32, step_size: u32) -> Result<(), SignalError> {
    if total_time == 0 || step_size == 0 {
        return Err(SignalError::NonPositiveTime {
            total_time,
            step_size,
        });
    }
    if !total_time.is_multiple_of(step_size) {
        return Err(SignalError::NotDivisible {
            total_time,
            step_size,
        });
    }
    Ok(())
}

/// One draw from N(0.5, 0.25) conditioned on `[0, 1]`.
pub fn sample_truncated_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let normal = Normal::new(TRUNC_MEAN, TRUNC_SD).expect("valid normal parameters");
    loop {
        let x = normal.sample(rng);
        if (0.0..=1.0).contains(&x) {
            return x;
        }
    }
}

pub fn generate_step_signal(
    total_time: u32,
    step_size: u32,
    inflow_amount: f64,
    seed: u64,
) -> Result<StepSignal, SignalError> {
    check_grid(total_time, step_size)?;
    if !(inflow_amount.is_finite() && inflow_amount > 0.0) {
        return Err(SignalError::BadInflow(inflow_amount));
    }
    let mut rng = rng_from_seed(seed);
    let segments = (total_time / step_size) as usize;
    let segment_values = (0..segments)
        .map(|_| inflow_amount * sample_truncated_normal(&mut rng))
        .collect();
    Ok(StepSignal {
        total_time,
        step_size,
        inflow_amount,
        segment_values,
        seed: Some(seed),
    })
}

impl StepSignal {
    /// Builds a signal from explicit segment values. `inflow_amount` is set
    /// to the largest value so the range invariant holds.
    pub fn from_segments(step_size: u32, segment_values: Vec<f64>) -> Result<Self, SignalError> {
        let total_time = step_size.saturating_mul(segment_values.len() as u32);
        check_grid(total_time, step_size)?;
        if segment_values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SignalError::BadSegment);
        }
        let inflow_amount = segment_values.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            total_time,
            step_size,
            inflow_amount,
            segment_values,
            seed: None,
        })
    }

    pub fn constant(total_time: u32, value: f64) -> Result<Self, SignalError> {
        Self::from_segments(total_time, vec![value])
    }

    pub fn num_segments(&self) -> usize {
        self.segment_values.len()
    }

    pub fn segment_index(&self, t: f64) -> Result<usize, SignalError> {
        if !(t >= 0.0 && t < f64::from(self.total_time)) {
            return Err(SignalError::OutOfRange {
                t,
                total_time: self.total_time,
            });
        }
        let k = (t / f64::from(self.step_size)).floor() as usize;
        Ok(k.min(self.segment_values.len() - 1))
    }

    pub fn value_at(&self, t: f64) -> Result<f64, SignalError> {
        Ok(self.segment_values[self.segment_index(t)?])
    }

    /// Start time of segment `k + 1`, i.e. the end of segment `k`.
    pub fn segment_end(&self, k: usize) -> f64 {
        f64::from(self.step_size) * (k as f64 + 1.0)
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["segment_start_seconds", "value"])?;
        for (k, v) in self.segment_values.iter().enumerate() {
            let start = k as u64 * u64::from(self.step_size);
            wr.write_record([start.to_string(), v.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_counts() {
        assert_eq!(
            generate_step_signal(50, 25, 100.0, 1).unwrap().num_segments(),
            2
        );
        assert_eq!(
            generate_step_signal(50, 2, 100.0, 1).unwrap().num_segments(),
            25
        );
    }

    #[test]
    fn same_seed_same_values() {
        let a = generate_step_signal(50, 2, 100.0, 1).unwrap();
        let b = generate_step_signal(50, 2, 100.0, 1).unwrap();
        assert_eq!(a.segment_values, b.segment_values);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            generate_step_signal(50, 3, 100.0, 1),
            Err(SignalError::NotDivisible { .. })
        ));
        assert!(generate_step_signal(0, 2, 100.0, 1).is_err());
        assert!(generate_step_signal(50, 0, 100.0, 1).is_err());
        assert!(generate_step_signal(50, 2, 0.0, 1).is_err());
        assert!(generate_step_signal(50, 2, -3.0, 1).is_err());
        assert!(StepSignal::from_segments(2, vec![1.0, -1.0]).is_err());
        assert!(StepSignal::from_segments(2, vec![]).is_err());
    }

    #[test]
    fn value_lookup_is_half_open() {
        let s = generate_step_signal(50, 5, 100.0, 7).unwrap();
        assert_eq!(s.value_at(0.0).unwrap(), s.segment_values[0]);
        assert_eq!(s.value_at(4.999).unwrap(), s.segment_values[0]);
        assert_eq!(s.value_at(5.0).unwrap(), s.segment_values[1]);
        assert_eq!(s.value_at(49.9).unwrap(), s.segment_values[9]);
        assert!(s.value_at(50.0).is_err());
        assert!(s.value_at(-0.1).is_err());
        assert!(s.value_at(f64::NAN).is_err());
    }

    #[test]
    fn csv_layout() {
        let s = StepSignal::from_segments(10, vec![1.0, 2.5]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "segment_start_seconds,value\n0,1\n10,2.5\n"
        );
    }
}
