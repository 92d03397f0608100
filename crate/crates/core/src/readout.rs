//! Linear readout: ridge regression from node counts to task targets,
//! scored with the standard-deviation normalised RMSE.

use std::io;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of usable rows assigned to training.
pub const TRAIN_FRACTION_NUM: usize = 7;
pub const TRAIN_FRACTION_DEN: usize = 10;
pub const MIN_SPLIT_ROWS: usize = 10;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReadoutError {
    #[error("need at least {needed} usable rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("ridge_lambda must be finite and >= 0, got {0}")]
    BadLambda(f64),
    #[error("normal equations are numerically rank deficient (lambda = {0})")]
    NumericalRank(f64),
    #[error("feature columns ({features}) do not match model weights ({weights})")]
    Dimension { features: usize, weights: usize },
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("target series has zero variance")]
    ZeroVariance,
    #[error("non-finite values in regression inputs")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Rows are samples, columns are node counts without the input node.
    pub features: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub sample_times: Vec<u32>,
    /// Leading samples dropped before these rows were built.
    pub washout: usize,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    fn slice(&self, start: usize, len: usize) -> Dataset {
        Dataset {
            features: self.features.rows(start, len).into_owned(),
            targets: self.targets.rows(start, len).into_owned(),
            sample_times: self.sample_times[start..start + len].to_vec(),
            washout: self.washout,
        }
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let header = ["t".to_string(), "target".to_string()]
            .into_iter()
            .chain((0..self.features.ncols()).map(|j| format!("x{j}")));
        wr.write_record(header)?;
        for i in 0..self.rows() {
            let row = self.features.row(i);
            let rec = [self.sample_times[i].to_string(), self.targets[i].to_string()]
                .into_iter()
                .chain(row.iter().map(f64::to_string));
            wr.write_record(rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Chronological split: the first `floor(0.7 * rows)` rows train.
pub fn split_train_test(dataset: &Dataset) -> Result<(Dataset, Dataset), ReadoutError> {
    let rows = dataset.rows();
    if rows < MIN_SPLIT_ROWS {
        return Err(ReadoutError::TooFewRows {
            needed: MIN_SPLIT_ROWS,
            got: rows,
        });
    }
    let train = rows * TRAIN_FRACTION_NUM / TRAIN_FRACTION_DEN;
    Ok((dataset.slice(0, train), dataset.slice(train, rows - train)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub ridge_lambda: f64,
}

impl ReadoutModel {
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<DVector<f64>, ReadoutError> {
        if features.ncols() != self.weights.len() {
            return Err(ReadoutError::Dimension {
                features: features.ncols(),
                weights: self.weights.len(),
            });
        }
        let w = DVector::from_column_slice(&self.weights);
        Ok((features * w).add_scalar(self.intercept))
    }
}

fn centered(train: &Dataset) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    let x = &train.features;
    let col_means = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
    let y_mean = train.targets.mean();
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-col_means[j]);
    }
    let yc = train.targets.add_scalar(-y_mean);
    (xc, yc, col_means, y_mean)
}

/// Minimises `||y - Xw - c||^2 + lambda ||w||^2` with an unpenalised
/// intercept. Solved on centred data via the normal equations and a
/// Cholesky factorisation.
pub fn fit_ridge(train: &Dataset, ridge_lambda: f64) -> Result<ReadoutModel, ReadoutError> {
    if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
        return Err(ReadoutError::BadLambda(ridge_lambda));
    }
    if train.rows() == 0 {
        return Err(ReadoutError::TooFewRows { needed: 1, got: 0 });
    }
    if train.features.iter().chain(train.targets.iter()).any(|v| !v.is_finite()) {
        return Err(ReadoutError::NonFinite);
    }
    let (xc, yc, col_means, y_mean) = centered(train);
    let p = xc.ncols();
    if p == 0 {
        return Ok(ReadoutModel {
            weights: vec![],
            intercept: y_mean,
            ridge_lambda,
        });
    }
    let xt = xc.transpose();
    let mut gram = &xt * &xc;
    for i in 0..p {
        gram[(i, i)] += ridge_lambda;
    }
    let rhs = &xt * &yc;
    let chol = gram
        .cholesky()
        .ok_or(ReadoutError::NumericalRank(ridge_lambda))?;
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ReadoutError::NumericalRank(ridge_lambda));
    }
    let intercept = y_mean - col_means.dot(&w);
    Ok(ReadoutModel {
        weights: w.iter().copied().collect(),
        intercept,
        ridge_lambda,
    })
}

/// Residual of the centred normal equations,
/// `||(Xc^T Xc + lambda I) w - Xc^T yc||`, for a fitted model.
pub fn normal_equation_residual(train: &Dataset, model: &ReadoutModel) -> f64 {
    let (xc, yc, _, _) = centered(train);
    let w = DVector::from_column_slice(&model.weights);
    let xt = xc.transpose();
    let lhs = &xt * (&xc * &w) + &w * model.ridge_lambda;
    (lhs - xt * yc).norm()
}

/// `sqrt(mean((p - y)^2)) / std(y)` with population normalisation.
pub fn nrmse(predictions: &[f64], targets: &[f64]) -> Result<f64, ReadoutError> {
    if predictions.len() != targets.len() {
        return Err(ReadoutError::LengthMismatch(predictions.len(), targets.len()));
    }
    let n = targets.len();
    if n < 2 {
        return Err(ReadoutError::TooFewRows { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = targets.iter().sum::<f64>() / nf;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / nf;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(ReadoutError::ZeroVariance);
    }
    let mse = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / nf;
    Ok(mse.sqrt() / sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutReport {
    pub model: ReadoutModel,
    pub train_nrmse: f64,
    pub test_nrmse: f64,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// Predictions for every usable row, tagged with the split each row fell in.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub sample_times: Vec<u32>,
    pub targets: Vec<f64>,
    pub predictions: Vec<f64>,
    pub train_rows: usize,
}

impl Predictions {
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "target", "prediction", "split"])?;
        for i in 0..self.targets.len() {
            let split = if i < self.train_rows { "train" } else { "test" };
            wr.write_record([
                self.sample_times[i].to_string(),
                self.targets[i].to_string(),
                self.predictions[i].to_string(),
                split.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Split, fit on the training rows and score both halves.
pub fn train_and_score(
    dataset: &Dataset,
    ridge_lambda: f64,
) -> Result<(ReadoutReport, Predictions), ReadoutError> {
    let (train, test) = split_train_test(dataset)?;
    let model = fit_ridge(&train, ridge_lambda)?;
    let p_train = model.predict(&train.features)?;
    let p_test = model.predict(&test.features)?;
    let test_nrmse = nrmse(p_test.as_slice(), test.targets.as_slice())?;
    // a flat training window is legal; only the test score is the fitness
    let train_nrmse = nrmse(p_train.as_slice(), train.targets.as_slice()).unwrap_or(f64::NAN);
    let predictions = Predictions {
        sample_times: dataset.sample_times.clone(),
        targets: dataset.targets.iter().copied().collect(),
        predictions: p_train.iter().chain(p_test.iter()).copied().collect(),
        train_rows: train.rows(),
    };
    Ok((
        ReadoutReport {
            model,
            train_nrmse,
            test_nrmse,
            train_rows: train.rows(),
            test_rows: test.rows(),
        },
        predictions,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64, y: impl Fn(usize) -> f64) -> Dataset {
        Dataset {
            features: DMatrix::from_fn(rows, cols, f),
            targets: DVector::from_fn(rows, |i, _| y(i)),
            sample_times: (0..rows as u32).collect(),
            washout: 0,
        }
    }

    #[test]
    fn split_sizes() {
        let d = dataset(48, 2, |i, j| (i + j) as f64, |i| i as f64);
        let (tr, te) = split_train_test(&d).unwrap();
        assert_eq!((tr.rows(), te.rows()), (33, 15));
        assert_eq!(tr.sample_times, (0..33).collect::<Vec<_>>());
        assert_eq!(te.sample_times, (33..48).collect::<Vec<_>>());
        assert_eq!(te.features[(0, 1)], 34.0);

        let d = dataset(10, 1, |i, _| i as f64, |i| i as f64);
        let (tr, te) = split_train_test(&d).unwrap();
        assert_eq!((tr.rows(), te.rows()), (7, 3));

        let d = dataset(9, 1, |i, _| i as f64, |i| i as f64);
        assert!(matches!(
            split_train_test(&d),
            Err(ReadoutError::TooFewRows { .. })
        ));
    }

    #[test]
    fn nrmse_reference_values() {
        assert_eq!(nrmse(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), 0.0);
        assert_eq!(nrmse(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 1.0);
        let y = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let m = y.iter().sum::<f64>() / y.len() as f64;
        assert!((nrmse(&[m; 8], &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nrmse_errors() {
        assert!(matches!(
            nrmse(&[1.0, 2.0], &[3.0, 3.0]),
            Err(ReadoutError::ZeroVariance)
        ));
        let c = 130.3_f64 * 1.3;
        assert!(matches!(
            nrmse(&[0.0; 7], &[c; 7]),
            Err(ReadoutError::ZeroVariance)
        ));
        assert!(nrmse(&[1.0], &[1.0]).is_err());
        assert!(nrmse(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn constant_target_goes_to_intercept() {
        let d = dataset(20, 3, |i, j| ((i * 7 + j * 3) % 11) as f64, |_| 4.5);
        let m = fit_ridge(&d, 0.3).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-12));
        assert!((m.intercept - 4.5).abs() < 1e-12);
    }

    #[test]
    fn large_lambda_shrinks_weights() {
        let d = dataset(30, 4, |i, j| ((i * 5 + j * 13) % 17) as f64, |i| (i % 7) as f64);
        let m = fit_ridge(&d, 1e12).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
    }

    #[test]
    fn degenerate_features_at_zero_lambda() {
        // duplicated column
        let d = dataset(12, 2, |i, _| i as f64, |i| 2.0 * i as f64);
        assert!(matches!(
            fit_ridge(&d, 0.0),
            Err(ReadoutError::NumericalRank(_))
        ));
        assert!(fit_ridge(&d, 1.0).is_ok());
        assert!(matches!(fit_ridge(&d, -1.0), Err(ReadoutError::BadLambda(_))));
    }

    #[test]
    fn prediction_dimension_checked() {
        let m = ReadoutModel {
            weights: vec![1.0, 2.0],
            intercept: 0.0,
            ridge_lambda: 1.0,
        };
        assert!(m.predict(&DMatrix::zeros(3, 3)).is_err());
        let p = m.predict(&DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        assert_eq!(p[0], 3.0);
    }
}
