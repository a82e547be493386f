//! Least-squares and mean-predictor baselines.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::impute::Imputer;
use super::{labels, FeatureLayout, PairFeatureRow, RegressionError};
use crate::util::stable_mean;

/// Penalty applied when the design matrix is rank deficient.
pub const RIDGE_PENALTY: f64 = 1e-6;

const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub layout: FeatureLayout,
    pub imputer: Imputer,
    pub intercept: f64,
    /// One coefficient per imputed column, mask columns included.
    pub coefficients: Vec<f64>,
    /// Set when the fit fell back to ridge regression.
    pub ridge: Option<f64>,
}

/// Fits `y ≈ intercept + x·β` on an imputed matrix. Constant columns get a
/// zero coefficient.
pub fn fit_least_squares(x: &[Vec<f64>], y: &[f64]) -> Result<(f64, Vec<f64>, Option<f64>), RegressionError> {
    let n = y.len();
    if n < 2 {
        return Err(RegressionError::InsufficientData { needed: 2, got: n });
    }
    let cols = x[0].len();
    let active: Vec<usize> = (0..cols)
        .filter(|&c| x.iter().any(|r| r[c] != x[0][c]))
        .collect();
    let y_mean = stable_mean(y.iter().copied()).expect("nonempty");
    let means: Vec<f64> = (0..cols)
        .map(|c| stable_mean(x.iter().map(|r| r[c])).expect("nonempty"))
        .collect();
    let mut coefficients = vec![0.0; cols];
    if active.is_empty() {
        return Ok((y_mean, coefficients, None));
    }
    let a = DMatrix::from_fn(n, active.len(), |i, j| x[i][active[j]] - means[active[j]]);
    let b = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let (beta, ridge) = if n > active.len() && smin > RANK_TOLERANCE * smax {
        let beta = svd
            .solve(&b, 0.0)
            .map_err(|e| RegressionError::InvalidParams(e.to_string()))?;
        (beta, None)
    } else {
        warn!("design matrix is singular; falling back to ridge with penalty {RIDGE_PENALTY}");
        let at = a.transpose();
        let mut gram = &at * &a;
        for i in 0..gram.nrows() {
            gram[(i, i)] += RIDGE_PENALTY;
        }
        let rhs = &at * &b;
        let beta = gram
            .cholesky()
            .ok_or_else(|| RegressionError::InvalidParams("ridge system not positive definite".into()))?
            .solve(&rhs);
        (beta, Some(RIDGE_PENALTY))
    };
    let mut intercept = y_mean;
    for (j, &c) in active.iter().enumerate() {
        coefficients[c] = beta[j];
        intercept -= beta[j] * means[c];
    }
    Ok((intercept, coefficients, ridge))
}

pub fn train_linear(rows: &[PairFeatureRow], layout: &FeatureLayout) -> Result<LinearModel, RegressionError> {
    let y = labels(rows)?;
    let imputer = Imputer::fit(rows, layout.len())?;
    let x = imputer.transform_all(rows)?;
    let (intercept, coefficients, ridge) = fit_least_squares(&x, &y)?;
    Ok(LinearModel {
        layout: layout.clone(),
        imputer,
        intercept,
        coefficients,
        ridge,
    })
}

impl LinearModel {
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, row: &PairFeatureRow) -> Result<f64, RegressionError> {
        let x = self.imputer.transform(row)?;
        Ok(self.predict_raw(&x).clamp(0.0, 1.0))
    }
}

/// Predicts the training mean for every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanModel {
    pub layout: FeatureLayout,
    pub value: f64,
}

pub fn train_mean(rows: &[PairFeatureRow], layout: &FeatureLayout) -> Result<MeanModel, RegressionError> {
    let y = labels(rows)?;
    let value = stable_mean(y).ok_or(RegressionError::InsufficientData { needed: 1, got: 0 })?;
    Ok(MeanModel {
        layout: layout.clone(),
        value,
    })
}
