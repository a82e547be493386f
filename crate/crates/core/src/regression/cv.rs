//! k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Learner;
use super::{labels, FeatureLayout, PairFeatureRow, RegressionError};
use crate::evaluation::MetricReport;
use crate::util::derive_seed;

pub const DEFAULT_FOLDS: usize = 10;

/// Splits `0..n` into `k` shuffled folds whose sizes differ by at most one.
/// Each fold is sorted.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF01D, 0)));
    let mut folds = vec![Vec::with_capacity(n / k.max(1) + 1); k];
    for (j, i) in order.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<MetricReport>,
    /// Metrics over all out-of-fold predictions together.
    pub pooled: MetricReport,
    /// Out-of-fold prediction for each input row, in input order.
    pub predictions: Vec<f64>,
}

pub fn cross_validate(
    rows: &[PairFeatureRow],
    layout: &FeatureLayout,
    learner: &Learner,
    k: usize,
    seed: u64,
) -> Result<CvReport, RegressionError> {
    if k < 2 {
        return Err(RegressionError::InvalidParams("cross-validation needs k >= 2".into()));
    }
    if rows.len() < k {
        return Err(RegressionError::TooFewRows {
            rows: rows.len(),
            folds: k,
        });
    }
    let gold = labels(rows)?;
    let folds = fold_assignment(rows.len(), k, seed);
    let mut predictions = vec![f64::NAN; rows.len()];
    let mut reports = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let mut in_test = vec![false; rows.len()];
        for &i in test {
            in_test[i] = true;
        }
        let train: Vec<PairFeatureRow> = rows
            .iter()
            .zip(&in_test)
            .filter(|(_, t)| !**t)
            .map(|(r, _)| r.clone())
            .collect();
        let model = learner.fit(&train, layout, derive_seed(seed, 1, f as u64))?;
        let held: Vec<PairFeatureRow> = test.iter().map(|&i| rows[i].clone()).collect();
        let pred = model.predict_all(&held)?;
        let fold_gold: Vec<f64> = test.iter().map(|&i| gold[i]).collect();
        reports.push(MetricReport::compute(&pred, &fold_gold)?);
        for (&i, p) in test.iter().zip(pred) {
            predictions[i] = p;
        }
    }
    Ok(CvReport {
        k,
        seed,
        folds: reports,
        pooled: MetricReport::compute(&predictions, &gold)?,
        predictions,
    })
}
