//! Correlation and error statistics, and the Fisher z comparison of two
//! correlation coefficients.

use serde::{Deserialize, Serialize};
use libm::erfc;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EvalError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("input is constant; correlation undefined")]
    ConstantInput,

    #[error("z comparison needs n >= 4, got {0}")]
    DegenerateN(usize),

    #[error("correlation {0} outside (-1, 1)")]
    InvalidCorrelation(f64),
}

/// Significance level used to flag a z comparison.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

fn check_pair(x: &[f64], y: &[f64], needed: usize) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < needed {
        return Err(EvalError::TooFewValues {
            needed,
            got: x.len(),
        });
    }
    Ok(())
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Root mean squared and mean absolute residual of `pred` against `gold`.
pub fn rmse_mae(pred: &[f64], gold: &[f64]) -> Result<(f64, f64), EvalError> {
    check_pair(pred, gold, 1)?;
    let n = pred.len() as f64;
    let (mut sq, mut abs) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(gold) {
        let r = p - g;
        sq += r * r;
        abs += r.abs();
    }
    Ok(((sq / n).sqrt(), abs / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZComparison {
    pub z: f64,
    pub p: f64,
    pub significant: bool,
}

/// Compares two correlations measured on `n` pairs each via Fisher's
/// transform, `z = (atanh r1 − atanh r2) / sqrt(2 / (n − 3))`, with a
/// two-sided normal p-value.
///
/// The two samples are treated as independent even when they share a gold
/// vector; no dependent-correlation correction is applied.
pub fn z_compare(r1: f64, r2: f64, n: usize) -> Result<ZComparison, EvalError> {
    if n < 4 {
        return Err(EvalError::DegenerateN(n));
    }
    for r in [r1, r2] {
        if !(r.abs() < 1.0) {
            return Err(EvalError::InvalidCorrelation(r));
        }
    }
    let se = (2.0 / (n as f64 - 3.0)).sqrt();
    let z = (r1.atanh() - r2.atanh()) / se;
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(ZComparison {
        z,
        p,
        significant: p < SIGNIFICANCE_LEVEL,
    })
}

/// Summary of predictions against gold scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `None` when either side is constant.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn compute(pred: &[f64], gold: &[f64]) -> Result<Self, EvalError> {
        let (rmse, mae) = rmse_mae(pred, gold)?;
        let corr = |f: fn(&[f64], &[f64]) -> Result<f64, EvalError>| match f(pred, gold) {
            Ok(r) => Ok(Some(r)),
            Err(EvalError::ConstantInput) | Err(EvalError::TooFewValues { .. }) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(MetricReport {
            pearson: corr(pearson)?,
            spearman: corr(spearman)?,
            rmse,
            mae,
            n: pred.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1.0, 2.0], &[1.0]), Err(EvalError::LengthMismatch(2, 1)));
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(EvalError::ConstantInput));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(EvalError::TooFewValues { .. })));
    }

    #[test]
    fn spearman_examples() {
        let x = [0.1, 0.5, 0.7, 2.0, 9.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3) + 4.0).collect();
        assert_eq!(spearman(&x, &y).unwrap(), 1.0);
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(spearman(&x, &rev).unwrap(), -1.0);
    }

    #[test]
    fn tied_ranks() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
        // brute-force average rank: 1 + #less + (#equal - 1) / 2
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [4.0, 1.0, 3.0, 2.0];
        let brute = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let less = v.iter().filter(|b| *b < a).count() as f64;
                    let eq = v.iter().filter(|b| *b == a).count() as f64;
                    1.0 + less + (eq - 1.0) / 2.0
                })
                .collect()
        };
        let expected = pearson(&brute(&x), &brute(&y)).unwrap();
        assert!((spearman(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rmse_mae_examples() {
        let g = [0.2, 0.4, 0.9];
        assert_eq!(rmse_mae(&g, &g).unwrap(), (0.0, 0.0));
        let shifted: Vec<f64> = g.iter().map(|v| v - 0.25).collect();
        let (r, m) = rmse_mae(&shifted, &g).unwrap();
        assert!((r - 0.25).abs() < 1e-15 && (m - 0.25).abs() < 1e-15);
        let (r, m) = rmse_mae(&[0.6, 0.2], &[0.5, 0.5]).unwrap();
        assert!((r - 0.05f64.sqrt()).abs() < 1e-15);
        assert!((m - 0.2).abs() < 1e-15);
        assert!(matches!(rmse_mae(&[], &[]), Err(EvalError::TooFewValues { .. })));
    }

    #[test]
    fn z_examples() {
        let same = z_compare(0.4, 0.4, 50).unwrap();
        assert_eq!((same.z, same.p, same.significant), (0.0, 1.0, false));
        let big = z_compare(0.9, 0.1, 103).unwrap();
        let expected = (0.9f64.atanh() - 0.1f64.atanh()) / (2.0f64 / 100.0).sqrt();
        assert!((big.z - expected).abs() < 1e-12);
        assert!((big.z - 9.7).abs() < 0.01);
        assert!(big.p < 1e-15 && big.significant);
        assert_eq!(z_compare(0.5, 0.2, 3), Err(EvalError::DegenerateN(3)));
        assert_eq!(z_compare(1.0, 0.2, 30), Err(EvalError::InvalidCorrelation(1.0)));
    }

    proptest! {
        #[test]
        fn invariants(
            xs in proptest::collection::vec(-10.0f64..10.0, 3..30),
            noise in proptest::collection::vec(-1.0f64..1.0, 30),
            a in 0.1f64..5.0,
            c in -3.0f64..3.0,
        ) {
            let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| x * 0.5 + e).collect();
            if let (Ok(r), Ok(rho)) = (pearson(&xs, &ys), spearman(&xs, &ys)) {
                let xt: Vec<f64> = xs.iter().map(|x| a * x + c).collect();
                prop_assert!((pearson(&xt, &ys).unwrap() - r).abs() < 1e-12);
                prop_assert!((spearman(&xt, &ys).unwrap() - rho).abs() < 1e-12);
                prop_assert_eq!(rho, pearson(&average_ranks(&xs), &average_ranks(&ys)).unwrap());
            }
            let (rmse, mae) = rmse_mae(&xs, &ys[..xs.len()]).unwrap();
            prop_assert!(rmse >= mae - 1e-15);
        }

        #[test]
        fn z_antisymmetric(r1 in -0.99f64..0.99, r2 in -0.99f64..0.99, n in 4usize..500) {
            let a = z_compare(r1, r2, n).unwrap();
            let b = z_compare(r2, r1, n).unwrap();
            prop_assert_eq!(a.z, -b.z);
            prop_assert_eq!(a.p, b.p);
        }
    }
}
