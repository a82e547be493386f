//! Median imputation with missingness indicator columns.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{PairFeatureRow, RegressionError};

/// Median used when a feature is missing in every training row.
pub const ALL_MISSING_MEDIAN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    pub medians: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

impl Imputer {
    pub fn fit(rows: &[PairFeatureRow], width: usize) -> Result<Self, RegressionError> {
        if rows.is_empty() {
            return Err(RegressionError::InsufficientData { needed: 1, got: 0 });
        }
        let mut medians = Vec::with_capacity(width);
        for f in 0..width {
            let mut present = Vec::with_capacity(rows.len());
            for row in rows {
                if row.features.len() != width {
                    return Err(RegressionError::DimensionMismatch {
                        expected: width,
                        found: row.features.len(),
                    });
                }
                present.extend(row.features[f]);
            }
            if present.is_empty() {
                warn!("feature {f} is missing in every training row; imputing {ALL_MISSING_MEDIAN}");
                medians.push(ALL_MISSING_MEDIAN);
            } else {
                medians.push(median(&mut present));
            }
        }
        Ok(Imputer { medians })
    }

    pub fn width(&self) -> usize {
        self.medians.len()
    }

    /// Imputed values followed by one 0/1 mask column per feature.
    pub fn transform(&self, row: &PairFeatureRow) -> Result<Vec<f64>, RegressionError> {
        if row.features.len() != self.medians.len() {
            return Err(RegressionError::DimensionMismatch {
                expected: self.medians.len(),
                found: row.features.len(),
            });
        }
        let mut out = Vec::with_capacity(2 * self.medians.len());
        out.extend(row.features.iter().zip(&self.medians).map(|(v, m)| v.unwrap_or(*m)));
        out.extend(row.features.iter().map(|v| if v.is_none() { 1.0 } else { 0.0 }));
        Ok(out)
    }

    pub fn transform_all(&self, rows: &[PairFeatureRow]) -> Result<Vec<Vec<f64>>, RegressionError> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

/// Fills missing values, fitting medians on `rows` unless `medians` is given.
pub fn impute(
    rows: &[PairFeatureRow],
    medians: Option<&[f64]>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), RegressionError> {
    let imputer = match medians {
        Some(m) => Imputer { medians: m.to_vec() },
        None => Imputer::fit(rows, rows.first().map_or(0, |r| r.features.len()))?,
    };
    Ok((imputer.transform_all(rows)?, imputer.medians))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(features: Vec<Option<f64>>) -> PairFeatureRow {
        PairFeatureRow::new("a", "b", features, Some(0.5))
    }

    #[test]
    fn complete_rows_pass_through() {
        let rows = vec![row(vec![Some(0.1), Some(0.9)]), row(vec![Some(0.3), Some(0.2)])];
        let (m, med) = impute(&rows, None).unwrap();
        assert_eq!(m[0], vec![0.1, 0.9, 0.0, 0.0]);
        assert_eq!(m[1], vec![0.3, 0.2, 0.0, 0.0]);
        assert_eq!(med, vec![0.2, 0.55]);
    }

    #[test]
    fn missing_cell_gets_median_and_mask() {
        let rows = vec![
            row(vec![Some(0.2), Some(0.3)]),
            row(vec![Some(0.4), None]),
            row(vec![Some(0.6), Some(0.3)]),
        ];
        let (m, med) = impute(&rows, None).unwrap();
        assert_eq!(med[1], 0.3);
        assert_eq!(m[1], vec![0.4, 0.3, 0.0, 1.0]);
    }

    #[test]
    fn all_missing_defaults() {
        let rows = vec![row(vec![None, Some(0.1)]), row(vec![None, Some(0.2)])];
        let (m, med) = impute(&rows, None).unwrap();
        assert_eq!(med[0], ALL_MISSING_MEDIAN);
        assert_eq!(m[0][0], 0.5);
        assert_eq!(m[0][2], 1.0);
    }

    #[test]
    fn supplied_medians_are_used() {
        let rows = vec![row(vec![None])];
        let (m, _) = impute(&rows, Some(&[0.8])).unwrap();
        assert_eq!(m[0], vec![0.8, 1.0]);
        assert!(matches!(impute(&rows, Some(&[0.8, 0.1])), Err(RegressionError::DimensionMismatch { .. })));
        assert!(matches!(impute(&[], None), Err(RegressionError::InsufficientData { .. })));
    }
}
