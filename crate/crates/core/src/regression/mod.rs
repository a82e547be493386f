//! Random-forest regression over pair feature rows, with linear, single
//! tree and mean baselines, cross-validation, and model files.

pub mod cv;
pub mod forest;
pub mod impute;
pub mod linear;
pub mod model;
pub mod row;
pub mod tree;

use thiserror::Error;

use crate::evaluation::EvalError;

pub use cv::{cross_validate, fold_assignment, CvReport, DEFAULT_FOLDS};
pub use forest::{train_forest, ForestModel, ForestParams};
pub use impute::{impute, Imputer};
pub use linear::{train_linear, train_mean, LinearModel, MeanModel};
pub use model::{train_baseline, BaselineKind, Learner, Model, ModelArtifact};
pub use row::{read_features, write_features, FeatureKind, FeatureLayout, PairFeatureRow, FEATURE_LAYOUT_VERSION};
pub use tree::{Node, RegressionTree, TreeParams};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RegressionError {
    #[error("need at least {needed} labeled rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("row has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{rows} rows cannot be split into {folds} folds")]
    TooFewRows { rows: usize, folds: usize },

    #[error("pair {drug_a}/{drug_b} has no gold score")]
    UnlabeledRow { drug_a: String, drug_b: String },

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("feature selection is empty")]
    EmptyLayout,

    #[error("feature layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch { expected: String, found: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported {what} version {found} (expected {expected})")]
    UnsupportedVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Gold scores of `rows`; every row must be labeled.
pub fn labels(rows: &[PairFeatureRow]) -> Result<Vec<f64>, RegressionError> {
    rows.iter()
        .map(|r| {
            r.gold.ok_or_else(|| RegressionError::UnlabeledRow {
                drug_a: r.drug_a.clone(),
                drug_b: r.drug_b.clone(),
            })
        })
        .collect()
}
