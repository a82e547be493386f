//! Bagged CART ensembles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::impute::Imputer;
use super::tree::{RegressionTree, TreeParams};
use super::{labels, FeatureLayout, PairFeatureRow, RegressionError};
use crate::util::{derive_seed, stable_mean};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` means a third of the columns, rounded up.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: None,
            min_samples_leaf: 2,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    /// A single unbagged tree that considers every column at each node.
    pub fn single_tree(max_depth: Option<usize>, min_samples_leaf: usize) -> Self {
        ForestParams {
            n_trees: 1,
            max_depth,
            min_samples_leaf,
            features_per_split: Some(usize::MAX),
            bootstrap: false,
        }
    }

    pub fn validate(&self) -> Result<(), RegressionError> {
        if self.n_trees == 0 {
            return Err(RegressionError::InvalidParams("n_trees must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(RegressionError::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(RegressionError::InvalidParams("features_per_split must be >= 1".into()));
        }
        Ok(())
    }

    pub fn tree_params(&self, columns: usize) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            features_per_split: self.features_per_split.unwrap_or(columns.div_ceil(3)).clamp(1, columns.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub layout: FeatureLayout,
    pub imputer: Imputer,
    pub params: ForestParams,
    pub seed: u64,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<RegressionTree>,
}

/// Fits a forest on an already imputed matrix.
pub fn fit_trees(
    x: &[Vec<f64>],
    y: &[f64],
    params: &ForestParams,
    seed: u64,
) -> Result<(Vec<u64>, Vec<RegressionTree>), RegressionError> {
    params.validate()?;
    if y.len() < 2 {
        return Err(RegressionError::InsufficientData { needed: 2, got: y.len() });
    }
    let tree_params = params.tree_params(x[0].len());
    let seeds: Vec<u64> = (0..params.n_trees as u64).map(|t| derive_seed(seed, t, 0)).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = y.len();
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            RegressionTree::fit(x, y, samples, &tree_params, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((seeds, trees))
}

pub fn train_forest(
    rows: &[PairFeatureRow],
    layout: &FeatureLayout,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, RegressionError> {
    let y = labels(rows)?;
    if rows.len() < 2 {
        return Err(RegressionError::InsufficientData { needed: 2, got: rows.len() });
    }
    let imputer = Imputer::fit(rows, layout.len())?;
    let x = imputer.transform_all(rows)?;
    let (tree_seeds, trees) = fit_trees(&x, &y, params, seed)?;
    Ok(ForestModel {
        layout: layout.clone(),
        imputer,
        params: *params,
        seed,
        tree_seeds,
        trees,
    })
}

impl ForestModel {
    /// Mean of the tree outputs, before clamping.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        stable_mean(self.trees.iter().map(|t| t.predict(x))).unwrap_or(0.5)
    }

    pub fn predict(&self, row: &PairFeatureRow) -> Result<f64, RegressionError> {
        let x = self.imputer.transform(row)?;
        Ok(self.predict_raw(&x).clamp(0.0, 1.0))
    }

    pub fn check(&self) -> Result<(), RegressionError> {
        if self.imputer.width() != self.layout.len() {
            return Err(RegressionError::Format("imputer width does not match layout".into()));
        }
        if self.trees.is_empty() {
            return Err(RegressionError::Format("forest has no trees".into()));
        }
        for t in &self.trees {
            t.check(self.layout.columns())?;
        }
        Ok(())
    }
}
