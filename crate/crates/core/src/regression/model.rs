//! Trained predictors, baselines, and the versioned model file.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{train_forest, ForestModel, ForestParams};
use super::linear::{train_linear, train_mean, LinearModel, MeanModel};
use super::row::FEATURE_LAYOUT_VERSION;
use super::{FeatureLayout, PairFeatureRow, RegressionError};

pub const MODEL_FORMAT: &str = "medsim-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Forest(ForestModel),
    Linear(LinearModel),
    Mean(MeanModel),
}

impl Model {
    pub fn layout(&self) -> &FeatureLayout {
        match self {
            Model::Forest(m) => &m.layout,
            Model::Linear(m) => &m.layout,
            Model::Mean(m) => &m.layout,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Forest(m) if m.trees.len() == 1 && !m.params.bootstrap => "tree",
            Model::Forest(_) => "forest",
            Model::Linear(_) => "linear",
            Model::Mean(_) => "mean",
        }
    }

    /// Score in [0, 1] for a row laid out like the model's training rows.
    pub fn predict(&self, row: &PairFeatureRow) -> Result<f64, RegressionError> {
        match self {
            Model::Forest(m) => m.predict(row),
            Model::Linear(m) => m.predict(row),
            Model::Mean(m) => {
                if row.features.len() != m.layout.len() {
                    return Err(RegressionError::DimensionMismatch {
                        expected: m.layout.len(),
                        found: row.features.len(),
                    });
                }
                Ok(m.value.clamp(0.0, 1.0))
            }
        }
    }

    pub fn predict_all(&self, rows: &[PairFeatureRow]) -> Result<Vec<f64>, RegressionError> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }
}

/// Which estimator to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    Forest(ForestParams),
    Tree {
        max_depth: Option<usize>,
        min_samples_leaf: usize,
    },
    Linear,
    Mean,
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Learner::Forest(_) => "forest",
            Learner::Tree { .. } => "tree",
            Learner::Linear => "linear",
            Learner::Mean => "mean",
        }
    }

    pub fn fit(&self, rows: &[PairFeatureRow], layout: &FeatureLayout, seed: u64) -> Result<Model, RegressionError> {
        match *self {
            Learner::Forest(p) => Ok(Model::Forest(train_forest(rows, layout, &p, seed)?)),
            Learner::Tree {
                max_depth,
                min_samples_leaf,
            } => train_forest(rows, layout, &ForestParams::single_tree(max_depth, min_samples_leaf), seed)
                .map(Model::Forest),
            Learner::Linear => Ok(Model::Linear(train_linear(rows, layout)?)),
            Learner::Mean => Ok(Model::Mean(train_mean(rows, layout)?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Linear,
    Tree,
}

/// Least squares or one unbagged tree with default leaf size.
pub fn train_baseline(
    rows: &[PairFeatureRow],
    layout: &FeatureLayout,
    kind: BaselineKind,
    seed: u64,
) -> Result<Model, RegressionError> {
    let learner = match kind {
        BaselineKind::Linear => Learner::Linear,
        BaselineKind::Tree => {
            let d = ForestParams::default();
            Learner::Tree {
                max_depth: d.max_depth,
                min_samples_leaf: d.min_samples_leaf,
            }
        }
    };
    learner.fit(rows, layout, seed)
}

/// A model plus the provenance needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub feature_layout_version: u32,
    pub model: Model,
    /// Master seed the model and its cross-validation folds derive from.
    pub seed: u64,
    /// Unordered drug pairs the model was fit on.
    pub training_pairs: Vec<(String, String)>,
    pub holdout_drug: Option<String>,
}

impl ModelArtifact {
    pub fn new(model: Model, seed: u64, training_rows: &[PairFeatureRow], holdout_drug: Option<String>) -> Self {
        ModelArtifact {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            feature_layout_version: FEATURE_LAYOUT_VERSION,
            model,
            seed,
            training_pairs: training_rows
                .iter()
                .map(|r| (r.drug_a.clone(), r.drug_b.clone()))
                .collect(),
            holdout_drug,
        }
    }

    pub fn layout(&self) -> &FeatureLayout {
        self.model.layout()
    }

    /// Estimator that reproduces this model's training on new rows.
    pub fn learner(&self) -> Learner {
        match &self.model {
            Model::Forest(m) if self.model.kind() == "tree" => Learner::Tree {
                max_depth: m.params.max_depth,
                min_samples_leaf: m.params.min_samples_leaf,
            },
            Model::Forest(m) => Learner::Forest(m.params),
            Model::Linear(_) => Learner::Linear,
            Model::Mean(_) => Learner::Mean,
        }
    }

    pub fn trained_on(&self, drug: &str) -> bool {
        self.training_pairs.iter().any(|(a, b)| a == drug || b == drug)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, RegressionError> {
        let artifact: ModelArtifact =
            serde_json::from_str(text).map_err(|e| RegressionError::Format(e.to_string()))?;
        if artifact.format != MODEL_FORMAT {
            return Err(RegressionError::Format(format!("not a model file: {:?}", artifact.format)));
        }
        if artifact.version != MODEL_FORMAT_VERSION {
            return Err(RegressionError::UnsupportedVersion {
                what: "model format",
                found: artifact.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        if artifact.feature_layout_version != FEATURE_LAYOUT_VERSION {
            return Err(RegressionError::UnsupportedVersion {
                what: "feature layout",
                found: artifact.feature_layout_version,
                expected: FEATURE_LAYOUT_VERSION,
            });
        }
        match &artifact.model {
            Model::Forest(f) => f.check()?,
            Model::Linear(l) => {
                if l.imputer.width() != l.layout.len() || l.coefficients.len() != l.layout.columns() {
                    return Err(RegressionError::Format("linear model shape does not match layout".into()));
                }
            }
            Model::Mean(_) => {}
        }
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<(), RegressionError> {
        fs::write(path, self.to_json()).map_err(|e| RegressionError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, RegressionError> {
        let text = fs::read_to_string(path).map_err(|e| RegressionError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> Vec<PairFeatureRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let f: Vec<Option<f64>> = (0..7)
                    .map(|_| if rng.gen_bool(0.1) { None } else { Some(rng.gen::<f64>()) })
                    .collect();
                let g = (0.7 * f[0].unwrap_or(0.5) + 0.3 * f[4].unwrap_or(0.5)).clamp(0.0, 1.0);
                PairFeatureRow::new(format!("a{i}"), format!("b{i}"), f, Some(g))
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let rows = data(80, 1);
        let layout = FeatureLayout::full();
        for learner in [
            Learner::Forest(ForestParams {
                n_trees: 15,
                ..Default::default()
            }),
            Learner::Linear,
            Learner::Mean,
        ] {
            let model = learner.fit(&rows, &layout, 4).unwrap();
            let art = ModelArtifact::new(model, 4, &rows, None);
            let back = ModelArtifact::from_json(&art.to_json()).unwrap();
            assert_eq!(back.to_json(), art.to_json());
            let probe = data(30, 2);
            let a = art.model.predict_all(&probe).unwrap();
            let b = back.model.predict_all(&probe).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn tree_baseline_equals_unbagged_single_forest() {
        let rows = data(60, 3);
        let layout = FeatureLayout::full();
        let tree = train_baseline(&rows, &layout, BaselineKind::Tree, 9).unwrap();
        assert_eq!(tree.kind(), "tree");
        let forest = Learner::Forest(ForestParams {
            n_trees: 1,
            bootstrap: false,
            features_per_split: Some(layout.columns()),
            ..Default::default()
        })
        .fit(&rows, &layout, 9)
        .unwrap();
        let probe = data(40, 4);
        assert_eq!(tree.predict_all(&probe).unwrap(), forest.predict_all(&probe).unwrap());
    }

    #[test]
    fn rejects_foreign_versions() {
        let rows = data(10, 5);
        let art = ModelArtifact::new(Learner::Mean.fit(&rows, &FeatureLayout::full(), 0).unwrap(), 0, &rows, None);
        let json = art.to_json().replace("\"version\":1", "\"version\":7");
        assert!(matches!(
            ModelArtifact::from_json(&json),
            Err(RegressionError::UnsupportedVersion { .. })
        ));
        assert!(ModelArtifact::from_json("{}").is_err());
    }

    #[test]
    fn provenance() {
        let rows = data(10, 6);
        let art = ModelArtifact::new(
            Learner::Mean.fit(&rows, &FeatureLayout::full(), 0).unwrap(),
            0,
            &rows,
            Some("x".into()),
        );
        assert!(art.trained_on("a3") && !art.trained_on("x"));
    }
}
