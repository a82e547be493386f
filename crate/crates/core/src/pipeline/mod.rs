//! End-to-end runs: configuration, feature assembly, training, evaluation,
//! substitution ranking and feature ablation.

pub mod config;
pub mod features;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingError;
use crate::evaluation::{z_compare, EvalError, MetricReport};
use crate::ingest::IngestError;
use crate::regression::{
    cross_validate, labels, FeatureLayout, Learner, ModelArtifact, PairFeatureRow, RegressionError,
};
use crate::sparse::SparseError;
use crate::store::StoreError;
use crate::text::TextSimError;

pub use config::{DataPaths, EmbeddingPaths, PipelineConfig, SEED_ENV};
pub use features::{all_pairs, assemble_features, load_inputs, load_pairs, missing_counts, FeatureEngine, Inputs};

/// Default score above which a candidate is suggested as a substitute.
pub const DEFAULT_SUBSTITUTION_THRESHOLD: f64 = 0.85;

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("pair refers to unknown drug {0:?}")]
    UnknownDrugInPair(String),

    #[error("model was trained on pairs containing {0}")]
    HoldoutViolation(String),

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Store(#[from] StoreError),

    #[error(transparent)]
    Sparse(#[from] SparseError),

    #[error(transparent)]
    Text(#[from] TextSimError),

    #[error(transparent)]
    Embedding(#[from] EmbeddingError),

    #[error(transparent)]
    Regression(#[from] RegressionError),

    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// Process exit status: 2 for configuration problems, 1 for bad data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Regression(RegressionError::InvalidParams(_)) => 2,
            _ => 1,
        }
    }
}

/// Rows without `drug`, for training a model that never saw it.
pub fn exclude_drug(rows: &[PairFeatureRow], drug: &str) -> Vec<PairFeatureRow> {
    rows.iter().filter(|r| !r.contains(drug)).cloned().collect()
}

/// Fits `learner` on the labeled rows, leaving out pairs with `holdout`.
pub fn train_model(
    rows: &[PairFeatureRow],
    layout: &FeatureLayout,
    learner: &Learner,
    seed: u64,
    holdout: Option<&str>,
) -> Result<ModelArtifact, PipelineError> {
    let train: Vec<PairFeatureRow> = match holdout {
        Some(d) => exclude_drug(rows, d),
        None => rows.to_vec(),
    };
    if let Some(d) = holdout {
        log::info!("holding out {d}: {} of {} rows remain", train.len(), rows.len());
    }
    let model = learner.fit(&train, layout, seed)?;
    Ok(ModelArtifact::new(model, seed, &train, holdout.map(str::to_string)))
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub z_vs_reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p: Option<f64>,
}

impl EvalReport {
    pub fn new(method: impl Into<String>, metrics: &MetricReport, reference_r: Option<f64>) -> Result<Self, PipelineError> {
        let (z, p) = match (reference_r, metrics.pearson) {
            (Some(r), Some(own)) => {
                let c = z_compare(own, r, metrics.n)?;
                (Some(c.z), Some(c.p))
            }
            (Some(_), None) => {
                return Err(PipelineError::Data("pearson undefined; cannot compare against reference".into()))
            }
            _ => (None, None),
        };
        Ok(EvalReport {
            method: method.into(),
            pearson: metrics.pearson,
            spearman: metrics.spearman,
            rmse: metrics.rmse,
            mae: metrics.mae,
            n: metrics.n,
            z_vs_reference: z,
            p,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Scores `rows` with the model as-is.
pub fn evaluate_model(
    artifact: &ModelArtifact,
    rows: &[PairFeatureRow],
    reference_r: Option<f64>,
) -> Result<EvalReport, PipelineError> {
    let gold = labels(rows)?;
    let pred = artifact.model.predict_all(rows)?;
    EvalReport::new(artifact.model.kind(), &MetricReport::compute(&pred, &gold)?, reference_r)
}

/// Re-trains the model's estimator fold by fold and reports pooled metrics.
pub fn evaluate_cv(
    artifact: &ModelArtifact,
    rows: &[PairFeatureRow],
    folds: usize,
    reference_r: Option<f64>,
) -> Result<EvalReport, PipelineError> {
    let cv = cross_validate(rows, artifact.layout(), &artifact.learner(), folds, artifact.seed)?;
    EvalReport::new(format!("{} ({folds}-fold cv)", artifact.model.kind()), &cv.pooled, reference_r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub drug: String,
    pub score: f64,
    pub suggested: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionResult {
    pub query: String,
    pub threshold: f64,
    pub candidates: Vec<RankedCandidate>,
}

impl SubstitutionResult {
    pub fn suggestions(&self) -> impl Iterator<Item = &RankedCandidate> {
        self.candidates.iter().filter(|c| c.suggested)
    }
}

/// Scores `query` against every other drug, best first. Candidates scoring
/// strictly above `threshold` are marked as suggestions. With
/// `require_holdout`, a model that saw any pair containing the query is
/// rejected.
pub fn rank_substitutes(
    artifact: &ModelArtifact,
    engine: &FeatureEngine<'_>,
    query: &str,
    threshold: f64,
    require_holdout: bool,
) -> Result<SubstitutionResult, PipelineError> {
    let query = engine.store().resolve(query)?.id.clone();
    if require_holdout && artifact.trained_on(&query) {
        return Err(PipelineError::HoldoutViolation(query));
    }
    if engine.layout() != artifact.layout() {
        return Err(RegressionError::LayoutMismatch {
            expected: artifact.layout().to_string(),
            found: engine.layout().to_string(),
        }
        .into());
    }
    let mut candidates = engine
        .store()
        .drugs()
        .iter()
        .filter(|d| d.id != query)
        .map(|d| {
            let score = artifact.model.predict(&engine.row(&query, &d.id, None)?)?;
            Ok(RankedCandidate {
                drug: d.id.clone(),
                score,
                suggested: score > threshold,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.drug.cmp(&b.drug)));
    Ok(SubstitutionResult {
        query,
        threshold,
        candidates,
    })
}

/// Score for one pair of drugs given by id or unique name.
pub fn score_pair(artifact: &ModelArtifact, engine: &FeatureEngine<'_>, a: &str, b: &str) -> Result<f64, PipelineError> {
    let a = engine.store().resolve(a)?.id.clone();
    let b = engine.store().resolve(b)?.id.clone();
    Ok(artifact.model.predict(&engine.row(&a, &b, None)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub layout: FeatureLayout,
    pub metrics: MetricReport,
}

/// Cross-validates `learner` on each feature subset of `rows`. Every subset
/// uses the same folds and training seeds.
pub fn run_ablation(
    rows: &[PairFeatureRow],
    layout: &FeatureLayout,
    grid: &[FeatureLayout],
    learner: &Learner,
    folds: usize,
    seed: u64,
) -> Result<Vec<AblationRow>, PipelineError> {
    grid.iter()
        .map(|subset| {
            let projected = rows
                .iter()
                .map(|r| r.project(layout, subset))
                .collect::<Result<Vec<_>, _>>()?;
            let cv = cross_validate(&projected, subset, learner, folds, seed)?;
            log::info!("{subset}: pearson {:?}", cv.pooled.pearson);
            Ok(AblationRow {
                layout: subset.clone(),
                metrics: cv.pooled,
            })
        })
        .collect()
}

/// Smallest layout covering every subset in `grid`.
pub fn grid_union(grid: &[FeatureLayout]) -> Result<FeatureLayout, PipelineError> {
    Ok(FeatureLayout::new(grid.iter().flat_map(|l| l.kinds().iter().copied()))?)
}

/// Parses `grid.json`: an array of feature-name arrays.
pub fn parse_grid(text: &str) -> Result<Vec<FeatureLayout>, PipelineError> {
    let raw: Vec<Vec<String>> =
        serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("grid: {e}")))?;
    if raw.is_empty() {
        return Err(PipelineError::Config("grid is empty".into()));
    }
    raw.iter()
        .map(|names| FeatureLayout::from_names(names).map_err(|e| PipelineError::Config(format!("grid: {e}"))))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut out = String::from("features\tpearson\tspearman\trmse\tmae\tn\n");
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.layout,
            opt(m.pearson),
            opt(m.spearman),
            m.rmse,
            m.mae,
            m.n
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{FeatureKind, ForestParams};
    use crate::store::{build_store, DrugRecord, TaxonomyGraph};
    use crate::sparse::IdfVariant;

    fn store() -> crate::store::Store {
        let mut drugs = Vec::new();
        for (id, se) in [("A", &["x", "y", "z"][..]), ("B", &["x", "y", "z"]), ("C", &["q"]), ("D", &["x", "q"])] {
            let mut d = DrugRecord::new(id, id.to_lowercase());
            d.side_effects = se.iter().map(|s| s.to_string()).collect();
            drugs.push(d);
        }
        build_store(drugs, TaxonomyGraph::default()).unwrap()
    }

    fn sider() -> FeatureLayout {
        FeatureLayout::new([FeatureKind::Sider]).unwrap()
    }

    fn model_on(rows: &[PairFeatureRow], holdout: Option<&str>) -> ModelArtifact {
        let p = ForestParams {
            n_trees: 10,
            min_samples_leaf: 1,
            ..Default::default()
        };
        train_model(rows, &sider(), &Learner::Forest(p), 1, holdout).unwrap()
    }

    fn training_rows(engine: &FeatureEngine<'_>) -> Vec<PairFeatureRow> {
        let mut rows = all_pairs(engine).unwrap();
        for r in &mut rows {
            r.gold = Some(r.features[0].unwrap_or(0.0));
        }
        rows
    }

    #[test]
    fn ranking_orders_and_thresholds() {
        let s = store();
        let engine = FeatureEngine::from_parts(&s, sider(), IdfVariant::LogOverDf, None, None, None);
        let rows = training_rows(&engine);
        let art = model_on(&rows, Some("A"));
        assert!(!art.trained_on("A"));
        let res = rank_substitutes(&art, &engine, "A", 0.85, true).unwrap();
        assert_eq!(res.candidates.len(), 3);
        assert!(res.candidates.iter().all(|c| c.drug != "A"));
        assert!(res.candidates.windows(2).all(|w| w[0].score >= w[1].score));
        let pos = |id: &str| res.candidates.iter().position(|c| c.drug == id).unwrap();
        assert!(pos("B") < pos("C"));
        let none = rank_substitutes(&art, &engine, "A", 1.1, true).unwrap();
        assert_eq!(none.suggestions().count(), 0);
        assert!(matches!(
            rank_substitutes(&model_on(&rows, None), &engine, "A", 0.85, true),
            Err(PipelineError::HoldoutViolation(_))
        ));
        assert!(matches!(
            rank_substitutes(&art, &engine, "nope", 0.85, false),
            Err(PipelineError::Store(_))
        ));
    }

    #[test]
    fn two_drug_store_has_one_candidate() {
        let s = build_store(vec![DrugRecord::new("A", "a"), DrugRecord::new("B", "b")], TaxonomyGraph::default()).unwrap();
        let engine = FeatureEngine::from_parts(&s, sider(), IdfVariant::LogOverDf, None, None, None);
        let rows = vec![
            PairFeatureRow::new("A", "B", vec![None], Some(0.3)),
            PairFeatureRow::new("A", "B", vec![None], Some(0.5)),
        ];
        let art = train_model(&rows, &sider(), &Learner::Mean, 0, None).unwrap();
        let res = rank_substitutes(&art, &engine, "A", 0.85, false).unwrap();
        assert_eq!(res.candidates.len(), 1);
        assert_eq!(res.candidates[0].score, 0.4);
    }

    #[test]
    fn features_are_symmetric() {
        let s = store();
        let engine = FeatureEngine::from_parts(&s, sider(), IdfVariant::LogOverDf, None, None, None);
        for a in ["A", "B", "C", "D"] {
            for b in ["A", "B", "C", "D"] {
                assert_eq!(engine.pair(a, b).unwrap(), engine.pair(b, a).unwrap());
            }
        }
        assert!(matches!(engine.pair("A", "Z"), Err(PipelineError::UnknownDrugInPair(_))));
    }

    #[test]
    fn report_json_fields() {
        let m = MetricReport::compute(&[0.1, 0.5, 0.9, 0.4, 0.3], &[0.2, 0.4, 0.8, 0.5, 0.1]).unwrap();
        let plain = EvalReport::new("forest", &m, None).unwrap().to_json();
        assert!(!plain.contains("z_vs_reference"));
        let cmp = EvalReport::new("forest", &m, Some(0.2)).unwrap();
        assert!(cmp.z_vs_reference.is_some() && cmp.p.is_some());
        let v: serde_json::Value = serde_json::from_str(&cmp.to_json()).unwrap();
        for key in ["method", "pearson", "spearman", "rmse", "mae", "n", "z_vs_reference", "p"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn grid_parsing_and_ablation_shape() {
        let grid = parse_grid(r#"[["MF"], ["HF", "SF_ksts"], ["MF"]]"#).unwrap();
        assert_eq!(grid[0].len(), 4);
        assert_eq!(grid_union(&grid).unwrap().len(), 6);
        assert!(parse_grid("[]").is_err());
        assert!(parse_grid(r#"[["nope"]]"#).is_err());

        let layout = FeatureLayout::new([FeatureKind::Sider, FeatureKind::Hierarchy]).unwrap();
        let rows: Vec<PairFeatureRow> = (0..30)
            .map(|i| {
                let v = i as f64 / 30.0;
                PairFeatureRow::new(format!("a{i}"), "b", vec![Some(v), Some(1.0 - v)], Some(v))
            })
            .collect();
        let grid = vec![sider(), sider()];
        let out = run_ablation(&rows, &layout, &grid, &Learner::Linear, 5, 3).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0], out[1]);
        let single = run_ablation(&rows, &layout, &grid[..1], &Learner::Linear, 5, 3).unwrap();
        assert_eq!(single.len(), 1);
        assert!(ablation_tsv(&out).starts_with("features\tpearson"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Config("x".into()).exit_code(), 2);
        assert_eq!(PipelineError::UnknownDrugInPair("x".into()).exit_code(), 1);
    }
}
