//! Loading inputs and computing pair feature rows.

use std::collections::BTreeMap;

use log::{info, warn};
use rayon::prelude::*;

use super::{PipelineConfig, PipelineError};
use crate::embedding::{
    embedding_similarity, train_hierarchy, train_text, EmbeddingError, EmbeddingMode, EmbeddingTable,
};
use crate::ingest::{self, CorpusDocument, LabeledPair};
use crate::regression::{FeatureKind, FeatureLayout, PairFeatureRow};
use crate::sparse::{build_vector, cosine, IdfVariant, SparseWeightedVector};
use crate::store::{build_store, AnnotationCategory, DrugRecord, Store, TaxonomyGraph};
use crate::text::{Bm25Index, ScoreBounds};

/// Store and corpus built from the configured files.
pub struct Inputs {
    pub store: Store,
    pub corpus: Vec<CorpusDocument>,
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs, PipelineError> {
    cfg.check_paths()?;
    let mut drugs = ingest::parse_drugs(&cfg.data.drugs)?;
    if let Some(p) = &cfg.data.side_effects {
        let rows = ingest::parse_associations(p, AnnotationCategory::SideEffect)?;
        report_unmatched(p, ingest::attach_associations(&mut drugs, AnnotationCategory::SideEffect, &rows));
    }
    if let Some(p) = &cfg.data.ndfrt {
        for cat in [AnnotationCategory::Mechanism, AnnotationCategory::PhysiologicEffect] {
            let rows = ingest::parse_associations(p, cat)?;
            report_unmatched(p, ingest::attach_associations(&mut drugs, cat, &rows));
        }
    }
    let taxonomy = match &cfg.data.taxonomy {
        Some(p) => TaxonomyGraph::from_edges(ingest::parse_taxonomy(p)?)?,
        None => TaxonomyGraph::default(),
    };
    let corpus = match &cfg.data.corpus {
        Some(p) => ingest::parse_corpus(p)?,
        None => Vec::new(),
    };
    let store = build_store(drugs, taxonomy)?;
    info!("loaded {} drugs, {} corpus documents", store.len(), corpus.len());
    Ok(Inputs { store, corpus })
}

fn report_unmatched(path: &std::path::Path, unmatched: Vec<(String, String)>) {
    if let Some((drug, _)) = unmatched.first() {
        warn!(
            "{}: {} associations name unknown drugs (first: {drug})",
            path.display(),
            unmatched.len()
        );
    }
}

/// Labeled pairs from the configured pairs file or `override_path`.
pub fn load_pairs(cfg: &PipelineConfig, override_path: Option<&std::path::Path>) -> Result<Vec<LabeledPair>, PipelineError> {
    let path = override_path
        .or(cfg.data.pairs.as_deref())
        .ok_or_else(|| PipelineError::Config("no pairs file configured".into()))?;
    let parsed = ingest::parse_pairs(path, cfg.max_rater_range)?;
    if !parsed.excluded.is_empty() {
        warn!(
            "{}: excluded {} pairs whose rater range exceeds {}",
            path.display(),
            parsed.excluded.len(),
            cfg.max_rater_range
        );
    }
    Ok(parsed.pairs)
}

/// Precomputed state for every enabled feature producer.
pub struct FeatureEngine<'s> {
    store: &'s Store,
    layout: FeatureLayout,
    vectors: Vec<[SparseWeightedVector; 4]>,
    bm25: Option<(Bm25Index, Option<ScoreBounds>)>,
    hierarchy: Option<EmbeddingTable>,
    text: Option<EmbeddingTable>,
}

fn category(kind: FeatureKind) -> Option<AnnotationCategory> {
    match kind {
        FeatureKind::Sider => Some(AnnotationCategory::SideEffect),
        FeatureKind::Target => Some(AnnotationCategory::Target),
        FeatureKind::Mechanism => Some(AnnotationCategory::Mechanism),
        FeatureKind::PhysiologicEffect => Some(AnnotationCategory::PhysiologicEffect),
        _ => None,
    }
}

fn category_slot(cat: AnnotationCategory) -> usize {
    AnnotationCategory::ALL.iter().position(|&c| c == cat).expect("known category")
}

impl<'s> FeatureEngine<'s> {
    /// Builds what `layout` needs, loading embedding tables when configured
    /// and training them otherwise.
    pub fn build(
        store: &'s Store,
        corpus: &[CorpusDocument],
        cfg: &PipelineConfig,
        layout: &FeatureLayout,
    ) -> Result<Self, PipelineError> {
        let hierarchy = if layout.contains(FeatureKind::Hierarchy) {
            match &cfg.embeddings.hierarchy {
                Some(p) => Some(EmbeddingTable::load(p)?),
                None => match train_hierarchy(store.taxonomy(), &cfg.walks, &cfg.hierarchy_sgns) {
                    Ok(t) => Some(t),
                    Err(EmbeddingError::EmptyGraph) => {
                        warn!("taxonomy is empty; HF is missing for every pair");
                        None
                    }
                    Err(e) => return Err(e.into()),
                },
            }
        } else {
            None
        };
        let text = if layout.contains(FeatureKind::TextEmbedding) {
            match &cfg.embeddings.text {
                Some(p) => Some(EmbeddingTable::load(p)?),
                None => match train_text(corpus, store, &cfg.text_sgns) {
                    Ok(t) => Some(t),
                    Err(EmbeddingError::EmptyVocabulary) => {
                        warn!("text vocabulary is empty; SF_textemb is missing for every pair");
                        None
                    }
                    Err(e) => return Err(e.into()),
                },
            }
        } else {
            None
        };
        let bm25 = if layout.contains(FeatureKind::Ksts) {
            let index = Bm25Index::build(store, cfg.bm25)?;
            let bounds = index.score_bounds();
            if bounds.is_none() {
                warn!("fewer than two drugs have descriptions; SF_ksts is missing for every pair");
            }
            Some((index, bounds))
        } else {
            None
        };
        Ok(Self::from_parts(store, layout.clone(), cfg.idf_variant, bm25, hierarchy, text))
    }

    pub fn from_parts(
        store: &'s Store,
        layout: FeatureLayout,
        idf: IdfVariant,
        bm25: Option<(Bm25Index, Option<ScoreBounds>)>,
        hierarchy: Option<EmbeddingTable>,
        text: Option<EmbeddingTable>,
    ) -> Self {
        let vectors = store
            .drugs()
            .iter()
            .map(|d| AnnotationCategory::ALL.map(|c| build_vector(d, c, store.catalog(), idf)))
            .collect();
        FeatureEngine {
            store,
            layout,
            vectors,
            bm25,
            hierarchy,
            text,
        }
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn store(&self) -> &Store {
        self.store
    }

    fn drug(&self, id: &str) -> Result<(usize, &DrugRecord), PipelineError> {
        let i = self
            .store
            .index_of(id)
            .ok_or_else(|| PipelineError::UnknownDrugInPair(id.to_string()))?;
        Ok((i, &self.store.drugs()[i]))
    }

    fn feature(&self, kind: FeatureKind, a: (usize, &DrugRecord), b: (usize, &DrugRecord)) -> Result<Option<f64>, PipelineError> {
        if let Some(cat) = category(kind) {
            let slot = category_slot(cat);
            return Ok(cosine(&self.vectors[a.0][slot], &self.vectors[b.0][slot])?);
        }
        Ok(match kind {
            FeatureKind::Hierarchy => match &self.hierarchy {
                Some(t) => embedding_similarity(t, a.1, b.1, EmbeddingMode::Hierarchy)?,
                None => None,
            },
            FeatureKind::TextEmbedding => match &self.text {
                Some(t) => embedding_similarity(t, a.1, b.1, EmbeddingMode::Text)?,
                None => None,
            },
            FeatureKind::Ksts => match &self.bm25 {
                Some((index, Some(bounds))) if index.has_description(&a.1.id) && index.has_description(&b.1.id) => {
                    Some(index.ksts_symmetric(&a.1.id, &b.1.id, bounds)?)
                }
                _ => None,
            },
            _ => unreachable!("annotation features handled above"),
        })
    }

    /// Feature values for one pair, in layout order.
    pub fn pair(&self, a: &str, b: &str) -> Result<Vec<Option<f64>>, PipelineError> {
        let (da, db) = (self.drug(a)?, self.drug(b)?);
        self.layout.kinds().iter().map(|&k| self.feature(k, da, db)).collect()
    }

    pub fn row(&self, a: &str, b: &str, gold: Option<f64>) -> Result<PairFeatureRow, PipelineError> {
        Ok(PairFeatureRow::new(a, b, self.pair(a, b)?, gold))
    }
}

/// One row per labeled pair, in input order.
pub fn assemble_features(engine: &FeatureEngine<'_>, pairs: &[LabeledPair]) -> Result<Vec<PairFeatureRow>, PipelineError> {
    pairs
        .par_iter()
        .map(|p| engine.row(&p.drug_a, &p.drug_b, Some(p.mean_score)))
        .collect()
}

/// Rows for every unordered pair of distinct drugs in the store, unlabeled.
pub fn all_pairs(engine: &FeatureEngine<'_>) -> Result<Vec<PairFeatureRow>, PipelineError> {
    let ids: Vec<&str> = engine.store().drugs().iter().map(|d| d.id.as_str()).collect();
    let pairs: Vec<(usize, usize)> = (0..ids.len())
        .flat_map(|i| (i + 1..ids.len()).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| engine.row(ids[i], ids[j], None))
        .collect()
}

/// Counts of missing values per feature, for diagnostics.
pub fn missing_counts(layout: &FeatureLayout, rows: &[PairFeatureRow]) -> BTreeMap<&'static str, usize> {
    layout
        .kinds()
        .iter()
        .enumerate()
        .map(|(i, k)| (k.name(), rows.iter().filter(|r| r.features[i].is_none()).count()))
        .collect()
}
