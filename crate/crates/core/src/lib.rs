//! Drug similarity from annotation overlap, taxonomy embeddings and
//! description text, combined by a random-forest regressor.
//!
//! The modules mirror the processing stages: [`ingest`] reads raw exports
//! into a [`store::Store`], [`sparse`], [`text`] and [`embedding`] produce
//! pair features, [`regression`] learns a score from them, [`evaluation`]
//! measures it, and [`pipeline`] ties the stages together behind a config
//! file.

pub mod embedding;
pub mod evaluation;
pub mod ingest;
pub mod pipeline;
pub mod regression;
pub mod sparse;
pub mod store;
pub mod text;
mod util;

pub use embedding::{EmbeddingError, EmbeddingMode, EmbeddingTable, SgnsConfig, WalkConfig};
pub use evaluation::{EvalError, MetricReport, ZComparison};
pub use ingest::{CorpusDocument, IngestError, LabeledPair};
pub use pipeline::{PipelineConfig, PipelineError, SubstitutionResult};
pub use regression::{
    FeatureKind, FeatureLayout, ForestModel, ForestParams, Learner, Model, ModelArtifact, PairFeatureRow,
    RegressionError,
};
pub use sparse::{IdfVariant, SparseWeightedVector};
pub use store::{AnnotationCategory, DrugRecord, Store, StoreError, TaxonomyGraph};
pub use text::{Bm25Index, Bm25Params, TextSimError};
pub use util::{derive_seed, short_hash};
