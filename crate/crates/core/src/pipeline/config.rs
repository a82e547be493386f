//! TOML run configuration.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::embedding::{SgnsConfig, WalkConfig};
use crate::ingest::DEFAULT_MAX_RATER_RANGE;
use crate::regression::{FeatureLayout, ForestParams, DEFAULT_FOLDS};
use crate::sparse::IdfVariant;
use crate::text::Bm25Params;
use crate::util::derive_seed;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "MEDSIM_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub drugs: PathBuf,
    pub side_effects: Option<PathBuf>,
    pub ndfrt: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
}

/// Precomputed embedding tables; missing ones are trained on demand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPaths {
    pub hierarchy: Option<PathBuf>,
    pub text: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data: DataPaths,
    pub embeddings: EmbeddingPaths,
    pub idf_variant: IdfVariant,
    pub bm25: Bm25Params,
    pub walks: WalkConfig,
    pub hierarchy_sgns: SgnsConfig,
    pub text_sgns: SgnsConfig,
    pub forest: ForestParams,
    pub folds: usize,
    pub features: FeatureLayout,
    pub max_rater_range: f64,
    /// Every random stream in a run derives from this value.
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    idf_variant: IdfVariant,
    max_rater_range: Option<f64>,
    features: Option<Vec<String>>,
    folds: Option<usize>,
    data: RawData,
    #[serde(default)]
    embeddings: EmbeddingPaths,
    bm25: Option<toml::Table>,
    walks: Option<toml::Table>,
    hierarchy_sgns: Option<toml::Table>,
    text_sgns: Option<toml::Table>,
    forest: Option<toml::Table>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    drugs: PathBuf,
    side_effects: Option<PathBuf>,
    ndfrt: Option<PathBuf>,
    taxonomy: Option<PathBuf>,
    corpus: Option<PathBuf>,
    pairs: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// Applies the keys of `patch` on top of `base`.
fn overlay<T: Serialize + DeserializeOwned>(name: &str, base: T, patch: Option<toml::Table>) -> Result<T, PipelineError> {
    let Some(patch) = patch else {
        return Ok(base);
    };
    let mut table = match toml::Value::try_from(&base) {
        Ok(toml::Value::Table(t)) => t,
        _ => return Err(config_err(format!("[{name}]: cannot represent defaults"))),
    };
    let keys: BTreeSet<String> = patch.keys().cloned().collect();
    table.extend(patch);
    let merged: T = toml::Value::Table(table)
        .try_into()
        .map_err(|e| config_err(format!("[{name}]: {e}")))?;
    let known = match toml::Value::try_from(&merged) {
        Ok(toml::Value::Table(t)) => t,
        _ => return Err(config_err(format!("[{name}]: cannot represent values"))),
    };
    if let Some(k) = keys.iter().find(|k| !known.contains_key(k.as_str())) {
        return Err(config_err(format!("[{name}]: unknown key {k:?}")));
    }
    Ok(merged)
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Reads a config file, resolving relative paths against its directory
    /// and honouring the seed override variable.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let env_seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| config_err(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
            ),
            Err(_) => None,
        };
        Self::from_toml(&text, base, env_seed)
    }

    pub fn from_toml(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Self, PipelineError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        let seed = seed_override.unwrap_or(raw.seed);
        let features = match raw.features {
            Some(names) => FeatureLayout::from_names(&names).map_err(|e| config_err(e.to_string()))?,
            None => FeatureLayout::full(),
        };
        let mut walks = overlay("walks", WalkConfig::default(), raw.walks)?;
        let mut hierarchy_sgns = overlay("hierarchy_sgns", SgnsConfig::hierarchy(), raw.hierarchy_sgns)?;
        let mut text_sgns = overlay("text_sgns", SgnsConfig::text(), raw.text_sgns)?;
        walks.seed = derive_seed(seed, 1, 0);
        hierarchy_sgns.seed = derive_seed(seed, 2, 0);
        text_sgns.seed = derive_seed(seed, 3, 0);
        let cfg = PipelineConfig {
            data: DataPaths {
                drugs: resolve(base_dir, raw.data.drugs),
                side_effects: raw.data.side_effects.map(|p| resolve(base_dir, p)),
                ndfrt: raw.data.ndfrt.map(|p| resolve(base_dir, p)),
                taxonomy: raw.data.taxonomy.map(|p| resolve(base_dir, p)),
                corpus: raw.data.corpus.map(|p| resolve(base_dir, p)),
                pairs: raw.data.pairs.map(|p| resolve(base_dir, p)),
            },
            embeddings: EmbeddingPaths {
                hierarchy: raw.embeddings.hierarchy.map(|p| resolve(base_dir, p)),
                text: raw.embeddings.text.map(|p| resolve(base_dir, p)),
            },
            idf_variant: raw.idf_variant,
            bm25: overlay("bm25", Bm25Params::default(), raw.bm25)?,
            walks,
            hierarchy_sgns,
            text_sgns,
            forest: overlay("forest", ForestParams::default(), raw.forest)?,
            folds: raw.folds.unwrap_or(DEFAULT_FOLDS),
            features,
            max_rater_range: raw.max_rater_range.unwrap_or(DEFAULT_MAX_RATER_RANGE),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let wrap = |e: &dyn std::fmt::Display| config_err(e.to_string());
        self.bm25.validate().map_err(|e| wrap(&e))?;
        self.walks.validate().map_err(|e| wrap(&e))?;
        self.hierarchy_sgns.validate().map_err(|e| wrap(&e))?;
        self.text_sgns.validate().map_err(|e| wrap(&e))?;
        self.forest.validate().map_err(|e| wrap(&e))?;
        if self.folds < 2 {
            return Err(config_err("folds must be >= 2"));
        }
        if !(self.max_rater_range >= 0.0) {
            return Err(config_err("max_rater_range must be >= 0"));
        }
        Ok(())
    }

    /// Fails if a configured input file does not exist.
    pub fn check_paths(&self) -> Result<(), PipelineError> {
        let d = &self.data;
        let e = &self.embeddings;
        let all = std::iter::once(&d.drugs)
            .chain([&d.side_effects, &d.ndfrt, &d.taxonomy, &d.corpus, &d.pairs, &e.hierarchy, &e.text]
                .into_iter()
                .flatten());
        for p in all {
            if !p.is_file() {
                return Err(config_err(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Seed for the forest trained on a full feature table.
    pub fn forest_seed(&self) -> u64 {
        derive_seed(self.seed, 4, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::FeatureKind;

    const MINIMAL: &str = "[data]\ndrugs = \"drugs.jsonl\"\n";

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/data/run"), None).unwrap();
        assert_eq!(cfg.data.drugs, PathBuf::from("/data/run/drugs.jsonl"));
        assert_eq!(cfg.features, FeatureLayout::full());
        assert_eq!(cfg.forest, ForestParams::default());
        assert_eq!(cfg.folds, 10);
        assert_eq!(cfg.max_rater_range, 0.4);
        assert_eq!(cfg.text_sgns.min_count, SgnsConfig::text().min_count);
    }

    #[test]
    fn sections_overlay_defaults() {
        let text = format!(
            "seed = 7\nfeatures = [\"HF\", \"MF_sider\"]\n{MINIMAL}[forest]\nn_trees = 12\nmax_depth = 4\n[text_sgns]\nmin_count = 1\n"
        );
        let cfg = PipelineConfig::from_toml(&text, Path::new("."), None).unwrap();
        assert_eq!(cfg.forest.n_trees, 12);
        assert_eq!(cfg.forest.max_depth, Some(4));
        assert_eq!(cfg.forest.min_samples_leaf, 2);
        assert_eq!(cfg.text_sgns.min_count, 1);
        assert_eq!(cfg.text_sgns.dimension, 128);
        assert_eq!(cfg.features.kinds(), &[FeatureKind::Sider, FeatureKind::Hierarchy]);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn seed_override_changes_derived_seeds() {
        let a = PipelineConfig::from_toml(MINIMAL, Path::new("."), None).unwrap();
        let b = PipelineConfig::from_toml(MINIMAL, Path::new("."), Some(99)).unwrap();
        assert_eq!(b.seed, 99);
        assert_ne!(a.walks.seed, b.walks.seed);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "",
            "[data]\n",
            "bogus = 1\n[data]\ndrugs = \"d\"\n",
            "features = []\n[data]\ndrugs = \"d\"\n",
            "features = [\"XF\"]\n[data]\ndrugs = \"d\"\n",
            "[data]\ndrugs = \"d\"\n[forest]\nn_trees = 0\n",
            "[data]\ndrugs = \"d\"\n[forest]\ntrees = 5\n",
            "[data]\ndrugs = \"d\"\n[bm25]\nb = 2.0\n",
            "folds = 1\n[data]\ndrugs = \"d\"\n",
        ] {
            assert!(
                matches!(PipelineConfig::from_toml(bad, Path::new("."), None), Err(PipelineError::Config(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn missing_files_are_reported() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/nonexistent"), None).unwrap();
        assert!(matches!(cfg.check_paths(), Err(PipelineError::Config(_))));
    }
}
