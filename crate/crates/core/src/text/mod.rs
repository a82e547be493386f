//! Description-based textual similarity.
//!
//! Descriptions are tokenized, the query drug's distinct tokens act as
//! keywords, and each keyword is scored against the other drug's
//! description with Okapi BM25:
//!
//! ```text
//! score(d1, d2) = Σ idf(q) · f(q, D) · (k1 + 1) / (f(q, D) + k1 · (1 − b + b · |D| / avgdl))
//! idf(q)        = ln(1 + (N − n(q) + 0.5) / (n(q) + 0.5))
//! ```
//!
//! Scores are min-max normalized over every ordered pair of distinct drugs
//! to give a value in `[0, 1]`.

mod stopwords;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::Store;
use crate::util::short_hash;

pub use stopwords::{is_stopword, stopword_hash, STOPWORDS, STOPWORD_LIST_VERSION};

#[derive(Error, Debug)]
pub enum TextSimError {
    #[error("drug {0} has no usable description")]
    EmptyDescription(String),

    #[error("invalid BM25 parameters k1={k1}, b={b} (need k1 >= 0 and 0 <= b <= 1)")]
    InvalidParams { k1: f64, b: f64 },

    #[error("index was built with stopword list {found}, current list is {expected}")]
    StaleIndex { expected: String, found: String },

    #[error("index cache {path}: {message}")]
    Cache { path: String, message: String },
}

/// Lowercased description tokens of one drug.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDescription {
    pub drug_id: String,
    pub tokens: Vec<String>,
}

impl TokenizedDescription {
    pub fn new(drug_id: impl Into<String>, text: &str) -> Self {
        TokenizedDescription {
            drug_id: drug_id.into(),
            tokens: tokenize(text),
        }
    }

    /// `|D|`
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits on non-alphanumeric characters, lowercases, and drops stopwords
/// and single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() >= 2 && !is_stopword(t))
        .collect()
}

/// Distinct tokens in first-occurrence order.
pub fn keywords(tokens: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    tokens
        .iter()
        .filter(|t| seen.insert(t.as_str()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 2.0, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), TextSimError> {
        if self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(TextSimError::InvalidParams {
                k1: self.k1,
                b: self.b,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocStats {
    pub length: usize,
    pub keywords: Vec<String>,
    pub term_freqs: BTreeMap<String, usize>,
}

/// Term statistics over all drug descriptions that have at least one token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub params: Bm25Params,
    pub doc_count: usize,
    pub avgdl: f64,
    pub term_df: BTreeMap<String, usize>,
    pub docs: BTreeMap<String, DocStats>,
    pub stopword_list: String,
    pub stopword_hash: String,
    pub content_hash: String,
}

/// Minimum and maximum BM25 score over ordered pairs of distinct drugs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBounds {
    pub min: f64,
    pub max: f64,
}

impl ScoreBounds {
    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }
}

impl Bm25Index {
    pub fn build(store: &Store, params: Bm25Params) -> Result<Self, TextSimError> {
        Self::from_descriptions(
            store
                .drugs()
                .iter()
                .map(|d| (d.id.as_str(), d.description.as_str())),
            params,
        )
    }

    /// Builds from `(drug_id, description)` pairs. Descriptions without any
    /// token are left out of the index.
    pub fn from_descriptions<'a>(
        descriptions: impl IntoIterator<Item = (&'a str, &'a str)>,
        params: Bm25Params,
    ) -> Result<Self, TextSimError> {
        params.validate()?;
        let mut docs = BTreeMap::new();
        for (id, text) in descriptions {
            let tokens = tokenize(text);
            if tokens.is_empty() {
                continue;
            }
            let mut term_freqs = BTreeMap::new();
            for t in &tokens {
                *term_freqs.entry(t.clone()).or_insert(0usize) += 1;
            }
            docs.insert(
                id.to_string(),
                DocStats {
                    length: tokens.len(),
                    keywords: keywords(&tokens),
                    term_freqs,
                },
            );
        }
        let mut term_df = BTreeMap::new();
        for doc in docs.values() {
            for term in doc.term_freqs.keys() {
                *term_df.entry(term.clone()).or_insert(0usize) += 1;
            }
        }
        let doc_count = docs.len();
        let avgdl = if doc_count == 0 {
            0.0
        } else {
            docs.values().map(|d| d.length as f64).sum::<f64>() / doc_count as f64
        };
        let mut index = Bm25Index {
            params,
            doc_count,
            avgdl,
            term_df,
            docs,
            stopword_list: STOPWORD_LIST_VERSION.to_string(),
            stopword_hash: stopword_hash(),
            content_hash: String::new(),
        };
        index.content_hash = index.compute_content_hash();
        Ok(index)
    }

    fn compute_content_hash(&self) -> String {
        let mut copy = self.clone();
        copy.content_hash.clear();
        short_hash(&serde_json::to_vec(&copy).expect("index serializes"))
    }

    pub fn has_description(&self, drug_id: &str) -> bool {
        self.docs.contains_key(drug_id)
    }

    /// Document-frequency weight of a term over descriptions.
    pub fn term_idf(&self, term: &str) -> f64 {
        let n = self.term_df.get(term).copied().unwrap_or(0) as f64;
        let total = self.doc_count as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    fn doc(&self, drug_id: &str) -> Result<&DocStats, TextSimError> {
        self.docs
            .get(drug_id)
            .ok_or_else(|| TextSimError::EmptyDescription(drug_id.to_string()))
    }

    /// BM25 score of `query`'s keywords against `document`'s description.
    pub fn score(&self, query: &str, document: &str) -> Result<f64, TextSimError> {
        let q = self.doc(query)?;
        let d = self.doc(document)?;
        Ok(self.score_docs(q, d))
    }

    fn score_docs(&self, q: &DocStats, d: &DocStats) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let norm = k1 * (1.0 - b + b * d.length as f64 / self.avgdl);
        q.keywords
            .iter()
            .filter_map(|term| d.term_freqs.get(term).map(|&f| (term, f as f64)))
            .map(|(term, f)| self.term_idf(term) * f * (k1 + 1.0) / (f + norm))
            .sum()
    }

    /// Score bounds over ordered pairs of distinct indexed drugs, `None` when
    /// fewer than two drugs have descriptions.
    pub fn score_bounds(&self) -> Option<ScoreBounds> {
        if self.doc_count < 2 {
            return None;
        }
        let docs: Vec<&DocStats> = self.docs.values().collect();
        let (min, max) = (0..docs.len())
            .into_par_iter()
            .map(|i| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (j, d) in docs.iter().enumerate() {
                    if i != j {
                        let s = self.score_docs(docs[i], d);
                        lo = lo.min(s);
                        hi = hi.max(s);
                    }
                }
                (lo, hi)
            })
            .reduce(
                || (f64::INFINITY, f64::NEG_INFINITY),
                |a, b| (a.0.min(b.0), a.1.max(b.1)),
            );
        Some(ScoreBounds { min, max })
    }

    /// Min-max normalized score of `query` against `document`.
    ///
    /// When every pair scores the same the bounds carry no information and
    /// the midpoint 0.5 is returned.
    pub fn ksts(&self, query: &str, document: &str, bounds: &ScoreBounds) -> Result<f64, TextSimError> {
        let s = self.score(query, document)?;
        if bounds.is_degenerate() {
            log::warn!("degenerate BM25 bounds (all pair scores equal {}); KSTS defaults to 0.5", bounds.min);
            return Ok(0.5);
        }
        Ok(((s - bounds.min) / (bounds.max - bounds.min)).clamp(0.0, 1.0))
    }

    /// Mean of both query directions, symmetric in its arguments.
    pub fn ksts_symmetric(&self, a: &str, b: &str, bounds: &ScoreBounds) -> Result<f64, TextSimError> {
        Ok((self.ksts(a, b, bounds)? + self.ksts(b, a, bounds)?) / 2.0)
    }

    pub fn save(&self, path: &Path) -> Result<(), TextSimError> {
        let json = serde_json::to_string_pretty(self).expect("index serializes");
        fs::write(path, json).map_err(|e| TextSimError::Cache {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Loads a cached index, refusing one built with a different stopword list.
    pub fn load(path: &Path) -> Result<Self, TextSimError> {
        let cache_err = |message: String| TextSimError::Cache {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| cache_err(e.to_string()))?;
        let index: Bm25Index = serde_json::from_str(&text).map_err(|e| cache_err(e.to_string()))?;
        let expected = stopword_hash();
        if index.stopword_hash != expected {
            return Err(TextSimError::StaleIndex {
                expected,
                found: index.stopword_hash,
            });
        }
        if index.compute_content_hash() != index.content_hash {
            return Err(cache_err("content hash mismatch".into()));
        }
        index.params.validate()?;
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(docs: &[(&str, &str)]) -> Bm25Index {
        Bm25Index::from_descriptions(docs.iter().copied(), Bm25Params::default()).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Nitrofurantoin is an antibiotic."),
            vec!["nitrofurantoin", "antibiotic"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize("THE the The").is_empty());
        assert_eq!(
            tokenize("β-lactam, Œstrogen x 5 10"),
            vec!["lactam", "œstrogen", "10"]
        );
    }

    #[test]
    fn keyword_dedup() {
        let toks: Vec<String> = ["a", "b", "a", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(keywords(&toks), vec!["a", "b", "c"]);
        assert!(keywords(&[]).is_empty());
    }

    #[test]
    fn no_overlap_scores_zero() {
        let idx = index(&[("a", "penicillin binding"), ("b", "ribosome inhibitor")]);
        assert_eq!(idx.score("a", "b").unwrap(), 0.0);
    }

    #[test]
    fn single_shared_keyword_at_average_length() {
        // both documents have length 2, so |D| = avgdl and the BM25 factor is 1
        let idx = index(&[("a", "alpha beta"), ("b", "alpha gamma")]);
        let expected = idx.term_idf("alpha");
        assert!((idx.score("a", "b").unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn empty_description_is_an_error() {
        let idx = index(&[("a", "alpha"), ("b", "the of")]);
        assert!(!idx.has_description("b"));
        assert!(matches!(idx.score("a", "b"), Err(TextSimError::EmptyDescription(id)) if id == "b"));
    }

    #[test]
    fn ksts_endpoints_and_degenerate() {
        let idx = index(&[
            ("a", "cephalosporin beta lactam"),
            ("b", "cephalosporin beta lactam broad"),
            ("c", "macrolide ribosome"),
        ]);
        let bounds = idx.score_bounds().unwrap();
        let mut pairs = vec![];
        for x in ["a", "b", "c"] {
            for y in ["a", "b", "c"] {
                if x != y {
                    pairs.push((idx.score(x, y).unwrap(), x, y));
                }
            }
        }
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let (_, lo_x, lo_y) = pairs[0];
        let (_, hi_x, hi_y) = *pairs.last().unwrap();
        assert_eq!(idx.ksts(hi_x, hi_y, &bounds).unwrap(), 1.0);
        assert_eq!(idx.ksts(lo_x, lo_y, &bounds).unwrap(), 0.0);

        let same = index(&[("a", "same words"), ("b", "same words"), ("c", "same words")]);
        let bounds = same.score_bounds().unwrap();
        assert!(bounds.is_degenerate());
        assert_eq!(same.ksts("a", "b", &bounds).unwrap(), 0.5);
    }

    #[test]
    fn symmetric_ksts() {
        let idx = index(&[
            ("a", "alpha beta beta gamma"),
            ("b", "alpha delta"),
            ("c", "beta epsilon zeta eta"),
        ]);
        let bounds = idx.score_bounds().unwrap();
        assert_ne!(idx.score("a", "b").unwrap(), idx.score("b", "a").unwrap());
        assert_eq!(
            idx.ksts_symmetric("a", "b", &bounds).unwrap(),
            idx.ksts_symmetric("b", "a", &bounds).unwrap()
        );
    }

    #[test]
    fn bounds_need_two_documents() {
        assert!(index(&[("a", "alpha")]).score_bounds().is_none());
    }

    #[test]
    fn invalid_params() {
        let err = Bm25Index::from_descriptions(
            [("a", "alpha")],
            Bm25Params { k1: 2.0, b: 1.5 },
        )
        .unwrap_err();
        assert!(matches!(err, TextSimError::InvalidParams { .. }));
    }

    #[test]
    fn cache_round_trip_and_staleness() {
        let idx = index(&[("a", "alpha beta"), ("b", "beta gamma")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bm25_index.json");
        idx.save(&path).unwrap();
        assert_eq!(Bm25Index::load(&path).unwrap(), idx);

        let mut stale = idx.clone();
        stale.stopword_hash = "0000".into();
        fs::write(&path, serde_json::to_string(&stale).unwrap()).unwrap();
        assert!(matches!(Bm25Index::load(&path), Err(TextSimError::StaleIndex { .. })));
    }
}
