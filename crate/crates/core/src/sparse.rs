//! IDF-weighted annotation vectors and their cosine similarity.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{AnnotationCatalog, AnnotationCategory, DrugRecord, Store};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SparseError {
    #[error("annotation {id:?} not in the {category} catalog")]
    UnknownAnnotation {
        category: AnnotationCategory,
        id: String,
    },

    #[error("cannot compare a {0} vector with a {1} vector")]
    CategoryMismatch(AnnotationCategory, AnnotationCategory),
}

/// Which inverse-document-frequency formula weights an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfVariant {
    /// `ln(N + 1) / (DF + 1)`.
    #[default]
    LogOverDf,
    /// `ln((N + 1) / (DF + 1))`.
    Classic,
}

impl fmt::Display for IdfVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdfVariant::LogOverDf => "log_over_df",
            IdfVariant::Classic => "classic",
        })
    }
}

impl FromStr for IdfVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log_over_df" => Ok(IdfVariant::LogOverDf),
            "classic" => Ok(IdfVariant::Classic),
            other => Err(format!("unknown idf variant {other:?}")),
        }
    }
}

/// IDF of an annotation carried by `df` of `drug_count` drugs.
pub fn idf_value(drug_count: usize, df: usize, variant: IdfVariant) -> f64 {
    let n = drug_count as f64 + 1.0;
    let d = df as f64 + 1.0;
    match variant {
        IdfVariant::LogOverDf => n.ln() / d,
        IdfVariant::Classic => (n / d).ln(),
    }
}

pub fn idf(
    catalog: &AnnotationCatalog,
    category: AnnotationCategory,
    annotation: &str,
    variant: IdfVariant,
) -> Result<f64, SparseError> {
    let df = catalog
        .df(category, annotation)
        .ok_or_else(|| SparseError::UnknownAnnotation {
            category,
            id: annotation.to_string(),
        })?;
    Ok(idf_value(catalog.drug_count(), df, variant))
}

/// Annotation id -> positive weight. Absent ids have weight zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseWeightedVector {
    category: AnnotationCategory,
    entries: BTreeMap<String, f64>,
}

impl SparseWeightedVector {
    pub fn new(category: AnnotationCategory) -> Self {
        SparseWeightedVector {
            category,
            entries: BTreeMap::new(),
        }
    }

    /// Builds a vector from raw entries, dropping non-positive and
    /// non-finite weights.
    pub fn from_entries(
        category: AnnotationCategory,
        entries: impl IntoIterator<Item = (String, f64)>,
    ) -> Self {
        let entries = entries
            .into_iter()
            .filter(|(_, w)| w.is_finite() && *w > 0.0)
            .collect();
        SparseWeightedVector { category, entries }
    }

    pub fn category(&self) -> AnnotationCategory {
        self.category
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn norm(&self) -> f64 {
        self.entries.values().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// IDF-weighted vector of one annotation category of `drug`.
///
/// Annotations unknown to `catalog` are skipped; for a drug taken from the
/// store that built the catalog there are none.
pub fn build_vector(
    drug: &DrugRecord,
    category: AnnotationCategory,
    catalog: &AnnotationCatalog,
    variant: IdfVariant,
) -> SparseWeightedVector {
    SparseWeightedVector::from_entries(
        category,
        drug.annotations(category)
            .iter()
            .filter_map(|id| idf(catalog, category, id, variant).ok().map(|w| (id.clone(), w))),
    )
}

/// Cosine similarity of two weight vectors, `None` when either is empty.
///
/// The dot product walks both sorted maps in key order, so the result is
/// bit-for-bit symmetric in its arguments.
pub fn cosine(
    v1: &SparseWeightedVector,
    v2: &SparseWeightedVector,
) -> Result<Option<f64>, SparseError> {
    if v1.category != v2.category {
        return Err(SparseError::CategoryMismatch(v1.category, v2.category));
    }
    if v1.is_empty() || v2.is_empty() {
        return Ok(None);
    }
    let mut dot = 0.0;
    let mut a = v1.entries.iter().peekable();
    let mut b = v2.entries.iter().peekable();
    while let (Some((ka, wa)), Some((kb, wb))) = (a.peek(), b.peek()) {
        match ka.cmp(kb) {
            std::cmp::Ordering::Less => {
                a.next();
            }
            std::cmp::Ordering::Greater => {
                b.next();
            }
            std::cmp::Ordering::Equal => {
                dot += *wa * *wb;
                a.next();
                b.next();
            }
        }
    }
    let sq = |v: &SparseWeightedVector| v.entries.values().map(|w| w * w).sum::<f64>();
    Ok(Some((dot / (sq(v1) * sq(v2)).sqrt()).clamp(0.0, 1.0)))
}

/// Writes `drug_id<TAB>category<TAB>annotation_id<TAB>weight` for every
/// nonzero weight in the store.
pub fn write_vectors<W: Write>(store: &Store, variant: IdfVariant, mut w: W) -> io::Result<()> {
    for drug in store.drugs() {
        for category in AnnotationCategory::ALL {
            let v = build_vector(drug, category, store.catalog(), variant);
            for (id, weight) in v.iter() {
                writeln!(w, "{}\t{}\t{}\t{}", drug.id, category, id, weight)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{build_store, TaxonomyGraph};
    use proptest::prelude::*;

    const SE: AnnotationCategory = AnnotationCategory::SideEffect;

    fn vec_of(entries: &[(&str, f64)]) -> SparseWeightedVector {
        SparseWeightedVector::from_entries(SE, entries.iter().map(|(k, w)| (k.to_string(), *w)))
    }

    #[test]
    fn idf_examples() {
        // ln(100) / 10
        assert!((idf_value(99, 9, IdfVariant::LogOverDf) - 0.460_517_018_598_809_1).abs() < 1e-15);
        // ln(2) / 2
        assert!((idf_value(1, 1, IdfVariant::LogOverDf) - 0.346_573_590_279_972_6).abs() < 1e-15);
        assert!((idf_value(99, 9, IdfVariant::Classic) - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn idf_unknown_annotation() {
        let store = build_store(vec![DrugRecord::new("D1", "a")], TaxonomyGraph::default()).unwrap();
        assert_eq!(
            idf(store.catalog(), SE, "nope", IdfVariant::LogOverDf),
            Err(SparseError::UnknownAnnotation {
                category: SE,
                id: "nope".into()
            })
        );
    }

    #[test]
    fn idf_strictly_decreasing_in_df() {
        for variant in [IdfVariant::LogOverDf, IdfVariant::Classic] {
            for n in 1..60 {
                for df in 1..n {
                    assert!(idf_value(n, df, variant) > idf_value(n, df + 1, variant));
                }
            }
        }
    }

    #[test]
    fn vector_entries_are_idf_weights() {
        let mut d1 = DrugRecord::new("D1", "a");
        d1.side_effects = ["s1", "s2"].iter().map(|s| s.to_string()).collect();
        let mut d2 = DrugRecord::new("D2", "b");
        d2.side_effects = ["s1"].iter().map(|s| s.to_string()).collect();
        let d3 = DrugRecord::new("D3", "c");
        let store = build_store(vec![d1, d2, d3], TaxonomyGraph::default()).unwrap();
        let cat = store.catalog();
        let v = build_vector(store.get("D1").unwrap(), SE, cat, IdfVariant::LogOverDf);
        assert_eq!(v.len(), 2);
        assert_eq!(v.get("s1"), Some(4f64.ln() / 3.0));
        assert_eq!(v.get("s2"), Some(4f64.ln() / 2.0));
        // rarer annotation weighs more
        assert!(v.get("s2").unwrap() > v.get("s1").unwrap());
        assert!(build_vector(store.get("D3").unwrap(), SE, cat, IdfVariant::LogOverDf).is_empty());
    }

    #[test]
    fn classic_variant_drops_ubiquitous_annotations() {
        let mut d1 = DrugRecord::new("D1", "a");
        d1.side_effects.insert("s".into());
        let store = build_store(vec![d1], TaxonomyGraph::default()).unwrap();
        // ln(2/2) = 0, and zero weights are not stored
        let v = build_vector(store.get("D1").unwrap(), SE, store.catalog(), IdfVariant::Classic);
        assert!(v.is_empty());
    }

    #[test]
    fn cosine_examples() {
        let v = vec_of(&[("a", 1.0), ("b", 2.0)]);
        assert_eq!(cosine(&v, &v).unwrap(), Some(1.0));
        let w = vec_of(&[("c", 1.0)]);
        assert_eq!(cosine(&v, &w).unwrap(), Some(0.0));
        let u = vec_of(&[("b", 2.0), ("c", 1.0)]);
        assert!((cosine(&v, &u).unwrap().unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(cosine(&v, &SparseWeightedVector::new(SE)).unwrap(), None);
        let t = SparseWeightedVector::new(AnnotationCategory::Target);
        assert!(matches!(
            cosine(&v, &t),
            Err(SparseError::CategoryMismatch(..))
        ));
    }

    fn arb_vector() -> impl Strategy<Value = SparseWeightedVector> {
        proptest::collection::btree_map(0u8..12, 0.01f64..10.0, 0..8).prop_map(|m| {
            SparseWeightedVector::from_entries(SE, m.into_iter().map(|(k, w)| (format!("a{k}"), w)))
        })
    }

    fn dense(v: &SparseWeightedVector) -> Vec<f64> {
        (0u8..12).map(|k| v.get(&format!("a{k}")).unwrap_or(0.0)).collect()
    }

    proptest! {
        #[test]
        fn cosine_properties(v1 in arb_vector(), v2 in arb_vector(), c in 0.01f64..100.0) {
            let ab = cosine(&v1, &v2).unwrap();
            let ba = cosine(&v2, &v1).unwrap();
            prop_assert_eq!(ab.map(f64::to_bits), ba.map(f64::to_bits));
            if let Some(s) = ab {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&s));
                let scaled = SparseWeightedVector::from_entries(
                    SE, v1.iter().map(|(k, w)| (k.to_string(), w * c)));
                let s2 = cosine(&scaled, &v2).unwrap().unwrap();
                prop_assert!((s - s2).abs() < 1e-12);

                let (x, y) = (dense(&v1), dense(&v2));
                let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
                prop_assert!((s - dot / (nx * ny)).abs() < 1e-12);
            } else {
                prop_assert!(v1.is_empty() || v2.is_empty());
            }
        }
    }
}
