//! Dense embeddings: taxonomy nodes via random walks, words via skip-gram.

mod sgns;
mod walks;

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CorpusDocument;
use crate::store::{DrugRecord, Store, TaxonomyGraph};
use crate::text::{keywords, tokenize};
use crate::util::short_hash;

pub use sgns::{loss_and_gradients, train_sgns, train_sgns_with_report, SgnsConfig, SgnsGradients, TrainingReport};
pub use walks::{generate_walks, WalkConfig};

#[derive(Error, Debug)]
pub enum EmbeddingError {
    #[error("taxonomy graph has no nodes")]
    EmptyGraph,

    #[error("no token survives the min_count filter")]
    EmptyVocabulary,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("table was trained in {found} mode, {expected} requested")]
    ModeMismatch {
        expected: EmbeddingMode,
        found: EmbeddingMode,
    },

    #[error("embedding file line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    Hierarchy,
    Text,
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingMode::Hierarchy => "hierarchy",
            EmbeddingMode::Text => "text",
        })
    }
}

impl FromStr for EmbeddingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hierarchy" => Ok(EmbeddingMode::Hierarchy),
            "text" => Ok(EmbeddingMode::Text),
            other => Err(format!("unknown embedding mode {other:?}")),
        }
    }
}

/// Fixed-dimension vectors keyed by node id or token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    mode: EmbeddingMode,
    dim: usize,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    config_hash: String,
    corpus_hash: String,
}

impl EmbeddingTable {
    pub fn from_rows(
        mode: EmbeddingMode,
        dim: usize,
        rows: impl IntoIterator<Item = (String, Vec<f64>)>,
        config_hash: String,
        corpus_hash: String,
    ) -> Result<Self, EmbeddingError> {
        let mut table = EmbeddingTable {
            mode,
            dim,
            keys: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            config_hash,
            corpus_hash,
        };
        for (i, (key, v)) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(EmbeddingError::Format {
                    line: i + 2,
                    message: format!("vector for {key:?} has {} components, expected {dim}", v.len()),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::Format {
                    line: i + 2,
                    message: format!("vector for {key:?} is not finite"),
                });
            }
            if key.is_empty() || key.contains(['\t', '\n']) {
                return Err(EmbeddingError::Format {
                    line: i + 2,
                    message: format!("invalid key {key:?}"),
                });
            }
            if table.index.insert(key.clone(), table.keys.len()).is_some() {
                return Err(EmbeddingError::Format {
                    line: i + 2,
                    message: format!("duplicate key {key:?}"),
                });
            }
            table.keys.push(key);
            table.data.extend(v);
        }
        Ok(table)
    }

    pub fn mode(&self) -> EmbeddingMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index
            .get(key)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Writes the `embeddings.tsv` format: a `dim=<d> mode=<m> config=<hash>`
    /// header, then `key<TAB>c1<TAB>...<TAB>cd` with 9 significant digits.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "dim={} mode={} config={}", self.dim, self.mode, self.config_hash)?;
        for (i, key) in self.keys.iter().enumerate() {
            w.write_all(key.as_bytes())?;
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(w, "\t{x:.8e}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_tsv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.ok_or(EmbeddingError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let mut dim = None;
        let mut mode = None;
        let mut config = None;
        for field in header.split_whitespace() {
            let bad = |m: String| EmbeddingError::Format { line: 1, message: m };
            match field.split_once('=') {
                Some(("dim", v)) => dim = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                Some(("mode", v)) => mode = Some(v.parse::<EmbeddingMode>().map_err(bad)?),
                Some(("config", v)) => config = Some(v.to_string()),
                _ => return Err(bad(format!("unexpected header field {field:?}"))),
            }
        }
        let (Some(dim), Some(mode), Some(config)) = (dim, mode, config) else {
            return Err(EmbeddingError::Format {
                line: 1,
                message: "header needs dim, mode and config".into(),
            });
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let key = cols.next().unwrap_or_default().to_string();
            let values = cols
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbeddingError::Format {
                    line: i + 2,
                    message: e.to_string(),
                })?;
            rows.push((key, values));
        }
        EmbeddingTable::from_rows(mode, dim, rows, config, String::new())
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        Self::read_tsv(BufReader::new(File::open(path)?))
    }
}

/// Cosine of two equal-length vectors, `None` if either has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na * nb;
    (denom > 0.0).then(|| (dot / denom).clamp(-1.0, 1.0))
}

/// Key under which a drug name is looked up in a text table: the name's
/// tokens joined by `_`.
pub fn name_key(name: &str) -> String {
    tokenize(name).join("_")
}

/// Vector representing `drug` in `table`, or `None` if it has no usable key.
///
/// Hierarchy tables use the drug's taxonomy node. Text tables use the name
/// token when it is in the vocabulary, otherwise the mean of the
/// in-vocabulary distinct description tokens.
pub fn drug_vector(
    table: &EmbeddingTable,
    drug: &DrugRecord,
    mode: EmbeddingMode,
) -> Result<Option<Vec<f64>>, EmbeddingError> {
    if table.mode() != mode {
        return Err(EmbeddingError::ModeMismatch {
            expected: mode,
            found: table.mode(),
        });
    }
    Ok(match mode {
        EmbeddingMode::Hierarchy => drug
            .taxonomy_node
            .as_deref()
            .and_then(|n| table.get(n))
            .map(<[f64]>::to_vec),
        EmbeddingMode::Text => {
            if let Some(v) = table.get(&name_key(&drug.name)) {
                Some(v.to_vec())
            } else {
                let words = keywords(&tokenize(&drug.description));
                let found: Vec<&[f64]> = words.iter().filter_map(|w| table.get(w)).collect();
                if found.is_empty() {
                    None
                } else {
                    let mut mean = vec![0.0; table.dim()];
                    for v in &found {
                        for (m, x) in mean.iter_mut().zip(v.iter()) {
                            *m += x;
                        }
                    }
                    let n = found.len() as f64;
                    mean.iter_mut().for_each(|m| *m /= n);
                    Some(mean)
                }
            }
        }
    })
}

/// Cosine of two drug vectors mapped from `[-1, 1]` to `[0, 1]`.
pub fn embedding_similarity(
    table: &EmbeddingTable,
    d1: &DrugRecord,
    d2: &DrugRecord,
    mode: EmbeddingMode,
) -> Result<Option<f64>, EmbeddingError> {
    let (Some(a), Some(b)) = (drug_vector(table, d1, mode)?, drug_vector(table, d2, mode)?) else {
        return Ok(None);
    };
    Ok(vector_similarity(&a, &b))
}

/// `(cos + 1) / 2`, or `None` for a zero vector.
pub fn vector_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    cosine(a, b).map(|c| ((c + 1.0) / 2.0).clamp(0.0, 1.0))
}

/// Walks the taxonomy and trains node embeddings on the walks.
pub fn train_hierarchy(
    graph: &TaxonomyGraph,
    walk: &WalkConfig,
    sgns: &SgnsConfig,
) -> Result<EmbeddingTable, EmbeddingError> {
    let walks = generate_walks(graph, walk)?;
    let (table, report) = train_sgns_with_report(&walks, sgns, EmbeddingMode::Hierarchy)?;
    log::debug!("hierarchy embedding epoch losses {:?}", report.epoch_losses);
    let hash = short_hash(
        format!(
            "{}{}",
            serde_json::to_string(walk).expect("config serializes"),
            serde_json::to_string(sgns).expect("config serializes")
        )
        .as_bytes(),
    );
    Ok(EmbeddingTable { config_hash: hash, ..table })
}

/// Sentences for text training: every corpus document followed by every
/// drug description, tokenized the same way as descriptions.
pub fn text_sentences(corpus: &[CorpusDocument], store: &Store) -> Vec<Vec<String>> {
    corpus
        .iter()
        .map(|d| d.text.as_str())
        .chain(store.drugs().iter().map(|d| d.description.as_str()))
        .map(tokenize)
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn train_text(
    corpus: &[CorpusDocument],
    store: &Store,
    sgns: &SgnsConfig,
) -> Result<EmbeddingTable, EmbeddingError> {
    let sentences = text_sentences(corpus, store);
    let (table, report) = train_sgns_with_report(&sentences, sgns, EmbeddingMode::Text)?;
    log::debug!("text embedding epoch losses {:?}", report.epoch_losses);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(mode: EmbeddingMode, rows: &[(&str, &[f64])]) -> EmbeddingTable {
        EmbeddingTable::from_rows(
            mode,
            rows[0].1.len(),
            rows.iter().map(|(k, v)| (k.to_string(), v.to_vec())),
            "cfg".into(),
            String::new(),
        )
        .unwrap()
    }

    #[test]
    fn hierarchy_vector_needs_taxonomy() {
        let t = table(EmbeddingMode::Hierarchy, &[("n1", &[1.0, 0.0])]);
        let mut d = DrugRecord::new("D1", "x");
        assert_eq!(drug_vector(&t, &d, EmbeddingMode::Hierarchy).unwrap(), None);
        d.taxonomy_node = Some("n1".into());
        assert_eq!(drug_vector(&t, &d, EmbeddingMode::Hierarchy).unwrap(), Some(vec![1.0, 0.0]));
        assert!(matches!(
            drug_vector(&t, &d, EmbeddingMode::Text),
            Err(EmbeddingError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn text_vector_rules() {
        let t = table(
            EmbeddingMode::Text,
            &[
                ("cefazolin", &[1.0, 2.0]),
                ("alpha", &[1.0, 0.0]),
                ("beta", &[0.0, 3.0]),
                ("gamma", &[2.0, 3.0]),
            ],
        );
        let named = DrugRecord::new("D1", "Cefazolin");
        assert_eq!(drug_vector(&t, &named, EmbeddingMode::Text).unwrap(), Some(vec![1.0, 2.0]));

        let mut unnamed = DrugRecord::new("D2", "Unknownium");
        unnamed.description = "Alpha and beta, then gamma; alpha again plus delta.".into();
        // mean of alpha, beta, gamma
        assert_eq!(drug_vector(&t, &unnamed, EmbeddingMode::Text).unwrap(), Some(vec![1.0, 2.0]));

        let nothing = DrugRecord::new("D3", "Nothing");
        assert_eq!(drug_vector(&t, &nothing, EmbeddingMode::Text).unwrap(), None);
    }

    #[test]
    fn similarity_mapping() {
        let v = [0.3, -0.7, 1.1];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(vector_similarity(&v, &v), Some(1.0));
        assert_eq!(vector_similarity(&v, &neg), Some(0.0));
        assert_eq!(vector_similarity(&[1.0, 0.0], &[0.0, 2.0]), Some(0.5));
        assert_eq!(vector_similarity(&[0.0, 0.0], &[0.0, 2.0]), None);
    }

    #[test]
    fn similarity_of_drugs_is_symmetric_and_propagates_missing() {
        let t = table(EmbeddingMode::Hierarchy, &[("n1", &[0.3, 0.9, -0.2]), ("n2", &[0.7, -0.1, 0.4])]);
        let mut a = DrugRecord::new("A", "a");
        a.taxonomy_node = Some("n1".into());
        let mut b = DrugRecord::new("B", "b");
        b.taxonomy_node = Some("n2".into());
        let c = DrugRecord::new("C", "c");
        let ab = embedding_similarity(&t, &a, &b, EmbeddingMode::Hierarchy).unwrap().unwrap();
        let ba = embedding_similarity(&t, &b, &a, EmbeddingMode::Hierarchy).unwrap().unwrap();
        assert_eq!(ab.to_bits(), ba.to_bits());
        assert_eq!(embedding_similarity(&t, &a, &a, EmbeddingMode::Hierarchy).unwrap(), Some(1.0));
        assert_eq!(embedding_similarity(&t, &a, &c, EmbeddingMode::Hierarchy).unwrap(), None);
    }

    #[test]
    fn tsv_round_trip() {
        let t = table(EmbeddingMode::Text, &[("a", &[0.123456789012, -3.0e-7]), ("b", &[1.0, 2.0])]);
        let mut buf = Vec::new();
        t.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("dim=2 mode=text config=cfg\n"));
        assert!(text.contains("a\t1.23456789e-1\t-3.00000000e-7\n"));
        let back = EmbeddingTable::read_tsv(buf.as_slice()).unwrap();
        assert_eq!(back.keys(), t.keys());
        assert_eq!(back.get("a").unwrap()[0], 0.123456789);
        assert!(matches!(
            EmbeddingTable::read_tsv("dim=3 mode=text config=x\na\t1\t2\n".as_bytes()),
            Err(EmbeddingError::Format { line: 2, .. })
        ));
    }
}
