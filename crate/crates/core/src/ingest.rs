//! Parsers and writers for the on-disk exchange formats.
//!
//! | file              | layout                                                  |
//! |-------------------|---------------------------------------------------------|
//! | `drugs.jsonl`     | one JSON object per line (`id`, `name`, `description`, `targets`, `taxonomy_node`, ...) |
//! | `side_effects.tsv`| `drug_id<TAB>side_effect_id`                            |
//! | `ndfrt.tsv`       | `drug_id<TAB>MoA|PE<TAB>concept_id`                     |
//! | `taxonomy.tsv`    | `parent_node<TAB>child_node`                            |
//! | `corpus.jsonl`    | `{"doc_id", "text"}` per line                           |
//! | `pairs.tsv`       | `drug_a<TAB>drug_b<TAB>score1;score2;...`               |
//!
//! TSV files have no header; lines starting with `#` and blank lines are
//! skipped. Every error carries the 1-based line number it came from.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::store::{AnnotationCategory, DrugRecord};

#[derive(Error, Debug)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: malformed line: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: missing field {field:?}")]
    MissingField { line: usize, field: &'static str },

    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },

    #[error("line {line}: expected {expected} tab-separated columns, found {found}")]
    WrongColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: unknown kind {kind:?} (expected MoA or PE)")]
    UnknownKind { line: usize, kind: String },

    #[error("line {line}: score {value} outside [0, 1]")]
    ScoreOutOfRange { line: usize, value: f64 },

    #[error("line {line}: cannot parse score {value:?}")]
    MalformedScore { line: usize, value: String },

    #[error("line {line}: pair of a drug with itself")]
    SelfPair { line: usize },

    #[error("line {line}: pair {drug_a} / {drug_b} listed twice")]
    DuplicatePair {
        line: usize,
        drug_a: String,
        drug_b: String,
    },

    #[error("line {line}: empty text")]
    EmptyText { line: usize },
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// NFC-normalizes text and converts CR/CRLF line endings to LF.
pub fn normalize_text(text: &str) -> String {
    let unix = text.replace("\r\n", "\n").replace('\r', "\n");
    unix.nfc().collect()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Yields `(line_no, line)` for lines that carry data.
fn data_lines<R: BufRead>(
    reader: R,
    skip_comments: bool,
) -> impl Iterator<Item = io::Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(e)),
            Ok(l) => {
                let l = l.strip_suffix('\r').map(str::to_string).unwrap_or(l);
                let t = l.trim();
                if t.is_empty() || (skip_comments && t.starts_with('#')) {
                    None
                } else {
                    Some(Ok((i + 1, l)))
                }
            }
        })
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

// ---------------------------------------------------------------------------
// drugs.jsonl

#[derive(Deserialize)]
struct RawDrug {
    id: Option<String>,
    name: Option<String>,
    description: Option<String>,
    #[serde(default)]
    targets: Vec<String>,
    #[serde(default)]
    side_effects: Vec<String>,
    #[serde(default)]
    mechanisms: Vec<String>,
    #[serde(default)]
    physiologic_effects: Vec<String>,
    taxonomy_node: Option<String>,
}

#[derive(Serialize)]
struct DrugLine<'a> {
    id: &'a str,
    name: &'a str,
    description: &'a str,
    targets: &'a BTreeSet<String>,
    #[serde(skip_serializing_if = "BTreeSet::is_empty")]
    side_effects: &'a BTreeSet<String>,
    #[serde(skip_serializing_if = "BTreeSet::is_empty")]
    mechanisms: &'a BTreeSet<String>,
    #[serde(skip_serializing_if = "BTreeSet::is_empty")]
    physiologic_effects: &'a BTreeSet<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    taxonomy_node: Option<&'a str>,
}

pub fn parse_drugs(path: &Path) -> Result<Vec<DrugRecord>> {
    with_path(path, read_drugs(open(path)?))
}

/// Reads `drugs.jsonl`. Besides `targets`, the optional `side_effects`,
/// `mechanisms` and `physiologic_effects` arrays are accepted so a store can
/// be round-tripped through a single file.
pub fn read_drugs<R: BufRead>(reader: R) -> Result<Vec<DrugRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in data_lines(reader, false) {
        let (line, text) = item.map_err(io_err(Path::new("<drugs>")))?;
        let raw: RawDrug = serde_json::from_str(&text).map_err(|e| IngestError::MalformedLine {
            line,
            message: e.to_string(),
        })?;
        let id = raw
            .id
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or(IngestError::MissingField { line, field: "id" })?;
        let name = raw.name.ok_or(IngestError::MissingField { line, field: "name" })?;
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateId { line, id });
        }
        out.push(DrugRecord {
            id,
            name: normalize_text(name.trim()),
            description: raw.description.as_deref().map(normalize_text).unwrap_or_default(),
            side_effects: raw.side_effects.into_iter().collect(),
            targets: raw.targets.into_iter().collect(),
            mechanisms: raw.mechanisms.into_iter().collect(),
            physiologic_effects: raw.physiologic_effects.into_iter().collect(),
            taxonomy_node: raw.taxonomy_node.filter(|s| !s.trim().is_empty()),
        });
    }
    Ok(out)
}

pub fn write_drugs<W: Write>(drugs: &[DrugRecord], mut w: W) -> io::Result<()> {
    for d in drugs {
        let line = DrugLine {
            id: &d.id,
            name: &d.name,
            description: &d.description,
            targets: &d.targets,
            side_effects: &d.side_effects,
            mechanisms: &d.mechanisms,
            physiologic_effects: &d.physiologic_effects,
            taxonomy_node: d.taxonomy_node.as_deref(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// association tables

pub fn parse_associations(path: &Path, category: AnnotationCategory) -> Result<Vec<(String, String)>> {
    with_path(path, read_associations(open(path)?, category))
}

/// Reads a drug/annotation table for one category.
///
/// Side effects and targets use two columns. Mechanisms and physiologic
/// effects come from three-column NDF-RT style rows whose middle column is
/// `MoA` or `PE`; rows of the other kind are skipped. Duplicates collapse to
/// their first occurrence.
pub fn read_associations<R: BufRead>(
    reader: R,
    category: AnnotationCategory,
) -> Result<Vec<(String, String)>> {
    let wanted_kind = match category {
        AnnotationCategory::Mechanism => Some("MoA"),
        AnnotationCategory::PhysiologicEffect => Some("PE"),
        AnnotationCategory::SideEffect | AnnotationCategory::Target => None,
    };
    let expected = if wanted_kind.is_some() { 3 } else { 2 };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in data_lines(reader, true) {
        let (line, text) = item.map_err(io_err(Path::new("<associations>")))?;
        let cols: Vec<&str> = text.split('\t').map(str::trim).collect();
        if cols.len() != expected || cols.iter().any(|c| c.is_empty()) {
            return Err(IngestError::WrongColumnCount {
                line,
                expected,
                found: cols.iter().filter(|c| !c.is_empty()).count(),
            });
        }
        let pair = match wanted_kind {
            None => (cols[0], cols[1]),
            Some(kind) => {
                if cols[1] != "MoA" && cols[1] != "PE" {
                    return Err(IngestError::UnknownKind {
                        line,
                        kind: cols[1].to_string(),
                    });
                }
                if cols[1] != kind {
                    continue;
                }
                (cols[0], cols[2])
            }
        };
        let pair = (pair.0.to_string(), normalize_text(pair.1));
        if seen.insert(pair.clone()) {
            out.push(pair);
        }
    }
    Ok(out)
}

/// Writes a two-column association table.
pub fn write_associations<W: Write>(pairs: &[(String, String)], mut w: W) -> io::Result<()> {
    for (drug, annotation) in pairs {
        writeln!(w, "{drug}\t{annotation}")?;
    }
    Ok(())
}

/// Adds associations to the matching drug records. Returns the associations
/// whose drug id is not among `drugs`; the caller decides how to report them.
pub fn attach_associations(
    drugs: &mut [DrugRecord],
    category: AnnotationCategory,
    associations: &[(String, String)],
) -> Vec<(String, String)> {
    let index: HashMap<String, usize> = drugs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.clone(), i))
        .collect();
    let mut unmatched = Vec::new();
    for (drug, annotation) in associations {
        match index.get(drug) {
            Some(&i) => {
                drugs[i].annotations_mut(category).insert(annotation.clone());
            }
            None => unmatched.push((drug.clone(), annotation.clone())),
        }
    }
    unmatched
}

// ---------------------------------------------------------------------------
// taxonomy.tsv

pub fn parse_taxonomy(path: &Path) -> Result<Vec<(String, String)>> {
    with_path(path, read_taxonomy(open(path)?))
}

pub fn read_taxonomy<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for item in data_lines(reader, true) {
        let (line, text) = item.map_err(io_err(Path::new("<taxonomy>")))?;
        let cols: Vec<&str> = text.split('\t').map(str::trim).collect();
        if cols.len() != 2 || cols.iter().any(|c| c.is_empty()) {
            return Err(IngestError::WrongColumnCount {
                line,
                expected: 2,
                found: cols.len(),
            });
        }
        out.push((cols[0].to_string(), cols[1].to_string()));
    }
    Ok(out)
}

pub fn write_taxonomy<'a, W: Write>(
    edges: impl IntoIterator<Item = (&'a str, &'a str)>,
    mut w: W,
) -> io::Result<()> {
    for (p, c) in edges {
        writeln!(w, "{p}\t{c}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// corpus.jsonl

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub doc_id: String,
    pub text: String,
}

#[derive(Deserialize)]
struct RawDocument {
    doc_id: Option<String>,
    text: Option<String>,
}

pub fn parse_corpus(path: &Path) -> Result<Vec<CorpusDocument>> {
    with_path(path, read_corpus(open(path)?))
}

/// Reads `corpus.jsonl`. Whitespace runs in the text collapse to one space.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<CorpusDocument>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in data_lines(reader, false) {
        let (line, text) = item.map_err(io_err(Path::new("<corpus>")))?;
        let raw: RawDocument =
            serde_json::from_str(&text).map_err(|e| IngestError::MalformedLine {
                line,
                message: e.to_string(),
            })?;
        let doc_id = raw
            .doc_id
            .ok_or(IngestError::MissingField { line, field: "doc_id" })?;
        let body = raw.text.ok_or(IngestError::MissingField { line, field: "text" })?;
        let body = normalize_text(&body)
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        if body.is_empty() {
            return Err(IngestError::EmptyText { line });
        }
        if !seen.insert(doc_id.clone()) {
            return Err(IngestError::DuplicateId { line, id: doc_id });
        }
        out.push(CorpusDocument { doc_id, text: body });
    }
    Ok(out)
}

pub fn write_corpus<W: Write>(docs: &[CorpusDocument], mut w: W) -> io::Result<()> {
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pairs.tsv

/// Default bound on `max - min` of the rater scores of a kept pair.
pub const DEFAULT_MAX_RATER_RANGE: f64 = 0.4;

// Absorbs decimal round-off such as 0.5 - 0.1 when comparing against the bound.
const RANGE_SLACK: f64 = 1e-12;

/// A drug pair scored by several raters. Ids are stored in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub drug_a: String,
    pub drug_b: String,
    pub rater_scores: Vec<f64>,
    pub mean_score: f64,
}

impl LabeledPair {
    /// Orders the ids and computes the mean. Callers validate scores.
    pub fn new(a: impl Into<String>, b: impl Into<String>, rater_scores: Vec<f64>) -> Self {
        let (a, b) = (a.into(), b.into());
        let (drug_a, drug_b) = if a <= b { (a, b) } else { (b, a) };
        let mean_score = rater_scores.iter().sum::<f64>() / rater_scores.len() as f64;
        LabeledPair {
            drug_a,
            drug_b,
            rater_scores,
            mean_score,
        }
    }

    pub fn rater_range(&self) -> f64 {
        let max = self.rater_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.rater_scores.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn contains(&self, drug: &str) -> bool {
        self.drug_a == drug || self.drug_b == drug
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedPair {
    pub line: usize,
    pub pair: LabeledPair,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedPairs {
    pub pairs: Vec<LabeledPair>,
    /// Pairs dropped because the raters disagreed by more than the bound.
    pub excluded: Vec<ExcludedPair>,
}

pub fn parse_pairs(path: &Path, max_rater_range: f64) -> Result<ParsedPairs> {
    with_path(path, read_pairs(open(path)?, max_rater_range))
}

pub fn read_pairs<R: BufRead>(reader: R, max_rater_range: f64) -> Result<ParsedPairs> {
    let mut seen = HashSet::new();
    let mut parsed = ParsedPairs::default();
    for item in data_lines(reader, true) {
        let (line, text) = item.map_err(io_err(Path::new("<pairs>")))?;
        let cols: Vec<&str> = text.split('\t').map(str::trim).collect();
        if cols.len() != 3 || cols[0].is_empty() || cols[1].is_empty() {
            return Err(IngestError::WrongColumnCount {
                line,
                expected: 3,
                found: cols.len(),
            });
        }
        if cols[0] == cols[1] {
            return Err(IngestError::SelfPair { line });
        }
        let mut scores = Vec::new();
        for s in cols[2].split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let value: f64 = s.parse().map_err(|_| IngestError::MalformedScore {
                line,
                value: s.to_string(),
            })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(IngestError::ScoreOutOfRange { line, value });
            }
            scores.push(value);
        }
        if scores.is_empty() {
            return Err(IngestError::MalformedScore {
                line,
                value: cols[2].to_string(),
            });
        }
        let pair = LabeledPair::new(cols[0], cols[1], scores);
        if !seen.insert((pair.drug_a.clone(), pair.drug_b.clone())) {
            return Err(IngestError::DuplicatePair {
                line,
                drug_a: pair.drug_a,
                drug_b: pair.drug_b,
            });
        }
        let range = pair.rater_range();
        if range > max_rater_range + RANGE_SLACK {
            parsed.excluded.push(ExcludedPair { line, pair, range });
        } else {
            parsed.pairs.push(pair);
        }
    }
    if !parsed.excluded.is_empty() {
        log::info!(
            "excluded {} pair(s) with rater range above {max_rater_range}",
            parsed.excluded.len()
        );
    }
    Ok(parsed)
}

pub fn write_pairs<W: Write>(pairs: &[LabeledPair], mut w: W) -> io::Result<()> {
    for p in pairs {
        let scores: Vec<String> = p.rater_scores.iter().map(f64::to_string).collect();
        writeln!(w, "{}\t{}\t{}", p.drug_a, p.drug_b, scores.join(";"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drugs(text: &str) -> Result<Vec<DrugRecord>> {
        read_drugs(text.as_bytes())
    }

    #[test]
    fn three_drug_lines() {
        let text = r#"{"id":"D1","name":"Alpha","description":"first","targets":["P1"]}
{"id":"D2","name":"Beta","taxonomy_node":"n2"}
{"id":"D3","name":"Gamma","description":"","targets":[]}
"#;
        let d = drugs(text).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d[0].targets.iter().collect::<Vec<_>>(), vec!["P1"]);
        assert_eq!(d[1].taxonomy_node.as_deref(), Some("n2"));
        assert_eq!(d[1].description, "");
    }

    #[test]
    fn missing_id_reports_line() {
        let text = "{\"id\":\"D1\",\"name\":\"a\"}\n{\"name\":\"b\"}\n";
        match drugs(text) {
            Err(IngestError::MissingField { line: 2, field: "id" }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(drugs("").unwrap().is_empty());
    }

    #[test]
    fn malformed_json_and_duplicates() {
        assert!(matches!(
            drugs("{\"id\":\"D1\",\"name\":\"a\"}\n{oops\n"),
            Err(IngestError::MalformedLine { line: 2, .. })
        ));
        assert!(matches!(
            drugs("{\"id\":\"D1\",\"name\":\"a\"}\n{\"id\":\"D1\",\"name\":\"b\"}\n"),
            Err(IngestError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn description_normalized() {
        // "e" + combining acute accent composes to a single code point.
        let text = "{\"id\":\"D1\",\"name\":\"a\",\"description\":\"cafe\\u0301\\r\\nline\"}\n";
        let d = drugs(text).unwrap();
        assert_eq!(d[0].description, "caf\u{e9}\nline");
    }

    #[test]
    fn duplicate_association_rows_collapse() {
        let text = "# header comment\nD1\tS1\nD1\tS1\nD1\tS1\nD2\tS1\n";
        let pairs = read_associations(text.as_bytes(), AnnotationCategory::SideEffect).unwrap();
        assert_eq!(pairs.len(), 2);
    }

    #[test]
    fn ndfrt_kinds() {
        let text = "D1\tMoA\tm1\nD1\tPE\tp1\nD2\tMoA\tm2\n";
        let moa = read_associations(text.as_bytes(), AnnotationCategory::Mechanism).unwrap();
        assert_eq!(
            moa,
            vec![("D1".into(), "m1".into()), ("D2".into(), "m2".into())]
        );
        let pe = read_associations(text.as_bytes(), AnnotationCategory::PhysiologicEffect).unwrap();
        assert_eq!(pe, vec![("D1".into(), "p1".into())]);

        let bad = "D1\tXX\tm1\n";
        assert!(matches!(
            read_associations(bad.as_bytes(), AnnotationCategory::Mechanism),
            Err(IngestError::UnknownKind { line: 1, .. })
        ));
    }

    #[test]
    fn association_column_count() {
        assert!(matches!(
            read_associations("D1\tS1\textra\n".as_bytes(), AnnotationCategory::SideEffect),
            Err(IngestError::WrongColumnCount { line: 1, expected: 2, .. })
        ));
        assert!(matches!(
            read_associations("D1\tm1\n".as_bytes(), AnnotationCategory::Mechanism),
            Err(IngestError::WrongColumnCount { line: 1, expected: 3, .. })
        ));
    }

    #[test]
    fn attach_reports_unknown_drugs() {
        let mut d = vec![DrugRecord::new("D1", "a")];
        let unmatched = attach_associations(
            &mut d,
            AnnotationCategory::SideEffect,
            &[("D1".into(), "s".into()), ("D9".into(), "s".into())],
        );
        assert_eq!(unmatched, vec![("D9".to_string(), "s".to_string())]);
        assert!(d[0].side_effects.contains("s"));
    }

    #[test]
    fn pair_mean_and_exclusion() {
        let text = "B\tA\t0.8;0.9;1.0\nC\tD\t0.1;0.9\nE\tF\t0.1;0.5\n";
        let parsed = read_pairs(text.as_bytes(), 0.4).unwrap();
        assert_eq!(parsed.pairs.len(), 2);
        let first = &parsed.pairs[0];
        assert_eq!((first.drug_a.as_str(), first.drug_b.as_str()), ("A", "B"));
        assert!((first.mean_score - 0.9).abs() < 1e-15);
        assert_eq!(parsed.excluded.len(), 1);
        assert_eq!(parsed.excluded[0].line, 2);
        assert!((parsed.excluded[0].range - 0.8).abs() < 1e-12);
        // range exactly at the bound is kept
        assert_eq!(parsed.pairs[1].drug_a, "E");
    }

    #[test]
    fn pair_errors() {
        assert!(matches!(
            read_pairs("A\tB\t0.5;1.2\n".as_bytes(), 0.4),
            Err(IngestError::ScoreOutOfRange { line: 1, .. })
        ));
        assert!(matches!(
            read_pairs("A\tA\t0.5\n".as_bytes(), 0.4),
            Err(IngestError::SelfPair { line: 1 })
        ));
        assert!(matches!(
            read_pairs("A\tB\tabc\n".as_bytes(), 0.4),
            Err(IngestError::MalformedScore { line: 1, .. })
        ));
        assert!(matches!(
            read_pairs("A\tB\t0.5\nB\tA\t0.6\n".as_bytes(), 0.4),
            Err(IngestError::DuplicatePair { line: 2, .. })
        ));
    }

    #[test]
    fn corpus_rules() {
        let text = "{\"doc_id\":\"p1\",\"text\":\"  two\\n  words \"}\n";
        let docs = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(docs[0].text, "two words");
        assert!(matches!(
            read_corpus("{\"doc_id\":\"p1\",\"text\":\"   \"}\n".as_bytes()),
            Err(IngestError::EmptyText { line: 1 })
        ));
        assert!(matches!(
            read_corpus("{\"text\":\"x\"}\n".as_bytes()),
            Err(IngestError::MissingField { field: "doc_id", .. })
        ));
    }

    #[test]
    fn taxonomy_rows() {
        let edges = read_taxonomy("# c\nroot\tA\nA\tB\n".as_bytes()).unwrap();
        assert_eq!(edges.len(), 2);
        assert!(matches!(
            read_taxonomy("root\n".as_bytes()),
            Err(IngestError::WrongColumnCount { line: 1, .. })
        ));
    }
}
