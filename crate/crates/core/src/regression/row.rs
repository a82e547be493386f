//! Pair feature rows, the feature layout, and the `features.tsv` format.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RegressionError;

/// Bumped whenever the canonical feature order or column semantics change.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

/// The seven pair features, declared in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "MF_sider")]
    Sider,
    #[serde(rename = "MF_target")]
    Target,
    #[serde(rename = "MF_mechanism")]
    Mechanism,
    #[serde(rename = "MF_pe")]
    PhysiologicEffect,
    #[serde(rename = "HF")]
    Hierarchy,
    #[serde(rename = "SF_ksts")]
    Ksts,
    #[serde(rename = "SF_textemb")]
    TextEmbedding,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 7] = [
        FeatureKind::Sider,
        FeatureKind::Target,
        FeatureKind::Mechanism,
        FeatureKind::PhysiologicEffect,
        FeatureKind::Hierarchy,
        FeatureKind::Ksts,
        FeatureKind::TextEmbedding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Sider => "MF_sider",
            FeatureKind::Target => "MF_target",
            FeatureKind::Mechanism => "MF_mechanism",
            FeatureKind::PhysiologicEffect => "MF_pe",
            FeatureKind::Hierarchy => "HF",
            FeatureKind::Ksts => "SF_ksts",
            FeatureKind::TextEmbedding => "SF_textemb",
        }
    }

    /// Expands a feature name or one of the group names `MF`, `HF`, `SF`.
    pub fn expand(name: &str) -> Option<Vec<FeatureKind>> {
        match name {
            "MF" => Some(FeatureKind::ALL[..4].to_vec()),
            "SF" => Some(FeatureKind::ALL[5..].to_vec()),
            _ => name.parse().ok().map(|k| vec![k]),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = RegressionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| RegressionError::UnknownFeature(s.to_string()))
    }
}

/// A nonempty set of enabled features, always held in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureKind>", into = "Vec<FeatureKind>")]
pub struct FeatureLayout(Vec<FeatureKind>);

impl FeatureLayout {
    pub fn new(kinds: impl IntoIterator<Item = FeatureKind>) -> Result<Self, RegressionError> {
        let mut kinds: Vec<FeatureKind> = kinds.into_iter().collect();
        kinds.sort();
        kinds.dedup();
        if kinds.is_empty() {
            return Err(RegressionError::EmptyLayout);
        }
        Ok(FeatureLayout(kinds))
    }

    pub fn full() -> Self {
        FeatureLayout(FeatureKind::ALL.to_vec())
    }

    /// Parses names such as `["MF", "HF"]` or `["MF_sider", "SF_ksts"]`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, RegressionError> {
        let mut kinds = Vec::new();
        for n in names {
            let n = n.as_ref().trim();
            kinds.extend(FeatureKind::expand(n).ok_or_else(|| RegressionError::UnknownFeature(n.to_string()))?);
        }
        FeatureLayout::new(kinds)
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Value columns plus one mask column per feature.
    pub fn columns(&self) -> usize {
        2 * self.0.len()
    }

    pub fn contains(&self, kind: FeatureKind) -> bool {
        self.0.contains(&kind)
    }

    pub fn position(&self, kind: FeatureKind) -> Option<usize> {
        self.0.iter().position(|&k| k == kind)
    }

    pub fn without(&self, kind: FeatureKind) -> Result<Self, RegressionError> {
        FeatureLayout::new(self.0.iter().copied().filter(|&k| k != kind))
    }

    pub fn with(&self, kind: FeatureKind) -> Self {
        FeatureLayout::new(self.0.iter().copied().chain([kind])).expect("nonempty")
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.0.iter().map(|k| k.name()).collect()
    }
}

impl fmt::Display for FeatureLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join("+"))
    }
}

impl TryFrom<Vec<FeatureKind>> for FeatureLayout {
    type Error = RegressionError;

    fn try_from(kinds: Vec<FeatureKind>) -> Result<Self, Self::Error> {
        let layout = FeatureLayout::new(kinds.iter().copied())?;
        if layout.0 != kinds {
            return Err(RegressionError::Format("feature layout is not in canonical order".into()));
        }
        Ok(layout)
    }
}

impl From<FeatureLayout> for Vec<FeatureKind> {
    fn from(layout: FeatureLayout) -> Self {
        layout.0
    }
}

/// One drug pair: a value per enabled feature (`None` when missing) and an
/// optional gold score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatureRow {
    pub drug_a: String,
    pub drug_b: String,
    pub features: Vec<Option<f64>>,
    pub gold: Option<f64>,
}

impl PairFeatureRow {
    pub fn new(drug_a: impl Into<String>, drug_b: impl Into<String>, features: Vec<Option<f64>>, gold: Option<f64>) -> Self {
        PairFeatureRow {
            drug_a: drug_a.into(),
            drug_b: drug_b.into(),
            features,
            gold,
        }
    }

    pub fn missing_mask(&self) -> Vec<bool> {
        self.features.iter().map(Option::is_none).collect()
    }

    pub fn contains(&self, drug: &str) -> bool {
        self.drug_a == drug || self.drug_b == drug
    }

    /// Restricts the row from layout `from` to the subset `to`.
    pub fn project(&self, from: &FeatureLayout, to: &FeatureLayout) -> Result<Self, RegressionError> {
        if self.features.len() != from.len() {
            return Err(RegressionError::DimensionMismatch {
                expected: from.len(),
                found: self.features.len(),
            });
        }
        let features = to
            .kinds()
            .iter()
            .map(|&k| {
                from.position(k)
                    .map(|i| self.features[i])
                    .ok_or_else(|| RegressionError::LayoutMismatch {
                        expected: to.to_string(),
                        found: from.to_string(),
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(PairFeatureRow {
            features,
            ..self.clone()
        })
    }
}

fn write_value<W: Write>(w: &mut W, v: Option<f64>) -> io::Result<()> {
    match v {
        Some(x) => write!(w, "\t{x}"),
        None => write!(w, "\tNA"),
    }
}

/// Writes rows as TSV. The first line is a `#` comment naming the columns,
/// which is how the layout travels with the file.
pub fn write_features<W: Write>(layout: &FeatureLayout, rows: &[PairFeatureRow], mut w: W) -> io::Result<()> {
    write!(w, "#drug_a\tdrug_b")?;
    for name in layout.names() {
        write!(w, "\t{name}")?;
    }
    writeln!(w, "\tgold")?;
    for row in rows {
        write!(w, "{}\t{}", row.drug_a, row.drug_b)?;
        for &v in &row.features {
            write_value(&mut w, v)?;
        }
        write_value(&mut w, row.gold)?;
        writeln!(w)?;
    }
    Ok(())
}

fn parse_value(field: &str, line: usize) -> Result<Option<f64>, RegressionError> {
    if field == "NA" {
        return Ok(None);
    }
    let v: f64 = field
        .parse()
        .map_err(|_| RegressionError::Format(format!("line {line}: bad number {field:?}")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(RegressionError::Format(format!("line {line}: value {v} outside [0, 1]")));
    }
    Ok(Some(v))
}

/// Reads a feature table. Without a header the full seven-feature layout is
/// assumed.
pub fn read_features<R: BufRead>(reader: R) -> Result<(FeatureLayout, Vec<PairFeatureRow>), RegressionError> {
    let mut layout: Option<FeatureLayout> = None;
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| RegressionError::Io(e.to_string()))?;
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('#') {
            if layout.is_none() && rows.is_empty() && header.starts_with("drug_a") {
                let cols: Vec<&str> = header.split('\t').collect();
                if cols.len() < 4 || cols[1] != "drug_b" || cols[cols.len() - 1] != "gold" {
                    return Err(RegressionError::Format(format!("line {lineno}: malformed header")));
                }
                let kinds = cols[2..cols.len() - 1]
                    .iter()
                    .map(|c| c.parse())
                    .collect::<Result<Vec<FeatureKind>, _>>()?;
                layout = Some(FeatureLayout::try_from(kinds)?);
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let layout = layout.get_or_insert_with(FeatureLayout::full);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != layout.len() + 3 {
            return Err(RegressionError::Format(format!(
                "line {lineno}: expected {} columns, found {}",
                layout.len() + 3,
                cols.len()
            )));
        }
        let features = cols[2..cols.len() - 1]
            .iter()
            .map(|c| parse_value(c, lineno))
            .collect::<Result<_, _>>()?;
        rows.push(PairFeatureRow::new(
            cols[0],
            cols[1],
            features,
            parse_value(cols[cols.len() - 1], lineno)?,
        ));
    }
    Ok((layout.unwrap_or_else(FeatureLayout::full), rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_canonical() {
        let l = FeatureLayout::new([FeatureKind::Ksts, FeatureKind::Sider, FeatureKind::Ksts]).unwrap();
        assert_eq!(l.kinds(), &[FeatureKind::Sider, FeatureKind::Ksts]);
        assert_eq!(l.columns(), 4);
        assert_eq!(FeatureLayout::full().columns(), 14);
        assert!(matches!(FeatureLayout::new([]), Err(RegressionError::EmptyLayout)));
        let grouped = FeatureLayout::from_names(&["SF", "HF", "MF_pe"]).unwrap();
        assert_eq!(grouped.names(), vec!["MF_pe", "HF", "SF_ksts", "SF_textemb"]);
        assert!(FeatureLayout::from_names(&["XF"]).is_err());
    }

    #[test]
    fn layout_json_rejects_reordering() {
        let json = serde_json::to_string(&FeatureLayout::full()).unwrap();
        assert_eq!(
            json,
            r#"["MF_sider","MF_target","MF_mechanism","MF_pe","HF","SF_ksts","SF_textemb"]"#
        );
        assert!(serde_json::from_str::<FeatureLayout>(r#"["HF","MF_sider"]"#).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let layout = FeatureLayout::from_names(&["MF_sider", "HF"]).unwrap();
        let rows = vec![
            PairFeatureRow::new("a", "b", vec![Some(0.1 + 0.2), None], Some(0.75)),
            PairFeatureRow::new("a", "c", vec![Some(1.0), Some(0.0)], None),
        ];
        let mut buf = Vec::new();
        write_features(&layout, &rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#drug_a\tdrug_b\tMF_sider\tHF\tgold\n"));
        assert!(text.contains("a\tb\t0.30000000000000004\tNA\t0.75\n"));
        let (l2, r2) = read_features(&buf[..]).unwrap();
        assert_eq!(l2, layout);
        assert_eq!(r2, rows);
        assert_eq!(r2[0].missing_mask(), vec![false, true]);
    }

    #[test]
    fn tsv_errors() {
        assert!(read_features("a\tb\t0.5\n".as_bytes()).is_err());
        let bad = "#drug_a\tdrug_b\tHF\tgold\na\tb\t1.5\t0.2\n";
        assert!(read_features(bad.as_bytes()).is_err());
    }

    #[test]
    fn projection() {
        let full = FeatureLayout::full();
        let row = PairFeatureRow::new("a", "b", (0..7).map(|i| Some(i as f64 / 10.0)).collect(), None);
        let sub = FeatureLayout::new([FeatureKind::Hierarchy, FeatureKind::Target]).unwrap();
        assert_eq!(row.project(&full, &sub).unwrap().features, vec![Some(0.1), Some(0.4)]);
        assert!(row.project(&sub, &full).is_err());
    }
}
