//! Validated in-memory knowledge store.
//!
//! Everything downstream (feature vectors, text index, walks) reads from a
//! [`Store`]. The store is immutable once built and can be shared freely
//! across threads.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum StoreError {
    #[error("duplicate drug id: {0}")]
    DuplicateDrugId(String),

    #[error("drug record with empty id")]
    EmptyDrugId,

    #[error("drug {drug} refers to missing taxonomy node {node}")]
    DanglingTaxonomyRef { drug: String, node: String },

    #[error("taxonomy edge {parent} -> {child} refers to an unknown node")]
    DanglingEdge { parent: String, child: String },

    #[error("taxonomy contains a cycle through node {0}")]
    CyclicTaxonomy(String),

    #[error("no drug matches {0:?}")]
    NotFound(String),

    #[error("name {query:?} matches several drugs: {}", matches.join(", "))]
    AmbiguousName { query: String, matches: Vec<String> },
}

/// The four set-valued annotation kinds attached to a drug.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationCategory {
    SideEffect,
    Target,
    Mechanism,
    PhysiologicEffect,
}

impl AnnotationCategory {
    pub const ALL: [AnnotationCategory; 4] = [
        AnnotationCategory::SideEffect,
        AnnotationCategory::Target,
        AnnotationCategory::Mechanism,
        AnnotationCategory::PhysiologicEffect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationCategory::SideEffect => "side_effect",
            AnnotationCategory::Target => "target",
            AnnotationCategory::Mechanism => "mechanism",
            AnnotationCategory::PhysiologicEffect => "physiologic_effect",
        }
    }
}

impl fmt::Display for AnnotationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnotationCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "side_effect" => Ok(AnnotationCategory::SideEffect),
            "target" => Ok(AnnotationCategory::Target),
            "mechanism" => Ok(AnnotationCategory::Mechanism),
            "physiologic_effect" => Ok(AnnotationCategory::PhysiologicEffect),
            other => Err(format!("unknown annotation category {other:?}")),
        }
    }
}

/// One drug with its description and annotation sets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DrugRecord {
    pub id: String,
    pub name: String,
    pub description: String,
    pub side_effects: BTreeSet<String>,
    pub targets: BTreeSet<String>,
    pub mechanisms: BTreeSet<String>,
    pub physiologic_effects: BTreeSet<String>,
    pub taxonomy_node: Option<String>,
}

impl DrugRecord {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        DrugRecord {
            id: id.into(),
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn annotations(&self, category: AnnotationCategory) -> &BTreeSet<String> {
        match category {
            AnnotationCategory::SideEffect => &self.side_effects,
            AnnotationCategory::Target => &self.targets,
            AnnotationCategory::Mechanism => &self.mechanisms,
            AnnotationCategory::PhysiologicEffect => &self.physiologic_effects,
        }
    }

    pub fn annotations_mut(&mut self, category: AnnotationCategory) -> &mut BTreeSet<String> {
        match category {
            AnnotationCategory::SideEffect => &mut self.side_effects,
            AnnotationCategory::Target => &mut self.targets,
            AnnotationCategory::Mechanism => &mut self.mechanisms,
            AnnotationCategory::PhysiologicEffect => &mut self.physiologic_effects,
        }
    }
}

/// Lowercased, whitespace-trimmed form under which annotation ids are stored.
pub fn normalize_annotation_id(raw: &str) -> String {
    raw.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub label: String,
    /// Number of drugs carrying this annotation.
    pub df: usize,
}

/// Per-category annotation labels and document frequencies over drugs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationCatalog {
    drug_count: usize,
    categories: BTreeMap<AnnotationCategory, BTreeMap<String, AnnotationEntry>>,
}

impl AnnotationCatalog {
    /// Builds a catalog by counting annotations over `drugs`.
    ///
    /// Annotation ids are expected to be normalized already; labels are taken
    /// from `labels` when present and fall back to the id.
    pub fn from_drugs<'a>(
        drugs: impl IntoIterator<Item = &'a DrugRecord>,
        labels: &HashMap<(AnnotationCategory, String), String>,
    ) -> Self {
        let mut catalog = AnnotationCatalog::default();
        for drug in drugs {
            catalog.drug_count += 1;
            for category in AnnotationCategory::ALL {
                let entries = catalog.categories.entry(category).or_default();
                for id in drug.annotations(category) {
                    entries
                        .entry(id.clone())
                        .or_insert_with(|| AnnotationEntry {
                            label: labels
                                .get(&(category, id.clone()))
                                .cloned()
                                .unwrap_or_else(|| id.clone()),
                            df: 0,
                        })
                        .df += 1;
                }
            }
        }
        catalog
    }

    /// Total number of drugs the frequencies were counted over.
    pub fn drug_count(&self) -> usize {
        self.drug_count
    }

    pub fn df(&self, category: AnnotationCategory, id: &str) -> Option<usize> {
        self.categories
            .get(&category)
            .and_then(|m| m.get(id))
            .map(|e| e.df)
    }

    pub fn entry(&self, category: AnnotationCategory, id: &str) -> Option<&AnnotationEntry> {
        self.categories.get(&category).and_then(|m| m.get(id))
    }

    pub fn entries(
        &self,
        category: AnnotationCategory,
    ) -> impl Iterator<Item = (&String, &AnnotationEntry)> {
        self.categories.get(&category).into_iter().flatten()
    }

    pub fn len(&self, category: AnnotationCategory) -> usize {
        self.categories.get(&category).map_or(0, BTreeMap::len)
    }
}

/// Concept hierarchy: nodes with labels and parent -> child edges.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaxonomyGraph {
    nodes: BTreeMap<String, String>,
    edges: BTreeSet<(String, String)>,
}

impl TaxonomyGraph {
    /// Builds a graph from explicit nodes and edges, rejecting unknown
    /// endpoints and cycles.
    pub fn new(
        nodes: BTreeMap<String, String>,
        edges: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, StoreError> {
        let edges: BTreeSet<_> = edges.into_iter().collect();
        for (parent, child) in &edges {
            if !nodes.contains_key(parent) || !nodes.contains_key(child) {
                return Err(StoreError::DanglingEdge {
                    parent: parent.clone(),
                    child: child.clone(),
                });
            }
        }
        let graph = TaxonomyGraph { nodes, edges };
        graph.check_acyclic()?;
        Ok(graph)
    }

    /// Builds a graph whose node set is the set of edge endpoints; labels
    /// default to the node id.
    pub fn from_edges(edges: impl IntoIterator<Item = (String, String)>) -> Result<Self, StoreError> {
        let edges: Vec<_> = edges.into_iter().collect();
        let mut nodes = BTreeMap::new();
        for (p, c) in &edges {
            nodes.entry(p.clone()).or_insert_with(|| p.clone());
            nodes.entry(c.clone()).or_insert_with(|| c.clone());
        }
        Self::new(nodes, edges)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.contains_key(node)
    }

    pub fn label(&self, node: &str) -> Option<&str> {
        self.nodes.get(node).map(String::as_str)
    }

    /// Node ids in sorted order.
    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    /// Parent -> child edges in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(p, c)| (p.as_str(), c.as_str()))
    }

    pub fn has_edge(&self, parent: &str, child: &str) -> bool {
        self.edges.contains(&(parent.to_string(), child.to_string()))
    }

    /// Nodes without parents.
    pub fn roots(&self) -> Vec<&str> {
        let children: BTreeSet<&str> = self.edges.iter().map(|(_, c)| c.as_str()).collect();
        self.nodes()
            .filter(|n| !children.contains(n))
            .collect()
    }

    /// Sorted node ids together with undirected, sorted, deduplicated
    /// neighbour index lists.
    pub fn undirected_adjacency(&self) -> (Vec<String>, Vec<Vec<usize>>) {
        let ids: Vec<String> = self.nodes.keys().cloned().collect();
        let index: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ids.len()];
        for (p, c) in &self.edges {
            let (pi, ci) = (index[p.as_str()], index[c.as_str()]);
            adj[pi].insert(ci);
            adj[ci].insert(pi);
        }
        let adj = adj.into_iter().map(|s| s.into_iter().collect()).collect();
        (ids, adj)
    }

    fn check_acyclic(&self) -> Result<(), StoreError> {
        // Kahn's algorithm; whatever is left unvisited lies on or behind a cycle.
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.keys().map(|n| (n.as_str(), 0)).collect();
        let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
        for (p, c) in &self.edges {
            *indegree.get_mut(c.as_str()).expect("validated endpoint") += 1;
            children.entry(p.as_str()).or_default().push(c.as_str());
        }
        let mut ready: Vec<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&n, _)| n)
            .collect();
        let mut visited = 0usize;
        while let Some(node) = ready.pop() {
            visited += 1;
            for &child in children.get(node).into_iter().flatten() {
                let d = indegree.get_mut(child).expect("validated endpoint");
                *d -= 1;
                if *d == 0 {
                    ready.push(child);
                }
            }
        }
        if visited == self.nodes.len() {
            Ok(())
        } else {
            let stuck = indegree
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(&n, _)| n.to_string())
                .unwrap_or_default();
            Err(StoreError::CyclicTaxonomy(stuck))
        }
    }
}

/// Immutable, validated collection of drugs plus derived annotation statistics.
#[derive(Debug, Clone)]
pub struct Store {
    drugs: Vec<DrugRecord>,
    by_id: HashMap<String, usize>,
    by_name: HashMap<String, Vec<usize>>,
    catalog: AnnotationCatalog,
    taxonomy: TaxonomyGraph,
}

/// Validates `drugs` against `taxonomy` and computes the annotation catalog.
///
/// Drugs are stored sorted by id, so the result does not depend on input
/// order. Drugs without a taxonomy attachment are kept.
pub fn build_store(drugs: Vec<DrugRecord>, taxonomy: TaxonomyGraph) -> Result<Store, StoreError> {
    let mut drugs = drugs;
    for d in &mut drugs {
        d.id = d.id.trim().to_string();
        if d.id.is_empty() {
            return Err(StoreError::EmptyDrugId);
        }
        d.taxonomy_node = d
            .taxonomy_node
            .take()
            .map(|n| n.trim().to_string())
            .filter(|n| !n.is_empty());
    }
    drugs.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = drugs.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(StoreError::DuplicateDrugId(w[0].id.clone()));
    }

    let mut labels = HashMap::new();
    for d in &mut drugs {
        if let Some(node) = &d.taxonomy_node {
            if !taxonomy.contains(node) {
                return Err(StoreError::DanglingTaxonomyRef {
                    drug: d.id.clone(),
                    node: node.clone(),
                });
            }
        }
        for category in AnnotationCategory::ALL {
            let raw = std::mem::take(d.annotations_mut(category));
            let mut normalized = BTreeSet::new();
            for r in raw {
                let id = normalize_annotation_id(&r);
                if id.is_empty() {
                    continue;
                }
                labels
                    .entry((category, id.clone()))
                    .or_insert_with(|| r.trim().to_string());
                normalized.insert(id);
            }
            *d.annotations_mut(category) = normalized;
        }
    }

    let catalog = AnnotationCatalog::from_drugs(&drugs, &labels);
    let by_id = drugs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.clone(), i))
        .collect();
    let mut by_name: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, d) in drugs.iter().enumerate() {
        by_name.entry(d.name.trim().to_lowercase()).or_default().push(i);
    }
    let unattached = drugs.iter().filter(|d| d.taxonomy_node.is_none()).count();
    if unattached > 0 {
        log::info!("{unattached} drug(s) have no taxonomy attachment; hierarchy feature will be missing for them");
    }

    Ok(Store {
        drugs,
        by_id,
        by_name,
        catalog,
        taxonomy,
    })
}

impl Store {
    /// Drugs sorted by id.
    pub fn drugs(&self) -> &[DrugRecord] {
        &self.drugs
    }

    pub fn len(&self) -> usize {
        self.drugs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drugs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DrugRecord> {
        self.by_id.get(id).map(|&i| &self.drugs[i])
    }

    /// Position of a drug in [`Store::drugs`].
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn catalog(&self) -> &AnnotationCatalog {
        &self.catalog
    }

    pub fn taxonomy(&self) -> &TaxonomyGraph {
        &self.taxonomy
    }

    /// Drug id -> taxonomy node for every attached drug.
    pub fn drug_leaves(&self) -> BTreeMap<&str, &str> {
        self.drugs
            .iter()
            .filter_map(|d| d.taxonomy_node.as_deref().map(|n| (d.id.as_str(), n)))
            .collect()
    }

    /// Looks a drug up by exact id, falling back to a unique
    /// case-insensitive name match.
    pub fn resolve(&self, id_or_name: &str) -> Result<&DrugRecord, StoreError> {
        let query = id_or_name.trim();
        if let Some(d) = self.get(query) {
            return Ok(d);
        }
        match self.by_name.get(&query.to_lowercase()).map(Vec::as_slice) {
            Some([i]) => Ok(&self.drugs[*i]),
            Some(many) if !many.is_empty() => Err(StoreError::AmbiguousName {
                query: query.to_string(),
                matches: many.iter().map(|&i| self.drugs[i].id.clone()).collect(),
            }),
            _ => Err(StoreError::NotFound(query.to_string())),
        }
    }
}

/// Free-function form of [`Store::resolve`].
pub fn resolve_drug<'s>(store: &'s Store, id_or_name: &str) -> Result<&'s DrugRecord, StoreError> {
    store.resolve(id_or_name)
}
