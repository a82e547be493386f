//! Truncated uniform random walks over the taxonomy, read as undirected.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmbeddingError;
use crate::store::TaxonomyGraph;
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    /// Nodes per walk, including the start node.
    pub walk_length: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 40,
            walk_length: 20,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.walks_per_node < 1 {
            return Err(EmbeddingError::InvalidConfig("walks_per_node must be >= 1".into()));
        }
        if self.walk_length < 2 {
            return Err(EmbeddingError::InvalidConfig("walk_length must be >= 2".into()));
        }
        Ok(())
    }
}

/// Generates `walks_per_node` walks from every node.
///
/// Walks are emitted round by round; within a round the start nodes are
/// visited in a seeded random order. Each walk draws from its own RNG stream
/// derived from `(seed, round, node)`, so the output does not depend on how
/// many threads run it. A walk stops early only at an isolated node.
pub fn generate_walks(
    graph: &TaxonomyGraph,
    cfg: &WalkConfig,
) -> Result<Vec<Vec<String>>, EmbeddingError> {
    cfg.validate()?;
    if graph.is_empty() {
        return Err(EmbeddingError::EmptyGraph);
    }
    let (ids, adjacency) = graph.undirected_adjacency();
    let mut walks = Vec::with_capacity(ids.len() * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        let mut order: Vec<usize> = (0..ids.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, round as u64, u64::MAX));
        order.shuffle(&mut shuffle_rng);
        let batch: Vec<Vec<String>> = order
            .par_iter()
            .map(|&start| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, round as u64, start as u64));
                let mut walk = Vec::with_capacity(cfg.walk_length);
                let mut current = start;
                walk.push(ids[current].clone());
                while walk.len() < cfg.walk_length {
                    let neighbours = &adjacency[current];
                    if neighbours.is_empty() {
                        break;
                    }
                    current = neighbours[rng.gen_range(0..neighbours.len())];
                    walk.push(ids[current].clone());
                }
                walk
            })
            .collect();
        walks.extend(batch);
    }
    Ok(walks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(edges: &[(&str, &str)]) -> TaxonomyGraph {
        TaxonomyGraph::from_edges(edges.iter().map(|(a, b)| (a.to_string(), b.to_string()))).unwrap()
    }

    fn cfg(walks_per_node: usize, walk_length: usize, seed: u64) -> WalkConfig {
        WalkConfig {
            walks_per_node,
            walk_length,
            seed,
        }
    }

    #[test]
    fn steps_follow_edges() {
        let g = graph(&[("r", "a"), ("r", "b"), ("a", "c"), ("a", "d"), ("b", "e")]);
        let walks = generate_walks(&g, &cfg(10, 8, 3)).unwrap();
        assert_eq!(walks.len(), 6 * 10);
        for w in &walks {
            assert_eq!(w.len(), 8);
            for s in w.windows(2) {
                assert!(g.has_edge(&s[0], &s[1]) || g.has_edge(&s[1], &s[0]));
            }
        }
    }

    #[test]
    fn two_node_graph_alternates() {
        let g = graph(&[("A", "B")]);
        let walks = generate_walks(&g, &cfg(3, 4, 11)).unwrap();
        for w in walks.iter().filter(|w| w[0] == "A") {
            assert_eq!(w, &["A", "B", "A", "B"]);
        }
    }

    #[test]
    fn isolated_node_walk_is_single() {
        let nodes = [("x".to_string(), "x".to_string())].into_iter().collect();
        let g = TaxonomyGraph::new(nodes, []).unwrap();
        let walks = generate_walks(&g, &cfg(2, 5, 0)).unwrap();
        assert_eq!(walks, vec![vec!["x".to_string()]; 2]);
    }

    #[test]
    fn seeded_determinism() {
        let g = graph(&[("r", "a"), ("r", "b"), ("a", "c"), ("b", "d")]);
        assert_eq!(
            generate_walks(&g, &cfg(5, 6, 42)).unwrap(),
            generate_walks(&g, &cfg(5, 6, 42)).unwrap()
        );
        assert_ne!(
            generate_walks(&g, &cfg(5, 6, 42)).unwrap(),
            generate_walks(&g, &cfg(5, 6, 43)).unwrap()
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            generate_walks(&TaxonomyGraph::default(), &WalkConfig::default()),
            Err(EmbeddingError::EmptyGraph)
        ));
        let g = graph(&[("A", "B")]);
        assert!(matches!(
            generate_walks(&g, &cfg(1, 1, 0)),
            Err(EmbeddingError::InvalidConfig(_))
        ));
    }

    #[test]
    fn long_walks_cover_every_edge() {
        // depth 3 tree; walk_length >= 2 * depth, 10 walks per node
        let g = graph(&[
            ("r", "a"),
            ("r", "b"),
            ("a", "a1"),
            ("a", "a2"),
            ("b", "b1"),
            ("a1", "x"),
            ("b1", "y"),
            ("b1", "z"),
        ]);
        let walks = generate_walks(&g, &cfg(10, 6, 5)).unwrap();
        for (p, c) in g.edges() {
            assert!(
                walks.iter().any(|w| w.windows(2).any(|s| (s[0] == p && s[1] == c) || (s[0] == c && s[1] == p))),
                "edge {p}->{c} never walked"
            );
        }
    }
}
