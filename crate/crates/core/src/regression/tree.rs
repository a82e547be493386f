//! CART regression trees with squared-error splits.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RegressionError;
use crate::util::stable_mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "NodeRepr", into = "NodeRepr")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

// `[value]` or `[feature, threshold, left, right]`
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRepr {
    Leaf([f64; 1]),
    Split(usize, f64, usize, usize),
}

impl From<NodeRepr> for Node {
    fn from(r: NodeRepr) -> Self {
        match r {
            NodeRepr::Leaf([value]) => Node::Leaf { value },
            NodeRepr::Split(feature, threshold, left, right) => Node::Split {
                feature,
                threshold,
                left,
                right,
            },
        }
    }
}

impl From<Node> for NodeRepr {
    fn from(n: Node) -> Self {
        match n {
            Node::Leaf { value } => NodeRepr::Leaf([value]),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => NodeRepr::Split(feature, threshold, left, right),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Candidate features examined per node. Features that are constant
    /// within a node do not count towards this budget.
    pub features_per_split: usize,
}

/// Nodes stored flat; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.score > other.score
            || (self.score == other.score
                && (self.feature < other.feature
                    || (self.feature == other.feature && self.threshold < other.threshold)))
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

fn best_split(
    x: &[Vec<f64>],
    y: &[f64],
    samples: &[usize],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Option<Candidate> {
    let n = samples.len();
    let cols = x[samples[0]].len();
    let total: f64 = samples.iter().map(|&i| y[i]).sum();
    let sumsq: f64 = samples.iter().map(|&i| y[i] * y[i]).sum();
    let parent = total * total / n as f64;

    let mut features: Vec<usize> = (0..cols).collect();
    features.shuffle(rng);
    let mut sorted = samples.to_vec();
    let mut best: Option<Candidate> = None;
    let mut examined = 0;
    for f in features {
        if examined >= params.features_per_split {
            break;
        }
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        if x[sorted[0]][f] == x[sorted[n - 1]][f] {
            continue;
        }
        examined += 1;
        let mut left_sum = 0.0;
        for i in 1..n {
            left_sum += y[sorted[i - 1]];
            let (lo, hi) = (x[sorted[i - 1]][f], x[sorted[i]][f]);
            if lo == hi || i < params.min_samples_leaf || n - i < params.min_samples_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let cand = Candidate {
                score: left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64,
                feature: f,
                threshold: midpoint(lo, hi),
            };
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }
    }
    best.filter(|b| b.score - parent > 1e-12 * sumsq)
}

impl RegressionTree {
    /// Grows a tree on the rows listed in `samples` (repeats allowed).
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        samples: Vec<usize>,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, RegressionError> {
        if samples.is_empty() {
            return Err(RegressionError::InsufficientData { needed: 1, got: 0 });
        }
        if params.min_samples_leaf == 0 || params.features_per_split == 0 {
            return Err(RegressionError::InvalidParams(
                "min_samples_leaf and features_per_split must be >= 1".into(),
            ));
        }
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stack = vec![(0usize, samples, 0usize)];
        while let Some((id, idx, depth)) = stack.pop() {
            let value = stable_mean(idx.iter().map(|&i| y[i])).expect("nonempty node");
            let splittable = idx.len() >= 2 * params.min_samples_leaf
                && params.max_depth.is_none_or(|d| depth < d)
                && idx.iter().any(|&i| y[i] != y[idx[0]]);
            let split = if splittable {
                best_split(x, y, &idx, params, rng)
            } else {
                None
            };
            match split {
                None => nodes[id] = Node::Leaf { value },
                Some(c) => {
                    let (left, right): (Vec<usize>, Vec<usize>) =
                        idx.into_iter().partition(|&i| x[i][c.feature] <= c.threshold);
                    let (l, r) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[id] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: l,
                        right: r,
                    };
                    stack.push((r, right, depth + 1));
                    stack.push((l, left, depth + 1));
                }
            }
        }
        Ok(RegressionTree { nodes })
    }

    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, RegressionError> {
        let tree = RegressionTree { nodes };
        tree.check(usize::MAX)?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            deepest = deepest.max(d);
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        deepest
    }

    /// Verifies that child links point forward and splits use columns below
    /// `columns`; used when loading untrusted model files.
    pub fn check(&self, columns: usize) -> Result<(), RegressionError> {
        if self.nodes.is_empty() {
            return Err(RegressionError::Format("empty tree".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(RegressionError::Format(format!("node {i}: non-finite leaf")));
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= columns || !threshold.is_finite() {
                        return Err(RegressionError::Format(format!("node {i}: bad split")));
                    }
                    if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(RegressionError::Format(format!("node {i}: bad child index")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
