//! Gradient-boosted regression trees with squared-error loss.
//!
//! Plain first-order boosting: every tree is fit to the current residuals
//! with an exact greedy split search, leaves hold the mean residual, and
//! predictions are `base_score + learning_rate * sum(tree outputs)`.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Minimum variance reduction for a split to be taken. Also the margin by
/// which a later candidate must beat the current best, so near-ties go to
/// the earlier (feature, threshold) pair.
pub const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams { n_trees: 100, learning_rate: 0.1, max_depth: 5, min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    /// Rows with `x[feature] < threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A binary tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_features: usize,
}

impl GbtModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64, ModelError> {
        check_row(row, self.n_features)?;
        Ok(self.predict_unchecked(row))
    }

    fn predict_unchecked(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    /// Checks the structural invariants after loading.
    pub fn check(&self) -> Result<(), ModelError> {
        for tree in &self.trees {
            if tree.nodes.is_empty() {
                return Err(ModelError::Shape("empty tree".into()));
            }
            for node in &tree.nodes {
                if let Node::Split { feature, left, right, threshold } = *node {
                    if feature >= self.n_features
                        || left >= tree.nodes.len()
                        || right >= tree.nodes.len()
                        || !threshold.is_finite()
                    {
                        return Err(ModelError::Shape(format!("invalid split node {node:?}")));
                    }
                }
            }
            if tree.depth() > self.max_depth {
                return Err(ModelError::Shape(format!("tree deeper than {}", self.max_depth)));
            }
        }
        Ok(())
    }
}

fn check_row(row: &[f64], n_features: usize) -> Result<(), ModelError> {
    if row.len() != n_features {
        return Err(ModelError::DimensionMismatch { expected: (n_features, 0), got: (row.len(), 0) });
    }
    if row.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite(format!("feature row {row:?}")));
    }
    Ok(())
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Exact greedy search over all features and all midpoints between
/// consecutive distinct values. Gain is the reduction in squared error,
/// computed as `S_l^2/n_l + S_r^2/n_r - S^2/n` from prefix sums.
fn best_split(x: &[Vec<f64>], residuals: &[f64], rows: &[usize], min_leaf: usize) -> Option<BestSplit> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| residuals[r]).sum();
    let parent = total * total / n as f64;
    let n_features = x[rows[0]].len();
    let mut best: Option<BestSplit> = None;
    let mut sorted = rows.to_vec();
    for f in 0..n_features {
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for k in 1..n {
            left_sum += residuals[sorted[k - 1]];
            let (lo, hi) = (x[sorted[k - 1]][f], x[sorted[k]][f]);
            if lo >= hi || k < min_leaf || n - k < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64 - parent;
            let better = match &best {
                None => gain > MIN_GAIN,
                Some(b) => gain > b.gain + MIN_GAIN,
            };
            if better {
                best = Some(BestSplit { feature: f, threshold: midpoint(lo, hi), gain });
            }
        }
    }
    best
}

/// Midpoint of two distinct values that still separates them.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if lo < mid && mid <= hi {
        mid
    } else {
        hi
    }
}

fn grow(
    x: &[Vec<f64>],
    residuals: &[f64],
    rows: &[usize],
    depth: usize,
    params: &GbtParams,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    let mean = rows.iter().map(|&r| residuals[r]).sum::<f64>() / rows.len() as f64;
    nodes.push(Node::Leaf(mean));
    if depth >= params.max_depth || rows.len() < 2 {
        return id;
    }
    let Some(split) = best_split(x, residuals, rows, params.min_samples_leaf.max(1)) else {
        return id;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| x[r][split.feature] < split.threshold);
    let left = grow(x, residuals, &left_rows, depth + 1, params, nodes);
    let right = grow(x, residuals, &right_rows, depth + 1, params, nodes);
    nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
    id
}

/// Fits `params.n_trees` trees to the residuals of the running prediction.
pub fn gbt_train(x: &[Vec<f64>], y: &[f64], params: &GbtParams) -> Result<GbtModel, ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyInput("boosting data"));
    }
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if !(params.learning_rate.is_finite() && params.learning_rate > 0.0) {
        return Err(ModelError::Config(format!("learning rate {}", params.learning_rate)));
    }
    let n_features = x[0].len();
    for row in x {
        check_row(row, n_features)?;
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite(format!("target {bad}")));
    }
    let base_score = super::mean(y);
    let mut model = GbtModel {
        base_score,
        trees: Vec::with_capacity(params.n_trees),
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        n_features,
    };
    let mut pred = vec![base_score; y.len()];
    let rows: Vec<usize> = (0..y.len()).collect();
    for _ in 0..params.n_trees {
        let residuals: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let mut nodes = Vec::new();
        grow(x, &residuals, &rows, 0, params, &mut nodes);
        let tree = Tree { nodes };
        for (p, row) in pred.iter_mut().zip(x) {
            *p += params.learning_rate * tree.predict(row);
        }
        model.trees.push(tree);
    }
    Ok(model)
}
