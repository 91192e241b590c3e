//! Random forest of depth-limited trees over flattened feature vectors.
//!
//! Each tree is grown on a bootstrap resample. At every split a small
//! candidate subset of features is drawn without replacement and the
//! class-weighted Gini impurity decides the threshold; splits that do not
//! improve impurity by more than a strictly positive floor become leaves,
//! so constant features can never carry a split. Prediction averages the
//! leaf class-1 probabilities over trees.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::derive;

/// Minimum Gini improvement a split must achieve; ties and zero-gain
/// splits collapse to leaves.
const GAIN_FLOOR: f64 = 1e-12;

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features drawn (without replacement) at each split.
    pub max_features: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 2,
            max_features: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Tree {
    /// Weighted fraction of class 1 among the training rows that reached
    /// this leaf.
    Leaf { p1: f64 },
    Split {
        feature: usize,
        threshold: f64,
        /// Taken when value ≤ threshold.
        left: Box<Tree>,
        /// Taken when value > threshold.
        right: Box<Tree>,
    },
}

impl Tree {
    pub fn depth(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 0,
            Tree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_splits(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 0,
            Tree::Split { left, right, .. } => 1 + left.n_splits() + right.n_splits(),
        }
    }

    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Tree::Leaf { p1 } => *p1,
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }

    /// Whether any split in this tree tests `feature`.
    pub fn uses_feature(&self, feature: usize) -> bool {
        match self {
            Tree::Leaf { .. } => false,
            Tree::Split {
                feature: f,
                left,
                right,
                ..
            } => *f == feature || left.uses_feature(feature) || right.uses_feature(feature),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// True when every tree degenerated to a single majority leaf
    /// (e.g. all features constant). Predictions are still valid.
    pub all_leaves: bool,
}

impl ForestModel {
    /// Mean leaf class-1 probability over trees for one feature row.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::argument(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.n_features
            )));
        }
        let total: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(total / self.trees.len() as f64)
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Weighted Gini impurity of a (w0, w1) class-mass pair.
fn gini(w0: f64, w1: f64) -> f64 {
    let total = w0 + w1;
    if total <= 0.0 {
        return 0.0;
    }
    let p0 = w0 / total;
    let p1 = w1 / total;
    1.0 - p0 * p0 - p1 * p1
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    weights: &'a [f64],
    max_features: usize,
    n_features: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn leaf(&self, rows: &[usize]) -> Tree {
        let mut w1 = 0.0;
        let mut total = 0.0;
        for &r in rows {
            total += self.weights[r];
            if self.y[r] {
                w1 += self.weights[r];
            }
        }
        let p1 = if total > 0.0 { w1 / total } else { 0.5 };
        Tree::Leaf { p1 }
    }

    fn node_masses(&self, rows: &[usize]) -> (f64, f64) {
        let mut w0 = 0.0;
        let mut w1 = 0.0;
        for &r in rows {
            if self.y[r] {
                w1 += self.weights[r];
            } else {
                w0 += self.weights[r];
            }
        }
        (w0, w1)
    }

    /// Best threshold on one feature, or None when all values tie.
    fn best_threshold(&self, rows: &[usize], feature: usize, parent_gini: f64) -> Option<BestSplit> {
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| {
            self.x[a][feature]
                .partial_cmp(&self.x[b][feature])
                .expect("finite feature values")
        });
        let (tot0, tot1) = self.node_masses(rows);
        let total = tot0 + tot1;
        let mut left0 = 0.0;
        let mut left1 = 0.0;
        let mut best: Option<BestSplit> = None;
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            if self.y[a] {
                left1 += self.weights[a];
            } else {
                left0 += self.weights[a];
            }
            let va = self.x[a][feature];
            let vb = self.x[b][feature];
            if va == vb {
                continue;
            }
            let wl = left0 + left1;
            let wr = total - wl;
            let child = (wl / total) * gini(left0, left1)
                + (wr / total) * gini(tot0 - left0, tot1 - left1);
            let gain = parent_gini - child;
            if gain > best.as_ref().map_or(GAIN_FLOOR, |s| s.gain) {
                best = Some(BestSplit {
                    feature,
                    threshold: 0.5 * (va + vb),
                    gain,
                });
            }
        }
        best
    }

    fn grow(&self, rows: &[usize], depth: usize, max_depth: usize, rng: &mut impl Rng) -> Tree {
        let (w0, w1) = self.node_masses(rows);
        let parent = gini(w0, w1);
        if depth >= max_depth || rows.len() < 2 || parent <= 0.0 {
            return self.leaf(rows);
        }
        let k = self.max_features.min(self.n_features);
        let candidates = sample(rng, self.n_features, k);
        let mut best: Option<BestSplit> = None;
        for feature in candidates {
            if let Some(split) = self.best_threshold(rows, feature, parent) {
                let better = match &best {
                    None => true,
                    Some(b) => split.gain > b.gain,
                };
                if better {
                    best = Some(split);
                }
            }
        }
        let Some(split) = best else {
            return self.leaf(rows);
        };
        let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
        for &r in rows {
            if self.x[r][split.feature] <= split.threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        Tree::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(&left_rows, depth + 1, max_depth, rng)),
            right: Box::new(self.grow(&right_rows, depth + 1, max_depth, rng)),
        }
    }
}

/// Train a forest on feature rows `x` and labels `y` (true = class 1).
/// `class_weights` are the per-sample masses (weight for class 0, class 1)
/// used by both the Gini criterion and the leaf probabilities.
pub fn rf_train(
    x: &[Vec<f64>],
    y: &[bool],
    class_weights: (f64, f64),
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    if x.is_empty() {
        return Err(Error::argument("empty training set"));
    }
    if x.len() != y.len() {
        return Err(Error::argument(format!(
            "{} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    let n_features = x[0].len();
    if n_features == 0 {
        return Err(Error::argument("rows have no features"));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != n_features {
            return Err(Error::argument(format!(
                "row {i} has {} features, expected {n_features}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument(format!("row {i} contains non-finite values")));
        }
    }
    if params.n_trees == 0 || params.max_features == 0 {
        return Err(Error::argument("n_trees and max_features must be positive"));
    }
    let n_pos = y.iter().filter(|&&l| l).count();
    let n_neg = y.len() - n_pos;
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::data(format!(
            "need at least 2 samples per class, got {n_pos} / {n_neg}"
        )));
    }
    if !(class_weights.0.is_finite() && class_weights.1.is_finite())
        || class_weights.0 <= 0.0
        || class_weights.1 <= 0.0
    {
        return Err(Error::argument("class weights must be positive and finite"));
    }
    let weights: Vec<f64> = y
        .iter()
        .map(|&l| if l { class_weights.1 } else { class_weights.0 })
        .collect();
    let builder = TreeBuilder {
        x,
        y,
        weights: &weights,
        max_features: params.max_features,
        n_features,
    };
    let n = x.len();
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "tree", t as u64));
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        trees.push(builder.grow(&rows, 0, params.max_depth, &mut rng));
    }
    let all_leaves = trees.iter().all(|t| matches!(t, Tree::Leaf { .. }));
    Ok(ForestModel {
        format_version: FOREST_FORMAT_VERSION,
        n_features,
        trees,
        all_leaves,
    })
}
