//! Local explanation of graph classifications by edge perturbation.
//!
//! A subject's binarized graph is perturbed by randomly dropping present
//! edges; the classifier is queried on every perturbed copy (node features
//! recomputed each time) and a weighted ridge regression from edge-presence
//! masks to predicted probabilities yields one coefficient per edge: its
//! local contribution to the decision. Coefficients aggregate to node
//! scores, which threshold into the node sets implicated for each group.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::Atlas;
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::seeding::derive;
use crate::table;

/// Which endpoint of an edge collects its coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiMode {
    /// Sum over a node's outgoing edges (row sums).
    Outgoing,
    /// Sum over a node's incoming edges (column sums).
    Incoming,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LimeParams {
    pub n_samples: usize,
    /// Kernel width for exp(−d²/width²) on the removed-edge fraction d;
    /// None picks 0.25·√(#edges explained).
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub roi_mode: RoiMode,
    /// (positive, negative) node-score thresholds.
    pub thresholds: (f64, f64),
    /// Cap on edges perturbed at once; beyond it only the strongest edges
    /// by |weight| are explained and the rest stay fixed.
    pub max_edges: usize,
}

impl Default for LimeParams {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: None,
            ridge: 1e-3,
            roi_mode: RoiMode::Outgoing,
            thresholds: (0.02, -0.02),
            max_edges: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationMap {
    /// N×N edge coefficients; zero off the instance's edge support.
    pub edge_coefficients: DMatrix<f64>,
    pub intercept: f64,
    /// Edges that were actually perturbed (row, column).
    pub explained_edges: Vec<(usize, usize)>,
    pub roi_scores: Vec<f64>,
    pub selected_stroke: Vec<usize>,
    pub selected_control: Vec<usize>,
    /// Weighted R² of the local linear fit.
    pub fidelity: f64,
    /// Set when every perturbed prediction was identical; coefficients
    /// are all zero and fidelity is reported as 1.
    pub zero_variance: bool,
}

/// Edges to explain: all of them, or the `max_edges` strongest by
/// |weight| (ties broken by index for determinism).
fn explained_edges(graph: &DirectedGraph, max_edges: usize) -> Vec<(usize, usize)> {
    let mut edges = graph.edges();
    if edges.len() > max_edges {
        let adj = graph.adjacency();
        edges.sort_by(|&a, &b| {
            adj[b]
                .abs()
                .partial_cmp(&adj[a].abs())
                .expect("finite weights")
                .then(a.cmp(&b))
        });
        edges.truncate(max_edges);
        edges.sort_unstable();
    }
    edges
}

/// Rebuilds the instance graph with the masked-out edges removed; kept
/// edges carry their original weights bit for bit.
fn masked_graph(instance: &DirectedGraph, edges: &[(usize, usize)], mask: &[bool]) -> DirectedGraph {
    let mut adjacency = instance.adjacency().clone();
    for (&(i, j), &keep) in edges.iter().zip(mask.iter()) {
        if !keep {
            adjacency[(i, j)] = 0.0;
        }
    }
    DirectedGraph::new(adjacency, instance.node_labels().to_vec())
        .expect("masking preserves graph validity")
}

/// Weighted ridge fit of predictions on mask vectors. Returns
/// (intercept, coefficients, fidelity).
fn ridge_fit(
    masks: &[Vec<bool>],
    y: &[f64],
    weights: &[f64],
    ridge: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let n = masks.len();
    let e = masks[0].len();
    let d = e + 1;
    let x = DMatrix::from_fn(n, d, |r, c| {
        if c == 0 {
            1.0
        } else {
            f64::from(u8::from(masks[r][c - 1]))
        }
    });
    let w = DVector::from_row_slice(weights);
    let xw = DMatrix::from_fn(d, n, |r, c| x[(c, r)] * w[c]);
    let mut gram = &xw * &x;
    for i in 1..d {
        gram[(i, i)] += ridge;
    }
    let rhs = &xw * DVector::from_row_slice(y);
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::numerical("ridge normal equations are not positive definite"))?;
    let beta = chol.solve(&rhs);
    let fitted = &x * &beta;
    let w_total: f64 = weights.iter().sum();
    let y_mean: f64 = y.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / w_total;
    let ss_res: f64 = (0..n).map(|i| weights[i] * (y[i] - fitted[i]).powi(2)).sum();
    let ss_tot: f64 = (0..n).map(|i| weights[i] * (y[i] - y_mean).powi(2)).sum();
    let fidelity = 1.0 - ss_res / ss_tot;
    Ok((beta[0], beta.as_slice()[1..].to_vec(), fidelity))
}

/// Explains one classification locally: perturb edges, query the
/// classifier, fit a weighted linear surrogate, aggregate to node scores.
pub fn lime_explain<F>(
    predict: F,
    instance: &DirectedGraph,
    params: &LimeParams,
    seed: u64,
) -> Result<ExplanationMap>
where
    F: Fn(&DirectedGraph) -> Result<f64> + Sync,
{
    let edges = explained_edges(instance, params.max_edges);
    if edges.is_empty() {
        return Err(Error::argument("instance graph has no edges to explain"));
    }
    if params.n_samples < 10 * edges.len() {
        return Err(Error::argument(format!(
            "{} samples for {} edges; need at least 10 per edge",
            params.n_samples,
            edges.len()
        )));
    }
    if params.ridge <= 0.0 || !params.ridge.is_finite() {
        return Err(Error::argument("ridge penalty must be positive"));
    }
    let e = edges.len();
    let width = match params.kernel_width {
        Some(w) if w > 0.0 && w.is_finite() => w,
        Some(w) => return Err(Error::argument(format!("kernel width {w} must be positive"))),
        None => 0.25 * (e as f64).sqrt(),
    };
    // one deterministic mask-generation pass, then parallel evaluation
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "edge-masks", 0));
    let masks: Vec<Vec<bool>> = (0..params.n_samples)
        .map(|_| (0..e).map(|_| rng.random_range(0..2u8) == 0).collect())
        .collect();
    let y: Vec<f64> = masks
        .par_iter()
        .enumerate()
        .map(|(i, mask)| {
            let p = predict(&masked_graph(instance, &edges, mask))?;
            if !p.is_finite() {
                return Err(Error::numerical(format!(
                    "classifier returned a non-finite prediction for perturbation sample {i}"
                )));
            }
            Ok(p)
        })
        .collect::<Result<_>>()?;
    let n = instance.n_nodes();
    let finish = |coefficients: DMatrix<f64>, intercept: f64, fidelity: f64, zero_variance: bool| {
        let roi_scores = aggregate_roi(&coefficients, params.roi_mode);
        let (selected_stroke, selected_control) =
            threshold_rois(&roi_scores, params.thresholds.0, params.thresholds.1)?;
        Ok(ExplanationMap {
            edge_coefficients: coefficients,
            intercept,
            explained_edges: edges.clone(),
            roi_scores,
            selected_stroke,
            selected_control,
            fidelity,
            zero_variance,
        })
    };
    let constant = y.iter().all(|&v| v == y[0]);
    if constant {
        return finish(DMatrix::zeros(n, n), y[0], 1.0, true);
    }
    let weights: Vec<f64> = masks
        .iter()
        .map(|m| {
            let removed = m.iter().filter(|&&keep| !keep).count() as f64 / e as f64;
            (-(removed * removed) / (width * width)).exp()
        })
        .collect();
    let (intercept, coefs, fidelity) = ridge_fit(&masks, &y, &weights, params.ridge)?;
    let mut coefficients = DMatrix::zeros(n, n);
    for (&(i, j), &c) in edges.iter().zip(coefs.iter()) {
        coefficients[(i, j)] = c;
    }
    finish(coefficients, intercept, fidelity, false)
}

/// Collapses edge coefficients to one score per node.
pub fn aggregate_roi(coefficients: &DMatrix<f64>, mode: RoiMode) -> Vec<f64> {
    let n = coefficients.nrows();
    (0..n)
        .map(|v| match mode {
            RoiMode::Outgoing => coefficients.row(v).sum(),
            RoiMode::Incoming => coefficients.column(v).sum(),
        })
        .collect()
}

/// Splits nodes by score: above `pos` into the stroke set, below `neg`
/// into the control set. Disjoint whenever pos > neg.
pub fn threshold_rois(scores: &[f64], pos: f64, neg: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if pos <= neg {
        return Err(Error::argument(format!(
            "positive threshold {pos} must exceed negative threshold {neg}"
        )));
    }
    let stroke = (0..scores.len()).filter(|&v| scores[v] > pos).collect();
    let control = (0..scores.len()).filter(|&v| scores[v] < neg).collect();
    Ok((stroke, control))
}

/// Histogram of network memberships among the selected nodes.
pub fn map_to_networks(nodes: &[usize], atlas: &Atlas) -> Result<BTreeMap<String, usize>> {
    let mut histogram = BTreeMap::new();
    for &node in nodes {
        let entry = atlas.entry(node).map_err(|_| {
            Error::data(format!("node {node} is not mapped by the atlas"))
        })?;
        *histogram.entry(entry.network.clone()).or_insert(0) += 1;
    }
    Ok(histogram)
}

/// CSV of (source, target, coefficient) triples over the explained edges.
pub fn save_edge_coefficients(map: &ExplanationMap, path: &Path) -> Result<()> {
    let mut out = String::from("source,target,coefficient\n");
    for &(i, j) in &map.explained_edges {
        out.push_str(&format!("{i},{j},{}\n", table::fmt_f64(map.edge_coefficients[(i, j)])));
    }
    write_file(path, &out)
}

/// CSV of per-node scores with the selection verdict.
pub fn save_roi_scores(map: &ExplanationMap, path: &Path) -> Result<()> {
    let mut out = String::from("node,score,selected_as\n");
    for (v, &score) in map.roi_scores.iter().enumerate() {
        let selected = if map.selected_stroke.contains(&v) {
            "stroke"
        } else if map.selected_control.contains(&v) {
            "control"
        } else {
            "none"
        };
        out.push_str(&format!("{v},{},{selected}\n", table::fmt_f64(score)));
    }
    write_file(path, &out)
}

pub fn save_network_histogram(histogram: &BTreeMap<String, usize>, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(histogram)
        .map_err(|e| Error::data(format!("histogram serialization failed: {e}")))?;
    write_file(path, &json)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}
