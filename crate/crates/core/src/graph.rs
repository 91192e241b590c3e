//! Directed graphs from EC matrices and degree-profile node features.
//!
//! Feature layouts:
//!   LDP (10): in-degree, out-degree, then min/max/mean/std of the
//!   union-neighborhood's in-degrees and out-degrees.
//!   LTP (13): LDP plus mean betweenness of incident edges, mean Jaccard
//!   overlap of closed neighborhoods with each neighbor, and the local
//!   degree score (fraction of neighbors with strictly smaller total
//!   degree).

use nalgebra::DMatrix;
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::ec::EcMatrix;
use crate::error::{Error, Result};
use crate::stats;
use crate::table;

pub const LDP_FEATURE_NAMES: [&str; 10] = [
    "in_degree",
    "out_degree",
    "nbr_in_min",
    "nbr_in_max",
    "nbr_in_mean",
    "nbr_in_std",
    "nbr_out_min",
    "nbr_out_max",
    "nbr_out_mean",
    "nbr_out_std",
];

pub const LTP_FEATURE_NAMES: [&str; 13] = [
    "in_degree",
    "out_degree",
    "nbr_in_min",
    "nbr_in_max",
    "nbr_in_mean",
    "nbr_in_std",
    "nbr_out_min",
    "nbr_out_max",
    "nbr_out_mean",
    "nbr_out_std",
    "incident_betweenness_mean",
    "jaccard_mean",
    "local_degree_score",
];

/// Weighted digraph; a zero adjacency entry means no edge, so a score of
/// exactly 0 cannot carry an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    adjacency: DMatrix<f64>,
    node_labels: Vec<String>,
}

impl DirectedGraph {
    pub fn new(adjacency: DMatrix<f64>, node_labels: Vec<String>) -> Result<Self> {
        if adjacency.nrows() != adjacency.ncols() {
            return Err(Error::argument("adjacency must be square"));
        }
        let n = adjacency.nrows();
        if node_labels.len() != n {
            return Err(Error::argument(format!(
                "{} labels for {n} nodes",
                node_labels.len()
            )));
        }
        if adjacency.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("adjacency must be finite"));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::argument(format!("self-loop at node {i}")));
            }
        }
        Ok(DirectedGraph {
            adjacency,
            node_labels,
        })
    }

    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self> {
        let labels = (0..adjacency.nrows()).map(|i| format!("node_{i}")).collect();
        DirectedGraph::new(adjacency, labels)
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn node_labels(&self) -> &[String] {
        &self.node_labels
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[(from, to)] != 0.0
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn out_neighbors(&self, node: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&j| self.has_edge(node, j)).collect()
    }

    pub fn in_neighbors(&self, node: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&j| self.has_edge(j, node)).collect()
    }

    /// Union of in- and out-neighbors, ascending, never containing `node`.
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&j| j != node && (self.has_edge(node, j) || self.has_edge(j, node)))
            .collect()
    }

    pub fn reversed(&self) -> DirectedGraph {
        DirectedGraph {
            adjacency: self.adjacency.transpose(),
            node_labels: self.node_labels.clone(),
        }
    }
}

/// Node features with a fixed, named column order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureMatrix {
    pub values: DMatrix<f64>,
    pub feature_names: Vec<String>,
}

/// Thresholds a (typically standardized) EC matrix into a digraph: the
/// edge (x, y) survives iff |score| ≥ threshold, keeping the score as
/// weight.
pub fn binarize(ec: &EcMatrix, threshold: f64) -> Result<DirectedGraph> {
    if !threshold.is_finite() {
        return Err(Error::argument("threshold must be finite"));
    }
    let n = ec.n_nodes();
    let mut adj = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && ec.scores[(i, j)].abs() >= threshold {
                adj[(i, j)] = ec.scores[(i, j)];
            }
        }
    }
    DirectedGraph::from_adjacency(adj)
}

fn degrees(g: &DirectedGraph) -> (Vec<f64>, Vec<f64>) {
    let n = g.n_nodes();
    let mut in_deg = vec![0.0; n];
    let mut out_deg = vec![0.0; n];
    for (i, j) in g.edges() {
        out_deg[i] += 1.0;
        in_deg[j] += 1.0;
    }
    (in_deg, out_deg)
}

fn spread_stats(values: &[f64]) -> [f64; 4] {
    if values.is_empty() {
        return [0.0; 4];
    }
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    [min, max, stats::mean(values), stats::std_dev(values)]
}

/// Local degree profile, N×10.
pub fn ldp_features(g: &DirectedGraph) -> NodeFeatureMatrix {
    let n = g.n_nodes();
    let (in_deg, out_deg) = degrees(g);
    let mut values = DMatrix::zeros(n, 10);
    for i in 0..n {
        values[(i, 0)] = in_deg[i];
        values[(i, 1)] = out_deg[i];
        let nbrs = g.neighbors(i);
        let nbr_in: Vec<f64> = nbrs.iter().map(|&j| in_deg[j]).collect();
        let nbr_out: Vec<f64> = nbrs.iter().map(|&j| out_deg[j]).collect();
        for (c, v) in spread_stats(&nbr_in).into_iter().enumerate() {
            values[(i, 2 + c)] = v;
        }
        for (c, v) in spread_stats(&nbr_out).into_iter().enumerate() {
            values[(i, 6 + c)] = v;
        }
    }
    NodeFeatureMatrix {
        values,
        feature_names: LDP_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Brandes edge betweenness on the unweighted digraph: each ordered pair
/// (s, t) distributes one unit per shortest path, fractionally across the
/// paths, so the total over edges equals the summed shortest-path lengths.
pub fn edge_betweenness(g: &DirectedGraph) -> DMatrix<f64> {
    let n = g.n_nodes();
    let mut bc = DMatrix::zeros(n, n);
    let out_nbrs: Vec<Vec<usize>> = (0..n).map(|i| g.out_neighbors(i)).collect();
    for s in 0..n {
        // BFS from s with path counting.
        let mut dist = vec![usize::MAX; n];
        let mut sigma = vec![0.0f64; n];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut queue = std::collections::VecDeque::new();
        dist[s] = 0;
        sigma[s] = 1.0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &out_nbrs[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                bc[(v, w)] += c;
                delta[v] += c;
            }
        }
    }
    bc
}

/// Local topological profile, N×13: LDP plus betweenness, Jaccard, and
/// local-degree-score columns.
pub fn ltp_features(g: &DirectedGraph) -> NodeFeatureMatrix {
    let n = g.n_nodes();
    let ldp = ldp_features(g);
    let bc = edge_betweenness(g);
    let closed: Vec<BTreeSet<usize>> = (0..n)
        .map(|i| {
            let mut s: BTreeSet<usize> = g.neighbors(i).into_iter().collect();
            s.insert(i);
            s
        })
        .collect();
    let total_deg: Vec<f64> = (0..n)
        .map(|i| ldp.values[(i, 0)] + ldp.values[(i, 1)])
        .collect();

    let mut values = DMatrix::zeros(n, 13);
    for i in 0..n {
        for c in 0..10 {
            values[(i, c)] = ldp.values[(i, c)];
        }
        let mut incident = Vec::new();
        for j in 0..n {
            if g.has_edge(i, j) {
                incident.push(bc[(i, j)]);
            }
            if g.has_edge(j, i) {
                incident.push(bc[(j, i)]);
            }
        }
        values[(i, 10)] = if incident.is_empty() {
            0.0
        } else {
            stats::mean(&incident)
        };
        let nbrs = g.neighbors(i);
        if !nbrs.is_empty() {
            let mut jac = 0.0;
            let mut below = 0usize;
            for &j in &nbrs {
                let inter = closed[i].intersection(&closed[j]).count() as f64;
                let union = closed[i].union(&closed[j]).count() as f64;
                jac += inter / union;
                if total_deg[j] < total_deg[i] {
                    below += 1;
                }
            }
            values[(i, 11)] = jac / nbrs.len() as f64;
            values[(i, 12)] = below as f64 / nbrs.len() as f64;
        }
    }
    NodeFeatureMatrix {
        values,
        feature_names: LTP_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Row-major flattening (node 0's features first).
pub fn flatten(features: &NodeFeatureMatrix) -> Vec<f64> {
    let (n, d) = features.values.shape();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        for c in 0..d {
            out.push(features.values[(i, c)]);
        }
    }
    out
}

/// Inverse of `flatten` given the column names.
pub fn unflatten(flat: &[f64], feature_names: &[String]) -> Result<NodeFeatureMatrix> {
    let d = feature_names.len();
    if d == 0 || flat.len() % d != 0 {
        return Err(Error::argument(format!(
            "flat length {} not divisible by {d} features",
            flat.len()
        )));
    }
    let n = flat.len() / d;
    let mut values = DMatrix::zeros(n, d);
    for i in 0..n {
        for c in 0..d {
            values[(i, c)] = flat[i * d + c];
        }
    }
    Ok(NodeFeatureMatrix {
        values,
        feature_names: feature_names.to_vec(),
    })
}

/// Column means, one value per feature (graph-level pooling).
pub fn mean_pool(features: &NodeFeatureMatrix) -> Vec<f64> {
    let (n, d) = features.values.shape();
    (0..d)
        .map(|c| (0..n).map(|i| features.values[(i, c)]).sum::<f64>() / n.max(1) as f64)
        .collect()
}

/// Flattens every subject, insisting on a shared shape across the cohort.
pub fn flatten_cohort(cohort: &[NodeFeatureMatrix]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = cohort.first() else {
        return Err(Error::argument("empty cohort"));
    };
    let shape = first.values.shape();
    for (k, f) in cohort.iter().enumerate() {
        if f.values.shape() != shape {
            return Err(Error::data(format!(
                "subject {k} has feature shape {:?}, cohort uses {:?}",
                f.values.shape(),
                shape
            )));
        }
    }
    Ok(cohort.iter().map(flatten).collect())
}

/// Writes a feature matrix as CSV with the feature names as header.
pub fn save_features(features: &NodeFeatureMatrix, path: &Path) -> Result<()> {
    let mut out = features.feature_names.join(",");
    out.push('\n');
    let (n, d) = features.values.shape();
    for i in 0..n {
        let row: Vec<String> = (0..d)
            .map(|c| table::fmt_f64(features.values[(i, c)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
