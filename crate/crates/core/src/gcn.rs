//! Directed-graph convolutional classifier.
//!
//! Two propagation rounds update each node's hidden state from its own
//! features and an aggregate over its in-neighbors,
//!
//!   h' = relu(W_self·h + W_agg·agg_{j in in(i)}(h_j) + b),
//!
//! followed by global mean pooling over nodes and an affine + logistic
//! readout to a class-1 probability. Training is full-batch gradient
//! descent on class-weighted binary cross-entropy with hand-derived
//! gradients; `gcn_gradient_check` validates them against central finite
//! differences.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, NodeFeatureMatrix};
use crate::seeding::derive;

pub const GCN_FORMAT_VERSION: u32 = 1;

/// Probability clamp for the cross-entropy value; gradients use the exact
/// unclamped form, so a saturated model sits at a genuine loss plateau.
const BCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Sum,
    Max,
}

/// Architecture and optimizer settings for `gcn_train`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GcnTrainConfig {
    pub hidden: (usize, usize),
    pub aggregator: Aggregator,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for GcnTrainConfig {
    fn default() -> Self {
        Self {
            hidden: (16, 16),
            aggregator: Aggregator::Mean,
            epochs: 150,
            lr: 0.005,
        }
    }
}

/// Weights of the two propagation layers and the readout. Matrices are
/// stored input-rows × output-columns, so a layer computes `h·W + b`
/// on row-vector hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden_dims: (usize, usize),
    pub aggregator: Aggregator,
    pub w1_self: DMatrix<f64>,
    pub w1_agg: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2_self: DMatrix<f64>,
    pub w2_agg: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w_out: DVector<f64>,
    pub b_out: f64,
}

/// One labeled subject: directed graph plus node features (true = patient).
#[derive(Debug, Clone)]
pub struct GcnSample {
    pub graph: DirectedGraph,
    pub features: NodeFeatureMatrix,
    pub label: bool,
}

/// Per-epoch loss curves recorded during training. `val_loss` is empty
/// when no validation set was supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Gradient of the batch loss, same shapes as the model.
#[derive(Debug, Clone)]
pub struct GcnGradient {
    pub w1_self: DMatrix<f64>,
    pub w1_agg: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2_self: DMatrix<f64>,
    pub w2_agg: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w_out: DVector<f64>,
    pub b_out: f64,
}

impl GcnGradient {
    fn zeros_like(model: &GcnModel) -> Self {
        Self {
            w1_self: DMatrix::zeros(model.w1_self.nrows(), model.w1_self.ncols()),
            w1_agg: DMatrix::zeros(model.w1_agg.nrows(), model.w1_agg.ncols()),
            b1: DVector::zeros(model.b1.len()),
            w2_self: DMatrix::zeros(model.w2_self.nrows(), model.w2_self.ncols()),
            w2_agg: DMatrix::zeros(model.w2_agg.nrows(), model.w2_agg.ncols()),
            b2: DVector::zeros(model.b2.len()),
            w_out: DVector::zeros(model.w_out.len()),
            b_out: 0.0,
        }
    }

    fn slices(&self) -> [&[f64]; 7] {
        [
            self.w1_self.as_slice(),
            self.w1_agg.as_slice(),
            self.b1.as_slice(),
            self.w2_self.as_slice(),
            self.w2_agg.as_slice(),
            self.b2.as_slice(),
            self.w_out.as_slice(),
        ]
    }

    /// Flat parameter indexing, matching `GcnModel::add_to_param`.
    pub fn param(&self, mut idx: usize) -> f64 {
        for s in self.slices() {
            if idx < s.len() {
                return s[idx];
            }
            idx -= s.len();
        }
        assert_eq!(idx, 0, "parameter index out of range");
        self.b_out
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = self.b_out.abs();
        for s in self.slices() {
            for v in s {
                m = m.max(v.abs());
            }
        }
        m
    }
}

impl GcnModel {
    pub fn n_params(&self) -> usize {
        self.w1_self.len()
            + self.w1_agg.len()
            + self.b1.len()
            + self.w2_self.len()
            + self.w2_agg.len()
            + self.b2.len()
            + self.w_out.len()
            + 1
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.w1_self.as_mut_slice(),
            self.w1_agg.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2_self.as_mut_slice(),
            self.w2_agg.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.w_out.as_mut_slice(),
        ]
    }

    /// Adds `delta` to the flat parameter `idx` (used by finite differences).
    pub fn add_to_param(&mut self, mut idx: usize, delta: f64) {
        for s in self.slices_mut() {
            if idx < s.len() {
                s[idx] += delta;
                return;
            }
            idx -= s.len();
        }
        assert_eq!(idx, 0, "parameter index out of range");
        self.b_out += delta;
    }

    fn descend(&mut self, grad: &GcnGradient, lr: f64) {
        let gs = grad.slices().map(<[f64]>::to_vec);
        for (p, g) in self.slices_mut().into_iter().zip(gs.iter()) {
            for (pv, gv) in p.iter_mut().zip(g) {
                *pv -= lr * gv;
            }
        }
        self.b_out -= lr * grad.b_out;
    }
}

/// Glorot-uniform weights; biases start slightly positive so rectifier
/// units begin active instead of gambling on the sign of the first update.
pub fn init_gcn(
    input_dim: usize,
    hidden: (usize, usize),
    aggregator: Aggregator,
    seed: u64,
) -> Result<GcnModel> {
    if input_dim == 0 || hidden.0 == 0 || hidden.1 == 0 {
        return Err(Error::argument("layer dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "gcn-init", 0));
    let mut glorot = |rows: usize, cols: usize| {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
    };
    let w1_self = glorot(input_dim, hidden.0);
    let w1_agg = glorot(input_dim, hidden.0);
    let w2_self = glorot(hidden.0, hidden.1);
    let w2_agg = glorot(hidden.0, hidden.1);
    let w_out = DVector::from_column_slice(glorot(hidden.1, 1).as_slice());
    Ok(GcnModel {
        format_version: GCN_FORMAT_VERSION,
        input_dim,
        hidden_dims: hidden,
        aggregator,
        w1_self,
        w1_agg,
        b1: DVector::from_element(hidden.0, 0.05),
        w2_self,
        w2_agg,
        b2: DVector::from_element(hidden.1, 0.05),
        w_out,
        b_out: 0.0,
    })
}

/// Neighborhood aggregation plan for one graph. Mean and sum are a fixed
/// linear operator; max routes gradients through per-entry argmaxes.
enum AggPlan {
    Linear(DMatrix<f64>),
    Max(Vec<Vec<usize>>),
}

struct Packed {
    h: DMatrix<f64>,
    plan: AggPlan,
    label: f64,
    weight: f64,
}

fn pack(graph: &DirectedGraph, features: &DMatrix<f64>, aggregator: Aggregator, label: f64, weight: f64) -> Result<Packed> {
    let n = graph.n_nodes();
    if features.nrows() != n {
        return Err(Error::argument(format!(
            "{} feature rows for a {n}-node graph",
            features.nrows()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("node features must be finite"));
    }
    let in_lists: Vec<Vec<usize>> = (0..n).map(|i| graph.in_neighbors(i)).collect();
    let plan = match aggregator {
        Aggregator::Max => AggPlan::Max(in_lists),
        Aggregator::Mean | Aggregator::Sum => {
            let mut m = DMatrix::zeros(n, n);
            for (i, list) in in_lists.iter().enumerate() {
                if list.is_empty() {
                    continue;
                }
                let w = match aggregator {
                    Aggregator::Mean => 1.0 / list.len() as f64,
                    _ => 1.0,
                };
                for &j in list {
                    m[(i, j)] = w;
                }
            }
            AggPlan::Linear(m)
        }
    };
    Ok(Packed {
        h: features.clone(),
        plan,
        label,
        weight,
    })
}

/// Aggregate in-neighbor rows of `h`; nodes without in-neighbors get a
/// zero row. Returns max-aggregation routing for the backward pass.
fn agg_forward(plan: &AggPlan, h: &DMatrix<f64>) -> (DMatrix<f64>, Option<Vec<Vec<usize>>>) {
    match plan {
        AggPlan::Linear(m) => (m * h, None),
        AggPlan::Max(lists) => {
            let (n, d) = (h.nrows(), h.ncols());
            let mut a = DMatrix::zeros(n, d);
            let mut route = vec![vec![usize::MAX; d]; n];
            for (i, list) in lists.iter().enumerate() {
                if list.is_empty() {
                    continue;
                }
                for c in 0..d {
                    let mut best = list[0];
                    for &j in &list[1..] {
                        if h[(j, c)] > h[(best, c)] {
                            best = j;
                        }
                    }
                    a[(i, c)] = h[(best, c)];
                    route[i][c] = best;
                }
            }
            (a, Some(route))
        }
    }
}

fn agg_backward(
    plan: &AggPlan,
    route: Option<&Vec<Vec<usize>>>,
    d_agg: &DMatrix<f64>,
    h_shape: (usize, usize),
) -> DMatrix<f64> {
    match plan {
        AggPlan::Linear(m) => m.transpose() * d_agg,
        AggPlan::Max(_) => {
            let route = route.expect("max aggregation records routing");
            let mut dh = DMatrix::zeros(h_shape.0, h_shape.1);
            for (i, row) in route.iter().enumerate() {
                for (c, &src) in row.iter().enumerate() {
                    if src != usize::MAX {
                        dh[(src, c)] += d_agg[(i, c)];
                    }
                }
            }
            dh
        }
    }
}

struct ForwardPass {
    a1: DMatrix<f64>,
    z1: DMatrix<f64>,
    h1: DMatrix<f64>,
    a2: DMatrix<f64>,
    z2: DMatrix<f64>,
    route1: Option<Vec<Vec<usize>>>,
    route2: Option<Vec<Vec<usize>>>,
    g: DVector<f64>,
    p: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

fn relu_mask(z: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    d.zip_map(z, |dv, zv| if zv > 0.0 { dv } else { 0.0 })
}

fn layer(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    w_self: &DMatrix<f64>,
    w_agg: &DMatrix<f64>,
    b: &DVector<f64>,
) -> DMatrix<f64> {
    let mut z = h * w_self + a * w_agg;
    for mut row in z.row_iter_mut() {
        row += b.transpose();
    }
    z
}

fn forward(model: &GcnModel, packed: &Packed) -> ForwardPass {
    let n = packed.h.nrows() as f64;
    let (a1, route1) = agg_forward(&packed.plan, &packed.h);
    let z1 = layer(&packed.h, &a1, &model.w1_self, &model.w1_agg, &model.b1);
    let h1 = relu(&z1);
    let (a2, route2) = agg_forward(&packed.plan, &h1);
    let z2 = layer(&h1, &a2, &model.w2_self, &model.w2_agg, &model.b2);
    let h2 = relu(&z2);
    let g = h2.row_mean().transpose() * 1.0;
    debug_assert_eq!(g.len(), model.hidden_dims.1);
    let logit = model.w_out.dot(&g) + model.b_out;
    let _ = n;
    ForwardPass {
        a1,
        z1,
        h1,
        a2,
        z2,
        route1,
        route2,
        g,
        p: sigmoid(logit),
    }
}

fn bce(p: f64, label: f64) -> f64 {
    let pc = p.clamp(BCE_FLOOR, 1.0 - BCE_FLOOR);
    -(label * pc.ln() + (1.0 - label) * (1.0 - pc).ln())
}

fn check_model_dims(model: &GcnModel, features: &DMatrix<f64>) -> Result<()> {
    if features.ncols() != model.input_dim {
        return Err(Error::argument(format!(
            "{} feature columns, model expects {}",
            features.ncols(),
            model.input_dim
        )));
    }
    Ok(())
}

/// Class-1 probability for one subject.
pub fn gcn_forward(
    model: &GcnModel,
    graph: &DirectedGraph,
    features: &NodeFeatureMatrix,
) -> Result<f64> {
    check_model_dims(model, &features.values)?;
    let packed = pack(graph, &features.values, model.aggregator, 0.0, 1.0)?;
    Ok(forward(model, &packed).p)
}

/// Class-1 probabilities for a batch of subjects.
pub fn gcn_predict(model: &GcnModel, samples: &[GcnSample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| gcn_forward(model, &s.graph, &s.features))
        .collect()
}

fn pack_batch(
    model: &GcnModel,
    samples: &[GcnSample],
    class_weights: (f64, f64),
) -> Result<Vec<Packed>> {
    samples
        .iter()
        .map(|s| {
            check_model_dims(model, &s.features.values)?;
            let weight = if s.label { class_weights.1 } else { class_weights.0 };
            pack(
                &s.graph,
                &s.features.values,
                model.aggregator,
                f64::from(u8::from(s.label)),
                weight,
            )
        })
        .collect()
}

fn batch_loss_packed(model: &GcnModel, packed: &[Packed]) -> f64 {
    let total: f64 = packed
        .iter()
        .map(|s| s.weight * bce(forward(model, s).p, s.label))
        .sum();
    total / packed.len() as f64
}

/// Mean class-weighted cross-entropy of `model` on `samples`.
pub fn gcn_loss(model: &GcnModel, samples: &[GcnSample], class_weights: (f64, f64)) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::argument("empty batch"));
    }
    let packed = pack_batch(model, samples, class_weights)?;
    Ok(batch_loss_packed(model, &packed))
}

fn batch_gradient_packed(model: &GcnModel, packed: &[Packed]) -> (f64, GcnGradient) {
    let mut grad = GcnGradient::zeros_like(model);
    let batch = packed.len() as f64;
    let mut loss = 0.0;
    for s in packed {
        let pass = forward(model, s);
        loss += s.weight * bce(pass.p, s.label);
        let n = s.h.nrows() as f64;
        // exact derivative of the unclamped weighted BCE through the logistic
        let d_logit = s.weight * (pass.p - s.label) / batch;
        grad.w_out += &pass.g * d_logit;
        grad.b_out += d_logit;
        // pooling spreads the readout gradient uniformly over nodes
        let d_g = &model.w_out * d_logit;
        let d_h2 = DMatrix::from_fn(s.h.nrows(), model.hidden_dims.1, |_, c| d_g[c] / n);
        let d_z2 = relu_mask(&pass.z2, &d_h2);
        grad.w2_self += pass.h1.transpose() * &d_z2;
        grad.w2_agg += pass.a2.transpose() * &d_z2;
        grad.b2 += d_z2.row_sum().transpose();
        let d_a2 = &d_z2 * model.w2_agg.transpose();
        let d_h1 = &d_z2 * model.w2_self.transpose()
            + agg_backward(&s.plan, pass.route2.as_ref(), &d_a2, (s.h.nrows(), model.hidden_dims.0));
        let d_z1 = relu_mask(&pass.z1, &d_h1);
        grad.w1_self += s.h.transpose() * &d_z1;
        grad.w1_agg += pass.a1.transpose() * &d_z1;
        grad.b1 += d_z1.row_sum().transpose();
        let _ = pass.route1;
    }
    (loss / batch, grad)
}

/// Batch loss and its analytic gradient.
pub fn gcn_gradient(
    model: &GcnModel,
    samples: &[GcnSample],
    class_weights: (f64, f64),
) -> Result<(f64, GcnGradient)> {
    if samples.is_empty() {
        return Err(Error::argument("empty batch"));
    }
    let packed = pack_batch(model, samples, class_weights)?;
    Ok(batch_gradient_packed(model, &packed))
}

/// Full-batch gradient descent. Records the pre-update train loss each
/// epoch, and the validation loss whenever `val` is non-empty. The same
/// class weights apply to both curves.
pub fn gcn_train(
    train: &[GcnSample],
    val: &[GcnSample],
    cfg: &GcnTrainConfig,
    class_weights: (f64, f64),
    seed: u64,
) -> Result<(GcnModel, TrainTrace)> {
    let n_pos = train.iter().filter(|s| s.label).count();
    let n_neg = train.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data(
            "training set contains a single class; cannot fit a classifier",
        ));
    }
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::data(format!(
            "need at least 2 subjects per class, got {n_pos} patients / {n_neg} controls"
        )));
    }
    if !cfg.lr.is_finite() || cfg.lr < 0.0 {
        return Err(Error::argument("learning rate must be finite and non-negative"));
    }
    if !(class_weights.0.is_finite() && class_weights.1.is_finite())
        || class_weights.0 <= 0.0
        || class_weights.1 <= 0.0
    {
        return Err(Error::argument("class weights must be positive and finite"));
    }
    let input_dim = train[0].features.values.ncols();
    let mut model = init_gcn(input_dim, cfg.hidden, cfg.aggregator, seed)?;
    let packed_train = pack_batch(&model, train, class_weights)?;
    let packed_val = pack_batch(&model, val, class_weights)?;
    let mut trace = TrainTrace {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::new(),
    };
    for _ in 0..cfg.epochs {
        let (loss, grad) = batch_gradient_packed(&model, &packed_train);
        trace.train_loss.push(loss);
        if !packed_val.is_empty() {
            trace.val_loss.push(batch_loss_packed(&model, &packed_val));
        }
        model.descend(&grad, cfg.lr);
    }
    Ok((model, trace))
}

/// Compares the analytic gradient with central finite differences over
/// `probes` randomly chosen parameters; returns the maximum relative
/// error |analytic − fd| / max(1e-8, |analytic| + |fd|). Uses unit class
/// weights; the class-weight factor scales both estimates identically.
pub fn gcn_gradient_check(
    model: &GcnModel,
    samples: &[GcnSample],
    epsilon: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::argument(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    if probes == 0 {
        return Err(Error::argument("need at least one probe"));
    }
    if samples.is_empty() {
        return Err(Error::argument("empty batch"));
    }
    let weights = (1.0, 1.0);
    let (_, grad) = gcn_gradient(model, samples, weights)?;
    let n_params = model.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "grad-probe", 0));
    let indices: Vec<usize> = if probes >= n_params {
        (0..n_params).collect()
    } else {
        sample(&mut rng, n_params, probes).into_vec()
    };
    let mut worst = 0.0f64;
    for idx in indices {
        let mut probe_model = model.clone();
        probe_model.add_to_param(idx, epsilon);
        let up = gcn_loss(&probe_model, samples, weights)?;
        let mut probe_model = model.clone();
        probe_model.add_to_param(idx, -epsilon);
        let down = gcn_loss(&probe_model, samples, weights)?;
        let fd = (up - down) / (2.0 * epsilon);
        let analytic = grad.param(idx);
        let rel = (analytic - fd).abs() / f64::max(1e-8, analytic.abs() + fd.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}
