//! Stratified k-fold cross-validation over connectivity matrices.
//!
//! Each fold standardizes every subject against the training-fold controls,
//! binarizes into directed graphs, derives node features, trains the chosen
//! classifier, and scores the held-out subjects. A slice of every training
//! fold is held out as a validation set for overfit monitoring. Fold
//! assignment, validation splits, and trainer seeds all derive from the
//! single harness seed.

use serde::{Deserialize, Serialize};

use crate::ec::{control_stats, zscore_edges, EcMatrix, StandardizationStats};
use crate::error::{Error, Result};
use crate::forest::{rf_train, ForestModel, ForestParams};
use crate::gcn::{gcn_forward, gcn_train, GcnModel, GcnSample, GcnTrainConfig};
use crate::graph::{binarize, flatten, ldp_features, ltp_features, DirectedGraph};
use crate::metrics::{compute_metrics, Metrics};
use crate::seeding::derive;
use crate::stats;
use crate::timeseries::{permutation, Group};

pub const TRAINED_MODEL_FORMAT_VERSION: u32 = 1;

/// Which classifier consumes the binarized graphs. `Gcn` feeds degree
/// profiles to the graph network; `Ltp` flattens topological profiles
/// into one row per subject for the forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Ltp,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Ltp => "ltp",
        }
    }
}

/// Node-feature family fed to the forest path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Ldp,
    Ltp,
}

/// Where the control statistics for z-scoring come from: the training
/// fold only (no test-fold leakage) or the whole cohort once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardizeScope {
    Fold,
    Global,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub model: ModelKind,
    /// Threshold on |z-scored score| when binarizing into a graph.
    pub binarize_threshold: f64,
    pub standardize: StandardizeScope,
    /// Feature family for the forest path; the graph network always
    /// consumes degree profiles.
    pub forest_features: FeatureKind,
    pub gcn: GcnTrainConfig,
    pub forest: ForestParams,
    /// Decision threshold for the confusion-matrix metrics.
    pub decision_threshold: f64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            model: ModelKind::Gcn,
            binarize_threshold: 2.0,
            standardize: StandardizeScope::Fold,
            forest_features: FeatureKind::Ltp,
            gcn: GcnTrainConfig::default(),
            forest: ForestParams::default(),
            decision_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    /// Fraction of each training fold held out for validation monitoring.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 10,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub subject_id: String,
    pub fold: usize,
    pub label: Group,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub method: String,
    pub k: usize,
    pub seed: u64,
    pub per_fold: Vec<FoldMetrics>,
    pub mean: Metrics,
    pub std: Metrics,
    pub fold_assignment: Vec<(String, usize)>,
    pub scores: Vec<ScoreRow>,
    pub config_digest: Option<String>,
}

/// Balanced class weights (control, patient): w_c = n_total / (2·n_c).
pub fn balanced_class_weights(labels: &[bool]) -> Result<(f64, f64)> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("both classes are needed for balanced weights"));
    }
    let total = labels.len() as f64;
    Ok((total / (2.0 * n_neg as f64), total / (2.0 * n_pos as f64)))
}

/// Assigns each subject to one of `k` folds, shuffling within each class
/// and dealing round-robin so per-fold class counts differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::argument("need at least 2 folds"));
    }
    if labels.len() < k {
        return Err(Error::argument(format!(
            "{} subjects cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut assignment = vec![0usize; labels.len()];
    // the dealing cursor continues across classes so k = n degenerates to
    // leave-one-out instead of stacking both classes into the same folds
    let mut cursor = 0usize;
    for (class, want) in [(false, 0u64), (true, 1u64)] {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let order = permutation(members.len(), derive(seed, "fold-shuffle", want));
        for (pos, &slot) in order.iter().enumerate() {
            assignment[members[slot]] = (cursor + pos) % k;
        }
        cursor = (cursor + members.len()) % k;
    }
    Ok(assignment)
}

/// Indices held out of `train` for validation: the per-class head of a
/// seeded shuffle, floor(fraction·class size) each.
fn validation_split(train: &[usize], labels: &[bool], fraction: f64, seed: u64) -> Vec<usize> {
    if fraction <= 0.0 {
        return Vec::new();
    }
    let mut val = Vec::new();
    for (class, tag) in [(false, 0u64), (true, 1u64)] {
        let members: Vec<usize> = train.iter().copied().filter(|&i| labels[i] == class).collect();
        let take = (fraction * members.len() as f64).floor() as usize;
        let order = permutation(members.len(), derive(seed, "val-shuffle", tag));
        val.extend(order[..take].iter().map(|&slot| members[slot]));
    }
    val.sort_unstable();
    val
}

/// Binarized graph for one standardized subject.
fn subject_graph(z: &EcMatrix, threshold: f64) -> Result<DirectedGraph> {
    binarize(z, threshold)
}

fn gcn_samples(graphs: &[DirectedGraph], labels: &[bool], idx: &[usize]) -> Vec<GcnSample> {
    idx.iter()
        .map(|&i| GcnSample {
            graph: graphs[i].clone(),
            features: ldp_features(&graphs[i]),
            label: labels[i],
        })
        .collect()
}

fn forest_rows(graphs: &[DirectedGraph], kind: FeatureKind) -> Vec<Vec<f64>> {
    graphs
        .iter()
        .map(|g| {
            let features = match kind {
                FeatureKind::Ldp => ldp_features(g),
                FeatureKind::Ltp => ltp_features(g),
            };
            flatten(&features)
        })
        .collect()
}

fn pick(rows: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

fn pick_labels(labels: &[bool], idx: &[usize]) -> Vec<bool> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn cohort_labels(cohort: &[EcMatrix]) -> Vec<bool> {
    cohort.iter().map(|m| m.group == Group::Patient).collect()
}

fn check_cohort(cohort: &[EcMatrix]) -> Result<()> {
    if cohort.len() < 2 {
        return Err(Error::argument("cohort needs at least 2 subjects"));
    }
    let n = cohort[0].n_nodes();
    if cohort.iter().any(|m| m.n_nodes() != n) {
        return Err(Error::argument("subjects differ in node count"));
    }
    let tau = cohort[0].tau;
    if cohort.iter().any(|m| m.tau != tau) {
        return Err(Error::argument("subjects mix different lags"));
    }
    Ok(())
}

fn stats_from(cohort: &[EcMatrix], idx: &[usize]) -> Result<StandardizationStats> {
    let controls: Vec<&EcMatrix> = idx
        .iter()
        .map(|&i| &cohort[i])
        .filter(|m| m.group == Group::Control)
        .collect();
    control_stats(&controls)
}

/// Scores `test` subjects after training on `train` minus the validation
/// slice. Returns one probability per test subject, in `test` order.
fn fit_and_score(
    spec: &ClassifierSpec,
    graphs: &[DirectedGraph],
    labels: &[bool],
    train: &[usize],
    val: &[usize],
    test: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    let fit: Vec<usize> = train.iter().copied().filter(|i| !val.contains(i)).collect();
    let fit_labels = pick_labels(labels, &fit);
    let n_pos = fit_labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == fit_labels.len() {
        return Err(Error::data(
            "stratification left a training fold with a single class",
        ));
    }
    let weights = balanced_class_weights(&fit_labels)?;
    match spec.model {
        ModelKind::Gcn => {
            let train_samples = gcn_samples(graphs, labels, &fit);
            let val_samples = gcn_samples(graphs, labels, val);
            let (model, _) = gcn_train(&train_samples, &val_samples, &spec.gcn, weights, seed)?;
            test.iter()
                .map(|&i| gcn_forward(&model, &graphs[i], &ldp_features(&graphs[i])))
                .collect()
        }
        ModelKind::Ltp => {
            let rows = forest_rows(graphs, spec.forest_features);
            let model = rf_train(&pick(&rows, &fit), &fit_labels, weights, &spec.forest, seed)?;
            model.predict(&pick(&rows, test))
        }
    }
}

fn metric_vec(report: &[FoldMetrics], f: impl Fn(&Metrics) -> f64) -> Vec<f64> {
    report.iter().map(|fm| f(&fm.metrics)).collect()
}

fn aggregate(per_fold: &[FoldMetrics]) -> (Metrics, Metrics) {
    let aucs: Vec<f64> = per_fold.iter().filter_map(|fm| fm.metrics.auc).collect();
    let agg = |values: Vec<f64>| (stats::mean(&values), stats::std_dev(&values));
    let (acc_m, acc_s) = agg(metric_vec(per_fold, |m| m.accuracy));
    let (pre_m, pre_s) = agg(metric_vec(per_fold, |m| m.precision));
    let (rec_m, rec_s) = agg(metric_vec(per_fold, |m| m.recall));
    let (f1_m, f1_s) = agg(metric_vec(per_fold, |m| m.f1));
    let (auc_m, auc_s) = if aucs.is_empty() {
        (None, None)
    } else {
        (Some(stats::mean(&aucs)), Some(stats::std_dev(&aucs)))
    };
    (
        Metrics {
            auc: auc_m,
            accuracy: acc_m,
            precision: pre_m,
            recall: rec_m,
            f1: f1_m,
        },
        Metrics {
            auc: auc_s,
            accuracy: acc_s,
            precision: pre_s,
            recall: rec_s,
            f1: f1_s,
        },
    )
}

/// Stratified k-fold cross-validation of `spec` on a cohort of raw
/// (unstandardized) connectivity matrices.
pub fn crossval(cohort: &[EcMatrix], spec: &ClassifierSpec, cv: &CvConfig) -> Result<CvReport> {
    check_cohort(cohort)?;
    if cohort.len() < cv.k {
        return Err(Error::argument(format!(
            "cohort of {} cannot fill {} folds",
            cohort.len(),
            cv.k
        )));
    }
    if !(0.0..0.5).contains(&cv.val_fraction) {
        return Err(Error::argument("validation fraction must be in [0, 0.5)"));
    }
    let labels = cohort_labels(cohort);
    let assignment = stratified_folds(&labels, cv.k, cv.seed)?;
    let all: Vec<usize> = (0..cohort.len()).collect();
    let global_stats = match spec.standardize {
        StandardizeScope::Global => Some(stats_from(cohort, &all)?),
        StandardizeScope::Fold => None,
    };
    let mut per_fold = Vec::with_capacity(cv.k);
    let mut scores = vec![f64::NAN; cohort.len()];
    for fold in 0..cv.k {
        let test: Vec<usize> = all.iter().copied().filter(|&i| assignment[i] == fold).collect();
        let train: Vec<usize> = all.iter().copied().filter(|&i| assignment[i] != fold).collect();
        let stats = match &global_stats {
            Some(s) => s.clone(),
            None => stats_from(cohort, &train).map_err(|e| {
                Error::data(format!("fold {fold}: {e}"))
            })?,
        };
        let z = zscore_edges(cohort, &stats)?;
        let graphs: Vec<DirectedGraph> = z
            .iter()
            .map(|m| subject_graph(m, spec.binarize_threshold))
            .collect::<Result<_>>()?;
        let val = validation_split(&train, &labels, cv.val_fraction, derive(cv.seed, "val", fold as u64));
        let fold_scores = fit_and_score(
            spec,
            &graphs,
            &labels,
            &train,
            &val,
            &test,
            derive(cv.seed, "fold-train", fold as u64),
        )?;
        let test_labels = pick_labels(&labels, &test);
        let metrics = compute_metrics(&test_labels, &fold_scores, spec.decision_threshold)?;
        per_fold.push(FoldMetrics {
            fold,
            n_test: test.len(),
            metrics,
        });
        for (&i, &s) in test.iter().zip(fold_scores.iter()) {
            scores[i] = s;
        }
    }
    let (mean, std) = aggregate(&per_fold);
    Ok(CvReport {
        method: spec.model.as_str().to_string(),
        k: cv.k,
        seed: cv.seed,
        per_fold,
        mean,
        std,
        fold_assignment: cohort
            .iter()
            .zip(assignment.iter())
            .map(|(m, &f)| (m.subject_id.clone(), f))
            .collect(),
        scores: cohort
            .iter()
            .enumerate()
            .map(|(i, m)| ScoreRow {
                subject_id: m.subject_id.clone(),
                fold: assignment[i],
                label: m.group,
                score: scores[i],
            })
            .collect(),
        config_digest: None,
    })
}

/// Classifier trained on the full cohort, with everything needed to score
/// a new subject: standardization stats, the binarization threshold, and
/// the fitted model. This is the artifact the explanation stage loads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub binarize_threshold: f64,
    pub forest_features: FeatureKind,
    pub decision_threshold: f64,
    pub stats: StandardizationStats,
    pub gcn: Option<GcnModel>,
    pub forest: Option<ForestModel>,
    pub config_digest: Option<String>,
}

impl TrainedModel {
    /// Probability of class patient for an already-binarized graph.
    /// Node features are recomputed from the graph, so perturbed copies
    /// of a subject's graph can be scored directly.
    pub fn predict_graph(&self, graph: &DirectedGraph) -> Result<f64> {
        match self.kind {
            ModelKind::Gcn => {
                let model = self.gcn.as_ref().ok_or_else(|| {
                    Error::data("model artifact is missing the network weights")
                })?;
                gcn_forward(model, graph, &ldp_features(graph))
            }
            ModelKind::Ltp => {
                let model = self.forest.as_ref().ok_or_else(|| {
                    Error::data("model artifact is missing the forest")
                })?;
                let features = match self.forest_features {
                    FeatureKind::Ldp => ldp_features(graph),
                    FeatureKind::Ltp => ltp_features(graph),
                };
                model.predict_row(&flatten(&features))
            }
        }
    }

    /// Standardizes, binarizes, and scores one raw connectivity matrix.
    pub fn predict_ec(&self, ec: &EcMatrix) -> Result<f64> {
        let z = zscore_edges(std::slice::from_ref(ec), &self.stats)?;
        let graph = subject_graph(&z[0], self.binarize_threshold)?;
        self.predict_graph(&graph)
    }

    /// The subject's graph as the classifier sees it.
    pub fn subject_graph(&self, ec: &EcMatrix) -> Result<DirectedGraph> {
        let z = zscore_edges(std::slice::from_ref(ec), &self.stats)?;
        subject_graph(&z[0], self.binarize_threshold)
    }
}

/// Trains on the whole cohort (no fold split, no validation holdout) for
/// downstream explanation.
pub fn train_full(cohort: &[EcMatrix], spec: &ClassifierSpec, seed: u64) -> Result<TrainedModel> {
    check_cohort(cohort)?;
    let labels = cohort_labels(cohort);
    let all: Vec<usize> = (0..cohort.len()).collect();
    let stats = stats_from(cohort, &all)?;
    let z = zscore_edges(cohort, &stats)?;
    let graphs: Vec<DirectedGraph> = z
        .iter()
        .map(|m| subject_graph(m, spec.binarize_threshold))
        .collect::<Result<_>>()?;
    let weights = balanced_class_weights(&labels)?;
    let train_seed = derive(seed, "full-train", 0);
    let (gcn, forest) = match spec.model {
        ModelKind::Gcn => {
            let samples = gcn_samples(&graphs, &labels, &all);
            let (model, _) = gcn_train(&samples, &[], &spec.gcn, weights, train_seed)?;
            (Some(model), None)
        }
        ModelKind::Ltp => {
            let rows = forest_rows(&graphs, spec.forest_features);
            let model = rf_train(&rows, &labels, weights, &spec.forest, train_seed)?;
            (None, Some(model))
        }
    };
    Ok(TrainedModel {
        format_version: TRAINED_MODEL_FORMAT_VERSION,
        kind: spec.model,
        binarize_threshold: spec.binarize_threshold,
        forest_features: spec.forest_features,
        decision_threshold: spec.decision_threshold,
        stats,
        gcn,
        forest,
        config_digest: None,
    })
}
