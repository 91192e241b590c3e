//! The five pipeline stages behind the subcommands. Stages communicate
//! only through files under the configured output directory; every
//! artifact records the digest of the configuration slice that produced
//! it, and consumers refuse artifacts whose digest does not match the
//! current configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use effconn::atlas::{load_atlas, save_atlas, Atlas, AtlasEntry, Hemisphere};
use effconn::crossval::{
    crossval, train_full, ClassifierSpec, CvConfig, TrainedModel, TRAINED_MODEL_FORMAT_VERSION,
};
use effconn::ec::{load_ec, save_ec, EcMatrix, EcSidecar};
use effconn::explain::{
    lime_explain, map_to_networks, save_edge_coefficients, save_roi_scores, threshold_rois,
    LimeParams,
};
use effconn::forest::{ForestParams, FOREST_FORMAT_VERSION};
use effconn::gcn::{GcnTrainConfig, GCN_FORMAT_VERSION};
use effconn::granger::subject_gc_ec;
use effconn::rcc::{
    assemble_ec, group_ttest, hemispheric_summary, save_skill_curve, DeltaScores, PairAnalyzer,
    PairScores,
};
use effconn::seeding;
use effconn::timeseries::{
    load_manifest, load_timeseries, save_manifest, save_timeseries, simulate_logistic_network,
    CohortEntry, Group, LesionSide, TimeSeriesSet,
};
use effconn::{Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Method, PipelineConfig, SimulateSection};

/// Restarts granted to a trajectory that leaves its admissible region.
const MAX_SIM_ATTEMPTS: u64 = 16;

/// Per-run bookkeeping written next to the stage outputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub artifact_versions: BTreeMap<String, u32>,
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub digest: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

fn run_manifest_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths.output_dir.join("run_manifest.json")
}

fn record_stage(
    cfg: &PipelineConfig,
    stage: &str,
    digest: String,
    started: Instant,
    outputs: Vec<PathBuf>,
) -> Result<()> {
    let path = run_manifest_path(cfg);
    let mut manifest: RunManifest = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: unreadable run manifest: {e}", path.display())))?,
        Err(_) => RunManifest::default(),
    };
    manifest.config_digest = cfg.digest();
    manifest.artifact_versions = BTreeMap::from([
        ("trained_model".to_string(), TRAINED_MODEL_FORMAT_VERSION),
        ("forest".to_string(), FOREST_FORMAT_VERSION),
        ("gcn".to_string(), GCN_FORMAT_VERSION),
    ]);
    manifest.stages.insert(
        stage.to_string(),
        StageRecord {
            digest,
            wall_time_s: started.elapsed().as_secs_f64(),
            outputs: outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
        },
    );
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::data(format!("run manifest serialization failed: {e}")))?;
    std::fs::write(&path, json)?;
    Ok(())
}

fn manifest_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_subject(cfg: &PipelineConfig, entry: &CohortEntry) -> Result<TimeSeriesSet> {
    let path = manifest_dir(cfg).join(&entry.path);
    let mut ts = load_timeseries(&path, entry.group)?;
    ts.subject_id = entry.subject_id.clone();
    Ok(ts)
}

// ---------------------------------------------------------------- simulate

fn simulate_subject(
    s: &SimulateSection,
    coupling: &DMatrix<f64>,
    id: &str,
    group: Group,
    root: u64,
) -> Result<TimeSeriesSet> {
    let growth = vec![s.growth; s.n_nodes];
    let base = seeding::derive_str(root, "simulate", id);
    let mut last = None;
    for attempt in 0..MAX_SIM_ATTEMPTS {
        let seed = seeding::derive(base, "attempt", attempt);
        match simulate_logistic_network(&growth, coupling, s.t_samples, s.transient, seed) {
            Ok(mut ts) => {
                ts.subject_id = id.to_string();
                ts.group = group;
                return Ok(ts);
            }
            Err(e @ Error::Dynamics { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    match last.expect("at least one attempt ran") {
        Error::Dynamics { step, msg } => Err(Error::Dynamics {
            step,
            msg: format!("{id}: {msg} ({MAX_SIM_ATTEMPTS} restarts exhausted)"),
        }),
        e => Err(e),
    }
}

fn coupling_matrix(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for &(x, y, b) in edges {
        m[(x, y)] = b;
    }
    m
}

/// Writes a default node atlas when none exists: left/right split down
/// the middle, network names cycling over a fixed palette.
fn ensure_atlas(cfg: &PipelineConfig, n_nodes: usize) -> Result<bool> {
    if cfg.paths.atlas.exists() {
        return Ok(false);
    }
    const NETWORKS: [&str; 4] = ["frontoparietal", "default_mode", "visual", "somatomotor"];
    let entries: Vec<AtlasEntry> = (0..n_nodes)
        .map(|i| {
            let hemisphere = if i < n_nodes / 2 {
                Hemisphere::Left
            } else {
                Hemisphere::Right
            };
            AtlasEntry {
                node_index: i,
                node_name: format!("roi{i:02}"),
                hemisphere,
                network: NETWORKS[i % NETWORKS.len()].to_string(),
            }
        })
        .collect();
    if let Some(dir) = cfg.paths.atlas.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_atlas(&Atlas::new(entries)?, &cfg.paths.atlas)?;
    Ok(true)
}

/// Generates a two-group synthetic cohort: identical chaotic dynamics in
/// both groups except for the planted patient-only couplings.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<()> {
    let started = Instant::now();
    let s = &cfg.simulate;
    let control_coupling = coupling_matrix(s.n_nodes, &s.shared);
    let patient_edges: Vec<(usize, usize, f64)> =
        s.shared.iter().chain(&s.planted).copied().collect();
    let patient_coupling = coupling_matrix(s.n_nodes, &patient_edges);

    let dir = manifest_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    let mut entries = Vec::new();
    let mut outputs = Vec::new();
    let subjects: Vec<(String, Group)> = (0..s.n_controls)
        .map(|i| (format!("control_{i:02}"), Group::Control))
        .chain((0..s.n_patients).map(|i| (format!("patient_{i:02}"), Group::Patient)))
        .collect();
    for (idx, (id, group)) in subjects.iter().enumerate() {
        let coupling = match group {
            Group::Control => &control_coupling,
            Group::Patient => &patient_coupling,
        };
        let ts = simulate_subject(s, coupling, id, *group, cfg.seed)?;
        let file = format!("{id}.csv");
        save_timeseries(&ts, &dir.join(&file))?;
        outputs.push(dir.join(&file));
        let lesion_side = match group {
            Group::Control => LesionSide::None,
            // alternate sides so hemispheric summaries see both
            Group::Patient if idx % 2 == 0 => LesionSide::Left,
            Group::Patient => LesionSide::Right,
        };
        entries.push(CohortEntry {
            subject_id: id.clone(),
            path: file,
            group: *group,
            lesion_side,
        });
    }
    save_manifest(&entries, &cfg.paths.manifest)?;
    outputs.push(cfg.paths.manifest.clone());
    if ensure_atlas(cfg, s.n_nodes)? {
        outputs.push(cfg.paths.atlas.clone());
    }
    std::fs::create_dir_all(&cfg.paths.output_dir)?;
    record_stage(cfg, "simulate", cfg.digest(), started, outputs)?;
    println!(
        "simulate: wrote {} subjects to {}",
        entries.len(),
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- ec

fn ec_dir(cfg: &PipelineConfig, method: Method) -> PathBuf {
    cfg.paths.output_dir.join("ec").join(method.as_str())
}

fn ec_path(cfg: &PipelineConfig, method: Method, subject_id: &str, tau: i64) -> PathBuf {
    ec_dir(cfg, method).join(format!("{subject_id}_tau{tau}.csv"))
}

/// Lags at which `method` emits one EC file per subject.
fn ec_taus(cfg: &PipelineConfig, method: Method) -> Vec<i64> {
    match method {
        Method::Rcc => cfg.rcc.taus.clone(),
        // autoregressive scores have no lag grid; tau 0 marks that
        Method::Granger => vec![0],
    }
}

/// The lag whose EC matrices feed the classifier.
fn classify_tau(cfg: &PipelineConfig, method: Method) -> i64 {
    match method {
        Method::Rcc => cfg.rcc.ec_tau,
        Method::Granger => 0,
    }
}

/// True when every EC file for `entry` exists, parses, and carries the
/// current digest. A file that exists but fails to parse is reported as
/// corrupt rather than silently recomputed.
fn subject_ec_complete(
    cfg: &PipelineConfig,
    method: Method,
    entry: &CohortEntry,
    taus: &[i64],
    digest: &str,
) -> Result<bool> {
    for &tau in taus {
        let path = ec_path(cfg, method, &entry.subject_id, tau);
        if !path.exists() {
            return Ok(false);
        }
        let (_, sidecar) = load_ec(&path).map_err(|e| {
            Error::data(format!(
                "subject {}: corrupt EC intermediate {}: {e}",
                entry.subject_id,
                path.display()
            ))
        })?;
        if sidecar.config_digest != digest || sidecar.method != method.as_str() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Estimates one EC matrix per subject per lag and writes CSV + sidecar
/// pairs. Pairs are scored in parallel with per-pair seeds, so parallel
/// and serial runs write identical bytes.
pub fn cmd_ec(cfg: &PipelineConfig, method: Method, resume: bool) -> Result<()> {
    let started = Instant::now();
    let entries = load_manifest(&cfg.paths.manifest)?;
    let digest = cfg.ec_digest(method);
    let taus = ec_taus(cfg, method);
    let dir = ec_dir(cfg, method);
    std::fs::create_dir_all(&dir)?;
    let res_cfg = cfg.reservoir.to_core();
    let rcc_params = cfg.rcc.to_core();

    let mut outputs = Vec::new();
    let mut skipped = 0usize;
    for entry in &entries {
        if resume && subject_ec_complete(cfg, method, entry, &taus, &digest)? {
            skipped += 1;
            continue;
        }
        let ts = load_subject(cfg, entry)?;
        let n = ts.n_channels();
        match method {
            Method::Rcc => {
                let mut pair_ids = Vec::new();
                for x in 0..n {
                    for y in (x + 1)..n {
                        pair_ids.push((x, y));
                    }
                }
                let scored: Vec<(usize, usize, Vec<DeltaScores>)> = pair_ids
                    .par_iter()
                    .map(|&(x, y)| {
                        let sx = ts.channel(x)?;
                        let sy = ts.channel(y)?;
                        let seed = seeding::pair_seed(cfg.seed, &ts.subject_id, x, y);
                        let analyzer =
                            PairAnalyzer::new(&sx, &sy, &res_cfg, &rcc_params, seed)?;
                        let per_tau: Result<Vec<DeltaScores>> =
                            taus.iter().map(|&t| analyzer.scores_at(t)).collect();
                        Ok((x, y, per_tau?))
                    })
                    .collect::<Result<_>>()?;
                for (ti, &tau) in taus.iter().enumerate() {
                    let pairs: Vec<PairScores> = scored
                        .iter()
                        .map(|&(x, y, ref per_tau)| PairScores {
                            x,
                            y,
                            scores: per_tau[ti].clone(),
                        })
                        .collect();
                    let ec = assemble_ec(n, &pairs, tau, cfg.rcc.mode, &ts.subject_id, ts.group)?;
                    let sidecar = EcSidecar {
                        subject_id: ts.subject_id.clone(),
                        group: ts.group,
                        tau,
                        n_reservoirs: cfg.rcc.n_reservoirs,
                        n_surrogates: cfg.rcc.n_surrogates,
                        seed: cfg.seed,
                        method: "rcc".to_string(),
                        order: None,
                        config_digest: digest.clone(),
                    };
                    let path = ec_path(cfg, method, &ts.subject_id, tau);
                    save_ec(&ec, &sidecar, &path)?;
                    outputs.push(path);
                }
            }
            Method::Granger => {
                let ec = subject_gc_ec(&ts, cfg.granger.order)?;
                let sidecar = EcSidecar {
                    subject_id: ts.subject_id.clone(),
                    group: ts.group,
                    tau: 0,
                    n_reservoirs: 0,
                    n_surrogates: 0,
                    seed: cfg.seed,
                    method: "granger".to_string(),
                    order: Some(cfg.granger.order),
                    config_digest: digest.clone(),
                };
                let path = ec_path(cfg, method, &ts.subject_id, 0);
                save_ec(&ec, &sidecar, &path)?;
                outputs.push(path);
            }
        }
    }
    record_stage(cfg, "ec", digest, started, outputs)?;
    println!(
        "ec ({}): {} subjects estimated, {} resumed, {} lags each",
        method.as_str(),
        entries.len() - skipped,
        skipped,
        taus.len()
    );
    Ok(())
}

// ---------------------------------------------------------------- classify

/// Loads the classifier-facing EC matrix of every subject, in manifest
/// order, refusing artifacts from a different configuration.
fn load_cohort_ec(cfg: &PipelineConfig, method: Method) -> Result<Vec<EcMatrix>> {
    let entries = load_manifest(&cfg.paths.manifest)?;
    let tau = classify_tau(cfg, method);
    let digest = cfg.ec_digest(method);
    let missing: Vec<String> = entries
        .iter()
        .filter(|e| !ec_path(cfg, method, &e.subject_id, tau).exists())
        .map(|e| e.subject_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::data(format!(
            "EC files missing for {} of {} subjects ({}); run the ec stage first",
            missing.len(),
            entries.len(),
            missing.join(", ")
        )));
    }
    let mut cohort = Vec::with_capacity(entries.len());
    for entry in &entries {
        let path = ec_path(cfg, method, &entry.subject_id, tau);
        let (mut ec, sidecar) = load_ec(&path)?;
        if sidecar.config_digest != digest {
            return Err(Error::data(format!(
                "{}: produced under configuration {} but the current one is {}; re-run the ec stage",
                path.display(),
                sidecar.config_digest,
                digest
            )));
        }
        if sidecar.group != entry.group {
            return Err(Error::data(format!(
                "{}: sidecar group {} disagrees with the manifest",
                path.display(),
                sidecar.group
            )));
        }
        ec.subject_id = entry.subject_id.clone();
        ec.group = entry.group;
        cohort.push(ec);
    }
    Ok(cohort)
}

fn classifier_spec(cfg: &PipelineConfig) -> ClassifierSpec {
    let c = &cfg.classifier;
    ClassifierSpec {
        model: c.model,
        binarize_threshold: cfg.features.threshold,
        standardize: c.standardize,
        forest_features: cfg.features.kind,
        gcn: GcnTrainConfig {
            hidden: (c.hidden[0], c.hidden[1]),
            aggregator: c.aggregator,
            epochs: c.epochs,
            lr: c.learning_rate,
        },
        forest: ForestParams {
            n_trees: c.n_trees,
            max_depth: c.max_depth,
            max_features: c.max_features,
        },
        decision_threshold: c.decision_threshold,
    }
}

fn report_path(cfg: &PipelineConfig, method: Method) -> PathBuf {
    let model = cfg.classifier.model.as_str();
    cfg.paths
        .output_dir
        .join("classify")
        .join(format!("{}_{model}_report.json", method.as_str()))
}

fn model_path(cfg: &PipelineConfig, method: Method) -> PathBuf {
    let model = cfg.classifier.model.as_str();
    cfg.paths
        .output_dir
        .join("model")
        .join(format!("{}_{model}_model.json", method.as_str()))
}

/// Cross-validates the configured classifier on the cohort's EC matrices
/// and trains a final model on the full cohort for the explain stage.
pub fn cmd_classify(cfg: &PipelineConfig, method: Method) -> Result<()> {
    let started = Instant::now();
    let cohort = load_cohort_ec(cfg, method)?;
    let spec = classifier_spec(cfg);
    let cv = CvConfig {
        k: cfg.classifier.k_folds,
        val_fraction: cfg.classifier.val_fraction,
        seed: cfg.seed,
    };
    let digest = cfg.classify_digest(method);
    let mut report = crossval(&cohort, &spec, &cv)?;
    report.method = format!("{}+{}", method.as_str(), spec.model.as_str());
    report.config_digest = Some(digest.clone());

    let report_file = report_path(cfg, method);
    std::fs::create_dir_all(report_file.parent().expect("report dir"))?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::data(format!("report serialization failed: {e}")))?;
    std::fs::write(&report_file, json)?;

    let scores_file = report_file.with_file_name(format!(
        "{}_{}_scores.csv",
        method.as_str(),
        spec.model.as_str()
    ));
    let mut csv = String::from("subject_id,fold,label,score\n");
    for row in &report.scores {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.subject_id,
            row.fold,
            row.label.as_str(),
            row.score
        ));
    }
    std::fs::write(&scores_file, csv)?;

    let mut model = train_full(&cohort, &spec, cfg.seed)?;
    model.config_digest = Some(digest.clone());
    let model_file = model_path(cfg, method);
    std::fs::create_dir_all(model_file.parent().expect("model dir"))?;
    let model_json = serde_json::to_string_pretty(&model)
        .map_err(|e| Error::data(format!("model serialization failed: {e}")))?;
    std::fs::write(&model_file, model_json)?;

    record_stage(
        cfg,
        "classify",
        digest,
        started,
        vec![report_file.clone(), scores_file, model_file],
    )?;
    let auc = report
        .mean
        .auc
        .map_or("undefined".to_string(), |a| format!("{a:.4}"));
    println!(
        "classify ({}): mean AUC {auc}, accuracy {:.4} over {} folds -> {}",
        report.method,
        report.mean.accuracy,
        report.k,
        report_file.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- explain

#[derive(Debug, Serialize)]
struct ExplainSummary {
    config_digest: String,
    model_kind: String,
    method: String,
    roi_mode: effconn::explain::RoiMode,
    /// Node-score thresholds echoed from the configuration.
    pos_threshold: f64,
    neg_threshold: f64,
    n_samples_config: usize,
    kernel_width: Option<f64>,
    explained: Vec<String>,
    /// Subjects skipped with the reason (misclassified or edgeless).
    skipped: Vec<(String, String)>,
    /// Subjects whose sample count was raised to 10 per explained edge.
    n_samples_raised: Vec<(String, usize)>,
}

fn load_trained_model(cfg: &PipelineConfig, method: Method) -> Result<TrainedModel> {
    let path = model_path(cfg, method);
    let text = std::fs::read_to_string(&path).map_err(|_| {
        Error::data(format!(
            "trained model artifact {} is missing; run the classify stage first",
            path.display()
        ))
    })?;
    let model: TrainedModel = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: unreadable model artifact: {e}", path.display())))?;
    if model.format_version != TRAINED_MODEL_FORMAT_VERSION {
        return Err(Error::data(format!(
            "{}: model format {} is not the supported {}",
            path.display(),
            model.format_version,
            TRAINED_MODEL_FORMAT_VERSION
        )));
    }
    if model.kind != cfg.classifier.model {
        return Err(Error::data(format!(
            "model artifact was trained as {} but the configuration selects {}; re-run classify",
            model.kind.as_str(),
            cfg.classifier.model.as_str()
        )));
    }
    let expected = cfg.classify_digest(method);
    if model.config_digest.as_deref() != Some(expected.as_str()) {
        return Err(Error::data(format!(
            "model artifact digest {} does not match the current configuration {}; re-run classify",
            model.config_digest.as_deref().unwrap_or("<none>"),
            expected
        )));
    }
    Ok(model)
}

/// Explains every correctly classified subject by edge perturbation and
/// aggregates node scores per group.
pub fn cmd_explain(cfg: &PipelineConfig, method: Method) -> Result<()> {
    let started = Instant::now();
    let model = load_trained_model(cfg, method)?;
    let cohort = load_cohort_ec(cfg, method)?;
    let atlas = load_atlas(&cfg.paths.atlas)?;
    let n_nodes = cohort[0].n_nodes();
    if atlas.n_nodes() != n_nodes {
        return Err(Error::data(format!(
            "atlas describes {} nodes but EC matrices have {}",
            atlas.n_nodes(),
            n_nodes
        )));
    }
    let dir = cfg.paths.output_dir.join("explain");
    std::fs::create_dir_all(&dir)?;

    let ex = &cfg.explain;
    let mut outputs = Vec::new();
    let mut explained: Vec<(Group, Vec<f64>)> = Vec::new();
    let mut summary = ExplainSummary {
        config_digest: cfg.classify_digest(method),
        model_kind: model.kind.as_str().to_string(),
        method: method.as_str().to_string(),
        roi_mode: ex.roi_mode,
        pos_threshold: ex.pos_threshold,
        neg_threshold: ex.neg_threshold,
        n_samples_config: ex.n_samples,
        kernel_width: ex.kernel_width,
        explained: Vec::new(),
        skipped: Vec::new(),
        n_samples_raised: Vec::new(),
    };
    for ec in &cohort {
        let id = ec.subject_id.clone();
        let score = model.predict_ec(ec)?;
        let predicted_patient = score >= model.decision_threshold;
        if predicted_patient != (ec.group == Group::Patient) {
            summary.skipped.push((id, "misclassified".to_string()));
            continue;
        }
        let graph = model.subject_graph(ec)?;
        let n_explained_edges = graph.n_edges().min(ex.max_edges);
        if n_explained_edges == 0 {
            summary.skipped.push((id, "no edges above threshold".to_string()));
            continue;
        }
        let needed = 10 * n_explained_edges;
        let n_samples = ex.n_samples.max(needed);
        if n_samples > ex.n_samples {
            summary.n_samples_raised.push((id.clone(), n_samples));
        }
        let params = LimeParams {
            n_samples,
            kernel_width: ex.kernel_width,
            ridge: ex.ridge,
            roi_mode: ex.roi_mode,
            thresholds: (ex.pos_threshold, ex.neg_threshold),
            max_edges: ex.max_edges,
        };
        let seed = seeding::derive_str(cfg.seed, "explain", &id);
        let map = lime_explain(|g| model.predict_graph(g), &graph, &params, seed)?;
        let edges_file = dir.join(format!("{id}_edges.csv"));
        let rois_file = dir.join(format!("{id}_rois.csv"));
        save_edge_coefficients(&map, &edges_file)?;
        save_roi_scores(&map, &rois_file)?;
        outputs.push(edges_file);
        outputs.push(rois_file);
        explained.push((ec.group, map.roi_scores));
        summary.explained.push(id);
    }

    // group-level node scores: mean over explained subjects per group
    let group_mean = |group: Group| -> Vec<f64> {
        let members: Vec<&Vec<f64>> = explained
            .iter()
            .filter(|(g, _)| *g == group)
            .map(|(_, s)| s)
            .collect();
        if members.is_empty() {
            return vec![0.0; n_nodes];
        }
        (0..n_nodes)
            .map(|v| members.iter().map(|s| s[v]).sum::<f64>() / members.len() as f64)
            .collect()
    };
    let patient_mean = group_mean(Group::Patient);
    let control_mean = group_mean(Group::Control);
    let (stroke_nodes, control_nodes) =
        threshold_rois(&patient_mean, ex.pos_threshold, ex.neg_threshold)?;

    let group_file = dir.join("group_roi_scores.csv");
    let mut csv = String::from("node,node_name,patient_mean,control_mean,selected_as\n");
    for v in 0..n_nodes {
        let selected = if stroke_nodes.contains(&v) {
            "stroke"
        } else if control_nodes.contains(&v) {
            "control"
        } else {
            "none"
        };
        csv.push_str(&format!(
            "{v},{},{},{},{selected}\n",
            atlas.entry(v)?.node_name,
            patient_mean[v],
            control_mean[v]
        ));
    }
    std::fs::write(&group_file, csv)?;
    outputs.push(group_file);

    let histogram_file = dir.join("network_histogram.json");
    let histograms = BTreeMap::from([
        ("stroke".to_string(), map_to_networks(&stroke_nodes, &atlas)?),
        ("control".to_string(), map_to_networks(&control_nodes, &atlas)?),
    ]);
    let json = serde_json::to_string_pretty(&histograms)
        .map_err(|e| Error::data(format!("histogram serialization failed: {e}")))?;
    std::fs::write(&histogram_file, json)?;
    outputs.push(histogram_file);

    let summary_file = dir.join("explain_summary.json");
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::data(format!("summary serialization failed: {e}")))?;
    std::fs::write(&summary_file, json)?;
    outputs.push(summary_file);

    record_stage(cfg, "explain", cfg.classify_digest(method), started, outputs)?;
    println!(
        "explain: {} subjects explained, {} skipped, {} stroke / {} control nodes selected",
        summary.explained.len(),
        summary.skipped.len(),
        stroke_nodes.len(),
        control_nodes.len()
    );
    Ok(())
}

// ---------------------------------------------------------------- report

fn square_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Emits the plot-ready summary bundle: skill curves for one pair per
/// group, hemispheric block means with group t-tests, group-average EC
/// matrices, and the cross-validation metric table.
pub fn cmd_report(cfg: &PipelineConfig, method: Method) -> Result<()> {
    let started = Instant::now();
    let entries = load_manifest(&cfg.paths.manifest)?;
    let tau = classify_tau(cfg, method);

    // every missing prerequisite is listed, not just the first
    let mut missing = Vec::new();
    for entry in &entries {
        let p = ec_path(cfg, method, &entry.subject_id, tau);
        if !p.exists() {
            missing.push(p.display().to_string());
        }
    }
    let report_file = report_path(cfg, method);
    if !report_file.exists() {
        missing.push(report_file.display().to_string());
    }
    if !cfg.paths.atlas.exists() {
        missing.push(cfg.paths.atlas.display().to_string());
    }
    if !missing.is_empty() {
        return Err(Error::data(format!(
            "missing stage outputs:\n  {}",
            missing.join("\n  ")
        )));
    }

    let cohort = load_cohort_ec(cfg, method)?;
    let atlas = load_atlas(&cfg.paths.atlas)?;
    let dir = cfg.paths.output_dir.join("report");
    std::fs::create_dir_all(&dir)?;
    let mut outputs = Vec::new();

    // group-average EC matrices
    for group in [Group::Control, Group::Patient] {
        let members: Vec<&EcMatrix> = cohort.iter().filter(|e| e.group == group).collect();
        if members.is_empty() {
            continue;
        }
        let n = members[0].n_nodes();
        let mut mean = DMatrix::zeros(n, n);
        for m in &members {
            mean += &m.scores;
        }
        mean /= members.len() as f64;
        let path = dir.join(format!("mean_ec_{}.csv", group.as_str()));
        std::fs::write(&path, square_csv(&mean))?;
        outputs.push(path);
    }

    // hemispheric block means per subject, averaged per group, plus
    // per-block two-sample t-tests
    let hemispheres = atlas.hemispheres();
    let mut by_group: BTreeMap<&'static str, Vec<[f64; 4]>> = BTreeMap::new();
    for ec in &cohort {
        let h = hemispheric_summary(ec, &hemispheres)?;
        by_group
            .entry(ec.group.as_str())
            .or_default()
            .push([h.ll, h.rr, h.lr, h.rl]);
    }
    let block_names = ["ll", "rr", "lr", "rl"];
    let means_file = dir.join("hemispheric_means.csv");
    let mut csv = String::from("group,ll,rr,lr,rl\n");
    for (group, rows) in &by_group {
        let k = rows.len() as f64;
        let mean: Vec<String> = (0..4)
            .map(|b| format!("{}", rows.iter().map(|r| r[b]).sum::<f64>() / k))
            .collect();
        csv.push_str(&format!("{group},{}\n", mean.join(",")));
    }
    std::fs::write(&means_file, csv)?;
    outputs.push(means_file);

    if let (Some(controls), Some(patients)) = (by_group.get("control"), by_group.get("patient")) {
        let ttest_file = dir.join("hemispheric_ttest.csv");
        let mut csv = String::from("block,t,p\n");
        for (b, name) in block_names.iter().enumerate() {
            let a: Vec<f64> = patients.iter().map(|r| r[b]).collect();
            let c: Vec<f64> = controls.iter().map(|r| r[b]).collect();
            let (t, p) = group_ttest(&a, &c)?;
            csv.push_str(&format!("{name},{t},{p}\n"));
        }
        std::fs::write(&ttest_file, csv)?;
        outputs.push(ttest_file);
    }

    // prediction-skill curves for the first subject of each group,
    // channel pair (0, 1), with the same seeds the ec stage used
    if method == Method::Rcc {
        let res_cfg = cfg.reservoir.to_core();
        let rcc_params = cfg.rcc.to_core();
        for group in [Group::Control, Group::Patient] {
            let Some(entry) = entries.iter().find(|e| e.group == group) else {
                continue;
            };
            let ts = load_subject(cfg, entry)?;
            let sx = ts.channel(0)?;
            let sy = ts.channel(1)?;
            let seed = seeding::pair_seed(cfg.seed, &ts.subject_id, 0, 1);
            let analyzer = PairAnalyzer::new(&sx, &sy, &res_cfg, &rcc_params, seed)?;
            let curve = analyzer.skill_curve(true)?;
            let path = dir.join(format!("skill_curve_{}.csv", group.as_str()));
            save_skill_curve(&curve, &path)?;
            outputs.push(path);
        }
    }

    // metric table from the cross-validation report
    let text = std::fs::read_to_string(&report_file)?;
    let report: effconn::crossval::CvReport = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: unreadable report: {e}", report_file.display())))?;
    let metrics_file = dir.join("metrics_table.csv");
    let mut csv = String::from("fold,auc,accuracy,precision,recall,f1\n");
    let fmt_auc = |a: Option<f64>| a.map_or(String::new(), |v| format!("{v}"));
    for f in &report.per_fold {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            f.fold,
            fmt_auc(f.metrics.auc),
            f.metrics.accuracy,
            f.metrics.precision,
            f.metrics.recall,
            f.metrics.f1
        ));
    }
    for (name, m) in [("mean", &report.mean), ("std", &report.std)] {
        csv.push_str(&format!(
            "{name},{},{},{},{},{}\n",
            fmt_auc(m.auc),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1
        ));
    }
    std::fs::write(&metrics_file, csv)?;
    outputs.push(metrics_file);

    record_stage(cfg, "report", cfg.digest(), started, outputs)?;
    println!("report: summary bundle written to {}", dir.display());
    Ok(())
}
