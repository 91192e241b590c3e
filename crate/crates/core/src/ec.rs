//! Effective-connectivity matrices and their control-group standardization.
//!
//! An `EcMatrix` collects per-pair causality scores for one subject at one
//! lag: entry [x, y] scores the directed influence of channel x on channel y
//! (row = source). Before graph construction, matrices are z-scored edge by
//! edge against the control group.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table;
use crate::timeseries::Group;

/// Floor applied to control standard deviations before dividing.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EcMatrix {
    /// N×N scores, row = source node, column = target node.
    pub scores: DMatrix<f64>,
    pub tau: i64,
    pub subject_id: String,
    pub group: Group,
}

impl EcMatrix {
    pub fn new(scores: DMatrix<f64>, tau: i64, subject_id: impl Into<String>, group: Group) -> Result<Self> {
        if scores.nrows() != scores.ncols() {
            return Err(Error::argument(format!(
                "EC matrix must be square, got {}×{}",
                scores.nrows(),
                scores.ncols()
            )));
        }
        if scores.nrows() < 2 {
            return Err(Error::argument("EC matrix needs at least 2 nodes"));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("EC matrix contains non-finite values"));
        }
        if (0..scores.nrows()).any(|i| scores[(i, i)] != 0.0) {
            return Err(Error::data("EC matrix diagonal must be zero"));
        }
        Ok(EcMatrix {
            scores,
            tau,
            subject_id: subject_id.into(),
            group,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.scores.nrows()
    }
}

/// Edgewise mean and standard deviation of the control group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: DMatrix<f64>,
    pub std: DMatrix<f64>,
}

/// Computes edgewise control statistics (population std, floored).
pub fn control_stats(controls: &[&EcMatrix]) -> Result<StandardizationStats> {
    let Some(first) = controls.first() else {
        return Err(Error::data("control group is empty"));
    };
    let n = first.n_nodes();
    if controls.iter().any(|m| m.n_nodes() != n) {
        return Err(Error::argument("control matrices differ in shape"));
    }
    let count = controls.len() as f64;
    let mut mean = DMatrix::zeros(n, n);
    for m in controls {
        mean += &m.scores;
    }
    mean /= count;
    let mut var = DMatrix::zeros(n, n);
    for m in controls {
        let d = &m.scores - &mean;
        var += d.component_mul(&d);
    }
    var /= count;
    let std = var.map(|v| v.sqrt().max(STD_FLOOR));
    Ok(StandardizationStats { mean, std })
}

/// Standardizes every matrix edgewise: (value − mean) / std.
///
/// The diagonal is forced back to zero so self-edges never acquire an
/// artificial offset from the centering.
pub fn zscore_edges(samples: &[EcMatrix], stats: &StandardizationStats) -> Result<Vec<EcMatrix>> {
    let n = stats.mean.nrows();
    if stats.std.nrows() != n || stats.std.ncols() != stats.mean.ncols() {
        return Err(Error::argument("standardization stats shapes disagree"));
    }
    samples
        .iter()
        .map(|m| {
            if m.n_nodes() != n {
                return Err(Error::argument(format!(
                    "subject {} has {} nodes, stats have {n}",
                    m.subject_id,
                    m.n_nodes()
                )));
            }
            let mut z = (&m.scores - &stats.mean).component_div(&stats.std);
            for i in 0..n {
                z[(i, i)] = 0.0;
            }
            Ok(EcMatrix {
                scores: z,
                tau: m.tau,
                subject_id: m.subject_id.clone(),
                group: m.group,
            })
        })
        .collect()
}

/// Inverts `zscore_edges` given the same stats (diagonal stays zero).
pub fn unzscore_edges(samples: &[EcMatrix], stats: &StandardizationStats) -> Result<Vec<EcMatrix>> {
    samples
        .iter()
        .map(|m| {
            let mut v = m.scores.component_mul(&stats.std) + &stats.mean;
            for i in 0..v.nrows() {
                v[(i, i)] = 0.0;
            }
            EcMatrix::new(v, m.tau, m.subject_id.clone(), m.group)
        })
        .collect()
}

/// Metadata stored next to each EC matrix file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EcSidecar {
    pub subject_id: String,
    pub group: Group,
    pub tau: i64,
    pub n_reservoirs: usize,
    pub n_surrogates: usize,
    pub seed: u64,
    /// Estimator that produced the matrix ("rcc" or "granger").
    #[serde(default)]
    pub method: String,
    /// Autoregressive order, present for Granger matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Digest of the configuration slice that determines these scores.
    #[serde(default)]
    pub config_digest: String,
}

/// Writes an EC matrix as a headerless N×N CSV plus a JSON sidecar.
pub fn save_ec(ec: &EcMatrix, sidecar: &EcSidecar, csv_path: &Path) -> Result<()> {
    let n = ec.n_nodes();
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| table::fmt_f64(ec.scores[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(csv_path, out)?;
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| Error::data(format!("cannot encode sidecar: {e}")))?;
    fs::write(sidecar_path(csv_path), json)?;
    Ok(())
}

/// Loads an EC matrix and its sidecar back.
pub fn load_ec(csv_path: &Path) -> Result<(EcMatrix, EcSidecar)> {
    let lines = table::read_lines(csv_path)?;
    let n = lines.len();
    if n < 2 {
        return Err(Error::data(format!(
            "{}: EC matrix needs at least 2 rows",
            csv_path.display()
        )));
    }
    let mut scores = DMatrix::zeros(n, n);
    for (i, line) in lines.iter().enumerate() {
        let fields = table::split_fields(line);
        table::expect_width(csv_path, i + 1, &fields, n)?;
        for (j, f) in fields.iter().enumerate() {
            scores[(i, j)] = table::parse_cell(csv_path, i + 1, j + 1, f)?;
        }
    }
    let side_path = sidecar_path(csv_path);
    let text = fs::read_to_string(&side_path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", side_path.display())))?;
    let sidecar: EcSidecar = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: invalid sidecar: {e}", side_path.display())))?;
    let ec = EcMatrix::new(scores, sidecar.tau, sidecar.subject_id.clone(), sidecar.group)?;
    Ok((ec, sidecar))
}

/// Sidecar path for a matrix file: same stem, `.json` extension.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}
