//! Multivariate time series: loading, simulation, surrogates, and splits.
//!
//! Series are stored as T×N matrices (rows = samples, columns = channels).
//! The chaotic generator implements a pair of coupled logistic maps,
//!   x_{t+1} = x_t (r_x − r_x x_t − β_xy y_t)
//!   y_{t+1} = y_t (r_y − r_y y_t − β_yx x_t)
//! so `beta_yx` injects channel x into channel y's update: with beta_yx > 0
//! and beta_xy = 0, x drives y.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table;

/// Cohort label of a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Control,
    Patient,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::Patient => "patient",
        }
    }
}

impl FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "control" => Ok(Group::Control),
            "patient" => Ok(Group::Patient),
            other => Err(Error::data(format!(
                "unknown group {other:?}, expected \"control\" or \"patient\""
            ))),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Side of a patient's lesion, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionSide {
    Left,
    Right,
    None,
}

impl LesionSide {
    pub fn as_str(&self) -> &'static str {
        match self {
            LesionSide::Left => "left",
            LesionSide::Right => "right",
            LesionSide::None => "none",
        }
    }
}

impl FromStr for LesionSide {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(LesionSide::Left),
            "right" => Ok(LesionSide::Right),
            "none" => Ok(LesionSide::None),
            other => Err(Error::data(format!(
                "unknown lesion side {other:?}, expected left, right, or none"
            ))),
        }
    }
}

/// One subject's recording: T samples of N channels.
#[derive(Debug, Clone)]
pub struct TimeSeriesSet {
    /// T×N data matrix, rows ordered in time.
    pub data: DMatrix<f64>,
    pub subject_id: String,
    pub group: Group,
    /// Time between samples; 1.0 means lags are counted in repetition times.
    pub sampling_period: f64,
    pub channel_names: Vec<String>,
}

impl TimeSeriesSet {
    pub fn new(
        data: DMatrix<f64>,
        subject_id: impl Into<String>,
        group: Group,
        sampling_period: f64,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::data(format!(
                "time series needs at least 2 samples, got {}",
                data.nrows()
            )));
        }
        if data.ncols() < 2 {
            return Err(Error::data(format!(
                "time series needs at least 2 channels, got {}",
                data.ncols()
            )));
        }
        if channel_names.len() != data.ncols() {
            return Err(Error::argument(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                data.ncols()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            let (r, c) = (bad % data.nrows(), bad / data.nrows());
            return Err(Error::data(format!(
                "non-finite value at sample {r}, channel {c}"
            )));
        }
        if !(sampling_period.is_finite() && sampling_period > 0.0) {
            return Err(Error::argument("sampling_period must be positive"));
        }
        Ok(TimeSeriesSet {
            data,
            subject_id: subject_id.into(),
            group,
            sampling_period,
            channel_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.data.ncols()
    }

    /// Copies one channel out as a contiguous vector.
    pub fn channel(&self, idx: usize) -> Result<Vec<f64>> {
        if idx >= self.n_channels() {
            return Err(Error::argument(format!(
                "channel {idx} out of range (N = {})",
                self.n_channels()
            )));
        }
        Ok(self.data.column(idx).iter().copied().collect())
    }

    /// Z-scores every channel in place over time (population std, floored).
    ///
    /// Constant channels map to all zeros rather than dividing by zero.
    pub fn zscore_channels(&self) -> TimeSeriesSet {
        let mut out = self.clone();
        let t = out.data.nrows() as f64;
        for mut col in out.data.column_iter_mut() {
            let mean = col.iter().sum::<f64>() / t;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
            let std = var.sqrt().max(1e-8);
            for v in col.iter_mut() {
                *v = (*v - mean) / std;
            }
        }
        out
    }
}

/// Checks that every subject in a cohort shares channel count and ordering.
pub fn validate_cohort(cohort: &[TimeSeriesSet]) -> Result<()> {
    let Some(first) = cohort.first() else {
        return Err(Error::data("empty cohort"));
    };
    for ts in &cohort[1..] {
        if ts.n_channels() != first.n_channels() || ts.channel_names != first.channel_names {
            return Err(Error::data(format!(
                "subject {} has channel layout different from {}",
                ts.subject_id, first.subject_id
            )));
        }
    }
    Ok(())
}

/// Loads a CSV time-series file: one header row of channel names, then one
/// row per sample. The subject id is taken from the file stem.
pub fn load_timeseries(path: &Path, group: Group) -> Result<TimeSeriesSet> {
    let lines = table::read_lines(path)?;
    if lines.len() < 2 {
        return Err(Error::data(format!(
            "{}: expected a header row and at least one data row",
            path.display()
        )));
    }
    let names = table::split_fields(&lines[0]);
    let n = names.len();
    let t = lines.len() - 1;
    let mut data = DMatrix::zeros(t, n);
    for (i, line) in lines[1..].iter().enumerate() {
        let fields = table::split_fields(line);
        table::expect_width(path, i + 2, &fields, n)?;
        for (j, field) in fields.iter().enumerate() {
            data[(i, j)] = table::parse_cell(path, i + 2, j + 1, field)?;
        }
    }
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    TimeSeriesSet::new(data, subject_id, group, 1.0, names)
}

/// Writes a time-series file in the format `load_timeseries` reads.
pub fn save_timeseries(ts: &TimeSeriesSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&ts.channel_names.join(","));
    out.push('\n');
    for i in 0..ts.n_samples() {
        let row: Vec<String> = (0..ts.n_channels())
            .map(|j| table::fmt_f64(ts.data[(i, j)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parameters of the two-species coupled logistic map.
///
/// `beta_xy` scales the influence of y inside x's update; `beta_yx` scales
/// the influence of x inside y's update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupledLogisticParams {
    pub r_x: f64,
    pub r_y: f64,
    pub beta_xy: f64,
    pub beta_yx: f64,
    pub x0: f64,
    pub y0: f64,
    pub transient: usize,
}

impl Default for CoupledLogisticParams {
    fn default() -> Self {
        CoupledLogisticParams {
            r_x: 3.8,
            r_y: 3.8,
            beta_xy: 0.0,
            beta_yx: 0.0,
            x0: 0.4,
            y0: 0.2,
            transient: 100,
        }
    }
}

impl CoupledLogisticParams {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("r_x", self.r_x), ("r_y", self.r_y)] {
            if !(3.6..=4.0).contains(&r) {
                return Err(Error::argument(format!(
                    "{name} = {r} outside the chaotic regime [3.6, 4.0]"
                )));
            }
        }
        if self.beta_xy < 0.0 || self.beta_yx < 0.0 {
            return Err(Error::argument("coupling strengths must be non-negative"));
        }
        for (name, v) in [("x0", self.x0), ("y0", self.y0)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::argument(format!(
                    "{name} = {v} must lie in the open interval (0,1)"
                )));
            }
        }
        Ok(())
    }
}

/// Simulates the coupled logistic pair for `t_samples` samples after burn-in.
///
/// The seed perturbs the initial conditions only (uniform within ±0.05,
/// clamped inside (0,1)); the dynamics themselves are noise-free.
pub fn simulate_coupled_logistic(
    params: &CoupledLogisticParams,
    t_samples: usize,
    seed: u64,
) -> Result<TimeSeriesSet> {
    params.validate()?;
    if t_samples <= params.transient {
        return Err(Error::argument(format!(
            "t_samples = {t_samples} must exceed the transient ({})",
            params.transient
        )));
    }
    if t_samples < 2 {
        return Err(Error::argument("need at least 2 samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = (params.x0 + rng.random_range(-0.05..0.05)).clamp(1e-3, 1.0 - 1e-3);
    let mut y = (params.y0 + rng.random_range(-0.05..0.05)).clamp(1e-3, 1.0 - 1e-3);

    let mut data = DMatrix::zeros(t_samples, 2);
    for step in 0..(params.transient + t_samples) {
        if step >= params.transient {
            let i = step - params.transient;
            data[(i, 0)] = x;
            data[(i, 1)] = y;
        }
        let nx = x * (params.r_x - params.r_x * x - params.beta_xy * y);
        let ny = y * (params.r_y - params.r_y * y - params.beta_yx * x);
        if !(nx > 0.0 && nx < 1.0) || !(ny > 0.0 && ny < 1.0) {
            return Err(Error::Dynamics {
                step,
                msg: format!("state left (0,1): x = {nx}, y = {ny}"),
            });
        }
        x = nx;
        y = ny;
    }
    TimeSeriesSet::new(
        data,
        "sim",
        Group::Control,
        1.0,
        vec!["x".to_string(), "y".to_string()],
    )
}

/// Simulates a network of N logistic maps with pairwise couplings.
///
/// `coupling[(i, j)]` scales channel i's influence inside channel j's update
/// (row = source), generalizing the two-species map:
///   x_j(t+1) = x_j(t) (r_j − r_j x_j(t) − Σ_i coupling[(i,j)] x_i(t)).
pub fn simulate_logistic_network(
    growth: &[f64],
    coupling: &DMatrix<f64>,
    t_samples: usize,
    transient: usize,
    seed: u64,
) -> Result<TimeSeriesSet> {
    let n = growth.len();
    if n < 2 {
        return Err(Error::argument("network needs at least 2 channels"));
    }
    if coupling.nrows() != n || coupling.ncols() != n {
        return Err(Error::argument("coupling matrix shape must match growth"));
    }
    for &r in growth {
        if !(3.6..=4.0).contains(&r) {
            return Err(Error::argument(format!(
                "growth rate {r} outside the chaotic regime [3.6, 4.0]"
            )));
        }
    }
    if coupling.iter().any(|&b| b < 0.0) {
        return Err(Error::argument("coupling strengths must be non-negative"));
    }
    if (0..n).any(|i| coupling[(i, i)] != 0.0) {
        return Err(Error::argument("self-coupling must be zero"));
    }
    if t_samples <= transient || t_samples < 2 {
        return Err(Error::argument("t_samples must exceed the transient"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
    let mut next = vec![0.0; n];
    let mut data = DMatrix::zeros(t_samples, n);
    for step in 0..(transient + t_samples) {
        if step >= transient {
            for j in 0..n {
                data[(step - transient, j)] = state[j];
            }
        }
        for j in 0..n {
            let mut drive = 0.0;
            for i in 0..n {
                drive += coupling[(i, j)] * state[i];
            }
            let v = state[j] * (growth[j] - growth[j] * state[j] - drive);
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Dynamics {
                    step,
                    msg: format!("channel {j} left (0,1): {v}"),
                });
            }
            next[j] = v;
        }
        state.copy_from_slice(&next);
    }
    let names = (0..n).map(|j| format!("ch{j}")).collect();
    TimeSeriesSet::new(data, "sim", Group::Control, 1.0, names)
}

/// A uniformly random permutation of 0..n.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx
}

/// Value-permutation surrogate: the same samples in uniformly random order.
pub fn shuffle_surrogate(series: &[f64], seed: u64) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::argument("surrogate needs at least 2 samples"));
    }
    let perm = permutation(series.len(), seed);
    Ok(perm.into_iter().map(|i| series[i]).collect())
}

/// Splits a series into contiguous train/test segments, preserving order.
pub fn train_test_split(
    ts: &TimeSeriesSet,
    train_fraction: f64,
) -> Result<(TimeSeriesSet, TimeSeriesSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::argument(format!(
            "train_fraction = {train_fraction} must lie in (0,1)"
        )));
    }
    let t = ts.n_samples();
    let cut = (train_fraction * t as f64).floor() as usize;
    if cut < 2 || t - cut < 2 {
        return Err(Error::argument(format!(
            "split of {t} samples at fraction {train_fraction} leaves a segment shorter than 2"
        )));
    }
    let head = ts.data.rows(0, cut).into_owned();
    let tail = ts.data.rows(cut, t - cut).into_owned();
    let train = TimeSeriesSet::new(
        head,
        ts.subject_id.clone(),
        ts.group,
        ts.sampling_period,
        ts.channel_names.clone(),
    )?;
    let test = TimeSeriesSet::new(
        tail,
        ts.subject_id.clone(),
        ts.group,
        ts.sampling_period,
        ts.channel_names.clone(),
    )?;
    Ok((train, test))
}

/// One row of a cohort manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortEntry {
    pub subject_id: String,
    pub path: String,
    pub group: Group,
    pub lesion_side: LesionSide,
}

/// Loads a cohort manifest: subject_id, path, group, lesion_side.
pub fn load_manifest(path: &Path) -> Result<Vec<CohortEntry>> {
    let lines = table::read_lines(path)?;
    if lines.is_empty() {
        return Err(Error::data(format!("{}: empty manifest", path.display())));
    }
    let header = table::split_fields(&lines[0]);
    let expected = ["subject_id", "path", "group", "lesion_side"];
    if header != expected {
        return Err(Error::data(format!(
            "{}: manifest header must be {:?}, found {:?}",
            path.display(),
            expected.join(","),
            header.join(",")
        )));
    }
    let mut entries = Vec::new();
    for (i, line) in lines[1..].iter().enumerate() {
        let fields = table::split_fields(line);
        table::expect_width(path, i + 2, &fields, 4)?;
        entries.push(CohortEntry {
            subject_id: fields[0].clone(),
            path: fields[1].clone(),
            group: fields[2].parse()?,
            lesion_side: fields[3].parse()?,
        });
    }
    if entries.is_empty() {
        return Err(Error::data(format!(
            "{}: manifest lists no subjects",
            path.display()
        )));
    }
    Ok(entries)
}

pub fn save_manifest(entries: &[CohortEntry], path: &Path) -> Result<()> {
    let mut out = String::from("subject_id,path,group,lesion_side\n");
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.subject_id,
            e.path,
            e.group.as_str(),
            e.lesion_side.as_str()
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn toy_set() -> TimeSeriesSet {
        let data = DMatrix::from_row_slice(4, 2, &[0.1, 1.0, 0.2, 2.0, 0.3, 3.0, 0.4, 4.0]);
        TimeSeriesSet::new(data, "s01", Group::Control, 1.0, vec!["a".into(), "b".into()])
            .unwrap()
    }

    #[test]
    fn load_reads_zeros_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.csv");
        std::fs::write(&path, "a,b\n0,0\n0,0\n0,0\n").unwrap();
        let ts = load_timeseries(&path, Group::Control).unwrap();
        assert_eq!(ts.n_samples(), 3);
        assert_eq!(ts.n_channels(), 2);
        assert!(ts.data.iter().all(|&v| v == 0.0));
        assert_eq!(ts.subject_id, "z");
    }

    #[test]
    fn load_rejects_nan_cell_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n0.1,0.2\n0.3,NaN\n").unwrap();
        let err = load_timeseries(&path, Group::Control).unwrap_err();
        match err {
            Error::Parse { row, col, .. } => {
                assert_eq!(row, 3);
                assert_eq!(col, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "a,b\n0.1,0.2\n0.3\n").unwrap();
        assert!(matches!(
            load_timeseries(&path, Group::Control),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn save_then_load_round_trips_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let params = CoupledLogisticParams {
            beta_yx: 0.1,
            transient: 50,
            ..Default::default()
        };
        let ts = simulate_coupled_logistic(&params, 64, 3).unwrap();
        save_timeseries(&ts, &path).unwrap();
        let back = load_timeseries(&path, ts.group).unwrap();
        assert_eq!(ts.data, back.data);
        assert_eq!(ts.channel_names, back.channel_names);
    }

    #[test]
    fn decoupled_channels_follow_the_scalar_recursion() {
        let params = CoupledLogisticParams::default();
        let ts = simulate_coupled_logistic(&params, 200, 11).unwrap();
        for i in 0..ts.n_samples() - 1 {
            let x = ts.data[(i, 0)];
            let y = ts.data[(i, 1)];
            let nx = x * (params.r_x - params.r_x * x - params.beta_xy * y);
            let ny = y * (params.r_y - params.r_y * y - params.beta_yx * x);
            assert_eq!(ts.data[(i + 1, 0)], nx);
            assert_eq!(ts.data[(i + 1, 1)], ny);
        }
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let params = CoupledLogisticParams {
            beta_yx: 0.1,
            ..Default::default()
        };
        let a = simulate_coupled_logistic(&params, 150, 5).unwrap();
        let b = simulate_coupled_logistic(&params, 150, 5).unwrap();
        let c = simulate_coupled_logistic(&params, 150, 6).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn simulation_rejects_short_runs_and_bad_params() {
        let params = CoupledLogisticParams::default();
        assert!(simulate_coupled_logistic(&params, 100, 0)
            .unwrap_err()
            .to_string()
            .contains("transient"));
        let bad = CoupledLogisticParams {
            r_x: 3.0,
            ..Default::default()
        };
        assert!(matches!(
            simulate_coupled_logistic(&bad, 500, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn divergence_reports_step_index() {
        // A strong asymmetric coupling drives y negative quickly.
        let params = CoupledLogisticParams {
            beta_yx: 3.5,
            ..Default::default()
        };
        match simulate_coupled_logistic(&params, 2000, 1) {
            Err(Error::Dynamics { step, .. }) => assert!(step < 2100),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_coupling_channels_decorrelate() {
        // Chaotic mixing: independent maps stay uncorrelated at lag 0.
        for seed in 0..20 {
            let params = CoupledLogisticParams::default();
            let ts = simulate_coupled_logistic(&params, 1000, seed).unwrap();
            let x = ts.channel(0).unwrap();
            let y = ts.channel(1).unwrap();
            let r = stats::pearson(&x, &y).unwrap();
            assert!(r.abs() < 0.2, "seed {seed}: |r| = {}", r.abs());
        }
    }

    #[test]
    fn surrogate_preserves_multiset_and_moments() {
        let series: Vec<f64> = (0..50).map(|i| ((i * 37) % 13) as f64 * 0.25).collect();
        let sur = shuffle_surrogate(&series, 9).unwrap();
        let mut a = series.clone();
        let mut b = sur.clone();
        a.sort_by(|x, y| x.total_cmp(y));
        b.sort_by(|x, y| x.total_cmp(y));
        assert_eq!(a, b);
        assert_eq!(stats::mean(&series), stats::mean(&sur));
        // Same multiset summed in a different order: variance agrees to fp.
        assert!((stats::variance(&series) - stats::variance(&sur)).abs() < 1e-12);
    }

    #[test]
    fn surrogate_of_constant_vector_is_identical() {
        let series = vec![2.5; 10];
        assert_eq!(shuffle_surrogate(&series, 4).unwrap(), series);
    }

    #[test]
    fn surrogate_permutations_are_uniform() {
        // On three items each of the 6 orders should appear ~1/6 of the time.
        let series = [1.0, 2.0, 3.0];
        let mut counts = std::collections::HashMap::new();
        for seed in 0..1000 {
            let s = shuffle_surrogate(&series, seed).unwrap();
            let key = format!("{s:?}");
            *counts.entry(key).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (_, c) in counts {
            let f = c as f64 / 1000.0;
            assert!((f - 1.0 / 6.0).abs() < 0.05, "frequency {f}");
        }
    }

    #[test]
    fn split_respects_fraction_and_order() {
        let data = DMatrix::from_fn(10, 2, |i, j| (i * 2 + j) as f64);
        let ts =
            TimeSeriesSet::new(data, "s", Group::Control, 1.0, vec!["a".into(), "b".into()])
                .unwrap();
        let (train, test) = train_test_split(&ts, 0.8).unwrap();
        assert_eq!(train.n_samples(), 8);
        assert_eq!(test.n_samples(), 2);
        let mut rebuilt = Vec::new();
        rebuilt.extend(train.data.row_iter().map(|r| r[(0, 0)]));
        rebuilt.extend(test.data.row_iter().map(|r| r[(0, 0)]));
        let original: Vec<f64> = ts.data.column(0).iter().copied().collect();
        assert_eq!(rebuilt, original);
    }

    #[test]
    fn split_rejects_tiny_segments() {
        let data = DMatrix::zeros(5, 2);
        let ts =
            TimeSeriesSet::new(data, "s", Group::Control, 1.0, vec!["a".into(), "b".into()])
                .unwrap();
        assert!(matches!(
            train_test_split(&ts, 0.9),
            Err(Error::Argument(_))
        ));
        assert!(train_test_split(&ts, 1.0).is_err());
    }

    #[test]
    fn zscore_centers_and_scales_channels() {
        let ts = toy_set().zscore_channels();
        for j in 0..2 {
            let col: Vec<f64> = ts.data.column(j).iter().copied().collect();
            assert!(stats::mean(&col).abs() < 1e-12);
            assert!((stats::std_dev(&col) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_maps_constant_channel_to_zero() {
        let data = DMatrix::from_row_slice(3, 2, &[5.0, 1.0, 5.0, 2.0, 5.0, 3.0]);
        let ts =
            TimeSeriesSet::new(data, "s", Group::Control, 1.0, vec!["a".into(), "b".into()])
                .unwrap();
        let z = ts.zscore_channels();
        assert!(z.data.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let entries = vec![
            CohortEntry {
                subject_id: "c01".into(),
                path: "data/c01.csv".into(),
                group: Group::Control,
                lesion_side: LesionSide::None,
            },
            CohortEntry {
                subject_id: "p01".into(),
                path: "data/p01.csv".into(),
                group: Group::Patient,
                lesion_side: LesionSide::Left,
            },
        ];
        save_manifest(&entries, &path).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].subject_id, "p01");
        assert_eq!(back[1].group, Group::Patient);
        assert_eq!(back[1].lesion_side, LesionSide::Left);

        std::fs::write(&path, "subject_id,path,group\nc01,x.csv,control\n").unwrap();
        assert!(load_manifest(&path).is_err());
        std::fs::write(
            &path,
            "subject_id,path,group,lesion_side\nc01,x.csv,weird,none\n",
        )
        .unwrap();
        assert!(load_manifest(&path).is_err());
    }

    #[test]
    fn network_generalizes_the_pair_map() {
        // A 2-node network with the same parameters follows the same update
        // rule as the dedicated pair generator.
        let mut coupling = DMatrix::zeros(2, 2);
        coupling[(0, 1)] = 0.1;
        let net = simulate_logistic_network(&[3.8, 3.8], &coupling, 300, 100, 7).unwrap();
        for i in 0..net.n_samples() - 1 {
            let x = net.data[(i, 0)];
            let y = net.data[(i, 1)];
            assert_eq!(net.data[(i + 1, 0)], x * (3.8 - 3.8 * x));
            assert_eq!(net.data[(i + 1, 1)], y * (3.8 - 3.8 * y - 0.1 * x));
        }
    }

    #[test]
    fn network_rejects_self_coupling() {
        let mut coupling = DMatrix::zeros(2, 2);
        coupling[(0, 0)] = 0.1;
        assert!(simulate_logistic_network(&[3.8, 3.8], &coupling, 300, 100, 7).is_err());
    }
}
