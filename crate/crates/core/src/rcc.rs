//! Reservoir-computing causality.
//!
//! For a channel pair (x, y) and a lag τ, an ensemble of fixed random
//! reservoirs is driven by one channel and a ridge readout is trained to
//! predict the other channel shifted by τ; the prediction skill
//! ρ_{x→y}(τ) is the Pearson correlation between prediction and truth on a
//! held-out suffix, averaged over reservoirs. The skill difference
//! Δ_{x→y}(τ) = ρ_{x→y}(τ) − ρ_{y→x}(τ) indicates direction, and both
//! quantities are tested against shuffled-target surrogates to produce
//! empirical p-values. These compress into δ-scores,
//!   δ_{x→y}(τ>0) = (1 − p_{ρ_{x→y}>0})(1 − p_{Δ_{x→y}>0}),
//!   δ_{x→y}(τ<0) = (1 − p_{ρ_{y→x}>0})(1 − p_{Δ_{y→x}>0}),
//!   δ_{x↔y}(τ)  = (1 − p_{ρ_{x→y}>0})(1 − p_{ρ_{y→x}>0}) p_{Δ≠0},
//! which assemble into a per-subject effective-connectivity matrix
//! A_τ[x, y] = δ_{x→y}(τ), optionally plus the bidirectional term.
//!
//! The skill of a cause→effect readout peaks at negative lags: the effect's
//! history embeds the cause, so the reverse-direction curve carries the
//! evidence (the τ<0 branch above encodes exactly this).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use crate::ec::EcMatrix;
use crate::error::{Error, Result};
use crate::reservoir::{init_reservoir, Reservoir, ReservoirConfig};
use crate::seeding;
use crate::stats;
use crate::table;
use crate::timeseries::{permutation, Group, TimeSeriesSet};

/// How the peak of a skill curve is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakMode {
    /// Lag of maximum skill (the default reading of "peak value").
    SkillMax,
    /// Lag of minimum skill, for literal reproduction of the argmin notation.
    SkillMin,
}

/// Whether assembled EC entries include the bidirectional term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EcMode {
    Unidirectional,
    Bidirectional,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RccParams {
    /// Lag grid in sampling-period units; strictly increasing.
    pub taus: Vec<i64>,
    pub n_reservoirs: usize,
    pub n_surrogates: usize,
    /// Ridge regularization for the readout fit.
    pub alpha: f64,
    /// Fraction of aligned samples used for training; the rest score ρ.
    pub train_fraction: f64,
    /// Training samples dropped before the readout fit.
    pub washout: usize,
    /// Z-score each channel over time before driving the reservoir.
    pub standardize_channels: bool,
    pub peak_mode: PeakMode,
}

impl Default for RccParams {
    fn default() -> Self {
        RccParams {
            taus: (-5..=5).filter(|&t| t != 0).collect(),
            n_reservoirs: 20,
            n_surrogates: 100,
            alpha: 1e-6,
            train_fraction: 0.8,
            washout: 10,
            standardize_channels: true,
            peak_mode: PeakMode::SkillMax,
        }
    }
}

impl RccParams {
    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::argument("lag grid is empty"));
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::argument("lags must be strictly increasing"));
        }
        if self.n_reservoirs == 0 {
            return Err(Error::argument("n_reservoirs must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::argument("alpha must be finite and non-negative"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::argument("train_fraction must lie in (0,1)"));
        }
        Ok(())
    }
}

/// Mean prediction skill per lag and direction, with standard errors over
/// the reservoir ensemble. Optionally carries the matching surrogate curves.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillCurve {
    pub taus: Vec<i64>,
    pub rho_xy: Vec<f64>,
    pub rho_yx: Vec<f64>,
    pub sem_xy: Vec<f64>,
    pub sem_yx: Vec<f64>,
    /// Mean shuffled-target skill per lag (chance level), when computed.
    pub sur_rho_xy: Option<Vec<f64>>,
    pub sur_rho_yx: Option<Vec<f64>>,
    pub sur_sem_xy: Option<Vec<f64>>,
    pub sur_sem_yx: Option<Vec<f64>>,
}

impl SkillCurve {
    pub fn validate(&self) -> Result<()> {
        let n = self.taus.len();
        if n == 0 {
            return Err(Error::argument("empty skill curve"));
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::argument("skill-curve lags must be strictly increasing"));
        }
        for v in [&self.rho_xy, &self.rho_yx, &self.sem_xy, &self.sem_yx] {
            if v.len() != n {
                return Err(Error::argument("skill-curve column lengths disagree"));
            }
        }
        if self
            .rho_xy
            .iter()
            .chain(self.rho_yx.iter())
            .any(|&r| !(-1.0..=1.0).contains(&r))
        {
            return Err(Error::argument("skill values must lie in [-1, 1]"));
        }
        Ok(())
    }
}

/// Empirical p-values for one pair at one lag.
///
/// `p_delta` tests Δ_{x→y} > 0; `p_delta_rev` tests Δ_{y→x} > 0 (computed
/// from the same null, counting the opposite tail); `p_delta_two` tests
/// Δ ≠ 0 and feeds the bidirectional score.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairPValues {
    pub p_rho_xy: f64,
    pub p_rho_yx: f64,
    pub p_delta: f64,
    pub p_delta_rev: f64,
    pub p_delta_two: f64,
}

impl PairPValues {
    fn validate(&self) -> Result<()> {
        let all = [
            self.p_rho_xy,
            self.p_rho_yx,
            self.p_delta,
            self.p_delta_rev,
            self.p_delta_two,
        ];
        if all.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::argument("p-values must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// δ-scores for one pair at one lag, with the p-values that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaScores {
    pub tau: i64,
    pub delta_xy: f64,
    pub delta_yx: f64,
    pub delta_bi: f64,
    pub p: PairPValues,
    /// Observed ensemble-mean skills at this lag.
    pub rho_xy: f64,
    pub rho_yx: f64,
    /// Set when a constant series forced all p-values to 1.
    pub degenerate: bool,
}

/// Direction interpretation per the Δ/τ sign table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalDirection {
    XCausesY,
    YCausesX,
}

/// Index alignment of one lag: rows t where both u(t) and target(t+τ) exist.
struct LagLayout {
    lo: usize,
    n_train: usize,
    n_test: usize,
    washout: usize,
    tau: i64,
}

impl LagLayout {
    fn new(t_len: usize, tau: i64, train_fraction: f64, washout: usize) -> Result<Self> {
        let abs = tau.unsigned_abs() as usize;
        if 4 * abs >= t_len {
            return Err(Error::argument(format!(
                "series of length {t_len} too short for lag {tau} (|tau| must stay below T/4)"
            )));
        }
        let lo = if tau < 0 { abs } else { 0 };
        let hi = t_len - 1 - if tau > 0 { abs } else { 0 };
        let m = hi - lo + 1;
        let n_train = (train_fraction * m as f64).floor() as usize;
        let n_test = m - n_train;
        if n_test < 2 {
            return Err(Error::argument(format!(
                "lag {tau}: held-out segment has {n_test} samples, need at least 2"
            )));
        }
        if n_train < washout + 4 {
            return Err(Error::argument(format!(
                "lag {tau}: training segment of {n_train} samples cannot absorb washout {washout}"
            )));
        }
        Ok(LagLayout {
            lo,
            n_train,
            n_test,
            washout,
            tau,
        })
    }

    fn fit_rows(&self) -> std::ops::Range<usize> {
        (self.lo + self.washout)..(self.lo + self.n_train)
    }

    fn test_rows(&self) -> std::ops::Range<usize> {
        (self.lo + self.n_train)..(self.lo + self.n_train + self.n_test)
    }

    fn target_index(&self, t: usize) -> usize {
        (t as i64 + self.tau) as usize
    }
}

/// Readout problem for one (reservoir, direction, lag), with the Gram
/// factorization cached so every surrogate target reuses it: only the
/// right-hand side Y·Rᵀ changes between targets.
struct LagEngine {
    chol: Cholesky<f64, Dyn>,
    /// (N+1)×n_fit augmented design (constant-1 row appended).
    r_train: DMatrix<f64>,
    /// n_test×(N+1) augmented held-out states.
    test_aug: DMatrix<f64>,
    fit_targets: Vec<usize>,
    test_targets: Vec<usize>,
}

impl LagEngine {
    fn new(states: &DMatrix<f64>, layout: &LagLayout, alpha: f64) -> Result<Self> {
        let n = states.ncols();
        let n_fit = layout.fit_rows().len();
        let mut r_train = DMatrix::zeros(n + 1, n_fit);
        let mut fit_targets = Vec::with_capacity(n_fit);
        for (c, t) in layout.fit_rows().enumerate() {
            for i in 0..n {
                r_train[(i, c)] = states[(t, i)];
            }
            r_train[(n, c)] = 1.0;
            fit_targets.push(layout.target_index(t));
        }
        let mut gram = &r_train * r_train.transpose();
        for i in 0..=n {
            gram[(i, i)] += alpha;
        }
        let chol = gram.cholesky().ok_or_else(|| {
            Error::numerical("singular readout system; use a regularization alpha > 0")
        })?;
        let mut test_aug = DMatrix::zeros(layout.n_test, n + 1);
        let mut test_targets = Vec::with_capacity(layout.n_test);
        for (r, t) in layout.test_rows().enumerate() {
            for i in 0..n {
                test_aug[(r, i)] = states[(t, i)];
            }
            test_aug[(r, n)] = 1.0;
            test_targets.push(layout.target_index(t));
        }
        Ok(LagEngine {
            chol,
            r_train,
            test_aug,
            fit_targets,
            test_targets,
        })
    }

    /// Fits the readout on `target` and scores it on the held-out rows.
    /// A degenerate correlation (constant truth or prediction) scores 0.
    fn skill(&self, target: &[f64]) -> f64 {
        let y_fit = DVector::from_iterator(
            self.fit_targets.len(),
            self.fit_targets.iter().map(|&t| target[t]),
        );
        let rhs = &self.r_train * y_fit;
        let w = self.chol.solve(&rhs);
        let pred = &self.test_aug * w;
        let truth: Vec<f64> = self.test_targets.iter().map(|&t| target[t]).collect();
        stats::pearson(pred.as_slice(), &truth).unwrap_or(0.0)
    }
}

/// Shared state for all per-pair analyses: reservoir states driven once per
/// (series, reservoir) and reused across lags, directions, and surrogates.
pub struct PairAnalyzer {
    x: Vec<f64>,
    y: Vec<f64>,
    states_x: Vec<DMatrix<f64>>,
    states_y: Vec<DMatrix<f64>>,
    params: RccParams,
    seed: u64,
    degenerate: bool,
}

fn standardize(series: &[f64]) -> Vec<f64> {
    let m = stats::mean(series);
    let s = stats::std_dev(series).max(1e-8);
    series.iter().map(|v| (v - m) / s).collect()
}

impl PairAnalyzer {
    pub fn new(
        x: &[f64],
        y: &[f64],
        config: &ReservoirConfig,
        params: &RccParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if x.len() != y.len() {
            return Err(Error::argument(format!(
                "series lengths differ: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::argument("series must be finite"));
        }
        let max_abs = self::max_abs_tau(&params.taus);
        if 4 * max_abs >= x.len() {
            return Err(Error::argument(format!(
                "series of length {} too short for max |tau| = {max_abs}",
                x.len()
            )));
        }
        let degenerate = stats::std_dev(x) < 1e-12 || stats::std_dev(y) < 1e-12;
        let (xs, ys) = if params.standardize_channels {
            (standardize(x), standardize(y))
        } else {
            (x.to_vec(), y.to_vec())
        };
        let mut cfg = config.clone();
        cfg.input_dim = 1;
        let t = xs.len();
        let in_x = DMatrix::from_column_slice(t, 1, &xs);
        let in_y = DMatrix::from_column_slice(t, 1, &ys);
        let mut states_x = Vec::with_capacity(params.n_reservoirs);
        let mut states_y = Vec::with_capacity(params.n_reservoirs);
        for k in 0..params.n_reservoirs {
            let res: Reservoir = init_reservoir(&cfg, seeding::derive(seed, "reservoir", k as u64))?;
            states_x.push(res.drive(&in_x)?);
            states_y.push(res.drive(&in_y)?);
        }
        Ok(PairAnalyzer {
            x: xs,
            y: ys,
            states_x,
            states_y,
            params: params.clone(),
            seed,
            degenerate,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn engines(&self, tau: i64) -> Result<(Vec<LagEngine>, Vec<LagEngine>)> {
        let layout = LagLayout::new(
            self.x.len(),
            tau,
            self.params.train_fraction,
            self.params.washout,
        )?;
        let fwd = self
            .states_x
            .iter()
            .map(|s| LagEngine::new(s, &layout, self.params.alpha))
            .collect::<Result<Vec<_>>>()?;
        let rev = self
            .states_y
            .iter()
            .map(|s| LagEngine::new(s, &layout, self.params.alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok((fwd, rev))
    }

    /// One shuffled copy of each series per surrogate index; the same
    /// permutation is applied to whichever series plays the target, which
    /// makes the analysis exactly symmetric under swapping x and y.
    fn surrogate_targets(&self, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for s in 0..n {
            let perm = permutation(self.x.len(), seeding::derive(self.seed, "surrogate", s as u64));
            xs.push(perm.iter().map(|&i| self.x[i]).collect());
            ys.push(perm.iter().map(|&i| self.y[i]).collect());
        }
        (xs, ys)
    }

    /// Mean observed skills (ρ_{x→y}, ρ_{y→x}) and per-reservoir samples.
    fn observed_at(
        &self,
        fwd: &[LagEngine],
        rev: &[LagEngine],
    ) -> (Vec<f64>, Vec<f64>) {
        let sk_xy: Vec<f64> = fwd.iter().map(|e| e.skill(&self.y)).collect();
        let sk_yx: Vec<f64> = rev.iter().map(|e| e.skill(&self.x)).collect();
        (sk_xy, sk_yx)
    }

    /// Skill curve over the configured lag grid; `with_surrogates` adds the
    /// matching chance-level curves from shuffled targets.
    pub fn skill_curve(&self, with_surrogates: bool) -> Result<SkillCurve> {
        let n_lags = self.params.taus.len();
        let mut rho_xy = Vec::with_capacity(n_lags);
        let mut rho_yx = Vec::with_capacity(n_lags);
        let mut sem_xy = Vec::with_capacity(n_lags);
        let mut sem_yx = Vec::with_capacity(n_lags);
        let surrogates = if with_surrogates {
            self.surrogate_targets(self.params.n_surrogates)
        } else {
            (Vec::new(), Vec::new())
        };
        let mut sur_xy = Vec::new();
        let mut sur_yx = Vec::new();
        let mut sur_sem_xy = Vec::new();
        let mut sur_sem_yx = Vec::new();

        for &tau in &self.params.taus {
            let (fwd, rev) = self.engines(tau)?;
            let (sk_xy, sk_yx) = self.observed_at(&fwd, &rev);
            rho_xy.push(stats::mean(&sk_xy));
            rho_yx.push(stats::mean(&sk_yx));
            sem_xy.push(stats::sem(&sk_xy));
            sem_yx.push(stats::sem(&sk_yx));
            if with_surrogates {
                let null_xy: Vec<f64> = surrogates
                    .1
                    .iter()
                    .map(|t| stats::mean(&fwd.iter().map(|e| e.skill(t)).collect::<Vec<_>>()))
                    .collect();
                let null_yx: Vec<f64> = surrogates
                    .0
                    .iter()
                    .map(|t| stats::mean(&rev.iter().map(|e| e.skill(t)).collect::<Vec<_>>()))
                    .collect();
                sur_xy.push(stats::mean(&null_xy));
                sur_yx.push(stats::mean(&null_yx));
                sur_sem_xy.push(stats::sem(&null_xy));
                sur_sem_yx.push(stats::sem(&null_yx));
            }
        }
        let curve = SkillCurve {
            taus: self.params.taus.clone(),
            rho_xy,
            rho_yx,
            sem_xy,
            sem_yx,
            sur_rho_xy: with_surrogates.then_some(sur_xy),
            sur_rho_yx: with_surrogates.then_some(sur_yx),
            sur_sem_xy: with_surrogates.then_some(sur_sem_xy),
            sur_sem_yx: with_surrogates.then_some(sur_sem_yx),
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Surrogate-tested p-values and δ-scores at one lag.
    pub fn scores_at(&self, tau: i64) -> Result<DeltaScores> {
        if tau == 0 {
            return Err(Error::argument("delta scores are undefined at tau = 0"));
        }
        if self.params.n_surrogates < 20 {
            return Err(Error::argument("need at least 20 surrogates"));
        }
        if self.degenerate {
            let p = PairPValues {
                p_rho_xy: 1.0,
                p_rho_yx: 1.0,
                p_delta: 1.0,
                p_delta_rev: 1.0,
                p_delta_two: 1.0,
            };
            let (delta_xy, delta_yx, delta_bi) = delta_scores(&p, tau)?;
            return Ok(DeltaScores {
                tau,
                delta_xy,
                delta_yx,
                delta_bi,
                p,
                rho_xy: 0.0,
                rho_yx: 0.0,
                degenerate: true,
            });
        }

        let (fwd, rev) = self.engines(tau)?;
        let (sk_xy, sk_yx) = self.observed_at(&fwd, &rev);
        let rho_xy = stats::mean(&sk_xy);
        let rho_yx = stats::mean(&sk_yx);
        let delta = rho_xy - rho_yx;

        let (sur_x, sur_y) = self.surrogate_targets(self.params.n_surrogates);
        let mut null_xy = Vec::with_capacity(self.params.n_surrogates);
        let mut null_yx = Vec::with_capacity(self.params.n_surrogates);
        for s in 0..self.params.n_surrogates {
            let nx: Vec<f64> = fwd.iter().map(|e| e.skill(&sur_y[s])).collect();
            let ny: Vec<f64> = rev.iter().map(|e| e.skill(&sur_x[s])).collect();
            null_xy.push(stats::mean(&nx));
            null_yx.push(stats::mean(&ny));
        }
        let null_delta: Vec<f64> = null_xy
            .iter()
            .zip(null_yx.iter())
            .map(|(a, b)| a - b)
            .collect();
        let neg_delta: Vec<f64> = null_delta.iter().map(|d| -d).collect();
        let abs_delta: Vec<f64> = null_delta.iter().map(|d| d.abs()).collect();

        let p = PairPValues {
            p_rho_xy: stats::empirical_p_ge(&null_xy, rho_xy),
            p_rho_yx: stats::empirical_p_ge(&null_yx, rho_yx),
            p_delta: stats::empirical_p_ge(&null_delta, delta),
            p_delta_rev: stats::empirical_p_ge(&neg_delta, -delta),
            p_delta_two: stats::empirical_p_ge(&abs_delta, delta.abs()),
        };
        let (delta_xy, delta_yx, delta_bi) = delta_scores(&p, tau)?;
        Ok(DeltaScores {
            tau,
            delta_xy,
            delta_yx,
            delta_bi,
            p,
            rho_xy,
            rho_yx,
            degenerate: false,
        })
    }
}

fn max_abs_tau(taus: &[i64]) -> usize {
    taus.iter().map(|t| t.unsigned_abs() as usize).max().unwrap_or(0)
}

/// Prediction-skill curve for a channel pair (no surrogate curves).
pub fn prediction_skill(
    x: &[f64],
    y: &[f64],
    config: &ReservoirConfig,
    params: &RccParams,
    seed: u64,
) -> Result<SkillCurve> {
    PairAnalyzer::new(x, y, config, params, seed)?.skill_curve(false)
}

/// Skill curve including the shuffled-target chance-level curves.
pub fn skill_curve_with_surrogates(
    x: &[f64],
    y: &[f64],
    config: &ReservoirConfig,
    params: &RccParams,
    seed: u64,
) -> Result<SkillCurve> {
    PairAnalyzer::new(x, y, config, params, seed)?.skill_curve(true)
}

/// Surrogate-tested δ-scores for one pair at one lag.
pub fn surrogate_pvalues(
    x: &[f64],
    y: &[f64],
    tau: i64,
    config: &ReservoirConfig,
    params: &RccParams,
    seed: u64,
) -> Result<DeltaScores> {
    PairAnalyzer::new(x, y, config, params, seed)?.scores_at(tau)
}

/// Per-lag skill difference Δ_{x→y}(τ) = ρ_{x→y}(τ) − ρ_{y→x}(τ).
pub fn delta_curve(curve: &SkillCurve) -> Vec<f64> {
    curve
        .rho_xy
        .iter()
        .zip(curve.rho_yx.iter())
        .map(|(a, b)| a - b)
        .collect()
}

/// Peak lag per direction under the default peak mode (maximum skill).
pub fn peak_lags(curve: &SkillCurve) -> Result<(i64, i64)> {
    peak_lags_mode(curve, PeakMode::SkillMax)
}

/// Peak lag per direction. Ties break toward the smallest |τ|, then toward
/// the negative lag.
pub fn peak_lags_mode(curve: &SkillCurve, mode: PeakMode) -> Result<(i64, i64)> {
    curve.validate()?;
    let pick = |values: &[f64]| -> i64 {
        let mut best = 0usize;
        for i in 1..values.len() {
            let better = match mode {
                PeakMode::SkillMax => values[i] > values[best],
                PeakMode::SkillMin => values[i] < values[best],
            };
            let tied = values[i] == values[best];
            if better || (tied && tie_rank(curve.taus[i]) < tie_rank(curve.taus[best])) {
                best = i;
            }
        }
        curve.taus[best]
    };
    Ok((pick(&curve.rho_xy), pick(&curve.rho_yx)))
}

fn tie_rank(tau: i64) -> (u64, u8) {
    (tau.unsigned_abs(), u8::from(tau > 0))
}

/// Assembles δ-scores from p-values, branching on the sign of τ.
/// Returns (δ_{x→y}, δ_{y→x}, δ_{x↔y}), each clamped to [0, 1].
pub fn delta_scores(p: &PairPValues, tau: i64) -> Result<(f64, f64, f64)> {
    if tau == 0 {
        return Err(Error::argument("delta scores are undefined at tau = 0"));
    }
    p.validate()?;
    let (delta_xy, delta_yx) = if tau > 0 {
        (
            (1.0 - p.p_rho_xy) * (1.0 - p.p_delta),
            (1.0 - p.p_rho_yx) * (1.0 - p.p_delta_rev),
        )
    } else {
        (
            (1.0 - p.p_rho_yx) * (1.0 - p.p_delta_rev),
            (1.0 - p.p_rho_xy) * (1.0 - p.p_delta),
        )
    };
    let delta_bi = (1.0 - p.p_rho_xy) * (1.0 - p.p_rho_yx) * p.p_delta_two;
    Ok((
        delta_xy.clamp(0.0, 1.0),
        delta_yx.clamp(0.0, 1.0),
        delta_bi.clamp(0.0, 1.0),
    ))
}

/// Reads the Δ/τ sign table: which node drives which.
pub fn interpret_direction(delta: f64, tau: i64) -> Result<CausalDirection> {
    if tau == 0 || delta == 0.0 {
        return Err(Error::argument(
            "direction is indeterminate at tau = 0 or delta = 0",
        ));
    }
    Ok(match (delta > 0.0, tau > 0) {
        (true, true) => CausalDirection::XCausesY,
        (false, true) => CausalDirection::YCausesX,
        (true, false) => CausalDirection::YCausesX,
        (false, false) => CausalDirection::XCausesY,
    })
}

/// δ-scores of one unordered pair, indexed x < y.
#[derive(Debug, Clone)]
pub struct PairScores {
    pub x: usize,
    pub y: usize,
    pub scores: DeltaScores,
}

/// Assembles per-pair δ-scores into the subject's EC matrix.
pub fn assemble_ec(
    n_nodes: usize,
    pairs: &[PairScores],
    tau: i64,
    mode: EcMode,
    subject_id: &str,
    group: Group,
) -> Result<EcMatrix> {
    let mut seen = vec![false; n_nodes * n_nodes];
    let mut scores = DMatrix::zeros(n_nodes, n_nodes);
    for p in pairs {
        if p.x >= p.y || p.y >= n_nodes {
            return Err(Error::argument(format!(
                "pair ({}, {}) is not an ordered pair below {n_nodes}",
                p.x, p.y
            )));
        }
        if p.scores.tau != tau {
            return Err(Error::argument(format!(
                "pair ({}, {}) scored at tau {} but assembling tau {tau}",
                p.x, p.y, p.scores.tau
            )));
        }
        seen[p.x * n_nodes + p.y] = true;
        let bi = match mode {
            EcMode::Unidirectional => 0.0,
            EcMode::Bidirectional => p.scores.delta_bi,
        };
        scores[(p.x, p.y)] = (p.scores.delta_xy + bi).clamp(0.0, 1.0);
        scores[(p.y, p.x)] = (p.scores.delta_yx + bi).clamp(0.0, 1.0);
    }
    let mut missing = Vec::new();
    for x in 0..n_nodes {
        for y in (x + 1)..n_nodes {
            if !seen[x * n_nodes + y] {
                missing.push(format!("({x},{y})"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::data(format!(
            "missing pair scores: {}",
            missing.join(", ")
        )));
    }
    EcMatrix::new(scores, tau, subject_id, group)
}

/// Full per-subject EC matrix: every unordered channel pair analyzed
/// independently (in parallel) with a pair-keyed seed, then assembled.
pub fn subject_ec(
    ts: &TimeSeriesSet,
    tau: i64,
    config: &ReservoirConfig,
    params: &RccParams,
    root_seed: u64,
    mode: EcMode,
) -> Result<EcMatrix> {
    let n = ts.n_channels();
    let mut pair_ids = Vec::new();
    for x in 0..n {
        for y in (x + 1)..n {
            pair_ids.push((x, y));
        }
    }
    let pairs: Result<Vec<PairScores>> = pair_ids
        .par_iter()
        .map(|&(x, y)| {
            let sx = ts.channel(x)?;
            let sy = ts.channel(y)?;
            let seed = seeding::pair_seed(root_seed, &ts.subject_id, x, y);
            let analyzer = PairAnalyzer::new(&sx, &sy, config, params, seed)?;
            Ok(PairScores {
                x,
                y,
                scores: analyzer.scores_at(tau)?,
            })
        })
        .collect();
    assemble_ec(n, &pairs?, tau, mode, &ts.subject_id, ts.group)
}

/// Mean EC weight within each directed hemisphere block (row = source).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HemisphericMeans {
    pub ll: f64,
    pub rr: f64,
    pub lr: f64,
    pub rl: f64,
}

/// Averages off-diagonal EC weights over the four directed hemisphere
/// blocks. An empty block (single-hemisphere atlas) averages to 0.
pub fn hemispheric_summary(
    ec: &EcMatrix,
    hemisphere_of: &[crate::atlas::Hemisphere],
) -> Result<HemisphericMeans> {
    use crate::atlas::Hemisphere;
    let n = ec.n_nodes();
    if hemisphere_of.len() != n {
        return Err(Error::argument(format!(
            "hemisphere map covers {} nodes, EC matrix has {n}",
            hemisphere_of.len()
        )));
    }
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let idx = match (hemisphere_of[i], hemisphere_of[j]) {
                (Hemisphere::Left, Hemisphere::Left) => 0,
                (Hemisphere::Right, Hemisphere::Right) => 1,
                (Hemisphere::Left, Hemisphere::Right) => 2,
                (Hemisphere::Right, Hemisphere::Left) => 3,
            };
            sums[idx] += ec.scores[(i, j)];
            counts[idx] += 1;
        }
    }
    let mean = |i: usize| if counts[i] == 0 { 0.0 } else { sums[i] / counts[i] as f64 };
    Ok(HemisphericMeans {
        ll: mean(0),
        rr: mean(1),
        lr: mean(2),
        rl: mean(3),
    })
}

/// Welch two-sample t-test between group summaries (t, two-sided p).
pub fn group_ttest(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    stats::welch_ttest(a, b)
}

/// Writes a skill curve as CSV: tau, rho_xy, rho_yx, sem_xy, sem_yx, plus
/// the four surrogate columns when present.
pub fn save_skill_curve(curve: &SkillCurve, path: &Path) -> Result<()> {
    curve.validate()?;
    let with_sur = curve.sur_rho_xy.is_some();
    let mut out = String::from("tau,rho_xy,rho_yx,sem_xy,sem_yx");
    if with_sur {
        out.push_str(",sur_rho_xy,sur_rho_yx,sur_sem_xy,sur_sem_yx");
    }
    out.push('\n');
    for (i, &tau) in curve.taus.iter().enumerate() {
        out.push_str(&format!(
            "{tau},{},{},{},{}",
            table::fmt_f64(curve.rho_xy[i]),
            table::fmt_f64(curve.rho_yx[i]),
            table::fmt_f64(curve.sem_xy[i]),
            table::fmt_f64(curve.sem_yx[i]),
        ));
        if with_sur {
            out.push_str(&format!(
                ",{},{},{},{}",
                table::fmt_f64(curve.sur_rho_xy.as_ref().unwrap()[i]),
                table::fmt_f64(curve.sur_rho_yx.as_ref().unwrap()[i]),
                table::fmt_f64(curve.sur_sem_xy.as_ref().unwrap()[i]),
                table::fmt_f64(curve.sur_sem_yx.as_ref().unwrap()[i]),
            ));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a skill curve written by `save_skill_curve` (either width).
pub fn load_skill_curve(path: &Path) -> Result<SkillCurve> {
    let lines = table::read_lines(path)?;
    if lines.len() < 2 {
        return Err(Error::data(format!(
            "{}: skill curve needs a header and rows",
            path.display()
        )));
    }
    let header = table::split_fields(&lines[0]);
    let with_sur = match header.len() {
        5 => false,
        9 => true,
        n => {
            return Err(Error::data(format!(
                "{}: expected 5 or 9 columns, found {n}",
                path.display()
            )))
        }
    };
    let mut curve = SkillCurve {
        taus: Vec::new(),
        rho_xy: Vec::new(),
        rho_yx: Vec::new(),
        sem_xy: Vec::new(),
        sem_yx: Vec::new(),
        sur_rho_xy: with_sur.then(Vec::new),
        sur_rho_yx: with_sur.then(Vec::new),
        sur_sem_xy: with_sur.then(Vec::new),
        sur_sem_yx: with_sur.then(Vec::new),
    };
    for (i, line) in lines[1..].iter().enumerate() {
        let fields = table::split_fields(line);
        table::expect_width(path, i + 2, &fields, header.len())?;
        curve
            .taus
            .push(table::parse_cell(path, i + 2, 1, &fields[0])? as i64);
        curve.rho_xy.push(table::parse_cell(path, i + 2, 2, &fields[1])?);
        curve.rho_yx.push(table::parse_cell(path, i + 2, 3, &fields[2])?);
        curve.sem_xy.push(table::parse_cell(path, i + 2, 4, &fields[3])?);
        curve.sem_yx.push(table::parse_cell(path, i + 2, 5, &fields[4])?);
        if with_sur {
            curve
                .sur_rho_xy
                .as_mut()
                .unwrap()
                .push(table::parse_cell(path, i + 2, 6, &fields[5])?);
            curve
                .sur_rho_yx
                .as_mut()
                .unwrap()
                .push(table::parse_cell(path, i + 2, 7, &fields[6])?);
            curve
                .sur_sem_xy
                .as_mut()
                .unwrap()
                .push(table::parse_cell(path, i + 2, 8, &fields[7])?);
            curve
                .sur_sem_yx
                .as_mut()
                .unwrap()
                .push(table::parse_cell(path, i + 2, 9, &fields[8])?);
        }
    }
    curve.validate()?;
    Ok(curve)
}
