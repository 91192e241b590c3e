//! Bivariate Granger causality baseline.
//!
//! For a directed pair x→y, a restricted autoregression y_t ~ lags of y is
//! compared against a full model that adds lags of x. The F-statistic
//!   F = ((RSS_r − RSS_f)/p) / (RSS_f/(T_eff − 2p − 1))
//! tests whether x's history improves the fit; adjacency entries are 1 − p
//! so that larger means stronger evidence, matching the orientation of the
//! reservoir δ-scores.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::ec::EcMatrix;
use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesSet;

/// Nested least-squares fits for one directed pair at one order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarFit {
    pub order: usize,
    /// Intercept first, then y-lag coefficients (most recent lag first).
    pub coef_restricted: Vec<f64>,
    /// Intercept, y-lag coefficients, then x-lag coefficients.
    pub coef_full: Vec<f64>,
    pub rss_restricted: f64,
    pub rss_full: f64,
    pub t_effective: usize,
}

/// Ratio of smallest to largest Cholesky pivot below which the regressor
/// matrix is treated as collinear.
const PIVOT_RATIO_FLOOR: f64 = 1e-9;

fn ols(design: &DMatrix<f64>, target: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    let gram = design.transpose() * design;
    let chol = gram.cholesky().ok_or_else(|| collinear(order))?;
    let l = chol.l();
    let mut min_d = f64::MAX;
    let mut max_d = f64::MIN;
    for i in 0..l.nrows() {
        min_d = min_d.min(l[(i, i)]);
        max_d = max_d.max(l[(i, i)]);
    }
    if !(min_d > 0.0) || min_d / max_d < PIVOT_RATIO_FLOOR {
        return Err(collinear(order));
    }
    let y = DMatrix::from_column_slice(target.len(), 1, target);
    let rhs = design.transpose() * &y;
    let coef = chol.solve(&rhs);
    let resid = &y - design * &coef;
    let rss = resid.iter().map(|r| r * r).sum();
    Ok((coef.as_slice().to_vec(), rss))
}

fn collinear(order: usize) -> Error {
    Error::numerical(format!(
        "collinear regressors at order {order}; try a smaller order"
    ))
}

/// Fits the restricted and full models for the directed pair x→y.
pub fn var_fit(x: &[f64], y: &[f64], order: usize) -> Result<VarFit> {
    if order == 0 {
        return Err(Error::argument("order must be at least 1"));
    }
    if x.len() != y.len() {
        return Err(Error::argument(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() <= 3 * order + 2 {
        return Err(Error::argument(format!(
            "series of length {} too short for order {order} (need > {})",
            x.len(),
            3 * order + 2
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::argument("series must be finite"));
    }
    let t_eff = y.len() - order;
    let target: Vec<f64> = y[order..].to_vec();

    let mut restricted = DMatrix::zeros(t_eff, order + 1);
    let mut full = DMatrix::zeros(t_eff, 2 * order + 1);
    for t in 0..t_eff {
        restricted[(t, 0)] = 1.0;
        full[(t, 0)] = 1.0;
        for lag in 1..=order {
            let idx = t + order - lag;
            restricted[(t, lag)] = y[idx];
            full[(t, lag)] = y[idx];
            full[(t, order + lag)] = x[idx];
        }
    }
    let (coef_restricted, rss_restricted) = ols(&restricted, &target, order)?;
    let (coef_full, rss_full) = ols(&full, &target, order)?;
    Ok(VarFit {
        order,
        coef_restricted,
        coef_full,
        rss_restricted,
        rss_full,
        t_effective: t_eff,
    })
}

/// F-statistic and p-value for "x Granger-causes y" at the given order.
pub fn gc_score(x: &[f64], y: &[f64], order: usize) -> Result<(f64, f64)> {
    let fit = var_fit(x, y, order)?;
    let df1 = order as f64;
    let df2 = (fit.t_effective as isize - 2 * order as isize - 1) as f64;
    if df2 < 1.0 {
        return Err(Error::argument(format!(
            "order {order} leaves {df2} denominator degrees of freedom"
        )));
    }
    if fit.rss_full <= f64::MIN_POSITIVE {
        // Perfect full fit: improvement is unbounded.
        return Ok((f64::INFINITY, 0.0));
    }
    let num = (fit.rss_restricted - fit.rss_full).max(0.0) / df1;
    let den = fit.rss_full / df2;
    let f = num / den;
    let dist = FisherSnedecor::new(df1, df2)
        .map_err(|e| Error::numerical(format!("F distribution: {e}")))?;
    let p = (1.0 - dist.cdf(f)).clamp(0.0, 1.0);
    Ok((f, p))
}

/// Picks the order minimizing BIC of the full model over 1..=max_order,
/// scored on a common sample (the first max_order rows are dropped for
/// every candidate so the fits are comparable).
pub fn select_order_bic(x: &[f64], y: &[f64], max_order: usize) -> Result<usize> {
    if max_order == 0 {
        return Err(Error::argument("max_order must be at least 1"));
    }
    if x.len() <= 3 * max_order + 2 {
        return Err(Error::argument(format!(
            "series of length {} too short for max order {max_order}",
            x.len()
        )));
    }
    let mut best = (f64::INFINITY, 1usize);
    for order in 1..=max_order {
        // Common sample: fit on the suffix so t_effective matches max_order's.
        let drop = max_order - order;
        let fit = var_fit(&x[drop..], &y[drop..], order)?;
        let n = fit.t_effective as f64;
        let k = (2 * order + 1) as f64;
        let bic = n * (fit.rss_full.max(1e-300) / n).ln() + k * n.ln();
        if bic < best.0 {
            best = (bic, order);
        }
    }
    Ok(best.1)
}

/// Granger EC matrix for one subject: A[x, y] = 1 − p_{x→y}, zero diagonal.
pub fn subject_gc_ec(ts: &TimeSeriesSet, order: usize) -> Result<EcMatrix> {
    let n = ts.n_channels();
    let mut pairs = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if x != y {
                pairs.push((x, y));
            }
        }
    }
    let entries: Result<Vec<((usize, usize), f64)>> = pairs
        .par_iter()
        .map(|&(x, y)| {
            let sx = ts.channel(x)?;
            let sy = ts.channel(y)?;
            let (_, p) = gc_score(&sx, &sy, order)?;
            Ok(((x, y), 1.0 - p))
        })
        .collect();
    let mut scores = DMatrix::zeros(n, n);
    for ((x, y), v) in entries? {
        scores[(x, y)] = v;
    }
    EcMatrix::new(scores, 0, &ts.subject_id, ts.group)
}

/// Granger EC matrices for a whole cohort at a fixed order.
pub fn assemble_gc_ec(cohort: &[TimeSeriesSet], order: usize) -> Result<Vec<EcMatrix>> {
    cohort.iter().map(|ts| subject_gc_ec(ts, order)).collect()
}
