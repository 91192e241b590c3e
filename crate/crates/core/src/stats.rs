//! Small statistical helpers used across the pipeline.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Arithmetic mean; 0.0 for an empty slice.
pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance (normalized by n).
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    variance(v).sqrt()
}

/// Sample variance (normalized by n - 1); 0.0 when fewer than two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Standard error of the mean, using the sample standard deviation.
pub fn sem(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    (sample_variance(v) / v.len() as f64).sqrt()
}

/// Pearson correlation coefficient.
///
/// Returns `None` when either input is (numerically) constant, so callers
/// decide how a degenerate correlation should be scored.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    let denom = (saa * sbb).sqrt();
    if denom <= 1e-24 || !denom.is_finite() {
        return None;
    }
    Some((sab / denom).clamp(-1.0, 1.0))
}

/// Welch's two-sample t-test. Returns `(t, p)` with a two-sided p-value.
///
/// Groups with identical values in both samples carry no information about a
/// mean difference and are rejected rather than silently reported as p = 1.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::argument(
            "welch_ttest needs at least two values per group",
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a), sample_variance(b));
    let se_sq = va / na + vb / nb;
    if se_sq <= 0.0 {
        return Err(Error::numerical(
            "welch_ttest: zero variance in both groups, t statistic undefined",
        ));
    }
    let t = (mean(a) - mean(b)) / se_sq.sqrt();
    // Welch-Satterthwaite degrees of freedom.
    let df = se_sq * se_sq
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::numerical(format!("invalid t distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p.clamp(0.0, 1.0)))
}

/// Empirical p-value with the permutation-test +1 correction:
/// `(1 + #{null >= observed}) / (1 + n_null)`. Never returns 0.
pub fn empirical_p_ge(null: &[f64], observed: f64) -> f64 {
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    (1 + exceed) as f64 / (1 + null.len()) as f64
}

/// Kolmogorov-Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_uniform_statistic(sample: &[f64]) -> f64 {
    let mut s: Vec<f64> = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in s.iter().enumerate() {
        let hi = (i + 1) as f64 / n - v;
        let lo = v - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}
