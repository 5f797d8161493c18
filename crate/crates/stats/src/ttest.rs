//! Welch's unequal-variance two-sample t-test and the one-sample t-test.
//!
//! Two-sided p-values come from the Student-t CDF at Welch–Satterthwaite
//! (two-sample) or n−1 (one-sample) degrees of freedom. The `FitResult`
//! estimate is the mean difference; its interval is the t-based confidence
//! interval at the same df.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{mean, sample_var, FitResult, Result, StatsError};

/// Welch two-sample t-test of mean(a) − mean(b), two-sided.
///
/// Uses the unequal-variance statistic t = (ā − b̄) / √(s²ₐ/nₐ + s²ᵦ/nᵦ) with
/// Welch–Satterthwaite degrees of freedom. The returned estimate is ā − b̄ with
/// a 95% t-interval.
///
/// # Errors
/// [`StatsError::TooFew`] if either group has fewer than 2 observations;
/// [`StatsError::ZeroVariance`] if both groups are constant (the statistic is
/// undefined) — unless the means are also equal, in which case t=0, p=1.
pub fn t_test_two_sample(a: &[f64], b: &[f64]) -> Result<FitResult> {
    if a.len() < 2 {
        return Err(StatsError::TooFew { got: a.len(), need: 2 });
    }
    if b.len() < 2 {
        return Err(StatsError::TooFew { got: b.len(), need: 2 });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_var(a), sample_var(b));
    let diff = ma - mb;
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        // Both groups constant: identical constants compare equal, anything
        // else has an undefined (infinite) statistic.
        if diff == 0.0 {
            return Ok(FitResult {
                estimate: 0.0,
                ci_low: 0.0,
                ci_high: 0.0,
                p_value: 1.0,
                effect_size: None,
                n_obs: a.len() + b.len(),
                n_runs: a.len() + b.len(),
            });
        }
        return Err(StatsError::ZeroVariance);
    }
    let se = se2.sqrt();
    let t = diff / se;
    // Welch–Satterthwaite df.
    let df = se2 * se2
        / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| StatsError::NonConvergence(e.to_string()))?;
    let p = 2.0 * dist.cdf(-t.abs());
    let tcrit = dist.inverse_cdf(0.975);
    Ok(FitResult {
        estimate: diff,
        ci_low: diff - tcrit * se,
        ci_high: diff + tcrit * se,
        p_value: p.min(1.0),
        effect_size: None,
        n_obs: a.len() + b.len(),
        n_runs: a.len() + b.len(),
    })
}

/// One-sample t-test of mean(x) against 0, two-sided.
///
/// The estimate is the sample mean with a 95% t-interval at n−1 df. This is the
/// test behind run-level rows, where each run contributes one mean delta.
///
/// # Errors
/// [`StatsError::TooFew`] below 2 observations; [`StatsError::ZeroVariance`]
/// when all values are identical and nonzero (t undefined). An all-zero sample
/// returns t=0, p=1.
pub fn t_test_one_sample(x: &[f64]) -> Result<FitResult> {
    if x.len() < 2 {
        return Err(StatsError::TooFew { got: x.len(), need: 2 });
    }
    let n = x.len() as f64;
    let m = mean(x);
    let v = sample_var(x);
    if v == 0.0 {
        if m == 0.0 {
            return Ok(FitResult {
                estimate: 0.0,
                ci_low: 0.0,
                ci_high: 0.0,
                p_value: 1.0,
                effect_size: None,
                n_obs: x.len(),
                n_runs: x.len(),
            });
        }
        return Err(StatsError::ZeroVariance);
    }
    let se = (v / n).sqrt();
    let t = m / se;
    let df = n - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| StatsError::NonConvergence(e.to_string()))?;
    let p = 2.0 * dist.cdf(-t.abs());
    let tcrit = dist.inverse_cdf(0.975);
    Ok(FitResult {
        estimate: m,
        ci_low: m - tcrit * se,
        ci_high: m + tcrit * se,
        p_value: p.min(1.0),
        effect_size: None,
        n_obs: x.len(),
        n_runs: x.len(),
    })
}
