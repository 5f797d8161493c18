//! Cohen's d in its two forms used by the reporting tables.
//!
//! The observation-level variant standardizes the mean paired difference by
//! the sample standard deviation of the differences. The run-level variant
//! does the same over per-run mean deltas; the two legitimately disagree on
//! unbalanced data because runs contribute unequally at the observation level.

use crate::{mean, sample_var, PairedSample, Result, StatsError};

/// Observation-level paired Cohen's d: mean(after−before) / sd(after−before),
/// sample sd with the n−1 denominator.
///
/// # Errors
/// [`StatsError::EmptySample`] with no pairs; [`StatsError::TooFew`] with one
/// pair; [`StatsError::ZeroVariance`] when every difference is identical.
pub fn cohens_d_paired(s: &PairedSample) -> Result<f64> {
    if s.is_empty() {
        return Err(StatsError::EmptySample);
    }
    cohens_d_runlevel(&s.deltas())
}

/// Run-level Cohen's d over a vector of per-run mean deltas.
///
/// # Errors
/// [`StatsError::TooFew`] below 2 values; [`StatsError::ZeroVariance`] when
/// the values are all identical.
pub fn cohens_d_runlevel(deltas: &[f64]) -> Result<f64> {
    if deltas.len() < 2 {
        return Err(StatsError::TooFew { got: deltas.len(), need: 2 });
    }
    let sd = sample_var(deltas).sqrt();
    if sd == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(mean(deltas) / sd)
}
