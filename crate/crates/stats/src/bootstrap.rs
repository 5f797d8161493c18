//! Seeded percentile bootstrap confidence intervals.
//!
//! Resampling is with replacement at the original sample size, driven by a
//! ChaCha8 generator so intervals are reproducible across platforms and runs.
//! Quantiles use the nearest-rank rule on the sorted resample statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Result, StatsError};

/// Percentile bootstrap interval of `statistic` over `values`.
///
/// Draws `resamples` with-replacement resamples of the full sample size,
/// computes `statistic` on each, and returns the nearest-rank percentile
/// bounds at `(1±level)/2`. The resample index sequence is a pure function of
/// `seed`, and statistics are computed in draw order, so the interval is
/// deterministic regardless of how callers schedule their own work.
///
/// The percentile interval of the identical-resample statistic always brackets
/// the plug-in value for the statistics used here (means of deltas); that
/// containment is asserted on every call as a guard against quantile-indexing
/// bugs.
///
/// # Errors
/// [`StatsError::EmptySample`] when `values` is empty;
/// [`StatsError::TooFew`] when `resamples` is 0 or `level` is not in (0,1).
pub fn bootstrap_ci(
    values: &[f64],
    statistic: impl Fn(&[f64]) -> f64,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if resamples == 0 || !(0.0 < level && level < 1.0) {
        return Err(StatsError::TooFew { got: resamples, need: 1 });
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; n];
    for _ in 0..resamples {
        for slot in buf.iter_mut() {
            *slot = values[rng.gen_range(0..n)];
        }
        stats.push(statistic(&buf));
    }
    stats.sort_by(f64::total_cmp);
    let lo = nearest_rank(&stats, (1.0 - level) / 2.0);
    let hi = nearest_rank(&stats, (1.0 + level) / 2.0);
    let plug_in = statistic(values);
    assert!(
        lo <= plug_in && plug_in <= hi,
        "percentile interval [{lo}, {hi}] does not contain the plug-in statistic {plug_in}"
    );
    Ok((lo, hi))
}

/// Nearest-rank quantile of an ascending-sorted slice: the p-quantile is the
/// element at rank ⌈p·B⌉ (1-based), clamped into the slice.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let b = sorted.len();
    let rank = (p * b as f64).ceil() as isize - 1;
    sorted[rank.clamp(0, b as isize - 1) as usize]
}
