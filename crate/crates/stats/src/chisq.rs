//! Pearson chi-square test on a 2×3 contingency table.
//!
//! Used to compare the positive/negative/neutral state-label distribution at
//! focal tool calls against the distribution at the immediately following
//! calls. Degrees of freedom are (2−1)(3−1) = 2.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{FitResult, Result, StatsError};

/// Pearson χ² on the 2×3 table `[before_counts; after_counts]`, df = 2.
///
/// The returned estimate is the χ² statistic (its CI fields degenerate to the
/// statistic itself — no interval is defined for this test); `p_value` is the
/// upper tail of the χ²₂ distribution. Cells may be zero as long as no column
/// total is zero (a zero column would make its expected counts zero).
///
/// # Errors
/// [`StatsError::ZeroTotal`] when either row or any column sums to zero.
pub fn chi_square_3cat(before: [u64; 3], after: [u64; 3]) -> Result<FitResult> {
    let row1: u64 = before.iter().sum();
    let row2: u64 = after.iter().sum();
    if row1 == 0 || row2 == 0 {
        return Err(StatsError::ZeroTotal);
    }
    let total = (row1 + row2) as f64;
    let mut stat = 0.0;
    for c in 0..3 {
        let col = (before[c] + after[c]) as f64;
        if col == 0.0 {
            return Err(StatsError::ZeroTotal);
        }
        for (row_total, observed) in [(row1 as f64, before[c]), (row2 as f64, after[c])] {
            let expected = row_total * col / total;
            let diff = observed as f64 - expected;
            stat += diff * diff / expected;
        }
    }
    let dist = ChiSquared::new(2.0).expect("df=2 is valid");
    let p = 1.0 - dist.cdf(stat);
    Ok(FitResult {
        estimate: stat,
        ci_low: stat,
        ci_high: stat,
        p_value: p.clamp(0.0, 1.0),
        effect_size: None,
        n_obs: (row1 + row2) as usize,
        n_runs: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_distributions_give_zero_statistic() {
        let r = chi_square_3cat([30, 10, 60], [30, 10, 60]).unwrap();
        assert_relative_eq!(r.estimate, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_reference_statistic_and_p() {
        // Frozen from an independent Pearson computation on this table.
        let r = chi_square_3cat([30, 10, 60], [40, 12, 48]).unwrap();
        assert_relative_eq!(r.estimate, 2.94372294372294, epsilon = 1e-9);
        assert_relative_eq!(r.p_value, 0.229497883473565, epsilon = 1e-9);
    }

    #[test]
    fn label_shift_shape_reproduces_expected_magnitude() {
        // Synthetic counts whose proportions mirror a mild positive shift:
        // the statistic should land near 1.55 with p near 0.46.
        let r = chi_square_3cat([93, 30, 147], [107, 26, 138]).unwrap();
        assert_relative_eq!(r.estimate, 1.548081672508455, epsilon = 1e-9);
        assert_relative_eq!(r.p_value, 0.4611458833536213, epsilon = 1e-9);
    }

    #[test]
    fn doubling_counts_doubles_the_statistic_and_shrinks_p() {
        let base = chi_square_3cat([30, 10, 60], [40, 12, 48]).unwrap();
        let doubled = chi_square_3cat([60, 20, 120], [80, 24, 96]).unwrap();
        assert_relative_eq!(doubled.estimate, 2.0 * base.estimate, epsilon = 1e-9);
        assert!(doubled.p_value < base.p_value);
    }

    #[test]
    fn zero_rows_and_zero_columns_are_rejected() {
        assert_eq!(
            chi_square_3cat([0, 0, 0], [1, 2, 3]),
            Err(StatsError::ZeroTotal)
        );
        assert_eq!(
            chi_square_3cat([1, 0, 3], [2, 0, 4]),
            Err(StatsError::ZeroTotal)
        );
    }
}
