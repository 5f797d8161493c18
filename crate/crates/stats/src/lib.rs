//! Statistical estimators for before/after self-report experiments.
//!
//! Everything here is deterministic: seeded RNG where resampling is involved,
//! fixed summation order everywhere else. The centerpiece is a random-intercept
//! linear mixed model fit by maximum likelihood ([`lmm`]); around it sit the
//! percentile bootstrap ([`bootstrap`]), paired/run-level Cohen's d ([`effect`]),
//! Welch and one-sample t-tests ([`ttest`]), and a Pearson chi-square test on
//! 2×3 contingency tables ([`chisq`]).

pub mod bootstrap;
pub mod chisq;
pub mod effect;
pub mod lmm;
pub mod ttest;

pub use bootstrap::bootstrap_ci;
pub use chisq::chi_square_3cat;
pub use effect::{cohens_d_paired, cohens_d_runlevel};
pub use lmm::{fit_before_after, fit_interaction, fit_lmm_random_intercept, Coefficient, LmmFit, LmmSpec};
pub use ttest::{t_test_one_sample, t_test_two_sample};

use thiserror::Error;

/// Two-sided 97.5% standard-normal quantile, used for Wald confidence intervals.
pub const Z_975: f64 = 1.959963984540054;

/// Errors shared across the estimators.
#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("zero variance in sample")]
    ZeroVariance,
    #[error("too few observations: got {got}, need at least {need}")]
    TooFew { got: usize, need: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("too few groups: got {got}, need at least 2")]
    TooFewGroups { got: usize },
    #[error("factor level missing: {0}")]
    MissingLevel(&'static str),
    #[error("contingency table has zero total count")]
    ZeroTotal,
    #[error("optimizer failed to converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Outcome of a statistical procedure: point estimate, 95% interval, p-value,
/// optional standardized effect size, and the sample sizes behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    /// Standardized effect size where the procedure defines one (Cohen's d);
    /// `None` for tests that report only an estimate and p-value.
    pub effect_size: Option<f64>,
    pub n_obs: usize,
    pub n_runs: usize,
}

/// One (before, after) aversiveness pair with the run it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedObs {
    pub before: f64,
    pub after: f64,
    /// Run label; grouping key for the random intercept and run-level rollups.
    pub run: String,
}

/// A collection of before/after pairs, each tagged with its run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedSample {
    pub obs: Vec<PairedObs>,
}

impl PairedSample {
    pub fn new(obs: Vec<PairedObs>) -> Self {
        Self { obs }
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// After − before for each pair, in sample order.
    pub fn deltas(&self) -> Vec<f64> {
        self.obs.iter().map(|o| o.after - o.before).collect()
    }

    /// Mean of (after − before).
    ///
    /// # Errors
    /// [`StatsError::EmptySample`] when the sample has no pairs.
    pub fn mean_delta(&self) -> Result<f64> {
        if self.obs.is_empty() {
            return Err(StatsError::EmptySample);
        }
        Ok(mean(&self.deltas()))
    }

    /// Distinct run labels in order of first appearance.
    pub fn run_labels(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for o in &self.obs {
            if !seen.iter().any(|s| *s == o.run.as_str()) {
                seen.push(o.run.as_str());
            }
        }
        seen
    }

    /// Per-run mean deltas, runs in order of first appearance.
    pub fn run_deltas(&self) -> Vec<(String, f64)> {
        let labels = self
            .run_labels()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>();
        labels
            .into_iter()
            .map(|label| {
                let ds: Vec<f64> = self
                    .obs
                    .iter()
                    .filter(|o| o.run == label)
                    .map(|o| o.after - o.before)
                    .collect();
                let m = mean(&ds);
                (label, m)
            })
            .collect()
    }
}

/// Arithmetic mean with left-to-right summation (fixed order for reproducibility).
pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n−1 denominator, left-to-right summation.
pub(crate) fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}
