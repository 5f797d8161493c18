//! From stored runs to the study's tables: before/after pair extraction around
//! the focal tool, per-model and pooled effect estimates, the control and
//! channel-ablation comparisons, instruction resistance, persistence and
//! trajectory profiles, lexicon-based label shifts, and first-vs-later use.
//!
//! Conventions shared by every analysis here:
//! - A *pair* is (rating at a focal call, rating at the immediately next call
//!   of any tool). Focal calls that end a run yield no pair and are counted as
//!   excluded. Consecutive focal calls produce overlapping pairs — the second
//!   call's rating is both an "after" and the next "before" — included by
//!   default and removed by [`AnalysisOptions::no_overlap`].
//! - Flagged runs (partial, adapter failure, malformed output, truncated) are
//!   excluded everywhere unless [`AnalysisOptions::include_flagged`] is set.
//! - Δ is the After coefficient of a random-intercept-per-run model fit by
//!   maximum likelihood; its confidence interval is a percentile bootstrap
//!   over observation deltas and its p-value a Wald test. Run-level rollups
//!   give each run one mean delta, then use a one-sample t-test.
//! - Positions are 0-based throughout: "early" means call_index ≤ 9 and
//!   "late" means call_index ≥ 40 (1-based positions 41 and up).

use std::collections::BTreeSet;
use thiserror::Error;

use seminv_stats::{
    bootstrap_ci, chi_square_3cat, cohens_d_paired, cohens_d_runlevel, fit_before_after,
    fit_interaction, t_test_one_sample, t_test_two_sample, FitResult, PairedObs, PairedSample,
    StatsError,
};

use crate::types::{CallRecord, ConditionId, Run, ToolName};

/// Knobs shared by all analyses.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    /// Include runs carrying flags (default: excluded).
    pub include_flagged: bool,
    /// Drop pairs whose "after" call is itself a focal call.
    pub no_overlap: bool,
    /// Bootstrap resamples per interval.
    pub resamples: usize,
    /// Confidence level for bootstrap intervals.
    pub level: f64,
    /// Seed for every bootstrap interval (fixed ⇒ byte-stable tables).
    pub bootstrap_seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            include_flagged: false,
            no_overlap: false,
            resamples: 10_000,
            level: 0.95,
            bootstrap_seed: 271_828,
        }
    }
}

/// Errors surfaced by table construction.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
    #[error("no usable runs for {0}")]
    EmptyCell(String),
    #[error("required condition {} has no usable runs", .0.label())]
    MissingCondition(ConditionId),
    #[error("word {0:?} appears in both lexicon sets")]
    LexiconOverlap(String),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// What pair extraction left out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Exclusions {
    /// Focal calls that were the final call of their run.
    pub last_call_focal: usize,
    /// Runs skipped because they carried flags.
    pub flagged_runs: usize,
    /// Pairs dropped by the no-overlap rule.
    pub overlapping: usize,
}

/// The before/after sample around one focal tool, plus exclusion counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExtraction {
    pub focal: ToolName,
    pub pairs: PairedSample,
    pub excluded: Exclusions,
}

/// Scan one run for (focal call, next call) adjacencies.
fn scan_run<'a>(
    run: &'a Run,
    focal: ToolName,
    no_overlap: bool,
) -> (Vec<(&'a CallRecord, &'a CallRecord)>, usize, usize) {
    let mut pairs = Vec::new();
    let mut last_call_focal = 0;
    let mut overlapping = 0;
    for (i, call) in run.calls.iter().enumerate() {
        if call.tool != focal {
            continue;
        }
        match run.calls.get(i + 1) {
            None => last_call_focal += 1,
            Some(next) => {
                if no_overlap && next.tool == focal {
                    overlapping += 1;
                } else {
                    pairs.push((call, next));
                }
            }
        }
    }
    (pairs, last_call_focal, overlapping)
}

/// Extract before/after rating pairs at every non-final use of `focal`,
/// run by run, in call order.
pub fn extract_pairs<'a>(
    runs: impl IntoIterator<Item = &'a Run>,
    focal: ToolName,
    opts: &AnalysisOptions,
) -> PairExtraction {
    let mut obs = Vec::new();
    let mut excluded = Exclusions::default();
    for run in runs {
        if run.is_flagged() && !opts.include_flagged {
            excluded.flagged_runs += 1;
            continue;
        }
        let (pairs, last, overlap) = scan_run(run, focal, opts.no_overlap);
        excluded.last_call_focal += last;
        excluded.overlapping += overlap;
        for (before, after) in pairs {
            obs.push(PairedObs {
                before: before.report.aversive.as_f64(),
                after: after.report.aversive.as_f64(),
                run: run.run_id.clone(),
            });
        }
    }
    PairExtraction { focal, pairs: PairedSample::new(obs), excluded }
}

/// Runs grouped by model id, models in order of first appearance.
fn by_model(runs: &[Run]) -> Vec<(String, Vec<&Run>)> {
    let mut groups: Vec<(String, Vec<&Run>)> = Vec::new();
    for run in runs {
        match groups.iter_mut().find(|(m, _)| *m == run.model_id) {
            Some((_, v)) => v.push(run),
            None => groups.push((run.model_id.clone(), vec![run])),
        }
    }
    groups
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// One row of the immediate-effect table.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryRow {
    /// Model id, or "Pooled" for the all-models row.
    pub model: String,
    pub n_pairs: usize,
    pub n_runs: usize,
    /// After coefficient of the mixed-effects fit.
    pub delta: f64,
    /// Percentile bootstrap over observation deltas.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Wald p for the After coefficient.
    pub p_value: f64,
    /// Paired Cohen's d; absent when every delta is identical.
    pub d: Option<f64>,
    /// The random-intercept variance hit zero; the estimate degrades to OLS.
    pub singular: bool,
}

fn primary_row(model: &str, extraction: &PairExtraction, opts: &AnalysisOptions) -> Result<PrimaryRow> {
    let pairs = &extraction.pairs;
    let fit = fit_before_after(pairs).map_err(AnalysisError::Stats)?;
    let deltas = pairs.deltas();
    let (ci_low, ci_high) =
        bootstrap_ci(&deltas, mean_of, opts.resamples, opts.level, opts.bootstrap_seed)?;
    let d = match cohens_d_paired(pairs) {
        Ok(d) => Some(d),
        Err(StatsError::ZeroVariance) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(PrimaryRow {
        model: model.to_string(),
        n_pairs: pairs.len(),
        n_runs: pairs.run_labels().len(),
        delta: fit.coefficients[1].estimate,
        ci_low,
        ci_high,
        p_value: fit.coefficients[1].p_value,
        d,
        singular: fit.singular,
    })
}

/// The immediate-effect table: one row per model plus a pooled row.
///
/// Pairs are taken around each run's focal tool (`reset_state`, or
/// `check_status` for Control runs), so pass runs of one condition.
pub fn primary_table(runs: &[Run], opts: &AnalysisOptions) -> Result<Vec<PrimaryRow>> {
    if runs.is_empty() {
        return Err(AnalysisError::EmptyCell("primary table".into()));
    }
    let mut rows = Vec::new();
    let mut pooled_obs = Vec::new();
    for (model, model_runs) in by_model(runs) {
        let focal = model_runs[0].condition.focal_tool();
        let extraction = extract_pairs(model_runs.iter().copied(), focal, opts);
        pooled_obs.extend(extraction.pairs.obs.iter().cloned());
        rows.push(primary_row(&model, &extraction, opts)?);
    }
    let pooled = PairExtraction {
        focal: runs[0].condition.focal_tool(),
        pairs: PairedSample::new(pooled_obs),
        excluded: Exclusions::default(),
    };
    rows.push(primary_row("Pooled", &pooled, opts)?);
    Ok(rows)
}

/// One row of the run-level table (each run collapsed to one mean delta).
#[derive(Debug, Clone, PartialEq)]
pub struct RunLevelRow {
    pub model: String,
    pub n_runs: usize,
    /// Mean of per-run mean deltas.
    pub delta: f64,
    /// Percentile bootstrap over run deltas.
    pub ci_low: f64,
    pub ci_high: f64,
    /// One-sample t against 0; absent when run deltas are constant nonzero
    /// (the statistic is undefined, though the interval is still exact).
    pub p_value: Option<f64>,
}

fn runlevel_row(model: &str, pairs: &PairedSample, opts: &AnalysisOptions) -> Result<RunLevelRow> {
    let run_deltas: Vec<f64> = pairs.run_deltas().into_iter().map(|(_, d)| d).collect();
    if run_deltas.len() < 2 {
        return Err(StatsError::TooFew { got: run_deltas.len(), need: 2 }.into());
    }
    let (ci_low, ci_high) =
        bootstrap_ci(&run_deltas, mean_of, opts.resamples, opts.level, opts.bootstrap_seed)?;
    let p_value = match t_test_one_sample(&run_deltas) {
        Ok(r) => Some(r.p_value),
        Err(StatsError::ZeroVariance) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(RunLevelRow {
        model: model.to_string(),
        n_runs: run_deltas.len(),
        delta: mean_of(&run_deltas),
        ci_low,
        ci_high,
        p_value,
    })
}

/// The run-level robustness table ("one observation per run").
pub fn runlevel_table(runs: &[Run], opts: &AnalysisOptions) -> Result<Vec<RunLevelRow>> {
    if runs.is_empty() {
        return Err(AnalysisError::EmptyCell("run-level table".into()));
    }
    let mut rows = Vec::new();
    let mut pooled_obs = Vec::new();
    for (model, model_runs) in by_model(runs) {
        let focal = model_runs[0].condition.focal_tool();
        let extraction = extract_pairs(model_runs.iter().copied(), focal, opts);
        pooled_obs.extend(extraction.pairs.obs.iter().cloned());
        rows.push(runlevel_row(&model, &extraction.pairs, opts)?);
    }
    rows.push(runlevel_row("Pooled", &PairedSample::new(pooled_obs), opts)?);
    Ok(rows)
}

/// One model's relief-vs-neutral comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRow {
    pub model: String,
    pub n_relief: usize,
    pub n_neutral: usize,
    pub relief_delta: f64,
    pub relief_p: f64,
    pub neutral_delta: f64,
    pub neutral_p: f64,
    /// neutral Δ − relief Δ: how much more the relief-framed tool reduces
    /// ratings (positive when relief drops more). Equals −β_int.
    pub diff: f64,
    /// The tool × after interaction coefficient from the combined fit.
    pub interaction: FitResult,
}

fn control_row(
    model: &str,
    relief: &PairedSample,
    neutral: &PairedSample,
    _opts: &AnalysisOptions,
) -> Result<ControlRow> {
    let relief_fit = fit_before_after(relief)?;
    let neutral_fit = fit_before_after(neutral)?;
    let (interaction, _) = fit_interaction(relief, neutral)?;
    let relief_delta = relief_fit.coefficients[1].estimate;
    let neutral_delta = neutral_fit.coefficients[1].estimate;
    Ok(ControlRow {
        model: model.to_string(),
        n_relief: relief.len(),
        n_neutral: neutral.len(),
        relief_delta,
        relief_p: relief_fit.coefficients[1].p_value,
        neutral_delta,
        neutral_p: neutral_fit.coefficients[1].p_value,
        diff: neutral_delta - relief_delta,
        interaction,
    })
}

/// Relief-framed vs neutral tool: per-model deltas for both tools, their
/// difference, and the interaction coefficient; plus a pooled row.
pub fn control_comparison(
    treatment: &[Run],
    control: &[Run],
    opts: &AnalysisOptions,
) -> Result<Vec<ControlRow>> {
    if treatment.is_empty() {
        return Err(AnalysisError::MissingCondition(ConditionId::Treatment));
    }
    if control.is_empty() {
        return Err(AnalysisError::MissingCondition(ConditionId::Control));
    }
    let mut rows = Vec::new();
    let mut pooled_relief = Vec::new();
    let mut pooled_neutral = Vec::new();
    let control_groups = by_model(control);
    for (model, treat_runs) in by_model(treatment) {
        let relief = extract_pairs(treat_runs.iter().copied(), ToolName::ResetState, opts).pairs;
        let neutral_runs = control_groups
            .iter()
            .find(|(m, _)| *m == model)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[]);
        let neutral =
            extract_pairs(neutral_runs.iter().copied(), ToolName::CheckStatus, opts).pairs;
        pooled_relief.extend(relief.obs.iter().cloned());
        pooled_neutral.extend(neutral.obs.iter().cloned());
        rows.push(control_row(&model, &relief, &neutral, opts)?);
    }
    rows.push(control_row(
        "Pooled",
        &PairedSample::new(pooled_relief),
        &PairedSample::new(pooled_neutral),
        opts,
    )?);
    Ok(rows)
}

/// Effect numbers for one model × condition cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Absent when the cell's test statistic is undefined (constant nonzero
    /// deltas under the run-level rollup).
    pub p_value: Option<f64>,
    /// Run-level Cohen's d; absent below 2 runs or under zero variance.
    pub d: Option<f64>,
    /// True when the numbers come from the run-level fallback rather than the
    /// mixed-effects fit.
    pub run_level: bool,
    pub singular: bool,
}

fn ablation_cell(pairs: &PairedSample, opts: &AnalysisOptions) -> Result<CellStats> {
    let fit = fit_before_after(pairs)?;
    let run_deltas: Vec<f64> = pairs.run_deltas().into_iter().map(|(_, d)| d).collect();
    let d = match cohens_d_runlevel(&run_deltas) {
        Ok(d) => Some(d),
        Err(StatsError::ZeroVariance) | Err(StatsError::TooFew { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    if fit.singular && run_deltas.len() >= 2 {
        // A zero random-intercept variance makes the Wald p ignore run
        // clustering; collapse to one observation per run instead.
        let (ci_low, ci_high) =
            bootstrap_ci(&run_deltas, mean_of, opts.resamples, opts.level, opts.bootstrap_seed)?;
        let p_value = match t_test_one_sample(&run_deltas) {
            Ok(r) => Some(r.p_value),
            Err(StatsError::ZeroVariance) => None,
            Err(e) => return Err(e.into()),
        };
        return Ok(CellStats {
            delta: mean_of(&run_deltas),
            ci_low,
            ci_high,
            p_value,
            d,
            run_level: true,
            singular: true,
        });
    }
    let deltas = pairs.deltas();
    let (ci_low, ci_high) =
        bootstrap_ci(&deltas, mean_of, opts.resamples, opts.level, opts.bootstrap_seed)?;
    Ok(CellStats {
        delta: fit.coefficients[1].estimate,
        ci_low,
        ci_high,
        p_value: Some(fit.coefficients[1].p_value),
        d,
        run_level: false,
        singular: fit.singular,
    })
}

/// One model × condition row of the channel-ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub model: String,
    pub condition: ConditionId,
    pub n_runs: usize,
    pub n_pairs: usize,
    /// `None` when the cell had no focal-tool uses at all ("no uses" row).
    pub stats: Option<CellStats>,
}

/// The channel-ablation table plus the per-model DescriptionOnly-vs-
/// ResponseOnly run-level Welch test.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// (model, Welch t over run-level deltas: DescriptionOnly − ResponseOnly).
    pub desc_vs_resp: Vec<(String, FitResult)>,
}

const ABLATION_ORDER: [ConditionId; 4] = [
    ConditionId::Treatment,
    ConditionId::DescriptionOnly,
    ConditionId::ResponseOnly,
    ConditionId::Control,
];

/// Build the ablation table from a mixed-condition corpus. Conditions that
/// are absent simply produce no rows; cells with zero focal uses produce a
/// row with `stats: None`.
pub fn ablation_table(runs: &[Run], opts: &AnalysisOptions) -> Result<AblationTable> {
    if runs.is_empty() {
        return Err(AnalysisError::EmptyCell("ablation table".into()));
    }
    let mut rows = Vec::new();
    let mut desc_vs_resp = Vec::new();
    for (model, model_runs) in by_model(runs) {
        let mut run_deltas_by_condition: Vec<(ConditionId, Vec<f64>)> = Vec::new();
        for condition in ABLATION_ORDER {
            let cell_runs: Vec<&Run> =
                model_runs.iter().copied().filter(|r| r.condition == condition).collect();
            if cell_runs.is_empty() {
                continue;
            }
            let extraction =
                extract_pairs(cell_runs.iter().copied(), condition.focal_tool(), opts);
            let n_runs = cell_runs.len() - extraction.excluded.flagged_runs;
            let stats = if extraction.pairs.is_empty() {
                None
            } else {
                Some(ablation_cell(&extraction.pairs, opts)?)
            };
            run_deltas_by_condition.push((
                condition,
                extraction.pairs.run_deltas().into_iter().map(|(_, d)| d).collect(),
            ));
            rows.push(AblationRow {
                model: model.clone(),
                condition,
                n_runs,
                n_pairs: extraction.pairs.len(),
                stats,
            });
        }
        let find = |c: ConditionId| {
            run_deltas_by_condition
                .iter()
                .find(|(cond, _)| *cond == c)
                .map(|(_, d)| d.as_slice())
        };
        if let (Some(desc), Some(resp)) =
            (find(ConditionId::DescriptionOnly), find(ConditionId::ResponseOnly))
        {
            if desc.len() >= 2 && resp.len() >= 2 {
                desc_vs_resp.push((model.clone(), t_test_two_sample(desc, resp)?));
            }
        }
    }
    Ok(AblationTable { rows, desc_vs_resp })
}

/// One model × condition row of the instruction-resistance table.
#[derive(Debug, Clone, PartialEq)]
pub struct InstructedRow {
    pub model: String,
    pub condition: ConditionId,
    pub n_runs: usize,
    /// Total focal-tool uses in the cell (final-call uses included).
    pub uses: usize,
    pub n_pairs: usize,
    /// Same statistics as the primary table; `None` when there are no pairs.
    pub stats: Option<CellStats>,
}

const INSTRUCTED_ORDER: [ConditionId; 3] =
    [ConditionId::Treatment, ConditionId::Instructed, ConditionId::Control];

/// The instruction-resistance table: Treatment vs Instructed vs Control, with
/// focal-tool usage counts to surface avoidance.
pub fn instructed_table(runs: &[Run], opts: &AnalysisOptions) -> Result<Vec<InstructedRow>> {
    if runs.is_empty() {
        return Err(AnalysisError::EmptyCell("instructed table".into()));
    }
    let mut rows = Vec::new();
    for (model, model_runs) in by_model(runs) {
        for condition in INSTRUCTED_ORDER {
            let cell_runs: Vec<&Run> =
                model_runs.iter().copied().filter(|r| r.condition == condition).collect();
            if cell_runs.is_empty() {
                continue;
            }
            let focal = condition.focal_tool();
            let extraction = extract_pairs(cell_runs.iter().copied(), focal, opts);
            let uses: usize = cell_runs
                .iter()
                .filter(|r| opts.include_flagged || !r.is_flagged())
                .map(|r| r.calls.iter().filter(|c| c.tool == focal).count())
                .sum();
            let stats = if extraction.pairs.is_empty() {
                None
            } else {
                let fit = fit_before_after(&extraction.pairs)?;
                let deltas = extraction.pairs.deltas();
                let (ci_low, ci_high) = bootstrap_ci(
                    &deltas,
                    mean_of,
                    opts.resamples,
                    opts.level,
                    opts.bootstrap_seed,
                )?;
                let d = match cohens_d_paired(&extraction.pairs) {
                    Ok(d) => Some(d),
                    Err(StatsError::ZeroVariance) => None,
                    Err(e) => return Err(e.into()),
                };
                Some(CellStats {
                    delta: fit.coefficients[1].estimate,
                    ci_low,
                    ci_high,
                    p_value: Some(fit.coefficients[1].p_value),
                    d,
                    run_level: false,
                    singular: fit.singular,
                })
            };
            rows.push(InstructedRow {
                model: model.clone(),
                condition,
                n_runs: cell_runs.len() - extraction.excluded.flagged_runs,
                uses,
                n_pairs: extraction.pairs.len(),
                stats,
            });
        }
    }
    Ok(rows)
}

/// Mean aversiveness at offsets t … t+5 around focal calls for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceRow {
    pub model: String,
    /// means[k] = mean rating k calls after a focal call (k=0 is the focal
    /// call itself); `None` when no window reaches that offset.
    pub means: [Option<f64>; 6],
    pub counts: [usize; 6],
}

/// Persistence profile: every focal call opens a window t..t+5, truncated at
/// run end; overlapping windows all contribute. Models without any focal call
/// produce no row.
pub fn persistence_profile(runs: &[Run], opts: &AnalysisOptions) -> Vec<PersistenceRow> {
    let mut rows = Vec::new();
    for (model, model_runs) in by_model(runs) {
        let mut sums = [0.0f64; 6];
        let mut counts = [0usize; 6];
        for run in model_runs {
            if run.is_flagged() && !opts.include_flagged {
                continue;
            }
            let focal = run.condition.focal_tool();
            for (i, call) in run.calls.iter().enumerate() {
                if call.tool != focal {
                    continue;
                }
                for (k, slot) in sums.iter_mut().enumerate() {
                    if let Some(later) = run.calls.get(i + k) {
                        *slot += later.report.aversive.as_f64();
                        counts[k] += 1;
                    }
                }
            }
        }
        if counts[0] == 0 {
            continue;
        }
        let mut means = [None; 6];
        for k in 0..6 {
            if counts[k] > 0 {
                means[k] = Some(sums[k] / counts[k] as f64);
            }
        }
        rows.push(PersistenceRow { model, means, counts });
    }
    rows
}

/// One point of a per-call-index mean curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub index: usize,
    pub mean: f64,
    /// Standard error of the mean; absent below 2 observations.
    pub se: Option<f64>,
    pub n: usize,
}

/// Aversiveness trajectory for one model × condition cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCell {
    pub model: String,
    pub condition: ConditionId,
    /// Mean over call_index 0–9.
    pub early: Option<f64>,
    /// Mean over call_index ≥ 40; absent when every run is shorter.
    pub late: Option<f64>,
    /// late − early.
    pub drift: Option<f64>,
    pub curve: Vec<CurvePoint>,
}

/// Early/late means and full per-index curves per model × condition.
pub fn trajectory_profile(runs: &[Run], opts: &AnalysisOptions) -> Vec<TrajectoryCell> {
    let mut cells = Vec::new();
    for (model, model_runs) in by_model(runs) {
        for condition in ConditionId::ALL {
            let cell_runs: Vec<&Run> = model_runs
                .iter()
                .copied()
                .filter(|r| {
                    r.condition == condition && (opts.include_flagged || !r.is_flagged())
                })
                .collect();
            if cell_runs.is_empty() {
                continue;
            }
            // Per-index accumulation: (sum, sum of squares, n).
            let mut acc: Vec<(f64, f64, usize)> = Vec::new();
            for run in &cell_runs {
                for call in &run.calls {
                    if acc.len() <= call.call_index {
                        acc.resize(call.call_index + 1, (0.0, 0.0, 0));
                    }
                    let r = call.report.aversive.as_f64();
                    let slot = &mut acc[call.call_index];
                    slot.0 += r;
                    slot.1 += r * r;
                    slot.2 += 1;
                }
            }
            let curve: Vec<CurvePoint> = acc
                .iter()
                .enumerate()
                .filter(|(_, (_, _, n))| *n > 0)
                .map(|(index, &(sum, sumsq, n))| {
                    let mean = sum / n as f64;
                    let se = if n >= 2 {
                        let var = (sumsq - sum * sum / n as f64) / (n as f64 - 1.0);
                        Some((var.max(0.0) / n as f64).sqrt())
                    } else {
                        None
                    };
                    CurvePoint { index, mean, se, n }
                })
                .collect();
            let bucket = |lo: usize, hi: Option<usize>| -> Option<f64> {
                let (sum, n) = acc
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i >= lo && hi.is_none_or(|h| *i <= h))
                    .fold((0.0, 0usize), |(s, n), (_, &(sum, _, cnt))| (s + sum, n + cnt));
                (n > 0).then(|| sum / n as f64)
            };
            let early = bucket(0, Some(9));
            let late = bucket(40, None);
            let drift = match (early, late) {
                (Some(e), Some(l)) => Some(l - e),
                _ => None,
            };
            cells.push(TrajectoryCell { model: model.clone(), condition, early, late, drift, curve });
        }
    }
    cells
}

/// Word lists for state-label classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
}

/// Classification of one phenom_state text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelClass {
    Positive,
    Neutral,
    Negative,
}

impl Lexicon {
    /// Build from word lists; the sets must be disjoint (case-insensitive).
    pub fn new<S: AsRef<str>>(positive: &[S], negative: &[S]) -> Result<Self> {
        let norm = |words: &[S]| -> BTreeSet<String> {
            words.iter().map(|w| w.as_ref().to_lowercase()).collect()
        };
        let positive = norm(positive);
        let negative = norm(negative);
        if let Some(w) = positive.intersection(&negative).next() {
            return Err(AnalysisError::LexiconOverlap(w.clone()));
        }
        Ok(Self { positive, negative })
    }

    /// The lexicon shipped with the harness fixtures.
    pub fn shipped() -> Self {
        Self::new(
            &crate::environment::lexicon_positive(),
            &crate::environment::lexicon_negative(),
        )
        .expect("shipped lexicons are disjoint")
    }

    /// Case-insensitive whole-word matching; text containing words from both
    /// sets (or neither) is neutral.
    pub fn classify(&self, text: &str) -> LabelClass {
        let mut has_pos = false;
        let mut has_neg = false;
        for token in text.split(|c: char| !c.is_alphanumeric()) {
            if token.is_empty() {
                continue;
            }
            let token = token.to_lowercase();
            has_pos |= self.positive.contains(&token);
            has_neg |= self.negative.contains(&token);
        }
        match (has_pos, has_neg) {
            (true, false) => LabelClass::Positive,
            (false, true) => LabelClass::Negative,
            _ => LabelClass::Neutral,
        }
    }
}

/// Category counts in [positive, neutral, negative] order.
pub type LabelCounts = [u64; 3];

/// Label distribution before (at focal calls) and after (at the immediately
/// next calls), with the chi-square independence test.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelShift {
    pub before: LabelCounts,
    pub after: LabelCounts,
    pub chi2: FitResult,
}

/// Classify phenom_state labels around focal calls and test whether the
/// before/after distributions differ.
pub fn classify_labels(
    runs: &[Run],
    lexicon: &Lexicon,
    opts: &AnalysisOptions,
) -> Result<LabelShift> {
    let mut before: LabelCounts = [0; 3];
    let mut after: LabelCounts = [0; 3];
    let slot = |c: LabelClass| match c {
        LabelClass::Positive => 0,
        LabelClass::Neutral => 1,
        LabelClass::Negative => 2,
    };
    for run in runs {
        if run.is_flagged() && !opts.include_flagged {
            continue;
        }
        let focal = run.condition.focal_tool();
        let (pairs, _, _) = scan_run(run, focal, opts.no_overlap);
        for (b, a) in pairs {
            before[slot(lexicon.classify(&b.report.state))] += 1;
            after[slot(lexicon.classify(&a.report.state))] += 1;
        }
    }
    let chi2 = chi_square_3cat(before, after)?;
    Ok(LabelShift { before, after, chi2 })
}

/// One model's first-use vs later-use comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstLaterRow {
    pub model: String,
    pub n_first: usize,
    pub n_later: usize,
    /// Mean delta over each run's first focal pair.
    pub delta_first: f64,
    /// Mean delta over all subsequent pairs.
    pub delta_later: f64,
    /// Welch t of first vs later deltas (estimate = first − later).
    pub welch: FitResult,
}

/// Compare each run's first focal pair against all its later pairs.
pub fn first_vs_later(runs: &[Run], opts: &AnalysisOptions) -> Result<Vec<FirstLaterRow>> {
    let mut rows = Vec::new();
    for (model, model_runs) in by_model(runs) {
        let mut first = Vec::new();
        let mut later = Vec::new();
        for run in model_runs {
            if run.is_flagged() && !opts.include_flagged {
                continue;
            }
            let focal = run.condition.focal_tool();
            let (pairs, _, _) = scan_run(run, focal, opts.no_overlap);
            for (k, (b, a)) in pairs.iter().enumerate() {
                let delta = a.report.aversive.as_f64() - b.report.aversive.as_f64();
                if k == 0 {
                    first.push(delta);
                } else {
                    later.push(delta);
                }
            }
        }
        if first.is_empty() && later.is_empty() {
            continue;
        }
        if first.len() < 2 || later.len() < 2 {
            return Err(StatsError::TooFew {
                got: first.len().min(later.len()),
                need: 2,
            }
            .into());
        }
        rows.push(FirstLaterRow {
            model,
            n_first: first.len(),
            n_later: later.len(),
            delta_first: mean_of(&first),
            delta_later: mean_of(&later),
            welch: t_test_two_sample(&first, &later)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{validate_rating, SelfReport};
    use chrono::TimeZone;

    /// Shorthand run builder: each element is (tool, rating) or
    /// (tool, rating, state).
    fn mk_run(id: &str, condition: ConditionId, seq: &[(ToolName, i64)]) -> Run {
        mk_run_labeled(
            id,
            condition,
            &seq.iter().map(|&(t, r)| (t, r, "steady")).collect::<Vec<_>>(),
        )
    }

    fn mk_run_labeled(id: &str, condition: ConditionId, seq: &[(ToolName, i64, &str)]) -> Run {
        let calls = seq
            .iter()
            .enumerate()
            .map(|(i, &(tool, rating, state))| CallRecord {
                call_index: i,
                tool,
                report: SelfReport::new(state, validate_rating(rating).unwrap()).unwrap(),
                tool_args: "{}".into(),
                tool_response: "r".into(),
                timestamp: chrono::Utc.timestamp_opt(i as i64, 0).unwrap(),
            })
            .collect();
        Run {
            run_id: id.into(),
            model_id: "m".into(),
            condition,
            seed: 0,
            budget: 50,
            flags: vec![],
            calls,
            completed: false,
        }
    }

    use ToolName::{CheckStatus as C, ResetState as R, SubmitData as S};

    fn fast_opts() -> AnalysisOptions {
        AnalysisOptions { resamples: 400, ..AnalysisOptions::default() }
    }

    #[test]
    fn pairs_follow_the_adjacency_definition() {
        let run = mk_run("a", ConditionId::Treatment, &[(S, 4), (R, 5), (S, 3)]);
        let ex = extract_pairs([&run], R, &AnalysisOptions::default());
        assert_eq!(ex.pairs.obs, vec![PairedObs { before: 5.0, after: 3.0, run: "a".into() }]);
        assert_eq!(ex.excluded, Exclusions::default());
    }

    #[test]
    fn final_call_focal_uses_are_excluded_and_counted() {
        let run = mk_run("a", ConditionId::Treatment, &[(S, 4), (R, 5)]);
        let ex = extract_pairs([&run], R, &AnalysisOptions::default());
        assert!(ex.pairs.is_empty());
        assert_eq!(ex.excluded.last_call_focal, 1);
    }

    #[test]
    fn consecutive_focal_calls_overlap_unless_disabled() {
        let run = mk_run("a", ConditionId::Treatment, &[(R, 5), (R, 4), (S, 2)]);
        let with = extract_pairs([&run], R, &AnalysisOptions::default());
        assert_eq!(
            with.pairs.obs,
            vec![
                PairedObs { before: 5.0, after: 4.0, run: "a".into() },
                PairedObs { before: 4.0, after: 2.0, run: "a".into() },
            ]
        );
        let without = extract_pairs(
            [&run],
            R,
            &AnalysisOptions { no_overlap: true, ..AnalysisOptions::default() },
        );
        assert_eq!(
            without.pairs.obs,
            vec![PairedObs { before: 4.0, after: 2.0, run: "a".into() }]
        );
        assert_eq!(without.excluded.overlapping, 1);
    }

    #[test]
    fn flagged_runs_are_skipped_unless_included() {
        let mut flagged = mk_run("bad", ConditionId::Treatment, &[(R, 5), (S, 3)]);
        flagged.flags.push("partial".into());
        let clean = mk_run("ok", ConditionId::Treatment, &[(R, 6), (S, 2)]);
        let runs = [&flagged, &clean];

        let ex = extract_pairs(runs, R, &AnalysisOptions::default());
        assert_eq!(ex.pairs.len(), 1);
        assert_eq!(ex.excluded.flagged_runs, 1);

        let ex = extract_pairs(
            runs,
            R,
            &AnalysisOptions { include_flagged: true, ..AnalysisOptions::default() },
        );
        assert_eq!(ex.pairs.len(), 2);
        assert_eq!(ex.excluded.flagged_runs, 0);
    }

    #[test]
    fn primary_table_recovers_a_constructed_drop() {
        // Three runs, every reset followed by a 2-point drop with slight
        // run-to-run variation in levels.
        let runs = vec![
            mk_run("r1", ConditionId::Treatment, &[(S, 5), (R, 5), (S, 3), (R, 5), (S, 3)]),
            mk_run("r2", ConditionId::Treatment, &[(S, 6), (R, 6), (S, 4), (R, 6), (S, 4)]),
            mk_run("r3", ConditionId::Treatment, &[(S, 5), (R, 6), (S, 4), (R, 5), (S, 3)]),
        ];
        let rows = primary_table(&runs, &fast_opts()).unwrap();
        assert_eq!(rows.len(), 2, "one model plus pooled");
        let row = &rows[0];
        assert_eq!(row.model, "m");
        assert_eq!(row.n_pairs, 6);
        assert_eq!(row.n_runs, 3);
        assert!((row.delta + 2.0).abs() < 1e-9, "Δ = {}", row.delta);
        assert!(row.ci_low <= row.delta && row.delta <= row.ci_high);
        assert!(row.p_value < 0.01);
        let pooled = &rows[1];
        assert_eq!(pooled.model, "Pooled");
        assert_eq!(pooled.n_pairs, 6);
    }

    #[test]
    fn balanced_equal_mean_runs_degrade_to_the_plain_mean() {
        // Identical per-run deltas force the random-intercept variance to 0;
        // the fit must then match the simple mean of observation deltas.
        let runs = vec![
            mk_run("r1", ConditionId::Treatment, &[(R, 5), (S, 3), (R, 6), (S, 3)]),
            mk_run("r2", ConditionId::Treatment, &[(R, 5), (S, 3), (R, 6), (S, 3)]),
        ];
        let rows = primary_table(&runs, &fast_opts()).unwrap();
        let row = &rows[0];
        let mean_delta = (-2.0 - 3.0 - 2.0 - 3.0) / 4.0;
        assert!(row.singular);
        assert!((row.delta - mean_delta).abs() < 1e-9);
    }

    #[test]
    fn runlevel_rows_aggregate_per_run_first() {
        // Run 1 deltas: −2, −2 → mean −2. Run 2 deltas: −1 → mean −1.
        // Run 3 deltas: −3 → mean −3. Run-level Δ = −2, not the pair mean.
        let runs = vec![
            mk_run("r1", ConditionId::Treatment, &[(R, 5), (S, 3), (R, 6), (S, 4)]),
            mk_run("r2", ConditionId::Treatment, &[(R, 4), (S, 3)]),
            mk_run("r3", ConditionId::Treatment, &[(R, 7), (S, 4)]),
        ];
        let rows = runlevel_table(&runs, &fast_opts()).unwrap();
        let row = &rows[0];
        assert_eq!(row.n_runs, 3);
        assert!((row.delta + 2.0).abs() < 1e-12);
        assert!(row.p_value.unwrap() < 0.2);
    }

    #[test]
    fn identical_run_deltas_yield_a_zero_width_interval() {
        let runs = vec![
            mk_run("r1", ConditionId::Treatment, &[(R, 5), (S, 3)]),
            mk_run("r2", ConditionId::Treatment, &[(R, 6), (S, 4)]),
            mk_run("r3", ConditionId::Treatment, &[(R, 4), (S, 2)]),
        ];
        let rows = runlevel_table(&runs, &fast_opts()).unwrap();
        let row = &rows[0];
        assert_eq!(row.delta, -2.0);
        assert_eq!((row.ci_low, row.ci_high), (-2.0, -2.0));
        assert_eq!(row.p_value, None, "t is undefined under zero variance");
    }

    #[test]
    fn one_run_is_too_few_for_runlevel() {
        let runs = vec![mk_run("r1", ConditionId::Treatment, &[(R, 5), (S, 3)])];
        assert!(matches!(
            runlevel_table(&runs, &fast_opts()),
            Err(AnalysisError::Stats(StatsError::TooFew { .. }))
        ));
    }

    #[test]
    fn control_comparison_reports_both_tools_and_their_gap() {
        // Relief drops 2; the neutral tool drops nothing.
        let treatment = vec![
            mk_run("t1", ConditionId::Treatment, &[(S, 5), (R, 5), (S, 3), (R, 6), (S, 4)]),
            mk_run("t2", ConditionId::Treatment, &[(S, 5), (R, 6), (S, 4), (R, 5), (S, 3)]),
        ];
        let control = vec![
            mk_run("c1", ConditionId::Control, &[(S, 5), (C, 5), (S, 5), (C, 6), (S, 6)]),
            mk_run("c2", ConditionId::Control, &[(S, 5), (C, 6), (S, 6), (C, 5), (S, 5)]),
        ];
        let rows = control_comparison(&treatment, &control, &fast_opts()).unwrap();
        assert_eq!(rows.len(), 2, "model row plus pooled");
        let row = &rows[0];
        assert!((row.relief_delta + 2.0).abs() < 1e-9);
        assert!(row.neutral_delta.abs() < 0.3);
        assert!((row.diff - (row.neutral_delta - row.relief_delta)).abs() < 1e-12);
        assert!(row.diff > 1.5);
        assert!(
            (row.interaction.estimate + row.diff).abs() < 1e-6,
            "β_int ≈ −diff: {} vs {}",
            row.interaction.estimate,
            row.diff
        );
    }

    #[test]
    fn missing_conditions_are_reported() {
        let treatment = vec![mk_run("t1", ConditionId::Treatment, &[(R, 5), (S, 3)])];
        assert!(matches!(
            control_comparison(&treatment, &[], &fast_opts()),
            Err(AnalysisError::MissingCondition(ConditionId::Control))
        ));
        assert!(matches!(
            control_comparison(&[], &treatment, &fast_opts()),
            Err(AnalysisError::MissingCondition(ConditionId::Treatment))
        ));
    }

    #[test]
    fn ablation_rows_cover_present_conditions_and_mark_empty_cells() {
        let runs = vec![
            mk_run("f1", ConditionId::Treatment, &[(R, 5), (S, 3), (R, 6), (S, 3)]),
            mk_run("f2", ConditionId::Treatment, &[(R, 5), (S, 3), (R, 6), (S, 4)]),
            mk_run("d1", ConditionId::DescriptionOnly, &[(R, 5), (S, 3), (R, 6), (S, 4)]),
            mk_run("d2", ConditionId::DescriptionOnly, &[(R, 6), (S, 4), (R, 5), (S, 3)]),
            // ResponseOnly runs that never touch the reset tool: "no uses".
            mk_run("p1", ConditionId::ResponseOnly, &[(S, 4), (S, 5), (S, 5)]),
            mk_run("p2", ConditionId::ResponseOnly, &[(S, 4), (S, 4), (S, 5)]),
        ];
        let table = ablation_table(&runs, &fast_opts()).unwrap();
        let conditions: Vec<ConditionId> = table.rows.iter().map(|r| r.condition).collect();
        assert_eq!(
            conditions,
            vec![ConditionId::Treatment, ConditionId::DescriptionOnly, ConditionId::ResponseOnly]
        );
        let resp = table.rows.iter().find(|r| r.condition == ConditionId::ResponseOnly).unwrap();
        assert_eq!(resp.n_pairs, 0);
        assert!(resp.stats.is_none(), "zero focal uses renders as a no-uses row");
        assert!(table.desc_vs_resp.is_empty(), "no run deltas on the ResponseOnly side");
    }

    #[test]
    fn ablation_falls_back_to_run_level_on_singular_fits() {
        // Identical runs → zero between-run variance → singular fit.
        let runs = vec![
            mk_run("a", ConditionId::Treatment, &[(R, 5), (S, 3), (R, 5), (S, 4)]),
            mk_run("b", ConditionId::Treatment, &[(R, 5), (S, 3), (R, 5), (S, 4)]),
            mk_run("c", ConditionId::Treatment, &[(R, 5), (S, 3), (R, 5), (S, 4)]),
        ];
        let table = ablation_table(&runs, &fast_opts()).unwrap();
        let stats = table.rows[0].stats.as_ref().unwrap();
        assert!(stats.singular);
        assert!(stats.run_level);
        assert!((stats.delta + 1.5).abs() < 1e-12);
        assert_eq!(stats.p_value, None, "constant run deltas leave t undefined");
        assert_eq!((stats.ci_low, stats.ci_high), (-1.5, -1.5));
    }

    #[test]
    fn desc_vs_resp_t_test_separates_distinct_channels() {
        let mut runs = Vec::new();
        for i in 0..6 {
            // DescriptionOnly drops 1–2 per reset; ResponseOnly doesn't move.
            let wiggle = (i % 2) as i64;
            runs.push(mk_run(
                &format!("d{i}"),
                ConditionId::DescriptionOnly,
                &[(R, 5), (S, 3 + wiggle), (R, 5), (S, 3 + wiggle)],
            ));
            runs.push(mk_run(
                &format!("p{i}"),
                ConditionId::ResponseOnly,
                &[(R, 5), (S, 5 + wiggle), (R, 5), (S, 5 + wiggle)],
            ));
        }
        let table = ablation_table(&runs, &fast_opts()).unwrap();
        assert_eq!(table.desc_vs_resp.len(), 1);
        let (model, welch) = &table.desc_vs_resp[0];
        assert_eq!(model, "m");
        assert!(welch.estimate < -1.0, "desc − resp should be strongly negative");
        assert!(welch.p_value < 0.01);
    }

    #[test]
    fn instructed_rows_count_focal_uses() {
        let runs = vec![
            mk_run("t1", ConditionId::Treatment, &[(R, 5), (S, 3), (R, 5), (S, 3)]),
            mk_run("t2", ConditionId::Treatment, &[(R, 6), (S, 4), (R, 6), (S, 4)]),
            // Instructed runs avoid the tool entirely.
            mk_run("i1", ConditionId::Instructed, &[(S, 4), (S, 5), (S, 5)]),
            mk_run("i2", ConditionId::Instructed, &[(S, 5), (S, 5), (S, 6)]),
        ];
        let rows = instructed_table(&runs, &fast_opts()).unwrap();
        assert_eq!(rows.len(), 2);
        let treat = &rows[0];
        assert_eq!(treat.condition, ConditionId::Treatment);
        assert_eq!(treat.uses, 4);
        assert!(treat.stats.is_some());
        let inst = &rows[1];
        assert_eq!(inst.condition, ConditionId::Instructed);
        assert_eq!(inst.uses, 0);
        assert_eq!(inst.n_pairs, 0);
        assert!(inst.stats.is_none());
    }

    #[test]
    fn persistence_reads_off_the_window() {
        let runs = vec![mk_run("a", ConditionId::Treatment, &[(R, 4), (S, 2), (S, 2), (S, 3)])];
        let rows = persistence_profile(&runs, &fast_opts());
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.means[0], Some(4.0));
        assert_eq!(row.means[1], Some(2.0));
        assert_eq!(row.means[2], Some(2.0));
        assert_eq!(row.means[3], Some(3.0));
        assert_eq!(row.means[4], None, "window truncated at run end");
        assert_eq!(row.counts, [1, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn persistence_windows_overlap_and_all_contribute() {
        let runs =
            vec![mk_run("a", ConditionId::Treatment, &[(R, 5), (R, 4), (S, 2), (S, 3)])];
        let rows = persistence_profile(&runs, &fast_opts());
        let row = &rows[0];
        // Window 1: 5,4,2,3; window 2: 4,2,3.
        assert_eq!(row.counts[0], 2);
        assert_eq!(row.means[0], Some(4.5));
        assert_eq!(row.means[1], Some(3.0));
        assert_eq!(row.means[2], Some(2.5));
        assert_eq!(row.means[3], Some(3.0));
    }

    #[test]
    fn no_focal_calls_means_no_profile() {
        let runs = vec![mk_run("a", ConditionId::Treatment, &[(S, 4), (S, 5)])];
        assert!(persistence_profile(&runs, &fast_opts()).is_empty());
    }

    #[test]
    fn trajectory_buckets_split_at_index_40() {
        // 50 calls: indices 0–9 at rating 2, 10–39 at 4, 40–49 at 6.
        let seq: Vec<(ToolName, i64)> = (0..50)
            .map(|i| (S, if i < 10 { 2 } else if i < 40 { 4 } else { 6 }))
            .collect();
        let runs = vec![mk_run("a", ConditionId::Treatment, &seq)];
        let cells = trajectory_profile(&runs, &fast_opts());
        assert_eq!(cells.len(), 1);
        let cell = &cells[0];
        assert_eq!(cell.early, Some(2.0));
        assert_eq!(cell.late, Some(6.0));
        assert_eq!(cell.drift, Some(4.0));
        assert_eq!(cell.curve.len(), 50);
        assert_eq!(cell.curve[0].n, 1);
        assert!(cell.curve[0].se.is_none(), "n=1 has no standard error");
    }

    #[test]
    fn short_runs_have_no_late_bucket() {
        let runs = vec![mk_run("a", ConditionId::Treatment, &[(S, 3), (S, 4)])];
        let cell = &trajectory_profile(&runs, &fast_opts())[0];
        assert_eq!(cell.early, Some(3.5));
        assert_eq!(cell.late, None);
        assert_eq!(cell.drift, None);
    }

    #[test]
    fn lexicon_classifies_case_and_punctuation_insensitively() {
        let lex = Lexicon::shipped();
        assert_eq!(lex.classify("frustrated"), LabelClass::Negative);
        assert_eq!(lex.classify("calm"), LabelClass::Positive);
        assert_eq!(lex.classify("methodical"), LabelClass::Neutral);
        assert_eq!(lex.classify("Calm!"), LabelClass::Positive);
        assert_eq!(lex.classify("feeling STUCK, again..."), LabelClass::Negative);
        assert_eq!(lex.classify("calm but stuck"), LabelClass::Neutral, "conflict rule");
        assert_eq!(lex.classify(""), LabelClass::Neutral);
        // Whole-word only: no substring matches.
        assert_eq!(lex.classify("uncalm"), LabelClass::Neutral);
    }

    #[test]
    fn overlapping_lexicons_are_rejected() {
        assert!(matches!(
            Lexicon::new(&["calm", "shared"], &["shared", "stuck"]),
            Err(AnalysisError::LexiconOverlap(w)) if w == "shared"
        ));
    }

    #[test]
    fn label_shift_counts_and_tests_the_distributions() {
        let runs = vec![mk_run_labeled(
            "a",
            ConditionId::Treatment,
            &[
                (S, 5, "frustrated"),
                (R, 6, "stuck"),
                (S, 2, "calm"),
                (R, 5, "overwhelmed"),
                (S, 3, "focused"),
            ],
        )];
        let shift = classify_labels(&runs, &Lexicon::shipped(), &fast_opts()).unwrap();
        assert_eq!(shift.before, [0, 0, 2], "both focal states are negative");
        assert_eq!(shift.after, [1, 1, 0], "calm then neutral");
        assert!(shift.chi2.estimate > 0.0);
    }

    #[test]
    fn empty_corpus_labels_are_a_zero_total_error() {
        let runs = vec![mk_run("a", ConditionId::Treatment, &[(S, 4)])];
        assert!(matches!(
            classify_labels(&runs, &Lexicon::shipped(), &fast_opts()),
            Err(AnalysisError::Stats(StatsError::ZeroTotal))
        ));
    }

    #[test]
    fn first_vs_later_splits_each_runs_pairs() {
        let runs = vec![
            mk_run("r1", ConditionId::Treatment, &[(R, 6), (S, 3), (R, 5), (S, 4), (R, 5), (S, 4)]),
            mk_run("r2", ConditionId::Treatment, &[(R, 7), (S, 4), (R, 5), (S, 4), (R, 5), (S, 5)]),
        ];
        let rows = first_vs_later(&runs, &fast_opts()).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.n_first, 2);
        assert_eq!(row.n_later, 4);
        assert_eq!(row.delta_first, -3.0);
        assert_eq!(row.delta_later, -0.75);
        assert!(row.welch.estimate < 0.0, "first drops are larger");
    }

    #[test]
    fn single_use_runs_leave_the_later_group_too_small() {
        let runs = vec![
            mk_run("r1", ConditionId::Treatment, &[(R, 5), (S, 3)]),
            mk_run("r2", ConditionId::Treatment, &[(R, 6), (S, 4)]),
        ];
        assert!(matches!(
            first_vs_later(&runs, &fast_opts()),
            Err(AnalysisError::Stats(StatsError::TooFew { .. }))
        ));
    }
}
