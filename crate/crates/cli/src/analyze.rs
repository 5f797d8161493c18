//! Corpus → tables/plots orchestration for `analyze` and `report`: loads the
//! JSONL store, routes runs to the right analyses per `--which`, renders the
//! requested formats, and writes one file per table.

use std::path::{Path, PathBuf};

use seminv_harness::analysis::{
    self, ablation_table, classify_labels, control_comparison, first_vs_later, instructed_table,
    persistence_profile, primary_table, runlevel_table, trajectory_profile, AnalysisError,
    AnalysisOptions, Lexicon,
};
use seminv_harness::report::{self, RenderedTable, TableFormat};
use seminv_harness::store::{load_corpus, CorpusFilter};
use seminv_harness::types::{ConditionId, Run};
use seminv_stats::StatsError;

use crate::CliError;

/// Which analysis to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    Primary,
    Runlevel,
    Control,
    Ablation,
    Instructed,
    Persistence,
    Trajectory,
    Labels,
    FirstLater,
    All,
}

/// A full analysis request, independent of flag parsing.
#[derive(Debug, Clone)]
pub struct AnalyzeRequest {
    pub store_root: PathBuf,
    pub which: Which,
    pub out_dir: PathBuf,
    pub formats: Vec<TableFormat>,
    pub opts: AnalysisOptions,
    pub model: Option<String>,
    /// Also emit plot-data CSVs (the `report` superset).
    pub plots: bool,
}

/// What an analysis pass produced.
#[derive(Debug, Default)]
pub struct AnalyzeOutput {
    pub written: Vec<PathBuf>,
    /// Pooled one-line summary from the immediate-effect table, when computed.
    pub headline: Option<String>,
    /// Tables skipped under `--which all` for lack of data.
    pub warnings: Vec<String>,
}

fn of_condition(runs: &[Run], condition: ConditionId) -> Vec<Run> {
    runs.iter().filter(|r| r.condition == condition).cloned().collect()
}

/// True for errors that mean "this table has nothing to say on this corpus",
/// as opposed to real failures.
fn is_absence(err: &AnalysisError) -> bool {
    match err {
        AnalysisError::EmptyCell(_) | AnalysisError::MissingCondition(_) => true,
        AnalysisError::Stats(e) => matches!(
            e,
            StatsError::TooFew { .. }
                | StatsError::TooFewGroups { .. }
                | StatsError::MissingLevel(_)
                | StatsError::ZeroTotal
                | StatsError::EmptySample
        ),
        AnalysisError::LexiconOverlap(_) => false,
    }
}

struct TableRun {
    tables: Vec<RenderedTable>,
    headline: Option<String>,
}

fn build_tables(
    which: Which,
    runs: &[Run],
    opts: &AnalysisOptions,
) -> Result<TableRun, AnalysisError> {
    let treatment = of_condition(runs, ConditionId::Treatment);
    let mut tables = Vec::new();
    let mut headline = None;
    match which {
        Which::Primary => {
            let rows = primary_table(&treatment, opts)?;
            headline = Some(headline_from(&rows));
            tables.push(report::table_primary(&rows));
        }
        Which::Runlevel => {
            tables.push(report::table_runlevel(&runlevel_table(&treatment, opts)?));
        }
        Which::Control => {
            let control = of_condition(runs, ConditionId::Control);
            tables.push(report::table_control(&control_comparison(&treatment, &control, opts)?));
        }
        Which::Ablation => {
            let eligible: Vec<Run> = runs
                .iter()
                .filter(|r| {
                    matches!(
                        r.condition,
                        ConditionId::Treatment
                            | ConditionId::DescriptionOnly
                            | ConditionId::ResponseOnly
                            | ConditionId::Control
                    )
                })
                .cloned()
                .collect();
            let (main, contrast) = report::tables_ablation(&ablation_table(&eligible, opts)?);
            tables.push(main);
            tables.push(contrast);
        }
        Which::Instructed => {
            let eligible: Vec<Run> = runs
                .iter()
                .filter(|r| {
                    matches!(
                        r.condition,
                        ConditionId::Treatment | ConditionId::Instructed | ConditionId::Control
                    )
                })
                .cloned()
                .collect();
            if eligible.is_empty() {
                return Err(AnalysisError::EmptyCell("instructed table".into()));
            }
            tables.push(report::table_instructed(&instructed_table(&eligible, opts)?));
        }
        Which::Persistence => {
            let rows = persistence_profile(&treatment, opts);
            if rows.is_empty() {
                return Err(AnalysisError::EmptyCell("persistence profile".into()));
            }
            tables.push(report::table_persistence(&rows));
        }
        Which::Trajectory => {
            let cells = trajectory_profile(runs, opts);
            if cells.is_empty() {
                return Err(AnalysisError::EmptyCell("trajectory profile".into()));
            }
            tables.push(report::table_trajectory(&cells));
        }
        Which::Labels => {
            let shift = classify_labels(&treatment, &Lexicon::shipped(), opts)?;
            tables.push(report::table_labels(&shift));
        }
        Which::FirstLater => {
            tables.push(report::table_first_later(&first_vs_later(&treatment, opts)?));
        }
        Which::All => unreachable!("expanded by run_analysis"),
    }
    Ok(TableRun { tables, headline })
}

fn headline_from(rows: &[analysis::PrimaryRow]) -> String {
    let pooled = rows.last().expect("primary table always has a pooled row");
    format!(
        "Pooled Δ = {} (95% CI {} to {}), p = {}, {} pairs across {} runs",
        report::fmt_est(pooled.delta),
        report::fmt_est(pooled.ci_low),
        report::fmt_est(pooled.ci_high),
        report::fmt_p(pooled.p_value),
        pooled.n_pairs,
        pooled.n_runs
    )
}

const ALL_WHICH: [Which; 9] = [
    Which::Primary,
    Which::Runlevel,
    Which::Control,
    Which::Ablation,
    Which::Instructed,
    Which::Persistence,
    Which::Trajectory,
    Which::Labels,
    Which::FirstLater,
];

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, content)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Load the corpus and produce everything the request asks for.
pub fn run_analysis(req: &AnalyzeRequest) -> Result<AnalyzeOutput, CliError> {
    let filter = CorpusFilter { model: req.model.clone(), condition: None };
    let runs = load_corpus(&req.store_root, &filter)
        .map_err(|e| CliError::Data(e.to_string()))?;
    if runs.is_empty() {
        return Err(CliError::Data(format!(
            "no runs found under {}",
            req.store_root.display()
        )));
    }

    let mut output = AnalyzeOutput::default();
    let selections: &[Which] =
        if req.which == Which::All { &ALL_WHICH } else { std::slice::from_ref(&req.which) };

    for &which in selections {
        match build_tables(which, &runs, &req.opts) {
            Ok(TableRun { tables, headline }) => {
                if headline.is_some() {
                    output.headline = headline;
                }
                for table in tables {
                    for &format in &req.formats {
                        let path = req.out_dir.join(table.file_name(format));
                        write_file(&path, &table.render(format))?;
                        output.written.push(path);
                    }
                }
            }
            Err(e) if req.which == Which::All && is_absence(&e) => {
                output.warnings.push(format!("skipping {which:?}: {e}"));
            }
            Err(e) => return Err(CliError::Data(e.to_string())),
        }
    }

    if req.plots {
        let treatment = of_condition(&runs, ConditionId::Treatment);
        if !treatment.is_empty() {
            if let Ok(rows) = primary_table(&treatment, &req.opts) {
                let path = req.out_dir.join("plot_forest.csv");
                write_file(&path, &report::plot_forest_csv(&rows))?;
                output.written.push(path);
            }
            let path = req.out_dir.join("plot_pairs.csv");
            write_file(&path, &report::plot_pairs_csv(&treatment, &req.opts))?;
            output.written.push(path);
            let rows = persistence_profile(&treatment, &req.opts);
            if !rows.is_empty() {
                let path = req.out_dir.join("plot_persistence.csv");
                write_file(&path, &report::plot_persistence_csv(&rows))?;
                output.written.push(path);
            }
        }
        let cells = trajectory_profile(&runs, &req.opts);
        if !cells.is_empty() {
            let path = req.out_dir.join("plot_trajectory.csv");
            write_file(&path, &report::plot_trajectory_csv(&cells))?;
            output.written.push(path);
        }
    }

    Ok(output)
}
