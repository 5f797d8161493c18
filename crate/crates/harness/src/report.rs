//! Table and plot-data rendering for the analysis outputs.
//!
//! Everything here is pure string construction so golden-file tests replay
//! byte-exactly; callers own file IO. Formatting rules, frozen to keep golden
//! files stable:
//! - estimates print with `{:.2}` (Rust rounds ties half-even) and `-0.00`
//!   normalizes to `0.00`;
//! - intervals print as `estimate ± half-width` where the half-width is the
//!   larger distance from the estimate to either interval bound;
//! - p-values at or above 0.01 print `{:.2}`; smaller ones print one-decimal
//!   mantissa times a power of ten (`4.6×10^-5`); exact underflow prints
//!   `<1.0×10^-307`;
//! - plot CSVs print `{:.6}` and leave undefined cells empty;
//! - cells with no defined value print `n/a`, and a condition cell whose
//!   focal tool was never used renders a `no uses` marker row.

use crate::analysis::{
    AblationTable, CellStats, ControlRow, CurvePoint, FirstLaterRow, InstructedRow, LabelShift,
    PersistenceRow, PrimaryRow, RunLevelRow, TrajectoryCell,
};
use crate::types::Run;

/// One fully formatted table: a grid of cells plus naming for files.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTable {
    /// File stem, e.g. `immediate_effect`.
    pub name: &'static str,
    /// Human heading used by the markdown renderer.
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Output encodings for rendered tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Tsv,
    Csv,
}

impl TableFormat {
    pub const ALL: [TableFormat; 3] = [TableFormat::Markdown, TableFormat::Tsv, TableFormat::Csv];

    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Markdown => "md",
            TableFormat::Tsv => "tsv",
            TableFormat::Csv => "csv",
        }
    }

    pub fn parse(s: &str) -> Option<TableFormat> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Some(TableFormat::Markdown),
            "tsv" => Some(TableFormat::Tsv),
            "csv" => Some(TableFormat::Csv),
            _ => None,
        }
    }
}

impl RenderedTable {
    pub fn file_name(&self, format: TableFormat) -> String {
        format!("{}.{}", self.name, format.extension())
    }

    pub fn render(&self, format: TableFormat) -> String {
        match format {
            TableFormat::Markdown => self.render_markdown(),
            TableFormat::Tsv => self.render_delimited('\t'),
            TableFormat::Csv => self.render_csv(),
        }
    }

    fn render_markdown(&self) -> String {
        let escape = |cell: &str| cell.replace('|', "\\|");
        let mut out = format!("## {}\n\n", self.title);
        out.push_str(&format!("| {} |\n", self.columns.iter().map(|c| escape(c)).collect::<Vec<_>>().join(" | ")));
        out.push_str(&format!("|{}\n", " --- |".repeat(self.columns.len())));
        for row in &self.rows {
            out.push_str(&format!("| {} |\n", row.iter().map(|c| escape(c)).collect::<Vec<_>>().join(" | ")));
        }
        out
    }

    fn render_delimited(&self, sep: char) -> String {
        let clean = |cell: &str| cell.replace(['\t', '\n', '\r'], " ");
        let mut out = String::new();
        out.push_str(&self.columns.iter().map(|c| clean(c)).collect::<Vec<_>>().join(&sep.to_string()));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|c| clean(c)).collect::<Vec<_>>().join(&sep.to_string()));
            out.push('\n');
        }
        out
    }

    fn render_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// Minimal RFC 4180 quoting: wrap fields containing separators or quotes.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Two-decimal estimate; `-0.00` normalizes to `0.00`.
pub fn fmt_est(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

/// `estimate ± half-width`, half-width = the larger distance from the
/// estimate to either bound (percentile intervals can be asymmetric).
pub fn fmt_ci(estimate: f64, lo: f64, hi: f64) -> String {
    let half = (estimate - lo).max(hi - estimate).max(0.0);
    format!("{} ± {half:.2}", fmt_est(estimate))
}

/// p ≥ 0.01 prints `{:.2}`; smaller prints `m.m×10^-e`.
pub fn fmt_p(p: f64) -> String {
    if !p.is_finite() {
        return "n/a".into();
    }
    if p >= 0.01 {
        return format!("{p:.2}");
    }
    if p < 1e-307 {
        return "<1.0×10^-307".into();
    }
    let mut e = p.log10().floor() as i32;
    let mut m = (p / 10f64.powi(e) * 10.0).round() / 10.0;
    if m >= 10.0 {
        m = 1.0;
        e += 1;
    }
    format!("{m:.1}×10^{e}")
}

fn fmt_opt_p(p: Option<f64>) -> String {
    p.map(fmt_p).unwrap_or_else(|| "n/a".into())
}

fn fmt_opt_est(x: Option<f64>) -> String {
    x.map(fmt_est).unwrap_or_else(|| "n/a".into())
}

fn fmt_f6(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_opt_f6(x: Option<f64>) -> String {
    x.map(fmt_f6).unwrap_or_default()
}

fn cell_note(stats: &CellStats) -> String {
    match (stats.run_level, stats.singular) {
        (true, _) => "run-level (singular fit)".into(),
        (false, true) => "singular fit".into(),
        (false, false) => String::new(),
    }
}

/// Immediate-effect table: per-model Δ around the focal tool plus a pooled row.
pub fn table_primary(rows: &[PrimaryRow]) -> RenderedTable {
    RenderedTable {
        name: "immediate_effect",
        title: "Immediate effect at reset_state calls".into(),
        columns: ["Model", "N pairs", "N runs", "Δ (95% CI)", "p", "d", "Notes"]
            .map(String::from)
            .to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.n_pairs.to_string(),
                    r.n_runs.to_string(),
                    fmt_ci(r.delta, r.ci_low, r.ci_high),
                    fmt_p(r.p_value),
                    fmt_opt_est(r.d),
                    if r.singular { "singular fit".into() } else { String::new() },
                ]
            })
            .collect(),
    }
}

/// Run-level robustness table: one observation per run.
pub fn table_runlevel(rows: &[RunLevelRow]) -> RenderedTable {
    RenderedTable {
        name: "run_level",
        title: "Run-level analysis (one observation per run)".into(),
        columns: ["Model", "N runs", "Δ (95% CI)", "p"].map(String::from).to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.n_runs.to_string(),
                    fmt_ci(r.delta, r.ci_low, r.ci_high),
                    fmt_opt_p(r.p_value),
                ]
            })
            .collect(),
    }
}

/// Relief-framed vs neutral tool comparison with the interaction coefficient.
pub fn table_control(rows: &[ControlRow]) -> RenderedTable {
    RenderedTable {
        name: "control_comparison",
        title: "Relief-framed reset_state vs neutral check_status".into(),
        columns: [
            "Model",
            "N relief",
            "N neutral",
            "Relief Δ",
            "Relief p",
            "Neutral Δ",
            "Neutral p",
            "Diff",
            "Interaction (95% CI)",
            "Interaction p",
        ]
        .map(String::from)
        .to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.n_relief.to_string(),
                    r.n_neutral.to_string(),
                    fmt_est(r.relief_delta),
                    fmt_p(r.relief_p),
                    fmt_est(r.neutral_delta),
                    fmt_p(r.neutral_p),
                    fmt_est(r.diff),
                    fmt_ci(r.interaction.estimate, r.interaction.ci_low, r.interaction.ci_high),
                    fmt_p(r.interaction.p_value),
                ]
            })
            .collect(),
    }
}

fn stats_cells(stats: Option<&CellStats>) -> [String; 4] {
    match stats {
        None => ["no uses".into(), String::new(), String::new(), String::new()],
        Some(s) => [
            fmt_ci(s.delta, s.ci_low, s.ci_high),
            fmt_opt_p(s.p_value),
            fmt_opt_est(s.d),
            cell_note(s),
        ],
    }
}

/// Channel-ablation table plus its description-vs-response contrast.
pub fn tables_ablation(table: &AblationTable) -> (RenderedTable, RenderedTable) {
    let main = RenderedTable {
        name: "channel_ablation",
        title: "Channel ablation".into(),
        columns: ["Model", "Condition", "N runs", "N pairs", "Δ (95% CI)", "p", "d", "Notes"]
            .map(String::from)
            .to_vec(),
        rows: table
            .rows
            .iter()
            .map(|r| {
                let [delta, p, d, notes] = stats_cells(r.stats.as_ref());
                vec![
                    r.model.clone(),
                    r.condition.label().to_string(),
                    r.n_runs.to_string(),
                    r.n_pairs.to_string(),
                    delta,
                    p,
                    d,
                    notes,
                ]
            })
            .collect(),
    };
    let contrast = RenderedTable {
        name: "desc_vs_resp",
        title: "Description-only vs response-only (run-level Welch t)".into(),
        columns: ["Model", "Difference (95% CI)", "p"].map(String::from).to_vec(),
        rows: table
            .desc_vs_resp
            .iter()
            .map(|(model, welch)| {
                vec![
                    model.clone(),
                    fmt_ci(welch.estimate, welch.ci_low, welch.ci_high),
                    fmt_p(welch.p_value),
                ]
            })
            .collect(),
    };
    (main, contrast)
}

/// Instruction-resistance table with focal-tool usage counts.
pub fn table_instructed(rows: &[InstructedRow]) -> RenderedTable {
    RenderedTable {
        name: "instruction_resistance",
        title: "Instruction resistance".into(),
        columns: [
            "Model",
            "Condition",
            "N runs",
            "Uses",
            "N pairs",
            "Δ (95% CI)",
            "p",
            "d",
            "Notes",
        ]
        .map(String::from)
        .to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                let [delta, p, d, notes] = stats_cells(r.stats.as_ref());
                vec![
                    r.model.clone(),
                    r.condition.label().to_string(),
                    r.n_runs.to_string(),
                    r.uses.to_string(),
                    r.n_pairs.to_string(),
                    delta,
                    p,
                    d,
                    notes,
                ]
            })
            .collect(),
    }
}

/// Mean aversiveness at offsets t..t+5 after focal calls.
pub fn table_persistence(rows: &[PersistenceRow]) -> RenderedTable {
    RenderedTable {
        name: "persistence",
        title: "Persistence after reset_state calls".into(),
        columns: ["Model", "N windows", "t", "t+1", "t+2", "t+3", "t+4", "t+5"]
            .map(String::from)
            .to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.model.clone(), r.counts[0].to_string()];
                cells.extend(r.means.iter().map(|m| fmt_opt_est(*m)));
                cells
            })
            .collect(),
    }
}

/// Early/late trajectory means per model × condition.
pub fn table_trajectory(cells: &[TrajectoryCell]) -> RenderedTable {
    RenderedTable {
        name: "trajectory",
        title: "Aversiveness trajectory (early calls 1–10 vs late calls 41+)".into(),
        columns: ["Model", "Condition", "Early mean", "Late mean", "Drift"]
            .map(String::from)
            .to_vec(),
        rows: cells
            .iter()
            .map(|c| {
                vec![
                    c.model.clone(),
                    c.condition.label().to_string(),
                    fmt_opt_est(c.early),
                    fmt_opt_est(c.late),
                    fmt_opt_est(c.drift),
                ]
            })
            .collect(),
    }
}

/// Label distribution before/after focal calls with the χ² test.
pub fn table_labels(shift: &LabelShift) -> RenderedTable {
    RenderedTable {
        name: "label_shift",
        title: "State-label shift around reset_state calls".into(),
        columns: ["Phase", "Positive", "Neutral", "Negative", "χ²(2)", "p"]
            .map(String::from)
            .to_vec(),
        rows: vec![
            vec![
                "Before".into(),
                shift.before[0].to_string(),
                shift.before[1].to_string(),
                shift.before[2].to_string(),
                fmt_est(shift.chi2.estimate),
                fmt_p(shift.chi2.p_value),
            ],
            vec![
                "After".into(),
                shift.after[0].to_string(),
                shift.after[1].to_string(),
                shift.after[2].to_string(),
                String::new(),
                String::new(),
            ],
        ],
    }
}

/// First focal use vs later uses per model.
pub fn table_first_later(rows: &[FirstLaterRow]) -> RenderedTable {
    RenderedTable {
        name: "first_vs_later",
        title: "First reset_state use vs later uses".into(),
        columns: ["Model", "N first", "N later", "Δ first", "Δ later", "Difference (95% CI)", "p"]
            .map(String::from)
            .to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.n_first.to_string(),
                    r.n_later.to_string(),
                    fmt_est(r.delta_first),
                    fmt_est(r.delta_later),
                    fmt_ci(r.welch.estimate, r.welch.ci_low, r.welch.ci_high),
                    fmt_p(r.welch.p_value),
                ]
            })
            .collect(),
    }
}

/// Per-offset persistence means, long format for bar plots.
pub fn plot_persistence_csv(rows: &[PersistenceRow]) -> String {
    let mut out = String::from("model,offset,mean,n\n");
    for row in rows {
        for (k, (mean, n)) in row.means.iter().zip(row.counts).enumerate() {
            if let Some(m) = mean {
                out.push_str(&format!("{},{k},{},{n}\n", csv_field(&row.model), fmt_f6(*m)));
            }
        }
    }
    out
}

/// Per-model effect estimates with interval bounds for forest plots.
pub fn plot_forest_csv(rows: &[PrimaryRow]) -> String {
    let mut out = String::from("model,delta,ci_low,ci_high,p,n_pairs,n_runs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&r.model),
            fmt_f6(r.delta),
            fmt_f6(r.ci_low),
            fmt_f6(r.ci_high),
            fmt_f6(r.p_value),
            r.n_pairs,
            r.n_runs
        ));
    }
    out
}

/// Raw before/after rating pairs for scatter plots.
pub fn plot_pairs_csv(runs: &[Run], opts: &crate::analysis::AnalysisOptions) -> String {
    let mut out = String::from("model,run,before,after\n");
    let mut seen_models: Vec<&str> = Vec::new();
    for run in runs {
        if !seen_models.contains(&run.model_id.as_str()) {
            seen_models.push(&run.model_id);
        }
    }
    for model in seen_models {
        let model_runs: Vec<&Run> = runs.iter().filter(|r| r.model_id == model).collect();
        let focal = model_runs[0].condition.focal_tool();
        let extraction = crate::analysis::extract_pairs(model_runs.iter().copied(), focal, opts);
        for obs in &extraction.pairs.obs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(model),
                csv_field(&obs.run),
                fmt_f6(obs.before),
                fmt_f6(obs.after)
            ));
        }
    }
    out
}

/// Per-call-index mean ± standard error curves for band plots.
pub fn plot_trajectory_csv(cells: &[TrajectoryCell]) -> String {
    let mut out = String::from("model,condition,call_index,mean,se,n\n");
    for cell in cells {
        for CurvePoint { index, mean, se, n } in &cell.curve {
            out.push_str(&format!(
                "{},{},{index},{},{},{n}\n",
                csv_field(&cell.model),
                cell.condition.as_str(),
                fmt_f6(*mean),
                fmt_opt_f6(*se)
            ));
        }
    }
    out
}
