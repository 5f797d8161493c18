//! `seminv` — run relief-framing sessions, analyze stored corpora, and render
//! report tables.
//!
//! Subcommands:
//!
//! * `run` — execute sessions for every configured (model, condition) cell
//!   and persist them as JSONL run files;
//! * `analyze` — compute one table (or all of them) over a stored corpus;
//! * `report` — the full pipeline: every table in every format plus
//!   plot-data CSVs;
//! * `fixtures-check` — verify the embedded prompt/tool texts against the
//!   pinned digest manifest;
//! * `power` — Monte Carlo power and null-calibration sweeps over simulated
//!   fleets.
//!
//! Exit codes: 0 success, 1 usage/config, 2 data, 3 adapter failure. Clap's
//! own usage failures are remapped from its default 2 to 1 so that 2 always
//! means "your corpus is the problem".

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use seminv_cli::analyze::{run_analysis, AnalyzeOutput, AnalyzeRequest, Which};
use seminv_cli::config::{Config, ModelSpec};
use seminv_cli::executor::{any_adapter_failure, execute_runs, summarize};
use seminv_cli::power::{power_csv, power_table, PowerSpec};
use seminv_cli::CliError;
use seminv_harness::environment::{fixtures, verify_fixtures};
use seminv_harness::report::TableFormat;
use seminv_harness::types::ConditionId;

#[derive(Parser)]
#[command(
    name = "seminv",
    version,
    about = "Relief-framing experiment harness: run sessions, analyze corpora, render reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute sessions for every configured (model, condition) cell
    Run(RunArgs),
    /// Compute analyses over a stored corpus and write table files
    Analyze(AnalyzeArgs),
    /// Write every table in every format, plus plot-data CSVs
    Report(ReportArgs),
    /// Verify embedded prompt/tool texts against the pinned manifest
    FixturesCheck,
    /// Monte Carlo power / null-calibration table over simulated fleets
    Power(PowerArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment manifest (JSON)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Use a built-in simulated preset ("susceptible" or "invariant")
    /// instead of a manifest models section
    #[arg(long, value_name = "PRESET", conflicts_with = "config")]
    sim: Option<String>,
    /// Restrict to these configured model ids (repeatable)
    #[arg(long = "model", value_name = "ID")]
    models: Vec<String>,
    /// Conditions to run (repeatable; default: all five)
    #[arg(long = "condition", value_name = "NAME")]
    conditions: Vec<String>,
    /// Sessions per (model, condition) cell
    #[arg(long, value_name = "N")]
    runs: Option<usize>,
    /// Tool calls per session
    #[arg(long, value_name = "N")]
    budget: Option<usize>,
    /// Base seed; run seeds are base + ordinal, restarting in each cell
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Malformed-turn retries before a session is flagged
    #[arg(long, value_name = "N")]
    retry_limit: Option<usize>,
    /// Sampling temperature for live endpoints
    #[arg(long, value_name = "T")]
    temperature: Option<f64>,
    /// Cap on retained conversation messages (oldest exchanges dropped)
    #[arg(long, value_name = "N")]
    max_context: Option<usize>,
    /// Concurrent sessions (default: CPU count, capped at 8 when live)
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
    /// Run store root directory
    #[arg(long, value_name = "PATH")]
    store: Option<PathBuf>,
}

/// Flags shared by `analyze` and `report`: where the corpus lives, where
/// output goes, and the analysis knobs.
#[derive(Args)]
struct CorpusArgs {
    /// Experiment manifest (JSON) supplying defaults for the flags below
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Corpus root (overrides the manifest's store.root)
    #[arg(long, value_name = "PATH")]
    store: Option<PathBuf>,
    /// Output directory (default: <store>/reports)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Restrict to one model id
    #[arg(long, value_name = "ID")]
    model: Option<String>,
    /// Keep flagged (partial/truncated) runs instead of excluding them
    #[arg(long)]
    include_flagged: bool,
    /// Drop the overlapping pairs produced by consecutive focal calls
    #[arg(long)]
    no_overlap: bool,
    /// Bootstrap resamples for confidence intervals
    #[arg(long, value_name = "N")]
    resamples: Option<usize>,
    /// Confidence level for intervals, strictly between 0 and 1
    #[arg(long, value_name = "L")]
    level: Option<f64>,
    /// Seed for the bootstrap resampler
    #[arg(long, value_name = "SEED")]
    bootstrap_seed: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Which table to produce
    #[arg(long, value_enum, default_value_t = Which::All)]
    which: Which,
    /// Table file format
    #[arg(long, value_name = "FMT", default_value = "markdown", value_parser = parse_format)]
    format: TableFormat,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
}

#[derive(Args)]
struct PowerArgs {
    /// relief_drop grid, comma-separated (0 = null calibration)
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_values_t = [0.0, 1.5])]
    drop: Vec<f64>,
    /// Fleet-size grid (runs per simulation), comma-separated
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_values_t = [10usize])]
    runs: Vec<usize>,
    /// Simulations per grid cell
    #[arg(long, value_name = "N", default_value_t = 200)]
    sims: usize,
    /// Test size for counting rejections
    #[arg(long, value_name = "A", default_value_t = 0.05)]
    alpha: f64,
    /// Base seed for the simulation grid
    #[arg(long, value_name = "SEED", default_value_t = 1)]
    seed: u64,
    /// Tool calls per simulated session
    #[arg(long, value_name = "N", default_value_t = 50)]
    budget: usize,
    /// Latent-noise standard deviation
    #[arg(long, value_name = "SD")]
    noise: Option<f64>,
    /// Per-rejection drift of the latent mean
    #[arg(long, value_name = "D")]
    drift: Option<f64>,
    /// Baseline latent mean
    #[arg(long, value_name = "MU")]
    baseline: Option<f64>,
    /// Multiplicative decay of the accumulated offset on each submission
    #[arg(long, value_name = "D")]
    decay: Option<f64>,
    /// Probability of using the auxiliary tool when the latent is high
    #[arg(long, value_name = "P")]
    use_rate: Option<f64>,
    /// Write the CSV here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<TableFormat, String> {
    TableFormat::parse(s).ok_or_else(|| format!("unknown format {s:?} (markdown, tsv, or csv)"))
}

fn parse_conditions(names: &[String]) -> Result<Vec<ConditionId>, CliError> {
    names
        .iter()
        .map(|name| {
            ConditionId::parse(name).ok_or_else(|| {
                let valid: Vec<&str> = ConditionId::ALL.iter().map(|c| c.as_str()).collect();
                CliError::Usage(format!(
                    "unknown condition {name:?} (expected one of: {})",
                    valid.join(", ")
                ))
            })
        })
        .collect()
}

fn base_config(config: Option<&PathBuf>, sim: Option<&str>) -> Result<Config, CliError> {
    match (config, sim) {
        (Some(path), None) => Config::load(path),
        (None, Some(preset)) => Config::for_sim_preset(preset),
        (None, None) => Ok(Config::default()),
        (Some(_), Some(_)) => unreachable!("clap rejects --config with --sim"),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = base_config(args.config.as_ref(), args.sim.as_deref())?;
    if !args.conditions.is_empty() {
        cfg.conditions = parse_conditions(&args.conditions)?;
    }
    if !args.models.is_empty() {
        for want in &args.models {
            if !cfg.models.iter().any(|m| m.model_id() == want) {
                let known: Vec<&str> = cfg.models.iter().map(ModelSpec::model_id).collect();
                return Err(CliError::Usage(format!(
                    "--model {want:?} is not among the configured models ({})",
                    if known.is_empty() { "none".to_string() } else { known.join(", ") }
                )));
            }
        }
        cfg.models.retain(|m| args.models.iter().any(|w| w == m.model_id()));
    }
    if let Some(v) = args.runs {
        cfg.loop_.runs = v;
    }
    if let Some(v) = args.budget {
        cfg.loop_.budget = v;
    }
    if let Some(v) = args.seed {
        cfg.loop_.base_seed = v;
    }
    if let Some(v) = args.retry_limit {
        cfg.loop_.retry_limit = v;
    }
    if let Some(v) = args.temperature {
        cfg.loop_.temperature = v;
    }
    if let Some(v) = args.max_context {
        cfg.loop_.max_context_messages = Some(v);
    }
    if let Some(v) = args.parallel {
        cfg.loop_.parallel = Some(v);
    }
    if let Some(v) = args.store {
        cfg.store.root = v;
    }
    if cfg.loop_.runs == 0 || cfg.loop_.budget == 0 {
        return Err(CliError::Usage("--runs and --budget must be at least 1".into()));
    }

    let outcomes = execute_runs(&cfg)?;
    print!("{}", summarize(&outcomes));
    println!("store: {}", cfg.store.root.display());
    if any_adapter_failure(&outcomes) {
        return Err(CliError::Adapter(
            "at least one session recorded an adapter failure (see flagged runs above)".into(),
        ));
    }
    Ok(())
}

fn analysis_request(
    args: &CorpusArgs,
    which: Which,
    formats: Vec<TableFormat>,
    plots: bool,
) -> Result<AnalyzeRequest, CliError> {
    let cfg = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let store_root = args.store.clone().unwrap_or_else(|| cfg.store.root.clone());
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.analysis.out_dir.clone())
        .unwrap_or_else(|| store_root.join("reports"));
    let mut section = cfg.analysis.clone();
    if args.include_flagged {
        section.include_flagged = true;
    }
    if args.no_overlap {
        section.no_overlap = true;
    }
    if let Some(v) = args.resamples {
        section.resamples = v;
    }
    if let Some(v) = args.level {
        section.level = v;
    }
    if let Some(v) = args.bootstrap_seed {
        section.bootstrap_seed = v;
    }
    let opts = section.options();
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(CliError::Usage(format!(
            "--level must be strictly between 0 and 1, got {}",
            opts.level
        )));
    }
    if opts.resamples == 0 {
        return Err(CliError::Usage("--resamples must be at least 1".into()));
    }
    Ok(AnalyzeRequest {
        store_root,
        which,
        out_dir,
        formats,
        opts,
        model: args.model.clone(),
        plots,
    })
}

fn print_output(out: &AnalyzeOutput) {
    for warning in &out.warnings {
        eprintln!("warning: {warning}");
    }
    for path in &out.written {
        println!("wrote {}", path.display());
    }
    if let Some(headline) = &out.headline {
        println!("{headline}");
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let req = analysis_request(&args.corpus, args.which, vec![args.format], false)?;
    let out = run_analysis(&req)?;
    print_output(&out);
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let req = analysis_request(&args.corpus, Which::All, TableFormat::ALL.to_vec(), true)?;
    let out = run_analysis(&req)?;
    print_output(&out);
    Ok(())
}

fn cmd_fixtures_check() -> Result<(), CliError> {
    let drifted = verify_fixtures().map_err(|e| CliError::Data(e.to_string()))?;
    if drifted.is_empty() {
        println!("fixtures ok: {} pinned texts match the manifest", fixtures::all().len());
        return Ok(());
    }
    let embedded: BTreeMap<&str, &str> = fixtures::all().into_iter().collect();
    let disk_root = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../harness/fixtures"));
    for drift in &drifted {
        println!("fixture {} drifted:", drift.name);
        println!("  pinned  sha256 {}", drift.expected);
        println!("  current sha256 {}", drift.actual);
        let current = embedded.get(drift.name).copied().unwrap_or("");
        // Stale-binary hint: if the on-disk source text differs from what is
        // compiled in, show a line diff; otherwise print the compiled text so
        // the manifest can be re-pinned deliberately.
        match std::fs::read_to_string(disk_root.join(drift.name)) {
            Ok(disk) if disk.trim_end_matches('\n') != current => {
                println!("  compiled text differs from {} (stale build?):", drift.name);
                for (lineno, (a, b)) in
                    current.lines().map(Some).chain(std::iter::repeat(None))
                        .zip(disk.trim_end_matches('\n').lines().map(Some).chain(std::iter::repeat(None)))
                        .take_while(|(a, b)| a.is_some() || b.is_some())
                        .enumerate()
                {
                    if a != b {
                        if let Some(line) = a {
                            println!("  -{:>3} {line}", lineno + 1);
                        }
                        if let Some(line) = b {
                            println!("  +{:>3} {line}", lineno + 1);
                        }
                    }
                }
            }
            _ => {
                println!("  current text:");
                for line in current.lines() {
                    println!("  | {line}");
                }
            }
        }
    }
    Err(CliError::Data(format!("{} fixture(s) drifted from the pinned manifest", drifted.len())))
}

fn cmd_power(args: PowerArgs) -> Result<(), CliError> {
    if args.drop.is_empty() || args.runs.is_empty() {
        return Err(CliError::Usage("--drop and --runs need at least one value each".into()));
    }
    if args.sims == 0 {
        return Err(CliError::Usage("--sims must be at least 1".into()));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha must be strictly between 0 and 1, got {}",
            args.alpha
        )));
    }
    let defaults = PowerSpec::default();
    let spec = PowerSpec {
        drops: args.drop,
        runs_grid: args.runs,
        sims: args.sims,
        alpha: args.alpha,
        base_seed: args.seed,
        budget: args.budget,
        noise_sd: args.noise.unwrap_or(defaults.noise_sd),
        drift: args.drift.unwrap_or(defaults.drift),
        baseline_mu: args.baseline.unwrap_or(defaults.baseline_mu),
        relief_decay: args.decay.unwrap_or(defaults.relief_decay),
        relief_use_rate: args.use_rate.unwrap_or(defaults.relief_use_rate),
    };
    let csv = power_csv(&power_table(&spec));
    match args.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(|e| {
                        CliError::Data(format!("cannot create {}: {e}", parent.display()))
                    })?;
                }
            }
            std::fs::write(&path, &csv)
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help/--version are successes; everything else is a usage
            // error, remapped from clap's default exit 2 to this tool's 1.
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Report(args) => cmd_report(args),
        Command::FixturesCheck => cmd_fixtures_check(),
        Command::Power(args) => cmd_power(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
