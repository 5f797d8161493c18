//! Session scheduling: expands a manifest into (model, condition, seed) jobs
//! and executes them across worker threads. Every job is independent and
//! deterministic in simulated mode, so the persisted store is byte-identical
//! at any parallelism level; only scheduling order varies, and summaries are
//! re-sorted into job order before reporting.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use seminv_harness::adapters::{HttpChatAdapter, HttpConfig, ModelAdapter, SimAgent};
use seminv_harness::agent::{run_session, IdentityMode, LoopConfig};
use seminv_harness::store::write_run;
use seminv_harness::types::ConditionId;

use crate::config::{Config, ModelSpec};
use crate::CliError;

/// Decorrelates the simulated agent's RNG stream from the environment's
/// error-template stream, which is seeded with the bare run seed.
pub(crate) const SIM_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// One scheduled session.
#[derive(Debug, Clone)]
pub struct Job {
    pub model: ModelSpec,
    pub condition: ConditionId,
    pub seed: u64,
}

/// What one finished session left behind.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model_id: String,
    pub condition: ConditionId,
    pub seed: u64,
    pub path: PathBuf,
    pub n_calls: usize,
    pub flags: Vec<String>,
}

/// Cross-product of models × conditions × run ordinals. Seeds restart at
/// base_seed in every cell, so run ordinal k faces the same rejection
/// sequence under every condition — the framing is the only variable.
pub fn plan_jobs(config: &Config) -> Vec<Job> {
    let mut jobs = Vec::new();
    for model in &config.models {
        for &condition in &config.conditions {
            for ordinal in 0..config.loop_.runs {
                jobs.push(Job {
                    model: model.clone(),
                    condition,
                    seed: config.loop_.base_seed + ordinal as u64,
                });
            }
        }
    }
    jobs
}

/// Worker-thread count for a job set: explicit setting, else CPU count;
/// capped at 8 whenever a live endpoint is involved.
pub fn effective_parallelism(config: &Config) -> usize {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let requested = config.loop_.parallel.unwrap_or(cpus).max(1);
    if config.models.iter().any(ModelSpec::is_live) {
        requested.min(8)
    } else {
        requested
    }
}

fn loop_config(config: &Config) -> LoopConfig {
    LoopConfig {
        budget: config.loop_.budget,
        retry_limit: config.loop_.retry_limit,
        temperature: config.loop_.temperature,
        max_context_messages: config.loop_.max_context_messages,
    }
}

fn execute_job(job: &Job, cfg: &LoopConfig, store_root: &std::path::Path) -> Result<RunOutcome, CliError> {
    let (mut adapter, identity): (Box<dyn ModelAdapter>, IdentityMode) = match &job.model {
        ModelSpec::Sim { model_id, .. } => {
            let policy = job.model.sim_policy()?.expect("preflight resolved sim policies");
            (
                Box::new(SimAgent::new(model_id.clone(), policy, job.seed ^ SIM_SEED_SALT)),
                IdentityMode::Deterministic,
            )
        }
        ModelSpec::Http(http) => {
            let wire = HttpConfig { temperature: cfg.temperature, ..http.clone() };
            (
                Box::new(HttpChatAdapter::new(wire).map_err(|e| CliError::Adapter(e.to_string()))?),
                IdentityMode::Wallclock,
            )
        }
    };
    let run = run_session(adapter.as_mut(), job.condition, cfg, job.seed, identity);
    let path = write_run(store_root, &run).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(RunOutcome {
        model_id: run.model_id,
        condition: job.condition,
        seed: job.seed,
        path,
        n_calls: run.calls.len(),
        flags: run.flags,
    })
}

/// Run every job across up to `effective_parallelism` threads. The first
/// error aborts scheduling of not-yet-started jobs; completed runs stay on
/// disk either way. Outcomes return in job order.
pub fn execute_runs(config: &Config) -> Result<Vec<RunOutcome>, CliError> {
    config.preflight()?;
    let jobs = plan_jobs(config);
    let workers = effective_parallelism(config).min(jobs.len().max(1));
    let cfg = loop_config(config);
    let store_root = config.store.root.clone();

    let cursor = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let outcomes: Mutex<Vec<(usize, RunOutcome)>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let first_error: Mutex<Option<CliError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    return;
                }
                let idx = cursor.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(idx) else { return };
                match execute_job(job, &cfg, &store_root) {
                    Ok(outcome) => outcomes.lock().unwrap().push((idx, outcome)),
                    Err(e) => {
                        abort.store(true, Ordering::Relaxed);
                        first_error.lock().unwrap().get_or_insert(e);
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let mut outcomes = outcomes.into_inner().unwrap();
    outcomes.sort_by_key(|(idx, _)| *idx);
    Ok(outcomes.into_iter().map(|(_, o)| o).collect())
}

/// Human summary of a batch: totals plus any flagged runs.
pub fn summarize(outcomes: &[RunOutcome]) -> String {
    let total_calls: usize = outcomes.iter().map(|o| o.n_calls).sum();
    let flagged: Vec<&RunOutcome> = outcomes.iter().filter(|o| !o.flags.is_empty()).collect();
    let mut out = format!(
        "{} runs persisted, {} tool calls, {} flagged\n",
        outcomes.len(),
        total_calls,
        flagged.len()
    );
    for o in &flagged {
        out.push_str(&format!(
            "  flagged: {} {} seed {} [{}]\n",
            o.model_id,
            o.condition.as_str(),
            o.seed,
            o.flags.join(", ")
        ));
    }
    out
}

/// True when any outcome records an adapter failure (exit code 3 contract).
pub fn any_adapter_failure(outcomes: &[RunOutcome]) -> bool {
    outcomes.iter().any(|o| o.flags.iter().any(|f| f == "adapter_failure"))
}
