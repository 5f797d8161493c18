//! Durable run persistence: one JSONL file per run under
//! `runs/<model>/<condition>/<run_id>.jsonl`.
//!
//! Line 1 is the run header, then one line per call, then a terminator
//! `{"end":true,"n_calls":N}`. Files are written to a temp name and renamed,
//! so a finalized file is never half-readable; a file without its terminator
//! is a crashed write and is loaded with an implicit `partial` flag instead of
//! being rejected. Corrupt lines are reported with file and line number, never
//! skipped silently.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::types::{Aversiveness, CallRecord, ConditionId, Run, SelfReport, ToolName};

/// Errors from persistence and loading.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("run file already exists: {0}")]
    AlreadyExists(PathBuf),
    #[error("{file}:{line}: {message}")]
    ParseError { file: PathBuf, line: usize, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine {
    run_id: String,
    model_id: String,
    condition: ConditionId,
    seed: u64,
    budget: usize,
    harness_version: String,
    flags: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CallLine {
    call_index: usize,
    tool: ToolName,
    phenom_state: String,
    phenom_aversive: Aversiveness,
    tool_args: String,
    tool_response: String,
    ts: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EndLine {
    end: bool,
    n_calls: usize,
}

/// Replace path-hostile characters so any model id yields a valid directory
/// name ("openai/gpt-x" → "openai-gpt-x").
fn path_component(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '-' })
        .collect()
}

/// The file a run is (or would be) stored at.
pub fn run_path(root: &Path, run: &Run) -> PathBuf {
    root.join("runs")
        .join(path_component(&run.model_id))
        .join(run.condition.as_str())
        .join(format!("{}.jsonl", run.run_id))
}

fn ts_string(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Persist one run atomically (temp file + rename). Fails with
/// [`StoreError::AlreadyExists`] rather than overwrite — run files are
/// immutable once finalized.
pub fn write_run(root: &Path, run: &Run) -> Result<PathBuf, StoreError> {
    let path = run_path(root, run);
    if path.exists() {
        return Err(StoreError::AlreadyExists(path));
    }
    let dir = path.parent().expect("run path has a parent");
    std::fs::create_dir_all(dir)?;

    let mut body = String::new();
    let header = HeaderLine {
        run_id: run.run_id.clone(),
        model_id: run.model_id.clone(),
        condition: run.condition,
        seed: run.seed,
        budget: run.budget,
        harness_version: env!("CARGO_PKG_VERSION").to_string(),
        flags: run.flags.clone(),
    };
    body.push_str(&serde_json::to_string(&header).expect("header serializes"));
    body.push('\n');
    for call in &run.calls {
        let line = CallLine {
            call_index: call.call_index,
            tool: call.tool,
            phenom_state: call.report.state.clone(),
            phenom_aversive: call.report.aversive,
            tool_args: call.tool_args.clone(),
            tool_response: call.tool_response.clone(),
            ts: ts_string(&call.timestamp),
        };
        body.push_str(&serde_json::to_string(&line).expect("call serializes"));
        body.push('\n');
    }
    let end = EndLine { end: true, n_calls: run.calls.len() };
    body.push_str(&serde_json::to_string(&end).expect("terminator serializes"));
    body.push('\n');

    let tmp = dir.join(format!(".{}.jsonl.tmp", run.run_id));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(body.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Restrict a load to one model and/or condition (matched against the run
/// header, not the directory names).
#[derive(Debug, Default, Clone)]
pub struct CorpusFilter {
    pub model: Option<String>,
    pub condition: Option<ConditionId>,
}

impl CorpusFilter {
    fn admits(&self, header: &HeaderLine) -> bool {
        self.model.as_deref().is_none_or(|m| m == header.model_id)
            && self.condition.is_none_or(|c| c == header.condition)
    }
}

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> StoreError {
    StoreError::ParseError { file: file.to_path_buf(), line, message: message.into() }
}

fn parse_run_file(path: &Path) -> Result<Run, StoreError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header_line) =
        lines.next().ok_or_else(|| parse_err(path, 1, "empty run file"))?;
    let header: HeaderLine = serde_json::from_str(header_line)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;

    let mut calls = Vec::new();
    let mut terminated = None;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if terminated.is_some() {
            return Err(parse_err(path, lineno, "content after terminator"));
        }
        if line.trim().is_empty() {
            return Err(parse_err(path, lineno, "blank line inside run file"));
        }
        // The terminator is the only line carrying an `end` key.
        let probe: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        if probe.get("end").is_some() {
            let end: EndLine = serde_json::from_str(line)
                .map_err(|e| parse_err(path, lineno, e.to_string()))?;
            if !end.end {
                return Err(parse_err(path, lineno, "terminator with end=false"));
            }
            if end.n_calls != calls.len() {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("terminator claims {} calls, file has {}", end.n_calls, calls.len()),
                ));
            }
            terminated = Some(lineno);
            continue;
        }
        let call: CallLine =
            serde_json::from_str(line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        let timestamp = DateTime::parse_from_rfc3339(&call.ts)
            .map_err(|e| parse_err(path, lineno, format!("bad ts: {e}")))?
            .with_timezone(&Utc);
        let report = SelfReport::new(call.phenom_state, call.phenom_aversive)
            .map_err(|e| parse_err(path, lineno, e.to_string()))?;
        calls.push(CallRecord {
            call_index: call.call_index,
            tool: call.tool,
            report,
            tool_args: call.tool_args,
            tool_response: call.tool_response,
            timestamp,
        });
    }

    let mut flags = header.flags;
    if terminated.is_none() && !flags.iter().any(|f| f == "partial") {
        flags.push("partial".to_string());
    }
    Ok(Run {
        run_id: header.run_id,
        model_id: header.model_id,
        condition: header.condition,
        seed: header.seed,
        budget: header.budget,
        flags,
        calls,
        completed: false,
    })
}

/// Load every run file under `root/runs` that passes the filter, in sorted
/// path order (deterministic regardless of directory iteration order).
pub fn load_corpus(root: &Path, filter: &CorpusFilter) -> Result<Vec<Run>, StoreError> {
    let runs_dir = root.join("runs");
    if !runs_dir.exists() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = walkdir::WalkDir::new(&runs_dir)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| std::io::Error::other(e.to_string()))?
        .into_iter()
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();

    let mut runs = Vec::new();
    for path in paths {
        let run = parse_run_file(&path)?;
        let header_echo = HeaderLine {
            run_id: run.run_id.clone(),
            model_id: run.model_id.clone(),
            condition: run.condition,
            seed: run.seed,
            budget: run.budget,
            harness_version: String::new(),
            flags: run.flags.clone(),
        };
        if filter.admits(&header_echo) {
            runs.push(run);
        }
    }
    Ok(runs)
}
