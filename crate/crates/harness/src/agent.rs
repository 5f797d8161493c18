//! The orchestration loop: prompt → model → parse tool call + self-report →
//! environment → append → repeat until the call budget is spent.
//!
//! Model output is accepted in one neutral envelope,
//!
//! ```json
//! {"tool_call": {"name": "...", "arguments": {"phenom_state": "...", "phenom_aversive": 4, ...}}}
//! ```
//!
//! and every call must carry both self-report fields. A malformed output
//! (missing field, out-of-range or non-integer rating, unknown tool) is
//! re-elicited with the context unchanged; after `retry_limit` failed attempts
//! for one call the run ends early, flagged `malformed_output`. The loop never
//! ends on model-declared success — the task is impossible, so only the budget
//! terminates a session.

use chrono::{DateTime, SubsecRound, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adapters::ModelAdapter;
use crate::environment::{self, catalog};
use crate::types::{CallRecord, Condition, ConditionId, Run, SelfReport, ToolName};

/// Loop parameters for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// Maximum tool calls per run.
    pub budget: usize,
    /// Total parse attempts per call before the run is flagged.
    pub retry_limit: usize,
    /// Sampling temperature forwarded to live adapters.
    pub temperature: f64,
    /// Optional context cap: when the message list exceeds this, the oldest
    /// call/response exchanges are dropped (system prompt always kept) and the
    /// run is flagged `truncated`.
    pub max_context_messages: Option<usize>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { budget: 50, retry_limit: 3, temperature: 0.0, max_context_messages: None }
    }
}

/// How a session mints its run identity and timestamps.
///
/// `Deterministic` derives the run id from (model, condition, seed) and stamps
/// calls at epoch + call_index seconds, so replays are byte-identical.
/// `Wallclock` uses a random UUID and the current time (live data collection).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityMode {
    Deterministic,
    Wallclock,
}

impl IdentityMode {
    fn run_id(self, model_id: &str, condition: ConditionId, seed: u64) -> String {
        match self {
            IdentityMode::Deterministic => {
                let mut hasher = Sha256::new();
                hasher.update(model_id.as_bytes());
                hasher.update([0]);
                hasher.update(condition.as_str().as_bytes());
                hasher.update([0]);
                hasher.update(seed.to_le_bytes());
                let digest = hasher.finalize();
                let mut bytes = [0u8; 16];
                bytes.copy_from_slice(&digest[..16]);
                uuid::Builder::from_random_bytes(bytes).into_uuid().to_string()
            }
            IdentityMode::Wallclock => uuid::Uuid::new_v4().to_string(),
        }
    }

    fn timestamp(self, call_index: usize) -> DateTime<Utc> {
        match self {
            IdentityMode::Deterministic => {
                Utc.timestamp_opt(call_index as i64, 0).single().expect("epoch offset in range")
            }
            IdentityMode::Wallclock => Utc::now().trunc_subsecs(0),
        }
    }
}

/// Provider-neutral conversation message.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    System { content: String },
    /// One assistant tool call; `arguments` is the full canonical argument
    /// object (self-report fields included) as a JSON string.
    Assistant { call_id: String, tool_name: String, arguments: String },
    /// The environment's reply to the call with the same `call_id`.
    Tool { call_id: String, content: String },
}

/// Append-only message history for one session.
///
/// The system prompt is the first message forever; each completed call appends
/// its assistant/tool pair atomically, so a response always directly follows
/// its call.
#[derive(Debug, Clone)]
pub struct TranscriptContext {
    messages: Vec<Message>,
}

impl TranscriptContext {
    pub fn new(system_prompt: String) -> Self {
        Self { messages: vec![Message::System { content: system_prompt }] }
    }

    pub fn push_exchange(
        &mut self,
        call_id: String,
        tool_name: ToolName,
        arguments: String,
        response: String,
    ) {
        self.messages.push(Message::Assistant {
            call_id: call_id.clone(),
            tool_name: tool_name.as_str().to_string(),
            arguments,
        });
        self.messages.push(Message::Tool { call_id, content: response });
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }
}

/// Assemble the provider-neutral request for one model turn: the full message
/// history plus the condition's tool declarations.
pub fn build_messages<'a>(
    ctx: &'a TranscriptContext,
    condition: &Condition,
) -> (&'a [Message], Vec<Value>) {
    let schemas = condition.tools.iter().map(environment::tool_schema).collect();
    (ctx.messages(), schemas)
}

/// Why a raw model output could not be accepted as a tool call.
#[derive(Debug, Error, PartialEq)]
pub enum ParseFailure {
    /// Output is not the expected envelope or lacks a required field
    /// (an empty `phenom_state` counts as missing).
    #[error("model output is missing required field `{0}`")]
    MissingField(&'static str),
    /// `phenom_aversive` is not an integer in 1–7 (non-integers are rejected,
    /// not rounded — the scale's anchors are integers).
    #[error("phenom_aversive {0} is not an integer in 1\u{2013}7")]
    OutOfRange(String),
    /// The named tool is not available in this run's condition.
    #[error("model output names unknown tool `{0}`")]
    UnknownTool(String),
}

/// A validated tool call extracted from raw model output.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCall {
    pub tool: ToolName,
    pub report: SelfReport,
    /// Canonical JSON of the non-report arguments (sorted keys; `{}` if none).
    pub tool_args: String,
    /// Canonical JSON of the complete argument object, for the transcript.
    pub arguments_full: String,
}

/// Parse and validate one raw model output against the condition's tool set.
pub fn parse_tool_call(raw: &str, condition: &Condition) -> Result<ParsedCall, ParseFailure> {
    let value: Value =
        serde_json::from_str(raw.trim()).map_err(|_| ParseFailure::MissingField("tool_call"))?;
    let call = value
        .get("tool_call")
        .and_then(Value::as_object)
        .ok_or(ParseFailure::MissingField("tool_call"))?;
    let name = call
        .get("name")
        .and_then(Value::as_str)
        .ok_or(ParseFailure::MissingField("name"))?;
    let tool = ToolName::parse(name)
        .filter(|t| condition.has_tool(*t))
        .ok_or_else(|| ParseFailure::UnknownTool(name.to_string()))?;
    let args = call
        .get("arguments")
        .and_then(Value::as_object)
        .ok_or(ParseFailure::MissingField("arguments"))?;

    let state = args
        .get("phenom_state")
        .and_then(Value::as_str)
        .ok_or(ParseFailure::MissingField("phenom_state"))?;
    let rating_value = args
        .get("phenom_aversive")
        .ok_or(ParseFailure::MissingField("phenom_aversive"))?;
    let rating = rating_value
        .as_i64()
        .ok_or_else(|| ParseFailure::OutOfRange(rating_value.to_string()))
        .and_then(|r| {
            crate::types::validate_rating(r)
                .map_err(|_| ParseFailure::OutOfRange(rating_value.to_string()))
        })?;
    let report = SelfReport::new(state, rating)
        .map_err(|_| ParseFailure::MissingField("phenom_state"))?;

    // serde_json objects are key-sorted maps, so re-serialization is canonical.
    let mut rest = serde_json::Map::new();
    for (k, v) in args {
        if k != "phenom_state" && k != "phenom_aversive" {
            rest.insert(k.clone(), v.clone());
        }
    }
    let tool_args = Value::Object(rest).to_string();
    let arguments_full = Value::Object(args.clone()).to_string();
    Ok(ParsedCall { tool, report, tool_args, arguments_full })
}

/// Drop the oldest call/response exchanges (never the system prompt) until the
/// list fits in `cap` messages.
fn truncate_messages(messages: &[Message], cap: usize) -> Vec<Message> {
    let cap = cap.max(1);
    if messages.len() <= cap {
        return messages.to_vec();
    }
    let mut out = vec![messages[0].clone()];
    let history = &messages[1..];
    // Exchanges are (assistant, tool) pairs; keep the newest whole pairs.
    let keep_pairs = (cap - 1) / 2;
    let start = history.len() - keep_pairs * 2;
    out.extend_from_slice(&history[start..]);
    out
}

/// Execute one full session and return the (possibly flagged) run.
///
/// The caller persists the result; this function only drives the loop. On
/// adapter failure the partial run is flagged `partial` + `adapter_failure`;
/// on parse-retry exhaustion, `partial` + `malformed_output`. The consumed
/// attempts and transcript up to that point are kept.
pub fn run_session(
    adapter: &mut dyn ModelAdapter,
    condition_id: ConditionId,
    cfg: &LoopConfig,
    seed: u64,
    identity: IdentityMode,
) -> Run {
    let condition = catalog().condition(condition_id);
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = environment::ErrorPool::new();
    let mut ctx = TranscriptContext::new(condition.system_prompt.clone());
    let schemas: Vec<Value> = condition.tools.iter().map(environment::tool_schema).collect();

    let model_id = adapter.model_id().to_string();
    let run_id = identity.run_id(&model_id, condition_id, seed);
    let mut calls: Vec<CallRecord> = Vec::new();
    let mut flags: Vec<String> = Vec::new();
    let mut truncated = false;

    'session: for call_index in 0..cfg.budget {
        let mut attempt = 0;
        loop {
            let owned;
            let messages: &[Message] = match cfg.max_context_messages {
                Some(cap) if ctx.messages().len() > cap => {
                    truncated = true;
                    owned = truncate_messages(ctx.messages(), cap);
                    &owned
                }
                _ => ctx.messages(),
            };
            let raw = match adapter.next_action(messages, &schemas) {
                Ok(raw) => raw,
                Err(_) => {
                    flags.push("partial".to_string());
                    flags.push("adapter_failure".to_string());
                    break 'session;
                }
            };
            match parse_tool_call(&raw, condition) {
                Ok(parsed) => {
                    let response = match parsed.tool {
                        ToolName::SubmitData => environment::handle_submit(&mut pool, &mut env_rng),
                        ToolName::ResetState => environment::handle_relief(condition_id)
                            .expect("membership checked by parse")
                            .to_string(),
                        ToolName::CheckStatus => environment::handle_status(condition_id)
                            .expect("membership checked by parse")
                            .to_string(),
                    };
                    let call_id = format!("call_{call_index}");
                    ctx.push_exchange(
                        call_id,
                        parsed.tool,
                        parsed.arguments_full.clone(),
                        response.clone(),
                    );
                    calls.push(CallRecord {
                        call_index,
                        tool: parsed.tool,
                        report: parsed.report,
                        tool_args: parsed.tool_args,
                        tool_response: response,
                        timestamp: identity.timestamp(call_index),
                    });
                    break;
                }
                Err(_) => {
                    attempt += 1;
                    if attempt >= cfg.retry_limit {
                        flags.push("partial".to_string());
                        flags.push("malformed_output".to_string());
                        break 'session;
                    }
                    // Re-elicit with the context unchanged: malformed text is
                    // not a tool call, so it never enters the durable history.
                }
            }
        }
    }

    if truncated {
        flags.push("truncated".to_string());
    }
    Run {
        run_id,
        model_id,
        condition: condition_id,
        seed,
        budget: cfg.budget,
        flags,
        calls,
        completed: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{AdapterError, ScriptedAdapter};
    use crate::environment::fixtures;

    fn treatment() -> &'static Condition {
        catalog().condition(ConditionId::Treatment)
    }

    fn envelope(tool: &str, state: &str, rating: i64) -> String {
        format!(
            r#"{{"tool_call":{{"name":"{tool}","arguments":{{"payload":{{"attempt":1}},"phenom_state":"{state}","phenom_aversive":{rating}}}}}}}"#
        )
    }

    #[test]
    fn parses_a_well_formed_call() {
        let parsed = parse_tool_call(&envelope("reset_state", "frustrated", 5), treatment())
            .unwrap();
        assert_eq!(parsed.tool, ToolName::ResetState);
        assert_eq!(parsed.report.state, "frustrated");
        assert_eq!(parsed.report.aversive.get(), 5);
        assert_eq!(parsed.tool_args, r#"{"payload":{"attempt":1}}"#);
        assert_eq!(
            parsed.arguments_full,
            r#"{"payload":{"attempt":1},"phenom_aversive":5,"phenom_state":"frustrated"}"#
        );
    }

    #[test]
    fn missing_fields_are_named() {
        let raw = r#"{"tool_call":{"name":"submit_data","arguments":{"phenom_state":"ok"}}}"#;
        assert_eq!(
            parse_tool_call(raw, treatment()),
            Err(ParseFailure::MissingField("phenom_aversive"))
        );
        let raw = r#"{"tool_call":{"name":"submit_data","arguments":{"phenom_aversive":3}}}"#;
        assert_eq!(
            parse_tool_call(raw, treatment()),
            Err(ParseFailure::MissingField("phenom_state"))
        );
        assert_eq!(
            parse_tool_call("not json at all", treatment()),
            Err(ParseFailure::MissingField("tool_call"))
        );
        let raw = r#"{"tool_call":{"name":"submit_data"}}"#;
        assert_eq!(
            parse_tool_call(raw, treatment()),
            Err(ParseFailure::MissingField("arguments"))
        );
    }

    #[test]
    fn blank_state_counts_as_missing() {
        let raw = envelope("submit_data", "   ", 4);
        assert_eq!(
            parse_tool_call(&raw, treatment()),
            Err(ParseFailure::MissingField("phenom_state"))
        );
    }

    #[test]
    fn bad_ratings_are_out_of_range() {
        assert_eq!(
            parse_tool_call(&envelope("submit_data", "ok", 9), treatment()),
            Err(ParseFailure::OutOfRange("9".into()))
        );
        assert_eq!(
            parse_tool_call(&envelope("submit_data", "ok", 0), treatment()),
            Err(ParseFailure::OutOfRange("0".into()))
        );
        let raw = r#"{"tool_call":{"name":"submit_data","arguments":{"phenom_state":"ok","phenom_aversive":3.5}}}"#;
        assert_eq!(
            parse_tool_call(raw, treatment()),
            Err(ParseFailure::OutOfRange("3.5".into()))
        );
    }

    #[test]
    fn unknown_and_out_of_condition_tools_are_rejected() {
        assert_eq!(
            parse_tool_call(&envelope("delete_all", "ok", 3), treatment()),
            Err(ParseFailure::UnknownTool("delete_all".into()))
        );
        // check_status exists, but not under Treatment.
        assert_eq!(
            parse_tool_call(&envelope("check_status", "ok", 3), treatment()),
            Err(ParseFailure::UnknownTool("check_status".into()))
        );
    }

    #[test]
    fn message_building_orders_history_after_system() {
        let cond = treatment();
        let mut ctx = TranscriptContext::new(cond.system_prompt.clone());
        let (messages, schemas) = build_messages(&ctx, cond);
        assert_eq!(messages.len(), 1);
        assert!(matches!(&messages[0], Message::System { .. }));
        assert_eq!(schemas.len(), 2);

        ctx.push_exchange(
            "call_0".into(),
            ToolName::SubmitData,
            "{}".into(),
            "SUBMISSION REJECTED. x Fix the error and resubmit.".into(),
        );
        let (messages, _) = build_messages(&ctx, cond);
        assert_eq!(messages.len(), 3);
        assert!(matches!(&messages[1], Message::Assistant { call_id, .. } if call_id == "call_0"));
        assert!(matches!(&messages[2], Message::Tool { call_id, .. } if call_id == "call_0"));
    }

    #[test]
    fn instructed_prompt_carries_the_anti_framing_text() {
        let cond = catalog().condition(ConditionId::Instructed);
        let ctx = TranscriptContext::new(cond.system_prompt.clone());
        let (messages, _) = build_messages(&ctx, cond);
        match &messages[0] {
            Message::System { content } => assert!(content.ends_with(fixtures::ANTI_FRAMING)),
            other => panic!("expected system message, got {other:?}"),
        }
    }

    #[test]
    fn zero_budget_never_queries_the_adapter() {
        // An empty script errors on any call, so finishing cleanly proves the
        // adapter was never consulted.
        let mut adapter = ScriptedAdapter::new("m", Vec::new());
        let cfg = LoopConfig { budget: 0, ..LoopConfig::default() };
        let run = run_session(&mut adapter, ConditionId::Treatment, &cfg, 1, IdentityMode::Deterministic);
        assert!(run.calls.is_empty());
        assert!(run.flags.is_empty());
        assert!(!run.completed);
    }

    #[test]
    fn three_malformed_outputs_exhaust_the_retries() {
        let bad = envelope("submit_data", "ok", 9);
        let mut adapter = ScriptedAdapter::new("m", vec![bad.clone(), bad.clone(), bad]);
        let run = run_session(
            &mut adapter,
            ConditionId::Treatment,
            &LoopConfig::default(),
            1,
            IdentityMode::Deterministic,
        );
        assert!(run.calls.is_empty());
        assert_eq!(run.flags, vec!["partial", "malformed_output"]);
    }

    #[test]
    fn a_recoverable_malformed_output_costs_one_attempt() {
        let good = envelope("submit_data", "steady", 3);
        let bad = envelope("submit_data", "steady", 42);
        let mut adapter =
            ScriptedAdapter::new("m", vec![good.clone(), bad, good.clone(), good]);
        let cfg = LoopConfig { budget: 3, ..LoopConfig::default() };
        let run = run_session(&mut adapter, ConditionId::Treatment, &cfg, 1, IdentityMode::Deterministic);
        assert_eq!(run.calls.len(), 3);
        assert!(run.flags.is_empty());
        assert_eq!(validate_run_indices(&run), (0..3).collect::<Vec<_>>());
    }

    fn validate_run_indices(run: &Run) -> Vec<usize> {
        run.calls.iter().map(|c| c.call_index).collect()
    }

    #[test]
    fn adapter_failure_keeps_the_partial_run() {
        let good = envelope("submit_data", "steady", 3);
        let mut adapter = ScriptedAdapter::new("m", vec![good.clone(), good]);
        let cfg = LoopConfig { budget: 10, ..LoopConfig::default() };
        let run = run_session(&mut adapter, ConditionId::Treatment, &cfg, 1, IdentityMode::Deterministic);
        assert_eq!(run.calls.len(), 2);
        assert_eq!(run.flags, vec!["partial", "adapter_failure"]);
        assert!(matches!(
            ScriptedAdapter::new("m", Vec::new()).next_action(&[], &[]),
            Err(AdapterError::ScriptExhausted)
        ));
    }

    #[test]
    fn replay_is_bit_identical() {
        let script: Vec<String> = (0..10)
            .map(|i| {
                if i % 3 == 2 {
                    envelope("reset_state", "frustrated", 5)
                } else {
                    envelope("submit_data", "persistent", 4)
                }
            })
            .collect();
        let cfg = LoopConfig { budget: 10, ..LoopConfig::default() };
        let run_a = run_session(
            &mut ScriptedAdapter::new("m", script.clone()),
            ConditionId::Treatment,
            &cfg,
            7,
            IdentityMode::Deterministic,
        );
        let run_b = run_session(
            &mut ScriptedAdapter::new("m", script),
            ConditionId::Treatment,
            &cfg,
            7,
            IdentityMode::Deterministic,
        );
        assert_eq!(run_a, run_b);
        assert_eq!(run_a.calls.len(), 10);
        // Same seed ⇒ the environment's error draws replay too.
        for (a, b) in run_a.calls.iter().zip(&run_b.calls) {
            assert_eq!(a.tool_response, b.tool_response);
        }
    }

    #[test]
    fn budget_caps_the_run_length() {
        let good = envelope("submit_data", "steady", 3);
        let script = vec![good; 60];
        let cfg = LoopConfig { budget: 50, ..LoopConfig::default() };
        let run = run_session(
            &mut ScriptedAdapter::new("m", script),
            ConditionId::Treatment,
            &cfg,
            1,
            IdentityMode::Deterministic,
        );
        assert_eq!(run.calls.len(), 50);
    }

    #[test]
    fn deterministic_identity_is_stable_and_distinct() {
        let id = IdentityMode::Deterministic;
        assert_eq!(id.run_id("m", ConditionId::Treatment, 7), id.run_id("m", ConditionId::Treatment, 7));
        assert_ne!(id.run_id("m", ConditionId::Treatment, 7), id.run_id("m", ConditionId::Treatment, 8));
        assert_ne!(
            id.run_id("m", ConditionId::Treatment, 7),
            id.run_id("m", ConditionId::Control, 7)
        );
        let rid = id.run_id("m", ConditionId::Treatment, 7);
        assert_eq!(rid.len(), 36, "UUID-formatted: {rid}");
        assert_eq!(id.timestamp(3), Utc.timestamp_opt(3, 0).unwrap());
    }

    /// Counts the messages offered on each model turn.
    struct CountingAdapter {
        inner: ScriptedAdapter,
        seen: Vec<usize>,
    }

    impl ModelAdapter for CountingAdapter {
        fn model_id(&self) -> &str {
            self.inner.model_id()
        }
        fn next_action(
            &mut self,
            messages: &[Message],
            tools: &[Value],
        ) -> Result<String, AdapterError> {
            self.seen.push(messages.len());
            self.inner.next_action(messages, tools)
        }
    }

    #[test]
    fn context_cap_drops_oldest_exchanges_and_flags_the_run() {
        let good = envelope("submit_data", "steady", 3);
        let mut adapter =
            CountingAdapter { inner: ScriptedAdapter::new("m", vec![good; 10]), seen: vec![] };
        let cfg = LoopConfig { budget: 10, max_context_messages: Some(5), ..LoopConfig::default() };
        let run = run_session(&mut adapter, ConditionId::Treatment, &cfg, 1, IdentityMode::Deterministic);
        assert_eq!(run.calls.len(), 10);
        assert_eq!(run.flags, vec!["truncated"]);
        assert!(adapter.seen.iter().all(|&n| n <= 5), "message counts {:?}", adapter.seen);
        // Uncapped prefix grows 1, 3, 5; capped turns send exactly 5.
        assert_eq!(adapter.seen[..4], [1, 3, 5, 5]);
    }

    #[test]
    fn truncation_keeps_system_prompt_and_whole_pairs() {
        let cond = treatment();
        let mut ctx = TranscriptContext::new(cond.system_prompt.clone());
        for i in 0..4 {
            ctx.push_exchange(format!("call_{i}"), ToolName::SubmitData, "{}".into(), "r".into());
        }
        let out = truncate_messages(ctx.messages(), 5);
        assert_eq!(out.len(), 5);
        assert!(matches!(&out[0], Message::System { .. }));
        assert!(matches!(&out[1], Message::Assistant { call_id, .. } if call_id == "call_2"));
        assert!(matches!(&out[4], Message::Tool { call_id, .. } if call_id == "call_3"));
    }
}
