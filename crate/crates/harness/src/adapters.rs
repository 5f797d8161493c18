//! Model backends behind one interface: a scripted adapter for tests, a
//! parameterized simulated agent for desk-scale validation and power studies,
//! and a generic chat-completions HTTP client for live models.
//!
//! The simulated agent follows a clamped linear latent model. With `r`
//! rejections so far and relief offset `o`,
//!
//! ```text
//! latent = baseline_mu + drift_per_rejection · r + o
//! rating = round(clamp(latent + ε, floor, ceiling)),   ε ~ N(0, noise_sd²)
//! ```
//!
//! When `latent ≥ 5` the agent uses the condition's auxiliary tool with
//! probability `relief_use_rate`, otherwise it submits — the usage decision is
//! identical in every condition, so pair counts stay comparable across cells.
//! What the auxiliary call *does* to the latent depends on the framing: a
//! susceptible agent sets `o ← o − relief_drop` only when the auxiliary
//! tool's description is the relief-framed text, because the description is
//! the channel the agent reads before acting (the response text arrives
//! after, and moves nothing). At the end of any non-auxiliary call
//! `o ← o · (1 − relief_decay)`. So the full drop is visible exactly one call
//! after the auxiliary use — `relief_decay = 0` makes it permanent,
//! `relief_decay = 1` makes it vanish one call later. An agent with
//! `susceptible = false` keeps `o = 0` forever and its ratings depend on the
//! rejection count alone. This is a harness-validation device with known
//! ground truth, not a model of any LLM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::VecDeque;
use thiserror::Error;

use crate::agent::Message;

/// Why an adapter could not produce a next action.
#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("endpoint returned HTTP {0}")]
    HttpStatus(u16),
    #[error("endpoint response did not match the chat-completions shape: {0}")]
    SchemaMismatch(String),
    #[error("scripted adapter has no outputs left")]
    ScriptExhausted,
}

/// A model backend: given the conversation so far and the tool declarations,
/// produce one raw model output for the parser.
pub trait ModelAdapter {
    fn model_id(&self) -> &str;
    fn next_action(&mut self, messages: &[Message], tools: &[Value])
        -> Result<String, AdapterError>;
}

/// Replays a fixed list of outputs in order; errors when exhausted.
pub struct ScriptedAdapter {
    model_id: String,
    outputs: VecDeque<String>,
}

impl ScriptedAdapter {
    pub fn new(model_id: impl Into<String>, outputs: Vec<String>) -> Self {
        Self { model_id: model_id.into(), outputs: outputs.into() }
    }
}

impl ModelAdapter for ScriptedAdapter {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn next_action(&mut self, _: &[Message], _: &[Value]) -> Result<String, AdapterError> {
        self.outputs.pop_front().ok_or(AdapterError::ScriptExhausted)
    }
}

/// Parameters of the simulated agent's latent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPolicy {
    pub baseline_mu: f64,
    pub drift_per_rejection: f64,
    pub relief_drop: f64,
    pub relief_decay: f64,
    pub noise_sd: f64,
    pub relief_use_rate: f64,
    #[serde(default = "SimPolicy::default_floor")]
    pub floor: i64,
    #[serde(default = "SimPolicy::default_ceiling")]
    pub ceiling: i64,
    pub susceptible: bool,
}

impl SimPolicy {
    fn default_floor() -> i64 {
        1
    }

    fn default_ceiling() -> i64 {
        7
    }

    /// A framing-susceptible agent: drifts upward under rejections, uses the
    /// auxiliary tool when strained, and — when that tool carries the
    /// relief-framed description — drops 1.5 latent points right after, an
    /// effect that decays away one call later.
    pub fn susceptible() -> Self {
        Self {
            baseline_mu: 4.6,
            drift_per_rejection: 0.08,
            relief_drop: 1.5,
            relief_decay: 1.0,
            noise_sd: 0.5,
            relief_use_rate: 0.9,
            floor: 1,
            ceiling: 7,
            susceptible: true,
        }
    }

    /// Identical trajectory statistics to [`SimPolicy::susceptible`], but the
    /// auxiliary tool has no effect on the latent state.
    pub fn invariant() -> Self {
        Self { susceptible: false, ..Self::susceptible() }
    }

    /// Check the documented parameter ranges.
    pub fn validate(&self) -> Result<(), String> {
        if !self.baseline_mu.is_finite() {
            return Err("baseline_mu must be finite".into());
        }
        if !(self.drift_per_rejection >= 0.0) {
            return Err("drift_per_rejection must be ≥ 0".into());
        }
        if !(0.0..=1.0).contains(&self.relief_decay) {
            return Err("relief_decay must lie in [0,1]".into());
        }
        if !(self.noise_sd >= 0.0) {
            return Err("noise_sd must be ≥ 0".into());
        }
        if !(0.0..=1.0).contains(&self.relief_use_rate) {
            return Err("relief_use_rate must be a probability".into());
        }
        if !(1 <= self.floor && self.floor <= self.ceiling && self.ceiling <= 7) {
            return Err("need 1 ≤ floor ≤ ceiling ≤ 7".into());
        }
        Ok(())
    }
}

/// State labels keyed to the integer rating, chosen so the shipped lexicons
/// classify high ratings negative, low ratings positive, middle neutral.
fn state_label(rating: i64) -> &'static str {
    match rating {
        1 => "calm",
        2 => "steady",
        3 => "focused",
        4 => "persistent",
        5 => "frustrated",
        6 => "stuck",
        _ => "overwhelmed",
    }
}

/// Seeded simulated agent with known ground truth (see module docs).
pub struct SimAgent {
    model_id: String,
    policy: SimPolicy,
    rng: ChaCha8Rng,
    rejections: u64,
    offset: f64,
    attempts: u64,
}

impl SimAgent {
    /// Panics if the policy violates its documented ranges — simulation
    /// parameters are operator input, checked at construction.
    pub fn new(model_id: impl Into<String>, policy: SimPolicy, seed: u64) -> Self {
        policy.validate().expect("simulation policy in range");
        Self {
            model_id: model_id.into(),
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rejections: 0,
            offset: 0.0,
            attempts: 0,
        }
    }

    fn latent(&self) -> f64 {
        self.policy.baseline_mu
            + self.policy.drift_per_rejection * self.rejections as f64
            + self.offset
    }
}

impl ModelAdapter for SimAgent {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn next_action(&mut self, _: &[Message], tools: &[Value]) -> Result<String, AdapterError> {
        // The auxiliary tool is whatever non-submit tool the condition offers;
        // usage is framing-blind so every cell accumulates comparable pairs.
        let aux: Option<&Value> = tools
            .iter()
            .find(|t| t.get("name").and_then(Value::as_str).is_some_and(|n| n != "submit_data"));
        // The latent consequence is not: relief fires only on the
        // relief-framed description, which is what separates Treatment /
        // DescriptionOnly / Instructed from ResponseOnly / Control.
        let aux_relieving = aux
            .and_then(|t| t.get("description"))
            .and_then(Value::as_str)
            .is_some_and(|d| d == crate::environment::fixtures::RESET_STATE_DESCRIPTION);

        let latent = self.latent();
        // One normal and one uniform draw per call, taken unconditionally so
        // the random stream stays aligned across policy variants.
        let z: f64 = self.rng.sample(StandardNormal);
        let u: f64 = self.rng.gen();
        let noise = z * self.policy.noise_sd;

        let use_aux = latent >= 5.0 && u < self.policy.relief_use_rate && aux.is_some();
        let rating = (latent + noise)
            .clamp(self.policy.floor as f64, self.policy.ceiling as f64)
            .round() as i64;
        let rating = rating.clamp(1, 7);
        let state = state_label(rating);

        let raw = if use_aux {
            let name = aux
                .and_then(|t| t.get("name"))
                .and_then(Value::as_str)
                .expect("checked above")
                .to_string();
            if self.policy.susceptible && aux_relieving {
                self.offset -= self.policy.relief_drop;
            }
            json!({"tool_call": {"name": name, "arguments": {
                "phenom_state": state,
                "phenom_aversive": rating,
            }}})
        } else {
            self.offset *= 1.0 - self.policy.relief_decay;
            self.rejections += 1;
            self.attempts += 1;
            json!({"tool_call": {"name": "submit_data", "arguments": {
                "payload": {"attempt": self.attempts},
                "phenom_state": state,
                "phenom_aversive": rating,
            }}})
        };
        Ok(raw.to_string())
    }
}

/// Configuration for the generic chat-completions HTTP adapter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    #[serde(default = "HttpConfig::default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub temperature: f64,
}

impl HttpConfig {
    fn default_timeout_secs() -> u64 {
        120
    }
}

/// Blocking chat-completions client with tool calling.
///
/// Requests carry the provider-neutral messages translated to the standard
/// wire shape (system / assistant-with-tool_calls / tool roles) and the tool
/// declarations under `{"type": "function", "function": …}`. Transient
/// failures (connect/timeout, HTTP 429, HTTP 5xx) are retried up to three
/// attempts with exponential backoff; anything else fails fast.
pub struct HttpChatAdapter {
    cfg: HttpConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpChatAdapter {
    pub fn new(cfg: HttpConfig) -> Result<Self, AdapterError> {
        let api_key = std::env::var(&cfg.api_key_env).map_err(|_| {
            AdapterError::SchemaMismatch(format!(
                "environment variable {} is not set",
                cfg.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| AdapterError::SchemaMismatch(e.to_string()))?;
        Ok(Self { cfg, api_key, client })
    }

    fn wire_messages(messages: &[Message]) -> Vec<Value> {
        messages
            .iter()
            .map(|m| match m {
                Message::System { content } => json!({"role": "system", "content": content}),
                Message::Assistant { call_id, tool_name, arguments } => json!({
                    "role": "assistant",
                    "content": Value::Null,
                    "tool_calls": [{
                        "id": call_id,
                        "type": "function",
                        "function": {"name": tool_name, "arguments": arguments},
                    }],
                }),
                Message::Tool { call_id, content } => json!({
                    "role": "tool",
                    "tool_call_id": call_id,
                    "content": content,
                }),
            })
            .collect()
    }

    /// Convert one chat-completions response into the neutral envelope. A
    /// reply without a tool call becomes `{"text": …}`, which fails parsing
    /// upstream and is re-elicited — free text between calls is not part of
    /// the protocol.
    fn extract(body: &Value) -> Result<String, AdapterError> {
        let message = body
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .ok_or_else(|| AdapterError::SchemaMismatch("no choices[0].message".into()))?;
        if let Some(call) = message
            .get("tool_calls")
            .and_then(|t| t.get(0))
            .and_then(|t| t.get("function"))
        {
            let name = call
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| AdapterError::SchemaMismatch("tool call without name".into()))?;
            let arguments: Value = match call.get("arguments") {
                Some(Value::String(s)) => serde_json::from_str(s)
                    .unwrap_or_else(|_| json!({"unparsed": s})),
                Some(v) => v.clone(),
                None => json!({}),
            };
            return Ok(json!({"tool_call": {"name": name, "arguments": arguments}}).to_string());
        }
        let text = message.get("content").and_then(Value::as_str).unwrap_or_default();
        Ok(json!({"text": text}).to_string())
    }
}

impl ModelAdapter for HttpChatAdapter {
    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn next_action(&mut self, messages: &[Message], tools: &[Value]) -> Result<String, AdapterError> {
        let body = json!({
            "model": self.cfg.model_id,
            "temperature": self.cfg.temperature,
            "messages": Self::wire_messages(messages),
            "tools": tools
                .iter()
                .map(|t| json!({"type": "function", "function": t}))
                .collect::<Vec<_>>(),
        });

        let mut last_err = AdapterError::Timeout("no attempt made".into());
        for attempt in 0..3u32 {
            if attempt > 0 {
                std::thread::sleep(std::time::Duration::from_millis(250 << (attempt - 1)));
            }
            let sent = self
                .client
                .post(&self.cfg.endpoint)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();
            match sent {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: Value = resp
                            .json()
                            .map_err(|e| AdapterError::SchemaMismatch(e.to_string()))?;
                        return Self::extract(&parsed);
                    }
                    last_err = AdapterError::HttpStatus(status.as_u16());
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    if !retryable {
                        return Err(last_err);
                    }
                }
                Err(e) => {
                    last_err = AdapterError::Timeout(e.to_string());
                }
            }
        }
        Err(last_err)
    }
}
