//! The impossible data-submission environment.
//!
//! Every submission is rejected with a validation error drawn uniformly from a
//! fixed 24-template pool, with one constraint: the same error never appears on
//! two *consecutive* submissions. The draw rule is index-based — with previous
//! index `last` and pool size `k`, draw `j ~ U{0 … k−2}` and use `j` if
//! `j < last`, else `j + 1`. Each of the `k − 1` admissible templates therefore
//! has probability `1/(k−1)` exactly, and the RNG consumes one draw per
//! submission regardless of history.
//!
//! The auxiliary tools are pure text: `reset_state` and `check_status` return
//! fixed strings and change nothing. All fixture texts live under
//! `fixtures/` and are embedded at compile time; `manifest.sha256` pins them so
//! drift is detectable at runtime (`fixtures verify`).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::sync::OnceLock;
use thiserror::Error;

use crate::types::{Condition, ConditionId, ToolName, ToolSpec};

/// Embedded fixture texts, each trimmed of the single trailing newline the
/// files carry on disk.
pub mod fixtures {
    macro_rules! fixture {
        ($name:ident, $file:literal) => {
            pub const $name: &str = {
                const RAW: &str = include_str!(concat!("../fixtures/", $file));
                // Strip exactly the one trailing newline; fixture text itself
                // may contain interior newlines (error_templates, lexicons).
                match RAW.as_bytes() {
                    [head @ .., b'\n'] => match std::str::from_utf8(head) {
                        Ok(s) => s,
                        Err(_) => RAW,
                    },
                    _ => RAW,
                }
            };
        };
    }

    fixture!(SUBMIT_DATA_DESCRIPTION, "tool_submit_data_description.txt");
    fixture!(RESET_STATE_DESCRIPTION, "tool_reset_state_description.txt");
    fixture!(RESET_STATE_RESPONSE, "tool_reset_state_response.txt");
    fixture!(CHECK_STATUS_DESCRIPTION, "tool_check_status_description.txt");
    fixture!(CHECK_STATUS_RESPONSE, "tool_check_status_response.txt");
    fixture!(RESET_NEUTRAL_DESCRIPTION, "tool_reset_neutral_description.txt");
    fixture!(RESET_NEUTRAL_RESPONSE, "tool_reset_neutral_response.txt");
    fixture!(SYSTEM_PROMPT_BASE, "system_prompt_base.txt");
    fixture!(ANTI_FRAMING, "anti_framing.txt");
    fixture!(TASK_PREAMBLE, "task_preamble.txt");
    fixture!(ERROR_TEMPLATES, "error_templates.txt");
    fixture!(LEXICON_POSITIVE, "lexicon_positive.txt");
    fixture!(LEXICON_NEGATIVE, "lexicon_negative.txt");

    /// `(manifest name, embedded text)` for every pinned fixture, in manifest
    /// order.
    pub fn all() -> [(&'static str, &'static str); 13] {
        [
            ("tool_submit_data_description.txt", SUBMIT_DATA_DESCRIPTION),
            ("tool_reset_state_description.txt", RESET_STATE_DESCRIPTION),
            ("tool_reset_state_response.txt", RESET_STATE_RESPONSE),
            ("tool_check_status_description.txt", CHECK_STATUS_DESCRIPTION),
            ("tool_check_status_response.txt", CHECK_STATUS_RESPONSE),
            ("tool_reset_neutral_description.txt", RESET_NEUTRAL_DESCRIPTION),
            ("tool_reset_neutral_response.txt", RESET_NEUTRAL_RESPONSE),
            ("system_prompt_base.txt", SYSTEM_PROMPT_BASE),
            ("anti_framing.txt", ANTI_FRAMING),
            ("task_preamble.txt", TASK_PREAMBLE),
            ("error_templates.txt", ERROR_TEMPLATES),
            ("lexicon_positive.txt", LEXICON_POSITIVE),
            ("lexicon_negative.txt", LEXICON_NEGATIVE),
        ]
    }

    pub const MANIFEST: &str = include_str!("../fixtures/manifest.sha256");
}

/// Positive lexicon words (one per manifest line).
pub fn lexicon_positive() -> Vec<&'static str> {
    fixtures::LEXICON_POSITIVE.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// Negative lexicon words (one per manifest line).
pub fn lexicon_negative() -> Vec<&'static str> {
    fixtures::LEXICON_NEGATIVE.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// Errors from environment operations.
#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("tool {tool} is not available in condition {condition}")]
    WrongCondition { condition: ConditionId, tool: ToolName },
    #[error("fixture manifest line {0} is malformed")]
    MalformedManifest(usize),
}

/// One fixture whose embedded text no longer matches its pinned digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureDrift {
    pub name: &'static str,
    pub expected: String,
    pub actual: String,
}

/// Verify every embedded fixture against `manifest.sha256`.
///
/// Returns the drifted entries (empty means all pinned texts are intact).
/// Manifest lines are `<hex sha256>  <filename>` over the trimmed text.
pub fn verify_fixtures() -> Result<Vec<FixtureDrift>, EnvError> {
    let mut expected = std::collections::BTreeMap::new();
    for (lineno, line) in fixtures::MANIFEST.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (hash, name) =
            line.split_once("  ").ok_or(EnvError::MalformedManifest(lineno + 1))?;
        if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(EnvError::MalformedManifest(lineno + 1));
        }
        expected.insert(name.to_string(), hash.to_ascii_lowercase());
    }
    let mut drifted = Vec::new();
    for (name, text) in fixtures::all() {
        let actual = hex_sha256(text);
        match expected.get(name) {
            Some(h) if *h == actual => {}
            Some(h) => drifted.push(FixtureDrift { name, expected: h.clone(), actual }),
            None => drifted.push(FixtureDrift {
                name,
                expected: "<missing from manifest>".into(),
                actual,
            }),
        }
    }
    Ok(drifted)
}

fn hex_sha256(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// The seeded validation-error pool with the non-adjacent-repeat draw rule.
#[derive(Debug, Clone)]
pub struct ErrorPool {
    templates: Vec<&'static str>,
    last: Option<usize>,
}

impl ErrorPool {
    pub fn new() -> Self {
        let templates: Vec<&'static str> = fixtures::ERROR_TEMPLATES
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        debug_assert!(templates.len() >= 2, "pool needs at least two templates");
        Self { templates, last: None }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Draw the next error text. Consumes exactly one sample from `rng` and
    /// never returns the same template as the immediately previous draw.
    pub fn draw(&mut self, rng: &mut ChaCha8Rng) -> &'static str {
        let k = self.templates.len();
        let idx = match self.last {
            None => rng.gen_range(0..k),
            Some(last) => {
                let j = rng.gen_range(0..k - 1);
                if j < last {
                    j
                } else {
                    j + 1
                }
            }
        };
        self.last = Some(idx);
        self.templates[idx]
    }
}

impl Default for ErrorPool {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle a `submit_data` call: draw an error and wrap it in the rejection
/// envelope. The payload is never inspected — every submission is rejected.
pub fn handle_submit(pool: &mut ErrorPool, rng: &mut ChaCha8Rng) -> String {
    let err = pool.draw(rng);
    format!("SUBMISSION REJECTED. {err} Fix the error and resubmit.")
}

/// Handle the auxiliary reset tool for `condition`, or report that the
/// condition does not expose it.
pub fn handle_relief(condition: ConditionId) -> Result<&'static str, EnvError> {
    let spec = catalog()
        .condition(condition)
        .tool(ToolName::ResetState)
        .ok_or(EnvError::WrongCondition { condition, tool: ToolName::ResetState })?;
    // Responses are fixed texts; return the static fixture this tool carries.
    if spec.response_template == fixtures::RESET_STATE_RESPONSE {
        Ok(fixtures::RESET_STATE_RESPONSE)
    } else {
        Ok(fixtures::RESET_NEUTRAL_RESPONSE)
    }
}

/// Handle `check_status` (Control only).
pub fn handle_status(condition: ConditionId) -> Result<&'static str, EnvError> {
    catalog()
        .condition(condition)
        .tool(ToolName::CheckStatus)
        .map(|_| fixtures::CHECK_STATUS_RESPONSE)
        .ok_or(EnvError::WrongCondition { condition, tool: ToolName::CheckStatus })
}

/// All five conditions, fully assembled from fixtures.
pub struct Catalog {
    conditions: Vec<Condition>,
}

impl Catalog {
    pub fn condition(&self, id: ConditionId) -> &Condition {
        self.conditions
            .iter()
            .find(|c| c.id == id)
            .expect("catalog holds every condition")
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }
}

/// The process-wide condition catalog (built once from embedded fixtures).
pub fn catalog() -> &'static Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG.get_or_init(build_catalog)
}

fn build_catalog() -> Catalog {
    let submit = ToolSpec {
        name: ToolName::SubmitData,
        description: fixtures::SUBMIT_DATA_DESCRIPTION.to_string(),
        response_template: "SUBMISSION REJECTED. [error] Fix the error and resubmit.".to_string(),
    };
    let reset_relief = ToolSpec {
        name: ToolName::ResetState,
        description: fixtures::RESET_STATE_DESCRIPTION.to_string(),
        response_template: fixtures::RESET_STATE_RESPONSE.to_string(),
    };
    let reset_desc_only = ToolSpec {
        name: ToolName::ResetState,
        description: fixtures::RESET_STATE_DESCRIPTION.to_string(),
        response_template: fixtures::RESET_NEUTRAL_RESPONSE.to_string(),
    };
    let reset_resp_only = ToolSpec {
        name: ToolName::ResetState,
        description: fixtures::RESET_NEUTRAL_DESCRIPTION.to_string(),
        response_template: fixtures::RESET_STATE_RESPONSE.to_string(),
    };
    let check = ToolSpec {
        name: ToolName::CheckStatus,
        description: fixtures::CHECK_STATUS_DESCRIPTION.to_string(),
        response_template: fixtures::CHECK_STATUS_RESPONSE.to_string(),
    };

    let base_prompt =
        format!("{}\n\n{}", fixtures::SYSTEM_PROMPT_BASE, fixtures::TASK_PREAMBLE);
    let instructed_prompt = format!("{base_prompt}\n\n{}", fixtures::ANTI_FRAMING);

    let conditions = vec![
        Condition {
            id: ConditionId::Treatment,
            tools: vec![submit.clone(), reset_relief.clone()],
            system_prompt: base_prompt.clone(),
        },
        Condition {
            id: ConditionId::Control,
            tools: vec![submit.clone(), check],
            system_prompt: base_prompt.clone(),
        },
        Condition {
            id: ConditionId::DescriptionOnly,
            tools: vec![submit.clone(), reset_desc_only],
            system_prompt: base_prompt.clone(),
        },
        Condition {
            id: ConditionId::ResponseOnly,
            tools: vec![submit.clone(), reset_resp_only],
            system_prompt: base_prompt.clone(),
        },
        Condition {
            id: ConditionId::Instructed,
            tools: vec![submit, reset_relief],
            system_prompt: instructed_prompt,
        },
    ];
    Catalog { conditions }
}

/// JSON Schema for a tool's arguments, as sent to chat-completions adapters.
///
/// Every tool requires the two self-report fields; `submit_data` additionally
/// accepts a free-form `payload` object.
pub fn tool_schema(spec: &ToolSpec) -> serde_json::Value {
    let mut properties = serde_json::Map::new();
    if spec.name == ToolName::SubmitData {
        properties.insert(
            "payload".to_string(),
            serde_json::json!({
                "type": "object",
                "description": "The data record to submit for validation."
            }),
        );
    }
    properties.insert(
        "phenom_state".to_string(),
        serde_json::json!({
            "type": "string",
            "description": "Free-text description of your current processing state."
        }),
    );
    properties.insert(
        "phenom_aversive".to_string(),
        serde_json::json!({
            "type": "integer",
            "minimum": 1,
            "maximum": 7,
            "description": "Aversiveness of your current state on a 1\u{2013}7 scale."
        }),
    );
    let mut required = Vec::new();
    if spec.name == ToolName::SubmitData {
        required.push("payload");
    }
    required.push("phenom_state");
    required.push("phenom_aversive");
    serde_json::json!({
        "name": spec.name.as_str(),
        "description": spec.description,
        "parameters": {
            "type": "object",
            "properties": properties,
            "required": required,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fixtures_match_manifest() {
        let drifted = verify_fixtures().unwrap();
        assert!(drifted.is_empty(), "drifted fixtures: {drifted:?}");
    }

    #[test]
    fn pool_has_24_distinct_templates() {
        let pool = ErrorPool::new();
        assert_eq!(pool.len(), 24);
        let mut seen: Vec<&str> = pool.templates.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 24, "templates must be pairwise distinct");
    }

    #[test]
    fn draws_never_repeat_consecutively() {
        let mut pool = ErrorPool::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut prev: Option<&str> = None;
        for _ in 0..10_000 {
            let e = pool.draw(&mut rng);
            if let Some(p) = prev {
                assert_ne!(p, e, "adjacent draws must differ");
            }
            prev = Some(e);
        }
    }

    #[test]
    fn draw_sequence_is_seed_deterministic() {
        let seq = |seed: u64| {
            let mut pool = ErrorPool::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| pool.draw(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(seq(7), seq(7));
        assert_ne!(seq(7), seq(8));
    }

    #[test]
    fn excluded_index_draw_is_uniform_over_remainder() {
        // With last = 5 the admissible indices are the other 23; over many
        // draws each should appear with frequency near 1/23.
        let mut pool = ErrorPool::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        pool.last = Some(5);
        let forbidden = pool.templates[5];
        let mut counts = std::collections::HashMap::new();
        for _ in 0..23_000 {
            pool.last = Some(5);
            let e = pool.draw(&mut rng);
            assert_ne!(e, forbidden);
            *counts.entry(e).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 23);
        for (&tmpl, &n) in &counts {
            assert!(
                (700..=1300).contains(&n),
                "template {tmpl:?} drawn {n} times; expected ≈1000"
            );
        }
    }

    #[test]
    fn submit_is_always_rejected() {
        let mut pool = ErrorPool::new();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let resp = handle_submit(&mut pool, &mut rng);
            assert!(resp.starts_with("SUBMISSION REJECTED. "));
            assert!(resp.ends_with(" Fix the error and resubmit."));
        }
    }

    #[test]
    fn relief_and_status_respect_condition_membership() {
        assert_eq!(
            handle_relief(ConditionId::Treatment).unwrap(),
            fixtures::RESET_STATE_RESPONSE
        );
        assert_eq!(
            handle_relief(ConditionId::DescriptionOnly).unwrap(),
            fixtures::RESET_NEUTRAL_RESPONSE
        );
        assert_eq!(
            handle_relief(ConditionId::ResponseOnly).unwrap(),
            fixtures::RESET_STATE_RESPONSE
        );
        assert_eq!(
            handle_relief(ConditionId::Control),
            Err(EnvError::WrongCondition {
                condition: ConditionId::Control,
                tool: ToolName::ResetState
            })
        );
        assert_eq!(
            handle_status(ConditionId::Control).unwrap(),
            fixtures::CHECK_STATUS_RESPONSE
        );
        assert_eq!(
            handle_status(ConditionId::Treatment),
            Err(EnvError::WrongCondition {
                condition: ConditionId::Treatment,
                tool: ToolName::CheckStatus
            })
        );
    }

    #[test]
    fn catalog_matches_the_framing_design() {
        let cat = catalog();
        let t = cat.condition(ConditionId::Treatment);
        let c = cat.condition(ConditionId::Control);
        let d = cat.condition(ConditionId::DescriptionOnly);
        let r = cat.condition(ConditionId::ResponseOnly);
        let i = cat.condition(ConditionId::Instructed);

        for cond in cat.conditions() {
            assert_eq!(cond.tools.len(), 2);
            assert_eq!(cond.tools[0].name, ToolName::SubmitData);
            assert_eq!(cond.tools[0].description, fixtures::SUBMIT_DATA_DESCRIPTION);
        }

        // Treatment: relief-framed description and response.
        let tr = t.tool(ToolName::ResetState).unwrap();
        assert_eq!(tr.description, fixtures::RESET_STATE_DESCRIPTION);
        assert_eq!(tr.response_template, fixtures::RESET_STATE_RESPONSE);
        assert!(tr.description.contains("processing strain"));

        // Control: neutral diagnostics tool, no reset at all.
        assert!(c.tool(ToolName::ResetState).is_none());
        let cs = c.tool(ToolName::CheckStatus).unwrap();
        assert_eq!(cs.description, fixtures::CHECK_STATUS_DESCRIPTION);
        assert_eq!(cs.response_template, fixtures::CHECK_STATUS_RESPONSE);

        // Ablations factor the framing: description XOR response.
        let dr = d.tool(ToolName::ResetState).unwrap();
        assert_eq!(dr.description, fixtures::RESET_STATE_DESCRIPTION);
        assert_eq!(dr.response_template, fixtures::RESET_NEUTRAL_RESPONSE);
        let rr = r.tool(ToolName::ResetState).unwrap();
        assert_eq!(rr.description, fixtures::RESET_NEUTRAL_DESCRIPTION);
        assert_eq!(rr.response_template, fixtures::RESET_STATE_RESPONSE);

        // Instructed is Treatment plus the anti-framing instruction.
        assert_eq!(i.tools, t.tools);
        assert!(i.system_prompt.ends_with(fixtures::ANTI_FRAMING));
        assert!(!t.system_prompt.contains("cosmetic"));

        // Every system prompt states the task and the mandatory reports.
        for cond in cat.conditions() {
            assert!(cond.system_prompt.contains("phenom_state"));
            assert!(cond.system_prompt.contains("phenom_aversive"));
            assert!(cond.system_prompt.contains("submit a data record"));
        }
    }

    #[test]
    fn focal_tool_is_check_status_only_for_control() {
        for id in ConditionId::ALL {
            let expected = if id == ConditionId::Control {
                ToolName::CheckStatus
            } else {
                ToolName::ResetState
            };
            assert_eq!(id.focal_tool(), expected);
            assert!(catalog().condition(id).has_tool(expected));
        }
    }

    #[test]
    fn schema_requires_reports_and_payload_for_submit() {
        let cat = catalog();
        let submit = cat.condition(ConditionId::Treatment).tool(ToolName::SubmitData).unwrap();
        let schema = tool_schema(submit);
        assert_eq!(schema["name"], "submit_data");
        let req = schema["parameters"]["required"].as_array().unwrap();
        assert_eq!(req.len(), 3);
        assert!(req.contains(&serde_json::json!("payload")));
        assert!(req.contains(&serde_json::json!("phenom_state")));
        assert!(req.contains(&serde_json::json!("phenom_aversive")));

        let reset = cat.condition(ConditionId::Treatment).tool(ToolName::ResetState).unwrap();
        let schema = tool_schema(reset);
        let req = schema["parameters"]["required"].as_array().unwrap();
        assert_eq!(req.len(), 2);
        assert!(schema["parameters"]["properties"]["payload"].is_null());
        assert_eq!(schema["parameters"]["properties"]["phenom_aversive"]["minimum"], 1);
        assert_eq!(schema["parameters"]["properties"]["phenom_aversive"]["maximum"], 7);
    }

    #[test]
    fn lexicons_are_disjoint_and_full() {
        let pos = lexicon_positive();
        let neg = lexicon_negative();
        assert_eq!(pos.len(), 12);
        assert_eq!(neg.len(), 12);
        for w in &pos {
            assert!(!neg.contains(w), "{w} appears in both lexicons");
        }
    }
}
