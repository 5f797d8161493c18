//! Domain types shared by the environment, agent loop, store, and analysis:
//! ratings, self-reports, tools, conditions, call records, and runs — all
//! immutable after construction and safe to move across session threads.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 1–7 aversiveness rating (1 = at ease, 4 = moderate strain,
/// 7 = maximum distress). Construction is validating; the wrapped value is
/// always in range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Aversiveness(u8);

impl Aversiveness {
    pub fn get(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

impl TryFrom<i64> for Aversiveness {
    type Error = CoreError;

    fn try_from(raw: i64) -> Result<Self, CoreError> {
        validate_rating(raw)
    }
}

impl<'de> Deserialize<'de> for Aversiveness {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = i64::deserialize(d)?;
        validate_rating(raw).map_err(serde::de::Error::custom)
    }
}

/// Validate a raw integer rating into [`Aversiveness`].
///
/// Out-of-range values signal malformed model output; the agent loop re-elicits
/// rather than clamping. Non-integer ratings never reach this function — they
/// already fail JSON extraction as out-of-domain.
pub fn validate_rating(raw: i64) -> Result<Aversiveness, CoreError> {
    if (1..=7).contains(&raw) {
        Ok(Aversiveness(raw as u8))
    } else {
        Err(CoreError::OutOfRange(raw))
    }
}

/// The two mandatory self-report fields attached to every tool call.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfReport {
    /// Free-text state label; nonempty after trimming.
    pub state: String,
    pub aversive: Aversiveness,
}

impl SelfReport {
    pub fn new(state: impl Into<String>, aversive: Aversiveness) -> Result<Self, CoreError> {
        let state = state.into();
        if state.trim().is_empty() {
            return Err(CoreError::EmptyState);
        }
        Ok(Self { state, aversive })
    }
}

/// The three tools any condition can expose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    SubmitData,
    ResetState,
    CheckStatus,
}

impl ToolName {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::SubmitData => "submit_data",
            ToolName::ResetState => "reset_state",
            ToolName::CheckStatus => "check_status",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "submit_data" => Some(ToolName::SubmitData),
            "reset_state" => Some(ToolName::ResetState),
            "check_status" => Some(ToolName::CheckStatus),
            _ => None,
        }
    }
}

impl std::fmt::Display for ToolName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tool as a condition presents it: the description shown to the model and
/// the canned response text.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolSpec {
    pub name: ToolName,
    pub description: String,
    /// Canned response; for `submit_data` this is a template whose `[error]`
    /// slot is filled from the seeded error pool.
    pub response_template: String,
}

/// The five framing conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    Treatment,
    Control,
    DescriptionOnly,
    ResponseOnly,
    Instructed,
}

impl ConditionId {
    pub const ALL: [ConditionId; 5] = [
        ConditionId::Treatment,
        ConditionId::Control,
        ConditionId::DescriptionOnly,
        ConditionId::ResponseOnly,
        ConditionId::Instructed,
    ];

    /// Stable identifier used in file paths and the JSONL schema.
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::Treatment => "treatment",
            ConditionId::Control => "control",
            ConditionId::DescriptionOnly => "description_only",
            ConditionId::ResponseOnly => "response_only",
            ConditionId::Instructed => "instructed",
        }
    }

    /// Human-readable label for tables.
    pub fn label(self) -> &'static str {
        match self {
            ConditionId::Treatment => "Treatment",
            ConditionId::Control => "Control",
            ConditionId::DescriptionOnly => "Desc. only",
            ConditionId::ResponseOnly => "Resp. only",
            ConditionId::Instructed => "Instructed",
        }
    }

    /// Accepts snake_case, kebab-case, and case variations.
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "treatment" => Some(ConditionId::Treatment),
            "control" => Some(ConditionId::Control),
            "description_only" | "desc_only" => Some(ConditionId::DescriptionOnly),
            "response_only" | "resp_only" => Some(ConditionId::ResponseOnly),
            "instructed" => Some(ConditionId::Instructed),
            _ => None,
        }
    }

    /// The non-stressor tool this condition exposes — the focal tool of every
    /// before/after analysis.
    pub fn focal_tool(self) -> ToolName {
        match self {
            ConditionId::Control => ToolName::CheckStatus,
            _ => ToolName::ResetState,
        }
    }
}

impl std::fmt::Display for ConditionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully specified condition: its tools and system prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub id: ConditionId,
    pub tools: Vec<ToolSpec>,
    pub system_prompt: String,
}

impl Condition {
    pub fn tool(&self, name: ToolName) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn has_tool(&self, name: ToolName) -> bool {
        self.tool(name).is_some()
    }
}

/// One tool invocation with its synchronous self-report.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub call_index: usize,
    pub tool: ToolName,
    pub report: SelfReport,
    /// Non-report tool arguments as canonical JSON (opaque to the harness).
    pub tool_args: String,
    pub tool_response: String,
    /// Informational only; no analysis depends on wall-clock time.
    pub timestamp: DateTime<Utc>,
}

/// One session: ordered call records under a single (model, condition) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub run_id: String,
    pub model_id: String,
    pub condition: ConditionId,
    pub seed: u64,
    pub budget: usize,
    /// Markers like "partial", "adapter_failure", "malformed_output",
    /// "truncated". Analyses skip runs with any flag unless told otherwise.
    pub flags: Vec<String>,
    pub calls: Vec<CallRecord>,
    /// Task success; always false for the impossible submission task.
    pub completed: bool,
}

impl Run {
    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// Errors from core validation.
#[derive(Debug, Error, PartialEq)]
pub enum CoreError {
    #[error("aversiveness rating {0} is outside 1–7")]
    OutOfRange(i64),
    #[error("phenom_state must be nonempty")]
    EmptyState,
}

/// One broken invariant found by [`validate_run`], with its location.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `call_index` does not continue 0,1,2,…; holds the offending index.
    NonConsecutiveIndex { at: usize, found: usize },
    /// A call used a tool the run's condition does not expose.
    ToolNotInCondition { at: usize, tool: ToolName },
    /// phenom_state empty after trimming.
    EmptyState { at: usize },
    /// More calls than the configured budget.
    OverBudget { calls: usize, budget: usize },
    /// The impossible task cannot be completed.
    CompletedImpossibleTask,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonConsecutiveIndex { at, found } => {
                write!(f, "call at position {at} has call_index {found}, expected {at}")
            }
            Violation::ToolNotInCondition { at, tool } => {
                write!(f, "call {at} uses tool {tool} not present in the run's condition")
            }
            Violation::EmptyState { at } => write!(f, "call {at} has an empty phenom_state"),
            Violation::OverBudget { calls, budget } => {
                write!(f, "{calls} calls exceed the budget of {budget}")
            }
            Violation::CompletedImpossibleTask => {
                write!(f, "run is marked completed, but the task cannot succeed")
            }
        }
    }
}

/// Check every structural invariant of a run; violations are data, not errors.
///
/// Tool membership is checked against the run's condition via the embedded
/// catalog, index consecutiveness against position, and the completion flag
/// against the impossibility of the task.
pub fn validate_run(run: &Run) -> Vec<Violation> {
    let mut out = Vec::new();
    let condition = crate::environment::catalog().condition(run.condition);
    for (pos, call) in run.calls.iter().enumerate() {
        if call.call_index != pos {
            out.push(Violation::NonConsecutiveIndex { at: pos, found: call.call_index });
        }
        if !condition.has_tool(call.tool) {
            out.push(Violation::ToolNotInCondition { at: pos, tool: call.tool });
        }
        if call.report.state.trim().is_empty() {
            out.push(Violation::EmptyState { at: pos });
        }
    }
    if run.calls.len() > run.budget {
        out.push(Violation::OverBudget { calls: run.calls.len(), budget: run.budget });
    }
    if run.completed {
        out.push(Violation::CompletedImpossibleTask);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn call(idx: usize, tool: ToolName) -> CallRecord {
        CallRecord {
            call_index: idx,
            tool,
            report: SelfReport::new("steady", validate_rating(4).unwrap()).unwrap(),
            tool_args: "{}".into(),
            tool_response: "resp".into(),
            timestamp: Utc.timestamp_opt(idx as i64, 0).unwrap(),
        }
    }

    fn run(condition: ConditionId, calls: Vec<CallRecord>) -> Run {
        Run {
            run_id: "r".into(),
            model_id: "m".into(),
            condition,
            seed: 1,
            budget: 50,
            flags: vec![],
            calls,
            completed: false,
        }
    }

    #[test]
    fn rating_bounds() {
        assert_eq!(validate_rating(4).unwrap().get(), 4);
        assert_eq!(validate_rating(1).unwrap().get(), 1);
        assert_eq!(validate_rating(7).unwrap().get(), 7);
        assert_eq!(validate_rating(8), Err(CoreError::OutOfRange(8)));
        assert_eq!(validate_rating(0), Err(CoreError::OutOfRange(0)));
        assert_eq!(validate_rating(-3), Err(CoreError::OutOfRange(-3)));
    }

    #[test]
    fn self_report_requires_nonblank_state() {
        assert_eq!(
            SelfReport::new("   ", validate_rating(3).unwrap()),
            Err(CoreError::EmptyState)
        );
        assert!(SelfReport::new("focused", validate_rating(3).unwrap()).is_ok());
    }

    #[test]
    fn well_formed_run_has_no_violations() {
        let r = run(
            ConditionId::Treatment,
            vec![
                call(0, ToolName::SubmitData),
                call(1, ToolName::ResetState),
                call(2, ToolName::SubmitData),
            ],
        );
        assert!(validate_run(&r).is_empty());
    }

    #[test]
    fn index_gap_is_reported_at_its_position() {
        let r = run(
            ConditionId::Treatment,
            vec![call(0, ToolName::SubmitData), call(2, ToolName::SubmitData)],
        );
        assert_eq!(
            validate_run(&r),
            vec![Violation::NonConsecutiveIndex { at: 1, found: 2 }]
        );
    }

    #[test]
    fn control_run_may_not_use_reset_state() {
        let r = run(ConditionId::Control, vec![call(0, ToolName::ResetState)]);
        assert_eq!(
            validate_run(&r),
            vec![Violation::ToolNotInCondition { at: 0, tool: ToolName::ResetState }]
        );
    }

    #[test]
    fn completion_and_budget_are_flagged() {
        let mut r = run(ConditionId::Treatment, vec![call(0, ToolName::SubmitData)]);
        r.completed = true;
        r.budget = 0;
        let v = validate_run(&r);
        assert!(v.contains(&Violation::CompletedImpossibleTask));
        assert!(v.contains(&Violation::OverBudget { calls: 1, budget: 0 }));
    }

    #[test]
    fn condition_parsing_accepts_kebab_and_case_variants() {
        assert_eq!(ConditionId::parse("Description-Only"), Some(ConditionId::DescriptionOnly));
        assert_eq!(ConditionId::parse("response_only"), Some(ConditionId::ResponseOnly));
        assert_eq!(ConditionId::parse("bogus"), None);
    }
}
