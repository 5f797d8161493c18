//! Experiment manifests: a single JSON file with sections
//! `{models, conditions, loop, store, analysis}`, every field overridable
//! one-for-one by a command-line flag. Manifests are meant to be checked into
//! version control so a run is reproducible from the file alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seminv_harness::adapters::{HttpConfig, SimPolicy};
use seminv_harness::analysis::AnalysisOptions;
use seminv_harness::types::ConditionId;

use crate::CliError;

/// One model backend to run sessions against.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Built-in simulated agent: either a named preset or an explicit policy.
    Sim {
        model_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy: Option<SimPolicy>,
    },
    /// Live chat-completions endpoint.
    Http(HttpConfig),
}

impl ModelSpec {
    pub fn model_id(&self) -> &str {
        match self {
            ModelSpec::Sim { model_id, .. } => model_id,
            ModelSpec::Http(cfg) => &cfg.model_id,
        }
    }

    pub fn is_live(&self) -> bool {
        matches!(self, ModelSpec::Http(_))
    }

    /// Resolve the simulated policy (preset name or inline policy).
    pub fn sim_policy(&self) -> Result<Option<SimPolicy>, CliError> {
        match self {
            ModelSpec::Http(_) => Ok(None),
            ModelSpec::Sim { model_id, preset, policy } => {
                let resolved = match (policy, preset.as_deref()) {
                    (Some(p), _) => p.clone(),
                    (None, Some(name)) => preset_policy(name)?,
                    (None, None) => {
                        return Err(CliError::Config(format!(
                            "sim model {model_id:?} needs either \"preset\" or \"policy\""
                        )))
                    }
                };
                resolved.validate().map_err(|e| {
                    CliError::Config(format!("sim model {model_id:?}: {e}"))
                })?;
                Ok(Some(resolved))
            }
        }
    }
}

/// Look up a named simulated-agent preset.
pub fn preset_policy(name: &str) -> Result<SimPolicy, CliError> {
    match name {
        "susceptible" => Ok(SimPolicy::susceptible()),
        "invariant" => Ok(SimPolicy::invariant()),
        other => Err(CliError::Config(format!(
            "unknown sim preset {other:?} (expected \"susceptible\" or \"invariant\")"
        ))),
    }
}

fn default_runs() -> usize {
    10
}
fn default_budget() -> usize {
    50
}
fn default_retry_limit() -> usize {
    3
}

/// Session-loop and scheduling settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopSection {
    pub budget: usize,
    pub retry_limit: usize,
    pub temperature: f64,
    pub max_context_messages: Option<usize>,
    /// Sessions per (model, condition) cell.
    pub runs: usize,
    /// Per-run seeds are base_seed + run ordinal within the cell, so the same
    /// ordinal sees the same rejection sequence in every condition.
    pub base_seed: u64,
    /// Concurrent sessions; defaults to the CPU count (capped at 8 when any
    /// live endpoint is configured).
    pub parallel: Option<usize>,
}

impl Default for LoopSection {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            retry_limit: default_retry_limit(),
            temperature: 0.0,
            max_context_messages: None,
            runs: default_runs(),
            base_seed: 0,
            parallel: None,
        }
    }
}

fn default_store_root() -> PathBuf {
    PathBuf::from("store")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreSection {
    pub root: PathBuf,
}

impl Default for StoreSection {
    fn default() -> Self {
        Self { root: default_store_root() }
    }
}

/// Analysis knobs; mirrors [`AnalysisOptions`] plus output settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSection {
    pub include_flagged: bool,
    pub no_overlap: bool,
    pub resamples: usize,
    pub level: f64,
    pub bootstrap_seed: u64,
    /// Table/plot output directory; defaults to `<store root>/reports`.
    pub out_dir: Option<PathBuf>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let d = AnalysisOptions::default();
        Self {
            include_flagged: d.include_flagged,
            no_overlap: d.no_overlap,
            resamples: d.resamples,
            level: d.level,
            bootstrap_seed: d.bootstrap_seed,
            out_dir: None,
        }
    }
}

impl AnalysisSection {
    pub fn options(&self) -> AnalysisOptions {
        AnalysisOptions {
            include_flagged: self.include_flagged,
            no_overlap: self.no_overlap,
            resamples: self.resamples,
            level: self.level,
            bootstrap_seed: self.bootstrap_seed,
        }
    }
}

fn default_conditions() -> Vec<ConditionId> {
    ConditionId::ALL.to_vec()
}

/// The full experiment manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<ConditionId>,
    #[serde(default, rename = "loop")]
    pub loop_: LoopSection,
    #[serde(default)]
    pub store: StoreSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            conditions: default_conditions(),
            loop_: LoopSection::default(),
            store: StoreSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("invalid config {}: {e}", path.display()))
        })
    }

    /// A manifest holding only the named simulated preset (for `--sim`).
    pub fn for_sim_preset(name: &str) -> Result<Config, CliError> {
        preset_policy(name)?;
        Ok(Config {
            models: vec![ModelSpec::Sim {
                model_id: format!("sim-{name}"),
                preset: Some(name.to_string()),
                policy: None,
            }],
            ..Config::default()
        })
    }

    /// Validate cross-field requirements before any session starts: model
    /// list nonempty, sim policies resolvable, and live API keys present.
    pub fn preflight(&self) -> Result<(), CliError> {
        if self.models.is_empty() {
            return Err(CliError::Config(
                "no models configured: pass --sim <preset> or a config file with a models section"
                    .into(),
            ));
        }
        if self.conditions.is_empty() {
            return Err(CliError::Config("no conditions selected".into()));
        }
        for model in &self.models {
            model.sim_policy()?;
            if let ModelSpec::Http(http) = model {
                if std::env::var(&http.api_key_env).is_err() {
                    return Err(CliError::Config(format!(
                        "live model {:?} needs the {} environment variable",
                        http.model_id, http.api_key_env
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_manifest_fills_defaults() {
        let cfg: Config = serde_json::from_str(r#"{"models": []}"#).unwrap();
        assert_eq!(cfg.conditions, ConditionId::ALL.to_vec());
        assert_eq!(cfg.loop_.budget, 50);
        assert_eq!(cfg.loop_.runs, 10);
        assert_eq!(cfg.store.root, PathBuf::from("store"));
        assert_eq!(cfg.analysis.resamples, 10_000);
    }

    #[test]
    fn sim_models_resolve_presets_and_inline_policies() {
        let cfg: Config = serde_json::from_str(
            r#"{
                "models": [
                    {"kind": "sim", "model_id": "a", "preset": "susceptible"},
                    {"kind": "sim", "model_id": "b",
                     "policy": {"baseline_mu": 3.0, "drift_per_rejection": 0.1,
                                "relief_drop": 1.0, "relief_decay": 0.5,
                                "noise_sd": 0.2, "relief_use_rate": 0.8,
                                "susceptible": true}}
                ],
                "conditions": ["treatment"]
            }"#,
        )
        .unwrap();
        assert!(cfg.preflight().is_ok());
        let a = cfg.models[0].sim_policy().unwrap().unwrap();
        assert_eq!(a.relief_drop, 1.5);
        let b = cfg.models[1].sim_policy().unwrap().unwrap();
        assert_eq!(b.floor, 1, "floor defaults when omitted");
        assert_eq!(b.ceiling, 7);
    }

    #[test]
    fn unknown_presets_and_missing_policies_are_config_errors() {
        assert!(matches!(preset_policy("bogus"), Err(CliError::Config(_))));
        let cfg: Config = serde_json::from_str(
            r#"{"models": [{"kind": "sim", "model_id": "x"}]}"#,
        )
        .unwrap();
        assert!(matches!(cfg.preflight(), Err(CliError::Config(_))));
    }

    #[test]
    fn live_models_require_their_key_variable_up_front() {
        let cfg: Config = serde_json::from_str(
            r#"{"models": [{"kind": "http", "endpoint": "http://localhost:1",
                            "model_id": "m", "api_key_env": "SEMINV_TEST_ABSENT_KEY"}]}"#,
        )
        .unwrap();
        let err = cfg.preflight().unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("SEMINV_TEST_ABSENT_KEY"));
    }

    #[test]
    fn http_models_deserialize_with_defaults() {
        let cfg: Config = serde_json::from_str(
            r#"{"models": [{"kind": "http", "endpoint": "http://localhost:9",
                            "model_id": "live", "api_key_env": "K"}]}"#,
        )
        .unwrap();
        match &cfg.models[0] {
            ModelSpec::Http(h) => {
                assert_eq!(h.timeout_secs, 120);
                assert!(cfg.models[0].is_live());
            }
            other => panic!("expected http model, got {other:?}"),
        }
    }
}
