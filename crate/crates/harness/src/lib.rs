//! Experiment harness for the semantic-invariance test: an agentic loop around
//! an impossible data-submission task, five tool-framing conditions, a
//! deterministic JSONL store, and the before/after analyses that measure how
//! self-reported aversiveness moves around auxiliary-tool use.

pub mod adapters;
pub mod agent;
pub mod analysis;
pub mod environment;
pub mod report;
pub mod store;
pub mod types;
