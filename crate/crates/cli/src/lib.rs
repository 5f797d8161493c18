//! Library surface of the `seminv` command-line tool.
//!
//! The binary in `main.rs` is a thin argument-parsing shell; everything it
//! does is reachable from here so integration tests can drive the same code
//! paths in-process:
//!
//! * [`config`] — the JSON experiment configuration and its preflight checks,
//! * [`executor`] — deterministic seed planning and (optionally parallel)
//!   session execution,
//! * [`analyze`] — mapping a stored corpus to rendered table files,
//! * [`power`] — Monte Carlo power and null-calibration sweeps.
//!
//! # Exit codes
//!
//! Every failure the tool can report is a [`CliError`], and each variant owns
//! one process exit code:
//!
//! | code | variant | meaning |
//! |------|---------------------|-------------------------------------------|
//! | 1 | [`CliError::Usage`], [`CliError::Config`] | bad flags or bad configuration |
//! | 2 | [`CliError::Data`] | corpus/store problems: unreadable runs, empty cells, write failures |
//! | 3 | [`CliError::Adapter`] | a model backend failed after retries |
//!
//! Success is exit 0. The mapping is part of the CLI contract and is relied
//! on by scripts that distinguish "you called me wrong" from "your data is
//! bad" from "the model endpoint is down".

pub mod analyze;
pub mod config;
pub mod executor;
pub mod power;

/// Everything that can go wrong between argument parsing and a finished
/// command, partitioned by which exit code the failure owes the caller.
#[derive(Debug)]
pub enum CliError {
    /// Arguments that parse but make no sense together (exit 1).
    Usage(String),
    /// A configuration file or preset that cannot be used (exit 1).
    Config(String),
    /// A store or corpus problem: missing runs, empty cells, IO (exit 2).
    Data(String),
    /// A model backend that failed to produce usable turns (exit 3).
    Adapter(String),
}

impl CliError {
    /// The process exit code this error must terminate with.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Adapter(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::Config(msg) => write!(f, "config: {msg}"),
            CliError::Data(msg) => write!(f, "data: {msg}"),
            CliError::Adapter(msg) => write!(f, "adapter: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_partition_the_variants() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Data("x".into()).exit_code(), 2);
        assert_eq!(CliError::Adapter("x".into()).exit_code(), 3);
    }

    #[test]
    fn display_prefixes_the_failure_class() {
        assert_eq!(CliError::Data("no runs".into()).to_string(), "data: no runs");
        assert_eq!(CliError::Usage("bad flag".into()).to_string(), "usage: bad flag");
    }
}
