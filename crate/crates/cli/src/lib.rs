//! Scenario runner behind the `hybridqos` command.

pub mod experiment;
pub mod scenario;
pub mod selftest;

use std::fmt;

pub use experiment::{run_scenario, validate_scenario, RunOptions};
pub use scenario::Scenario;

/// Command failures, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad scenario or I/O problem (exit 1).
    Config { path: String, message: String },
    /// A solver or simulation failed (exit 2).
    Numerical(hybridqos::Error),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { path, message } => write!(f, "config error at `{path}`: {message}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hybridqos::Error> for CliError {
    fn from(e: hybridqos::Error) -> Self {
        match e {
            hybridqos::Error::InvalidParameter { name, reason } => CliError::config(name, reason),
            hybridqos::Error::Config { path, message } => CliError::Config { path, message },
            hybridqos::Error::Io(m) => CliError::config("<io>", m),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config("<io>", e.to_string())
    }
}

/// Formats a CSV cell. Rust's shortest round-trip formatting keeps output
/// stable across runs.
pub fn cell(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

/// Threads requested through `HYBRIDQOS_THREADS`, if set to a positive
/// number.
pub fn thread_cap() -> Option<usize> {
    std::env::var("HYBRIDQOS_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Sizes the global worker pool. Later calls are ignored.
pub fn init_threads() {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        b = b.num_threads(n);
    }
    let _ = b.build_global();
}
