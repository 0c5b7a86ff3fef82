use std::fmt;

use serde::Serialize;
use srbridge_core::Error as CoreError;

/// Failure of a run, mapped onto the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Data { line: Option<u64>, message: String },
    Numerical { message: String, worst_quad_err: Option<f64> },
    Io(String),
}

#[derive(Serialize)]
struct Structured<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_quad_err: Option<f64>,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(line: Option<u64>, msg: impl Into<String>) -> Self {
        CliError::Data { line, message: msg.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Numerical { .. } => 4,
        }
    }

    /// Classify a core error raised while setting up from the configuration.
    pub fn from_config(e: CoreError) -> Self {
        match e {
            e if e.is_numerical() => Self::numerical(e),
            CoreError::Io(m) => CliError::Io(m),
            e => CliError::Config(e.to_string()),
        }
    }

    /// Classify a core error raised while processing the observation on
    /// `line` (or the data as a whole).
    pub fn from_data(e: CoreError, line: Option<u64>) -> Self {
        match e {
            CoreError::NonConvergence { .. } => Self::numerical(e),
            // a reading the prior cannot produce is a data problem
            CoreError::IllConditioned(m) if line.is_some() => CliError::Data { line, message: m },
            CoreError::IllConditioned(_) => Self::numerical(e),
            CoreError::Domain(m) => CliError::Data { line, message: m },
            CoreError::Io(m) => CliError::Io(m),
            e => CliError::Config(e.to_string()),
        }
    }

    fn numerical(e: CoreError) -> Self {
        let worst_quad_err = match e {
            CoreError::NonConvergence { rel_error, .. } => Some(rel_error),
            _ => None,
        };
        CliError::Numerical { message: e.to_string(), worst_quad_err }
    }

    /// One JSON line for stderr.
    pub fn structured(&self) -> String {
        let s = match self {
            CliError::Config(m) => Structured { error: "config", message: m, line: None, worst_quad_err: None },
            CliError::Data { line, message } => Structured { error: "data", message, line: *line, worst_quad_err: None },
            CliError::Numerical { message, worst_quad_err } => {
                Structured { error: "numerical", message, line: None, worst_quad_err: *worst_quad_err }
            }
            CliError::Io(m) => Structured { error: "io", message: m, line: None, worst_quad_err: None },
        };
        serde_json::to_string(&s).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", s.error))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data { line: Some(l), message } => write!(f, "data error at line {l}: {message}"),
            CliError::Data { line: None, message } => write!(f, "data error: {message}"),
            CliError::Numerical { message, worst_quad_err: Some(q) } => {
                write!(f, "numerical failure: {message} (worst quadrature error {q:e})")
            }
            CliError::Numerical { message, .. } => write!(f, "numerical failure: {message}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
