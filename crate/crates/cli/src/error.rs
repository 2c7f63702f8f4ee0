use serde::Serialize;
use thiserror::Error;

use vrcert_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const INFEASIBLE: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {message}", field.as_ref().map(|f| format!(" in `{f}`")).unwrap_or_default())]
    Config { field: Option<String>, message: String },

    #[error("numeric abort at t = {time:e} s: {message}")]
    NumericAbort { time: f64, message: String },

    #[error("no certificate found: {message}")]
    Infeasible {
        message: String,
        report: Option<serde_json::Value>,
    },

    #[error("{0}")]
    Io(String),

    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Serialize)]
struct ErrorDoc<'a> {
    error: ErrorBody<'a>,
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    kind: &'static str,
    exit_code: i32,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a serde_json::Value>,
}

impl CliError {
    pub fn config(field: Option<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field,
            message: message.into(),
        }
    }

    pub fn field(field: &str, message: impl Into<String>) -> Self {
        CliError::config(Some(field.to_string()), message)
    }

    pub fn io(what: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Io(format!("{what}: {e}"))
    }

    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { field, reason } => CliError::Config {
                field: Some(field),
                message: reason,
            },
            CoreError::SectorViolation { branch, .. } => CliError::Config {
                field: Some(format!("branches[{branch}]")),
                message: e.to_string(),
            },
            CoreError::NumericAbort { time, reason } => CliError::NumericAbort { time, message: reason },
            CoreError::Dimension(_) | CoreError::NonFinite(_) | CoreError::Scenario(_) | CoreError::Mismatch(_) => {
                CliError::config(None, e.to_string())
            }
            CoreError::Assembly(_) | CoreError::InvalidCertificate(_) => CliError::Internal(e.to_string()),
        }
    }

    /// Qualifies the field path with a config section.
    pub fn prefixed(self, section: &str) -> Self {
        match self {
            CliError::Config { field, message } => CliError::Config {
                field: Some(match field {
                    Some(f) => format!("{section}.{f}"),
                    None => section.to_string(),
                }),
                message,
            },
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::NumericAbort { .. } => exit::NUMERIC,
            CliError::Infeasible { .. } => exit::INFEASIBLE,
            CliError::Io(_) | CliError::Internal(_) => exit::FAILURE,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::NumericAbort { .. } => "numeric_abort",
            CliError::Infeasible { .. } => "infeasible",
            CliError::Io(_) => "io",
            CliError::Internal(_) => "internal",
        }
    }

    /// Machine-readable error document.
    pub fn to_json(&self) -> String {
        let (field, time, report) = match self {
            CliError::Config { field, .. } => (field.as_deref(), None, None),
            CliError::NumericAbort { time, .. } => (None, Some(*time), None),
            CliError::Infeasible { report, .. } => (None, None, report.as_ref()),
            _ => (None, None, None),
        };
        let doc = ErrorDoc {
            error: ErrorBody {
                kind: self.kind(),
                exit_code: self.exit_code(),
                message: self.to_string(),
                field,
                time,
                report,
            },
        };
        serde_json::to_string(&doc).expect("error document serializes")
    }
}
