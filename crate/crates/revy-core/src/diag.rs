//! Errors and machine-readable diagnostics.

use crate::span::{SourceMap, Span};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    /// Malformed `#@` specification.
    Annotation,
    Type,
    /// Structural rule violations (e.g. a call in a constructor).
    Structure,
    Internal,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::Syntax => write!(f, "syntax error"),
            ErrorKind::Annotation => write!(f, "annotation error"),
            ErrorKind::Type => write!(f, "type error"),
            ErrorKind::Structure => write!(f, "structural error"),
            ErrorKind::Internal => write!(f, "internal error"),
        }
    }
}

/// A frontend error with source location.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{kind}: {message}")]
pub struct Error {
    pub kind: ErrorKind,
    pub message: String,
    pub span: Span,
}

impl Error {
    pub fn new(kind: ErrorKind, message: impl Into<String>, span: Span) -> Self {
        Error {
            kind,
            message: message.into(),
            span,
        }
    }

    pub fn render(&self, sources: &SourceMap) -> String {
        format!("{}: {}: {}", sources.describe(self.span), self.kind, self.message)
    }
}

pub type Errors = Vec<Error>;

/// Schema version of the JSON diagnostics output.
pub const DIAGNOSTICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanInfo {
    pub file: String,
    pub line: usize,
    pub col: usize,
}

impl SpanInfo {
    pub fn from_span(span: Span, sources: &SourceMap) -> Option<SpanInfo> {
        if span.is_dummy() {
            return None;
        }
        let (file, line, col) = sources.line_col(span);
        Some(SpanInfo { file, line, col })
    }
}

/// One machine-readable finding: a frontend error, a failed obligation, or an
/// interpreter violation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Obligation kind, violation kind, or frontend error class.
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<SpanInfo>,
    /// Originating rule, for teachability (e.g. "transfer ghost-command rule").
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    /// Two-state witness or interpreter trace.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub version: u32,
    pub tool: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl DiagnosticsReport {
    pub fn new(diagnostics: Vec<Diagnostic>) -> Self {
        DiagnosticsReport {
            version: DIAGNOSTICS_SCHEMA_VERSION,
            tool: "revy".to_string(),
            diagnostics,
        }
    }
}
