use std::path::Path;

use scenariokit::{Finding, ParseError, PipelineError, StoreError, ValidationReport};
use serde::Serialize;

/// Printed to stderr as one JSON line.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub findings: Option<Vec<Finding>>,
    #[serde(skip)]
    pub exit: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: "invalid_request".into(), message: message.into(), findings: None, exit: 2 }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError { code: "io_error".into(), message: format!("{}: {e}", path.display()), findings: None, exit: 1 }
    }

    pub fn parse(path: &Path, e: ParseError) -> Self {
        CliError { code: "parse_error".into(), message: format!("{}: {e}", path.display()), findings: None, exit: 2 }
    }

    pub fn findings(code: &str, message: String, report: ValidationReport) -> Self {
        CliError { code: code.into(), message, findings: Some(report.findings), exit: 2 }
    }

    pub fn line(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| self.message.clone())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError {
            code: e.code().into(),
            message: e.to_string(),
            findings: e.findings().map(|r| r.findings.clone()),
            exit: e.exit_code(),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        PipelineError::from(e).into()
    }
}
