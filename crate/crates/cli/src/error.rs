use std::fmt;
use std::io;

use serde::Serialize;
use serde_json::{json, Value};
use snipsearch::eval::human::HumanStudyError;
use snipsearch::eval::{EvalError, TemplateError};
use snipsearch::fusion::FusionError;
use snipsearch::{IngestError, LayoutError, SearchError};

/// Structured failure shared by the CLI (one JSON line on stderr) and the
/// HTTP service (response body).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

impl CliError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn invalid_argument(message: impl Into<String>) -> Self {
        Self::new("invalid_argument", message)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        let code = if e.kind() == io::ErrorKind::InvalidData {
            "invalid_data"
        } else {
            "io_failure"
        };
        Self::new(code, e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match &e {
            IngestError::MalformedAnnotation { record, reason } => Self::new("malformed_annotation", e.to_string())
                .with_detail(json!({ "record": record, "reason": reason })),
            IngestError::IoFailure(_) => Self::new("io_failure", e.to_string()),
            IngestError::CorruptIndex(_) => Self::new("corrupt_index", e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        let detail = match &e {
            SearchError::UnknownDocument(d) => json!({ "doc_id": d }),
            SearchError::UnknownPage(d, p) => json!({ "doc_id": d, "page_no": p }),
            _ => Value::Null,
        };
        Self::new(e.code(), e.to_string()).with_detail(detail)
    }
}

impl From<LayoutError> for CliError {
    fn from(e: LayoutError) -> Self {
        SearchError::from(e).into()
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        Self::new("eval_error", e.to_string())
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        Self::new("template_error", e.to_string())
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        Self::new("fusion_error", e.to_string())
    }
}

impl From<HumanStudyError> for CliError {
    fn from(e: HumanStudyError) -> Self {
        Self::new("invalid_count_table", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("invalid_data", e.to_string())
    }
}
