use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde_json::json;

use super::{wire, ChatMessage, ChatSession, Completion, LlmError, SamplingParams, ToolSpec};

/// Wraps a session and appends every request/response pair, in wire form,
/// to a line-delimited audit log.
pub struct AuditedSession {
    inner: Box<dyn ChatSession>,
    model: String,
    log: File,
    calls: usize,
}

impl AuditedSession {
    pub fn create(inner: Box<dyn ChatSession>, model: &str, path: &Path) -> Result<Self, LlmError> {
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Audit(format!("{}: {e}", path.display())))?;
        Ok(AuditedSession {
            inner,
            model: model.to_string(),
            log,
            calls: 0,
        })
    }
}

impl ChatSession for AuditedSession {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        params: &SamplingParams,
    ) -> Result<Completion, LlmError> {
        self.calls += 1;
        let request = wire::request_body(&self.model, messages, tools, params);
        let result = self.inner.complete(messages, tools, params);
        let record = match &result {
            Ok(c) => json!({
                "call": self.calls,
                "request": request,
                "response": wire::response_body(&self.model, c),
            }),
            Err(e) => json!({ "call": self.calls, "request": request, "error": e.to_string() }),
        };
        let mut line = record.to_string();
        line.push('\n');
        self.log
            .write_all(line.as_bytes())
            .map_err(|e| LlmError::Audit(e.to_string()))?;
        result
    }
}
