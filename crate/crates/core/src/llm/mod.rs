//! Chat-completion backends with tool calling.
//!
//! A [`Backend`] is shared by all workers and hands out one [`ChatSession`]
//! per episode. Sessions are where per-episode state lives: scripted queues,
//! replay cursors, audit logs.

mod audit;
mod conversation;
mod descriptor;
mod http;
mod replay;
mod scripted;
pub mod wire;

pub use audit::AuditedSession;
pub use conversation::{conversation_from_events, observation_content, turn_responses};
pub use descriptor::{make_backend, parse_descriptor, BackendDescriptor, HttpSettings};
pub use http::HttpBackend;
pub use replay::ReplayBackend;
pub use scripted::{ScriptRule, ScriptedBackend, ScriptedCall, ScriptedTurn};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{temperature_in_range, TokenUsage};

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub id: String,
    pub name: String,
    /// Argument text as produced by the model; usually a JSON object.
    pub arguments: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>, tool_calls: Vec<ToolCallRequest>) -> Self {
        ChatMessage {
            tool_calls,
            ..Self::plain(Role::Assistant, content)
        }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage {
            tool_call_id: Some(call_id.into()),
            ..Self::plain(Role::Tool, content)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl SamplingParams {
    pub fn with_temperature(temperature: f64) -> Self {
        SamplingParams {
            temperature,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            stop_sequences: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !temperature_in_range(self.temperature) {
            return Err(LlmError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::Config("max_output_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    String,
    Integer,
    Boolean,
}

impl ParamKind {
    pub fn json_type(&self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Integer => "integer",
            ParamKind::Boolean => "boolean",
        }
    }
}

/// When a parameter must be present.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Requirement {
    Always,
    Optional,
    /// Required when another string parameter takes one of the listed values.
    When {
        param: String,
        values: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub description: String,
    pub kind: ParamKind,
    pub requirement: Requirement,
    /// Allowed values for string parameters; empty means unconstrained.
    #[serde(default)]
    pub allowed: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
}

impl ToolSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// JSON-schema object for the wire. Conditional requirements are
    /// described in the parameter text and enforced on our side.
    pub fn json_schema(&self) -> serde_json::Value {
        let mut props = serde_json::Map::new();
        for p in &self.parameters {
            let mut prop = serde_json::json!({
                "type": p.kind.json_type(),
                "description": p.description,
            });
            if !p.allowed.is_empty() {
                prop["enum"] = serde_json::json!(p.allowed);
            }
            props.insert(p.name.clone(), prop);
        }
        let required: Vec<&str> = self
            .parameters
            .iter()
            .filter(|p| p.requirement == Requirement::Always)
            .map(|p| p.name.as_str())
            .collect();
        serde_json::json!({
            "type": "object",
            "properties": props,
            "required": required,
        })
    }
}

/// One model response plus the token counts the backend reported.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub message: ChatMessage,
    pub usage: TokenUsage,
}

impl Completion {
    /// Tool names in the response that the request did not declare.
    pub fn undeclared_tools(&self, tools: &[ToolSpec]) -> Vec<String> {
        self.message
            .tool_calls
            .iter()
            .filter(|c| !tools.iter().any(|t| t.name == c.name))
            .map(|c| c.name.clone())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SessionKey {
    pub instance_id: String,
    pub attempt_index: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("server returned status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("scripted queue exhausted after {consumed} responses")]
    QueueExhausted { consumed: usize },
    #[error("replay mismatch at turn {turn}: {detail}")]
    ReplayMismatch { turn: usize, detail: String },
    #[error("backend config error: {0}")]
    Config(String),
    #[error("audit log error: {0}")]
    Audit(String),
}

impl LlmError {
    /// Whether the network layer should retry the request.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Timeout(_) | LlmError::Transport(_) => true,
            LlmError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatSession: Send {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        params: &SamplingParams,
    ) -> Result<Completion, LlmError>;
}

pub trait Backend: Send + Sync {
    /// Model name as it appears on the wire and in audit logs.
    fn model_name(&self) -> &str;

    fn open_session(&self, key: &SessionKey) -> Result<Box<dyn ChatSession>, LlmError>;
}

pub(crate) fn check_request(
    messages: &[ChatMessage],
    params: &SamplingParams,
) -> Result<(), LlmError> {
    params.validate()?;
    match messages.first() {
        Some(m) if m.role == Role::System => Ok(()),
        _ => Err(LlmError::Config(
            "conversation must start with a system message".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transient_classification() {
        assert!(LlmError::Http {
            status: 503,
            body: String::new()
        }
        .is_transient());
        assert!(LlmError::Http {
            status: 429,
            body: String::new()
        }
        .is_transient());
        assert!(!LlmError::Http {
            status: 400,
            body: String::new()
        }
        .is_transient());
        assert!(LlmError::Timeout("t".into()).is_transient());
        assert!(!LlmError::QueueExhausted { consumed: 0 }.is_transient());
    }

    #[test]
    fn requests_must_open_with_system() {
        let p = SamplingParams::with_temperature(0.0);
        assert!(check_request(&[ChatMessage::user("hi")], &p).is_err());
        assert!(check_request(&[ChatMessage::system("s")], &p).is_ok());
        let hot = SamplingParams::with_temperature(2.5);
        assert!(check_request(&[ChatMessage::system("s")], &hot).is_err());
    }

    #[test]
    fn schema_lists_only_unconditional_requirements() {
        let spec = ToolSpec {
            name: "t".into(),
            description: "d".into(),
            parameters: vec![
                ParamSpec {
                    name: "a".into(),
                    description: String::new(),
                    kind: ParamKind::String,
                    requirement: Requirement::Always,
                    allowed: vec!["x".into()],
                },
                ParamSpec {
                    name: "b".into(),
                    description: String::new(),
                    kind: ParamKind::Integer,
                    requirement: Requirement::When {
                        param: "a".into(),
                        values: vec!["x".into()],
                    },
                    allowed: vec![],
                },
            ],
        };
        let schema = spec.json_schema();
        assert_eq!(schema["required"], serde_json::json!(["a"]));
        assert_eq!(schema["properties"]["a"]["enum"], serde_json::json!(["x"]));
        assert_eq!(schema["properties"]["b"]["type"], "integer");
    }
}
