//! The de-facto chat-completions wire shape.

use serde_json::{json, Value};

use super::{ChatMessage, Completion, LlmError, Role, SamplingParams, ToolCallRequest, ToolSpec};
use crate::model::TokenUsage;

/// One message in wire form.
pub fn message_json(m: &ChatMessage) -> Value {
    let mut obj = json!({ "role": m.role.as_str() });
    if m.role == Role::Assistant && m.content.is_empty() && !m.tool_calls.is_empty() {
        obj["content"] = Value::Null;
    } else {
        obj["content"] = json!(m.content);
    }
    if !m.tool_calls.is_empty() {
        obj["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": c.arguments },
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        obj["tool_call_id"] = json!(id);
    }
    obj
}

/// One tool declaration in wire form.
pub fn tool_json(t: &ToolSpec) -> Value {
    json!({
        "type": "function",
        "function": {
            "name": t.name,
            "description": t.description,
            "parameters": t.json_schema(),
        }
    })
}

pub fn request_body(
    model: &str,
    messages: &[ChatMessage],
    tools: &[ToolSpec],
    params: &SamplingParams,
) -> Value {
    let mut body = json!({
        "model": model,
        "messages": messages.iter().map(message_json).collect::<Vec<_>>(),
        "temperature": params.temperature,
        "max_tokens": params.max_output_tokens,
    });
    if !tools.is_empty() {
        body["tools"] = tools.iter().map(tool_json).collect();
        body["tool_choice"] = json!("auto");
    }
    if !params.stop_sequences.is_empty() {
        body["stop"] = json!(params.stop_sequences);
    }
    body
}

pub fn response_body(model: &str, completion: &Completion) -> Value {
    let finish_reason = if completion.message.tool_calls.is_empty() {
        "stop"
    } else {
        "tool_calls"
    };
    json!({
        "model": model,
        "choices": [{
            "index": 0,
            "message": message_json(&completion.message),
            "finish_reason": finish_reason,
        }],
        "usage": {
            "prompt_tokens": completion.usage.prompt_tokens,
            "completion_tokens": completion.usage.completion_tokens,
        }
    })
}

/// Extracts `choices[0].message` and usage. Tool-call arguments delivered
/// as JSON objects rather than strings are re-serialized.
pub fn parse_response(body: &Value) -> Result<Completion, LlmError> {
    let message = body
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| LlmError::Protocol("response has no choices[0].message".into()))?;
    let content = match message.get("content") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => {
            return Err(LlmError::Protocol(format!(
                "message content is not a string: {other}"
            )))
        }
    };
    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").filter(|v| !v.is_null()) {
        let calls = calls
            .as_array()
            .ok_or_else(|| LlmError::Protocol("tool_calls is not an array".into()))?;
        for (i, call) in calls.iter().enumerate() {
            let function = call
                .get("function")
                .ok_or_else(|| LlmError::Protocol(format!("tool_calls[{i}] has no function")))?;
            let name = function
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| LlmError::Protocol(format!("tool_calls[{i}] has no name")))?;
            let arguments = match function.get("arguments") {
                None | Some(Value::Null) => "{}".to_string(),
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
            };
            let id = call
                .get("id")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("call_{i}"));
            tool_calls.push(ToolCallRequest {
                id,
                name: name.to_string(),
                arguments,
            });
        }
    }
    let usage = body
        .get("usage")
        .map(|u| TokenUsage {
            prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: u
                .get("completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or(0),
        })
        .unwrap_or_default();
    Ok(Completion {
        message: ChatMessage::assistant(content, tool_calls),
        usage,
    })
}
