//! Deterministic backend that pops canned responses from a queue.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    check_request, Backend, ChatMessage, ChatSession, Completion, LlmError, SamplingParams,
    SessionKey, ToolCallRequest, ToolSpec,
};
use crate::model::TokenUsage;

fn empty_object() -> Value {
    json!({})
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCall {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub name: String,
    /// A JSON string is sent verbatim as the raw argument text, which is how
    /// scripts exercise malformed arguments.
    #[serde(default = "empty_object")]
    pub arguments: Value,
}

impl ScriptedCall {
    fn raw_arguments(&self) -> String {
        match &self.arguments {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ScriptedCall>,
}

impl ScriptedTurn {
    pub fn call(name: &str, arguments: Value) -> Self {
        ScriptedTurn {
            content: String::new(),
            tool_calls: vec![ScriptedCall {
                id: None,
                name: name.to_string(),
                arguments,
            }],
        }
    }

    pub fn bash(command: &str) -> Self {
        Self::call("bash", json!({ "command": command }))
    }

    pub fn finish() -> Self {
        Self::call("finish", json!({}))
    }

    pub fn text(content: &str) -> Self {
        ScriptedTurn {
            content: content.to_string(),
            tool_calls: Vec::new(),
        }
    }

    pub fn str_replace(path: &str, old: &str, new: &str) -> Self {
        Self::call(
            "file_edit",
            json!({ "action": "str_replace", "path": path, "old_str": old, "new_str": new }),
        )
    }
}

/// A queue of turns selected by instance and/or attempt. More specific
/// rules win; among equally specific rules the first listed wins.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    pub turns: Vec<ScriptedTurn>,
    /// Restart the queue when it runs out instead of failing.
    #[serde(default)]
    pub cycle: bool,
}

impl ScriptRule {
    fn specificity(&self, key: &SessionKey) -> Option<u8> {
        let inst = match &self.instance {
            Some(id) if id != &key.instance_id => return None,
            Some(_) => 2,
            None => 0,
        };
        let att = match self.attempt {
            Some(a) if a != key.attempt_index => return None,
            Some(_) => 1,
            None => 0,
        };
        Some(inst + att)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend { rules }
    }

    /// One queue shared by every session (each session gets a fresh copy).
    pub fn from_queue(turns: Vec<ScriptedTurn>, cycle: bool) -> Self {
        Self::new(vec![ScriptRule {
            turns,
            cycle,
            ..Default::default()
        }])
    }

    fn select(&self, key: &SessionKey) -> Option<&ScriptRule> {
        let mut best: Option<(u8, &ScriptRule)> = None;
        for rule in &self.rules {
            if let Some(s) = rule.specificity(key) {
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, rule));
                }
            }
        }
        best.map(|(_, r)| r)
    }
}

impl Backend for ScriptedBackend {
    fn model_name(&self) -> &str {
        "scripted"
    }

    fn open_session(&self, key: &SessionKey) -> Result<Box<dyn ChatSession>, LlmError> {
        let (turns, cycle) = self
            .select(key)
            .map(|r| (r.turns.clone(), r.cycle))
            .unwrap_or_default();
        Ok(Box::new(ScriptedSession {
            turns,
            cycle,
            served: 0,
        }))
    }
}

struct ScriptedSession {
    turns: Vec<ScriptedTurn>,
    cycle: bool,
    served: usize,
}

impl ChatSession for ScriptedSession {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        _tools: &[ToolSpec],
        params: &SamplingParams,
    ) -> Result<Completion, LlmError> {
        check_request(messages, params)?;
        if self.turns.is_empty() || (!self.cycle && self.served >= self.turns.len()) {
            return Err(LlmError::QueueExhausted {
                consumed: self.served,
            });
        }
        let turn = &self.turns[self.served % self.turns.len()];
        self.served += 1;
        let tool_calls = turn
            .tool_calls
            .iter()
            .enumerate()
            .map(|(i, c)| ToolCallRequest {
                id: c
                    .id
                    .clone()
                    .unwrap_or_else(|| format!("call_{}_{}", self.served, i)),
                name: c.name.clone(),
                arguments: c.raw_arguments(),
            })
            .collect();
        Ok(Completion {
            message: ChatMessage::assistant(turn.content.clone(), tool_calls),
            usage: TokenUsage::default(),
        })
    }
}
