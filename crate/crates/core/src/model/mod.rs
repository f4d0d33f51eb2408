//! Shared domain types: task instances, the event stream, trajectories and
//! attempt outcomes.

mod event_log;
mod instance;
mod patch;

pub use event_log::{
    count_event_lines, deserialize_event_log, read_event_log, serialize_event_log, EventLogHeader,
    EventLogWriter,
};
pub use instance::{load_suite, parse_suite, suite_fingerprint, TaskInstance, TEST_PLACEHOLDER};
pub use patch::is_empty_patch;

use std::collections::HashSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const MIN_TEMPERATURE: f64 = 0.0;
pub const MAX_TEMPERATURE: f64 = 2.0;

pub fn temperature_in_range(t: f64) -> bool {
    t.is_finite() && (MIN_TEMPERATURE..=MAX_TEMPERATURE).contains(&t)
}

/// The kind tag of an [`Event`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SystemPrompt,
    UserTask,
    AssistantMessage,
    ToolCall,
    ToolObservation,
    Finish,
    Error,
}

/// Kind-specific event content. Assistant-originated payloads carry the
/// 1-based turn (model call) that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    SystemPrompt {
        text: String,
    },
    /// The initial task message, and any later harness-authored user turns
    /// (e.g. the nudge after a plain-text reply).
    UserTask {
        text: String,
    },
    AssistantMessage {
        turn: u32,
        content: String,
    },
    ToolCall {
        turn: u32,
        call_id: String,
        tool: String,
        /// Raw argument text exactly as the model produced it.
        arguments: String,
    },
    ToolObservation {
        call_id: String,
        output: String,
        exit_code: Option<i32>,
        truncated: bool,
        /// Set when the call failed validation and never reached a tool.
        #[serde(default)]
        rejected: bool,
    },
    Finish {
        turn: u32,
        call_id: String,
        arguments: String,
    },
    Error {
        message: String,
    },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::SystemPrompt { .. } => EventKind::SystemPrompt,
            EventPayload::UserTask { .. } => EventKind::UserTask,
            EventPayload::AssistantMessage { .. } => EventKind::AssistantMessage,
            EventPayload::ToolCall { .. } => EventKind::ToolCall,
            EventPayload::ToolObservation { .. } => EventKind::ToolObservation,
            EventPayload::Finish { .. } => EventKind::Finish,
            EventPayload::Error { .. } => EventKind::Error,
        }
    }

    /// Turn number for assistant-originated payloads.
    pub fn turn(&self) -> Option<u32> {
        match self {
            EventPayload::AssistantMessage { turn, .. }
            | EventPayload::ToolCall { turn, .. }
            | EventPayload::Finish { turn, .. } => Some(*turn),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub index: usize,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn is_zero(&self) -> bool {
        self.prompt_tokens == 0 && self.completion_tokens == 0
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instance_id: String,
    pub events: Vec<Event>,
    pub assistant_turns: u32,
    pub temperature: f64,
    #[serde(default)]
    pub token_usage: TokenUsage,
}

impl Trajectory {
    pub fn new(instance_id: impl Into<String>, temperature: f64) -> Self {
        Trajectory {
            instance_id: instance_id.into(),
            events: Vec::new(),
            assistant_turns: 0,
            temperature,
            token_usage: TokenUsage::default(),
        }
    }

    /// Appends a payload with the next index, keeping `assistant_turns`
    /// in step with the turn numbers carried by the events.
    pub fn push(&mut self, payload: EventPayload) -> &Event {
        if let Some(turn) = payload.turn() {
            self.assistant_turns = self.assistant_turns.max(turn);
        }
        let index = self.events.len();
        self.events.push(Event {
            index,
            timestamp: Utc::now(),
            payload,
        });
        &self.events[index]
    }

    pub fn ends_with_finish(&self) -> bool {
        matches!(self.events.last().map(Event::kind), Some(EventKind::Finish))
    }

    /// Number of distinct assistant turns present in the event stream.
    pub fn count_turns(events: &[Event]) -> u32 {
        let mut last = None;
        let mut count = 0;
        for turn in events.iter().filter_map(|e| e.payload.turn()) {
            if last != Some(turn) {
                count += 1;
                last = Some(turn);
            }
        }
        count
    }

    /// Ordered (tool, arguments) pairs for every action the agent took,
    /// finish included.
    pub fn actions(&self) -> Vec<(String, String)> {
        self.events
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::ToolCall {
                    tool, arguments, ..
                } => Some((tool.clone(), arguments.clone())),
                EventPayload::Finish { arguments, .. } => {
                    Some((crate::agent::FINISH_TOOL.to_string(), arguments.clone()))
                }
                _ => None,
            })
            .collect()
    }

    pub fn rejected_calls(&self) -> usize {
        self.events
            .iter()
            .filter(|e| {
                matches!(
                    e.payload,
                    EventPayload::ToolObservation { rejected: true, .. }
                )
            })
            .count()
    }

    /// Checks the event-stream invariants. `max_iterations` additionally
    /// bounds the turn count when given.
    pub fn validate(&self, max_iterations: Option<u32>) -> Result<(), String> {
        if !temperature_in_range(self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        let mut pending: Vec<&str> = Vec::new();
        let mut seen_calls: HashSet<&str> = HashSet::new();
        let mut current_turn = 0u32;
        let mut finished = false;
        for (i, event) in self.events.iter().enumerate() {
            if event.index != i {
                return Err(format!("event {i} carries index {}", event.index));
            }
            if finished {
                return Err(format!("event {i} follows the terminal finish event"));
            }
            if let Some(turn) = event.payload.turn() {
                if turn != current_turn {
                    if turn != current_turn + 1 {
                        return Err(format!(
                            "event {i}: turn {turn} follows turn {current_turn}"
                        ));
                    }
                    if !pending.is_empty() {
                        return Err(format!(
                            "turn {turn} starts with unanswered tool calls {pending:?}"
                        ));
                    }
                    current_turn = turn;
                }
            }
            match &event.payload {
                EventPayload::ToolCall { call_id, .. } => {
                    if !seen_calls.insert(call_id) {
                        return Err(format!("duplicate call id {call_id}"));
                    }
                    pending.push(call_id);
                }
                EventPayload::ToolObservation { call_id, .. } => {
                    match pending.iter().position(|c| c == call_id) {
                        Some(p) => {
                            pending.remove(p);
                        }
                        None => return Err(format!("observation for unknown call {call_id}")),
                    }
                }
                EventPayload::Finish { .. } => {
                    if !pending.is_empty() {
                        return Err(format!("finish with unanswered tool calls {pending:?}"));
                    }
                    finished = true;
                }
                _ => {}
            }
        }
        let turns = Self::count_turns(&self.events);
        if turns != self.assistant_turns {
            return Err(format!(
                "assistant_turns is {} but events contain {turns}",
                self.assistant_turns
            ));
        }
        if let Some(max) = max_iterations {
            if turns > max {
                return Err(format!("{turns} turns exceeds max_iterations {max}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptStatus {
    Finished,
    IterationLimit,
    AgentError,
    InfraError,
}

impl AttemptStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttemptStatus::Finished => "finished",
            AttemptStatus::IterationLimit => "iteration_limit",
            AttemptStatus::AgentError => "agent_error",
            AttemptStatus::InfraError => "infra_error",
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self, AttemptStatus::AgentError | AttemptStatus::InfraError)
    }
}

/// Tri-state verification outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolved {
    Resolved,
    Unresolved,
    #[default]
    NotEvaluated,
}

impl Resolved {
    pub fn is_resolved(&self) -> bool {
        matches!(self, Resolved::Resolved)
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Resolved::Resolved
        } else {
            Resolved::Unresolved
        }
    }
}

/// One full episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt_index: u32,
    pub trajectory: Trajectory,
    pub patch: String,
    pub status: AttemptStatus,
    pub resolved: Resolved,
    pub duration_seconds: f64,
}

impl AttemptRecord {
    pub fn patch_is_empty(&self) -> bool {
        is_empty_patch(&self.patch)
    }

    pub fn summary(&self, instance_id: &str) -> AttemptSummary {
        AttemptSummary {
            instance_id: instance_id.to_string(),
            attempt_index: self.attempt_index,
            temperature: self.trajectory.temperature,
            status: self.status,
            resolved: self.resolved,
            patch_empty: self.patch_is_empty(),
            patch: self.patch.clone(),
            assistant_turns: self.trajectory.assistant_turns,
            infra_retries: 0,
            duration_seconds: self.duration_seconds,
        }
    }
}

/// The persisted, trajectory-free form of an attempt. The full event
/// stream lives next to it on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub instance_id: String,
    pub attempt_index: u32,
    pub temperature: f64,
    pub status: AttemptStatus,
    pub resolved: Resolved,
    pub patch_empty: bool,
    pub patch: String,
    pub assistant_turns: u32,
    #[serde(default)]
    pub infra_retries: u32,
    #[serde(default)]
    pub duration_seconds: f64,
}
