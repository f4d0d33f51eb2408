//! Mapping between the recorded event stream and chat messages.
//!
//! The agent loop derives every request from its own event stream through
//! [`conversation_from_events`], so a recorded log fully determines the
//! conversation the model saw. Replay relies on this.

use super::{ChatMessage, ToolCallRequest};
use crate::model::{Event, EventPayload};

/// Text the model sees for a tool observation.
pub fn observation_content(output: &str, exit_code: Option<i32>) -> String {
    match exit_code {
        Some(code) => {
            let sep = if output.is_empty() || output.ends_with('\n') {
                ""
            } else {
                "\n"
            };
            format!("{output}{sep}[exit code: {code}]")
        }
        None => output.to_string(),
    }
}

fn call_request(payload: &EventPayload) -> Option<ToolCallRequest> {
    match payload {
        EventPayload::ToolCall {
            call_id,
            tool,
            arguments,
            ..
        } => Some(ToolCallRequest {
            id: call_id.clone(),
            name: tool.clone(),
            arguments: arguments.clone(),
        }),
        EventPayload::Finish {
            call_id, arguments, ..
        } => Some(ToolCallRequest {
            id: call_id.clone(),
            name: crate::agent::FINISH_TOOL.to_string(),
            arguments: arguments.clone(),
        }),
        _ => None,
    }
}

/// Groups the stream into messages. Each turn number yields one assistant
/// message holding its text and every call it issued; observations follow
/// as tool messages in recorded order. Error events are not part of the
/// conversation.
pub fn conversation_from_events(events: &[Event]) -> Vec<ChatMessage> {
    let mut messages = Vec::new();
    let mut pending_tools: Vec<ChatMessage> = Vec::new();
    let mut open_turn: Option<(u32, usize)> = None;
    for event in events {
        let payload = &event.payload;
        if let Some(turn) = payload.turn() {
            let slot = match open_turn {
                Some((t, slot)) if t == turn => slot,
                _ => {
                    messages.append(&mut pending_tools);
                    messages.push(ChatMessage::assistant("", Vec::new()));
                    open_turn = Some((turn, messages.len() - 1));
                    messages.len() - 1
                }
            };
            if let EventPayload::AssistantMessage { content, .. } = payload {
                messages[slot].content.push_str(content);
            } else if let Some(call) = call_request(payload) {
                messages[slot].tool_calls.push(call);
            }
            continue;
        }
        match payload {
            EventPayload::SystemPrompt { text } => {
                messages.append(&mut pending_tools);
                messages.push(ChatMessage::system(text.clone()));
            }
            EventPayload::UserTask { text } => {
                messages.append(&mut pending_tools);
                messages.push(ChatMessage::user(text.clone()));
                open_turn = None;
            }
            EventPayload::ToolObservation {
                call_id,
                output,
                exit_code,
                ..
            } => pending_tools.push(ChatMessage::tool(
                call_id.clone(),
                observation_content(output, *exit_code),
            )),
            _ => {}
        }
    }
    messages.append(&mut pending_tools);
    messages
}

/// For each assistant turn, the conversation prefix that preceded it and
/// the assistant message it produced.
pub fn turn_responses(events: &[Event]) -> Vec<(Vec<ChatMessage>, ChatMessage)> {
    let conversation = conversation_from_events(events);
    conversation
        .iter()
        .enumerate()
        .filter(|(_, m)| m.role == super::Role::Assistant)
        .map(|(i, m)| (conversation[..i].to_vec(), m.clone()))
        .collect()
}
