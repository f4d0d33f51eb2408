//! Backend that re-emits the assistant turns of a recorded event log and
//! refuses to continue once the live conversation drifts from the record.

use std::path::{Path, PathBuf};

use super::{
    check_request, turn_responses, Backend, ChatMessage, ChatSession, Completion, LlmError,
    SamplingParams, SessionKey, ToolSpec,
};
use crate::model::{read_event_log, TokenUsage};

/// `source` is either a single event log, used for every session, or a run
/// directory laid out as `instances/<id>/attempt<k>/events.jsonl`.
#[derive(Clone, Debug)]
pub struct ReplayBackend {
    source: PathBuf,
}

impl ReplayBackend {
    pub fn new(source: impl Into<PathBuf>) -> Self {
        ReplayBackend {
            source: source.into(),
        }
    }

    fn log_for(&self, key: &SessionKey) -> PathBuf {
        if self.source.is_file() {
            return self.source.clone();
        }
        crate::layout::attempt_dir(&self.source, &key.instance_id, key.attempt_index)
            .join(crate::layout::EVENTS_FILE)
    }
}

impl Backend for ReplayBackend {
    fn model_name(&self) -> &str {
        "replay"
    }

    fn open_session(&self, key: &SessionKey) -> Result<Box<dyn ChatSession>, LlmError> {
        let path = self.log_for(key);
        ReplaySession::open(&path).map(|s| Box::new(s) as Box<dyn ChatSession>)
    }
}

pub(crate) struct ReplaySession {
    turns: Vec<(Vec<ChatMessage>, ChatMessage)>,
    next: usize,
}

impl ReplaySession {
    fn open(path: &Path) -> Result<Self, LlmError> {
        let (_, trajectory) = read_event_log(path)
            .map_err(|e| LlmError::Config(format!("cannot load replay log: {e}")))?;
        Ok(ReplaySession {
            turns: turn_responses(&trajectory.events),
            next: 0,
        })
    }
}

fn describe_divergence(expected: &[ChatMessage], actual: &[ChatMessage]) -> String {
    if expected.len() != actual.len() {
        return format!(
            "conversation has {} messages, recording has {}",
            actual.len(),
            expected.len()
        );
    }
    let i = expected
        .iter()
        .zip(actual)
        .position(|(e, a)| e != a)
        .unwrap_or(0);
    format!(
        "message {i} ({}) differs from the recording",
        actual[i].role.as_str()
    )
}

impl ChatSession for ReplaySession {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        _tools: &[ToolSpec],
        params: &SamplingParams,
    ) -> Result<Completion, LlmError> {
        check_request(messages, params)?;
        let turn = self.next + 1;
        let (prefix, response) =
            self.turns
                .get(self.next)
                .ok_or_else(|| LlmError::ReplayMismatch {
                    turn,
                    detail: format!("recording holds only {} turns", self.turns.len()),
                })?;
        if prefix.as_slice() != messages {
            return Err(LlmError::ReplayMismatch {
                turn,
                detail: describe_divergence(prefix, messages),
            });
        }
        self.next += 1;
        Ok(Completion {
            message: response.clone(),
            usage: TokenUsage::default(),
        })
    }
}
