//! The tool-calling control loop: one model call per iteration, tool calls
//! executed in order, terminated by `finish` or the iteration budget.

mod prompt;
mod tools;

pub use prompt::{build_system_prompt, KICKOFF_MESSAGE, NUDGE_MESSAGE};
pub use tools::{
    parse_call, parse_tool_calls, tool_specs, validate_arguments, Action, ParsedCall, RejectedCall,
    ValidatedCall, BASH_TOOL, EDIT_TOOL, FINISH_TOOL,
};

use std::path::PathBuf;
use std::time::Instant;

use crate::error::{Error, IoContext, Result};
use crate::layout;
use crate::llm::{
    conversation_from_events, AuditedSession, Backend, ChatSession, SamplingParams, SessionKey,
};
use crate::model::{
    AttemptRecord, AttemptStatus, EventLogHeader, EventLogWriter, EventPayload, Resolved,
    TaskInstance, TokenUsage, Trajectory,
};
use crate::sandbox::{
    bash_execute, extract_patch, file_edit, provision, SandboxConfig, ToolResult,
};

pub const DEFAULT_MAX_ITERATIONS: u32 = 50;
/// Consecutive turns whose every call is malformed before the episode
/// ends with `agent_error`.
pub const DEFAULT_STRIKE_LIMIT: u32 = 5;
pub const DEFAULT_COMMAND_TIMEOUT_SECONDS: u64 = 180;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeBudget {
    pub max_iterations: u32,
    pub elapsed_turns: u32,
}

impl EpisodeBudget {
    pub fn new(max_iterations: u32) -> Result<Self> {
        if max_iterations == 0 {
            return Err(Error::Validation(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(EpisodeBudget {
            max_iterations,
            elapsed_turns: 0,
        })
    }

    pub fn exhausted(&self) -> bool {
        self.elapsed_turns >= self.max_iterations
    }

    fn charge(&mut self) -> u32 {
        debug_assert!(!self.exhausted());
        self.elapsed_turns += 1;
        self.elapsed_turns
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeOptions {
    pub attempt_index: u32,
    /// Holds the workspace and every artifact of the attempt.
    pub attempt_dir: PathBuf,
    pub strike_limit: u32,
    pub command_timeout_seconds: u64,
    pub sandbox: SandboxConfig,
    /// Leave the working tree on disk after the episode.
    pub keep_workspace: bool,
}

impl EpisodeOptions {
    pub fn new(attempt_dir: impl Into<PathBuf>, attempt_index: u32) -> Self {
        EpisodeOptions {
            attempt_index,
            attempt_dir: attempt_dir.into(),
            strike_limit: DEFAULT_STRIKE_LIMIT,
            command_timeout_seconds: DEFAULT_COMMAND_TIMEOUT_SECONDS,
            sandbox: SandboxConfig::default(),
            keep_workspace: false,
        }
    }
}

/// Event stream under construction, mirrored to disk as it grows.
struct Recorder {
    trajectory: Trajectory,
    writer: EventLogWriter,
}

impl Recorder {
    fn push(&mut self, payload: EventPayload) -> Result<()> {
        let event = self.trajectory.push(payload).clone();
        self.writer.append(&event)
    }

    fn observe(&mut self, call_id: &str, result: ToolResult, rejected: bool) -> Result<()> {
        self.push(EventPayload::ToolObservation {
            call_id: call_id.to_string(),
            output: result.output,
            exit_code: result.exit_code,
            truncated: result.truncated,
            rejected,
        })
    }
}

/// Runs one episode in a fresh workspace under `options.attempt_dir`.
///
/// Model and tool failures end up in the returned record's status. `Err`
/// means the attempt could not be carried out at all: invalid input,
/// a workspace that cannot be provisioned, or artifacts that cannot be
/// written.
pub fn run_episode(
    instance: &TaskInstance,
    backend: &dyn Backend,
    params: &SamplingParams,
    mut budget: EpisodeBudget,
    options: &EpisodeOptions,
) -> Result<AttemptRecord> {
    let system_prompt = build_system_prompt(instance)?;
    params
        .validate()
        .map_err(|e| Error::Validation(e.to_string()))?;
    let start = Instant::now();
    let dir = &options.attempt_dir;
    std::fs::create_dir_all(dir).at(dir)?;
    let requests_path = dir.join(layout::REQUESTS_FILE);
    if requests_path.exists() {
        std::fs::remove_file(&requests_path).at(&requests_path)?;
    }

    let mut ws = provision(instance, dir, options.attempt_index, &options.sandbox)?;
    let writer = EventLogWriter::create(
        &dir.join(layout::EVENTS_FILE),
        EventLogHeader {
            instance_id: instance.id.clone(),
            attempt_index: options.attempt_index,
            temperature: params.temperature,
        },
    )?;
    let mut rec = Recorder {
        trajectory: Trajectory::new(&instance.id, params.temperature),
        writer,
    };
    rec.push(EventPayload::SystemPrompt {
        text: system_prompt,
    })?;
    rec.push(EventPayload::UserTask {
        text: KICKOFF_MESSAGE.into(),
    })?;

    let tools = tool_specs();
    let key = SessionKey {
        instance_id: instance.id.clone(),
        attempt_index: options.attempt_index,
    };
    let session = backend
        .open_session(&key)
        .and_then(|inner| AuditedSession::create(inner, backend.model_name(), &requests_path));
    let mut session: Box<dyn ChatSession> = match session {
        Ok(s) => Box::new(s),
        Err(e) => {
            rec.push(EventPayload::Error {
                message: format!("cannot open model session: {e}"),
            })?;
            return conclude(
                rec,
                ws,
                AttemptStatus::InfraError,
                options,
                start,
                TokenUsage::default(),
            );
        }
    };

    let mut usage = TokenUsage::default();
    let mut strikes = 0u32;
    let status = loop {
        if budget.exhausted() {
            break AttemptStatus::IterationLimit;
        }
        let messages = conversation_from_events(&rec.trajectory.events);
        let completion = match session.complete(&messages, &tools, params) {
            Ok(c) => c,
            Err(e) => {
                tracing::warn!(instance = %instance.id, error = %e, "model call failed");
                rec.push(EventPayload::Error {
                    message: format!("model call failed: {e}"),
                })?;
                break AttemptStatus::InfraError;
            }
        };
        usage.add(completion.usage);
        let turn = budget.charge();
        let message = completion.message;
        if !message.content.is_empty() || message.tool_calls.is_empty() {
            rec.push(EventPayload::AssistantMessage {
                turn,
                content: message.content.clone(),
            })?;
        }
        if message.tool_calls.is_empty() {
            rec.push(EventPayload::UserTask {
                text: NUDGE_MESSAGE.into(),
            })?;
            continue;
        }

        let mut finished = false;
        let mut any_valid = false;
        for (raw, parsed) in message
            .tool_calls
            .iter()
            .zip(parse_tool_calls(&message, &tools))
        {
            match parsed {
                Ok(call) => {
                    any_valid = true;
                    if let Action::Finish { .. } = call.action {
                        rec.push(EventPayload::Finish {
                            turn,
                            call_id: call.id,
                            arguments: raw.arguments.clone(),
                        })?;
                        finished = true;
                        break;
                    }
                    rec.push(EventPayload::ToolCall {
                        turn,
                        call_id: call.id.clone(),
                        tool: raw.name.clone(),
                        arguments: raw.arguments.clone(),
                    })?;
                    let result = match &call.action {
                        Action::Bash { command } => {
                            bash_execute(&mut ws, command, options.command_timeout_seconds)?
                        }
                        Action::Edit(request) => file_edit(&ws, request),
                        Action::Finish { .. } => unreachable!("handled above"),
                    };
                    rec.observe(&call.id, result, false)?;
                }
                Err(rejected) => {
                    rec.push(EventPayload::ToolCall {
                        turn,
                        call_id: rejected.id.clone(),
                        tool: rejected.tool.clone(),
                        arguments: raw.arguments.clone(),
                    })?;
                    rec.observe(
                        &rejected.id,
                        ToolResult {
                            output: format!("Error: {}", rejected.message),
                            exit_code: None,
                            truncated: false,
                            wall_time_seconds: 0.0,
                        },
                        true,
                    )?;
                }
            }
        }
        if finished {
            break AttemptStatus::Finished;
        }
        strikes = if any_valid { 0 } else { strikes + 1 };
        if strikes >= options.strike_limit {
            rec.push(EventPayload::Error {
                message: format!("{strikes} consecutive turns with only malformed tool calls"),
            })?;
            break AttemptStatus::AgentError;
        }
    };
    conclude(rec, ws, status, options, start, usage)
}

fn conclude(
    mut rec: Recorder,
    ws: crate::sandbox::Workspace,
    status: AttemptStatus,
    options: &EpisodeOptions,
    start: Instant,
    usage: TokenUsage,
) -> Result<AttemptRecord> {
    let patch = extract_patch(&ws)?;
    if !options.keep_workspace {
        ws.teardown()?;
    }
    rec.trajectory.token_usage = usage;
    rec.writer.finish(usage)?;
    let dir = &options.attempt_dir;
    let patch_path = dir.join(layout::PATCH_FILE);
    std::fs::write(&patch_path, &patch).at(&patch_path)?;
    let record = AttemptRecord {
        attempt_index: options.attempt_index,
        trajectory: rec.trajectory,
        patch,
        status,
        resolved: Resolved::NotEvaluated,
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    write_attempt_summary(dir, &record.summary(&record.trajectory.instance_id))?;
    Ok(record)
}

pub(crate) fn write_attempt_summary(
    dir: &std::path::Path,
    summary: &crate::model::AttemptSummary,
) -> Result<()> {
    let path = dir.join(layout::ATTEMPT_FILE);
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(&path, text).at(&path)
}
