//! Declared tools and validation of the model's tool calls.

use serde_json::{Map, Value};

use crate::llm::{ChatMessage, ParamKind, ParamSpec, Requirement, ToolCallRequest, ToolSpec};
use crate::sandbox::EditRequest;

pub const BASH_TOOL: &str = "bash";
pub const EDIT_TOOL: &str = "file_edit";
pub const FINISH_TOOL: &str = "finish";

fn param(name: &str, kind: ParamKind, requirement: Requirement, description: &str) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        description: description.into(),
        kind,
        requirement,
        allowed: Vec::new(),
    }
}

fn when(param: &str, values: &[&str]) -> Requirement {
    Requirement::When {
        param: param.into(),
        values: values.iter().map(|v| v.to_string()).collect(),
    }
}

/// The three tools every episode declares, in request order.
pub fn tool_specs() -> Vec<ToolSpec> {
    let mut action = param(
        "action",
        ParamKind::String,
        Requirement::Always,
        "One of view, create, str_replace, insert.",
    );
    action.allowed = ["view", "create", "str_replace", "insert"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    vec![
        ToolSpec {
            name: BASH_TOOL.into(),
            description: "Run a bash command in the repository. The working directory and \
                          exported variables persist between calls. Long-running commands are \
                          killed after a timeout and long output is truncated."
                .into(),
            parameters: vec![param(
                "command",
                ParamKind::String,
                Requirement::Always,
                "The command to run.",
            )],
        },
        ToolSpec {
            name: EDIT_TOOL.into(),
            description: "View, create, and edit files inside the repository. view shows a file \
                          with line numbers or lists a directory; create writes a new file; \
                          str_replace replaces one exact, unique occurrence of old_str; insert \
                          adds new_str after line insert_line (0 for the top of the file)."
                .into(),
            parameters: vec![
                action,
                param(
                    "path",
                    ParamKind::String,
                    Requirement::Always,
                    "File or directory path, relative to the repository root.",
                ),
                param(
                    "file_text",
                    ParamKind::String,
                    when("action", &["create"]),
                    "Content of the new file. Required for create.",
                ),
                param(
                    "old_str",
                    ParamKind::String,
                    when("action", &["str_replace"]),
                    "Exact text to replace. Required for str_replace.",
                ),
                param(
                    "new_str",
                    ParamKind::String,
                    when("action", &["str_replace", "insert"]),
                    "Replacement or inserted text. Required for str_replace and insert.",
                ),
                param(
                    "insert_line",
                    ParamKind::Integer,
                    when("action", &["insert"]),
                    "Line after which to insert. Required for insert.",
                ),
                param(
                    "view_start",
                    ParamKind::Integer,
                    Requirement::Optional,
                    "First line to show (1-based) for view.",
                ),
                param(
                    "view_end",
                    ParamKind::Integer,
                    Requirement::Optional,
                    "Last line to show for view; -1 means end of file.",
                ),
            ],
        },
        ToolSpec {
            name: FINISH_TOOL.into(),
            description: "Call when the task is complete. Ends the episode.".into(),
            parameters: vec![param(
                "message",
                ParamKind::String,
                Requirement::Optional,
                "Optional short summary of the change.",
            )],
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Bash { command: String },
    Edit(EditRequest),
    Finish { message: Option<String> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatedCall {
    pub id: String,
    pub action: Action,
}

/// A call the agent issued but that failed validation. `message` is what
/// the agent sees as the observation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RejectedCall {
    pub id: String,
    pub tool: String,
    pub message: String,
}

pub type ParsedCall = Result<ValidatedCall, RejectedCall>;

fn kind_matches(kind: ParamKind, v: &Value) -> bool {
    match kind {
        ParamKind::String => v.is_string(),
        ParamKind::Integer => v.is_i64() || v.is_u64(),
        ParamKind::Boolean => v.is_boolean(),
    }
}

/// Checks raw argument text against a spec and returns the argument object.
pub fn validate_arguments(spec: &ToolSpec, raw: &str) -> Result<Map<String, Value>, String> {
    let raw = if raw.trim().is_empty() { "{}" } else { raw };
    let value: Value = serde_json::from_str(raw)
        .map_err(|e| format!("arguments for {} are not valid JSON: {e}", spec.name))?;
    let Value::Object(args) = value else {
        return Err(format!("arguments for {} must be a JSON object", spec.name));
    };
    for (name, v) in &args {
        let Some(p) = spec.param(name) else {
            return Err(format!("unknown argument for {}: {name}", spec.name));
        };
        if !kind_matches(p.kind, v) {
            return Err(format!(
                "argument {name} of {} must be of type {}",
                spec.name,
                p.kind.json_type()
            ));
        }
        if !p.allowed.is_empty() {
            let s = v.as_str().unwrap_or_default();
            if !p.allowed.iter().any(|a| a == s) {
                return Err(format!(
                    "argument {name} of {} must be one of {}; got {s:?}",
                    spec.name,
                    p.allowed.join(", ")
                ));
            }
        }
    }
    for p in &spec.parameters {
        let required = match &p.requirement {
            Requirement::Always => true,
            Requirement::Optional => false,
            Requirement::When { param, values } => args
                .get(param)
                .and_then(Value::as_str)
                .is_some_and(|s| values.iter().any(|v| v == s)),
        };
        if required && !args.contains_key(&p.name) {
            let context = match &p.requirement {
                Requirement::When { param, .. } => format!(
                    " when {param} is {}",
                    args.get(param).and_then(Value::as_str).unwrap_or_default()
                ),
                _ => String::new(),
            };
            return Err(format!(
                "missing required argument {} for {}{context}",
                p.name, spec.name
            ));
        }
    }
    Ok(args)
}

fn string(args: &Map<String, Value>, name: &str) -> String {
    args.get(name)
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string()
}

fn to_action(tool: &str, args: &Map<String, Value>) -> Result<Action, String> {
    match tool {
        BASH_TOOL => Ok(Action::Bash {
            command: string(args, "command"),
        }),
        FINISH_TOOL => Ok(Action::Finish {
            message: args
                .get("message")
                .and_then(Value::as_str)
                .map(String::from),
        }),
        EDIT_TOOL => {
            let path = string(args, "path");
            let request = match string(args, "action").as_str() {
                "view" => {
                    let start = args.get("view_start").and_then(Value::as_i64);
                    let end = args.get("view_end").and_then(Value::as_i64);
                    let range = match (start, end) {
                        (None, None) => None,
                        (s, e) => Some((s.unwrap_or(1), e.unwrap_or(-1))),
                    };
                    EditRequest::View { path, range }
                }
                "create" => EditRequest::Create {
                    path,
                    file_text: string(args, "file_text"),
                },
                "str_replace" => EditRequest::StrReplace {
                    path,
                    old_str: string(args, "old_str"),
                    new_str: string(args, "new_str"),
                },
                "insert" => {
                    let line = args
                        .get("insert_line")
                        .and_then(Value::as_i64)
                        .unwrap_or(-1);
                    if line < 0 {
                        return Err("insert_line must be non-negative".into());
                    }
                    EditRequest::Insert {
                        path,
                        insert_line: line as u64,
                        new_str: string(args, "new_str"),
                    }
                }
                other => return Err(format!("unknown file_edit action {other:?}")),
            };
            Ok(Action::Edit(request))
        }
        other => Err(format!("unknown tool: {other}")),
    }
}

/// Validates one requested call against the declared tools.
pub fn parse_call(call: &ToolCallRequest, tools: &[ToolSpec]) -> ParsedCall {
    let reject = |message: String| RejectedCall {
        id: call.id.clone(),
        tool: call.name.clone(),
        message,
    };
    let Some(spec) = tools.iter().find(|t| t.name == call.name) else {
        return Err(reject(format!("unknown tool: {}", call.name)));
    };
    let args = validate_arguments(spec, &call.arguments).map_err(reject)?;
    let action = to_action(&call.name, &args).map_err(reject)?;
    Ok(ValidatedCall {
        id: call.id.clone(),
        action,
    })
}

/// Validates every call in an assistant message, preserving request order.
pub fn parse_tool_calls(msg: &ChatMessage, tools: &[ToolSpec]) -> Vec<ParsedCall> {
    msg.tool_calls
        .iter()
        .map(|c| parse_call(c, tools))
        .collect()
}
