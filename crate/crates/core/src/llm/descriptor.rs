use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Backend, HttpBackend, ReplayBackend, ScriptRule, ScriptedBackend, ScriptedTurn};
use crate::error::{Error, Result};

pub const DEFAULT_API_KEY_ENV: &str = "HARNESS_API_KEY";

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}
fn default_timeout() -> u64 {
    600
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_base() -> u64 {
    500
}
fn default_backoff_cap() -> u64 {
    8_000
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpSettings {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_cap")]
    pub backoff_cap_ms: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            base_url: String::new(),
            model: String::new(),
            api_key_env: default_api_key_env(),
            timeout_seconds: default_timeout(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff_base(),
            backoff_cap_ms: default_backoff_cap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendDescriptor {
    Http(HttpSettings),
    Scripted {
        /// Shorthand for a single catch-all rule.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        queue: Vec<ScriptedTurn>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        rules: Vec<ScriptRule>,
        #[serde(default)]
        cycle: bool,
    },
    Replay {
        source: PathBuf,
    },
}

impl BackendDescriptor {
    pub fn scripted(queue: Vec<ScriptedTurn>) -> Self {
        BackendDescriptor::Scripted {
            queue,
            rules: Vec::new(),
            cycle: false,
        }
    }

    pub fn scripted_rules(rules: Vec<ScriptRule>) -> Self {
        BackendDescriptor::Scripted {
            queue: Vec::new(),
            rules,
            cycle: false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BackendDescriptor::Http(_) => "http",
            BackendDescriptor::Scripted { .. } => "scripted",
            BackendDescriptor::Replay { .. } => "replay",
        }
    }
}

/// Builds a backend. An unreachable http endpoint is not detected here;
/// it surfaces on the first request.
pub fn make_backend(descriptor: &BackendDescriptor) -> Result<Arc<dyn Backend>> {
    Ok(match descriptor {
        BackendDescriptor::Http(settings) => {
            Arc::new(HttpBackend::new(settings.clone()).map_err(|e| Error::Config(e.to_string()))?)
        }
        BackendDescriptor::Scripted {
            queue,
            rules,
            cycle,
        } => {
            let mut all = Vec::new();
            if !queue.is_empty() || rules.is_empty() {
                all.push(ScriptRule {
                    turns: queue.clone(),
                    cycle: *cycle,
                    ..Default::default()
                });
            }
            all.extend(rules.iter().cloned());
            Arc::new(ScriptedBackend::new(all))
        }
        BackendDescriptor::Replay { source } => {
            if !source.exists() {
                return Err(Error::Config(format!(
                    "replay source {} does not exist",
                    source.display()
                )));
            }
            Arc::new(ReplayBackend::new(source.clone()))
        }
    })
}

/// Accepts inline JSON (`{"kind": ...}`) or a path to a JSON file.
/// Relative replay sources resolve against the descriptor file's directory.
pub fn parse_descriptor(spec: &str) -> Result<BackendDescriptor> {
    let trimmed = spec.trim();
    let (text, base) = if trimmed.starts_with('{') {
        (trimmed.to_string(), None)
    } else {
        let path = Path::new(trimmed);
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read backend descriptor {trimmed}: {e}")))?;
        (text, path.parent().map(Path::to_path_buf))
    };
    let mut descriptor: BackendDescriptor = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid backend descriptor: {e}")))?;
    if let (BackendDescriptor::Replay { source }, Some(base)) = (&mut descriptor, base) {
        if source.is_relative() {
            *source = base.join(&*source);
        }
    }
    Ok(descriptor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::SessionKey;

    #[test]
    fn unknown_kind_is_config_error() {
        let err = parse_descriptor(r#"{"kind":"carrier_pigeon"}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn http_descriptor_keeps_model_verbatim() {
        let d = parse_descriptor(
            r#"{"kind":"http","base_url":"http://localhost:8000/v1","model":"org/Model-24B"}"#,
        )
        .unwrap();
        let backend = make_backend(&d).unwrap();
        assert_eq!(backend.model_name(), "org/Model-24B");
    }

    #[test]
    fn scripted_queue_shorthand() {
        let d =
            parse_descriptor(r#"{"kind":"scripted","queue":[{"tool_calls":[{"name":"finish"}]}]}"#)
                .unwrap();
        let backend = make_backend(&d).unwrap();
        let mut s = backend
            .open_session(&SessionKey {
                instance_id: "a".into(),
                attempt_index: 1,
            })
            .unwrap();
        let c = s
            .complete(
                &[crate::llm::ChatMessage::system("s")],
                &[],
                &crate::llm::SamplingParams::with_temperature(0.0),
            )
            .unwrap();
        assert_eq!(c.message.tool_calls[0].name, "finish");
    }

    #[test]
    fn missing_replay_source() {
        let d = BackendDescriptor::Replay {
            source: "/nonexistent/run".into(),
        };
        assert!(make_backend(&d).is_err());
    }
}
