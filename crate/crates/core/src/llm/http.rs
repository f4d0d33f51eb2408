//! Blocking chat-completions client with capped exponential backoff.

use std::thread;
use std::time::Duration;

use super::{
    check_request, wire, Backend, ChatMessage, ChatSession, Completion, HttpSettings, LlmError,
    SamplingParams, SessionKey, ToolSpec,
};

#[derive(Clone)]
pub struct HttpBackend {
    settings: HttpSettings,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Result<Self, LlmError> {
        if settings.base_url.trim().is_empty() {
            return Err(LlmError::Config("http backend needs a base_url".into()));
        }
        if settings.model.trim().is_empty() {
            return Err(LlmError::Config("http backend needs a model name".into()));
        }
        let api_key = std::env::var(&settings.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_seconds))
            .build()
            .map_err(|e| LlmError::Config(format!("cannot build http client: {e}")))?;
        Ok(HttpBackend {
            settings,
            api_key,
            client,
        })
    }

    pub fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.settings.base_url.trim_end_matches('/')
        )
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<Completion, LlmError> {
        let mut request = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout(e.to_string())
            } else {
                LlmError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout(e.to_string())
            } else {
                LlmError::Transport(e.to_string())
            }
        })?;
        if !status.is_success() {
            return Err(LlmError::Http {
                status: status.as_u16(),
                body: text.chars().take(2000).collect(),
            });
        }
        let json: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::Protocol(format!("response is not json: {e}")))?;
        wire::parse_response(&json)
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.settings.backoff_base_ms;
        let delay = base.saturating_mul(1u64 << retry.min(20));
        Duration::from_millis(delay.min(self.settings.backoff_cap_ms))
    }
}

impl Backend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.settings.model
    }

    fn open_session(&self, _key: &SessionKey) -> Result<Box<dyn ChatSession>, LlmError> {
        Ok(Box::new(self.clone()))
    }
}

impl ChatSession for HttpBackend {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        params: &SamplingParams,
    ) -> Result<Completion, LlmError> {
        check_request(messages, params)?;
        let body = wire::request_body(&self.settings.model, messages, tools, params);
        let mut retry = 0;
        loop {
            match self.send_once(&body) {
                Err(e) if e.is_transient() && retry < self.settings.max_retries => {
                    tracing::warn!(error = %e, retry, "transient backend failure, retrying");
                    thread::sleep(self.backoff(retry));
                    retry += 1;
                }
                other => return other,
            }
        }
    }
}
