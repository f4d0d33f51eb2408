use std::path::PathBuf;
use std::sync::Arc;

use super::protocol::AttemptExecutor;
use super::verify::verify;
use crate::agent::{run_episode, write_attempt_summary, EpisodeBudget, EpisodeOptions};
use crate::config::AgentSettings;
use crate::error::{IoContext, Result};
use crate::layout;
use crate::llm::{Backend, SamplingParams};
use crate::model::{AttemptStatus, AttemptSummary, Resolved, TaskInstance};
use crate::sandbox::SandboxConfig;

/// Runs real episodes in sandboxed workspaces under a run directory and
/// verifies each patch in a fresh copy of the instance.
pub struct SandboxExecutor {
    pub backend: Arc<dyn Backend>,
    pub run_dir: PathBuf,
    pub max_iterations: u32,
    pub agent: AgentSettings,
}

impl AttemptExecutor for SandboxExecutor {
    fn execute(
        &self,
        instance: &TaskInstance,
        attempt_index: u32,
        temperature: f64,
    ) -> Result<AttemptSummary> {
        let dir = layout::attempt_dir(&self.run_dir, &instance.id, attempt_index);
        let mut options = EpisodeOptions::new(&dir, attempt_index);
        options.strike_limit = self.agent.strike_limit;
        options.command_timeout_seconds = self.agent.command_timeout_seconds;
        options.keep_workspace = self.agent.keep_workspaces;
        options.sandbox = SandboxConfig {
            observation_cap: self.agent.observation_cap,
            isolation: self.agent.isolation,
        };
        let params = SamplingParams {
            temperature,
            max_output_tokens: self.agent.max_output_tokens,
            stop_sequences: Vec::new(),
        };
        let record = run_episode(
            instance,
            self.backend.as_ref(),
            &params,
            EpisodeBudget::new(self.max_iterations)?,
            &options,
        )?;
        let mut summary = record.summary(&instance.id);
        if record.status == AttemptStatus::InfraError {
            return Ok(summary);
        }
        let verification = verify(instance, &record.patch, &dir.join(layout::VERIFY_DIR))?;
        let path = dir.join(layout::VERIFY_FILE);
        let mut text = serde_json::to_string_pretty(&verification)?;
        text.push('\n');
        std::fs::write(&path, text).at(&path)?;
        summary.resolved = Resolved::from_bool(verification.resolved);
        write_attempt_summary(&dir, &summary)?;
        Ok(summary)
    }
}
