//! Run configuration, its validation, and the built-in presets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agent::{DEFAULT_COMMAND_TIMEOUT_SECONDS, DEFAULT_MAX_ITERATIONS, DEFAULT_STRIKE_LIMIT};
use crate::error::{Error, Result};
use crate::eval::{IterationSchedule, RetryPredicate, DEFAULT_TEMPERATURES};
use crate::llm::{BackendDescriptor, DEFAULT_MAX_OUTPUT_TOKENS};
use crate::model::temperature_in_range;
use crate::sandbox::{Isolation, DEFAULT_OBSERVATION_CAP};

pub const SWEEP_MAX_ITERATIONS: u32 = 100;
pub const SWEEP_SAMPLES: u32 = 4;
pub const SWEEP_TEMPERATURES: [f64; 4] = [0.1, 0.4, 0.7, 1.0];
pub const BUDGET_LIMITS: [u32; 3] = [30, 50, 100];

/// Per-episode knobs shared by every run mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub strike_limit: u32,
    pub command_timeout_seconds: u64,
    pub observation_cap: usize,
    pub isolation: Isolation,
    pub max_output_tokens: u32,
    pub keep_workspaces: bool,
}

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            strike_limit: DEFAULT_STRIKE_LIMIT,
            command_timeout_seconds: DEFAULT_COMMAND_TIMEOUT_SECONDS,
            observation_cap: DEFAULT_OBSERVATION_CAP,
            isolation: Isolation::Directory,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            keep_workspaces: false,
        }
    }
}

impl AgentSettings {
    fn problems(&self, out: &mut Vec<String>) {
        if self.strike_limit == 0 {
            out.push("strike_limit must be at least 1".into());
        }
        if self.command_timeout_seconds == 0 {
            out.push("command_timeout_seconds must be at least 1".into());
        }
        if self.observation_cap < 100 {
            out.push("observation_cap must be at least 100 characters".into());
        }
        if self.max_output_tokens == 0 {
            out.push("max_output_tokens must be at least 1".into());
        }
    }
}

fn temperature_problems(name: &str, temps: &[f64], out: &mut Vec<String>) {
    if temps.is_empty() {
        out.push(format!("{name} must not be empty"));
    }
    for t in temps {
        if !temperature_in_range(*t) {
            out.push(format!("{name}: temperature {t} outside [0, 2]"));
        }
    }
}

fn finish(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems.join("; ")))
    }
}

/// Configuration of an iterative-protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_iterations: u32,
    pub attempt_temperatures: Vec<f64>,
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub backend: BackendDescriptor,
    pub retry_predicate: RetryPredicate,
    #[serde(default)]
    pub agent: AgentSettings,
}

impl RunConfig {
    /// Defaults: 50 iterations, temperatures 0.0/0.1/0.1, one worker.
    pub fn new(output_dir: impl Into<PathBuf>, backend: BackendDescriptor) -> Self {
        RunConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            attempt_temperatures: DEFAULT_TEMPERATURES.to_vec(),
            parallelism: 1,
            output_dir: output_dir.into(),
            backend,
            retry_predicate: RetryPredicate::default(),
            agent: AgentSettings::default(),
        }
    }

    /// Reports every violated constraint at once.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.max_iterations == 0 {
            p.push("max_iterations must be at least 1".to_string());
        }
        temperature_problems("attempt_temperatures", &self.attempt_temperatures, &mut p);
        if self.parallelism == 0 {
            p.push("parallelism must be at least 1".into());
        }
        self.agent.problems(&mut p);
        finish(p)
    }

    pub fn schedule(&self) -> IterationSchedule {
        IterationSchedule {
            temperatures: self.attempt_temperatures.clone(),
            retry_predicate: self.retry_predicate,
        }
    }
}

/// Configuration of a temperature sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub temperatures: Vec<f64>,
    pub samples: u32,
    pub max_iterations: u32,
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub backend: BackendDescriptor,
    #[serde(default)]
    pub agent: AgentSettings,
}

impl SweepConfig {
    /// Defaults: temperatures 0.1/0.4/0.7/1.0, 4 samples, 100 iterations.
    pub fn new(output_dir: impl Into<PathBuf>, backend: BackendDescriptor) -> Self {
        SweepConfig {
            temperatures: SWEEP_TEMPERATURES.to_vec(),
            samples: SWEEP_SAMPLES,
            max_iterations: SWEEP_MAX_ITERATIONS,
            parallelism: 1,
            output_dir: output_dir.into(),
            backend,
            agent: AgentSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.max_iterations == 0 {
            p.push("max_iterations must be at least 1".to_string());
        }
        if self.samples == 0 {
            p.push("samples must be at least 1".into());
        }
        temperature_problems("temperatures", &self.temperatures, &mut p);
        let mut seen = Vec::new();
        for t in &self.temperatures {
            if seen.contains(t) {
                p.push(format!("temperature {t} listed twice"));
            }
            seen.push(*t);
        }
        if self.parallelism == 0 {
            p.push("parallelism must be at least 1".into());
        }
        self.agent.problems(&mut p);
        finish(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// 50 iterations, 3 attempts at 0.0/0.1/0.1.
    ReferenceEval,
    /// 100 iterations, temperatures 0.1/0.4/0.7/1.0, 4 samples each.
    ReferenceSweep,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference-eval" => Ok(Preset::ReferenceEval),
            "reference-sweep" => Ok(Preset::ReferenceSweep),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected reference-eval or reference-sweep"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        RunConfig::new("/tmp/out", BackendDescriptor::scripted(vec![]))
    }

    #[test]
    fn defaults_are_valid() {
        let c = cfg();
        c.validate().unwrap();
        assert_eq!(c.max_iterations, 50);
        assert_eq!(c.attempt_temperatures, [0.0, 0.1, 0.1]);
        SweepConfig::new("/tmp/out", BackendDescriptor::scripted(vec![]))
            .validate()
            .unwrap();
    }

    #[test]
    fn every_problem_is_listed() {
        let mut c = cfg();
        c.max_iterations = 0;
        c.attempt_temperatures = vec![0.0, 3.0];
        c.parallelism = 0;
        let Err(Error::Validation(msg)) = c.validate() else {
            panic!("expected validation error")
        };
        assert!(msg.contains("max_iterations"));
        assert!(msg.contains("temperature 3"));
        assert!(msg.contains("parallelism"));
        c.attempt_temperatures.clear();
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("must not be empty"));
    }

    #[test]
    fn sweep_validation() {
        let mut s = SweepConfig::new("/tmp/out", BackendDescriptor::scripted(vec![]));
        s.samples = 0;
        s.temperatures = vec![0.1, 0.1];
        let msg = s.validate().unwrap_err().to_string();
        assert!(msg.contains("samples") && msg.contains("twice"));
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = cfg();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
