//! Patch verification in a fresh workspace.

use std::path::Path;
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{IoContext, Result};
use crate::model::{TaskInstance, TEST_PLACEHOLDER};
use crate::sandbox::{apply_patch, provision, sandbox_env, truncate_observation, SandboxConfig};

/// Output kept per test in the verification record.
const TEST_OUTPUT_CAP: usize = 4_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub passed: bool,
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub output: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub resolved: bool,
    /// Set when the patch did not apply to the pristine snapshot; no tests
    /// run in that case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apply_failed: Option<String>,
    pub fail_to_pass: Vec<TestResult>,
    pub pass_to_pass: Vec<TestResult>,
}

impl Verification {
    /// pass_to_pass tests that failed.
    pub fn regressions(&self) -> Vec<&str> {
        self.pass_to_pass
            .iter()
            .filter(|t| !t.passed)
            .map(|t| t.test.as_str())
            .collect()
    }

    /// One-line summary naming what went wrong.
    pub fn detail(&self) -> String {
        if let Some(e) = &self.apply_failed {
            return format!("apply_failed: {e}");
        }
        let still_failing: Vec<&str> = self
            .fail_to_pass
            .iter()
            .filter(|t| !t.passed)
            .map(|t| t.test.as_str())
            .collect();
        let regressions = self.regressions();
        let mut parts = Vec::new();
        if !still_failing.is_empty() {
            parts.push(format!("still failing: {}", still_failing.join(", ")));
        }
        if !regressions.is_empty() {
            parts.push(format!("regression: {}", regressions.join(", ")));
        }
        if parts.is_empty() {
            "all tests passed".into()
        } else {
            parts.join("; ")
        }
    }
}

/// Quotes a test identifier for substitution into a shell command.
pub fn shell_quote(s: &str) -> String {
    let plain = !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || "_-./:=@%+,".contains(c));
    if plain {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

pub fn test_command(instance: &TaskInstance, test: &str) -> String {
    instance
        .test_command_template
        .replace(TEST_PLACEHOLDER, &shell_quote(test))
}

fn run_test(instance: &TaskInstance, root: &Path, home: &Path, test: &str) -> Result<TestResult> {
    let mut cmd = Command::new("bash");
    cmd.arg("-c")
        .arg(test_command(instance, test))
        .current_dir(root);
    sandbox_env(&mut cmd, home);
    let out = crate::sandbox::run_captured(cmd, Duration::from_secs(instance.timeout_seconds))
        .at(root)?;
    let (output, _) = truncate_observation(&out.text, TEST_OUTPUT_CAP);
    Ok(TestResult {
        test: test.to_string(),
        passed: !out.timed_out && out.status == Some(0),
        exit_code: out.status,
        timed_out: out.timed_out,
        output,
    })
}

/// Applies `patch` to a freshly provisioned copy of the instance under
/// `work_dir` and runs every fail_to_pass and pass_to_pass test. The tree
/// is removed afterwards.
///
/// Provisioning failures are returned as errors; a patch that does not
/// apply is an unresolved verification, not an error.
pub fn verify(instance: &TaskInstance, patch: &str, work_dir: &Path) -> Result<Verification> {
    let ws = provision(instance, work_dir, 0, &SandboxConfig::default())?;
    let result = (|| {
        if let Err(e) = apply_patch(&ws.root, patch) {
            return Ok(Verification {
                resolved: false,
                apply_failed: Some(e),
                fail_to_pass: Vec::new(),
                pass_to_pass: Vec::new(),
            });
        }
        let run_all = |tests: &[String]| -> Result<Vec<TestResult>> {
            tests
                .iter()
                .map(|t| run_test(instance, &ws.root, &ws.shell.home, t))
                .collect()
        };
        let fail_to_pass = run_all(&instance.fail_to_pass)?;
        let pass_to_pass = run_all(&instance.pass_to_pass)?;
        let resolved = fail_to_pass.iter().chain(&pass_to_pass).all(|t| t.passed);
        Ok(Verification {
            resolved,
            apply_failed: None,
            fail_to_pass,
            pass_to_pass,
        })
    })();
    ws.teardown()?;
    if work_dir.exists() {
        std::fs::remove_dir_all(work_dir).at(work_dir)?;
    }
    result
}
