use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};

/// Placeholder in `test_command_template` replaced by a shell-quoted test id.
pub const TEST_PLACEHOLDER: &str = "{test}";

fn default_revision() -> String {
    "HEAD".to_string()
}

/// One repairable codebase task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    /// Directory snapshot, git repository, or tar archive.
    pub repo_source: PathBuf,
    #[serde(default = "default_revision")]
    pub base_revision: String,
    pub problem_statement: String,
    #[serde(default)]
    pub setup_commands: Vec<String>,
    pub fail_to_pass: Vec<String>,
    #[serde(default)]
    pub pass_to_pass: Vec<String>,
    pub test_command_template: String,
    pub timeout_seconds: u64,
}

impl TaskInstance {
    /// Instance ids become path components, so they are restricted to a
    /// conservative character set.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("instance {:?}: {msg}", self.id)));
        if self.id.is_empty() {
            return bad("id is empty".into());
        }
        if self.id == "."
            || self.id == ".."
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return bad("id must use only [A-Za-z0-9._-]".into());
        }
        if self.fail_to_pass.is_empty() {
            return bad("fail_to_pass is empty".into());
        }
        if self.timeout_seconds == 0 {
            return bad("timeout_seconds must be positive".into());
        }
        if !self.test_command_template.contains(TEST_PLACEHOLDER) {
            return bad(format!("test_command_template lacks {TEST_PLACEHOLDER}"));
        }
        if std::fs::metadata(&self.repo_source).is_err() {
            return bad(format!(
                "repo_source {} is not readable",
                self.repo_source.display()
            ));
        }
        Ok(())
    }
}

/// Parses a line-delimited suite. Relative `repo_source` paths resolve
/// against `base_dir`; unknown fields are ignored.
pub fn parse_suite(text: &str, base_dir: &Path) -> Result<Vec<TaskInstance>> {
    let mut suite = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut inst: TaskInstance = serde_json::from_str(line)
            .map_err(|e| Error::Validation(format!("suite line {}: {e}", n + 1)))?;
        if inst.repo_source.is_relative() {
            inst.repo_source = base_dir.join(&inst.repo_source);
        }
        inst.validate()?;
        if !ids.insert(inst.id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate instance id {:?}",
                inst.id
            )));
        }
        suite.push(inst);
    }
    Ok(suite)
}

pub fn load_suite(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path).at(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_suite(&text, base)
}

/// SHA-256 of the suite file bytes, hex-encoded.
pub fn suite_fingerprint(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).at(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
