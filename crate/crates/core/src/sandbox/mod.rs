//! Per-attempt workspaces and the two agent-facing tools.
//!
//! Confinement is directory based: every editor path must resolve inside
//! the workspace root, and the shell's persisted working directory is
//! clamped back to the root whenever a command leaves it. Optionally each
//! shell command also runs in a fresh network namespace.

mod editor;
mod fsutil;
mod git;
mod shell;

pub use editor::{file_edit, EditRequest};
pub use fsutil::{copy_tree, resolve_inside, tree_hash, NORMALIZED_MTIME};
pub use git::{apply_patch, extract_patch};
pub(crate) use shell::run_captured;
pub use shell::{bash_execute, truncate_observation};

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::model::TaskInstance;

pub const DEFAULT_OBSERVATION_CAP: usize = 30_000;
/// Upper bound for one setup command.
pub const SETUP_TIMEOUT: Duration = Duration::from_secs(600);

pub const REPO_DIR: &str = "repo";
pub const SANDBOX_DIR: &str = "sandbox";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Isolation {
    /// Plain processes with directory confinement.
    #[default]
    Directory,
    /// Directory confinement plus an empty network namespace per command
    /// (`unshare -n -r`).
    NoNetwork,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandboxConfig {
    pub observation_cap: usize,
    pub isolation: Isolation,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            observation_cap: DEFAULT_OBSERVATION_CAP,
            isolation: Isolation::Directory,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub output: String,
    pub exit_code: Option<i32>,
    pub truncated: bool,
    pub wall_time_seconds: f64,
}

impl ToolResult {
    pub(crate) fn editor(output: impl Into<String>, wall_time_seconds: f64) -> Self {
        ToolResult {
            output: output.into(),
            exit_code: None,
            truncated: false,
            wall_time_seconds,
        }
    }
}

/// Shell state that persists across bash calls within one attempt.
#[derive(Clone, Debug)]
pub struct ShellState {
    pub cwd: PathBuf,
    pub state_dir: PathBuf,
    pub home: PathBuf,
}

#[derive(Debug)]
pub struct Workspace {
    /// Canonical path of the working tree.
    pub root: PathBuf,
    pub instance_id: String,
    pub attempt_index: u32,
    pub base_commit: String,
    pub shell: ShellState,
    pub config: SandboxConfig,
}

impl Workspace {
    /// Removes the working tree and shell state.
    pub fn teardown(self) -> Result<()> {
        let sandbox = self.shell.state_dir.parent().map(Path::to_path_buf);
        std::fs::remove_dir_all(&self.root).at(&self.root)?;
        if let Some(s) = sandbox {
            if s.exists() {
                std::fs::remove_dir_all(&s).at(&s)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn host_path() -> String {
    std::env::var("PATH")
        .unwrap_or_else(|_| "/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin".into())
}

/// Clean environment for every process spawned inside a workspace.
pub(crate) fn sandbox_env(cmd: &mut Command, home: &Path) {
    cmd.env_clear()
        .env("PATH", host_path())
        .env("HOME", home)
        .env("LANG", "C.UTF-8")
        .env("TERM", "dumb")
        .env("PAGER", "cat")
        .env("GIT_PAGER", "cat")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_AUTHOR_NAME", "harness")
        .env("GIT_AUTHOR_EMAIL", "harness@localhost")
        .env("GIT_COMMITTER_NAME", "harness")
        .env("GIT_COMMITTER_EMAIL", "harness@localhost");
}

fn materialize(instance: &TaskInstance, root: &Path) -> Result<()> {
    let src = &instance.repo_source;
    let infra = |m: String| Error::Infra(format!("instance {}: {m}", instance.id));
    if src.is_dir() {
        if src.join(".git").exists() {
            git::clone_at(src, root, &instance.base_revision).map_err(infra)?;
        } else {
            copy_tree(src, root)?;
        }
        return Ok(());
    }
    let name = src.to_string_lossy();
    if name.ends_with(".tar") || name.ends_with(".tar.gz") || name.ends_with(".tgz") {
        std::fs::create_dir_all(root).at(root)?;
        let out = Command::new("tar")
            .arg("-xf")
            .arg(src)
            .arg("-C")
            .arg(root)
            .output()
            .at(src)?;
        if !out.status.success() {
            return Err(infra(format!(
                "cannot unpack {}: {}",
                src.display(),
                String::from_utf8_lossy(&out.stderr)
            )));
        }
        return Ok(());
    }
    Err(infra(format!(
        "repo_source {} is neither a directory nor a tar archive",
        src.display()
    )))
}

/// Creates a fresh workspace under `dir` (as `dir/repo` and `dir/sandbox`).
///
/// The snapshot is materialized, setup commands run in order, the result is
/// committed as the base revision with fixed dates, and every working-tree
/// mtime is pinned to [`NORMALIZED_MTIME`].
pub fn provision(
    instance: &TaskInstance,
    dir: &Path,
    attempt_index: u32,
    config: &SandboxConfig,
) -> Result<Workspace> {
    let root = dir.join(REPO_DIR);
    let sandbox = dir.join(SANDBOX_DIR);
    for d in [&root, &sandbox] {
        if d.exists() {
            std::fs::remove_dir_all(d).at(d)?;
        }
    }
    let state_dir = sandbox.join("state");
    let home = sandbox.join("home");
    std::fs::create_dir_all(&state_dir).at(&state_dir)?;
    std::fs::create_dir_all(&home).at(&home)?;
    materialize(instance, &root)?;
    let root = root.canonicalize().at(&root)?;

    for command in &instance.setup_commands {
        let mut cmd = Command::new("bash");
        cmd.arg("-c").arg(command).current_dir(&root);
        sandbox_env(&mut cmd, &home);
        let out = shell::run_captured(cmd, SETUP_TIMEOUT).at(&root)?;
        if out.timed_out || out.status != Some(0) {
            return Err(Error::Infra(format!(
                "instance {}: setup command {command:?} failed ({}): {}",
                instance.id,
                if out.timed_out {
                    "timeout".to_string()
                } else {
                    format!("exit {:?}", out.status)
                },
                out.text.trim_end()
            )));
        }
    }

    let base_commit = git::commit_base(&root, &home)
        .map_err(|m| Error::Infra(format!("instance {}: {m}", instance.id)))?;
    fsutil::normalize_mtimes(&root)?;

    Ok(Workspace {
        shell: ShellState {
            cwd: root.clone(),
            state_dir,
            home,
        },
        root,
        instance_id: instance.id.clone(),
        attempt_index,
        base_commit,
        config: config.clone(),
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// A small git-less snapshot plus an instance pointing at it.
    pub fn toy_instance(dir: &Path, setup: Vec<String>) -> TaskInstance {
        let src = dir.join("src");
        std::fs::create_dir_all(src.join("pkg")).unwrap();
        std::fs::write(src.join("a.txt"), "a\nb\n").unwrap();
        std::fs::write(src.join("pkg/mod.py"), "x = 1\n").unwrap();
        TaskInstance {
            id: "toy".into(),
            repo_source: src,
            base_revision: "HEAD".into(),
            problem_statement: "fix it".into(),
            setup_commands: setup,
            fail_to_pass: vec!["t".into()],
            pass_to_pass: vec![],
            test_command_template: "true {test}".into(),
            timeout_seconds: 10,
        }
    }

    pub fn workspace(dir: &Path) -> Workspace {
        let inst = toy_instance(dir, vec![]);
        provision(&inst, &dir.join("attempt1"), 1, &SandboxConfig::default()).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn provision_matches_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        assert_eq!(
            tree_hash(&ws.root).unwrap(),
            tree_hash(&dir.path().join("src")).unwrap()
        );
        assert!(ws.root.join(".git").exists());
        assert_eq!(ws.base_commit.len(), 40);
        let meta = std::fs::metadata(ws.root.join("a.txt")).unwrap();
        let mtime = filetime::FileTime::from_last_modification_time(&meta);
        assert_eq!(mtime.unix_seconds(), NORMALIZED_MTIME);
    }

    #[test]
    fn failing_setup_is_infra_error() {
        let dir = tempfile::tempdir().unwrap();
        let inst = toy_instance(dir.path(), vec!["exit 1".into()]);
        let err =
            provision(&inst, &dir.path().join("a1"), 1, &SandboxConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Infra(_)), "{err}");
    }

    #[test]
    fn setup_products_are_part_of_base() {
        let dir = tempfile::tempdir().unwrap();
        let inst = toy_instance(dir.path(), vec!["echo built > build.txt".into()]);
        let ws = provision(&inst, &dir.path().join("a1"), 1, &SandboxConfig::default()).unwrap();
        assert!(ws.root.join("build.txt").exists());
        assert_eq!(extract_patch(&ws).unwrap(), "");
    }

    #[test]
    fn two_provisions_are_identical_and_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        let inst = toy_instance(dir.path(), vec![]);
        let cfg = SandboxConfig::default();
        let a = provision(&inst, &dir.path().join("attempt1"), 1, &cfg).unwrap();
        let b = provision(&inst, &dir.path().join("attempt2"), 2, &cfg).unwrap();
        assert_ne!(a.root, b.root);
        assert!(!a.root.starts_with(&b.root) && !b.root.starts_with(&a.root));
        assert_eq!(tree_hash(&a.root).unwrap(), tree_hash(&b.root).unwrap());
        // Fixed commit dates make the base commit reproducible too.
        assert_eq!(a.base_commit, b.base_commit);
        std::fs::write(a.root.join("a.txt"), "changed").unwrap();
        assert_ne!(tree_hash(&a.root).unwrap(), tree_hash(&b.root).unwrap());
    }

    #[test]
    fn git_source_checks_out_revision() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("gitsrc");
        std::fs::create_dir_all(&src).unwrap();
        let run = |args: &[&str]| {
            let mut c = Command::new("git");
            c.args(args).current_dir(&src);
            sandbox_env(&mut c, dir.path());
            assert!(c.status().unwrap().success());
        };
        run(&["init", "-q"]);
        std::fs::write(src.join("f"), "one\n").unwrap();
        run(&["add", "-A"]);
        run(&["commit", "-qm", "one"]);
        std::fs::write(src.join("f"), "two\n").unwrap();
        run(&["commit", "-qam", "two"]);
        let mut inst = toy_instance(dir.path(), vec![]);
        inst.repo_source = src;
        inst.base_revision = "HEAD~1".into();
        let ws = provision(&inst, &dir.path().join("a1"), 1, &SandboxConfig::default()).unwrap();
        assert_eq!(std::fs::read_to_string(ws.root.join("f")).unwrap(), "one\n");
    }
}
