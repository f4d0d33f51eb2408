use std::path::Path;
use std::process::Command;

use super::{sandbox_env, Workspace};
use crate::error::{Error, Result};

const FIXED_DATE: &str = "2000-01-01T00:00:00Z";

fn git_cmd(dir: &Path, home: &Path) -> Command {
    let mut cmd = Command::new("git");
    cmd.current_dir(dir);
    sandbox_env(&mut cmd, home);
    cmd.env("GIT_AUTHOR_DATE", FIXED_DATE)
        .env("GIT_COMMITTER_DATE", FIXED_DATE);
    cmd
}

fn run_bytes(mut cmd: Command) -> std::result::Result<Vec<u8>, String> {
    let out = cmd.output().map_err(|e| format!("cannot run git: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "git {:?} failed: {}",
            cmd.get_args().collect::<Vec<_>>(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(out.stdout)
}

fn run(cmd: Command) -> std::result::Result<String, String> {
    run_bytes(cmd).map(|b| String::from_utf8_lossy(&b).into_owned())
}

/// gitattributes pattern matching `path` from the repository root.
/// Characters a pattern cannot hold literally become wildcards; matching
/// a few extra paths only makes their diffs binary as well.
fn attribute_pattern(path: &str) -> String {
    let mut out = String::from("/");
    for c in path.chars() {
        match c {
            '*' | '?' | '[' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            c if c.is_ascii_graphic() && c != '"' && c != '#' && c != '!' => out.push(c),
            _ => out.push('*'),
        }
    }
    out
}

pub(super) fn clone_at(src: &Path, dst: &Path, revision: &str) -> std::result::Result<(), String> {
    let parent = dst.parent().unwrap_or(Path::new("."));
    let mut cmd = git_cmd(parent, parent);
    cmd.args(["clone", "-q", "--no-hardlinks"])
        .arg(src)
        .arg(dst);
    run(cmd)?;
    let mut cmd = git_cmd(dst, parent);
    cmd.args(["checkout", "-q", "--detach", revision]);
    run(cmd)?;
    Ok(())
}

/// Initializes version control if needed and commits the current tree.
/// Returns the base commit id.
pub(super) fn commit_base(root: &Path, home: &Path) -> std::result::Result<String, String> {
    if !root.join(".git").exists() {
        let mut cmd = git_cmd(root, home);
        cmd.args(["init", "-q"]);
        run(cmd)?;
    }
    let mut cmd = git_cmd(root, home);
    cmd.args(["add", "-A", "--", "."]);
    run(cmd)?;
    let mut cmd = git_cmd(root, home);
    cmd.args(["status", "--porcelain"]);
    let dirty = !run(cmd)?.trim().is_empty();
    let mut cmd = git_cmd(root, home);
    cmd.args(["rev-parse", "--verify", "-q", "HEAD"]);
    let has_head = cmd.output().map(|o| o.status.success()).unwrap_or(false);
    if dirty || !has_head {
        let mut cmd = git_cmd(root, home);
        cmd.args([
            "-c",
            "commit.gpgsign=false",
            "commit",
            "-q",
            "--allow-empty",
            "--no-verify",
            "-m",
            "base",
        ]);
        run(cmd)?;
    }
    let mut cmd = git_cmd(root, home);
    cmd.args(["rev-parse", "HEAD"]);
    Ok(run(cmd)?.trim().to_string())
}

/// Unified diff of the working tree against the base commit, tracked and
/// new files alike, ordered by path. Uses a private index so the agent's
/// own index is left alone.
pub fn extract_patch(ws: &Workspace) -> Result<String> {
    let index = ws.shell.state_dir.join("patch.index");
    let _ = std::fs::remove_file(&index);
    let infra = |m: String| Error::Infra(format!("extracting patch: {m}"));
    let with_index = |args: &[&str]| {
        let mut cmd = git_cmd(&ws.root, &ws.shell.home);
        cmd.env("GIT_INDEX_FILE", &index).args(args);
        run(cmd)
    };
    with_index(&["read-tree", &ws.base_commit]).map_err(infra)?;
    with_index(&["add", "-A", "--", "."]).map_err(infra)?;
    // Text that is not UTF-8 cannot travel in a string patch; have git
    // encode those files as binary hunks instead.
    let changed =
        with_index(&["diff", "--cached", "--name-only", "-z", &ws.base_commit]).map_err(infra)?;
    let mut patterns = String::new();
    for path in changed.split('\0').filter(|p| !p.is_empty()) {
        let new = std::fs::read(ws.root.join(path)).unwrap_or_default();
        let mut cmd = git_cmd(&ws.root, &ws.shell.home);
        cmd.args(["cat-file", "blob", &format!("{}:{path}", ws.base_commit)]);
        let old = run_bytes(cmd).unwrap_or_default();
        if std::str::from_utf8(&new).is_err() || std::str::from_utf8(&old).is_err() {
            patterns.push_str(&attribute_pattern(path));
            patterns.push_str(" binary\n");
        }
    }
    let attributes = ws.shell.state_dir.join("patch.attributes");
    std::fs::write(&attributes, &patterns).map_err(|e| infra(e.to_string()))?;
    let attributes_arg = format!("core.attributesFile={}", attributes.display());
    let diff = with_index(&[
        "-c",
        &attributes_arg,
        "diff",
        "--cached",
        "--binary",
        "--no-color",
        "--no-ext-diff",
        "--no-renames",
        &ws.base_commit,
    ])
    .map_err(infra)?;
    let _ = std::fs::remove_file(&index);
    let _ = std::fs::remove_file(&attributes);
    Ok(diff)
}

/// Applies a patch produced by [`extract_patch`] to a tree. Whitespace-only
/// patches are a no-op.
pub fn apply_patch(root: &Path, patch: &str) -> std::result::Result<(), String> {
    if patch.trim().is_empty() {
        return Ok(());
    }
    let tmp = tempfile::Builder::new()
        .prefix("harness-patch")
        .tempfile()
        .map_err(|e| format!("cannot stage patch: {e}"))?;
    std::fs::write(tmp.path(), patch).map_err(|e| format!("cannot stage patch: {e}"))?;
    let mut cmd = git_cmd(root, root);
    cmd.args(["apply", "--whitespace=nowarn", "--binary"])
        .arg(tmp.path());
    run(cmd).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::super::testutil::workspace;
    use super::*;
    use crate::model::is_empty_patch;

    #[test]
    fn untouched_workspace_has_empty_patch() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        assert_eq!(extract_patch(&ws).unwrap(), "");
    }

    #[test]
    fn one_line_edit_gives_one_hunk() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        std::fs::write(ws.root.join("a.txt"), "a\nc\n").unwrap();
        let patch = extract_patch(&ws).unwrap();
        assert_eq!(patch.matches("\n@@ ").count(), 1);
        assert_eq!(patch.matches("diff --git").count(), 1);
        assert!(patch.contains("a/a.txt"));
        assert!(!is_empty_patch(&patch));
    }

    #[test]
    fn new_files_are_included_in_path_order() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        std::fs::write(ws.root.join("z.txt"), "z\n").unwrap();
        std::fs::write(ws.root.join("b.txt"), "b\n").unwrap();
        std::fs::write(ws.root.join("a.txt"), "changed\n").unwrap();
        let patch = extract_patch(&ws).unwrap();
        let a = patch.find("a/a.txt").unwrap();
        let b = patch.find("b/b.txt").unwrap();
        let z = patch.find("b/z.txt").unwrap();
        assert!(a < b && b < z);
    }

    #[test]
    fn header_only_patch_leaves_tree_unchanged() {
        // Oracle: apply to a scratch tree and compare hashes.
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let before = super::super::tree_hash(&ws.root).unwrap();
        let header_only = "diff --git a/a.txt b/a.txt\n--- a/a.txt\n+++ b/a.txt\n";
        let _ = apply_patch(&ws.root, header_only);
        let after = super::super::tree_hash(&ws.root).unwrap();
        assert_eq!(before == after, is_empty_patch(header_only));
        assert!(is_empty_patch(header_only));
    }
}
