//! File-edit tool: view, create, str_replace, insert. Every failure is an
//! in-band message for the agent; nothing here aborts an episode.

use std::path::Path;
use std::time::Instant;

use walkdir::WalkDir;

use super::{resolve_inside, ToolResult, Workspace};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EditRequest {
    /// `range` is 1-based and inclusive; an end of -1 means end of file.
    View {
        path: String,
        range: Option<(i64, i64)>,
    },
    Create {
        path: String,
        file_text: String,
    },
    StrReplace {
        path: String,
        old_str: String,
        new_str: String,
    },
    /// Inserts after line `insert_line`; 0 inserts at the top.
    Insert {
        path: String,
        insert_line: u64,
        new_str: String,
    },
}

impl EditRequest {
    pub fn path(&self) -> &str {
        match self {
            EditRequest::View { path, .. }
            | EditRequest::Create { path, .. }
            | EditRequest::StrReplace { path, .. }
            | EditRequest::Insert { path, .. } => path,
        }
    }
}

fn display(root: &Path, path: &Path) -> String {
    match path.strip_prefix(root) {
        Ok(rel) if rel.as_os_str().is_empty() => ".".into(),
        Ok(rel) => rel.display().to_string(),
        Err(_) => path.display().to_string(),
    }
}

pub fn file_edit(ws: &Workspace, request: &EditRequest) -> ToolResult {
    let start = Instant::now();
    let output = match run(ws, request) {
        Ok(s) => s,
        Err(e) => format!("Error: {e}"),
    };
    ToolResult::editor(output, start.elapsed().as_secs_f64())
}

fn read_text(path: &Path, shown: &str) -> Result<String, String> {
    if !path.exists() {
        return Err(format!("{shown} does not exist"));
    }
    if path.is_dir() {
        return Err(format!("{shown} is a directory"));
    }
    let bytes = std::fs::read(path).map_err(|e| format!("cannot read {shown}: {e}"))?;
    String::from_utf8(bytes).map_err(|_| format!("{shown} is not valid UTF-8 text"))
}

fn write_text(path: &Path, shown: &str, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("cannot write {shown}: {e}"))
}

fn run(ws: &Workspace, request: &EditRequest) -> Result<String, String> {
    let path = resolve_inside(&ws.root, request.path())?;
    let shown = display(&ws.root, &path);
    match request {
        EditRequest::View { range, .. } => {
            if path.is_dir() {
                return Ok(list_dir(&ws.root, &path));
            }
            let text = read_text(&path, &shown)?;
            view(&text, *range)
        }
        EditRequest::Create { file_text, .. } => {
            if std::fs::symlink_metadata(&path).is_ok() {
                return Err(format!(
                    "{shown} already exists; use str_replace or insert to modify it"
                ));
            }
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| format!("cannot create parent of {shown}: {e}"))?;
            }
            write_text(&path, &shown, file_text)?;
            Ok(format!("Created {shown}."))
        }
        EditRequest::StrReplace {
            old_str, new_str, ..
        } => {
            if old_str.is_empty() {
                return Err("old_str must not be empty".into());
            }
            let text = read_text(&path, &shown)?;
            let count = text.matches(old_str.as_str()).count();
            if count != 1 {
                return Err(format!(
                    "no replacement performed: old_str has {count} occurrences in {shown}; it must occur exactly once"
                ));
            }
            write_text(&path, &shown, &text.replacen(old_str.as_str(), new_str, 1))?;
            Ok(format!("Edited {shown}: replaced 1 occurrence."))
        }
        EditRequest::Insert {
            insert_line,
            new_str,
            ..
        } => {
            let text = read_text(&path, &shown)?;
            let lines: Vec<&str> = text.split_inclusive('\n').collect();
            let at = *insert_line as usize;
            if at > lines.len() {
                return Err(format!(
                    "insert_line {at} is out of range; {shown} has {} lines",
                    lines.len()
                ));
            }
            let mut block = new_str.clone();
            if !block.ends_with('\n') {
                block.push('\n');
            }
            let mut out = String::with_capacity(text.len() + block.len() + 1);
            for line in &lines[..at] {
                out.push_str(line);
            }
            if at > 0 && !out.ends_with('\n') {
                out.push('\n');
            }
            out.push_str(&block);
            for line in &lines[at..] {
                out.push_str(line);
            }
            write_text(&path, &shown, &out)?;
            Ok(format!("Inserted text after line {at} of {shown}."))
        }
    }
}

fn view(text: &str, range: Option<(i64, i64)>) -> Result<String, String> {
    let lines: Vec<&str> = text.lines().collect();
    let n = lines.len() as i64;
    let (start, end) = match range {
        None => (1, n),
        Some((s, e)) => {
            let e = if e == -1 { n } else { e };
            if s < 1 || s > n.max(1) || e < s || e > n {
                return Err(format!(
                    "invalid view range [{s}, {e}] for a file of {n} lines"
                ));
            }
            (s, e)
        }
    };
    let mut out = String::new();
    for (i, line) in lines
        .iter()
        .enumerate()
        .skip((start - 1) as usize)
        .take((end - start + 1).max(0) as usize)
    {
        out.push_str(&format!("{:6}\t{line}\n", i + 1));
    }
    Ok(out)
}

/// Non-hidden entries up to two levels deep.
fn list_dir(root: &Path, dir: &Path) -> String {
    let mut out = String::new();
    let walker = WalkDir::new(dir)
        .min_depth(1)
        .max_depth(2)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker.flatten() {
        out.push_str(&display(root, entry.path()));
        if entry.file_type().is_dir() {
            out.push('/');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::testutil::workspace;
    use super::super::tree_hash;
    use super::*;

    fn replace(path: &str, old: &str, new: &str) -> EditRequest {
        EditRequest::StrReplace {
            path: path.into(),
            old_str: old.into(),
            new_str: new.into(),
        }
    }

    #[test]
    fn str_replace_unique() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let r = file_edit(&ws, &replace("a.txt", "b", "c"));
        assert!(!r.output.starts_with("Error"), "{}", r.output);
        assert_eq!(r.exit_code, None);
        assert_eq!(
            std::fs::read_to_string(ws.root.join("a.txt")).unwrap(),
            "a\nc\n"
        );
    }

    #[test]
    fn str_replace_counts() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let r = file_edit(&ws, &replace("a.txt", "x", "y"));
        assert!(r.output.contains("0 occurrences"), "{}", r.output);
        std::fs::write(ws.root.join("a.txt"), "b b\n").unwrap();
        let r = file_edit(&ws, &replace("a.txt", "b", "y"));
        assert!(r.output.contains("2 occurrences"), "{}", r.output);
        assert_eq!(
            std::fs::read_to_string(ws.root.join("a.txt")).unwrap(),
            "b b\n"
        );
    }

    #[test]
    fn create_existing_leaves_tree_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let before = tree_hash(&ws.root).unwrap();
        let r = file_edit(
            &ws,
            &EditRequest::Create {
                path: "a.txt".into(),
                file_text: "clobber".into(),
            },
        );
        assert!(r.output.starts_with("Error"));
        assert_eq!(tree_hash(&ws.root).unwrap(), before);
    }

    #[test]
    fn create_makes_parents() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        file_edit(
            &ws,
            &EditRequest::Create {
                path: "new/deep/f.py".into(),
                file_text: "print(1)\n".into(),
            },
        );
        assert!(ws.root.join("new/deep/f.py").exists());
    }

    #[test]
    fn view_numbers_lines_and_ranges() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let all = file_edit(
            &ws,
            &EditRequest::View {
                path: "a.txt".into(),
                range: None,
            },
        );
        assert_eq!(all.output, "     1\ta\n     2\tb\n");
        let second = file_edit(
            &ws,
            &EditRequest::View {
                path: "a.txt".into(),
                range: Some((2, -1)),
            },
        );
        assert_eq!(second.output, "     2\tb\n");
        let bad = file_edit(
            &ws,
            &EditRequest::View {
                path: "a.txt".into(),
                range: Some((3, 1)),
            },
        );
        assert!(bad.output.starts_with("Error"));
        let missing = file_edit(
            &ws,
            &EditRequest::View {
                path: "nope".into(),
                range: None,
            },
        );
        assert!(missing.output.contains("does not exist"));
        let listing = file_edit(
            &ws,
            &EditRequest::View {
                path: ".".into(),
                range: None,
            },
        );
        assert_eq!(listing.output, "a.txt\npkg/\npkg/mod.py\n");
    }

    #[test]
    fn insert_positions() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let ins = |line, s: &str| {
            file_edit(
                &ws,
                &EditRequest::Insert {
                    path: "a.txt".into(),
                    insert_line: line,
                    new_str: s.into(),
                },
            )
        };
        ins(0, "top");
        ins(3, "end");
        assert_eq!(
            std::fs::read_to_string(ws.root.join("a.txt")).unwrap(),
            "top\na\nb\nend\n"
        );
        assert!(ins(99, "x").output.contains("out of range"));
    }

    #[test]
    fn path_traversal_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let ws = workspace(dir.path());
        let outside = dir.path().join("outside.txt");
        for p in [
            "../outside.txt",
            "../../outside.txt",
            outside.to_str().unwrap(),
        ] {
            let r = file_edit(
                &ws,
                &EditRequest::Create {
                    path: p.into(),
                    file_text: "x".into(),
                },
            );
            assert!(r.output.starts_with("Error"), "{p}: {}", r.output);
        }
        assert!(!outside.exists());
    }
}
