/// Header lines that change the tree even when no hunk follows.
const TREE_CHANGING_HEADERS: &[&str] = &[
    "new file mode",
    "deleted file mode",
    "old mode",
    "new mode",
    "rename from",
    "rename to",
    "copy from",
    "copy to",
    "GIT binary patch",
    "Binary files ",
];

/// True iff the patch changes no tree content.
///
/// Whitespace-only patch lines and per-file headers that carry no hunk are
/// ignored. Hunk lines count only when they add or remove a line; file
/// creation, deletion, mode changes, renames and binary payloads count even
/// without hunks.
pub fn is_empty_patch(patch: &str) -> bool {
    let mut in_hunk = false;
    for line in patch.lines() {
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with("diff ") {
            in_hunk = false;
            continue;
        }
        if line.starts_with("@@") {
            in_hunk = true;
            continue;
        }
        if in_hunk {
            if (line.starts_with('+') && !line.starts_with("+++ "))
                || (line.starts_with('-') && !line.starts_with("--- "))
            {
                return false;
            }
            continue;
        }
        if TREE_CHANGING_HEADERS.iter().any(|h| line.starts_with(h)) {
            return false;
        }
    }
    true
}
