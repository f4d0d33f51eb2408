use std::os::unix::fs::PermissionsExt;
use std::path::{Component, Path, PathBuf};

use filetime::FileTime;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, IoContext, Result};

/// 2000-01-01T00:00:00Z
pub const NORMALIZED_MTIME: i64 = 946_684_800;

fn skip_git(entry: &walkdir::DirEntry) -> bool {
    entry.depth() == 1 && entry.file_name() == ".git"
}

pub fn copy_tree(src: &Path, dst: &Path) -> Result<()> {
    std::fs::create_dir_all(dst).at(dst)?;
    for entry in WalkDir::new(src).min_depth(1).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Infra(format!("walking {}: {e}", src.display())))?;
        let rel = entry
            .path()
            .strip_prefix(src)
            .expect("walk stays under src");
        let target = dst.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            std::fs::create_dir_all(&target).at(&target)?;
        } else if ft.is_symlink() {
            let link = std::fs::read_link(entry.path()).at(entry.path())?;
            std::os::unix::fs::symlink(&link, &target).at(&target)?;
        } else {
            std::fs::copy(entry.path(), &target).at(&target)?;
        }
    }
    Ok(())
}

pub(crate) fn normalize_mtimes(root: &Path) -> Result<()> {
    let t = FileTime::from_unix_time(NORMALIZED_MTIME, 0);
    let mut dirs = Vec::new();
    for entry in WalkDir::new(root)
        .into_iter()
        .filter_entry(|e| !skip_git(e))
    {
        let entry = entry.map_err(|e| Error::Infra(format!("walking {}: {e}", root.display())))?;
        if entry.file_type().is_dir() {
            dirs.push(entry.path().to_path_buf());
        } else {
            filetime::set_symlink_file_times(entry.path(), t, t).at(entry.path())?;
        }
    }
    // Directories last, deepest first, since touching children bumps them.
    for d in dirs.iter().rev() {
        filetime::set_symlink_file_times(d, t, t).at(d)?;
    }
    Ok(())
}

/// Content hash of a working tree, ignoring the top-level `.git`. Covers
/// paths, file bytes, the executable bit, and symlink targets.
pub fn tree_hash(root: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let walker = WalkDir::new(root)
        .min_depth(1)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| !skip_git(e));
    for entry in walker {
        let entry = entry.map_err(|e| Error::Infra(format!("walking {}: {e}", root.display())))?;
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walk stays under root");
        let rel = rel.to_string_lossy();
        let ft = entry.file_type();
        if ft.is_dir() {
            hasher.update(format!("D {rel}\n"));
        } else if ft.is_symlink() {
            let target = std::fs::read_link(entry.path()).at(entry.path())?;
            hasher.update(format!("L {rel} {}\n", target.display()));
        } else {
            let meta = entry.metadata().map_err(|e| Error::Infra(e.to_string()))?;
            let exec = meta.permissions().mode() & 0o111 != 0;
            let bytes = std::fs::read(entry.path()).at(entry.path())?;
            hasher.update(format!("F {rel} {exec} {}\n", bytes.len()));
            hasher.update(&bytes);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Resolves a tool-supplied path against `root` and refuses anything that
/// lands outside it, lexically or through symlinks. `root` must be
/// canonical.
pub fn resolve_inside(root: &Path, raw: &str) -> std::result::Result<PathBuf, String> {
    if raw.trim().is_empty() {
        return Err("path is empty".into());
    }
    let raw_path = Path::new(raw);
    let joined = if raw_path.is_absolute() {
        raw_path.to_path_buf()
    } else {
        root.join(raw_path)
    };
    let mut normal = PathBuf::new();
    for comp in joined.components() {
        match comp {
            Component::ParentDir => {
                if !normal.pop() {
                    return Err(format!("path {raw} escapes the workspace"));
                }
            }
            Component::CurDir => {}
            other => normal.push(other.as_os_str()),
        }
    }
    if !normal.starts_with(root) {
        return Err(format!("path {raw} is outside the workspace"));
    }
    // Follow symlinks on the deepest existing ancestor.
    let mut probe = normal.as_path();
    loop {
        if std::fs::symlink_metadata(probe).is_ok() {
            let real = probe
                .canonicalize()
                .map_err(|e| format!("cannot resolve {raw}: {e}"))?;
            if !real.starts_with(root) {
                return Err(format!("path {raw} resolves outside the workspace"));
            }
            let rest = normal.strip_prefix(probe).expect("probe is an ancestor");
            if rest.as_os_str().is_empty() {
                return Ok(real);
            }
            return Ok(real.join(rest));
        }
        match probe.parent() {
            Some(p) => probe = p,
            None => return Err(format!("cannot resolve {raw}")),
        }
    }
}
