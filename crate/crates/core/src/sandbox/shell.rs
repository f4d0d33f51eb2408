//! Bash tool.
//!
//! Each call spawns a fresh `bash` in its own process group. Working
//! directory and exported environment are saved on exit and restored on the
//! next call, which gives a persistent session without a long-lived
//! process to babysit. Timeouts kill the whole group.

use std::io::{self, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::{sandbox_env, Isolation, ToolResult, Workspace};
use crate::error::{IoContext, Result};

/// Bytes kept from each end of a command's output stream.
const CAPTURE_EDGE_BYTES: usize = 1 << 20;
/// How long to wait for stray pipe holders after the main process exits.
const DRAIN_GRACE: Duration = Duration::from_secs(2);

const RUNNER: &str = r#"__h_state="$1"; __h_root="$2"; __h_cwd="$3"
set --
cd -- "$__h_cwd" 2>/dev/null || cd -- "$__h_root"
if [ -f "$__h_state/env" ]; then . "$__h_state/env" >/dev/null 2>&1; fi
cd -- "$__h_cwd" 2>/dev/null || cd -- "$__h_root"
trap '__h_st=$?; pwd > "$__h_state/cwd"; export -n PWD OLDPWD SHLVL _ 2>/dev/null; export -p > "$__h_state/env"; exit $__h_st' EXIT
. "$__h_state/cmd.sh"
"#;

#[derive(Default)]
struct HeadTail {
    head: Vec<u8>,
    tail: Vec<u8>,
    total: usize,
}

impl HeadTail {
    fn push(&mut self, mut chunk: &[u8]) {
        self.total += chunk.len();
        if self.head.len() < CAPTURE_EDGE_BYTES {
            let take = (CAPTURE_EDGE_BYTES - self.head.len()).min(chunk.len());
            self.head.extend_from_slice(&chunk[..take]);
            chunk = &chunk[take..];
        }
        if !chunk.is_empty() {
            self.tail.extend_from_slice(chunk);
            if self.tail.len() > 2 * CAPTURE_EDGE_BYTES {
                let cut = self.tail.len() - CAPTURE_EDGE_BYTES;
                self.tail.drain(..cut);
            }
        }
    }

    /// Lossy text plus the number of bytes dropped from the middle.
    fn text(&self) -> (String, usize) {
        let tail_start = self.tail.len().saturating_sub(CAPTURE_EDGE_BYTES);
        let tail = &self.tail[tail_start..];
        let dropped = self.total - self.head.len() - tail.len();
        if dropped == 0 {
            let mut all = self.head.clone();
            all.extend_from_slice(tail);
            (String::from_utf8_lossy(&all).into_owned(), 0)
        } else {
            let mut s = String::from_utf8_lossy(&self.head).into_owned();
            s.push_str(&String::from_utf8_lossy(tail));
            (s, dropped)
        }
    }
}

pub(crate) struct RawOutput {
    pub text: String,
    /// Bytes of output never held in memory.
    pub dropped: usize,
    pub status: Option<i32>,
    pub timed_out: bool,
    pub elapsed: Duration,
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall on a process group we created.
    unsafe {
        libc::killpg(pid as libc::pid_t, libc::SIGKILL);
    }
}

/// Runs `cmd` with stdout and stderr interleaved on one pipe, killing its
/// process group after `timeout`.
pub(crate) fn run_captured(mut cmd: Command, timeout: Duration) -> io::Result<RawOutput> {
    let (mut reader, writer) = io::pipe()?;
    cmd.stdin(Stdio::null())
        .stdout(writer.try_clone()?)
        .stderr(writer)
        .process_group(0);
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    drop(cmd);

    let buffer = Arc::new(Mutex::new(HeadTail::default()));
    let (done_tx, done_rx) = std::sync::mpsc::channel();
    {
        let buffer = Arc::clone(&buffer);
        thread::spawn(move || {
            let mut chunk = [0u8; 8192];
            loop {
                match reader.read(&mut chunk) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => buffer.lock().expect("reader lock").push(&chunk[..n]),
                }
            }
            let _ = done_tx.send(());
        });
    }

    let pid = child.id();
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() >= timeout {
            timed_out = true;
            kill_group(pid);
            break child.wait()?;
        }
        thread::sleep(Duration::from_millis(5));
    };
    let elapsed = start.elapsed();
    // Background jobs die with the call.
    kill_group(pid);
    let _ = done_rx.recv_timeout(DRAIN_GRACE);

    let (text, dropped) = buffer.lock().expect("reader lock").text();
    let code = if timed_out {
        None
    } else {
        use std::os::unix::process::ExitStatusExt;
        status.code().or_else(|| status.signal().map(|s| 128 + s))
    };
    Ok(RawOutput {
        text,
        dropped,
        status: code,
        timed_out,
        elapsed,
    })
}

/// Caps `text` at `cap` characters, keeping the head and tail around an
/// explicit marker. Returns the text and whether anything was cut.
pub fn truncate_observation(text: &str, cap: usize) -> (String, bool) {
    truncate_with_loss(text, cap, 0)
}

/// `extra_omitted` counts characters already lost before the text reached us.
fn truncate_with_loss(text: &str, cap: usize, extra_omitted: usize) -> (String, bool) {
    let n = text.chars().count();
    if n <= cap && extra_omitted == 0 {
        return (text.to_string(), false);
    }
    let total = n + extra_omitted;
    let marker_for = |omitted: usize| format!("\n[... {omitted} characters truncated ...]\n");
    // The marker's width depends on the omitted count; settle it in a couple
    // of rounds.
    let mut keep = cap.saturating_sub(marker_for(total).chars().count());
    for _ in 0..3 {
        let m = marker_for(total - keep.min(n)).chars().count();
        keep = cap.saturating_sub(m);
    }
    let keep = keep.min(n);
    let marker = marker_for(total - keep);
    if marker.chars().count() > cap {
        return (text.chars().take(cap).collect(), true);
    }
    let head = keep.div_ceil(2);
    let tail = keep - head;
    let mut out: String = text.chars().take(head).collect();
    out.push_str(&marker);
    out.extend(text.chars().skip(n - tail));
    (out, true)
}

fn clamp_cwd(ws: &Workspace) -> std::path::PathBuf {
    let saved = std::fs::read_to_string(ws.shell.state_dir.join("cwd")).unwrap_or_default();
    let saved = Path::new(saved.trim_end_matches('\n'));
    match saved.canonicalize() {
        Ok(p) if p.starts_with(&ws.root) => p,
        _ => ws.root.clone(),
    }
}

/// Runs one command in the workspace's persistent shell session.
///
/// A timeout is reported in-band: `exit_code` is `None` and the output ends
/// with a timeout note. Only failures to spawn at all are errors.
pub fn bash_execute(ws: &mut Workspace, command: &str, timeout_seconds: u64) -> Result<ToolResult> {
    let state = &ws.shell.state_dir;
    let cmd_file = state.join("cmd.sh");
    std::fs::write(&cmd_file, command).at(&cmd_file)?;

    let mut cmd = match ws.config.isolation {
        Isolation::Directory => Command::new("bash"),
        Isolation::NoNetwork => {
            let mut c = Command::new("unshare");
            c.args(["-n", "-r", "bash"]);
            c
        }
    };
    cmd.arg("-c")
        .arg(RUNNER)
        .arg("bash")
        .arg(state)
        .arg(&ws.root)
        .arg(&ws.shell.cwd)
        .current_dir(&ws.shell.cwd);
    sandbox_env(&mut cmd, &ws.shell.home);

    let timeout = Duration::from_secs(timeout_seconds.max(1));
    let raw = run_captured(cmd, timeout).at(&ws.root)?;
    ws.shell.cwd = clamp_cwd(ws);

    let mut text = raw.text;
    if raw.timed_out {
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(&format!(
            "[command timed out after {timeout_seconds} seconds and was killed]"
        ));
    }
    let (output, truncated) = truncate_with_loss(&text, ws.config.observation_cap, raw.dropped);
    Ok(ToolResult {
        output,
        exit_code: raw.status,
        truncated,
        wall_time_seconds: raw.elapsed.as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::workspace;
    use super::*;

    #[test]
    fn echo() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = workspace(dir.path());
        let r = bash_execute(&mut ws, "echo hi", 10).unwrap();
        assert_eq!(r.output, "hi\n");
        assert_eq!(r.exit_code, Some(0));
        assert!(!r.truncated);
    }

    #[test]
    fn stderr_is_interleaved_and_status_kept() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = workspace(dir.path());
        let r = bash_execute(&mut ws, "echo out; echo err >&2; exit 3", 10).unwrap();
        assert_eq!(r.output, "out\nerr\n");
        assert_eq!(r.exit_code, Some(3));
    }

    #[test]
    fn cwd_and_env_persist() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = workspace(dir.path());
        bash_execute(&mut ws, "cd pkg && export FOO=bar", 10).unwrap();
        let r = bash_execute(&mut ws, "pwd; echo $FOO", 10).unwrap();
        assert_eq!(
            r.output,
            format!("{}\nbar\n", ws.root.join("pkg").display())
        );
    }

    #[test]
    fn leaving_the_root_is_clamped() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = workspace(dir.path());
        bash_execute(&mut ws, "cd /", 10).unwrap();
        let r = bash_execute(&mut ws, "pwd", 10).unwrap();
        assert_eq!(r.output, format!("{}\n", ws.root.display()));
    }

    #[test]
    fn timeout_kills_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = workspace(dir.path());
        let start = Instant::now();
        let r = bash_execute(&mut ws, "sleep 60", 1).unwrap();
        assert!(start.elapsed() < Duration::from_secs(10));
        assert_eq!(r.exit_code, None);
        assert!(!r.truncated);
        assert!(r.output.contains("timed out"));
    }

    #[test]
    fn background_jobs_do_not_hang_the_call() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = workspace(dir.path());
        let start = Instant::now();
        let r = bash_execute(&mut ws, "sleep 30 & echo started", 10).unwrap();
        assert!(start.elapsed() < Duration::from_secs(10));
        assert_eq!(r.output, "started\n");
    }

    #[test]
    fn large_output_is_truncated_to_cap() {
        let dir = tempfile::tempdir().unwrap();
        let mut ws = workspace(dir.path());
        ws.config.observation_cap = 1000;
        let r = bash_execute(&mut ws, "seq 1 5000; echo LAST-LINE", 10).unwrap();
        assert!(r.truncated);
        assert!(r.output.chars().count() <= 1000);
        assert!(r.output.starts_with("1\n2\n"));
        assert!(r.output.ends_with("LAST-LINE\n"));
        assert!(r.output.contains("characters truncated"));
    }

    #[test]
    fn truncation_boundary() {
        let s = "x".repeat(100);
        assert_eq!(truncate_observation(&s, 100), (s.clone(), false));
        let (t, cut) = truncate_observation(&"y".repeat(101), 100);
        assert!(cut);
        assert!(t.chars().count() <= 100);
        let (tiny, cut) = truncate_observation(&"z".repeat(50), 5);
        assert!(cut);
        assert_eq!(tiny, "zzzzz");
    }
}
