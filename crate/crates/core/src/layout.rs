//! On-disk layout of a run directory.
//!
//! ```text
//! <output_dir>/
//!   manifest.json
//!   attempts.jsonl          one AttemptSummary per executed attempt
//!   outcomes.jsonl          final InstanceOutcome per instance
//!   report.json / report.txt / plot.json
//!   instances/<id>/attempt<k>/
//!     repo/                 the agent's workspace root
//!     sandbox/              shell state and HOME
//!     events.jsonl  requests.jsonl  patch.diff  attempt.json  verify.json
//! ```

use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ATTEMPTS_FILE: &str = "attempts.jsonl";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const PLOT_FILE: &str = "plot.json";

pub const EVENTS_FILE: &str = "events.jsonl";
pub const REQUESTS_FILE: &str = "requests.jsonl";
pub const PATCH_FILE: &str = "patch.diff";
pub const ATTEMPT_FILE: &str = "attempt.json";
pub const VERIFY_FILE: &str = "verify.json";
pub const VERIFY_DIR: &str = "verify";

pub fn instance_dir(run_dir: &Path, instance_id: &str) -> PathBuf {
    run_dir.join("instances").join(instance_id)
}

pub fn attempt_dir(run_dir: &Path, instance_id: &str, attempt_index: u32) -> PathBuf {
    instance_dir(run_dir, instance_id).join(format!("attempt{attempt_index}"))
}
