#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use harness::eval::AttemptExecutor;
use harness::model::{
    AttemptStatus, AttemptSummary, EventPayload, Resolved, TaskInstance, Trajectory,
};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Map, Value};
use walkdir::WalkDir;

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

pub fn toy_suite() -> PathBuf {
    toy_dir().join("suite.jsonl")
}

pub fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Writes a suite holding the first `n` toy instances with absolute repo
/// paths.
pub fn toy_subset(dir: &Path, n: usize) -> PathBuf {
    let text = std::fs::read_to_string(toy_suite()).unwrap();
    let lines: Vec<String> = text
        .lines()
        .take(n)
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            let rel = v["repo_source"].as_str().unwrap().to_string();
            v["repo_source"] = json!(toy_dir().join(rel));
            v.to_string()
        })
        .collect();
    let path = dir.join("suite.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

pub fn solve_rules() -> Vec<Value> {
    let text = std::fs::read_to_string(toy_dir().join("backend-solve.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    v["rules"].as_array().unwrap().clone()
}

pub fn synthetic_instance(id: &str) -> TaskInstance {
    TaskInstance {
        id: id.to_string(),
        repo_source: PathBuf::from("."),
        base_revision: "HEAD".into(),
        problem_statement: "p".into(),
        setup_commands: vec![],
        fail_to_pass: vec!["t".into()],
        pass_to_pass: vec![],
        test_command_template: "true {test}".into(),
        timeout_seconds: 1,
    }
}

pub fn summary(
    instance_id: &str,
    attempt_index: u32,
    temperature: f64,
    status: AttemptStatus,
    resolved: Resolved,
    patch_empty: bool,
) -> AttemptSummary {
    AttemptSummary {
        instance_id: instance_id.to_string(),
        attempt_index,
        temperature,
        status,
        resolved,
        patch_empty,
        patch: if patch_empty {
            String::new()
        } else {
            format!("diff --git a/{instance_id} b/{instance_id}\n")
        },
        assistant_turns: 3,
        infra_retries: 0,
        duration_seconds: 0.0,
    }
}

/// Synthetic outcome of one (instance, attempt): status, resolved, empty.
pub type Cell = (AttemptStatus, Resolved, bool);

/// Executor answering from a fixed table keyed by instance id and attempt.
pub struct TableExecutor(pub BTreeMap<(String, u32), Cell>);

impl AttemptExecutor for TableExecutor {
    fn execute(
        &self,
        instance: &TaskInstance,
        attempt_index: u32,
        temperature: f64,
    ) -> harness::Result<AttemptSummary> {
        let (status, resolved, empty) = self.0[&(instance.id.clone(), attempt_index)];
        Ok(summary(
            &instance.id,
            attempt_index,
            temperature,
            status,
            resolved,
            empty,
        ))
    }
}

/// Every regular file under `root` outside `.git`, with its bytes and
/// executable bit.
pub fn snapshot(root: &Path) -> BTreeMap<String, (Vec<u8>, bool)> {
    use std::os::unix::fs::PermissionsExt;
    WalkDir::new(root)
        .into_iter()
        .filter_entry(|e| e.file_name() != ".git")
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e
                .path()
                .strip_prefix(root)
                .unwrap()
                .to_string_lossy()
                .into_owned();
            let mode = e.metadata().unwrap().permissions().mode();
            (rel, (std::fs::read(e.path()).unwrap(), mode & 0o111 != 0))
        })
        .collect()
}

const TRICKY: [&str; 18] = [
    "<", ">", "&", "\"", "'", "]]>", "\r", "\r\n", "\n", "\t", "\u{1}", "\u{0}", "é", "🦀",
    "&amp;", " ", "<!--", "\u{7f}",
];

pub fn random_text<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    let mut s = String::new();
    for _ in 0..len {
        if rng.gen_bool(0.3) {
            s.push_str(TRICKY.choose(rng).unwrap());
        } else {
            s.push(rng.gen_range(b' '..=b'~') as char);
        }
    }
    s
}

fn random_value<R: Rng>(rng: &mut R, depth: u32) -> Value {
    match rng.gen_range(0..if depth > 1 { 5 } else { 7 }) {
        0 | 1 => Value::String(random_text(rng, 20)),
        2 => json!(rng.gen_range(-1000i64..1000)),
        3 => json!(rng.gen_bool(0.5)),
        4 => Value::Null,
        5 => Value::Array(
            (0..rng.gen_range(0..3))
                .map(|_| random_value(rng, depth + 1))
                .collect(),
        ),
        _ => {
            let mut m = Map::new();
            for _ in 0..rng.gen_range(0..3) {
                m.insert(random_text(rng, 5), random_value(rng, depth + 1));
            }
            Value::Object(m)
        }
    }
}

const NAMES: [&str; 10] = [
    "bash",
    "file_edit",
    "finish",
    "tool_call",
    "weird name",
    "9lives",
    "xml_tool",
    "a-b.c",
    "",
    "ünï",
];
const KEYS: [&str; 9] = [
    "command", "path", "arg", "name", "type", "raw", "1bad", "a b", "",
];

pub fn random_arguments<R: Rng>(rng: &mut R) -> String {
    match rng.gen_range(0..10) {
        0 => random_text(rng, 15),
        1 => "[1,2]".into(),
        _ => {
            let mut m = Map::new();
            for _ in 0..rng.gen_range(0..4) {
                let key = if rng.gen_bool(0.7) {
                    KEYS.choose(rng).unwrap().to_string()
                } else {
                    random_text(rng, 6)
                };
                m.insert(key, random_value(rng, 0));
            }
            Value::Object(m).to_string()
        }
    }
}

/// A structurally valid trajectory with random text, tool names, argument
/// shapes, and rejected calls.
pub fn random_trajectory<R: Rng>(rng: &mut R, id: &str) -> Trajectory {
    let mut t = Trajectory::new(id, 0.0);
    t.push(EventPayload::SystemPrompt {
        text: random_text(rng, 40),
    });
    t.push(EventPayload::UserTask {
        text: random_text(rng, 20),
    });
    let turns = rng.gen_range(1..8u32);
    let mut call_no = 0;
    for turn in 1..=turns {
        if rng.gen_bool(0.5) {
            t.push(EventPayload::AssistantMessage {
                turn,
                content: random_text(rng, 30),
            });
        }
        let last = turn == turns;
        let calls = if last { 0 } else { rng.gen_range(0..4) };
        if calls == 0 && !last {
            t.push(EventPayload::AssistantMessage {
                turn,
                content: "thinking".into(),
            });
            t.push(EventPayload::UserTask {
                text: "use a tool".into(),
            });
        }
        let mut ids = Vec::new();
        for _ in 0..calls {
            call_no += 1;
            let call_id = format!("call_{call_no}");
            let tool = if rng.gen_bool(0.8) {
                NAMES.choose(rng).unwrap().to_string()
            } else {
                random_text(rng, 8)
            };
            t.push(EventPayload::ToolCall {
                turn,
                call_id: call_id.clone(),
                tool,
                arguments: random_arguments(rng),
            });
            ids.push(call_id);
        }
        for call_id in ids {
            t.push(EventPayload::ToolObservation {
                call_id,
                output: random_text(rng, 30),
                exit_code: if rng.gen_bool(0.5) {
                    Some(rng.gen_range(0..3))
                } else {
                    None
                },
                truncated: false,
                rejected: rng.gen_bool(0.1),
            });
        }
        if last {
            let arguments = if rng.gen_bool(0.5) {
                "{}".to_string()
            } else {
                random_arguments(rng)
            };
            t.push(EventPayload::Finish {
                turn,
                call_id: format!("call_{}", call_no + 1),
                arguments,
            });
        }
    }
    t
}
