//! Two-stage trajectory filtering and export of supervised samples.
//!
//! Stage 1 is a cheap heuristic gate: the agent finished on its own, left a
//! non-empty patch, took between 2 and `max_iterations` turns, and never
//! issued a rejected tool call. Stage 2 additionally requires that the
//! patch resolved the instance under verification.

mod render;

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};
use crate::layout;
use crate::llm::conversation_from_events;
use crate::model::{read_event_log, AttemptStatus, AttemptSummary, EventKind, Trajectory};
use crate::runner::RunManifest;

pub use render::{
    normalize_actions, parse_function_calling, parse_xml, render_function_calling, render_xml,
    ActionSeq, Arguments,
};

pub const MIN_TURNS: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    NotFinished,
    EmptyPatch,
    TooFewTurns,
    TooManyTurns,
    AgentErrorStrikes,
    Stage1Failed,
    TestsFailed,
    Unverified,
}

impl ReasonCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReasonCode::NotFinished => "not_finished",
            ReasonCode::EmptyPatch => "empty_patch",
            ReasonCode::TooFewTurns => "too_few_turns",
            ReasonCode::TooManyTurns => "too_many_turns",
            ReasonCode::AgentErrorStrikes => "agent_error_strikes",
            ReasonCode::Stage1Failed => "stage1_failed",
            ReasonCode::TestsFailed => "tests_failed",
            ReasonCode::Unverified => "unverified",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub trajectory_id: String,
    pub stage1_pass: bool,
    pub stage1_reasons: Vec<ReasonCode>,
    /// False until `stage2_filter` has run.
    pub stage2_pass: bool,
    pub stage2_reasons: Vec<ReasonCode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageLabel {
    Stage1,
    Stage2,
}

impl std::str::FromStr for StageLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "stage1" => Ok(StageLabel::Stage1),
            "2" | "stage2" => Ok(StageLabel::Stage2),
            other => Err(Error::Config(format!(
                "unknown stage {other:?}; expected 1 or 2"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    FunctionCalling,
    XmlPseudoScaffold,
}

impl ExportFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExportFormat::FunctionCalling => "function_calling",
            ExportFormat::XmlPseudoScaffold => "xml_pseudo_scaffold",
        }
    }
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "function_calling" => Ok(ExportFormat::FunctionCalling),
            "xml" | "xml_pseudo_scaffold" => Ok(ExportFormat::XmlPseudoScaffold),
            other => Err(Error::Config(format!(
                "unknown format {other:?}; expected function_calling or xml"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub format: ExportFormat,
    pub stage_label: StageLabel,
    pub source_trajectory_id: String,
    /// A JSON object for function calling, a string for XML.
    pub rendered_conversation: Value,
}

impl SftSample {
    /// Exact text the deduplication hash is taken over.
    pub fn rendered_text(&self) -> String {
        match &self.rendered_conversation {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }

    /// Reads the action sequence back out of the rendering.
    pub fn actions(&self) -> std::result::Result<ActionSeq, String> {
        match self.format {
            ExportFormat::FunctionCalling => parse_function_calling(&self.rendered_conversation),
            ExportFormat::XmlPseudoScaffold => parse_xml(
                self.rendered_conversation
                    .as_str()
                    .ok_or("xml sample is not a string")?,
            ),
        }
    }
}

/// Stage-1 verdict; every failed check contributes a reason.
pub fn stage1_filter(
    trajectory_id: &str,
    trajectory: &Trajectory,
    attempt: &AttemptSummary,
    max_iterations: Option<u32>,
) -> FilterVerdict {
    let mut reasons = Vec::new();
    if attempt.status != AttemptStatus::Finished {
        reasons.push(ReasonCode::NotFinished);
    }
    if attempt.patch_empty {
        reasons.push(ReasonCode::EmptyPatch);
    }
    if trajectory.assistant_turns < MIN_TURNS {
        reasons.push(ReasonCode::TooFewTurns);
    }
    if max_iterations.is_some_and(|m| trajectory.assistant_turns > m) {
        reasons.push(ReasonCode::TooManyTurns);
    }
    if trajectory.rejected_calls() > 0 {
        reasons.push(ReasonCode::AgentErrorStrikes);
    }
    FilterVerdict {
        trajectory_id: trajectory_id.to_string(),
        stage1_pass: reasons.is_empty(),
        stage1_reasons: reasons,
        stage2_pass: false,
        stage2_reasons: Vec::new(),
    }
}

/// Stage-2 verdict from the verification outcome, `None` when the
/// attempt was never verified.
pub fn stage2_filter(mut verdict: FilterVerdict, resolved: Option<bool>) -> FilterVerdict {
    let mut reasons = Vec::new();
    if !verdict.stage1_pass {
        reasons.push(ReasonCode::Stage1Failed);
    }
    match resolved {
        None => reasons.push(ReasonCode::Unverified),
        Some(false) => reasons.push(ReasonCode::TestsFailed),
        Some(true) => {}
    }
    verdict.stage2_pass = reasons.is_empty();
    verdict.stage2_reasons = reasons;
    verdict
}

fn check_renderable(trajectory: &Trajectory) -> std::result::Result<(), String> {
    if trajectory.events.first().map(|e| e.kind()) != Some(EventKind::SystemPrompt) {
        return Err("trajectory does not open with a system prompt".into());
    }
    if trajectory.actions().is_empty() {
        return Err("trajectory has no actions".into());
    }
    Ok(())
}

pub fn render_sample(
    id: &str,
    trajectory: &Trajectory,
    stage: StageLabel,
    format: ExportFormat,
) -> std::result::Result<SftSample, String> {
    check_renderable(trajectory)?;
    let messages = conversation_from_events(&trajectory.events);
    let rendered_conversation = match format {
        ExportFormat::FunctionCalling => render_function_calling(&messages),
        ExportFormat::XmlPseudoScaffold => Value::String(render_xml(&messages)),
    };
    Ok(SftSample {
        format,
        stage_label: stage,
        source_trajectory_id: id.to_string(),
        rendered_conversation,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Export {
    pub samples: Vec<SftSample>,
    /// (trajectory id, reason) for every input that could not be rendered.
    pub skipped: Vec<(String, String)>,
    pub duplicates: usize,
}

/// Renders each trajectory, dropping any whose rendered text was already
/// emitted.
pub fn export_sft<'a>(
    trajectories: impl IntoIterator<Item = (&'a str, &'a Trajectory, StageLabel)>,
    format: ExportFormat,
) -> Export {
    let mut seen = HashSet::new();
    let mut out = Export::default();
    for (id, trajectory, stage) in trajectories {
        match render_sample(id, trajectory, stage, format) {
            Ok(sample) => {
                let digest: [u8; 32] = Sha256::digest(sample.rendered_text().as_bytes()).into();
                if seen.insert(digest) {
                    out.samples.push(sample);
                } else {
                    out.duplicates += 1;
                }
            }
            Err(reason) => {
                tracing::warn!(trajectory = id, %reason, "skipping trajectory");
                out.skipped.push((id.to_string(), reason));
            }
        }
    }
    out
}

/// One attempt found under a run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    /// Attempt directory relative to the run directory.
    pub trajectory_id: String,
    pub trajectory: Trajectory,
    pub attempt: AttemptSummary,
    pub resolved: Option<bool>,
    pub max_iterations: Option<u32>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn budget_limit(relative: &Path) -> Option<u32> {
    relative.components().find_map(|c| {
        c.as_os_str()
            .to_str()?
            .strip_prefix("budget-")?
            .parse()
            .ok()
    })
}

/// Collects every attempt with an event log under `run_dir`, in path
/// order. The iteration limit comes from the run manifest, or from the
/// enclosing `budget-N` directory.
pub fn load_corpus(run_dir: &Path) -> Result<Vec<CorpusEntry>> {
    if !run_dir.is_dir() {
        return Err(Error::Config(format!(
            "run directory {} does not exist",
            run_dir.display()
        )));
    }
    let manifest_path = run_dir.join(layout::MANIFEST_FILE);
    let manifest_limit = if manifest_path.exists() {
        RunManifest::load(&manifest_path)?.config["max_iterations"]
            .as_u64()
            .map(|n| n as u32)
    } else {
        None
    };
    let walker = walkdir::WalkDir::new(run_dir)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            let name = e.file_name();
            !(e.file_type().is_dir()
                && (name == "repo" || name == layout::VERIFY_DIR || name == "sandbox"))
        });
    let mut entries = Vec::new();
    for entry in walker {
        let entry = entry.map_err(|e| Error::Io {
            path: e
                .path()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| run_dir.to_path_buf()),
            source: e.into(),
        })?;
        if entry.file_name() != layout::ATTEMPT_FILE {
            continue;
        }
        let dir = entry.path().parent().unwrap_or(run_dir);
        let events = dir.join(layout::EVENTS_FILE);
        if !events.exists() {
            continue;
        }
        let relative: PathBuf = dir.strip_prefix(run_dir).unwrap_or(dir).to_path_buf();
        let attempt: AttemptSummary = read_json(entry.path())?;
        let (_, trajectory) = read_event_log(&events)?;
        let verify_path = dir.join(layout::VERIFY_FILE);
        let resolved = if verify_path.exists() {
            read_json::<Value>(&verify_path)?["resolved"].as_bool()
        } else {
            None
        };
        entries.push(CorpusEntry {
            trajectory_id: relative
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/"),
            trajectory,
            attempt,
            resolved,
            max_iterations: budget_limit(&relative).or(manifest_limit),
        });
    }
    Ok(entries)
}

pub fn filter_entry(entry: &CorpusEntry) -> FilterVerdict {
    let v = stage1_filter(
        &entry.trajectory_id,
        &entry.trajectory,
        &entry.attempt,
        entry.max_iterations,
    );
    stage2_filter(v, entry.resolved)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curation {
    pub verdicts: Vec<FilterVerdict>,
    pub export: Export,
    /// Failed checks per reason code at the requested stage.
    pub reason_counts: BTreeMap<ReasonCode, usize>,
}

impl Curation {
    /// Human-readable counts, one line each.
    pub fn summary(&self, stage: StageLabel) -> String {
        let passed = self.verdicts.iter().filter(|v| passes(v, stage)).count();
        let mut out = format!(
            "trajectories: {}\npassed: {passed}\nexported: {}\nduplicates: {}\nskipped: {}\n",
            self.verdicts.len(),
            self.export.samples.len(),
            self.export.duplicates,
            self.export.skipped.len()
        );
        for (code, n) in &self.reason_counts {
            out.push_str(&format!("{}: {n}\n", code.as_str()));
        }
        out
    }
}

fn passes(v: &FilterVerdict, stage: StageLabel) -> bool {
    match stage {
        StageLabel::Stage1 => v.stage1_pass,
        StageLabel::Stage2 => v.stage2_pass,
    }
}

/// Filters every attempt under `run_dir` and exports the ones that pass
/// `stage` in `format`.
pub fn curate(run_dir: &Path, stage: StageLabel, format: ExportFormat) -> Result<Curation> {
    let corpus = load_corpus(run_dir)?;
    let verdicts: Vec<FilterVerdict> = corpus.iter().map(filter_entry).collect();
    let mut reason_counts = BTreeMap::new();
    for v in &verdicts {
        let reasons = match stage {
            StageLabel::Stage1 => &v.stage1_reasons,
            StageLabel::Stage2 => &v.stage2_reasons,
        };
        for r in reasons {
            *reason_counts.entry(*r).or_insert(0) += 1;
        }
    }
    let export = export_sft(
        corpus
            .iter()
            .zip(&verdicts)
            .filter(|(_, v)| passes(v, stage))
            .map(|(e, _)| (e.trajectory_id.as_str(), &e.trajectory, stage)),
        format,
    );
    Ok(Curation {
        verdicts,
        export,
        reason_counts,
    })
}

/// Writes one JSON sample per line.
pub fn write_samples(path: &Path, samples: &[SftSample]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).at(parent)?;
    }
    let file = std::fs::File::create(path).at(path)?;
    let mut w = std::io::BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}

pub fn read_samples(path: &Path) -> Result<Vec<SftSample>> {
    let text = std::fs::read_to_string(path).at(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EventPayload, Resolved};

    fn trajectory(turns: u32, rejected: bool) -> Trajectory {
        let mut t = Trajectory::new("x", 0.0);
        t.push(EventPayload::SystemPrompt { text: "sys".into() });
        t.push(EventPayload::UserTask { text: "go".into() });
        for turn in 1..turns {
            t.push(EventPayload::ToolCall {
                turn,
                call_id: format!("c{turn}"),
                tool: "bash".into(),
                arguments: r#"{"command":"ls"}"#.into(),
            });
            t.push(EventPayload::ToolObservation {
                call_id: format!("c{turn}"),
                output: "ok".into(),
                exit_code: Some(0),
                truncated: false,
                rejected,
            });
        }
        t.push(EventPayload::Finish {
            turn: turns,
            call_id: "f".into(),
            arguments: "{}".into(),
        });
        t
    }

    fn summary(status: AttemptStatus, empty: bool) -> AttemptSummary {
        AttemptSummary {
            instance_id: "x".into(),
            attempt_index: 0,
            temperature: 0.0,
            status,
            resolved: Resolved::NotEvaluated,
            patch_empty: empty,
            patch: String::new(),
            assistant_turns: 0,
            infra_retries: 0,
            duration_seconds: 0.0,
        }
    }

    #[test]
    fn stage1_examples() {
        let t = trajectory(10, false);
        assert!(
            stage1_filter("a", &t, &summary(AttemptStatus::Finished, false), Some(50)).stage1_pass
        );
        let v = stage1_filter(
            "a",
            &t,
            &summary(AttemptStatus::IterationLimit, false),
            Some(50),
        );
        assert_eq!(v.stage1_reasons, [ReasonCode::NotFinished]);
        let v = stage1_filter("a", &t, &summary(AttemptStatus::Finished, true), Some(50));
        assert_eq!(v.stage1_reasons, [ReasonCode::EmptyPatch]);
        let v = stage1_filter(
            "a",
            &trajectory(1, false),
            &summary(AttemptStatus::Finished, true),
            Some(5),
        );
        assert_eq!(
            v.stage1_reasons,
            [ReasonCode::EmptyPatch, ReasonCode::TooFewTurns]
        );
        let v = stage1_filter("a", &t, &summary(AttemptStatus::Finished, false), Some(9));
        assert_eq!(v.stage1_reasons, [ReasonCode::TooManyTurns]);
        let v = stage1_filter(
            "a",
            &trajectory(3, true),
            &summary(AttemptStatus::Finished, false),
            None,
        );
        assert_eq!(v.stage1_reasons, [ReasonCode::AgentErrorStrikes]);
    }

    #[test]
    fn stage2_examples() {
        let t = trajectory(3, false);
        let pass = stage1_filter("a", &t, &summary(AttemptStatus::Finished, false), None);
        let fail = stage1_filter("a", &t, &summary(AttemptStatus::AgentError, false), None);
        assert!(stage2_filter(pass.clone(), Some(true)).stage2_pass);
        assert_eq!(
            stage2_filter(pass.clone(), Some(false)).stage2_reasons,
            [ReasonCode::TestsFailed]
        );
        assert_eq!(
            stage2_filter(pass, None).stage2_reasons,
            [ReasonCode::Unverified]
        );
        let v = stage2_filter(fail, Some(true));
        assert!(!v.stage2_pass);
        assert_eq!(v.stage2_reasons, [ReasonCode::Stage1Failed]);
    }

    #[test]
    fn finish_only_exports_once_after_dedup() {
        let t = trajectory(1, false);
        for format in [
            ExportFormat::FunctionCalling,
            ExportFormat::XmlPseudoScaffold,
        ] {
            let e = export_sft(
                [("a", &t, StageLabel::Stage1), ("b", &t, StageLabel::Stage1)],
                format,
            );
            assert_eq!(e.samples.len(), 1);
            assert_eq!(e.duplicates, 1);
            let s = &e.samples[0];
            assert!(s.rendered_text().contains("sys"));
            assert_eq!(s.actions().unwrap(), normalize_actions(&t.actions()));
        }
    }

    #[test]
    fn missing_system_prompt_is_skipped() {
        let mut t = Trajectory::new("x", 0.0);
        t.push(EventPayload::UserTask { text: "go".into() });
        let e = export_sft(
            [("a", &t, StageLabel::Stage1)],
            ExportFormat::FunctionCalling,
        );
        assert!(e.samples.is_empty());
        assert_eq!(e.skipped.len(), 1);
    }

    #[test]
    fn missing_run_dir_is_config_error() {
        let err = curate(
            Path::new("/nonexistent/run"),
            StageLabel::Stage1,
            ExportFormat::FunctionCalling,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn parses_labels() {
        assert_eq!("2".parse::<StageLabel>().unwrap(), StageLabel::Stage2);
        assert_eq!(
            "xml".parse::<ExportFormat>().unwrap(),
            ExportFormat::XmlPseudoScaffold
        );
        assert!("3".parse::<StageLabel>().is_err());
        assert_eq!(
            budget_limit(Path::new("budget-30/instances/a/attempt0")),
            Some(30)
        );
    }
}
