//! Run orchestration on disk: manifest, per-attempt persistence, resume,
//! and report files.
//!
//! ```text
//! <output_dir>/manifest.json
//! <output_dir>/attempts.jsonl          one AttemptSummary per executed attempt
//! <output_dir>/outcomes.jsonl          one InstanceOutcome per instance, suite order
//! <output_dir>/report.{json,txt}, plot.json
//! <output_dir>/instances/<id>/attempt<k>/{events.jsonl,requests.jsonl,patch.diff,attempt.json,verify.json}
//! ```
//! Sweeps nest one such directory per temperature; budget runs one per
//! iteration limit.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{RunConfig, SweepConfig};
use crate::error::{Error, IoContext, Result};
use crate::eval::{
    render_report, run_iterative, run_sweep, BudgetRow, DriverOptions, EvalReport, InstanceOutcome,
    RenderFormat, SandboxExecutor, SweepResult,
};
use crate::layout;
use crate::llm::make_backend;
use crate::model::{load_suite, suite_fingerprint, AttemptSummary, TaskInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Eval,
    Sweep,
    Budget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub mode: RunMode,
    /// Every knob of the run, including the derived schedule.
    pub config: Value,
    pub suite_path: PathBuf,
    pub suite_fingerprint: String,
    pub status: RunStatus,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid manifest {}: {e}", path.display())))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(layout::MANIFEST_FILE), self)
    }
}

/// Keys that may change between an interrupted run and its resumption.
const RESUMABLE_KEYS: [&str; 2] = ["parallelism", "agent.keep_workspaces"];

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

/// Settings that differ between a manifest snapshot and a new request.
pub fn config_conflicts(recorded: &Value, requested: &Value) -> Vec<String> {
    let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
    flatten("", recorded, &mut a);
    flatten("", requested, &mut b);
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .filter(|k| !RESUMABLE_KEYS.contains(&k.as_str()))
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| {
            let show = |v: Option<&Value>| v.map_or("<unset>".to_string(), Value::to_string);
            format!(
                "{k}: run has {}, requested {}",
                show(a.get(k)),
                show(b.get(k))
            )
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).at(&tmp)?;
    std::fs::rename(&tmp, path).at(path)
}

/// Attempt summaries persisted by an earlier invocation. A torn trailing
/// line from a crash is ignored.
pub fn load_attempts(dir: &Path) -> Result<Vec<AttemptSummary>> {
    let path = dir.join(layout::ATTEMPTS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path).at(&path)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(s) => out.push(s),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                tracing::warn!(path = %path.display(), "dropping torn trailing record");
            }
            Err(e) => {
                return Err(Error::Infra(format!(
                    "{} line {}: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn prior_map(attempts: Vec<AttemptSummary>) -> HashMap<(String, u32), AttemptSummary> {
    attempts
        .into_iter()
        .map(|a| ((a.instance_id.clone(), a.attempt_index), a))
        .collect()
}

/// Appends attempt summaries as they complete, one flushed line each.
struct AttemptSink {
    file: Mutex<std::fs::File>,
    path: PathBuf,
}

impl AttemptSink {
    fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(layout::ATTEMPTS_FILE);
        // A torn last line would corrupt the next record; cut it off.
        if let Ok(text) = std::fs::read_to_string(&path) {
            if !text.is_empty() && !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                std::fs::write(&path, &text[..keep]).at(&path)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .at(&path)?;
        Ok(AttemptSink {
            file: Mutex::new(file),
            path,
        })
    }

    fn record(&self, summary: &AttemptSummary) -> Result<()> {
        let mut line = serde_json::to_vec(summary)?;
        line.push(b'\n');
        let mut f = self.file.lock().expect("attempt sink lock");
        f.write_all(&line).at(&self.path)?;
        f.flush().at(&self.path)
    }
}

/// Writes report.json, report.txt and plot.json into `dir`.
pub fn write_reports(dir: &Path, report: &EvalReport) -> Result<()> {
    for (name, format) in [
        (layout::REPORT_JSON, RenderFormat::Structured),
        (layout::REPORT_TABLE, RenderFormat::Table),
        (layout::PLOT_FILE, RenderFormat::PlotData),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, render_report(report, format)?).at(&path)?;
    }
    Ok(())
}

fn write_outcomes(dir: &Path, outcomes: &[InstanceOutcome]) -> Result<()> {
    let path = dir.join(layout::OUTCOMES_FILE);
    let mut buf = Vec::new();
    for o in outcomes {
        serde_json::to_writer(&mut buf, o)?;
        buf.push(b'\n');
    }
    std::fs::write(&path, buf).at(&path)
}

/// Options shared by every run mode.
#[derive(Clone, Debug, Default)]
pub struct RunControl {
    /// Continue a partial run found in the output directory.
    pub resume: bool,
    /// Raised by a signal handler; attempts in flight finish and are
    /// persisted, no new ones start.
    pub abort: Option<Arc<AtomicBool>>,
}

struct Session {
    dir: PathBuf,
    manifest: RunManifest,
    suite: Vec<TaskInstance>,
}

fn open_session(
    mode: RunMode,
    suite_path: &Path,
    dir: &Path,
    snapshot: Value,
    control: &RunControl,
) -> Result<Session> {
    let suite = load_suite(suite_path)?;
    if suite.is_empty() {
        return Err(Error::Validation(format!(
            "suite {} has no instances",
            suite_path.display()
        )));
    }
    let fingerprint = suite_fingerprint(suite_path)?;
    std::fs::create_dir_all(dir).at(dir)?;
    let manifest_path = dir.join(layout::MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        if !control.resume {
            return Err(Error::Config(format!(
                "{} already holds a run; pass --resume to continue it or choose another output directory",
                dir.display()
            )));
        }
        let mut m = RunManifest::load(&manifest_path)?;
        let mut conflicts = Vec::new();
        if m.mode != mode {
            conflicts.push(format!("mode: run is {:?}, requested {mode:?}", m.mode));
        }
        if m.suite_fingerprint != fingerprint {
            conflicts.push("suite: instance file content changed".into());
        }
        conflicts.extend(config_conflicts(&m.config, &snapshot));
        if !conflicts.is_empty() {
            return Err(Error::Config(format!(
                "cannot resume {}: {}",
                dir.display(),
                conflicts.join("; ")
            )));
        }
        m.status = RunStatus::Running;
        m.finished_at = None;
        m
    } else {
        RunManifest {
            run_id: uuid::Uuid::new_v4().to_string(),
            mode,
            config: snapshot,
            suite_path: suite_path.to_path_buf(),
            suite_fingerprint: fingerprint,
            status: RunStatus::Running,
            started_at: Utc::now(),
            finished_at: None,
        }
    };
    manifest.save(dir)?;
    Ok(Session {
        dir: dir.to_path_buf(),
        manifest,
        suite,
    })
}

impl Session {
    fn close<T>(mut self, result: Result<T>) -> Result<T> {
        self.manifest.status = if result.is_ok() {
            RunStatus::Complete
        } else {
            RunStatus::Aborted
        };
        self.manifest.finished_at = Some(Utc::now());
        self.manifest.save(&self.dir)?;
        result
    }
}

fn protocol_in(
    dir: &Path,
    suite: &[TaskInstance],
    config: &RunConfig,
    control: &RunControl,
) -> Result<Vec<InstanceOutcome>> {
    std::fs::create_dir_all(dir).at(dir)?;
    let prior = prior_map(load_attempts(dir)?);
    let sink = AttemptSink::open(dir)?;
    let record = |s: &AttemptSummary| sink.record(s);
    let executor = SandboxExecutor {
        backend: make_backend(&config.backend)?,
        run_dir: dir.to_path_buf(),
        max_iterations: config.max_iterations,
        agent: config.agent.clone(),
    };
    let options = DriverOptions {
        parallelism: config.parallelism,
        prior,
        on_attempt: Some(&record),
        abort: control.abort.clone(),
    };
    let outcomes = run_iterative(suite, &executor, &config.schedule(), &options)?;
    write_outcomes(dir, &outcomes)?;
    Ok(outcomes)
}

fn eval_snapshot(config: &RunConfig) -> Result<Value> {
    let mut v = serde_json::to_value(config)?;
    v["schedule"] = serde_json::to_value(config.schedule())?;
    Ok(v)
}

/// Runs the iterative protocol over the suite and writes every artifact
/// under `config.output_dir`.
pub fn run_eval(suite_path: &Path, config: &RunConfig, control: &RunControl) -> Result<EvalReport> {
    config.validate()?;
    let session = open_session(
        RunMode::Eval,
        suite_path,
        &config.output_dir,
        eval_snapshot(config)?,
        control,
    )?;
    let result = (|| {
        let outcomes = protocol_in(&session.dir, &session.suite, config, control)?;
        let report = EvalReport::from_outcomes(&outcomes, &config.attempt_temperatures);
        write_reports(&session.dir, &report)?;
        Ok(report)
    })();
    session.close(result)
}

pub fn budget_dir(output_dir: &Path, max_iterations: u32) -> PathBuf {
    output_dir.join(format!("budget-{max_iterations}"))
}

/// Runs the iterative protocol once per iteration limit and reports the
/// resolve rate of each.
pub fn run_budget(
    suite_path: &Path,
    config: &RunConfig,
    limits: &[u32],
    control: &RunControl,
) -> Result<EvalReport> {
    config.validate()?;
    if limits.is_empty() || limits.contains(&0) {
        return Err(Error::Validation(
            "iteration limits must be a non-empty list of positive integers".into(),
        ));
    }
    let mut snapshot = eval_snapshot(config)?;
    snapshot["budget_limits"] = serde_json::to_value(limits)?;
    let session = open_session(
        RunMode::Budget,
        suite_path,
        &config.output_dir,
        snapshot,
        control,
    )?;
    let result = (|| {
        let mut rows = Vec::new();
        for &limit in limits {
            let mut c = config.clone();
            c.max_iterations = limit;
            let dir = budget_dir(&session.dir, limit);
            let outcomes = protocol_in(&dir, &session.suite, &c, control)?;
            let sub = EvalReport::from_outcomes(&outcomes, &c.attempt_temperatures);
            write_reports(&dir, &sub)?;
            rows.push(BudgetRow {
                max_iterations: limit,
                resolved: sub.resolved,
                total: sub.suite_size,
            });
        }
        let report = EvalReport {
            suite_size: session.suite.len(),
            budget_rows: rows,
            ..Default::default()
        };
        write_reports(&session.dir, &report)?;
        Ok(report)
    })();
    session.close(result)
}

pub fn sweep_dir(output_dir: &Path, temperature: f64) -> PathBuf {
    output_dir.join(format!("temperature-{temperature}"))
}

/// Runs `samples` attempts per instance at each temperature and reports
/// pass@k for k = 1..=samples.
pub fn run_sweep_all(
    suite_path: &Path,
    config: &SweepConfig,
    control: &RunControl,
) -> Result<EvalReport> {
    config.validate()?;
    let session = open_session(
        RunMode::Sweep,
        suite_path,
        &config.output_dir,
        serde_json::to_value(config)?,
        control,
    )?;
    let result = (|| {
        let backend = make_backend(&config.backend)?;
        let mut sweeps: Vec<SweepResult> = Vec::new();
        for &t in &config.temperatures {
            let dir = sweep_dir(&session.dir, t);
            std::fs::create_dir_all(&dir).at(&dir)?;
            let prior = prior_map(load_attempts(&dir)?);
            let sink = AttemptSink::open(&dir)?;
            let record = |s: &AttemptSummary| sink.record(s);
            let executor = SandboxExecutor {
                backend: Arc::clone(&backend),
                run_dir: dir.clone(),
                max_iterations: config.max_iterations,
                agent: config.agent.clone(),
            };
            let options = DriverOptions {
                parallelism: config.parallelism,
                prior,
                on_attempt: Some(&record),
                abort: control.abort.clone(),
            };
            let sweep = run_sweep(&session.suite, &executor, t, config.samples, &options)?;
            write_json(&dir.join("sweep.json"), &sweep)?;
            sweeps.push(sweep);
        }
        let report = EvalReport::from_sweeps(&sweeps)?;
        write_reports(&session.dir, &report)?;
        Ok(report)
    })();
    session.close(result)
}
