//! The iterative retry protocol and the fixed-temperature sweep.
//!
//! Both are expressed as batches of independent attempt jobs handed to an
//! [`AttemptExecutor`]. Jobs of one batch run in parallel; batches run in
//! schedule order, so attempts of one instance stay sequential.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{temperature_in_range, AttemptStatus, AttemptSummary, Resolved, TaskInstance};

/// Infra failures tolerated per schedule slot before the slot is spent.
pub const MAX_INFRA_RETRIES: u32 = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryPredicate {
    /// Re-run anything not resolved.
    #[default]
    UnresolvedOrEmptyOrError,
    /// Re-run only attempts that produced no patch or ended in an error.
    EmptyOrError,
    /// Re-run only attempts whose patch was verified and failed.
    UnresolvedOnly,
}

impl RetryPredicate {
    pub const ALL: [RetryPredicate; 3] = [
        RetryPredicate::UnresolvedOrEmptyOrError,
        RetryPredicate::EmptyOrError,
        RetryPredicate::UnresolvedOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RetryPredicate::UnresolvedOrEmptyOrError => "unresolved_or_empty_or_error",
            RetryPredicate::EmptyOrError => "empty_or_error",
            RetryPredicate::UnresolvedOnly => "unresolved_only",
        }
    }

    /// Whether an instance whose latest attempt is `last` runs again.
    /// Resolved instances never do.
    pub fn selects(&self, last: &AttemptSummary) -> bool {
        if last.resolved.is_resolved() {
            return false;
        }
        match self {
            RetryPredicate::UnresolvedOrEmptyOrError => true,
            RetryPredicate::EmptyOrError => last.patch_empty || last.status.is_error(),
            RetryPredicate::UnresolvedOnly => last.resolved == Resolved::Unresolved,
        }
    }
}

impl fmt::Display for RetryPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetryPredicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown retry policy {s:?}; expected one of {}",
                    Self::ALL.map(|p| p.as_str()).join(", ")
                ))
            })
    }
}

pub const DEFAULT_TEMPERATURES: [f64; 3] = [0.0, 0.1, 0.1];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSchedule {
    pub temperatures: Vec<f64>,
    #[serde(default)]
    pub retry_predicate: RetryPredicate,
}

impl Default for IterationSchedule {
    fn default() -> Self {
        IterationSchedule {
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            retry_predicate: RetryPredicate::default(),
        }
    }
}

impl IterationSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.temperatures.is_empty() {
            return Err(Error::Validation(
                "the temperature schedule is empty".into(),
            ));
        }
        validate_temperatures(&self.temperatures)
    }
}

pub(crate) fn validate_temperatures(temps: &[f64]) -> Result<()> {
    match temps.iter().find(|t| !temperature_in_range(**t)) {
        Some(t) => Err(Error::Validation(format!("temperature {t} outside [0, 2]"))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub instance_id: String,
    pub attempts: Vec<AttemptSummary>,
    pub final_attempt_index: u32,
    pub final_patch: String,
    pub final_resolved: bool,
}

impl InstanceOutcome {
    /// The final outcome is always the last executed attempt. `attempts`
    /// must be non-empty and in execution order.
    pub fn from_attempts(instance_id: impl Into<String>, attempts: Vec<AttemptSummary>) -> Self {
        let last = attempts
            .last()
            .expect("an outcome needs at least one attempt");
        InstanceOutcome {
            instance_id: instance_id.into(),
            final_attempt_index: last.attempt_index,
            final_patch: last.patch.clone(),
            final_resolved: last.resolved.is_resolved(),
            attempts,
        }
    }

    pub fn final_attempt(&self) -> &AttemptSummary {
        self.attempts.last().expect("outcomes are never empty")
    }
}

/// Carries out one attempt: episode plus verification.
///
/// An `Ok` summary with status `infra_error`, or an `Err` other than a
/// config or validation error, is an infrastructure failure and is retried.
pub trait AttemptExecutor: Sync {
    fn execute(
        &self,
        instance: &TaskInstance,
        attempt_index: u32,
        temperature: f64,
    ) -> Result<AttemptSummary>;
}

type AttemptCallback<'a> = dyn Fn(&AttemptSummary) -> Result<()> + Sync + 'a;

pub struct DriverOptions<'a> {
    pub parallelism: usize,
    /// Attempts already completed by an earlier invocation, keyed by
    /// (instance id, attempt index). They are reused instead of re-run.
    pub prior: HashMap<(String, u32), AttemptSummary>,
    /// Called once per newly executed attempt, from worker threads.
    pub on_attempt: Option<&'a AttemptCallback<'a>>,
    /// When raised, no further attempts start.
    pub abort: Option<Arc<AtomicBool>>,
}

impl Default for DriverOptions<'_> {
    fn default() -> Self {
        DriverOptions {
            parallelism: 1,
            prior: HashMap::new(),
            on_attempt: None,
            abort: None,
        }
    }
}

fn is_fatal(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::Validation(_) | Error::Aborted(_)
    )
}

fn infra_summary(instance: &TaskInstance, attempt_index: u32, temperature: f64) -> AttemptSummary {
    AttemptSummary {
        instance_id: instance.id.clone(),
        attempt_index,
        temperature,
        status: AttemptStatus::InfraError,
        resolved: Resolved::NotEvaluated,
        patch_empty: true,
        patch: String::new(),
        assistant_turns: 0,
        infra_retries: MAX_INFRA_RETRIES,
        duration_seconds: 0.0,
    }
}

fn execute_with_retries(
    executor: &dyn AttemptExecutor,
    instance: &TaskInstance,
    attempt_index: u32,
    temperature: f64,
) -> Result<AttemptSummary> {
    let mut retries = 0;
    loop {
        let last = match executor.execute(instance, attempt_index, temperature) {
            Ok(mut s) if s.status != AttemptStatus::InfraError => {
                s.infra_retries = retries;
                return Ok(s);
            }
            Err(e) if is_fatal(&e) => return Err(e),
            other => other,
        };
        if retries == MAX_INFRA_RETRIES {
            return Ok(match last {
                Ok(mut s) => {
                    s.infra_retries = retries;
                    s
                }
                Err(e) => {
                    tracing::warn!(instance = %instance.id, attempt_index, error = %e, "attempt failed");
                    infra_summary(instance, attempt_index, temperature)
                }
            });
        }
        retries += 1;
        tracing::info!(instance = %instance.id, attempt_index, retries, "retrying after infra failure");
    }
}

struct Job<'a> {
    instance: &'a TaskInstance,
    attempt_index: u32,
    temperature: f64,
}

fn run_jobs(
    executor: &dyn AttemptExecutor,
    jobs: &[Job<'_>],
    options: &DriverOptions<'_>,
) -> Result<Vec<AttemptSummary>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .map_err(|e| Error::Infra(format!("cannot start worker pool: {e}")))?;
    let aborted = || {
        options
            .abort
            .as_ref()
            .is_some_and(|a| a.load(Ordering::SeqCst))
    };
    let results: Vec<Option<Result<AttemptSummary>>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let key = (job.instance.id.clone(), job.attempt_index);
                if let Some(done) = options.prior.get(&key) {
                    return Some(Ok(done.clone()));
                }
                if aborted() {
                    return None;
                }
                let summary = execute_with_retries(
                    executor,
                    job.instance,
                    job.attempt_index,
                    job.temperature,
                );
                Some(summary.and_then(|s| {
                    if let Some(callback) = options.on_attempt {
                        callback(&s)?;
                    }
                    Ok(s)
                }))
            })
            .collect()
    });
    let mut out = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r {
            Some(r) => out.push(r?),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        return Err(Error::Aborted(format!(
            "interrupted with {skipped} attempts not started"
        )));
    }
    Ok(out)
}

/// Runs the iterative protocol. Iteration 1 runs every instance at the
/// first temperature; iteration i runs the instances whose iteration i-1
/// attempt the retry predicate selects. Outcomes come back in suite order.
pub fn run_iterative(
    suite: &[TaskInstance],
    executor: &dyn AttemptExecutor,
    schedule: &IterationSchedule,
    options: &DriverOptions<'_>,
) -> Result<Vec<InstanceOutcome>> {
    if suite.is_empty() {
        return Err(Error::Validation("the suite is empty".into()));
    }
    schedule.validate()?;
    let mut attempts: Vec<Vec<AttemptSummary>> = vec![Vec::new(); suite.len()];
    for (i, &temperature) in schedule.temperatures.iter().enumerate() {
        let attempt_index = i as u32 + 1;
        let selected: Vec<usize> = (0..suite.len())
            .filter(|&j| match attempts[j].last() {
                None => i == 0,
                Some(last) => {
                    last.attempt_index == attempt_index - 1
                        && schedule.retry_predicate.selects(last)
                }
            })
            .collect();
        if selected.is_empty() {
            break;
        }
        let jobs: Vec<Job<'_>> = selected
            .iter()
            .map(|&j| Job {
                instance: &suite[j],
                attempt_index,
                temperature,
            })
            .collect();
        let done = run_jobs(executor, &jobs, options)?;
        for (&j, summary) in selected.iter().zip(done) {
            attempts[j].push(summary);
        }
    }
    Ok(suite
        .iter()
        .zip(attempts)
        .map(|(inst, a)| InstanceOutcome::from_attempts(&inst.id, a))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub instance_id: String,
    /// Verification result of each sample, by attempt index.
    pub successes: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub temperature: f64,
    pub samples: u32,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn matrix(&self) -> Vec<Vec<bool>> {
        self.rows.iter().map(|r| r.successes.clone()).collect()
    }
}

/// Runs `samples` independent attempts per instance at one temperature.
pub fn run_sweep(
    suite: &[TaskInstance],
    executor: &dyn AttemptExecutor,
    temperature: f64,
    samples: u32,
    options: &DriverOptions<'_>,
) -> Result<SweepResult> {
    if suite.is_empty() {
        return Err(Error::Validation("the suite is empty".into()));
    }
    if samples == 0 {
        return Err(Error::Validation(
            "samples per instance must be at least 1".into(),
        ));
    }
    validate_temperatures(&[temperature])?;
    let jobs: Vec<Job<'_>> = suite
        .iter()
        .flat_map(|instance| {
            (1..=samples).map(move |attempt_index| Job {
                instance,
                attempt_index,
                temperature,
            })
        })
        .collect();
    let done = run_jobs(executor, &jobs, options)?;
    let rows = suite
        .iter()
        .zip(done.chunks(samples as usize))
        .map(|(inst, chunk)| SweepRow {
            instance_id: inst.id.clone(),
            successes: chunk.iter().map(|s| s.resolved.is_resolved()).collect(),
        })
        .collect();
    Ok(SweepResult {
        temperature,
        samples,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;
    use std::sync::Mutex;

    pub(crate) fn suite(n: usize) -> Vec<TaskInstance> {
        (0..n)
            .map(|i| TaskInstance {
                id: format!("i{i}"),
                repo_source: PathBuf::from("/nonexistent"),
                base_revision: "HEAD".into(),
                problem_statement: "p".into(),
                setup_commands: vec![],
                fail_to_pass: vec!["t".into()],
                pass_to_pass: vec![],
                test_command_template: "t {test}".into(),
                timeout_seconds: 1,
            })
            .collect()
    }

    /// Executor driven by a closure over (instance position, attempt index).
    struct Table<F>(F, Mutex<Vec<(String, u32, f64)>>);

    impl<F: Fn(usize, u32) -> Result<(AttemptStatus, bool, bool)> + Sync> AttemptExecutor for Table<F> {
        fn execute(&self, inst: &TaskInstance, idx: u32, t: f64) -> Result<AttemptSummary> {
            self.1.lock().unwrap().push((inst.id.clone(), idx, t));
            let pos: usize = inst.id[1..].parse().unwrap();
            let (status, resolved, empty) = (self.0)(pos, idx)?;
            Ok(AttemptSummary {
                instance_id: inst.id.clone(),
                attempt_index: idx,
                temperature: t,
                status,
                resolved: if status == AttemptStatus::InfraError {
                    Resolved::NotEvaluated
                } else {
                    Resolved::from_bool(resolved)
                },
                patch_empty: empty,
                patch: if empty {
                    String::new()
                } else {
                    format!("p{pos}-{idx}")
                },
                assistant_turns: 1,
                infra_retries: 0,
                duration_seconds: 0.0,
            })
        }
    }

    fn table<F>(f: F) -> Table<F> {
        Table(f, Mutex::new(Vec::new()))
    }

    #[test]
    fn all_resolved_first_time() {
        let ex = table(|_, _| Ok((AttemptStatus::Finished, true, false)));
        let out = run_iterative(
            &suite(4),
            &ex,
            &IterationSchedule::default(),
            &Default::default(),
        )
        .unwrap();
        assert!(out
            .iter()
            .all(|o| o.final_resolved && o.final_attempt_index == 1));
        assert_eq!(ex.1.lock().unwrap().len(), 4);
    }

    #[test]
    fn always_empty_runs_every_slot_with_schedule_temperatures() {
        let ex = table(|_, _| Ok((AttemptStatus::Finished, false, true)));
        let schedule = IterationSchedule {
            retry_predicate: RetryPredicate::EmptyOrError,
            ..Default::default()
        };
        let out = run_iterative(&suite(3), &ex, &schedule, &Default::default()).unwrap();
        assert!(out
            .iter()
            .all(|o| o.attempts.len() == 3 && o.final_attempt_index == 3));
        let mut temps: Vec<(u32, f64)> = ex.1.lock().unwrap().iter().map(|c| (c.1, c.2)).collect();
        temps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        temps.dedup();
        assert_eq!(temps, [(1, 0.0), (2, 0.1), (3, 0.1)]);
    }

    #[test]
    fn predicates_differ() {
        // Non-empty unresolved patch: only two policies retry it.
        let ex = table(|_, _| Ok((AttemptStatus::Finished, false, false)));
        for (p, runs) in [
            (RetryPredicate::UnresolvedOrEmptyOrError, 3),
            (RetryPredicate::UnresolvedOnly, 3),
            (RetryPredicate::EmptyOrError, 1),
        ] {
            let schedule = IterationSchedule {
                retry_predicate: p,
                ..Default::default()
            };
            let out = run_iterative(&suite(1), &ex, &schedule, &Default::default()).unwrap();
            assert_eq!(out[0].attempts.len(), runs, "{p}");
        }
        // Infra failure that is never verified is not retried by unresolved_only.
        let ex = table(|_, _| Ok((AttemptStatus::InfraError, false, true)));
        let schedule = IterationSchedule {
            retry_predicate: RetryPredicate::UnresolvedOnly,
            ..Default::default()
        };
        let out = run_iterative(&suite(1), &ex, &schedule, &Default::default()).unwrap();
        assert_eq!(out[0].attempts.len(), 1);
    }

    #[test]
    fn infra_errors_are_retried_without_consuming_slots() {
        // Fails twice, then succeeds: still attempt 1.
        let calls = Mutex::new(0);
        let ex = table(|_, _| {
            let mut n = calls.lock().unwrap();
            *n += 1;
            if *n <= 2 {
                Err(Error::Infra("flaky".into()))
            } else {
                Ok((AttemptStatus::Finished, true, false))
            }
        });
        let out = run_iterative(
            &suite(1),
            &ex,
            &IterationSchedule::default(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(out[0].final_attempt_index, 1);
        assert_eq!(out[0].attempts[0].infra_retries, 2);
        assert!(out[0].final_resolved);

        // Persistent failure spends the slot after 3 tries.
        let ex = table(|_, _| Err(Error::Infra("down".into())));
        let out = run_iterative(
            &suite(1),
            &ex,
            &IterationSchedule::default(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(out[0].attempts.len(), 3);
        assert!(out[0]
            .attempts
            .iter()
            .all(|a| a.status == AttemptStatus::InfraError));
        assert_eq!(ex.1.lock().unwrap().len(), 9);
    }

    #[test]
    fn fatal_errors_propagate() {
        let ex = table(|_, _| Err(Error::Validation("bad".into())));
        let r = run_iterative(
            &suite(2),
            &ex,
            &IterationSchedule::default(),
            &Default::default(),
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn prior_attempts_are_reused() {
        let ex = table(|_, _| Ok((AttemptStatus::Finished, false, false)));
        let first = run_iterative(
            &suite(2),
            &ex,
            &IterationSchedule::default(),
            &Default::default(),
        )
        .unwrap();
        let prior: HashMap<_, _> = first
            .iter()
            .flat_map(|o| o.attempts.iter())
            .map(|a| ((a.instance_id.clone(), a.attempt_index), a.clone()))
            .collect();
        let ex2 = table(|_, _| -> Result<_> { panic!("nothing should run") });
        let opts = DriverOptions {
            prior,
            ..Default::default()
        };
        let second = run_iterative(&suite(2), &ex2, &IterationSchedule::default(), &opts).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn abort_stops_new_attempts() {
        let flag = Arc::new(AtomicBool::new(false));
        let f2 = Arc::clone(&flag);
        let ex = table(move |_, _| {
            f2.store(true, Ordering::SeqCst);
            Ok((AttemptStatus::Finished, false, false))
        });
        let opts = DriverOptions {
            abort: Some(flag),
            ..Default::default()
        };
        let r = run_iterative(&suite(5), &ex, &IterationSchedule::default(), &opts);
        assert!(matches!(r, Err(Error::Aborted(_))));
        assert_eq!(ex.1.lock().unwrap().len(), 1);
    }

    #[test]
    fn sweep_matrix() {
        let ex = table(|_, idx| Ok((AttemptStatus::Finished, idx == 3, false)));
        let r = run_sweep(
            &suite(2),
            &ex,
            0.7,
            4,
            &DriverOptions {
                parallelism: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.matrix(), vec![vec![false, false, true, false]; 2]);
        assert!(run_sweep(&suite(2), &ex, 0.7, 0, &Default::default()).is_err());
        assert!(run_sweep(&suite(2), &ex, 2.5, 1, &Default::default()).is_err());
    }

    #[test]
    fn parse_policy() {
        for p in RetryPredicate::ALL {
            assert_eq!(p.as_str().parse::<RetryPredicate>().unwrap(), p);
        }
        assert!(matches!(
            "sometimes".parse::<RetryPredicate>(),
            Err(Error::Config(_))
        ));
    }
}
