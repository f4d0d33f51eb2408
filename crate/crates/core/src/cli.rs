//! Command-line front end: flag and config-file merging, presets, and
//! report emission.

use std::fmt::Debug;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::config::{AgentSettings, Preset, RunConfig, SweepConfig, BUDGET_LIMITS};
use crate::curate::{curate, write_samples, ExportFormat, StageLabel};
use crate::error::{Error, IoContext, Result};
use crate::eval::{render_report, EvalReport, RenderFormat, RetryPredicate};
use crate::llm::{parse_descriptor, BackendDescriptor};
use crate::model::AttemptStatus;
use crate::runner::{run_budget, run_eval, run_sweep_all, RunControl};

#[derive(Debug, Parser)]
#[command(name = "harness", version, about = "Evaluate tool-calling code agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the iterative retry protocol over a suite.
    RunEval(EvalArgs),
    /// Sample every instance repeatedly per temperature and report pass@k.
    RunSweep(SweepArgs),
    /// Run the iterative protocol once per iteration limit.
    RunBudget(BudgetArgs),
    /// Filter finished attempts and export training samples.
    Curate(CurateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Instance file (JSON lines).
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Backend descriptor: inline JSON or a path to a JSON file.
    #[arg(long)]
    pub backend: Option<String>,
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Continue the run already present in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of attempts; later attempts run at 0.1 unless
    /// --temperatures is given.
    #[arg(long)]
    pub attempts: Option<usize>,
    /// Per-attempt temperatures, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub temperatures: Option<Vec<f64>>,
    #[arg(long)]
    pub retry_policy: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    pub temperatures: Option<Vec<f64>>,
    #[arg(long)]
    pub samples: Option<u32>,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Iteration limits, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub limits: Option<Vec<u32>>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Run directory to read attempts from.
    #[arg(long)]
    pub input: PathBuf,
    /// 1 or 2.
    #[arg(long, default_value = "2")]
    pub stage: String,
    /// function_calling or xml.
    #[arg(long, default_value = "function_calling")]
    pub format: String,
    /// Output file; defaults to sft-stage<N>-<format>.jsonl in the run
    /// directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Contents of a `--config` TOML file. Relative paths resolve against
/// the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub suite: Option<PathBuf>,
    /// Inline table, or a string holding JSON or a descriptor path.
    pub backend: Option<toml::Value>,
    pub max_iterations: Option<u32>,
    pub parallelism: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub attempts: Option<usize>,
    pub temperatures: Option<Vec<f64>>,
    pub retry_policy: Option<String>,
    pub samples: Option<u32>,
    pub limits: Option<Vec<u32>>,
    pub agent: Option<AgentSettings>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut c: FileConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.suite, &mut c.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(toml::Value::String(s)) = &mut c.backend {
            if !s.trim_start().starts_with('{') && Path::new(s.as_str()).is_relative() {
                *s = base.join(&*s).to_string_lossy().into_owned();
            }
        }
        Ok(c)
    }

    fn backend(&self) -> Result<Option<BackendDescriptor>> {
        match &self.backend {
            None => Ok(None),
            Some(toml::Value::String(s)) => parse_descriptor(s).map(Some),
            Some(table) => {
                let json = serde_json::to_value(table)?;
                serde_json::from_value(json)
                    .map(Some)
                    .map_err(|e| Error::Config(format!("invalid backend in config file: {e}")))
            }
        }
    }
}

/// Flag value if given, else the config file's; both given and different
/// is a conflict.
fn merge<T: PartialEq + Debug>(
    name: &str,
    flag: Option<T>,
    file: Option<T>,
    conflicts: &mut Vec<String>,
) -> Option<T> {
    match (flag, file) {
        (Some(a), Some(b)) if a != b => {
            conflicts.push(format!("{name}: flag {a:?}, config file {b:?}"));
            Some(a)
        }
        (Some(a), _) => Some(a),
        (None, b) => b,
    }
}

fn required<T>(name: &str, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing --{name} (flag or config file)")))
}

fn check_conflicts(conflicts: Vec<String>) -> Result<()> {
    if conflicts.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "flags conflict with the config file: {}",
            conflicts.join("; ")
        )))
    }
}

struct Common {
    suite: PathBuf,
    backend: BackendDescriptor,
    max_iterations: Option<u32>,
    parallelism: Option<usize>,
    output_dir: PathBuf,
    agent: AgentSettings,
    preset: Option<Preset>,
    file: FileConfig,
    conflicts: Vec<String>,
}

fn resolve_common(args: &CommonArgs) -> Result<Common> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut conflicts = Vec::new();
    let backend_flag = args.backend.as_deref().map(parse_descriptor).transpose()?;
    let backend = merge("backend", backend_flag, file.backend()?, &mut conflicts);
    let suite = merge(
        "suite",
        args.suite.clone(),
        file.suite.clone(),
        &mut conflicts,
    );
    let output_dir = merge(
        "output_dir",
        args.output_dir.clone(),
        file.output_dir.clone(),
        &mut conflicts,
    );
    let max_iterations = merge(
        "max_iterations",
        args.max_iterations,
        file.max_iterations,
        &mut conflicts,
    );
    let parallelism = merge(
        "parallelism",
        args.parallelism,
        file.parallelism,
        &mut conflicts,
    );
    Ok(Common {
        suite: required("suite", suite)?,
        backend: required("backend", backend)?,
        max_iterations,
        parallelism,
        output_dir: required("output-dir", output_dir)?,
        agent: file.agent.clone().unwrap_or_default(),
        preset: args.preset.as_deref().map(str::parse).transpose()?,
        file,
        conflicts,
    })
}

fn attempt_temperatures(
    attempts: Option<usize>,
    temps: Option<Vec<f64>>,
) -> Result<Option<Vec<f64>>> {
    match (attempts, temps) {
        (Some(0), _) => Err(Error::Validation("attempts must be at least 1".into())),
        (Some(n), Some(t)) if t.len() != n => Err(Error::Config(format!(
            "--attempts {n} does not match {} temperatures",
            t.len()
        ))),
        (_, Some(t)) => Ok(Some(t)),
        (Some(n), None) => {
            let mut t = vec![0.0];
            t.resize(n, 0.1);
            Ok(Some(t))
        }
        (None, None) => Ok(None),
    }
}

/// Suite path and run configuration for `run-eval` and `run-budget`.
pub fn eval_config(args: &EvalArgs) -> Result<(PathBuf, RunConfig)> {
    let mut c = resolve_common(&args.common)?;
    if matches!(c.preset, Some(Preset::ReferenceSweep)) {
        return Err(Error::Config(
            "preset reference-sweep applies to run-sweep only".into(),
        ));
    }
    let attempts = merge("attempts", args.attempts, c.file.attempts, &mut c.conflicts);
    let temps = merge(
        "temperatures",
        args.temperatures.clone(),
        c.file.temperatures.clone(),
        &mut c.conflicts,
    );
    let policy = merge(
        "retry_policy",
        args.retry_policy.clone(),
        c.file.retry_policy.clone(),
        &mut c.conflicts,
    );
    check_conflicts(std::mem::take(&mut c.conflicts))?;
    let mut config = RunConfig::new(c.output_dir, c.backend);
    if let Some(t) = attempt_temperatures(attempts, temps)? {
        config.attempt_temperatures = t;
    }
    if let Some(n) = c.max_iterations {
        config.max_iterations = n;
    }
    if let Some(p) = c.parallelism {
        config.parallelism = p;
    }
    if let Some(p) = policy {
        config.retry_predicate = p.parse::<RetryPredicate>()?;
    }
    config.agent = c.agent;
    config.validate()?;
    Ok((c.suite, config))
}

pub fn sweep_config(args: &SweepArgs) -> Result<(PathBuf, SweepConfig)> {
    let mut c = resolve_common(&args.common)?;
    if matches!(c.preset, Some(Preset::ReferenceEval)) {
        return Err(Error::Config(
            "preset reference-eval applies to run-eval only".into(),
        ));
    }
    let temps = merge(
        "temperatures",
        args.temperatures.clone(),
        c.file.temperatures.clone(),
        &mut c.conflicts,
    );
    let samples = merge("samples", args.samples, c.file.samples, &mut c.conflicts);
    check_conflicts(std::mem::take(&mut c.conflicts))?;
    let mut config = SweepConfig::new(c.output_dir, c.backend);
    if let Some(t) = temps {
        config.temperatures = t;
    }
    if let Some(s) = samples {
        config.samples = s;
    }
    if let Some(n) = c.max_iterations {
        config.max_iterations = n;
    }
    if let Some(p) = c.parallelism {
        config.parallelism = p;
    }
    config.agent = c.agent;
    config.validate()?;
    Ok((c.suite, config))
}

fn budget_limits(args: &BudgetArgs) -> Result<Vec<u32>> {
    let file = match &args.eval.common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut conflicts = Vec::new();
    let limits = merge("limits", args.limits.clone(), file.limits, &mut conflicts);
    check_conflicts(conflicts)?;
    Ok(limits.unwrap_or_else(|| BUDGET_LIMITS.to_vec()))
}

fn emit_report(report: &EvalReport) -> Result<()> {
    let text = render_report(report, RenderFormat::Table)?;
    let mut out = std::io::stdout().lock();
    out.write_all(&text).at("<stdout>")?;
    out.flush().at("<stdout>")
}

fn infra_failures(report: &EvalReport) -> usize {
    report
        .outcomes
        .iter()
        .filter(|o| o.statuses.last() == Some(&AttemptStatus::InfraError))
        .count()
}

fn control(resume: bool, abort: Option<Arc<AtomicBool>>) -> RunControl {
    RunControl { resume, abort }
}

/// Executes one parsed command and returns the process exit status.
pub fn execute(cli: Cli, abort: Option<Arc<AtomicBool>>) -> Result<u8> {
    let report = match &cli.command {
        Command::RunEval(args) => {
            let (suite, config) = eval_config(args)?;
            run_eval(&suite, &config, &control(args.common.resume, abort))?
        }
        Command::RunBudget(args) => {
            let (suite, config) = eval_config(&args.eval)?;
            let limits = budget_limits(args)?;
            run_budget(
                &suite,
                &config,
                &limits,
                &control(args.eval.common.resume, abort),
            )?
        }
        Command::RunSweep(args) => {
            let (suite, config) = sweep_config(args)?;
            run_sweep_all(&suite, &config, &control(args.common.resume, abort))?
        }
        Command::Curate(args) => {
            let stage: StageLabel = args.stage.parse()?;
            let format: ExportFormat = args.format.parse()?;
            let result = curate(&args.input, stage, format)?;
            let stage_no = match stage {
                StageLabel::Stage1 => 1,
                StageLabel::Stage2 => 2,
            };
            let output = args.output.clone().unwrap_or_else(|| {
                args.input
                    .join(format!("sft-stage{stage_no}-{}.jsonl", format.as_str()))
            });
            write_samples(&output, &result.export.samples)?;
            print!("{}", result.summary(stage));
            println!("output: {}", output.display());
            return Ok(0);
        }
    };
    emit_report(&report)?;
    let failed = infra_failures(&report);
    if failed > 0 {
        eprintln!("{failed} instance(s) ended with an infrastructure error");
        return Ok(3);
    }
    Ok(0)
}

/// Process entry point: logging, interrupt handling, and exit codes.
pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let abort = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&abort);
    if let Err(e) = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("interrupt: finishing attempts in flight; press again to exit now");
    }) {
        tracing::warn!("cannot install interrupt handler: {e}");
    }
    match execute(cli, Some(abort)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
