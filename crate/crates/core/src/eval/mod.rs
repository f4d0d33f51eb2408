//! Verification, the iterative protocol, temperature sweeps, and metrics.

mod executor;
mod metrics;
mod protocol;
mod report;
mod verify;

pub use executor::SandboxExecutor;
pub use metrics::{mean_pass_at_k, pass_at_k, percent_from_fraction, percent_of, PassAtKQuery};
pub use protocol::{
    run_iterative, run_sweep, AttemptExecutor, DriverOptions, InstanceOutcome, IterationSchedule,
    RetryPredicate, SweepResult, SweepRow, DEFAULT_TEMPERATURES, MAX_INFRA_RETRIES,
};
pub use report::{
    markdown_table, parse_report, plot_data, render_budget_table, render_iteration_table,
    render_pass_at_k_table, render_report, temperature_label, BudgetRow, EvalReport, IterationRow,
    OutcomeLine, PassAtKRow, RenderFormat,
};
pub use verify::{shell_quote, test_command, verify, TestResult, Verification};
