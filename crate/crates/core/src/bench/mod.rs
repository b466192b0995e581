//! Benchmark harness: test functions, the BO loop, GAP, suites, CSV and
//! plot-script emission.

pub mod bo;
pub mod functions;
pub mod plots;
pub mod suite;

pub use bo::{default_hypers, gap, run_bo, BenchRun, BoConfig, Policy};
pub use functions::{all as all_functions, by_name as function_by_name, TestFunction};
pub use plots::emit_plots;
pub use suite::{
    format_table, parse_manifest, read_runs_csv, run_job, run_suite, summarize, write_runs_csv, write_summary_csv,
    Failure, Job, RunRow, SuiteResults, SummaryRow,
};
