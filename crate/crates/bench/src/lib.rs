//! Experiment harness for the multicast routing solvers: instance suites,
//! timed solver comparison, incremental arrivals, model ablations and
//! Graphviz export.

pub mod ablation;
pub mod dot;
pub mod error;
pub mod incremental;
pub mod solvers;
pub mod suite;

pub use ablation::{ablation_run, AblationConfig};
pub use dot::{export_all, export_dot};
pub use error::{BenchError, Result};
pub use incremental::{incremental_run, IncrementalConfig};
pub use solvers::{timed, Algo, SolverContext};
pub use suite::{run_suite, score, summarize, ResultRow, SuiteConfig, SuiteKind, SummaryRow};

/// Environment variable read for the default worker thread count.
pub const THREADS_ENV: &str = "MCROUTE_THREADS";
