//! Probe datasets, suite execution and metrics.

mod metrics;
mod patch;
mod probes;
mod suite;

pub use metrics::{
    compute_metrics, creativity_ratio, error_budget_exceeded, f1_from, Counts, CreativityReport, MetricsError,
    MetricsReport, ResultRecord, MAX_ERROR_SHARE,
};
pub use patch::{apply_patch, Correction, Exclusion, PatchError, PatchList, PatchSummary};
pub use probes::{load_probes, load_probes_with, object_from_question, parse_probes, scan_probes, LoadOptions, ProbeError, ProbeSet};
pub use suite::{run_suite, MemorySink, SuiteOptions, SuiteSink, DEFAULT_PARALLELISM};
