//! End-to-end runs: configuration, manifests, per-case evaluation, reports
//! and the subcommands built on them.

pub mod commands;
pub mod config;
pub mod eval;
pub mod json;
pub mod manifest;
pub mod report;

pub use commands::{
    cmd_eval, cmd_gen_plus, cmd_gen_world, cmd_gradcheck, cmd_report, cmd_train, fact_recall, fresh_model, load_dataset,
    parse_cases, summarize, Dataset, EvalArgs, GenPlusSummary, ReportFormat, TrainSummary,
};
pub use config::{MetricSettings, ModelShape, RunConfig};
pub use eval::{evaluate_case, run_eval, variant_prompts, CaseFailure, EfficacyRecord, EvalRun, PromptRecord, Record};
pub use manifest::{resolve_timestamp, sha256_hex, DatasetId, ModelId, RunManifest};
pub use report::{aggregate, cell_seed, PlotData, PlotSeries, ReportCell, ReportRow, ReportTable, CSV_COLUMNS};
