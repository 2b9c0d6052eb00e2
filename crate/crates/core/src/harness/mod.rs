//! Experiment orchestration: TOML sweep specs, parallel seeded replications,
//! accuracy metrics, CSV results and their summaries.

pub mod metrics;
pub mod run;
pub mod spec;
pub mod summarize;

pub use metrics::{accuracy, evaluate, Evaluation, Scope};
pub use run::{
    child_seed, label_dump_path, load_rows, read_rows, run_experiment, save_rows, write_label_dump,
    write_rows, ExperimentOutput, LabelDump, ResultRow, CSV_HEADER, SCHEMA_COMMENT,
};
pub use spec::{Algorithm, AlphaPolicyName, ExperimentSpec};
pub use summarize::{format_table, mean_and_std_error, summarize, SummaryRow};
