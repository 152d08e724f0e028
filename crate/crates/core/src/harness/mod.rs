//! Experiment orchestration: configuration, seeding, training and
//! evaluation loops, comparison tables and result files.

pub mod config;
pub mod output;
pub mod run;

pub use config::{DemandSpec, DispatcherKind, ExperimentConfig};
pub use output::{emit_outputs, write_compare, write_run_record};
pub use run::{
    compare, compare_summaries, eval_days, load_checkpoint, make_dispatcher, run_eval, run_training, simulate_day,
    CompareRow, DayRecord, EvalRow, EvalSummary, Metric, RunRecord, Stat, TrainOutcome,
};
