//! Training pipeline and the experiment commands behind the CLI.

mod checkpoint;
mod commands;
mod config;
mod report;
mod train;

pub use checkpoint::Checkpoint;
pub use commands::{
    cmd_gen, cmd_gridsearch, cmd_sweep, cmd_train, write_sweep_csv, GridCell, GridSearchResult,
    SweepRow, TrainOutcome,
};
pub use config::{
    DataSource, LambdaGrid, LambdaMode, SweepSpec, TrainConfig, DEFAULT_VALIDATION_FRACTION,
};
pub use report::{
    cmd_report, Comparison, ImprovementEntry, RatioComparison, ReportBundle, ReportOptions,
    ReportRows,
};
pub use train::{
    evaluate, fit, table_loss, train_model, train_prepared, Evaluation, FitOptions, Prepared,
    TrainRun,
};
