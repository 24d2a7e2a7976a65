//! Desk-scale restoration experiments: degradations, a residual baseline
//! network, training and evaluation loops, and run reports.

pub mod degrade;
pub mod model;
pub mod report;
pub mod synth;
pub mod train;

pub use degrade::{degrade, Degradation, DegradationSpec};
pub use model::RestorationModel;
pub use report::{compare_runs, Comparison, MetricTable, RunReport, StepLog};
pub use train::{
    evaluate, evaluate_config, prepare_datasets, score_pair, train_model, train_restoration, write_run_artifacts,
    Configuration, Datasets, EvalOptions,
    ExperimentConfig, Pair, Task,
};
