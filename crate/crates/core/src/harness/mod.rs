//! Experiment configuration, replicate loops and result files.

pub mod config;
pub mod runner;
pub mod selftest;

pub use config::{
    DensityConfig, DensitySpec, ExperimentConfig, ExperimentKind, FlowConfig, MapConfig,
    OrderingConfig,
};
pub use runner::{
    replicate_stream, rows_to_csv, run_experiment, run_gradcheck, run_oracle, run_ordering,
    run_rates, run_sine_frequency, sample_hash, standardizing_init, train_single, with_threads,
    ExperimentOutput, ExperimentSummary, GradcheckReport, OracleEntry, PairRow, ResultRow,
    CSV_HEADER,
};
pub use selftest::{run_selftest, selftest_summary, SelfCheck};
