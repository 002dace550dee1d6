//! Experiment runner for sketch-compressed optimizer state.
//!
//! Three entry points mirror the binary's subcommands:
//!
//! * [`run_train`] — train the synthetic softmax task with a dense,
//!   sketched or injective-oracle optimizer, emitting `metrics.csv`
//!   (`step,metric,value`), a resolved config, a final state checkpoint
//!   and optional auxiliary snapshots;
//! * [`run_sketch_bench`] — measure error-bound violation rates of both
//!   sketch kinds against an exactly known vector;
//! * [`run_powerlaw`] — re-emit mass-midpoint and top-identity drift
//!   series from a run's snapshot stream.
//!
//! Everything is deterministic given the config file and seed: two runs
//! with the same inputs produce byte-identical CSV outputs.

pub mod bench;
pub mod config;
pub mod error;
pub mod powerlaw;
pub mod train;

pub use bench::{run_sketch_bench, BenchSummary};
pub use config::{
    BenchSection, Distribution, LrSchedule, Mode, OptimizerKind, OptimizerSection, Precision,
    RunConfig, RunSection, SketchSection, TaskConfig,
};
pub use error::{CliError, Result};
pub use powerlaw::{run_powerlaw, PowerlawSummary};
pub use train::{run_train, TrainSummary};
