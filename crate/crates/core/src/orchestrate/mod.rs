//! Declarative pipelines over the registered operations, run records,
//! deterministic replay and store-wide consistency checking.

pub mod check;
pub mod ops;
pub mod run;

pub use check::{consistency_check, ConsistencyReport, Finding, FindingKind};
pub use ops::{compute, lookup, OpInfo, Payload, OPERATIONS};
pub use run::{
    define_pipeline, replay, run_pipeline, step_seed, validate_spec, Binding, PipelineSpec, ReplayReport,
    RunOptions, StepComparison,
};
