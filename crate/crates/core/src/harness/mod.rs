//! Experiment harness: scenario files, the co-simulation engine, batch
//! execution, statistics and result files.

pub mod batch;
pub mod metrics;
pub mod output;
pub mod scenario;
pub mod sim;

pub use batch::{
    loop_count_variants, policy_variants, run_jobs, run_variants, threshold_variants, Executor, Job, Variant,
    VariantResult,
};
pub use metrics::{median, quantiles, summarize, Quantiles, Summary};
pub use scenario::{Activation, PlantSpec, Scenario, ScenarioError};
pub use sim::{run, run_observed, LoopResult, Observer, RunFailure, RunResult, StepRecord, TraceRecord, TraceRecorder};
