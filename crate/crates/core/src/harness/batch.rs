//! Multi-seed batches and the standard experiments built on them.
//!
//! Runs are independent, so a batch is an embarrassingly parallel map over
//! `(scenario, seed)` jobs. With the `parallel` feature the map runs on the
//! rayon pool; results are returned in job order either way, so output does
//! not depend on the executor.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::adaptation::TaConfig;
use crate::transport::PolicyKind;

use super::metrics::{summarize, Summary};
use super::scenario::{Scenario, ScenarioError};
use super::sim::{run, RunResult};

/// How a batch is spread over threads. `Parallel` degrades to sequential
/// execution when the crate is built without the `parallel` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Executor {
    Sequential,
    #[default]
    Parallel,
}

/// One batch entry: a labelled scenario.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub scenario: Scenario,
    pub seed: u64,
}

/// Runs every job and returns results in job order.
pub fn run_jobs(jobs: &[Job], exec: Executor) -> Result<Vec<RunResult>, ScenarioError> {
    for job in jobs {
        job.scenario.validate()?;
    }
    let one = |job: &Job| run(&job.scenario, job.seed);
    match exec {
        #[cfg(feature = "parallel")]
        Executor::Parallel => jobs.par_iter().map(one).collect(),
        #[cfg(not(feature = "parallel"))]
        Executor::Parallel => jobs.iter().map(one).collect(),
        Executor::Sequential => jobs.iter().map(one).collect(),
    }
}

/// A labelled variant of a base scenario, run over a set of seeds.
#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    pub scenario: Scenario,
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub label: String,
    pub scenario: Scenario,
    pub runs: Vec<RunResult>,
    pub summary: Summary,
}

/// Runs every variant with every seed in one flat batch.
pub fn run_variants(variants: &[Variant], seeds: &[u64], exec: Executor) -> Result<Vec<VariantResult>, ScenarioError> {
    let jobs: Vec<Job> = variants
        .iter()
        .flat_map(|v| seeds.iter().map(|&seed| Job { label: v.label.clone(), scenario: v.scenario.clone(), seed }))
        .collect();
    let mut results = run_jobs(&jobs, exec)?.into_iter();
    Ok(variants
        .iter()
        .map(|v| {
            let runs: Vec<RunResult> = results.by_ref().take(seeds.len()).collect();
            VariantResult {
                summary: summarize(&v.label, &runs),
                label: v.label.clone(),
                scenario: v.scenario.clone(),
                runs,
            }
        })
        .collect())
}

/// Fixed thresholds plus, optionally, the adaptive threshold under the same
/// policy.
pub fn threshold_variants(base: &Scenario, lambdas: &[f64], adaptive: Option<TaConfig>) -> Vec<Variant> {
    let mut out: Vec<Variant> = lambdas
        .iter()
        .map(|&lambda| {
            let mut s = base.clone();
            s.policy.lambda = lambda;
            s.policy.adaptation = None;
            Variant { label: format!("lambda={lambda}"), scenario: s }
        })
        .collect();
    if let Some(ta) = adaptive {
        let mut s = base.clone();
        s.policy.adaptation = Some(ta);
        out.push(Variant { label: "ta".into(), scenario: s });
    }
    out
}

/// The base scenario with `n` loops for every `n` in `counts`.
pub fn loop_count_variants(base: &Scenario, counts: &[usize]) -> Vec<Variant> {
    counts
        .iter()
        .map(|&n| {
            let mut s = base.clone();
            s.loops = n;
            s.activation.retain(|a| a.loop_id < n);
            if !s.plants.is_empty() {
                s.plants.resize(n, s.plant.clone());
            }
            Variant { label: format!("loops={n}"), scenario: s }
        })
        .collect()
}

/// The base scenario under each transport policy.
pub fn policy_variants(base: &Scenario, kinds: &[PolicyKind]) -> Vec<Variant> {
    kinds
        .iter()
        .map(|&kind| {
            let mut s = base.clone();
            s.policy.kind = kind;
            Variant { label: kind.name().to_string(), scenario: s }
        })
        .collect()
}
