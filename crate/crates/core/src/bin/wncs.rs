//! Command-line front end: run a scenario, sweep a parameter, or compare
//! transport policies, writing CSV and NDJSON results.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wncs::adaptation::TaConfig;
use wncs::harness::output::{write_all, write_trace_ndjson, OutputError};
use wncs::harness::{
    loop_count_variants, policy_variants, run_observed, run_variants, threshold_variants, Executor, Scenario,
    ScenarioError, TraceRecorder, Variant, VariantResult,
};
use wncs::transport::PolicyKind;

#[derive(Parser)]
#[command(name = "wncs", version, about = "Networked control loops over a shared wireless channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Seeds as a list `1,2,5` or a half-open range `0..10`. Defaults to the
    /// scenario's `seeds`, or `0` if it has none.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run the batch on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    /// Event threshold lambda.
    Threshold,
    /// Number of loops.
    Loops,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario over a batch of seeds.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write an NDJSON event trace of the first seed to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep the threshold or the loop count.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Add the adaptive threshold as an extra column of a threshold sweep.
        #[arg(long)]
        adaptive: bool,
    },
    /// Run the scenario under several transport policies.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated policy names; all policies if omitted.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<PolicyKind>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Usage(String),
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse seeds {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn seeds_for(common: &Common, scenario: &Scenario) -> Result<Vec<u64>, CliError> {
    match &common.seeds {
        Some(text) => parse_seeds(text),
        None if !scenario.seeds.is_empty() => Ok(scenario.seeds.clone()),
        None => Ok(vec![0]),
    }
}

fn report(results: &[VariantResult]) {
    println!("{:<16} {:>9} {:>6} {:>10} {:>10} {:>10}", "label", "completed", "failed", "q1", "median", "q3");
    for v in results {
        let s = &v.summary;
        match s.pooled {
            Some(q) => println!(
                "{:<16} {:>9} {:>6} {:>10.4} {:>10.4} {:>10.4}",
                v.label, s.completed, s.failed, q.q1, q.median, q.q3
            ),
            None => println!("{:<16} {:>9} {:>6} {:>10} {:>10} {:>10}", v.label, s.completed, s.failed, "-", "-", "-"),
        }
    }
}

fn execute(common: &Common, variants: Vec<Variant>, seeds: &[u64]) -> Result<(), CliError> {
    let exec = if common.sequential { Executor::Sequential } else { Executor::Parallel };
    let results = run_variants(&variants, seeds, exec)?;
    write_all(&common.out, &results)?;
    report(&results);
    println!("results written to {}", common.out.display());
    Ok(())
}

fn write_trace(path: &Path, scenario: &Scenario, seed: u64) -> Result<(), CliError> {
    let mut trace = TraceRecorder::default();
    run_observed(scenario, seed, &mut trace)?;
    let file = File::create(path).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })?;
    write_trace_ndjson(BufWriter::new(file), &trace.records)?;
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, trace } => {
            let scenario = Scenario::load(&common.scenario)?;
            let seeds = seeds_for(&common, &scenario)?;
            let label = if scenario.name.is_empty() { "run".to_string() } else { scenario.name.clone() };
            if let Some(path) = &trace {
                write_trace(path, &scenario, seeds[0])?;
            }
            execute(&common, vec![Variant { label, scenario }], &seeds)
        }
        Command::Sweep { common, param, values, adaptive } => {
            let scenario = Scenario::load(&common.scenario)?;
            let seeds = seeds_for(&common, &scenario)?;
            let variants = match param {
                SweepParam::Threshold => {
                    if !scenario.policy.kind.uses_threshold() {
                        return Err(CliError::Usage(format!(
                            "policy {} has no threshold to sweep",
                            scenario.policy.kind
                        )));
                    }
                    let ta = adaptive.then(|| scenario.policy.adaptation.clone().unwrap_or_default());
                    threshold_variants(&scenario, &values, ta.map(|t: TaConfig| t))
                }
                SweepParam::Loops => {
                    let counts: Vec<usize> = values
                        .iter()
                        .map(|&v| {
                            (v >= 1.0 && v.fract() == 0.0)
                                .then_some(v as usize)
                                .ok_or_else(|| CliError::Usage(format!("loop count {v} is not a positive integer")))
                        })
                        .collect::<Result<_, _>>()?;
                    loop_count_variants(&scenario, &counts)
                }
            };
            for v in &variants {
                v.scenario.validate()?;
            }
            execute(&common, variants, &seeds)
        }
        Command::Compare { common, policies } => {
            let scenario = Scenario::load(&common.scenario)?;
            let seeds = seeds_for(&common, &scenario)?;
            let kinds = if policies.is_empty() { PolicyKind::ALL.to_vec() } else { policies };
            execute(&common, policy_variants(&scenario, &kinds), &seeds)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Output(_) => ExitCode::from(1),
                CliError::Scenario(_) | CliError::Usage(_) => ExitCode::from(2),
            }
        }
    }
}
