//! Result files: CSV summaries, per-run CSV rows, NDJSON time series and
//! NDJSON event traces.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::batch::VariantResult;
use super::metrics::Quantiles;
use super::sim::{RunResult, TraceRecord};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

/// Column order of the summary CSV. Changing it breaks downstream scripts.
pub const SUMMARY_HEADER: [&str; 12] =
    ["label", "policy", "mac", "loops", "group", "completed", "failed", "min", "q1", "median", "q3", "max"];

pub const RUNS_HEADER: [&str; 14] = [
    "label",
    "seed",
    "loop",
    "lqg",
    "failed",
    "admitted",
    "delivered",
    "timeouts",
    "mean_aoi",
    "mean_occupancy",
    "net_data_mac_drops",
    "net_data_buffer_drops",
    "net_data_collided_attempts",
    "failure",
];

#[derive(Serialize)]
struct SummaryRow<'a> {
    label: &'a str,
    policy: &'a str,
    mac: &'a str,
    loops: usize,
    group: String,
    completed: usize,
    failed: usize,
    min: Option<f64>,
    q1: Option<f64>,
    median: Option<f64>,
    q3: Option<f64>,
    max: Option<f64>,
}

fn mac_name(v: &VariantResult) -> &'static str {
    match v.scenario.mac.mode {
        crate::netsim::MacMode::Csma => "csma",
        crate::netsim::MacMode::Polling => "polling",
    }
}

/// Writes one row per group (`pooled`, `run_mean`, `loop0`, ...) per variant.
pub fn write_summary_csv<W: Write>(out: W, results: &[VariantResult]) -> Result<(), OutputError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for v in results {
        let s = &v.summary;
        let groups = [("pooled".to_string(), s.pooled), ("run_mean".to_string(), s.run_mean)]
            .into_iter()
            .chain(s.per_loop.iter().enumerate().map(|(i, q)| (format!("loop{i}"), *q)));
        for (group, q) in groups {
            let q: Option<Quantiles> = q;
            w.serialize(SummaryRow {
                label: &v.label,
                policy: v.scenario.policy.kind.name(),
                mac: mac_name(v),
                loops: v.scenario.loops,
                group,
                completed: s.completed,
                failed: s.failed,
                min: q.map(|q| q.min),
                q1: q.map(|q| q.q1),
                median: q.map(|q| q.median),
                q3: q.map(|q| q.q3),
                max: q.map(|q| q.max),
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct RunRow<'a> {
    label: &'a str,
    seed: u64,
    #[serde(rename = "loop")]
    loop_id: usize,
    lqg: Option<f64>,
    failed: bool,
    admitted: u64,
    delivered: u64,
    timeouts: u64,
    mean_aoi: f64,
    mean_occupancy: f64,
    net_data_mac_drops: u64,
    net_data_buffer_drops: u64,
    net_data_collided_attempts: u64,
    failure: String,
}

/// One row per loop per run.
pub fn write_runs_csv<W: Write>(out: W, results: &[VariantResult]) -> Result<(), OutputError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RUNS_HEADER)?;
    for v in results {
        for r in &v.runs {
            for l in &r.loops {
                w.serialize(RunRow {
                    label: &v.label,
                    seed: r.seed,
                    loop_id: l.loop_id,
                    lqg: l.lqg,
                    failed: r.failed(),
                    admitted: l.policy.admitted,
                    delivered: l.delivered,
                    timeouts: l.policy.timeouts,
                    mean_aoi: l.mean_aoi(),
                    mean_occupancy: l.mean_occupancy,
                    net_data_mac_drops: r.net.data.mac_drops,
                    net_data_buffer_drops: r.net.data.buffer_drops,
                    net_data_collided_attempts: r.net.data.collided_attempts,
                    failure: r
                        .failure
                        .as_ref()
                        .map(|f| format!("step {} loop {}: {}", f.step, f.loop_id, f.reason))
                        .unwrap_or_default(),
                })?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct SeriesLine<'a> {
    label: &'a str,
    seed: u64,
    #[serde(rename = "loop")]
    loop_id: usize,
    cost: &'a [f64],
    aoi: &'a [u64],
    lambda: &'a [f64],
    rtt_us: &'a [u64],
}

/// One JSON object per loop per run.
pub fn write_series_ndjson<W: Write>(mut out: W, label: &str, runs: &[RunResult]) -> Result<(), OutputError> {
    for r in runs {
        for l in &r.loops {
            let line = SeriesLine {
                label,
                seed: r.seed,
                loop_id: l.loop_id,
                cost: &l.cost,
                aoi: &l.aoi,
                lambda: &l.lambda,
                rtt_us: &l.rtt_us,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(serde_json::Error::io)?;
        }
    }
    Ok(())
}

pub fn write_trace_ndjson<W: Write>(mut out: W, trace: &[TraceRecord]) -> Result<(), OutputError> {
    for rec in trace {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(serde_json::Error::io)?;
    }
    Ok(())
}

/// Writes `summary.csv`, `runs.csv` and `series.ndjson` into `dir`.
pub fn write_all(dir: &Path, results: &[VariantResult]) -> Result<(), OutputError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let create = |name: &str| -> Result<BufWriter<File>, OutputError> {
        let path = dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(io_err(&path))
    };
    write_summary_csv(create("summary.csv")?, results)?;
    write_runs_csv(create("runs.csv")?, results)?;
    let mut series = create("series.ndjson")?;
    for v in results {
        write_series_ndjson(&mut series, &v.label, &v.runs)?;
    }
    series.flush().map_err(io_err(&dir.join("series.ndjson")))?;
    Ok(())
}
