//! Order statistics over batches of runs.

use serde::Serialize;

use super::sim::RunResult;

/// Five-number summary. Quartiles interpolate linearly between order
/// statistics, so `{1, 2, 3, 4, 5}` gives `2, 3, 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of already sorted data, `p` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `None` for empty input. NaNs are rejected by the caller's data, not here.
pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Quantiles {
        count: v.len(),
        min: v[0],
        q1: quantile_sorted(&v, 0.25),
        median: quantile_sorted(&v, 0.5),
        q3: quantile_sorted(&v, 0.75),
        max: v[v.len() - 1],
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantiles(values).map(|q| q.median)
}

/// Cost statistics of a batch. Failed runs are excluded from every quantile
/// and only counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub label: String,
    pub completed: usize,
    pub failed: usize,
    /// Per-loop costs of every completed run, pooled.
    pub pooled: Option<Quantiles>,
    /// Loop-averaged cost of each completed run.
    pub run_mean: Option<Quantiles>,
    /// Per-loop costs, indexed by loop id.
    pub per_loop: Vec<Option<Quantiles>>,
}

pub fn summarize(label: &str, runs: &[RunResult]) -> Summary {
    let completed: Vec<&RunResult> = runs.iter().filter(|r| !r.failed()).collect();
    let n_loops = runs.iter().map(|r| r.loops.len()).max().unwrap_or(0);
    let loop_costs =
        |i: usize| -> Vec<f64> { completed.iter().filter_map(|r| r.loops.get(i).and_then(|l| l.lqg)).collect() };
    let pooled: Vec<f64> = completed.iter().flat_map(|r| r.loops.iter().filter_map(|l| l.lqg)).collect();
    let means: Vec<f64> = completed.iter().filter_map(|r| r.mean_lqg()).collect();
    Summary {
        label: label.to_string(),
        completed: completed.len(),
        failed: runs.len() - completed.len(),
        pooled: quantiles(&pooled),
        run_mean: quantiles(&means),
        per_loop: (0..n_loops).map(|i| quantiles(&loop_costs(i))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let q = quantiles(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let q = quantiles(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (1.75, 2.5, 3.25));
        assert_eq!(median(&[7.0]), Some(7.0));
        assert!(quantiles(&[]).is_none());
    }
}
