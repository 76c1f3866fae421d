//! Wall-clock timing of full trajectories.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::lca::{self, LcaError};
use crate::params::{LcaParams, RunConfig};
use crate::transport::percentile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median_ms: f64,
    pub q1_ms: f64,
    pub q3_ms: f64,
    pub iqr_ms: f64,
}

/// Median and quartiles of `times_ms`; `None` when empty.
pub fn summarize(times_ms: &[f64]) -> Option<Summary> {
    if times_ms.is_empty() {
        return None;
    }
    let mut t = times_ms.to_vec();
    t.sort_by(f64::total_cmp);
    let (q1, med, q3) = (percentile(&t, 0.25), percentile(&t, 0.5), percentile(&t, 0.75));
    Some(Summary { median_ms: med, q1_ms: q1, q3_ms: q3, iqr_ms: q3 - q1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub seed: u64,
    pub steps: u64,
    pub cell_updates: u64,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcaBench {
    pub side: usize,
    pub workers: usize,
    pub runs: Vec<BenchRun>,
    pub summary: Summary,
    /// Σ steps · side²; independent of timing.
    pub cell_updates: u64,
}

/// Times `m` full trajectories with seeds `cfg.seed, cfg.seed + 1, …`.
pub fn bench_lca(m: usize, params: LcaParams, cfg: &RunConfig, workers: usize) -> Result<LcaBench, LcaError> {
    let mut runs = Vec::with_capacity(m);
    for k in 0..m as u64 {
        let c = RunConfig { seed: cfg.seed.wrapping_add(k), ..*cfg };
        let t0 = Instant::now();
        let out = lca::run_with_workers(params, &c, workers)?;
        let time_ms = t0.elapsed().as_secs_f64() * 1e3;
        runs.push(BenchRun { seed: c.seed, steps: out.steps, cell_updates: out.steps * (cfg.side * cfg.side) as u64, time_ms });
    }
    let times: Vec<f64> = runs.iter().map(|r| r.time_ms).collect();
    let summary = summarize(&times).unwrap_or(Summary { median_ms: 0.0, q1_ms: 0.0, q3_ms: 0.0, iqr_ms: 0.0 });
    let cell_updates = runs.iter().map(|r| r.cell_updates).sum();
    Ok(LcaBench { side: cfg.side, workers, runs, summary, cell_updates })
}
