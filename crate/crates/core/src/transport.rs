//! Exact type-2 Wasserstein distances between uniform empirical measures in
//! the plane, and the ρ-binned expected Wasserstein distance (EWD).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morphology::MorphologySample;
use crate::params::RHO_RANGE;
use crate::rng::{keyed_index, stream};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_MIN_COUNT: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("empirical distribution is empty")]
    Empty,
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("transport solver did not converge within {iterations} augmentations")]
    NonConvergence { iterations: usize },
    #[error("bin edges must be strictly increasing with at least two entries")]
    BadEdges,
    #[error("sample rho {rho} lies outside the bin edges")]
    OutOfRange { rho: f64 },
    #[error("bin {bin} is under-populated (model {model}, reference {reference}, minimum {min})")]
    UnderPopulated { bin: usize, model: usize, reference: usize, min: usize },
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
}

/// Uniform empirical measure on points `(area, boundary_length)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalJoint {
    points: Vec<[f64; 2]>,
}

impl EmpiricalJoint {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self, TransportError> {
        if points.is_empty() {
            return Err(TransportError::Empty);
        }
        if let Some(k) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(TransportError::NonFinite(k));
        }
        Ok(EmpiricalJoint { points })
    }

    pub fn from_samples(samples: &[MorphologySample]) -> Result<Self, TransportError> {
        Self::new(samples.iter().map(|s| [s.area as f64, s.boundary_length as f64]).collect())
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> [f64; 2] {
        let n = self.points.len() as f64;
        let s = self.points.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    }
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (x, y) = (a[0] - b[0], a[1] - b[1]);
    x * x + y * y
}

/// Exact W₂ between the two uniform empirical measures.
pub fn w2(p: &EmpiricalJoint, q: &EmpiricalJoint) -> Result<f64, TransportError> {
    let cost: Vec<Vec<f64>> = p.points.iter().map(|&a| q.points.iter().map(|&b| sq_dist(a, b)).collect()).collect();
    let mean_cost = if p.len() == q.len() {
        let assign = hungarian(&cost);
        assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / p.len() as f64
    } else {
        transport_cost(&cost)?
    };
    Ok(mean_cost.max(0.0).sqrt())
}

/// Minimum-cost perfect matching on a square cost matrix; returns the column
/// assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials; column 0 is a virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Optimal mean cost of moving mass `1/n` from each row to mass `1/m` at each
/// column, by successive shortest paths with integer masses `m` and `n`.
pub fn transport_cost(cost: &[Vec<f64>]) -> Result<f64, TransportError> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(TransportError::Empty);
    }
    // nodes: rows 0..n, columns n..n+m, source S, sink T
    let (s, t) = (n + m, n + m + 1);
    let nodes = n + m + 2;
    let mut supply = vec![m as u64; n];
    let mut demand = vec![n as u64; m];
    let mut flow = vec![vec![0u64; m]; n];
    let mut pot = vec![0.0f64; nodes];
    let total = (n * m) as u64;
    let mut shipped = 0u64;
    let max_iter = 4 * (n + 1) * (m + 1) + 64;
    let mut iter = 0;

    let mut dist = vec![f64::INFINITY; nodes];
    let mut prev = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    while shipped < total {
        iter += 1;
        if iter > max_iter {
            return Err(TransportError::NonConvergence { iterations: max_iter });
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        dist[s] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (k, &d) in dist.iter().enumerate() {
                if !done[k] && d < best {
                    best = d;
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |v: usize, c: f64, dist: &mut [f64], prev: &mut [usize]| {
                if done[v] {
                    return;
                }
                let nd = dist[u] + c + pot[u] - pot[v];
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u == s {
                for (i, &left) in supply.iter().enumerate() {
                    if left > 0 {
                        relax(i, 0.0, &mut dist, &mut prev);
                    }
                }
            } else if u < n {
                for (j, &c) in cost[u].iter().enumerate() {
                    relax(n + j, c, &mut dist, &mut prev);
                }
                if supply[u] < m as u64 {
                    relax(s, 0.0, &mut dist, &mut prev);
                }
            } else if u < n + m {
                let j = u - n;
                for i in 0..n {
                    if flow[i][j] > 0 {
                        relax(i, -cost[i][j], &mut dist, &mut prev);
                    }
                }
                if demand[j] > 0 {
                    relax(t, 0.0, &mut dist, &mut prev);
                }
            } else {
                for (j, &got) in demand.iter().enumerate() {
                    if got < n as u64 {
                        relax(n + j, 0.0, &mut dist, &mut prev);
                    }
                }
            }
        }
        if !dist[t].is_finite() {
            return Err(TransportError::NonConvergence { iterations: iter });
        }
        let cap = dist[t];
        for k in 0..nodes {
            pot[k] += dist[k].min(cap);
        }
        // bottleneck along the path
        let mut push = total - shipped;
        let mut v = t;
        while v != s {
            let u = prev[v];
            let c = if u == s {
                supply[v]
            } else if v == t {
                demand[u - n]
            } else if v == s {
                m as u64 - supply[u]
            } else if u == t {
                n as u64 - demand[v - n]
            } else if u < n {
                u64::MAX
            } else {
                flow[v][u - n]
            };
            push = push.min(c);
            v = u;
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            if u == s {
                supply[v] -= push;
            } else if v == t {
                demand[u - n] -= push;
            } else if v == s {
                supply[u] += push;
            } else if u == t {
                demand[v - n] += push;
            } else if u < n {
                flow[u][v - n] += push;
            } else {
                flow[v][u - n] -= push;
            }
            v = u;
        }
        shipped += push;
    }
    let sum: f64 = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| flow[i][j] as f64 * cost[i][j]).sum();
    Ok(sum / total as f64)
}

/// `bins` equal-width edges over the reference ρ range.
pub fn default_edges(bins: usize) -> Vec<f64> {
    let (lo, hi) = RHO_RANGE;
    (0..=bins).map(|k| if k == bins { hi } else { lo + (hi - lo) * k as f64 / bins as f64 }).collect()
}

fn check_edges(edges: &[f64]) -> Result<(), TransportError> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(TransportError::BadEdges);
    }
    Ok(())
}

/// Index of the bin holding `rho`: half-open `[e_k, e_{k+1})`, last bin closed.
pub fn bin_index(edges: &[f64], rho: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if !(rho >= edges[0] && rho <= edges[last]) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= rho).saturating_sub(1).min(last - 1))
}

/// Samples grouped by ρ bin, with the bins holding fewer than `min_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Binned {
    pub bins: Vec<Vec<MorphologySample>>,
    pub under_populated: Vec<usize>,
}

pub fn bin_by_rho(samples: &[MorphologySample], edges: &[f64], min_count: usize) -> Result<Binned, TransportError> {
    check_edges(edges)?;
    let mut bins = vec![Vec::new(); edges.len() - 1];
    for s in samples {
        let k = bin_index(edges, s.rho).ok_or(TransportError::OutOfRange { rho: s.rho })?;
        bins[k].push(*s);
    }
    let under_populated = bins.iter().enumerate().filter(|(_, b)| b.len() < min_count).map(|(k, _)| k).collect();
    Ok(Binned { bins, under_populated })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EwdOptions {
    pub edges: Vec<f64>,
    pub min_count: usize,
    /// z-score both sides by the pooled reference mean and deviation.
    pub standardize: bool,
}

impl Default for EwdOptions {
    fn default() -> Self {
        EwdOptions { edges: default_edges(DEFAULT_BINS), min_count: DEFAULT_MIN_COUNT, standardize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwdReport {
    pub bin_edges: Vec<f64>,
    pub per_bin_w2: Vec<f64>,
    /// `[model, reference]` per bin.
    pub per_bin_counts: Vec<[usize; 2]>,
    pub ewd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
    pub standardized: bool,
}

// Bins of points for both sides, after the optional standardization.
type Prepared = (Vec<Vec<[f64; 2]>>, Vec<Vec<[f64; 2]>>);

fn prepare(model: &[MorphologySample], reference: &[MorphologySample], opts: &EwdOptions) -> Result<Prepared, TransportError> {
    let bm = bin_by_rho(model, &opts.edges, 0)?;
    let br = bin_by_rho(reference, &opts.edges, 0)?;
    for (k, (a, b)) in bm.bins.iter().zip(&br.bins).enumerate() {
        if a.len() < opts.min_count.max(1) || b.len() < opts.min_count.max(1) {
            return Err(TransportError::UnderPopulated { bin: k, model: a.len(), reference: b.len(), min: opts.min_count });
        }
    }
    let (shift, scale) = if opts.standardize { reference_stats(reference) } else { ([0.0; 2], [1.0; 2]) };
    let tf = |bins: Vec<Vec<MorphologySample>>| -> Vec<Vec<[f64; 2]>> {
        bins.into_iter()
            .map(|b| {
                b.iter()
                    .map(|s| [(s.area as f64 - shift[0]) / scale[0], (s.boundary_length as f64 - shift[1]) / scale[1]])
                    .collect()
            })
            .collect()
    };
    Ok((tf(bm.bins), tf(br.bins)))
}

fn reference_stats(reference: &[MorphologySample]) -> ([f64; 2], [f64; 2]) {
    let n = reference.len().max(1) as f64;
    let mean = [
        reference.iter().map(|s| s.area as f64).sum::<f64>() / n,
        reference.iter().map(|s| s.boundary_length as f64).sum::<f64>() / n,
    ];
    let var = [
        reference.iter().map(|s| (s.area as f64 - mean[0]).powi(2)).sum::<f64>() / n,
        reference.iter().map(|s| (s.boundary_length as f64 - mean[1]).powi(2)).sum::<f64>() / n,
    ];
    let sd = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    (mean, sd)
}

fn bin_weights(edges: &[f64]) -> Vec<f64> {
    let span = edges[edges.len() - 1] - edges[0];
    edges.windows(2).map(|w| (w[1] - w[0]) / span).collect()
}

fn ewd_prepared(model: &[Vec<[f64; 2]>], reference: &[Vec<[f64; 2]>], edges: &[f64]) -> Result<(Vec<f64>, f64), TransportError> {
    let per_bin: Vec<f64> = model
        .par_iter()
        .zip(reference.par_iter())
        .map(|(a, b)| w2(&EmpiricalJoint::new(a.clone())?, &EmpiricalJoint::new(b.clone())?))
        .collect::<Result<_, _>>()?;
    let ewd = per_bin.iter().zip(bin_weights(edges)).map(|(d, w)| d * w).sum();
    Ok((per_bin, ewd))
}

/// Expected W₂ between the ρ-conditional joints of `model` and `reference`.
pub fn ewd(model: &[MorphologySample], reference: &[MorphologySample], opts: &EwdOptions) -> Result<EwdReport, TransportError> {
    let (pm, pr) = prepare(model, reference, opts)?;
    let (per_bin_w2, ewd) = ewd_prepared(&pm, &pr, &opts.edges)?;
    Ok(EwdReport {
        bin_edges: opts.edges.clone(),
        per_bin_w2,
        per_bin_counts: pm.iter().zip(&pr).map(|(a, b)| [a.len(), b.len()]).collect(),
        ewd,
        ci: None,
        standardized: opts.standardize,
    })
}

/// Percentile 95% interval of the EWD under within-bin resampling with
/// replacement. Both sides draw with the same keys.
pub fn bootstrap_ci(
    model: &[MorphologySample],
    reference: &[MorphologySample],
    opts: &EwdOptions,
    resamples: usize,
    seed: u64,
) -> Result<[f64; 2], TransportError> {
    if resamples < 100 {
        return Err(TransportError::TooFewResamples(resamples));
    }
    let (pm, pr) = prepare(model, reference, opts)?;
    let draw = |bins: &[Vec<[f64; 2]>], r: usize| -> Vec<Vec<[f64; 2]>> {
        bins.iter()
            .enumerate()
            .map(|(k, b)| {
                (0..b.len())
                    .map(|x| b[keyed_index(seed, stream::BOOTSTRAP, r as u64, ((k as u64) << 32) | x as u64, b.len())])
                    .collect()
            })
            .collect()
    };
    let mut stats = (0..resamples)
        .map(|r| ewd_prepared(&draw(&pm, r), &draw(&pr, r), &opts.edges).map(|(_, e)| e))
        .collect::<Result<Vec<f64>, _>>()?;
    stats.sort_by(f64::total_cmp);
    Ok([percentile(&stats, 0.025), percentile(&stats, 0.975)])
}

/// Linear-interpolated percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Histogram of `(area, boundary_length)` within one ρ bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub rho_bin: [f64; 2],
    pub area_edges: Vec<f64>,
    pub boundary_edges: Vec<f64>,
    /// `counts[a][b]`, normalized to sum to one when the bin is non-empty.
    pub density: Vec<Vec<f64>>,
}

/// Per-ρ-bin density grids on a shared `resolution × resolution` grid that
/// spans every sample.
pub fn density_grids(samples: &[MorphologySample], edges: &[f64], resolution: usize) -> Result<Vec<DensityGrid>, TransportError> {
    let binned = bin_by_rho(samples, edges, 0)?;
    let res = resolution.max(1);
    let span = |f: fn(&MorphologySample) -> f64| {
        let lo = samples.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        let hi = if hi > lo { hi } else { lo + 1.0 };
        (0..=res).map(|k| lo + (hi - lo) * k as f64 / res as f64).collect::<Vec<f64>>()
    };
    let area_edges = span(|s| s.area as f64);
    let boundary_edges = span(|s| s.boundary_length as f64);
    let cell = |e: &[f64], x: f64| bin_index(e, x).unwrap_or(res - 1);
    Ok(binned
        .bins
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let mut density = vec![vec![0.0; res]; res];
            for s in b {
                density[cell(&area_edges, s.area as f64)][cell(&boundary_edges, s.boundary_length as f64)] += 1.0;
            }
            if !b.is_empty() {
                density.iter_mut().flatten().for_each(|v| *v /= b.len() as f64);
            }
            DensityGrid { rho_bin: [edges[k], edges[k + 1]], area_edges: area_edges.clone(), boundary_edges: boundary_edges.clone(), density }
        })
        .collect())
}
