//! Stochastic local cellular automaton for snow-crystal growth.
//!
//! Each cell carries an attachment flag and three masses: boundary (quasi-liquid)
//! mass `b`, crystal mass `c` and diffusive (vapor) mass `d`. One raw step
//! applies diffusion, freezing, attachment, melting and noise, in that order.
//! Every sub-step reads only the fields committed by the previous one, so cell
//! updates can be scheduled across threads without changing a single bit.
//!
//! Neighbor sums are always taken as `(E+N) + (W+S) + (NE+SW)`. Swapping `i`
//! and `j` exchanges the members of each pair, so with mirror gluing the wedge
//! state stays exactly symmetric about its bisector and reconstructs into a
//! consistent whole crystal.

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{fold_into_wedge, AxialCoord, Folded, WedgeGrid, WedgeSymmetry};
use crate::params::{BoundaryMode, LcaParams, ParamError, RunConfig};
use crate::rng::{keyed_u64, stream};
use crate::trajectory::{Source, Trajectory};

#[derive(Debug, Error)]
pub enum LcaError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("degenerate run: nothing attached beyond the seed after {steps} steps")]
    Degenerate { steps: u64 },
    #[error("cannot build worker pool: {0}")]
    Workers(String),
}

/// Per-cell automaton fields over the wedge, row-major in `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LcaState {
    pub side: usize,
    pub attached: Vec<bool>,
    pub boundary_mass: Vec<f64>,
    pub crystal_mass: Vec<f64>,
    pub diffusive_mass: Vec<f64>,
    pub step_index: u64,
}

impl LcaState {
    pub fn attached_grid(&self) -> WedgeGrid {
        WedgeGrid::from_cells(self.side, self.attached.clone())
    }

    pub fn attached_count(&self) -> usize {
        self.attached.iter().filter(|&&a| a).count()
    }

    /// Plain sum of `b + c + d` over wedge cells.
    pub fn wedge_mass(&self) -> f64 {
        (0..self.attached.len())
            .map(|k| self.boundary_mass[k] + self.crystal_mass[k] + self.diffusive_mass[k])
            .sum()
    }
}

/// Wedge topology with neighbors pre-folded. Missing (exterior) neighbors
/// point at the cell itself, which realizes the reflecting far edge.
#[derive(Debug, Clone)]
pub struct Lattice {
    side: usize,
    symmetry: WedgeSymmetry,
    boundary: BoundaryMode,
    neighbors: Vec<[u32; 6]>,
    ring: Vec<u32>,
    noise_key: Vec<u64>,
    weight: Vec<f64>,
    // (copy, original) for rotational gluing, where the j-axis edge repeats the i-axis edge
    ghosts: Vec<(u32, u32)>,
    // CSR list of cells that have `k` among their folded neighbors, with multiplicity
    readers_start: Vec<u32>,
    readers: Vec<u32>,
}

impl Lattice {
    pub fn new(side: usize, symmetry: WedgeSymmetry, boundary: BoundaryMode) -> Self {
        let n = side * side;
        let idx = |c: AxialCoord| c.i as usize * side + c.j as usize;
        let mut neighbors = Vec::with_capacity(n);
        let mut ring = Vec::new();
        let mut noise_key = Vec::with_capacity(n);
        let mut weight = Vec::with_capacity(n);
        let mut ghosts = Vec::new();
        for k in 0..n {
            let c = AxialCoord::new((k / side) as i32, (k % side) as i32);
            let nb = c.neighbors().map(|p| match fold_into_wedge(p, side, symmetry) {
                Ok(Folded::Cell(f)) => idx(f) as u32,
                Ok(Folded::Exterior) => k as u32,
                Err(e) => unreachable!("neighbor of a wedge cell: {e}"),
            });
            neighbors.push(nb);
            if c.i as usize == side - 1 || c.j as usize == side - 1 {
                ring.push(k as u32);
            }
            noise_key.push(idx(symmetry.canonical(c)) as u64);
            weight.push(symmetry.multiplicity(c));
            if symmetry == WedgeSymmetry::Rotational && c.i == 0 && c.j > 0 {
                ghosts.push((k as u32, idx(AxialCoord::new(c.j, 0)) as u32));
            }
        }
        let mut readers_start = vec![0u32; n + 1];
        for nb in &neighbors {
            for &m in nb {
                readers_start[m as usize + 1] += 1;
            }
        }
        for k in 0..n {
            readers_start[k + 1] += readers_start[k];
        }
        let mut fill = readers_start.clone();
        let mut readers = vec![0u32; 6 * n];
        for (k, nb) in neighbors.iter().enumerate() {
            for &m in nb {
                readers[fill[m as usize] as usize] = k as u32;
                fill[m as usize] += 1;
            }
        }
        Lattice { side, symmetry, boundary, neighbors, ring, noise_key, weight, ghosts, readers_start, readers }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn symmetry(&self) -> WedgeSymmetry {
        self.symmetry
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    /// Folded neighbor indices of cell `k`, in E, W, N, S, NE, SW order.
    pub fn neighbors(&self, k: usize) -> [u32; 6] {
        self.neighbors[k]
    }

    /// Whole-crystal cells represented by wedge cell `k`.
    pub fn weight(&self, k: usize) -> f64 {
        self.weight[k]
    }
}

/// One configured automaton: topology, parameters and run seed.
pub struct Engine {
    lattice: Lattice,
    params: LcaParams,
    seed: u64,
    pool: Option<rayon::ThreadPool>,
}

impl Engine {
    pub fn new(params: LcaParams, cfg: &RunConfig) -> Result<Self, LcaError> {
        params.validate()?;
        cfg.validate()?;
        Ok(Engine {
            lattice: Lattice::new(cfg.side, cfg.symmetry, cfg.boundary_mode),
            params,
            seed: cfg.seed,
            pool: None,
        })
    }

    /// Spreads per-cell work over `workers` threads. Output is unaffected.
    pub fn with_workers(mut self, workers: usize) -> Result<Self, LcaError> {
        self.pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| LcaError::Workers(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn params(&self) -> &LcaParams {
        &self.params
    }

    /// Seed attached at the origin with unit crystal mass; vapor `rho`
    /// everywhere else.
    pub fn init_state(&self) -> LcaState {
        let n = self.lattice.side * self.lattice.side;
        let mut s = LcaState {
            side: self.lattice.side,
            attached: vec![false; n],
            boundary_mass: vec![0.0; n],
            crystal_mass: vec![0.0; n],
            diffusive_mass: vec![self.params.rho; n],
            step_index: 0,
        };
        s.attached[0] = true;
        s.crystal_mass[0] = 1.0;
        s.diffusive_mass[0] = 0.0;
        s
    }

    /// `Σ (b + c + d)` over the whole crystal the wedge stands for. Conserved
    /// exactly (up to rounding) with sealed edges and no noise.
    pub fn lattice_mass(&self, s: &LcaState) -> f64 {
        (0..s.attached.len())
            .map(|k| self.lattice.weight[k] * (s.boundary_mass[k] + s.crystal_mass[k] + s.diffusive_mass[k]))
            .sum()
    }

    fn rows<T: Send, F>(&self, out: &mut [T], f: F)
    where
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let side = self.lattice.side;
        match &self.pool {
            Some(pool) => pool.install(|| out.par_chunks_mut(side).enumerate().for_each(|(r, row)| f(r, row))),
            None => out.chunks_mut(side).enumerate().for_each(|(r, row)| f(r, row)),
        }
    }

    fn rows2<F>(&self, a: &mut [f64], b: &mut [u8], f: F)
    where
        F: Fn(usize, &mut [f64], &mut [u8]) + Sync + Send,
    {
        let side = self.lattice.side;
        match &self.pool {
            Some(pool) => pool.install(|| {
                a.par_chunks_mut(side).zip(b.par_chunks_mut(side)).enumerate().for_each(|(r, (x, y))| f(r, x, y))
            }),
            None => a.chunks_mut(side).zip(b.chunks_mut(side)).enumerate().for_each(|(r, (x, y))| f(r, x, y)),
        }
    }

    fn sync_ghosts(&self, s: &mut LcaState) {
        for &(dst, src) in &self.lattice.ghosts {
            let (dst, src) = (dst as usize, src as usize);
            s.attached[dst] = s.attached[src];
            s.boundary_mass[dst] = s.boundary_mass[src];
            s.crystal_mass[dst] = s.crystal_mass[src];
            s.diffusive_mass[dst] = s.diffusive_mass[src];
        }
    }

    /// Neighbor indices of cell `(i, j)`. Cells off the wedge edges and the
    /// far ring have plain row-major offsets; the rest go through the folded
    /// table.
    #[inline(always)]
    fn neighbor_indices(&self, i: usize, j: usize) -> [usize; 6] {
        let side = self.lattice.side;
        let k = i * side + j;
        if i > 0 && j > 0 && i + 1 < side && j + 1 < side {
            [k + side, k - side, k + 1, k - 1, k + side - 1, k - side + 1]
        } else {
            let n = &self.lattice.neighbors[k];
            [n[0] as usize, n[1] as usize, n[2] as usize, n[3] as usize, n[4] as usize, n[5] as usize]
        }
    }

    /// Attached-neighbor count of every cell (folded neighbors counted with
    /// multiplicity).
    pub fn attached_neighbor_counts(&self, s: &LcaState) -> Vec<u8> {
        let side = self.lattice.side;
        let mut counts = vec![0u8; s.attached.len()];
        let att = &s.attached[..];
        self.rows(&mut counts, |i, row| {
            for (j, out) in row.iter_mut().enumerate() {
                *out = self.neighbor_indices(i, j).iter().filter(|&&n| att[n]).count() as u8;
            }
        });
        debug_assert_eq!(counts.len(), side * side);
        counts
    }

    /// Diffusion that also reports attached-neighbor counts, which diffusion
    /// leaves unchanged.
    fn diffuse(&self, s: &mut LcaState) -> Vec<u8> {
        let side = self.lattice.side;
        let att = &s.attached[..];
        let d = &s.diffusive_mass[..];
        let mut next = vec![0.0; d.len()];
        let mut counts = vec![0u8; d.len()];
        self.rows2(&mut next, &mut counts, |i, row, cnt| {
            for (j, out) in row.iter_mut().enumerate() {
                let nb = self.neighbor_indices(i, j);
                let k = i * side + j;
                cnt[j] = nb.iter().filter(|&&n| att[n]).count() as u8;
                let own = d[k];
                if att[k] {
                    *out = own;
                    continue;
                }
                let v = |n: usize| if att[n] { own } else { d[n] };
                let sum = (v(nb[0]) + v(nb[2])) + (v(nb[1]) + v(nb[3])) + (v(nb[4]) + v(nb[5]));
                *out = (own + sum) / 7.0;
            }
        });
        if self.lattice.boundary == BoundaryMode::Reservoir {
            for &k in &self.lattice.ring {
                if !att[k as usize] {
                    next[k as usize] = self.params.rho;
                }
            }
        }
        s.diffusive_mass = next;
        self.sync_ghosts(s);
        counts
    }

    /// Unattached cells with at least one attached neighbor.
    fn boundary_cells(s: &LcaState, counts: &[u8]) -> Vec<usize> {
        (0..counts.len()).filter(|&k| counts[k] > 0 && !s.attached[k]).collect()
    }

    fn freeze(&self, s: &mut LcaState, boundary: &[usize]) {
        let kappa = self.params.kappa;
        for &k in boundary {
            let d = s.diffusive_mass[k];
            s.boundary_mass[k] += (1.0 - kappa) * d;
            s.crystal_mass[k] += kappa * d;
            s.diffusive_mass[k] = 0.0;
        }
        self.sync_ghosts(s);
    }

    /// Applies attachment to `boundary` cells, keeping `counts` current, and
    /// returns the cells that joined.
    fn attach(&self, s: &mut LcaState, boundary: &[usize], counts: &mut [u8]) -> Vec<usize> {
        let p = &self.params;
        let side = self.lattice.side;
        let b = &s.boundary_mass;
        let d = &s.diffusive_mass;
        let joined: Vec<usize> = boundary
            .iter()
            .copied()
            .filter(|&k| match counts[k] {
                0 => false,
                1 | 2 => b[k] >= p.beta_attach,
                3 => {
                    let nb = self.neighbor_indices(k / side, k % side);
                    let vapor = d[k] + ((d[nb[0]] + d[nb[2]]) + (d[nb[1]] + d[nb[3]]) + (d[nb[4]] + d[nb[5]]));
                    b[k] >= 1.0 || (b[k] >= p.alpha && vapor < p.theta_vapor)
                }
                _ => true,
            })
            .collect();
        for &k in &joined {
            s.crystal_mass[k] += s.boundary_mass[k];
            s.boundary_mass[k] = 0.0;
            s.attached[k] = true;
        }
        self.sync_ghosts(s);
        let lat = &self.lattice;
        for &k in &joined {
            for &r in &lat.readers[lat.readers_start[k] as usize..lat.readers_start[k + 1] as usize] {
                counts[r as usize] += 1;
            }
        }
        joined
    }

    fn melt(&self, s: &mut LcaState, boundary: &[usize]) {
        let (mu, gamma) = (self.params.mu, self.params.gamma_melt);
        for &k in boundary {
            let (b, c) = (s.boundary_mass[k], s.crystal_mass[k]);
            s.diffusive_mass[k] += mu * b + gamma * c;
            s.boundary_mass[k] = b * (1.0 - mu);
            s.crystal_mass[k] = c * (1.0 - gamma);
        }
        self.sync_ghosts(s);
    }

    /// Unattached cells average vapor over themselves and their six neighbors;
    /// attached neighbors reflect the cell's own value.
    pub fn diffusion_step(&self, s: &mut LcaState) {
        self.diffuse(s);
    }

    /// Boundary cells move their vapor into boundary mass (`1 − κ`) and crystal
    /// mass (`κ`).
    pub fn freezing_step(&self, s: &mut LcaState) {
        let counts = self.attached_neighbor_counts(s);
        self.freeze(s, &Self::boundary_cells(s, &counts));
    }

    /// Threshold attachment of boundary cells; attaching cells fold their
    /// boundary mass into crystal mass.
    pub fn attachment_step(&self, s: &mut LcaState) {
        let mut counts = self.attached_neighbor_counts(s);
        let boundary = Self::boundary_cells(s, &counts);
        self.attach(s, &boundary, &mut counts);
    }

    /// Boundary cells return fractions `μ` of boundary mass and `γ` of crystal
    /// mass to vapor.
    pub fn melting_step(&self, s: &mut LcaState) {
        let counts = self.attached_neighbor_counts(s);
        self.melt(s, &Self::boundary_cells(s, &counts));
    }

    /// Multiplies each unattached cell's vapor by `1 + σ` or `1 − σ` with equal
    /// probability.
    ///
    /// The draw for a cell is bit `q mod 64` of
    /// `keyed_u64(seed, NOISE, step, q / 64)`, where `q` is the row-major index
    /// of the cell's canonical wedge copy; set means `1 + σ`.
    pub fn noise_step(&self, s: &mut LcaState) {
        let sigma = self.params.sigma_noise;
        if sigma == 0.0 {
            return;
        }
        let lat = &self.lattice;
        let (seed, step) = (self.seed, s.step_index);
        let blocks: Vec<u64> =
            (0..s.attached.len().div_ceil(64)).map(|b| keyed_u64(seed, stream::NOISE, step, b as u64)).collect();
        let side = lat.side;
        let att = &s.attached[..];
        self.rows(&mut s.diffusive_mass, |i, row| {
            for (j, d) in row.iter_mut().enumerate() {
                let k = i * side + j;
                if att[k] {
                    continue;
                }
                let q = lat.noise_key[k];
                let up = (blocks[(q >> 6) as usize] >> (q & 63)) & 1 == 1;
                *d *= if up { 1.0 + sigma } else { 1.0 - sigma };
            }
        });
        self.sync_ghosts(s);
    }

    /// One raw automaton step.
    pub fn step(&self, s: &mut LcaState) {
        let mut counts = self.diffuse(s);
        let mut boundary = Self::boundary_cells(s, &counts);
        self.freeze(s, &boundary);
        if !self.attach(s, &boundary, &mut counts).is_empty() {
            boundary = Self::boundary_cells(s, &counts);
        }
        self.melt(s, &boundary);
        self.noise_step(s);
        s.step_index += 1;
    }

    /// True once any attached cell is within `margin` cells of a far edge.
    pub fn reached_edge(&self, s: &LcaState, margin: usize) -> bool {
        let side = self.lattice.side;
        let lim = side - margin.min(side);
        (0..side).any(|a| (lim..side).any(|b| s.attached[a * side + b] || s.attached[b * side + a]))
    }
}

/// A finished run with its bookkeeping.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub steps: u64,
    pub reached_edge: bool,
    pub final_state: LcaState,
}

/// Steps the automaton until growth nears the far edge or `max_steps` is
/// reached, recording the attachment field every `snapshot_every` steps and at
/// the end.
pub fn run(params: LcaParams, cfg: &RunConfig) -> Result<Trajectory, LcaError> {
    run_with_workers(params, cfg, 1).map(|o| o.trajectory)
}

pub fn run_with_workers(params: LcaParams, cfg: &RunConfig, workers: usize) -> Result<RunOutput, LcaError> {
    let engine = Engine::new(params, cfg)?.with_workers(workers)?;
    let mut s = engine.init_state();
    let mut frames = vec![s.attached_grid()];
    let mut reached = engine.reached_edge(&s, cfg.halt_margin);
    while s.step_index < cfg.max_steps && !reached {
        engine.step(&mut s);
        reached = engine.reached_edge(&s, cfg.halt_margin);
        if s.step_index % cfg.snapshot_every as u64 == 0 {
            frames.push(s.attached_grid());
        }
    }
    if s.step_index % cfg.snapshot_every as u64 != 0 {
        frames.push(s.attached_grid());
    }
    if cfg.max_steps > 0 && s.attached_count() <= 1 {
        return Err(LcaError::Degenerate { steps: s.step_index });
    }
    let trajectory = Trajectory {
        side: cfg.side,
        frames,
        params,
        seed: cfg.seed,
        snapshot_every: cfg.snapshot_every,
        source: Source::Lca,
    };
    Ok(RunOutput { trajectory, steps: s.step_index, reached_edge: reached, final_state: s })
}
