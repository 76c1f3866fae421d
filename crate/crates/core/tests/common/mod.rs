#![allow(clippy::needless_range_loop)]

//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use cgne_core::rng::{keyed_u64, keyed_uniform, stream};
use cgne_core::LcaParams;

/// Deterministic uniform stream for drawing test inputs.
pub struct Draws {
    seed: u64,
    k: u64,
}

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws { seed, k: 0 }
    }

    pub fn uniform(&mut self) -> f64 {
        self.k += 1;
        keyed_uniform(self.seed, 0x7465_7374, self.k, 0)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Growth parameters that attach cells within a few dozen steps on a
    /// small wedge.
    pub fn fast_params(&mut self) -> LcaParams {
        LcaParams {
            rho: self.range(0.35, 0.65),
            beta_attach: self.range(0.05, 1.5),
            alpha: self.range(0.0, 0.3),
            theta_vapor: self.range(0.0, 0.2),
            kappa: self.range(0.001, 0.6),
            mu: self.range(0.0, 0.2),
            gamma_melt: self.range(0.0, 0.01),
            sigma_noise: if self.coin(0.5) { 0.0 } else { self.range(0.0, 0.1) },
        }
    }
}

const OFFSETS: [(i32, i32); 6] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];

/// The twelve images of `(i, j)` under rotations by 60° and the swap.
pub fn d6_images(i: i32, j: i32) -> Vec<(i32, i32)> {
    let mut out = Vec::with_capacity(12);
    for start in [(i, j), (j, i)] {
        let mut p = start;
        for _ in 0..6 {
            out.push(p);
            p = (-p.1, p.0 + p.1);
        }
    }
    out
}

/// Image of `(i, j)` inside the sector `i, j >= 0`.
pub fn sector_image(i: i32, j: i32) -> (i32, i32) {
    d6_images(i, j).into_iter().find(|&(a, b)| a >= 0 && b >= 0).expect("every point has a sector image")
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleState {
    pub attached: Vec<bool>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub step: u64,
}

/// Cell-by-cell mirror-glued wedge automaton written directly from the
/// update rules.
pub struct ScalarLca {
    pub side: usize,
    pub p: LcaParams,
    pub sealed: bool,
    pub seed: u64,
    nb: Vec<[usize; 6]>,
}

impl ScalarLca {
    pub fn new(side: usize, p: LcaParams, sealed: bool, seed: u64) -> Self {
        let s = side as i32;
        let mut nb = Vec::new();
        for i in 0..s {
            for j in 0..s {
                let here = (i * s + j) as usize;
                nb.push(OFFSETS.map(|(di, dj)| {
                    let (a, b) = sector_image(i + di, j + dj);
                    if a < s && b < s {
                        (a * s + b) as usize
                    } else {
                        here
                    }
                }));
            }
        }
        ScalarLca { side, p, sealed, seed, nb }
    }

    pub fn init(&self) -> OracleState {
        let n = self.side * self.side;
        let mut st =
            OracleState { attached: vec![false; n], b: vec![0.0; n], c: vec![0.0; n], d: vec![self.p.rho; n], step: 0 };
        st.attached[0] = true;
        st.c[0] = 1.0;
        st.d[0] = 0.0;
        st
    }

    fn on_ring(&self, k: usize) -> bool {
        k / self.side == self.side - 1 || k % self.side == self.side - 1
    }

    pub fn counts(&self, st: &OracleState) -> Vec<usize> {
        self.nb.iter().map(|nb| nb.iter().filter(|&&m| st.attached[m]).count()).collect()
    }

    pub fn diffusion(&self, st: &mut OracleState) {
        let mut d = st.d.clone();
        for k in 0..d.len() {
            if st.attached[k] {
                continue;
            }
            let own = st.d[k];
            let v = |m: usize| if st.attached[m] { own } else { st.d[m] };
            let [e, w, n, s, ne, sw] = self.nb[k];
            d[k] = (own + ((v(e) + v(n)) + (v(w) + v(s)) + (v(ne) + v(sw)))) / 7.0;
            if !self.sealed && self.on_ring(k) {
                d[k] = self.p.rho;
            }
        }
        st.d = d;
    }

    pub fn freezing(&self, st: &mut OracleState) {
        let cnt = self.counts(st);
        for k in 0..cnt.len() {
            if !st.attached[k] && cnt[k] > 0 {
                st.b[k] += (1.0 - self.p.kappa) * st.d[k];
                st.c[k] += self.p.kappa * st.d[k];
                st.d[k] = 0.0;
            }
        }
    }

    pub fn attachment(&self, st: &mut OracleState) {
        let cnt = self.counts(st);
        let p = &self.p;
        let join: Vec<bool> = (0..cnt.len())
            .map(|k| {
                if st.attached[k] {
                    return false;
                }
                let b = st.b[k];
                match cnt[k] {
                    0 => false,
                    1 | 2 => b >= p.beta_attach,
                    3 => {
                        let [e, w, n, s, ne, sw] = self.nb[k];
                        let d = &st.d;
                        let vapor = d[k] + ((d[e] + d[n]) + (d[w] + d[s]) + (d[ne] + d[sw]));
                        b >= 1.0 || (b >= p.alpha && vapor < p.theta_vapor)
                    }
                    _ => true,
                }
            })
            .collect();
        for (k, &j) in join.iter().enumerate() {
            if j {
                st.c[k] += st.b[k];
                st.b[k] = 0.0;
                st.attached[k] = true;
            }
        }
    }

    pub fn melting(&self, st: &mut OracleState) {
        let cnt = self.counts(st);
        let (mu, gamma) = (self.p.mu, self.p.gamma_melt);
        for k in 0..cnt.len() {
            if !st.attached[k] && cnt[k] > 0 {
                let (b, c) = (st.b[k], st.c[k]);
                st.d[k] += mu * b + gamma * c;
                st.b[k] = b * (1.0 - mu);
                st.c[k] = c * (1.0 - gamma);
            }
        }
    }

    pub fn noise(&self, st: &mut OracleState) {
        let sigma = self.p.sigma_noise;
        if sigma == 0.0 {
            return;
        }
        let side = self.side;
        for k in 0..st.d.len() {
            if st.attached[k] {
                continue;
            }
            let (i, j) = (k / side, k % side);
            let q = (i.max(j) * side + i.min(j)) as u64;
            let word = keyed_u64(self.seed, stream::NOISE, st.step, q / 64);
            st.d[k] *= if (word >> (q % 64)) & 1 == 1 { 1.0 + sigma } else { 1.0 - sigma };
        }
    }

    pub fn step(&self, st: &mut OracleState) {
        self.diffusion(st);
        self.freezing(st);
        self.attachment(st);
        self.melting(st);
        self.noise(st);
        st.step += 1;
    }
}

/// Noise-free automaton on the whole lattice region covered by the images of
/// a `side × side` wedge, with no folding at all.
pub struct FullLattice {
    pub side: usize,
    pub p: LcaParams,
    pub sealed: bool,
    pub cells: Vec<(i32, i32)>,
    pub index: HashMap<(i32, i32), usize>,
    nb: Vec<[usize; 6]>,
    ring: Vec<bool>,
}

impl FullLattice {
    pub fn new(side: usize, p: LcaParams, sealed: bool) -> Self {
        let s = side as i32;
        let mut cells = Vec::new();
        let mut index = HashMap::new();
        for i in -2 * s..=2 * s {
            for j in -2 * s..=2 * s {
                let (a, b) = sector_image(i, j);
                if a < s && b < s {
                    index.insert((i, j), cells.len());
                    cells.push((i, j));
                }
            }
        }
        let nb = cells
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| OFFSETS.map(|(di, dj)| *index.get(&(i + di, j + dj)).unwrap_or(&k)))
            .collect();
        let ring = cells
            .iter()
            .map(|&(i, j)| {
                let (a, b) = sector_image(i, j);
                a == s - 1 || b == s - 1
            })
            .collect();
        FullLattice { side, p, sealed, cells, index, nb, ring }
    }

    pub fn init(&self) -> OracleState {
        let n = self.cells.len();
        let mut st =
            OracleState { attached: vec![false; n], b: vec![0.0; n], c: vec![0.0; n], d: vec![self.p.rho; n], step: 0 };
        let o = self.index[&(0, 0)];
        st.attached[o] = true;
        st.c[o] = 1.0;
        st.d[o] = 0.0;
        st
    }

    fn counts(&self, st: &OracleState) -> Vec<usize> {
        self.nb.iter().map(|nb| nb.iter().filter(|&&m| st.attached[m]).count()).collect()
    }

    pub fn step(&self, st: &mut OracleState) {
        let p = &self.p;
        let n = self.cells.len();
        let mut d = st.d.clone();
        for k in 0..n {
            if st.attached[k] {
                continue;
            }
            let own = st.d[k];
            let sum: f64 = self.nb[k].iter().map(|&m| if st.attached[m] { own } else { st.d[m] }).sum();
            d[k] = if !self.sealed && self.ring[k] { p.rho } else { (own + sum) / 7.0 };
        }
        st.d = d;
        let cnt = self.counts(st);
        let frontier: Vec<usize> = (0..n).filter(|&k| !st.attached[k] && cnt[k] > 0).collect();
        for &k in &frontier {
            st.b[k] += (1.0 - p.kappa) * st.d[k];
            st.c[k] += p.kappa * st.d[k];
            st.d[k] = 0.0;
        }
        let join: Vec<usize> = frontier
            .iter()
            .copied()
            .filter(|&k| match cnt[k] {
                1 | 2 => st.b[k] >= p.beta_attach,
                3 => {
                    let vapor = st.d[k] + self.nb[k].iter().map(|&m| st.d[m]).sum::<f64>();
                    st.b[k] >= 1.0 || (st.b[k] >= p.alpha && vapor < p.theta_vapor)
                }
                _ => true,
            })
            .collect();
        for &k in &join {
            st.c[k] += st.b[k];
            st.b[k] = 0.0;
            st.attached[k] = true;
        }
        let cnt = self.counts(st);
        for k in 0..n {
            if !st.attached[k] && cnt[k] > 0 {
                let (b, c) = (st.b[k], st.c[k]);
                st.d[k] += p.mu * b + p.gamma_melt * c;
                st.b[k] = b * (1.0 - p.mu);
                st.c[k] = c * (1.0 - p.gamma_melt);
            }
        }
        st.step += 1;
    }
}

/// `min over permutations of √(mean squared distance)`, for equal sizes.
pub fn brute_w2_equal(p: &[[f64; 2]], q: &[[f64; 2]]) -> f64 {
    use itertools::Itertools;
    assert_eq!(p.len(), q.len());
    let n = p.len();
    (0..n)
        .permutations(n)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| (p[i][0] - q[j][0]).powi(2) + (p[i][1] - q[j][1]).powi(2))
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Unequal sizes reduce to a permutation problem by splitting each point into
/// equal atoms: `lcm(n, m)` atoms per side.
pub fn brute_w2(p: &[[f64; 2]], q: &[[f64; 2]]) -> f64 {
    let l = p.len() / gcd(p.len(), q.len()) * q.len();
    let rep = |x: &[[f64; 2]]| -> Vec<[f64; 2]> { x.iter().flat_map(|&v| std::iter::repeat_n(v, l / x.len())).collect() };
    brute_w2_equal(&rep(p), &rep(q))
}
