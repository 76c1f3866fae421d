mod common;

use cgne_core::morphology::MorphologySample;
use cgne_core::transport::{bootstrap_ci, ewd, transport_cost, w2, EmpiricalJoint, EwdOptions, TransportError};
use common::{brute_w2, Draws};
use proptest::prelude::*;

fn joint(p: &[[f64; 2]]) -> EmpiricalJoint {
    EmpiricalJoint::new(p.to_vec()).unwrap()
}

fn cloud(r: &mut Draws, n: usize, scale: f64) -> Vec<[f64; 2]> {
    (0..n).map(|_| [r.range(0.0, scale), r.range(0.0, scale)]).collect()
}

#[test]
fn matches_permutation_oracle() {
    let mut r = Draws::new(3);
    let sizes = [(1, 1), (2, 2), (3, 3), (5, 5), (7, 7), (8, 8), (1, 4), (2, 4), (4, 2), (2, 6), (3, 6), (4, 8), (8, 2), (6, 3)];
    for t in 0..140 {
        let (n, m) = sizes[t % sizes.len()];
        let p = cloud(&mut r, n, 10.0);
        let q = cloud(&mut r, m, 10.0);
        let got = w2(&joint(&p), &joint(&q)).unwrap();
        let want = brute_w2(&p, &q);
        assert!((got - want).abs() <= 1e-9, "{n}x{m}: {got} vs {want}");
    }
}

#[test]
fn integer_points_with_ties() {
    // many equal-cost optima
    let mut r = Draws::new(4);
    let sizes = [(4, 4), (6, 6), (8, 8), (2, 4), (4, 8), (3, 6), (1, 5)];
    for t in 0..70 {
        let (n, m) = sizes[t % sizes.len()];
        let mut lattice = |k: usize| -> Vec<[f64; 2]> { (0..k).map(|_| [r.index(3) as f64, r.index(3) as f64]).collect() };
        let (p, q) = (lattice(n), lattice(m));
        let got = w2(&joint(&p), &joint(&q)).unwrap();
        assert!((got - brute_w2(&p, &q)).abs() <= 1e-9);
    }
}

#[test]
fn textbook_values() {
    assert_eq!(w2(&joint(&[[0.0, 0.0]]), &joint(&[[3.0, 4.0]])).unwrap(), 5.0);
    let p = [[1.0, 1.0], [2.0, 5.0], [0.0, 3.0]];
    assert_eq!(w2(&joint(&p), &joint(&p)).unwrap(), 0.0);
}

#[test]
fn solver_failure_is_reported() {
    let cost = vec![vec![f64::INFINITY; 3]; 2];
    assert!(matches!(transport_cost(&cost), Err(TransportError::NonConvergence { .. })));
}

/// `W₂²` on the line from the quantile functions.
fn quantile_w2(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let mut cuts: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).chain((0..=m).map(|k| k as f64 / m as f64)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut s = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let qa = a[((mid * n as f64) as usize).min(n - 1)];
        let qb = b[((mid * m as f64) as usize).min(m - 1)];
        s += (w[1] - w[0]) * (qa - qb) * (qa - qb);
    }
    s.sqrt()
}

fn points(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(0.0f64..100.0), 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_axioms(p in points(8), q in points(8), s in points(8)) {
        let (p, q, s) = (joint(&p), joint(&q), joint(&s));
        let pq = w2(&p, &q).unwrap();
        prop_assert!(pq >= 0.0);
        prop_assert!((pq - w2(&q, &p).unwrap()).abs() <= 1e-9);
        prop_assert!(w2(&p, &p).unwrap() <= 1e-9);
        prop_assert!(pq <= w2(&p, &s).unwrap() + w2(&s, &q).unwrap() + 1e-9);
    }

    #[test]
    fn mean_lower_bound(p in points(10), q in points(10)) {
        let (p, q) = (joint(&p), joint(&q));
        let (a, b) = (p.mean(), q.mean());
        let gap = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        prop_assert!(w2(&p, &q).unwrap() >= gap - 1e-9);
    }

    #[test]
    fn scale_equivariance(p in points(8), q in points(8), k in 0.01f64..50.0) {
        let d = w2(&joint(&p), &joint(&q)).unwrap();
        let sc = |v: &[[f64; 2]]| -> Vec<[f64; 2]> { v.iter().map(|x| [k * x[0], k * x[1]]).collect() };
        let ds = w2(&joint(&sc(&p)), &joint(&sc(&q))).unwrap();
        prop_assert!((ds - k * d).abs() <= 1e-9 * (1.0 + k * d));
    }

    #[test]
    fn line_reduction(a in prop::collection::vec(0.0f64..100.0, 1..12), b in prop::collection::vec(0.0f64..100.0, 1..12), y in 0.0f64..10.0) {
        let lift = |v: &[f64]| joint(&v.iter().map(|&x| [x, y]).collect::<Vec<_>>());
        let d = w2(&lift(&a), &lift(&b)).unwrap();
        let want = quantile_w2(a, b);
        prop_assert!((d - want).abs() <= 1e-9 * (1.0 + want), "{} vs {}", d, want);
    }
}

fn samples(pts: &[(f64, u64, u64)]) -> Vec<MorphologySample> {
    pts.iter().map(|&(rho, area, boundary_length)| MorphologySample { rho, area, boundary_length }).collect()
}

#[test]
fn small_binned_sets_match_oracle() {
    let mut r = Draws::new(17);
    let edges = vec![0.35, 0.45, 0.55, 0.65];
    let draw = |r: &mut Draws, n: usize| -> Vec<(f64, u64, u64)> {
        (0..3).flat_map(|bin| (0..n).map(move |k| (bin, k))).map(|(bin, _)| (edges[bin] + 0.05, r.index(40) as u64, r.index(30) as u64)).collect()
    };
    for _ in 0..10 {
        let m = samples(&draw(&mut r, 6));
        let f = samples(&draw(&mut r, 6));
        let rep = ewd(&m, &f, &EwdOptions { edges: edges.clone(), min_count: 5, standardize: false }).unwrap();
        let mut want = 0.0;
        for bin in 0..3 {
            let pick = |s: &[MorphologySample]| -> Vec<[f64; 2]> {
                s[bin * 6..bin * 6 + 6].iter().map(|x| [x.area as f64, x.boundary_length as f64]).collect()
            };
            let w = brute_w2(&pick(&m), &pick(&f));
            assert!((rep.per_bin_w2[bin] - w).abs() <= 1e-9);
            want += w / 3.0;
        }
        assert!((rep.ewd - want).abs() <= 1e-9);
        assert_eq!(rep.per_bin_counts, vec![[6, 6]; 3]);
    }
}

#[test]
fn rigid_shift_gives_translation_norm() {
    let mut r = Draws::new(2);
    let base: Vec<(f64, u64, u64)> = (0..200).map(|_| (r.range(0.35, 0.65), 100 + r.index(500) as u64, 50 + r.index(100) as u64)).collect();
    let shifted: Vec<_> = base.iter().map(|&(rho, a, b)| (rho, a + 10, b)).collect();
    let rep = ewd(&samples(&shifted), &samples(&base), &EwdOptions::default()).unwrap();
    assert!((rep.ewd - 10.0).abs() < 1e-9);
    let diag: Vec<_> = base.iter().map(|&(rho, a, b)| (rho, a + 3, b + 4)).collect();
    assert!((ewd(&samples(&diag), &samples(&base), &EwdOptions::default()).unwrap().ewd - 5.0).abs() < 1e-9);
}

fn gaussian(r: &mut Draws) -> f64 {
    let (u, v) = (r.uniform().max(1e-300), r.uniform());
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

#[test]
fn bootstrap_interval_narrows_with_more_data() {
    let edges = vec![0.35, 0.5, 0.65];
    let opts = EwdOptions { edges: edges.clone(), min_count: 5, standardize: false };
    let width = |per_bin: usize, seed: u64| {
        let mut r = Draws::new(seed);
        let mut set = || -> Vec<MorphologySample> {
            (0..2 * per_bin)
                .map(|k| MorphologySample {
                    rho: if k < per_bin { 0.4 } else { 0.6 },
                    area: (1000.0 + 100.0 * gaussian(&mut r)).max(0.0) as u64,
                    boundary_length: (300.0 + 30.0 * gaussian(&mut r)).max(0.0) as u64,
                })
                .collect()
        };
        let (m, f) = (set(), set());
        let ci = bootstrap_ci(&m, &f, &opts, 100, seed).unwrap();
        ci[1] - ci[0]
    };
    let small: f64 = (0..4).map(|s| width(20, s)).sum();
    let large: f64 = (0..4).map(|s| width(200, 100 + s)).sum();
    assert!(large < small, "{large} vs {small}");
}
