use cgne_core::morphology::features;
use cgne_core::{lca, LcaParams, RunConfig};
use rayon::prelude::*;

#[test]
fn denser_vapor_grows_larger_crystals() {
    let wins: usize = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = RunConfig { seed, ..RunConfig::default() };
            let area = |rho: f64| features(&lca::run(LcaParams::default().with_rho(rho), &cfg).unwrap()).unwrap().area;
            (area(0.65) > area(0.35)) as usize
        })
        .sum();
    assert!(wins >= 9, "{wins} of 10");
}
