use cgne_core::{BoundaryMode, Engine, LcaParams, RunConfig, WedgeSymmetry};

fn engine(sigma: f64, symmetry: WedgeSymmetry, seed: u64) -> Engine {
    let p = LcaParams { sigma_noise: sigma, ..LcaParams::default() };
    let cfg = RunConfig { side: 32, boundary_mode: BoundaryMode::Sealed, symmetry, seed, ..RunConfig::default() };
    Engine::new(p, &cfg).unwrap()
}

#[test]
fn factors_are_fair_coins() {
    let sigma = 0.1;
    let e = engine(sigma, WedgeSymmetry::Mirror, 42);
    let mut ups = 0usize;
    let mut total = 0usize;
    let mut agree = 0usize;
    let mut pairs = 0usize;
    let mut log_sum = 0.0;
    for step in 0..400u64 {
        let mut s = e.init_state();
        s.diffusive_mass.iter_mut().for_each(|d| *d = 1.0);
        s.step_index = step;
        e.noise_step(&mut s);
        let up: Vec<Option<bool>> = (0..s.attached.len())
            .map(|k| {
                let (i, j) = (k / 32, k % 32);
                (i < j && !s.attached[k]).then(|| s.diffusive_mass[k] > 1.0)
            })
            .collect();
        for (k, u) in up.iter().enumerate() {
            if let Some(u) = u {
                ups += *u as usize;
                total += 1;
                log_sum += s.diffusive_mass[k].ln();
                if let Some(Some(v)) = up.get(k + 1) {
                    agree += (u == v) as usize;
                    pairs += 1;
                }
            }
        }
        for (k, d) in s.diffusive_mass.iter().enumerate() {
            assert!(if s.attached[k] { *d == 1.0 } else { *d == 1.0 + sigma || *d == 1.0 - sigma });
        }
        // mirror partners share a draw
        for i in 0..32 {
            for j in 0..32 {
                assert_eq!(s.diffusive_mass[i * 32 + j].to_bits(), s.diffusive_mass[j * 32 + i].to_bits());
            }
        }
    }
    let n = total as f64;
    let frac = ups as f64 / n;
    assert!((frac - 0.5).abs() < 4.0 * 0.5 / n.sqrt(), "up fraction {frac}");
    let nb = agree as f64 / pairs as f64;
    assert!((nb - 0.5).abs() < 4.0 * 0.5 / (pairs as f64).sqrt(), "neighbor agreement {nb}");
    let mean_log = log_sum / n;
    let expect = 0.5 * ((1.0 + sigma).ln() + (1.0 - sigma).ln());
    assert!((mean_log - expect).abs() < 4.0 * 0.5 * ((1.0 + sigma) / (1.0 - sigma)).ln() / n.sqrt());
}

#[test]
fn attached_cells_are_untouched_and_zero_sigma_is_identity() {
    let e = engine(0.3, WedgeSymmetry::Rotational, 1);
    let mut s = e.init_state();
    s.diffusive_mass[0] = 5.0;
    e.noise_step(&mut s);
    assert_eq!(s.diffusive_mass[0], 5.0);
    let z = engine(0.0, WedgeSymmetry::Mirror, 1);
    let mut a = z.init_state();
    let b = a.clone();
    z.noise_step(&mut a);
    assert_eq!(a, b);
}

#[test]
fn draws_depend_on_seed_and_step() {
    let draw = |seed: u64, step: u64| {
        let e = engine(0.2, WedgeSymmetry::Mirror, seed);
        let mut s = e.init_state();
        s.step_index = step;
        e.noise_step(&mut s);
        s.diffusive_mass
    };
    assert_eq!(draw(3, 7), draw(3, 7));
    assert_ne!(draw(3, 7), draw(4, 7));
    assert_ne!(draw(3, 7), draw(3, 8));
}
