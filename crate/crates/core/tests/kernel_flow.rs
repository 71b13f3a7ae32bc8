//! Monte Carlo and cross-evaluation checks of the kernel flow.

use rand::Rng as _;
use stickyflow::kernel_flow::{
    g_transform, kernel_apply, kernel_compose, kernel_measure, kernel_sample, phi, KernelMeasure,
};
use stickyflow::paths::{reflect, sample_brownian, snap, TimeGrid};
use stickyflow::rng::rng_from_seed;
use stickyflow::stats::{epsilon_local_time, levy_local_time_at_end, mc_mean};
use stickyflow::suites::da_battery;

#[test]
fn sticky_kernel_sampling_matches_closed_forms() {
    let (z, theta) = (0.7, 1.3);
    let lambda = 2.0 * theta;
    let k = KernelMeasure::Sticky { z, theta };
    let draws: Vec<f64> = (0..100_000).map(|i| kernel_sample(&k, i)).collect();
    let atom = mc_mean(&draws.iter().map(|&y| f64::from(u8::from(y == 0.0))).collect::<Vec<_>>());
    assert!(atom.covers((-lambda * z).exp()), "{atom:?}");
    let mean = mc_mean(&draws);
    assert!(mean.covers(z - (1.0 - (-lambda * z).exp()) / lambda), "{mean:?}");
    for f in da_battery(theta) {
        let m = mc_mean(&draws.iter().map(|&y| f.value(y)).collect::<Vec<_>>());
        assert!(m.covers(kernel_apply(&k, &f)), "{}: {m:?}", f.name());
    }
}

#[test]
fn kernel_apply_agrees_with_direct_formula() {
    // K_{s,t} f(x) is f(x + W_t - W_s) before the hit and G_f(W^+_{s,t}) after.
    let grid = TimeGrid::uniform(1.0, 200).unwrap();
    let mut rng = rng_from_seed(11);
    for trial in 0..200 {
        let path = sample_brownian(grid, trial);
        let s = rng.random_range(0..200);
        let t = rng.random_range(s..=200);
        let x = if trial % 3 == 0 { 0.0 } else { snap(rng.random::<f64>()) };
        let theta = 0.25 + 2.0 * rng.random::<f64>();
        let f = &da_battery(theta)[trial as usize % 5];
        let v = path.values();
        let min = v[s..=t].iter().copied().fold(f64::INFINITY, f64::min);
        let hit = x == 0.0 || x + min - v[s] <= 0.0;
        let direct = if hit && t > s {
            g_transform(f, theta, v[t] - min).unwrap()
        } else {
            f.value(x + v[t] - v[s])
        };
        let k = kernel_measure(&path, s, t, x, theta).unwrap();
        assert!((kernel_apply(&k, f) - direct).abs() <= 1e-12, "trial {trial}");
        if !hit || t == s {
            assert_eq!(phi(&path, s, t, x).unwrap(), x + v[t] - v[s]);
        }
    }
}

#[test]
fn kernel_composition_on_random_da_functions() {
    let grid = TimeGrid::uniform(1.0, 300).unwrap();
    let mut rng = rng_from_seed(12);
    for trial in 0..100 {
        let path = sample_brownian(grid, 100 + trial);
        let mut idx = [
            rng.random_range(0..=300),
            rng.random_range(0..=300),
            rng.random_range(0..=300),
        ];
        idx.sort_unstable();
        let x = if trial % 4 == 0 {
            0.0
        } else {
            snap(0.5 * rng.random::<f64>())
        };
        let theta = 0.25 + 2.0 * rng.random::<f64>();
        let f = &da_battery(theta)[trial as usize % 5];
        let (lhs, rhs) = kernel_compose(&path, idx[0], idx[1], idx[2], x, theta, f).unwrap();
        assert!((lhs - rhs).abs() <= 1e-8, "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn epsilon_local_time_tracks_levy_local_time() {
    let grid = TimeGrid::uniform(1.0, 4096).unwrap();
    let eps = 4.0 * grid.dt().sqrt();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..2000 {
        let rp = reflect(&sample_brownian(grid, i));
        a.push(epsilon_local_time(&rp, eps));
        b.push(levy_local_time_at_end(&rp));
    }
    let (ma, mb) = (mc_mean(&a).mean, mc_mean(&b).mean);
    assert!((ma / mb - 1.0).abs() <= 0.15, "eps estimator {ma} vs Levy {mb}");
}
