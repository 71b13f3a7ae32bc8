//! Semigroups against simulation and against high-precision references.

use rayon::prelude::*;
use stickyflow::paths::{reflect_bridged, sample_brownian, TimeGrid};
use stickyflow::semigroup::{g_fn, ReflectedKernel, SemigroupParams, TransitionKernel};
use stickyflow::stats::mc_mean;
use stickyflow::sticky_sim::{simulate_sticky, StickyParams, TimeChangeConfig};
use stickyflow::suites::{da_battery, s_battery};

#[test]
fn g_reference_values() {
    // theta erfcx(sqrt 2) at (1, 1, 0); erfcx by mpmath at 30 digits.
    assert!((g_fn(1.0, 1.0, 0.0).unwrap() - 0.336_204_002_446_341_2).abs() < 1e-14);
    assert!((g_fn(0.5, 4.0, 2.0).unwrap() - 0.073_701_935_260_385_99).abs() < 1e-14);
}

#[test]
fn sticky_semigroup_matches_simulation() {
    let theta = 2.0;
    let t = 0.5;
    let kern = TransitionKernel::new(SemigroupParams::new(theta, t).unwrap());
    let out = TimeGrid::uniform(t, 512).unwrap();
    let ends: Vec<f64> = (0..50_000u64)
        .into_par_iter()
        .map(|i| {
            let p = simulate_sticky(
                &StickyParams::new(theta).unwrap(),
                out,
                out,
                i,
                &TimeChangeConfig::default(),
            )
            .unwrap();
            *p.x().last().unwrap()
        })
        .collect();
    for f in s_battery().iter().chain(da_battery(theta).iter().take(2)) {
        let m = mc_mean(&ends.iter().map(|&x| f.value(x)).collect::<Vec<_>>());
        assert!(m.covers(kern.apply(f, 0.0)), "{}: {m:?}", f.name());
    }
}

#[test]
fn reflected_semigroup_matches_simulation() {
    let t = 1.0;
    let kern = ReflectedKernel::new(t).unwrap();
    let grid = TimeGrid::uniform(t, 32).unwrap();
    let ends: Vec<f64> = (0..100_000u64)
        .into_par_iter()
        .map(|i| *reflect_bridged(&sample_brownian(grid, i), i).r().last().unwrap())
        .collect();
    for f in s_battery() {
        let m = mc_mean(&ends.iter().map(|&x| f.value(x)).collect::<Vec<_>>());
        assert!(m.covers(kern.apply_fn(0.0, |y| f.value(y))), "{}: {m:?}", f.name());
    }
}

#[test]
fn short_time_limit_and_conservativity() {
    let k = TransitionKernel::new(SemigroupParams::new(1.0, 1e-6).unwrap());
    for f in s_battery() {
        for x in [0.3, 1.0, 2.5] {
            assert!((k.apply(&f, x) - f.value(x)).abs() < 1e-3, "{} at {x}", f.name());
        }
    }
    for theta in [0.5, 1.0, 2.0] {
        for t in [0.25, 1.0, 4.0] {
            let k = TransitionKernel::new(SemigroupParams::new(theta, t).unwrap());
            for x in [0.0, 0.5, 2.0] {
                assert!((k.total_mass(x) - 1.0).abs() <= 1e-8);
            }
        }
    }
}
