//! Distributional checks on driving paths and their reflections.

use stickyflow::paths::{refine, reflect, reflect_bridged, reflected_increment, sample_brownian, TimeGrid};
use stickyflow::special::std_normal_cdf;
use stickyflow::stats::{mc_mean, Z_ACCEPT};

const N: u64 = 100_000;

#[test]
fn one_step_values_are_standard_normal() {
    let grid = TimeGrid::uniform(1.0, 1).unwrap();
    let xs: Vec<f64> = (0..N).map(|i| sample_brownian(grid, i).value(1)).collect();
    let m = mc_mean(&xs);
    assert!(m.covers(0.0), "mean {m:?}");
    // Var of the sample variance of N(0,1) data is 2/n.
    let v = mc_mean(&xs.iter().map(|x| x * x).collect::<Vec<_>>());
    assert!(
        (v.mean - 1.0).abs() <= Z_ACCEPT * (2.0 / N as f64).sqrt(),
        "variance {}",
        v.mean
    );
}

#[test]
fn refined_midpoint_has_bridge_variance() {
    let grid = TimeGrid::uniform(1.0, 1).unwrap();
    let dev: Vec<f64> = (0..N)
        .map(|i| {
            let p = sample_brownian(grid, i);
            let fine = refine(&p, 2, 7_000_000 + i).unwrap();
            assert_eq!(fine.value(2), p.value(1));
            fine.value(1) - 0.5 * p.value(1)
        })
        .collect();
    let sq = mc_mean(&dev.iter().map(|d| d * d).collect::<Vec<_>>());
    assert!(sq.covers(0.25), "conditional variance {sq:?}");
}

#[test]
fn bridged_minimum_has_the_continuous_law() {
    // P(min_[0,1] W <= -1) = 2 Phi(-1), even on a four-step grid.
    let exact = 2.0 * std_normal_cdf(-1.0);
    let grid = TimeGrid::uniform(1.0, 4).unwrap();
    let (mut bridged, mut coarse) = (Vec::new(), Vec::new());
    for i in 0..N {
        let p = sample_brownian(grid, i);
        bridged.push(f64::from(u8::from(*reflect_bridged(&p, i).l().last().unwrap() >= 1.0)));
        coarse.push(f64::from(u8::from(*reflect(&p).l().last().unwrap() >= 1.0)));
    }
    let b = mc_mean(&bridged);
    assert!(b.covers(exact), "bridged {b:?} vs {exact}");
    // The grid minimum misses excursions between points and is biased low.
    let c = mc_mean(&coarse);
    assert!(c.mean < exact - Z_ACCEPT * c.std_error, "grid {c:?}");
}

#[test]
fn reflected_increment_from_zero_is_half_normal() {
    // W_1^+ = W_1 - min W has the law of |N(0,1)|: mean sqrt(2/pi).
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let xs: Vec<f64> = (0..20_000)
        .map(|i| {
            let p = sample_brownian(grid, i);
            *reflect_bridged(&p, i).r().last().unwrap()
        })
        .collect();
    let m = mc_mean(&xs);
    assert!(m.covers((2.0 / std::f64::consts::PI).sqrt()), "{m:?}");
    // Grid version agrees with the reflected path's last value.
    let p = sample_brownian(grid, 3);
    assert_eq!(reflected_increment(&p, 0, 64), *reflect(&p).r().last().unwrap());
}
