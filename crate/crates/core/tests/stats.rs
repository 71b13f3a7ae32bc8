//! Calibration of the statistical tests the suites rely on.

use rand::Rng as _;
use rand_distr::StandardNormal;
use stickyflow::paths::{sample_brownian, TimeGrid};
use stickyflow::rng::SeedSpace;
use stickyflow::special::std_normal_cdf;
use stickyflow::stats::{ks_one_sample, ks_two_sample, mc_mean, KS_ALPHA};

fn normals(seeds: SeedSpace, tag: &str, i: u64, n: usize) -> Vec<f64> {
    let mut rng = seeds.stream(tag, i);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn two_sample_ks_null_rejection_rate() {
    let seeds = SeedSpace::new(2024);
    let reps = 200;
    let rejected = (0..reps)
        .filter(|&i| !ks_two_sample(&normals(seeds, "a", i, 10_000), &normals(seeds, "b", i, 10_000)).pass)
        .count();
    // Binomial(200, 0.01): mean 2, sd 1.41; 4 sd allows up to 7 rejections.
    let sd = (reps as f64 * KS_ALPHA * (1.0 - KS_ALPHA)).sqrt();
    assert!(
        (rejected as f64 - reps as f64 * KS_ALPHA).abs() <= 4.0 * sd,
        "{rejected} of {reps} rejected"
    );
    // The first 100 repetitions: at least 98 pass.
    let first = (0..100)
        .filter(|&i| ks_two_sample(&normals(seeds, "a", i, 10_000), &normals(seeds, "b", i, 10_000)).pass)
        .count();
    assert!(first >= 98, "{first} of 100 passed");
}

#[test]
fn two_sample_ks_detects_a_shift() {
    let seeds = SeedSpace::new(5);
    let a = normals(seeds, "a", 0, 10_000);
    let b: Vec<f64> = normals(seeds, "b", 0, 10_000).iter().map(|x| x + 0.1).collect();
    assert!(!ks_two_sample(&a, &b).pass);
}

#[test]
fn normalized_path_increments_are_standard_normal() {
    let grid = TimeGrid::uniform(2.0, 10_000).unwrap();
    let p = sample_brownian(grid, 99);
    let sd = grid.dt().sqrt();
    let z: Vec<f64> = p.increments().map(|d| d / sd).collect();
    let r = ks_one_sample(&z, std_normal_cdf, KS_ALPHA);
    assert!(r.pass, "{r:?}");
    let m = mc_mean(&z);
    assert!(m.covers(0.0), "{m:?}");
}
