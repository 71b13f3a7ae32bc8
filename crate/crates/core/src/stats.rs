//! Monte Carlo estimators, Kolmogorov–Smirnov tests and the joint-law check.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel_flow::{g_transform, TestFunction};
use crate::paths::{reflect, reflect_bridged, reflected_increment, sample_brownian_with, ReflectedPath, TimeGrid};
use crate::rng::SeedSpace;
use crate::sticky_sim::{reconstruct_driver, simulate_sticky, StickyParams, TimeChangeConfig};

/// z-multiplier used by every acceptance check.
pub const Z_ACCEPT: f64 = 4.0;

/// Sum with a fixed pairwise reduction tree, so the result depends only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean with its standard error and a symmetric confidence interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub z: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl McEstimate {
    fn from_moments(mean: f64, std_error: f64, n: usize, z: f64) -> Self {
        Self {
            mean,
            std_error,
            n,
            z,
            ci_low: mean - z * std_error,
            ci_high: mean + z * std_error,
        }
    }

    /// Whether `value` lies inside the interval.
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    /// `|mean - value|` in units of the standard error.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.mean == value {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - value).abs() / self.std_error
        }
    }
}

/// Mean and standard error (`sample_std / sqrt(n)`) with a `Z_ACCEPT` interval.
pub fn mc_mean(samples: &[f64]) -> McEstimate {
    mc_mean_z(samples, Z_ACCEPT)
}

pub fn mc_mean_z(samples: &[f64], z: f64) -> McEstimate {
    let n = samples.len();
    if n == 0 {
        return McEstimate::from_moments(f64::NAN, f64::NAN, 0, z);
    }
    let mean = pairwise_sum(samples) / n as f64;
    if n == 1 {
        return McEstimate::from_moments(mean, 0.0, 1, z);
    }
    let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    McEstimate::from_moments(mean, (var / n as f64).sqrt(), n, z)
}

/// Difference of two independent sample means, with pooled standard error.
pub fn mc_difference(a: &[f64], b: &[f64]) -> McEstimate {
    let ea = mc_mean(a);
    let eb = mc_mean(b);
    let se = (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt();
    McEstimate::from_moments(ea.mean - eb.mean, se, a.len().min(b.len()), Z_ACCEPT)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsReport {
    pub statistic: f64,
    pub n1: usize,
    pub n2: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
}

impl KsReport {
    fn new(statistic: f64, n1: usize, n2: usize, effective_n: f64, alpha: f64) -> Self {
        let p_value = ks_p_value(statistic, effective_n);
        Self {
            statistic,
            n1,
            n2,
            p_value,
            alpha,
            pass: p_value > alpha,
        }
    }
}

/// Default test level.
pub const KS_ALPHA: f64 = 0.01;

/// Kolmogorov survival function `Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series, fast for small lambda.
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=100 {
            let j = (2 * k - 1) as f64;
            let term = (j * j * y).exp();
            s += term;
            if term < 1e-18 {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += sign * term;
        sign = -sign;
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic p-value with Stephens' small-sample correction.
pub fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let sn = effective_n.sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sample KS test at level [`KS_ALPHA`].
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsReport {
    ks_two_sample_at(a, b, KS_ALPHA)
}

pub fn ks_two_sample_at(a: &[f64], b: &[f64], alpha: f64) -> KsReport {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = a[i].min(b[j]);
        while i < n1 && a[i] <= x {
            i += 1;
        }
        while j < n2 && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    KsReport::new(d, n1, n2, ne, alpha)
}

/// One-sample KS test against a continuous distribution function.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F, alpha: f64) -> KsReport {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mut d: f64 = 0.0;
    for (k, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((k + 1) as f64 / n as f64 - f).abs());
        d = d.max((f - k as f64 / n as f64).abs());
    }
    KsReport::new(d, n, 0, n as f64, alpha)
}

/// `(1/2 eps) dt #{i : 0 <= R_i <= eps}` over the whole path.
pub fn epsilon_local_time(reflected: &ReflectedPath, eps: f64) -> f64 {
    let dt = reflected.grid().dt();
    let count = reflected
        .r()
        .iter()
        .take(reflected.grid().n_steps())
        .filter(|&&r| (0.0..=eps).contains(&r))
        .count();
    count as f64 * dt / (2.0 * eps)
}

type SharedFn = std::sync::Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Bounded functional of the driver through finitely many coordinates `W(t_1), ..., W(t_k)`.
#[derive(Clone)]
pub struct DriverFunctional {
    pub name: String,
    pub times: Vec<f64>,
    func: SharedFn,
}

impl std::fmt::Debug for DriverFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriverFunctional")
            .field("name", &self.name)
            .field("times", &self.times)
            .finish()
    }
}

impl DriverFunctional {
    pub fn new<F>(name: impl Into<String>, times: Vec<f64>, func: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            times,
            func: std::sync::Arc::new(func),
        }
    }

    /// `g(W) = 1`.
    pub fn one() -> Self {
        Self::new("1", Vec::new(), |_| 1.0)
    }

    pub fn eval(&self, coords: &[f64]) -> f64 {
        (self.func)(coords)
    }

    fn eval_on(&self, grid: &TimeGrid, values: &[f64]) -> f64 {
        let coords: Vec<f64> = self.times.iter().map(|&t| values[grid.nearest_index(t)]).collect();
        self.eval(&coords)
    }
}

/// Simulation settings for [`joint_law_test`].
#[derive(Clone, Copy, Debug)]
pub struct JointLawConfig {
    pub n_steps: usize,
    /// Source steps per output step for the time change.
    pub source_factor: usize,
    pub time_change: TimeChangeConfig,
    /// Stickiness used on the sticky side; `None` uses the tested `theta`.
    /// Setting it differently is a negative control.
    pub sticky_theta_override: Option<f64>,
}

impl Default for JointLawConfig {
    fn default() -> Self {
        Self {
            n_steps: 2000,
            source_factor: 1,
            time_change: TimeChangeConfig::default(),
            sticky_theta_override: None,
        }
    }
}

/// Estimates `E[f(X_t) g(W)] - E[G_f(W_t^+) g(W)]`.
///
/// The first mean runs over sticky paths with their reconstructed drivers;
/// the second over independent plain Brownian paths. The pooled standard
/// error treats the two arms as independent.
pub fn joint_law_test(
    f: &TestFunction,
    g: &DriverFunctional,
    theta: f64,
    t: f64,
    n_paths: usize,
    cfg: &JointLawConfig,
    seeds: SeedSpace,
) -> Result<McEstimate> {
    let pair = [(f.clone(), g.clone())];
    Ok(joint_law_battery(&pair, theta, t, n_paths, cfg, seeds)?.remove(0))
}

/// [`joint_law_test`] for several `(f, g)` pairs evaluated on one shared ensemble.
pub fn joint_law_battery(
    pairs: &[(TestFunction, DriverFunctional)],
    theta: f64,
    t: f64,
    n_paths: usize,
    cfg: &JointLawConfig,
    seeds: SeedSpace,
) -> Result<Vec<McEstimate>> {
    for (_, g) in pairs {
        if let Some(&bad) = g.times.iter().find(|&&s| s > t || s < 0.0) {
            return Err(Error::param(
                "g_functional",
                format!("{}: coordinate time {bad} outside [0, {t}]", g.name),
            ));
        }
    }
    let params = StickyParams::new(theta)?;
    let sticky_params = StickyParams::new(cfg.sticky_theta_override.unwrap_or(theta))?;
    let out_grid = TimeGrid::uniform(t, cfg.n_steps)?;
    let src_grid = TimeGrid::uniform(t, cfg.n_steps * cfg.source_factor.max(1))?;

    let sticky_side: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let seed = seeds.seed_for("joint-sticky", i);
            let path = simulate_sticky(&sticky_params, out_grid, src_grid, seed, &cfg.time_change)?;
            let driver = reconstruct_driver(&path, seeds.seed_for("joint-fill", i));
            let xt = *path.x().last().expect("non-empty path");
            Ok(pairs
                .iter()
                .map(|(f, g)| f.value(xt) * g.eval_on(&out_grid, driver.values()))
                .collect())
        })
        .collect::<Result<_>>()?;

    let lambda = params.lambda();
    let plain_side: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream("joint-plain", i);
            let w = sample_brownian_with(out_grid, i, &mut rng);
            let wplus = if cfg.time_change.bridge_minima {
                *reflect_bridged(&w, seeds.seed_for("joint-plain-min", i))
                    .r()
                    .last()
                    .expect("non-empty path")
            } else {
                reflected_increment(&w, 0, out_grid.n_steps())
            };
            pairs
                .iter()
                .map(|(f, g)| g_transform_lambda(f, lambda, wplus) * g.eval_on(&out_grid, w.values()))
                .collect()
        })
        .collect();

    Ok((0..pairs.len())
        .map(|k| {
            let a: Vec<f64> = sticky_side.iter().map(|v| v[k]).collect();
            let b: Vec<f64> = plain_side.iter().map(|v| v[k]).collect();
            mc_difference(&a, &b)
        })
        .collect())
}

fn g_transform_lambda(f: &TestFunction, lambda: f64, y: f64) -> f64 {
    g_transform(f, 0.5 * lambda, y).expect("y >= 0 by construction")
}

/// Marginal check helper: returns reflected paths' local time at the end, for cross-estimator studies.
pub fn levy_local_time_at_end(reflected: &ReflectedPath) -> f64 {
    *reflected.l().last().expect("non-empty path")
}

/// Convenience: reflected path of a fresh Brownian path.
pub fn sample_reflected(grid: TimeGrid, seeds: SeedSpace, tag: &str, index: u64) -> ReflectedPath {
    let mut rng = seeds.stream(tag, index);
    reflect(&sample_brownian_with(grid, index, &mut rng))
}

/// Writes a CSV with a header and rows of displayable fields.
pub fn write_csv_rows<W: Write>(mut out: W, header: &str, rows: &[Vec<String>]) -> Result<()> {
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

impl KsReport {
    pub fn summary(&self) -> String {
        format!(
            "D={:.5} n1={} n2={} p={:.4} alpha={} {}",
            self.statistic,
            self.n1,
            self.n2,
            self.p_value,
            self.alpha,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

impl McEstimate {
    pub fn summary(&self) -> String {
        format!(
            "mean={:.6} se={:.3e} n={} ci=[{:.6}, {:.6}]",
            self.mean, self.std_error, self.n, self.ci_low, self.ci_high
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_samples_zero_width() {
        let e = mc_mean(&[3.0; 10]);
        assert_eq!(e.mean, 3.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.ci_low, e.ci_high);
    }

    #[test]
    fn two_point_hand_arithmetic() {
        let e = mc_mean(&[0.0, 2.0]);
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 1.0);
        assert!(e.ci_low <= e.mean && e.mean <= e.ci_high);
    }

    #[test]
    fn normal_mean_within_four_sigma() {
        let mut rng = rng_from_seed(11);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let e = mc_mean(&xs);
        assert!(e.covers(0.0), "{e:?}");
        assert!((e.std_error - 1.0 / 100_000f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn pairwise_sum_is_order_fixed() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert_eq!(pairwise_sum(&xs), pairwise_sum(&xs.clone()));
        assert!((pairwise_sum(&xs) - xs.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: Vec<f64> = a.iter().map(|x| x + 100.0).collect();
        let r = ks_two_sample(&a, &b);
        assert_eq!(r.statistic, 1.0);
        assert!(!r.pass);
    }

    #[test]
    fn kolmogorov_q_reference_values() {
        // Q(1.36) ~ 0.049, Q(1.63) ~ 0.0098 (classical critical values)
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 2e-4);
        // Both branches agree at the switch point.
        let lo = kolmogorov_q(1.18 - 1e-12);
        let hi = kolmogorov_q(1.18);
        assert!((lo - hi).abs() < 1e-12);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_one_sample_uniform() {
        let mut rng = rng_from_seed(3);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0), 0.01);
        assert!(r.pass, "{r:?}");
        let r = ks_one_sample(&xs, |x| (x * x).clamp(0.0, 1.0), 0.01);
        assert!(!r.pass);
    }

    #[test]
    fn epsilon_local_time_degenerate_cases() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let zero = crate::paths::BrownianPath::from_values(g, vec![0.0; 101], 0).unwrap();
        // R == 0: estimator is t / (2 eps) while the Lévy local time stays 0.
        let r = reflect(&zero);
        assert!((epsilon_local_time(&r, 0.1) - 1.0 / 0.2).abs() < 1e-12);
        assert_eq!(levy_local_time_at_end(&r), 0.0);
        let up: Vec<f64> = (0..=100).map(|i| if i == 0 { 0.0 } else { 1.0 }).collect();
        let r = reflect(&crate::paths::BrownianPath::from_values(g, up, 0).unwrap());
        assert!((epsilon_local_time(&r, 0.5) - 0.01 / 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_law_rejects_late_coordinates() {
        let f = TestFunction::constant(1.0);
        let g = DriverFunctional::new("late", vec![2.0], |w| w[0]);
        let cfg = JointLawConfig {
            n_steps: 10,
            ..Default::default()
        };
        assert!(joint_law_test(&f, &g, 1.0, 1.0, 10, &cfg, SeedSpace::new(1)).is_err());
    }

    #[test]
    fn joint_law_trivial_pair_is_exactly_zero() {
        let f = TestFunction::constant(1.0);
        let cfg = JointLawConfig {
            n_steps: 50,
            ..Default::default()
        };
        let e = joint_law_test(&f, &DriverFunctional::one(), 1.0, 1.0, 200, &cfg, SeedSpace::new(2)).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.std_error, 0.0);
    }
}
