//! Verification suites behind the CLI subcommands.
//!
//! Each suite takes an [`ExperimentConfig`], runs its checks, writes CSV files
//! under `<out_dir>/<suite name>/` and returns a [`SuiteReport`]. CSV output
//! depends only on the configuration, never on thread count or timing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;

use crate::chaos::{build_propagators, build_reflected_propagators, ChaosExpansion, SpaceGrid};
use crate::config::{ExperimentConfig, Suite};
use crate::error::Result;
use crate::kernel_flow::{
    da_coefficient_c, g_intertwine_check, g_of_second_derivative, g_transform, g_transform_parts, g_transform_second,
    kernel_compose, kernel_measure, make_da_function, phi, sde_residual, KernelMeasure, TestFunction,
};
use crate::paths::{sample_brownian, sample_brownian_with, snap, TimeGrid};
use crate::quad::gl16;
use crate::rng::SeedSpace;
use crate::semigroup::{
    chapman_check_with, g_jet, write_density_csv, ReflectedKernel, SemigroupParams, TransitionKernel,
};
use crate::stats::{
    joint_law_battery, ks_one_sample, ks_two_sample, mc_mean, write_csv_rows, DriverFunctional, JointLawConfig,
    KS_ALPHA, Z_ACCEPT,
};
use crate::sticky_sim::{occupation_law_value, occupation_time, simulate_sticky, StickyParams, TimeChangeConfig};

/// One pass/fail line of a suite.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `<= 1e-8`.
    pub bound: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("<= {limit:e}"),
            pass: value <= limit,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!(">= {limit:e}"),
            pass: value >= limit,
        }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&value),
        }
    }

    pub fn flag(name: impl Into<String>, value: f64, bound: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            bound: bound.into(),
            pass,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.6e} ({})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.bound
        )
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        Self {
            suite,
            checks: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn summary(&self) -> String {
        let mut s = format!("== {} ==\n", self.suite.name());
        for c in &self.checks {
            s.push_str(&c.line());
            s.push('\n');
        }
        let failed = self.failures().count();
        s.push_str(&format!(
            "{} of {} checks passed{}\n",
            self.checks.len() - failed,
            self.checks.len(),
            if failed == 0 { "" } else { " -- FAILED" }
        ));
        s
    }

    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn create(&mut self, dir: &Path, name: &str) -> Result<BufWriter<File>> {
        let path = dir.join(name);
        self.files.push(path.clone());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn write_checks(&mut self, dir: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .checks
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    format!("{:e}", c.value),
                    c.bound.clone(),
                    c.pass.to_string(),
                ]
            })
            .collect();
        let out = self.create(dir, "checks.csv")?;
        write_csv_rows(out, "check,value,bound,pass", &rows)
    }
}

/// Runs one suite.
pub fn run(suite: Suite, cfg: &ExperimentConfig) -> Result<SuiteReport> {
    cfg.validate(suite)?;
    let dir = cfg.out_dir.join(suite.name());
    fs::create_dir_all(&dir)?;
    let mut report = SuiteReport::new(suite);
    match suite {
        Suite::Warren => warren(cfg, &dir, &mut report)?,
        Suite::Occupation => occupation(cfg, &dir, &mut report)?,
        Suite::Semigroup => semigroup(cfg, &dir, &mut report)?,
        Suite::Flow => flow(cfg, &dir, &mut report)?,
        Suite::SdeResidual => residual(cfg, &dir, &mut report)?,
        Suite::Chaos => chaos(cfg, &dir, &mut report)?,
    }
    report.write_checks(&dir)?;
    Ok(report)
}

/// Five functions in `D(A)` at `theta`: `(a + b y + c y^2) e^{-y}` with `c` fixed by the boundary condition.
pub fn da_battery(theta: f64) -> Vec<TestFunction> {
    [(1.0, 1.0), (0.0, 1.0), (1.0, 0.0), (0.5, -1.0), (-1.0, 2.0)]
        .iter()
        .map(|&(a, b)| make_da_function(a, b, da_coefficient_c(a, b, theta), theta).expect("c solves the condition"))
        .collect()
}

/// Five functions in `S` that mostly violate the sticky boundary condition.
pub fn s_battery() -> Vec<TestFunction> {
    vec![
        TestFunction::exp_poly(1.0, 0.0, 0.0, 1.0),
        TestFunction::exp_poly(0.0, 1.0, 0.0, 1.0),
        TestFunction::exp_poly(1.0, 2.0, 1.0, 0.5),
        TestFunction::exp_poly(2.0, -1.0, 0.5, 2.0),
        TestFunction::exp_poly(0.0, 0.0, 1.0, 1.0),
    ]
}

fn with_value<T: Copy + PartialEq>(base: &[T], extra: T) -> Vec<T> {
    let mut v = base.to_vec();
    if !v.contains(&extra) {
        v.push(extra);
    }
    v
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

// ---------------------------------------------------------------- warren

/// Draws `W_t^+ = W_t - min_[0,t] W` exactly: the minimum of a Brownian bridge
/// from 0 to `W_t` is `(W_t - sqrt(W_t^2 - 2 t ln U)) / 2`.
pub fn sample_wplus_exact(t: f64, rng: &mut crate::rng::Rng) -> f64 {
    let w = t.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let u: f64 = 1.0 - rng.random::<f64>();
    let min = 0.5 * (w - (w * w - 2.0 * t * u.ln()).sqrt());
    (w - min).max(0.0)
}

fn warren(cfg: &ExperimentConfig, dir: &Path, report: &mut SuiteReport) -> Result<()> {
    let (theta, t) = (cfg.theta, cfg.t_horizon);
    let seeds = SeedSpace::new(cfg.seed);
    let fs = da_battery(theta);
    let gs = [
        DriverFunctional::one(),
        DriverFunctional::new("exp(-w_t^2)", vec![t], |w| (-w[0] * w[0]).exp()),
        DriverFunctional::new("sin(w_{t/2})", vec![0.5 * t], |w| w[0].sin()),
    ];
    let pairs: Vec<(TestFunction, DriverFunctional)> = fs[..2]
        .iter()
        .flat_map(|f| gs.iter().map(move |g| (f.clone(), g.clone())))
        .collect();
    let jl = JointLawConfig {
        n_steps: cfg.n_time_steps,
        source_factor: cfg.source_factor,
        time_change: TimeChangeConfig {
            zero_detect_c: cfg.zero_detect_c,
            bridge_minima: cfg.bridge_minima,
        },
        sticky_theta_override: cfg.theta_sim,
    };
    let estimates = joint_law_battery(&pairs, theta, t, cfg.n_paths, &jl, seeds.child("joint"))?;
    let mut rows = Vec::new();
    for ((f, g), e) in pairs.iter().zip(&estimates) {
        let z = if e.std_error > 0.0 {
            e.mean.abs() / e.std_error
        } else {
            0.0
        };
        let pass = e.mean.abs() <= Z_ACCEPT * e.std_error;
        report.push(Check::flag(
            format!("joint law f={} g={}", f.name(), g.name),
            e.mean,
            format!("|delta| <= {Z_ACCEPT} se = {:.3e}", Z_ACCEPT * e.std_error),
            pass,
        ));
        rows.push(vec![
            f.name().to_string(),
            g.name.clone(),
            format!("{:e}", e.mean),
            format!("{:e}", e.std_error),
            format!("{z:.4}"),
            pass.to_string(),
        ]);
    }
    write_csv_rows(
        report.create(dir, "joint_law.csv")?,
        "f,g,delta,std_error,z,pass",
        &rows,
    )?;

    // Marginal law of (W_t^+ - T)^+ at x = 0 against the closed-form kernel.
    let sim_theta = cfg.theta_sim.unwrap_or(theta);
    let samples: Vec<f64> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream("marginal", i);
            let wplus = sample_wplus_exact(t, &mut rng);
            let tt: f64 = rng.sample(Exp::new(2.0 * sim_theta).expect("theta > 0"));
            (wplus - tt).max(0.0)
        })
        .collect();
    let n = samples.len() as f64;
    let atom = g_jet(theta, t, 0.0)[0] / theta;
    let zeros = samples.iter().filter(|&&v| v == 0.0).count() as f64;
    let freq = zeros / n;
    let sigma = (atom * (1.0 - atom) / n).sqrt();
    report.push(Check::flag(
        "marginal atom frequency",
        freq,
        format!("|freq - {atom:.6}| <= {Z_ACCEPT} sigma = {:.3e}", Z_ACCEPT * sigma),
        (freq - atom).abs() <= Z_ACCEPT * sigma,
    ));
    let positive: Vec<f64> = samples.iter().copied().filter(|&v| v > 0.0).collect();
    let cdf = PositivePartCdf::new(theta, t);
    let ks = ks_one_sample(&positive, |y| cdf.eval(y), KS_ALPHA);
    report.push(Check::flag(
        "marginal positive part KS",
        ks.p_value,
        format!("p >= {KS_ALPHA} (D = {:.4e}, n = {})", ks.statistic, ks.n1),
        ks.pass,
    ));
    let hist = histogram(&positive, 0.0, 4.0 * t.sqrt(), 40);
    let rows: Vec<Vec<String>> = hist
        .iter()
        .map(|&(lo, hi, count)| {
            let expected = n * (1.0 - atom) * (cdf.eval(hi) - cdf.eval(lo));
            vec![
                format!("{lo}"),
                format!("{hi}"),
                count.to_string(),
                format!("{expected:.3}"),
            ]
        })
        .collect();
    let mut out = report.create(dir, "marginal_histogram.csv")?;
    writeln!(out, "# atom_count = {zeros}, atom_expected = {:.3}", n * atom)?;
    write_csv_rows(out, "bin_low,bin_high,count_sim,count_law", &rows)
}

/// Distribution function of the positive part of `P_t(0, .)`, normalized:
/// density `2 g_t(y) / (1 - g_t(0)/theta)`.
struct PositivePartCdf {
    theta: f64,
    t: f64,
    step: f64,
    cumulative: Vec<f64>,
    norm: f64,
}

impl PositivePartCdf {
    fn new(theta: f64, t: f64) -> Self {
        let step = 1e-2 * t.sqrt().min(1.0);
        let top = 14.0 * t.sqrt() + 10.0 / theta;
        let n = (top / step).ceil() as usize;
        let mut cumulative = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 0..n {
            let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
            acc += gl16().integrate(|y| 2.0 * g_jet(theta, t, y)[0], a, b);
            cumulative.push(acc);
        }
        let norm = 1.0 - g_jet(theta, t, 0.0)[0] / theta;
        Self {
            theta,
            t,
            step,
            cumulative,
            norm,
        }
    }

    fn eval(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let k = ((y / self.step) as usize).min(self.cumulative.len() - 1);
        let a = k as f64 * self.step;
        let (theta, t) = (self.theta, self.t);
        let partial = self.cumulative[k] + gl16().integrate(|u| 2.0 * g_jet(theta, t, u)[0], a, y);
        (partial / self.norm).min(1.0)
    }
}

fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, usize)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in samples {
        if v >= lo && v < hi {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}

// ---------------------------------------------------------------- occupation

fn occupation(cfg: &ExperimentConfig, dir: &Path, report: &mut SuiteReport) -> Result<()> {
    let (theta, t) = (cfg.theta, cfg.t_horizon);
    let seeds = SeedSpace::new(cfg.seed);
    let sim_params = StickyParams::new(cfg.theta_sim.unwrap_or(theta))?;
    let tc = TimeChangeConfig {
        zero_detect_c: cfg.zero_detect_c,
        bridge_minima: cfg.bridge_minima,
    };
    let law: Vec<f64> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let n: f64 = seeds.stream("occupation-law", i).sample(StandardNormal);
            occupation_law_value(theta, t, n)
        })
        .collect();
    let law_mean = mc_mean(&law);
    let mut rows = Vec::new();
    for (level, factor) in [(0usize, 1usize), (1, 2)] {
        let steps = cfg.n_time_steps * cfg.source_factor * factor;
        let grid = TimeGrid::uniform(t, steps)?;
        let tag = format!("occupation-sim-{level}");
        let sim: Vec<f64> = (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let path = simulate_sticky(&sim_params, grid, grid, seeds.seed_for(&tag, i), &tc)?;
                Ok(occupation_time(&path, t)?.value)
            })
            .collect::<Result<_>>()?;
        let ks = ks_two_sample(&sim, &law);
        report.push(Check::flag(
            format!("occupation KS, {steps} source steps"),
            ks.p_value,
            format!("p >= {KS_ALPHA} (D = {:.4e})", ks.statistic),
            ks.pass,
        ));
        let sim_mean = mc_mean(&sim);
        rows.push(vec![
            steps.to_string(),
            format!("{:e}", ks.statistic),
            format!("{:e}", ks.p_value),
            format!("{:e}", sim_mean.mean),
            format!("{:e}", law_mean.mean),
        ]);
        if level == 0 {
            let hs = histogram(&sim, 0.0, t, 40);
            let hl = histogram(&law, 0.0, t, 40);
            let hrows: Vec<Vec<String>> = hs
                .iter()
                .zip(&hl)
                .map(|(&(lo, hi, a), &(_, _, b))| vec![format!("{lo}"), format!("{hi}"), a.to_string(), b.to_string()])
                .collect();
            write_csv_rows(
                report.create(dir, "occupation_histogram.csv")?,
                "bin_low,bin_high,count_sim,count_law",
                &hrows,
            )?;
        }
    }
    write_csv_rows(
        report.create(dir, "occupation_ks.csv")?,
        "source_steps,ks_statistic,p_value,mean_sim,mean_law",
        &rows,
    )
}

// ---------------------------------------------------------------- semigroup

/// `g''_t - 2 theta g'_t - 2 theta x / sqrt(2 pi t^3) e^{-x^2/2t}` with the
/// derivatives taken by sixth-order central differences of `g` alone.
pub fn g_ode_residual(theta: f64, t: f64, x: f64) -> f64 {
    let h = 2e-3 * t.sqrt().min(1.0);
    let g = |y: f64| g_jet(theta, t, y)[0];
    let d = |k: f64| g(x + k * h);
    let g1 = (-d(-3.0) + 9.0 * d(-2.0) - 45.0 * d(-1.0) + 45.0 * d(1.0) - 9.0 * d(2.0) + d(3.0)) / (60.0 * h);
    let g2 = (2.0 * d(-3.0) - 27.0 * d(-2.0) + 270.0 * d(-1.0) - 490.0 * d(0.0) + 270.0 * d(1.0) - 27.0 * d(2.0)
        + 2.0 * d(3.0))
        / (180.0 * h * h);
    let source = 2.0 * theta * x / (2.0 * std::f64::consts::PI * t * t * t).sqrt() * (-x * x / (2.0 * t)).exp();
    g2 - 2.0 * theta * g1 - source
}

fn semigroup(cfg: &ExperimentConfig, dir: &Path, report: &mut SuiteReport) -> Result<()> {
    let thetas = with_value(&[0.5, 1.0, 2.0], cfg.theta);
    let times = with_value(&[0.25, 1.0, 4.0], cfg.t_horizon);
    let kern = |theta: f64, t: f64| -> Result<TransitionKernel> {
        Ok(TransitionKernel::new(SemigroupParams::new(theta, t)?).with_tol(cfg.quad_tol))
    };

    let mut mass_err: f64 = 0.0;
    let mut ode_err: f64 = 0.0;
    let mut bc_err: f64 = 0.0;
    for &theta in &thetas {
        for &t in &times {
            let k = kern(theta, t)?;
            for x in [0.0, 0.5, 2.0] {
                mass_err = mass_err.max((k.total_mass(x) - 1.0).abs());
            }
            for x in linspace(0.0, 10.0, 200) {
                ode_err = ode_err.max(g_ode_residual(theta, t, x).abs());
            }
            for f in s_battery() {
                let d1 = k.apply_prime(&f, 0.0);
                let d2 = k.apply_second(&f, 0.0);
                bc_err = bc_err.max((d2 - 2.0 * theta * d1).abs() / (1.0 + d2.abs()));
            }
        }
    }
    report.push(Check::at_most(
        "conservativity |atom + int density - 1|",
        mass_err,
        1e-8,
    ));
    report.push(Check::at_most("g ODE residual (finite differences)", ode_err, 1e-8));
    report.push(Check::at_most(
        "boundary identity (P_t f)'' = 2 theta (P_t f)' at 0+",
        bc_err,
        1e-6,
    ));

    let xs = linspace(0.0, 5.0, 26);
    let mut ck: f64 = 0.0;
    let mut ck_ablated = f64::INFINITY;
    for (s, t) in [(0.25, 0.25), (0.5, 1.0)] {
        for f in &s_battery()[..2] {
            ck = ck.max(chapman_check_with(cfg.theta, s, t, f, &xs, true)?);
            ck_ablated = ck_ablated.min(chapman_check_with(cfg.theta, s, t, f, &xs, false)?);
        }
    }
    report.push(Check::at_most("Chapman-Kolmogorov sup error", ck, 1e-6));
    report.push(Check::at_least(
        "Chapman-Kolmogorov without atom (control)",
        ck_ablated,
        1e-3,
    ));

    let k = kern(cfg.theta, cfg.t_horizon)?;
    let xs = linspace(0.0, 3.0, 7);
    let ys = linspace(0.0, 6.0, 61);
    write_density_csv(&k, &xs, &ys, report.create(dir, "density.csv")?)?;
    Ok(())
}

// ---------------------------------------------------------------- flow

fn flow(cfg: &ExperimentConfig, dir: &Path, report: &mut SuiteReport) -> Result<()> {
    let theta = cfg.theta;
    let lambda = 2.0 * theta;
    let ys = linspace(0.0, 5.0, 101);

    let one = TestFunction::constant(1.0);
    let mut g1_err: f64 = 0.0;
    for &y in &ys {
        g1_err = g1_err.max((g_transform(&one, theta, y)? - 1.0).abs());
        g1_err = g1_err.max((g_transform_parts(1.0, |_| 1.0, lambda, y) - 1.0).abs());
    }
    report.push(Check::at_most("G_1 = 1", g1_err, 1e-10));

    let mut rows = Vec::new();
    let (mut e1, mut e2): (f64, f64) = (0.0, 0.0);
    for f in da_battery(theta) {
        let (a, b) = g_intertwine_check(&f, theta, &ys)?;
        e1 = e1.max(a);
        e2 = e2.max(b);
        rows.push(vec![f.name().to_string(), format!("{a:e}"), format!("{b:e}")]);
    }
    report.push(Check::at_most("G_{f'1} = (G_f)'", e1, 1e-8));
    report.push(Check::at_most("G_{f''} = (G_f)''", e2, 1e-8));
    let violator = TestFunction::exp_poly(1.0, 0.0, 0.0, 1.0);
    let control = ys
        .iter()
        .map(|&y| Ok((g_of_second_derivative(&violator, theta, y) - g_transform_second(&violator, theta, y)?).abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    report.push(Check::at_least("G_{f''} = (G_f)'' off D(A) (control)", control, 1e-2));
    write_csv_rows(report.create(dir, "g_identities.csv")?, "f,err_first,err_second", &rows)?;

    // Random tuples on random paths.
    let seeds = SeedSpace::new(cfg.seed);
    let n = cfg.n_time_steps;
    let grid = TimeGrid::uniform(cfg.t_horizon, n)?;
    let draw = |tag: &str, i: u64| {
        let mut rng = seeds.stream(tag, i);
        let path = sample_brownian_with(grid, i, &mut rng);
        let mut idx = [
            rng.random_range(0..=n),
            rng.random_range(0..=n),
            rng.random_range(0..=n),
        ];
        idx.sort_unstable();
        // Start points near 0 so that many tuples hit zero before the middle time.
        let x = if i.is_multiple_of(4) {
            0.0
        } else {
            snap(rng.random::<f64>() * 0.5 * grid.t_end().sqrt())
        };
        (path, idx, x)
    };
    let phi_fail = (0..1000u64)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let (path, [s, t, u], x) = draw("phi-tuple", i);
            let direct = phi(&path, s, u, x)?;
            let composed = phi(&path, t, u, phi(&path, s, t, x)?)?;
            Ok(usize::from(direct.to_bits() != composed.to_bits()))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    report.push(Check::at_most(
        "phi composition mismatches (bitwise, 1000 tuples)",
        phi_fail as f64,
        0.0,
    ));

    let battery = da_battery(theta);
    let tuples = (0..100u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, bool)> {
            let (path, [s, t, u], x) = draw("kernel-tuple", i);
            let f = &battery[i as usize % battery.len()];
            let (lhs, rhs) = kernel_compose(&path, s, t, u, x, theta, f)?;
            let sticky = matches!(kernel_measure(&path, s, t, x, theta)?, KernelMeasure::Sticky { .. });
            Ok(((lhs - rhs).abs(), sticky))
        })
        .collect::<Result<Vec<_>>>()?;
    let kc = tuples.iter().map(|r| r.0).fold(0.0, f64::max);
    let sticky = tuples.iter().filter(|r| r.1).count();
    report.push(Check::at_most("kernel composition |lhs - rhs| (100 tuples)", kc, 1e-8));
    let rows: Vec<Vec<String>> = tuples
        .iter()
        .enumerate()
        .map(|(i, (e, s))| vec![i.to_string(), format!("{e:e}"), s.to_string()])
        .collect();
    write_csv_rows(
        report.create(dir, "kernel_compose.csv")?,
        "tuple,abs_error,outer_sticky",
        &rows,
    )?;
    report.push(Check::at_least(
        "tuples with a sticky outer kernel (coverage)",
        sticky as f64,
        20.0,
    ));
    Ok(())
}

// ---------------------------------------------------------------- residual

fn residual(cfg: &ExperimentConfig, dir: &Path, report: &mut SuiteReport) -> Result<()> {
    let theta = cfg.theta;
    let seeds = SeedSpace::new(cfg.seed);
    let levels = cfg.halvings + 1;
    let fine_steps = cfg.n_time_steps << cfg.halvings;
    let fine = TimeGrid::uniform(cfg.t_horizon, fine_steps)?;
    let battery = da_battery(theta);
    let xs = [0.0, 0.5];
    // squares[path][(f, x, level)]
    let squares: Vec<Vec<f64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path = sample_brownian(fine, seeds.seed_for("residual", i));
            let coarse: Vec<_> = (0..levels)
                .map(|l| path.subsample(1 << (cfg.halvings - l)))
                .collect::<Result<_>>()?;
            let mut out = Vec::with_capacity(battery.len() * xs.len() * levels);
            for f in &battery {
                for &x in &xs {
                    for p in &coarse {
                        let r = sde_residual(p, x, theta, f, p.grid().n_steps())?;
                        out.push(r * r);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut k = 0;
    for f in &battery {
        for &x in &xs {
            let rms: Vec<f64> = (0..levels)
                .map(|l| {
                    let col: Vec<f64> = squares.iter().map(|v| v[k + l]).collect();
                    mc_mean(&col).mean.sqrt()
                })
                .collect();
            k += levels;
            for (l, r) in rms.iter().enumerate() {
                rows.push(vec![
                    f.name().to_string(),
                    format!("{x}"),
                    (cfg.n_time_steps << l).to_string(),
                    format!("{r:e}"),
                ]);
            }
            for l in 0..levels - 1 {
                let ratio = rms[l] / rms[l + 1];
                report.push(Check::within(
                    format!(
                        "residual ratio f={} x={x} {}->{} steps",
                        f.name(),
                        cfg.n_time_steps << l,
                        cfg.n_time_steps << (l + 1)
                    ),
                    ratio,
                    1.2,
                    2.0,
                ));
            }
        }
    }
    write_csv_rows(report.create(dir, "residual.csv")?, "f,x,n_steps,rms_residual", &rows)
}

// ---------------------------------------------------------------- chaos

/// Functions used by the chaos suite.
pub fn chaos_battery(theta: f64) -> Vec<TestFunction> {
    vec![make_da_function(1.0, 1.0, da_coefficient_c(1.0, 1.0, theta), theta).expect("c solves the condition")]
}

fn chaos(cfg: &ExperimentConfig, dir: &Path, report: &mut SuiteReport) -> Result<()> {
    let (theta, t, k) = (cfg.theta, cfg.t_horizon, cfg.n_time_steps);
    let model_theta = cfg.theta_sim.unwrap_or(theta);
    let grid = SpaceGrid::new(cfg.x_max, cfg.space_nodes)?;
    let sticky = build_propagators(model_theta, t, k, grid)?;
    let reflected = build_reflected_propagators(t, k, grid)?;
    let seeds = SeedSpace::new(cfg.seed);
    let tg = TimeGrid::uniform(t, k)?;
    let paths: Vec<_> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| sample_brownian(tg, seeds.seed_for("chaos", i)))
        .collect();

    let mut term_rows = Vec::new();
    let mut mse_rows = Vec::new();
    let mut coef_rows = Vec::new();
    for f in chaos_battery(theta) {
        let name = f.name().to_string();
        let exp = ChaosExpansion::sticky(&sticky, &f, cfg.n_max)?;
        let exp_plus = ChaosExpansion::reflected(&reflected, &f, theta, cfg.n_max)?;
        let pt_f0 = TransitionKernel::new(SemigroupParams::new(theta, t)?)
            .with_tol(cfg.quad_tol)
            .apply(&f, 0.0);
        let pplus_g0 = ReflectedKernel::new(t)?
            .with_tol(cfg.quad_tol)
            .apply_fn(0.0, |y| g_transform(&f, theta, y).expect("y >= 0"));
        report.push(Check::at_most(
            format!("|P_t f(0) - P+_t G_f(0)| f={name}"),
            (pt_f0 - pplus_g0).abs(),
            1e-6,
        ));

        let results: Vec<_> = paths
            .par_iter()
            .map(|p| Ok((exp.evaluate(p)?, exp_plus.evaluate(p)?)))
            .collect::<Result<Vec<_>>>()?;

        // Partial sums J0 + ... + Jn for each n.
        let orders = cfg.n_max + 1;
        let partial = |r: &crate::chaos::ChaosResult, n: usize| r.j0 + r.terms[..n].iter().sum::<f64>();
        let errors: Vec<Vec<f64>> = (0..orders)
            .map(|n| {
                results
                    .iter()
                    .map(|(r, _)| (r.reference - partial(r, n)).powi(2))
                    .collect()
            })
            .collect();
        for n in 0..orders {
            let trunc: Vec<f64> = results.iter().map(|(r, _)| partial(r, n)).collect();
            let m = mc_mean(&trunc);
            // P_t f(0) is itself only good to quad_tol; at n_max = 0 the se is zero.
            let band = Z_ACCEPT * m.std_error + cfg.quad_tol;
            report.push(Check::flag(
                format!("mean truncation n_max={n} f={name}"),
                m.mean,
                format!("|mean - P_t f(0) = {pt_f0:.6}| <= {Z_ACCEPT} se + quad_tol = {band:.3e}"),
                (m.mean - pt_f0).abs() <= band,
            ));
            let mse = mc_mean(&errors[n]);
            mse_rows.push(vec![
                name.clone(),
                n.to_string(),
                format!("{:e}", mse.mean),
                format!("{:e}", mse.std_error),
            ]);
        }
        for n in 0..orders - 1 {
            let diff: Vec<f64> = errors[n].iter().zip(&errors[n + 1]).map(|(a, b)| a - b).collect();
            let d = mc_mean(&diff);
            if n == 0 {
                report.push(Check::flag(
                    format!("MSE strict decrease 0->1 f={name}"),
                    d.mean,
                    format!("> {Z_ACCEPT} se = {:.3e}", Z_ACCEPT * d.std_error),
                    d.mean > Z_ACCEPT * d.std_error,
                ));
            } else {
                report.push(Check::flag(
                    format!("MSE nonincreasing {n}->{} f={name}", n + 1),
                    d.mean,
                    format!(">= -{Z_ACCEPT} se = {:.3e}", -Z_ACCEPT * d.std_error),
                    d.mean >= -Z_ACCEPT * d.std_error,
                ));
            }
        }
        if cfg.n_max >= 1 {
            let d1 = results
                .iter()
                .map(|(a, b)| (a.terms[0] - b.terms[0]).abs())
                .fold(0.0, f64::max);
            report.push(Check::at_most(format!("max |J1 - J1+| f={name}"), d1, 1e-4));
            for i in 0..k {
                coef_rows.push(vec![
                    name.clone(),
                    format!("{}", i as f64 * sticky.dt()),
                    format!("{:e}", exp.c1(i)),
                    format!("{:e}", exp_plus.c1(i)),
                ]);
            }
        }
        for (id, (r, rp)) in results.iter().enumerate() {
            term_rows.push(vec![
                name.clone(),
                id.to_string(),
                "0".into(),
                format!("{:e}", r.j0),
                format!("{:e}", rp.j0),
                format!("{:e}", r.reference),
            ]);
            for (n, (a, b)) in r.terms.iter().zip(&rp.terms).enumerate() {
                term_rows.push(vec![
                    name.clone(),
                    id.to_string(),
                    (n + 1).to_string(),
                    format!("{a:e}"),
                    format!("{b:e}"),
                    format!("{:e}", r.reference),
                ]);
            }
        }
    }
    write_csv_rows(
        report.create(dir, "terms.csv")?,
        "f,path_id,order,value,value_pplus,reference",
        &term_rows,
    )?;
    write_csv_rows(report.create(dir, "mse.csv")?, "f,n_max,mse,std_error", &mse_rows)?;
    write_csv_rows(report.create(dir, "c1.csv")?, "f,s,c1,c1_pplus", &coef_rows)?;
    Ok(())
}
