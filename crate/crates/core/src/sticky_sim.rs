//! Sticky Brownian motion paths.
//!
//! The main simulator slows a reflected path down whenever it sits at zero:
//! with `A(u) = u + L(u)/theta`, the sticky path is `X(t) = R(A^{-1}(t))`.
//! Between grid points the source is modelled by the linear interpolant of
//! `W`, whose reflection and local time are computed exactly; a step in which
//! `W` reaches a new minimum from above therefore gets one extra knot where
//! `R` first touches zero. On the output clock this makes `X` exactly zero
//! for the whole time the local time is growing.

use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::paths::{reflect, reflect_bridged, sample_brownian, snap, BrownianPath, ReflectedPath, TimeGrid};
use crate::rng::{rng_from_seed, SeedSpace};

/// Stickiness `theta > 0`; `lambda = 2 theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StickyParams {
    theta: f64,
}

impl StickyParams {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::param(
                "theta",
                format!("must be positive and finite, got {theta}"),
            ));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda(&self) -> f64 {
        2.0 * self.theta
    }
}

/// Zero-detection threshold `eps0 = c sqrt(dt_source)`, and whether the source
/// reflection includes the minima reached between grid points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeChangeConfig {
    pub zero_detect_c: f64,
    pub bridge_minima: bool,
}

impl Default for TimeChangeConfig {
    fn default() -> Self {
        Self {
            zero_detect_c: 1e-2,
            bridge_minima: true,
        }
    }
}

/// Semimartingale split `X = X_0 + M + theta O` recorded by the time change:
/// `O(t) = t - A^{-1}(t)` is the time spent at zero and `M(t) = B(A^{-1}(t))`
/// the source Brownian motion read on the sticky clock.
#[derive(Clone, Debug, PartialEq)]
pub struct ClockSplit {
    pub martingale: Vec<f64>,
    pub occupation: Vec<f64>,
}

/// Sticky trajectory on an output grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StickyPath {
    grid: TimeGrid,
    x: Vec<f64>,
    at_zero: Vec<bool>,
    driver: Option<BrownianPath>,
    source_seed: u64,
    split: Option<ClockSplit>,
}

impl StickyPath {
    /// Assembles a path from raw parts; zero flags force `x = 0`.
    pub fn from_parts(grid: TimeGrid, x: Vec<f64>, at_zero: Vec<bool>, source_seed: u64) -> Result<Self> {
        if x.len() != grid.len() || at_zero.len() != grid.len() {
            return Err(Error::param("x", "length must match the grid"));
        }
        if let Some(bad) = x.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::param("x", format!("negative or NaN value {bad}")));
        }
        let x = x
            .into_iter()
            .zip(&at_zero)
            .map(|(v, &z)| if z { 0.0 } else { v })
            .collect();
        Ok(Self {
            grid,
            x,
            at_zero,
            driver: None,
            source_seed,
            split: None,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn at_zero(&self) -> &[bool] {
        &self.at_zero
    }

    pub fn driver(&self) -> Option<&BrownianPath> {
        self.driver.as_ref()
    }

    pub fn source_seed(&self) -> u64 {
        self.source_seed
    }

    /// Present on paths produced by the time change.
    pub fn clock_split(&self) -> Option<&ClockSplit> {
        self.split.as_ref()
    }

    /// Attaches a reconstructed driver.
    pub fn with_driver(mut self, driver: BrownianPath) -> Self {
        self.driver = Some(driver);
        self
    }

    /// Writes `t,X,at_zero,W` rows; `W` is empty without a driver.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,X,at_zero,W")?;
        for (i, t) in self.grid.times().enumerate() {
            let w = self.driver.as_ref().map(|d| d.value(i).to_string()).unwrap_or_default();
            writeln!(out, "{t},{},{},{w}", self.x[i], u8::from(self.at_zero[i]))?;
        }
        Ok(())
    }
}

/// Lebesgue time spent at zero up to a horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OccupationSample {
    pub t_horizon: f64,
    pub value: f64,
}

/// Knot of the piecewise-linear source model: clock `A(u)`, source time `u`, `R(u)`.
#[derive(Clone, Copy, Debug)]
struct Knot {
    a: f64,
    u: f64,
    r: f64,
}

/// `(A(u), R(u))` at every knot, with the extra touch-down knot in arrival steps.
fn clock_knots(reflected: &ReflectedPath, theta: f64) -> Vec<Knot> {
    let grid = reflected.grid();
    let (r, l) = (reflected.r(), reflected.l());
    let mut knots = Vec::with_capacity(r.len() + r.len() / 4);
    let clock = |u: f64, l: f64| u + l / theta;
    knots.push(Knot {
        a: clock(grid.time(0), l[0]),
        u: grid.time(0),
        r: r[0],
    });
    for j in 0..grid.n_steps() {
        let dl = l[j + 1] - l[j];
        if dl > 0.0 {
            // New minimum inside the step, at fraction p: the end point for a
            // grid reflection, the bridge minimum otherwise. W is linear on
            // each side of it.
            let m = -l[j + 1];
            let (drop, rise) = (r[j] + dl, r[j + 1] - l[j + 1] - m);
            let p = drop / (drop + rise);
            if r[j] > 0.0 {
                // Falls through the old minimum.
                let u = grid.time(j) + p * (r[j] / drop) * grid.dt();
                knots.push(Knot {
                    a: clock(u, l[j]),
                    u,
                    r: 0.0,
                });
            }
            if p < 1.0 {
                let u = grid.time(j) + p * grid.dt();
                knots.push(Knot {
                    a: clock(u, l[j + 1]),
                    u,
                    r: 0.0,
                });
            }
        }
        knots.push(Knot {
            a: clock(grid.time(j + 1), l[j + 1]),
            u: grid.time(j + 1),
            r: r[j + 1],
        });
    }
    knots
}

/// Time-changes a reflected path onto `out_grid`.
pub fn simulate_time_change(
    reflected: &ReflectedPath,
    params: &StickyParams,
    out_grid: TimeGrid,
    cfg: &TimeChangeConfig,
) -> Result<StickyPath> {
    let src = reflected.grid();
    if out_grid.t_start() < src.t_start() {
        return Err(Error::param("out_grid", "starts before the source path"));
    }
    let knots = clock_knots(reflected, params.theta);
    let a_end = knots.last().expect("grid has at least one point").a;
    if a_end < out_grid.t_end() * (1.0 - 1e-12) {
        return Err(Error::SourceTooShort {
            required_u_max: out_grid.t_end(),
            available: src.t_end(),
        });
    }
    let eps0 = cfg.zero_detect_c * src.dt().sqrt();
    let theta = params.theta;
    let n = out_grid.len();
    let (mut x, mut at_zero) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut martingale, mut occupation) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut k = 0usize;
    for t in out_grid.times() {
        // Output times are increasing, so the knot search only moves forward.
        while k + 1 < knots.len() && knots[k + 1].a < t {
            k += 1;
        }
        let (v, u) = if k + 1 >= knots.len() || t <= knots[k].a {
            let kn = knots[k.min(knots.len() - 1)];
            (kn.r, kn.u)
        } else {
            let (lo, hi) = (knots[k], knots[k + 1]);
            let w = (t - lo.a) / (hi.a - lo.a);
            (lo.r + w * (hi.r - lo.r), lo.u + w * (hi.u - lo.u))
        };
        let zero = v <= eps0;
        at_zero.push(zero);
        x.push(if zero { 0.0 } else { snap(v).max(0.0) });
        // L(A^{-1}(t)) = theta (t - A^{-1}(t)), so B = R - L on the sticky clock.
        let o = (t - u).max(0.0);
        occupation.push(o);
        martingale.push(v - theta * o);
    }
    Ok(StickyPath {
        grid: out_grid,
        x,
        at_zero,
        driver: None,
        source_seed: 0,
        split: Some(ClockSplit { martingale, occupation }),
    })
}

/// Samples a source path on `src_grid`, reflects it and time-changes it onto `out_grid`.
pub fn simulate_sticky(
    params: &StickyParams,
    out_grid: TimeGrid,
    src_grid: TimeGrid,
    seed: u64,
    cfg: &TimeChangeConfig,
) -> Result<StickyPath> {
    let source = sample_brownian(src_grid, seed);
    let reflected = if cfg.bridge_minima {
        reflect_bridged(&source, seed)
    } else {
        reflect(&source)
    };
    let mut path = simulate_time_change(&reflected, params, out_grid, cfg)?;
    path.source_seed = seed;
    Ok(path)
}

/// Rebuilds a driving Brownian motion from a sticky path.
///
/// Off the zero set the driver moves with `X`; while `X` sits at zero it
/// receives independent Gaussian noise. When the path carries its clock split
/// (time-change output), step `i` gets `dM_i + sqrt(dO_i) xi_i`, which splits
/// steps that are partly at zero exactly. Otherwise the flags decide: `dX_i`
/// off zero, `sqrt(dt) xi_i` on a step starting at zero. The noise for step `i`
/// is the `i`-th draw of the stream named by `seed`, whether or not it is used.
pub fn reconstruct_driver(path: &StickyPath, seed: u64) -> BrownianPath {
    let grid = path.grid;
    let sd = grid.dt().sqrt();
    let mut rng = SeedSpace::new(seed).stream("driver-fill", 0);
    let increments: Vec<f64> = (0..grid.n_steps())
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            match &path.split {
                Some(s) => {
                    let d_occ = (s.occupation[i + 1] - s.occupation[i]).max(0.0);
                    (s.martingale[i + 1] - s.martingale[i]) + d_occ.sqrt() * z
                }
                None if path.at_zero[i] => sd * z,
                None => path.x[i + 1] - path.x[i],
            }
        })
        .collect();
    BrownianPath::from_increments(grid, &increments, seed).expect("increment count matches grid")
}

/// `dt #{i : at_zero[i], t_i < t_horizon}`.
pub fn occupation_time(path: &StickyPath, t_horizon: f64) -> Result<OccupationSample> {
    let grid = path.grid;
    if t_horizon > grid.t_end() * (1.0 + 1e-12) {
        return Err(Error::HorizonOverflow {
            horizon: t_horizon,
            grid_end: grid.t_end(),
        });
    }
    let count = path
        .at_zero
        .iter()
        .enumerate()
        .filter(|&(i, &z)| z && grid.time(i) < t_horizon - 1e-12 * grid.dt())
        .count();
    Ok(OccupationSample {
        t_horizon,
        value: count as f64 * grid.dt(),
    })
}

/// Occupation time at zero up to `t` for a path started at zero, as a function of a
/// standard normal draw `n`: `(|n|/theta) sqrt(t + n^2/(4 theta^2)) - n^2/(2 theta^2)`.
///
/// Written in the cancellation-free form `n^2 t / (theta^2 (root + n^2/(2 theta^2)))`.
pub fn occupation_law_value(theta: f64, t: f64, n: f64) -> f64 {
    let b = n * n / (2.0 * theta * theta);
    let root = (n.abs() / theta) * (t + n * n / (4.0 * theta * theta)).sqrt();
    let denom = root + b;
    if denom == 0.0 {
        return 0.0;
    }
    (n * n * t / (theta * theta) / denom).clamp(0.0, t)
}

/// One draw from the closed-form occupation law.
pub fn sample_occupation_law(params: &StickyParams, t: f64, seed: u64) -> Result<OccupationSample> {
    if !(t > 0.0) {
        return Err(Error::param("t", format!("must be positive, got {t}")));
    }
    let n: f64 = rng_from_seed(seed).sample(StandardNormal);
    Ok(OccupationSample {
        t_horizon: t,
        value: occupation_law_value(params.theta, t, n),
    })
}

/// Sticky random walk on `{0, h, 2h, ...}` with time step `h^2`.
///
/// Interior states move `+-h` with probability 1/2; from zero the walk jumps
/// to `h` with probability `theta h` and otherwise stays.
pub fn simulate_sticky_walk(params: &StickyParams, h: f64, t_horizon: f64, seed: u64) -> Result<StickyPath> {
    if !(h > 0.0) {
        return Err(Error::param("h", format!("must be positive, got {h}")));
    }
    let q = params.theta * h;
    if q >= 1.0 {
        return Err(Error::param("h", format!("theta*h = {q} must be < 1")));
    }
    if !(t_horizon > 0.0) {
        return Err(Error::param("t_horizon", format!("must be positive, got {t_horizon}")));
    }
    let dt = h * h;
    let n_steps = (t_horizon / dt).ceil() as usize;
    let grid = TimeGrid::new(0.0, dt, n_steps)?;
    let mut rng = rng_from_seed(seed);
    let mut k: u64 = 0;
    let mut x = Vec::with_capacity(grid.len());
    let mut at_zero = Vec::with_capacity(grid.len());
    x.push(0.0);
    at_zero.push(true);
    for _ in 0..n_steps {
        let u: f64 = rng.random();
        if k == 0 {
            if u < q {
                k = 1;
            }
        } else if u < 0.5 {
            k += 1;
        } else {
            k -= 1;
        }
        x.push(k as f64 * h);
        at_zero.push(k == 0);
    }
    Ok(StickyPath {
        grid,
        x,
        at_zero,
        driver: None,
        source_seed: seed,
        split: None,
    })
}
