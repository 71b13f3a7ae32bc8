//! Brownian driving paths on uniform time grids.
//!
//! Path values are stored on a dyadic lattice of spacing `2^-40`. Sums and
//! differences of lattice values are exact in `f64` for every magnitude a
//! simulation can reach, so algebraic identities between increments
//! (telescoping, flow composition) hold bit for bit rather than up to rounding.

use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng, SeedSpace};

/// Spacing of the value lattice.
pub const LATTICE: f64 = 1.0 / (1u64 << 40) as f64;

/// Rounds `x` to the nearest lattice point.
#[inline]
pub fn snap(x: f64) -> f64 {
    (x * (1u64 << 40) as f64).round() * LATTICE
}

/// Uniform grid `t_i = t_start + i dt`, `i = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive and finite, got {dt}")));
        }
        if !(t_start >= 0.0 && t_start.is_finite()) {
            return Err(Error::param("t_start", format!("must be >= 0, got {t_start}")));
        }
        Ok(Self { t_start, dt, n_steps })
    }

    /// `n_steps` equal steps covering `[0, t_end]`.
    pub fn uniform(t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::param("n_steps", "must be >= 1 to cover a horizon"));
        }
        if !(t_end > 0.0) {
            return Err(Error::param("t_end", format!("must be positive, got {t_end}")));
        }
        Self::new(0.0, t_end / n_steps as f64, n_steps)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    /// Index of the grid point closest to `t`, clamped to the grid.
    pub fn nearest_index(&self, t: f64) -> usize {
        let x = ((t - self.t_start) / self.dt).round();
        (x.max(0.0) as usize).min(self.n_steps)
    }
}

/// One realization of the driving noise on a grid. `values[0] == 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    values: Vec<f64>,
    seed: u64,
}

impl BrownianPath {
    /// Wraps explicit values. They are snapped to the lattice and shifted so the path starts at 0.
    pub fn from_values(grid: TimeGrid, values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(
                "values",
                format!("expected {} points, got {}", grid.len(), values.len()),
            ));
        }
        let v0 = snap(values[0]);
        let values = values.into_iter().map(|v| snap(v) - v0).collect();
        Ok(Self { grid, values, seed })
    }

    /// Builds a path from per-step increments (snapped before summation).
    pub fn from_increments(grid: TimeGrid, increments: &[f64], seed: u64) -> Result<Self> {
        if increments.len() != grid.n_steps() {
            return Err(Error::param(
                "increments",
                format!("expected {} steps, got {}", grid.n_steps(), increments.len()),
            ));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        values.push(acc);
        for &dw in increments {
            acc += snap(dw);
            values.push(acc);
        }
        Ok(Self { grid, values, seed })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    /// Every `stride`-th point, as a path on the coarser grid.
    pub fn subsample(&self, stride: usize) -> Result<BrownianPath> {
        if stride == 0 || !self.grid.n_steps.is_multiple_of(stride) {
            return Err(Error::param(
                "stride",
                format!("must divide n_steps = {}", self.grid.n_steps),
            ));
        }
        let grid = TimeGrid::new(
            self.grid.t_start,
            self.grid.dt * stride as f64,
            self.grid.n_steps / stride,
        )?;
        let values = self.values.iter().step_by(stride).copied().collect();
        Ok(BrownianPath {
            grid,
            values,
            seed: self.seed,
        })
    }

    /// Writes `t,W` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,W")?;
        for (t, w) in self.grid.times().zip(&self.values) {
            writeln!(out, "{t},{w}")?;
        }
        Ok(())
    }
}

/// Reflected path `R = W + L` with `L` the running-minimum local time.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectedPath {
    grid: TimeGrid,
    r: Vec<f64>,
    l: Vec<f64>,
    step_min: Option<Vec<f64>>,
}

impl ReflectedPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    /// Minimum of `W` inside each step, when the path was reflected with bridge minima.
    pub fn step_minima(&self) -> Option<&[f64]> {
        self.step_min.as_deref()
    }
}

/// Brownian path with i.i.d. `N(0, dt)` increments, deterministic in `seed`.
pub fn sample_brownian(grid: TimeGrid, seed: u64) -> BrownianPath {
    let mut rng = rng_from_seed(seed);
    sample_brownian_with(grid, seed, &mut rng)
}

/// As [`sample_brownian`], drawing from a caller-provided stream.
pub fn sample_brownian_with(grid: TimeGrid, seed: u64, rng: &mut Rng) -> BrownianPath {
    let sd = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    values.push(acc);
    for _ in 0..grid.n_steps() {
        let z: f64 = rng.sample(StandardNormal);
        acc += snap(sd * z);
        values.push(acc);
    }
    BrownianPath { grid, values, seed }
}

/// Lévy construction: `R_i = W_i - min_{j<=i} W_j`, `L_i = -min_{j<=i} min(W_j, 0)`.
pub fn reflect(path: &BrownianPath) -> ReflectedPath {
    let mut r = Vec::with_capacity(path.len());
    let mut l = Vec::with_capacity(path.len());
    let mut run_min = 0.0f64;
    for &w in &path.values {
        run_min = run_min.min(w);
        r.push(w - run_min);
        l.push(-run_min);
    }
    ReflectedPath {
        grid: path.grid,
        r,
        l,
        step_min: None,
    }
}

/// Exact draw of `min W` over each step given the grid values: for a Brownian
/// bridge from `a` to `b` over `dt`, `(a + b - sqrt((a - b)^2 - 2 dt ln U)) / 2`.
pub fn bridge_minima(path: &BrownianPath, seed: u64) -> Vec<f64> {
    let mut rng = SeedSpace::new(seed).stream("bridge-min", 0);
    let dt = path.grid.dt;
    path.values
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let u: f64 = 1.0 - rng.random::<f64>();
            let m = 0.5 * (a + b - ((a - b) * (a - b) - 2.0 * dt * u.ln()).sqrt());
            snap(m).min(a).min(b)
        })
        .collect()
}

/// [`reflect`] using the continuous-path running minimum: `L` at each grid point
/// includes minima reached between grid points, drawn by [`bridge_minima`].
pub fn reflect_bridged(path: &BrownianPath, seed: u64) -> ReflectedPath {
    let mins = bridge_minima(path, seed);
    let mut r = Vec::with_capacity(path.len());
    let mut l = Vec::with_capacity(path.len());
    let mut run_min = 0.0f64.min(path.values[0]);
    r.push(path.values[0] - run_min);
    l.push(-run_min);
    for (&w, &m) in path.values[1..].iter().zip(&mins) {
        run_min = run_min.min(m);
        r.push(w - run_min);
        l.push(-run_min);
    }
    ReflectedPath {
        grid: path.grid,
        r,
        l,
        step_min: Some(mins),
    }
}

/// `W[t_index] - W[s_index]`.
pub fn shifted_increment(path: &BrownianPath, s_index: usize, t_index: usize) -> Result<f64> {
    check_order(path, s_index, t_index)?;
    Ok(path.values[t_index] - path.values[s_index])
}

pub(crate) fn check_order(path: &BrownianPath, s: usize, t: usize) -> Result<()> {
    if s > t {
        return Err(Error::IndexOrder(format!("s_index {s} > t_index {t}")));
    }
    if t >= path.len() {
        return Err(Error::IndexOrder(format!(
            "t_index {t} beyond last grid index {}",
            path.len() - 1
        )));
    }
    Ok(())
}

/// First grid index `u >= s_index` with `x + W[u] - W[s_index] <= 0`.
///
/// Resolved at grid resolution; `x <= 0` returns `s_index`.
pub fn hitting_index(path: &BrownianPath, s_index: usize, x: f64) -> Option<usize> {
    if x <= 0.0 {
        return Some(s_index);
    }
    let level = path.values[s_index] - x;
    path.values[s_index..]
        .iter()
        .position(|&w| w <= level)
        .map(|k| s_index + k)
}

/// [`hitting_index`] with a Brownian-bridge crossing correction: a step whose
/// endpoints `a, b` (distances above zero) are both positive is still counted as
/// a hit with probability `exp(-2ab/dt)`. The returned index is the end of the
/// crossing step.
pub fn hitting_index_bridge(path: &BrownianPath, s_index: usize, x: f64, seed: u64) -> Option<usize> {
    if x <= 0.0 {
        return Some(s_index);
    }
    let mut rng = rng_from_seed(seed);
    let dt = path.grid.dt;
    let level = path.values[s_index] - x;
    let mut prev = x;
    for (k, &w) in path.values[s_index..].iter().enumerate().skip(1) {
        let cur = w - level;
        if cur <= 0.0 {
            return Some(s_index + k);
        }
        let u: f64 = rng.random();
        if u < (-2.0 * prev * cur / dt).exp() {
            return Some(s_index + k);
        }
        prev = cur;
    }
    None
}

/// `W_t - min_{s<=u<=t} W_u` on the grid.
pub fn reflected_increment(path: &BrownianPath, s_index: usize, t_index: usize) -> f64 {
    let min = path.values[s_index..=t_index]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    path.values[t_index] - min
}

/// Refines the grid by `factor`, filling each coarse step with a Brownian bridge.
pub fn refine(path: &BrownianPath, factor: usize, seed: u64) -> Result<BrownianPath> {
    if factor < 2 {
        return Err(Error::param("factor", format!("must be >= 2, got {factor}")));
    }
    let grid = TimeGrid::new(
        path.grid.t_start,
        path.grid.dt / factor as f64,
        path.grid.n_steps * factor,
    )?;
    let h = grid.dt;
    let mut rng = rng_from_seed(seed);
    let mut values = Vec::with_capacity(grid.len());
    values.push(path.values[0]);
    for w in path.values.windows(2) {
        let end = w[1];
        let mut cur = w[0];
        for k in 1..factor {
            let remaining = (factor - k + 1) as f64 * h;
            let mean = cur + (end - cur) * h / remaining;
            let var = h * (remaining - h) / remaining;
            let z: f64 = rng.sample(StandardNormal);
            cur = snap(mean + var.sqrt() * z);
            values.push(cur);
        }
        values.push(end);
    }
    Ok(BrownianPath { grid, values, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::uniform(1.0, n).unwrap()
    }

    fn from(vals: &[f64]) -> BrownianPath {
        let g = TimeGrid::new(0.0, 1.0, vals.len() - 1).unwrap();
        BrownianPath::from_values(g, vals.to_vec(), 0).unwrap()
    }

    #[test]
    fn invalid_grid_rejected() {
        assert!(TimeGrid::new(0.0, 0.0, 3).is_err());
        assert!(TimeGrid::new(0.0, -1.0, 3).is_err());
    }

    #[test]
    fn empty_grid_gives_single_point() {
        let g = TimeGrid::new(0.0, 0.1, 0).unwrap();
        let p = sample_brownian(g, 1);
        assert_eq!(p.values(), &[0.0]);
    }

    #[test]
    fn deterministic_in_seed() {
        let a = sample_brownian(grid(100), 42);
        let b = sample_brownian(grid(100), 42);
        let c = sample_brownian(grid(100), 43);
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn reflect_hand_cases() {
        let r = reflect(&from(&[0.0, 1.0, 2.0]));
        assert_eq!(r.r(), &[0.0, 1.0, 2.0]);
        assert_eq!(r.l(), &[0.0, 0.0, 0.0]);
        let r = reflect(&from(&[0.0, -1.0, -2.0]));
        assert_eq!(r.r(), &[0.0, 0.0, 0.0]);
        assert_eq!(r.l(), &[0.0, 1.0, 2.0]);
        let r = reflect(&from(&[0.0, -1.0, 1.0]));
        assert_eq!(r.r(), &[0.0, 0.0, 2.0]);
        assert_eq!(r.l(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn shifted_increment_cases() {
        let p = sample_brownian(grid(50), 3);
        assert_eq!(shifted_increment(&p, 7, 7).unwrap(), 0.0);
        assert!(shifted_increment(&p, 8, 7).is_err());
        let tele: f64 = (10..30).map(|i| shifted_increment(&p, i, i + 1).unwrap()).sum();
        assert_eq!(tele, shifted_increment(&p, 10, 30).unwrap());
        assert_eq!(shifted_increment(&p, 5, 40).unwrap(), p.value(40) - p.value(5));
    }

    #[test]
    fn hitting_simple_cases() {
        let p = sample_brownian(grid(10), 9);
        assert_eq!(hitting_index(&p, 3, 0.0), Some(3));
        let small = from(&[0.0, 0.05, -0.02, 0.08, 0.0, -0.09, 0.01, 0.03, -0.05, 0.02, 0.0]);
        assert_eq!(hitting_index(&small, 0, 5.0), None);
    }

    #[test]
    fn bridge_correction_only_adds_earlier_hits() {
        for seed in 0..50 {
            let p = sample_brownian(grid(200), seed);
            let plain = hitting_index(&p, 0, 0.3);
            let bridged = hitting_index_bridge(&p, 0, 0.3, seed + 1000);
            match (plain, bridged) {
                (Some(a), Some(b)) => assert!(b <= a),
                (Some(_), None) => panic!("bridge lost a grid hit"),
                _ => {}
            }
        }
    }

    #[test]
    fn refine_keeps_coarse_points() {
        let p = sample_brownian(grid(16), 5);
        let f = refine(&p, 4, 6).unwrap();
        assert_eq!(f.grid().n_steps(), 64);
        for i in 0..=16 {
            assert_eq!(f.value(4 * i), p.value(i));
        }
        assert_eq!(f, refine(&p, 4, 6).unwrap());
        assert!(refine(&p, 1, 6).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = sample_brownian(grid(3), 1);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,W\n0,0\n"));
        assert_eq!(text.lines().count(), 5);
    }

    proptest! {
        #[test]
        fn reflected_path_invariants(seed in any::<u64>(), n in 1usize..300) {
            let p = sample_brownian(grid(n), seed);
            let rp = reflect(&p);
            for i in 0..p.len() {
                prop_assert!(rp.r()[i] >= 0.0);
                prop_assert_eq!(rp.r()[i], p.value(i) + rp.l()[i]);
                if i > 0 {
                    prop_assert!(rp.l()[i] >= rp.l()[i - 1]);
                    if rp.l()[i] > rp.l()[i - 1] {
                        prop_assert!(rp.r()[i] == 0.0 || rp.r()[i - 1] == 0.0);
                    }
                }
            }
        }

        #[test]
        fn bridged_reflection_dominates_grid(seed in any::<u64>(), n in 1usize..300) {
            let p = sample_brownian(grid(n), seed);
            let (grid_rp, rp) = (reflect(&p), reflect_bridged(&p, seed ^ 1));
            let mins = rp.step_minima().unwrap();
            prop_assert_eq!(mins.len(), n);
            for i in 0..p.len() {
                prop_assert!(rp.r()[i] >= 0.0);
                prop_assert!(rp.l()[i] >= grid_rp.l()[i]);
                prop_assert_eq!(rp.r()[i], p.value(i) + rp.l()[i]);
                if i > 0 {
                    prop_assert!(mins[i - 1] <= p.value(i - 1).min(p.value(i)));
                    prop_assert!(rp.l()[i] >= rp.l()[i - 1]);
                }
            }
            let again = reflect_bridged(&p, seed ^ 1);
            prop_assert_eq!(again.l(), rp.l());
        }

        #[test]
        fn hitting_matches_linear_scan(seed in any::<u64>(), s in 0usize..100, x in 0.0f64..1.5) {
            let p = sample_brownian(grid(100), seed);
            let oracle = (s..p.len()).find(|&u| x + (p.value(u) - p.value(s)) <= 0.0);
            prop_assert_eq!(hitting_index(&p, s, x), oracle);
        }
    }
}
