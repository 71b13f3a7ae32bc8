//! The Wiener flow of kernels driven by one Brownian path.
//!
//! `phi` is the flow of maps "follow `x + W` until it hits zero, then follow
//! the reflected increment"; the kernel `K_{s,t}(x, .)` is a Dirac mass at
//! `phi_{s,t}(x)` before the hit and the law of `(phi_{s,t}(x) - T)^+` with
//! `T ~ Exp(2 theta)` after it. [`g_transform`] computes the expectation
//! under that sticky law in closed form.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::Exp;

use crate::error::{Error, Result};
use crate::paths::{check_order, hitting_index, BrownianPath};
use crate::quad::gl32;
use crate::rng::rng_from_seed;

/// Value and first two derivatives at a point.
pub type Jet = [f64; 3];

/// A function on `[0, inf)` with analytic first and second derivatives.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    jet: Arc<dyn Fn(f64) -> Jet + Send + Sync>,
    in_c0: bool,
    in_s: bool,
    da_theta: Option<f64>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("in_c0", &self.in_c0)
            .field("in_s", &self.in_s)
            .field("da_theta", &self.da_theta)
            .finish()
    }
}

const FAR: f64 = 50.0;
const C0_TOL: f64 = 1e-6;
const DA_TOL: f64 = 1e-8;

impl TestFunction {
    /// Wraps a jet closure; membership in `C_0` and `S` is checked numerically.
    pub fn new<F>(name: impl Into<String>, jet: F) -> Self
    where
        F: Fn(f64) -> Jet + Send + Sync + 'static,
    {
        let far = jet(FAR);
        let at0 = jet(0.0);
        let in_c0 = far[0].abs() <= C0_TOL;
        let in_s = in_c0 && at0.iter().all(|v| v.is_finite());
        Self {
            name: name.into(),
            jet: Arc::new(jet),
            in_c0,
            in_s,
            da_theta: None,
        }
    }

    /// Marks the function as satisfying `f''(0+) = 2 theta f'(0+)` after checking it.
    pub fn with_da(mut self, theta: f64) -> Result<Self> {
        let [_, d1, d2] = self.jet(0.0);
        let gap = (d2 - 2.0 * theta * d1).abs();
        if gap > DA_TOL * (1.0 + d2.abs()) {
            return Err(Error::FunctionClass {
                name: self.name.clone(),
                class: "D(A)",
                detail: format!("f''(0) - 2 theta f'(0) = {gap:e} at theta = {theta}"),
            });
        }
        if !self.in_c0 {
            return Err(Error::FunctionClass {
                name: self.name.clone(),
                class: "D(A)",
                detail: format!("|f({FAR})| > {C0_TOL}"),
            });
        }
        self.da_theta = Some(theta);
        Ok(self)
    }

    /// `f(y) = c`.
    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| [c, 0.0, 0.0])
    }

    /// `f(y) = (a + b y + c y^2) exp(-rate y)`.
    pub fn exp_poly(a: f64, b: f64, c: f64, rate: f64) -> Self {
        Self::new(format!("({a}+{b}y+{c}y^2)e^(-{rate}y)"), move |y| {
            let e = (-rate * y).exp();
            let p = a + b * y + c * y * y;
            let dp = b + 2.0 * c * y;
            let ddp = 2.0 * c;
            [
                p * e,
                (dp - rate * p) * e,
                (ddp - 2.0 * rate * dp + rate * rate * p) * e,
            ]
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn jet(&self, y: f64) -> Jet {
        (self.jet)(y)
    }

    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        self.jet(y)[0]
    }

    #[inline]
    pub fn d1(&self, y: f64) -> f64 {
        self.jet(y)[1]
    }

    #[inline]
    pub fn d2(&self, y: f64) -> f64 {
        self.jet(y)[2]
    }

    pub fn in_c0(&self) -> bool {
        self.in_c0
    }

    pub fn in_s(&self) -> bool {
        self.in_s
    }

    /// Stickiness for which the boundary condition was verified.
    pub fn da_theta(&self) -> Option<f64> {
        self.da_theta
    }

    pub fn in_da(&self, theta: f64) -> bool {
        self.da_theta.is_some_and(|t| (t - theta).abs() <= 1e-12 * t.max(1.0))
    }
}

/// `f(y) = (a + b y + c y^2) e^{-y}` in `D(A)`; requires `2c - 2b + a = 2 theta (b - a)`.
pub fn make_da_function(a: f64, b: f64, c: f64, theta: f64) -> Result<TestFunction> {
    let lhs = 2.0 * c - 2.0 * b + a;
    let rhs = 2.0 * theta * (b - a);
    if (lhs - rhs).abs() > 1e-12 * (1.0 + lhs.abs().max(rhs.abs())) {
        return Err(Error::FunctionClass {
            name: format!("({a}+{b}y+{c}y^2)e^-y"),
            class: "D(A)",
            detail: format!("2c - 2b + a = {lhs} but 2 theta (b - a) = {rhs}"),
        });
    }
    TestFunction::exp_poly(a, b, c, 1.0).with_da(theta)
}

/// Solves the boundary constraint for `c` given `a`, `b`.
pub fn da_coefficient_c(a: f64, b: f64, theta: f64) -> f64 {
    (2.0 * theta * (b - a) + 2.0 * b - a) / 2.0
}

/// `int_0^y h(u) e^{-lambda (y - u)} du` by composite 32-point Gauss–Legendre
/// with panels no wider than `1/lambda` (and at most 1).
pub fn damped_integral<H: Fn(f64) -> f64>(h: H, lambda: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let width = (1.0 / lambda).min(1.0);
    let panels = (y / width).ceil().max(1.0) as usize;
    gl32().composite(|u| h(u) * (-lambda * (y - u)).exp(), 0.0, y, panels)
}

/// `G(y) = h0 e^{-lambda y} + lambda int_0^y h(u) e^{-lambda(y-u)} du`,
/// the expectation of `h((y - T)^+)` when `h(0) = h0`.
pub fn g_transform_parts<H: Fn(f64) -> f64>(h0: f64, h: H, lambda: f64, y: f64) -> f64 {
    h0 * (-lambda * y).exp() + lambda * damped_integral(h, lambda, y)
}

fn check_y(y: f64) -> Result<()> {
    if !(y >= 0.0) {
        return Err(Error::param("y", format!("must be >= 0, got {y}")));
    }
    Ok(())
}

/// `G_f(y) = E[f((y - T)^+)]`, `T ~ Exp(2 theta)`.
///
/// Integrated by parts, `G_f(y) = f(y) - int_0^y f'(u) e^{-lambda(y-u)} du`,
/// which is exact for constants and avoids cancellation for large `lambda y`.
pub fn g_transform(f: &TestFunction, theta: f64, y: f64) -> Result<f64> {
    check_y(y)?;
    let lambda = 2.0 * theta;
    Ok(f.value(y) - damped_integral(|u| f.d1(u), lambda, y))
}

/// `(G_f)'(y) = -lambda f(0) e^{-lambda y} - lambda^2 I(y) + lambda f(y)`,
/// `I(y) = int_0^y f(u) e^{-lambda(y-u)} du`.
pub fn g_transform_prime(f: &TestFunction, theta: f64, y: f64) -> Result<f64> {
    check_y(y)?;
    let lambda = 2.0 * theta;
    let i = damped_integral(|u| f.value(u), lambda, y);
    Ok(-lambda * f.value(0.0) * (-lambda * y).exp() - lambda * lambda * i + lambda * f.value(y))
}

/// `(G_f)''(y) = lambda^2 f(0) e^{-lambda y} + lambda^3 I(y) - lambda^2 f(y) + lambda f'(y)`.
pub fn g_transform_second(f: &TestFunction, theta: f64, y: f64) -> Result<f64> {
    check_y(y)?;
    let lambda = 2.0 * theta;
    let i = damped_integral(|u| f.value(u), lambda, y);
    let l2 = lambda * lambda;
    Ok(l2 * f.value(0.0) * (-lambda * y).exp() + l2 * lambda * i - l2 * f.value(y) + lambda * f.d1(y))
}

/// `G_{f' 1_(0,inf)}(y)`: the transform of the derivative with value 0 at the origin.
pub fn g_of_derivative(f: &TestFunction, theta: f64, y: f64) -> f64 {
    g_transform_parts(0.0, |u| f.d1(u), 2.0 * theta, y)
}

/// `G_{f''}(y)`.
pub fn g_of_second_derivative(f: &TestFunction, theta: f64, y: f64) -> f64 {
    g_transform_parts(f.d2(0.0), |u| f.d2(u), 2.0 * theta, y)
}

/// Random measure `K_{s,t}(x, .)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelMeasure {
    /// Point mass at `z`.
    Dirac(f64),
    /// Law of `(z - T)^+`, `T ~ Exp(2 theta)`: atom `e^{-2 theta z}` at 0 plus
    /// density `2 theta e^{-2 theta (z - y)}` on `(0, z)`.
    Sticky { z: f64, theta: f64 },
}

impl KernelMeasure {
    /// Mass of the atom at zero.
    pub fn atom_at_zero(&self) -> f64 {
        match *self {
            KernelMeasure::Dirac(z) => f64::from(u8::from(z == 0.0)),
            KernelMeasure::Sticky { z, theta } => (-2.0 * theta * z).exp(),
        }
    }

    /// Total mass: atom plus the density integrated by quadrature.
    pub fn total_mass(&self) -> f64 {
        match *self {
            KernelMeasure::Dirac(_) => 1.0,
            KernelMeasure::Sticky { z, theta } => {
                self.atom_at_zero() + 2.0 * theta * damped_integral(|_| 1.0, 2.0 * theta, z)
            }
        }
    }
}

/// Hitting index of zero for `x + W - W_s`; see [`hitting_index`].
pub fn tau(path: &BrownianPath, s_index: usize, x: f64) -> Option<usize> {
    hitting_index(path, s_index, x)
}

fn min_on(path: &BrownianPath, s: usize, t: usize) -> f64 {
    path.values()[s..=t].iter().copied().fold(f64::INFINITY, f64::min)
}

/// Whether the hit has happened by `t_index`, i.e. `tau_s(x) <= t_index`, for `t > s`.
fn hit_by(path: &BrownianPath, s: usize, t: usize, x: f64) -> bool {
    if x <= 0.0 {
        return true;
    }
    min_on(path, s, t) <= path.value(s) - x
}

/// Flow of maps `phi_{s,t}(x)`.
///
/// Before the hit it is `x + W_t - W_s`; from the hitting index on it is the
/// reflected increment `W_t - min_{s<=u<=t} W_u`.
pub fn phi(path: &BrownianPath, s_index: usize, t_index: usize, x: f64) -> Result<f64> {
    check_order(path, s_index, t_index)?;
    if t_index == s_index {
        return Ok(x);
    }
    let w = path.values();
    if hit_by(path, s_index, t_index, x) {
        Ok(w[t_index] - min_on(path, s_index, t_index))
    } else {
        Ok(x + (w[t_index] - w[s_index]))
    }
}

/// `K_{s,t}(x, .)`.
pub fn kernel_measure(
    path: &BrownianPath,
    s_index: usize,
    t_index: usize,
    x: f64,
    theta: f64,
) -> Result<KernelMeasure> {
    check_order(path, s_index, t_index)?;
    if t_index == s_index {
        return Ok(KernelMeasure::Dirac(x));
    }
    let z = phi(path, s_index, t_index, x)?;
    if hit_by(path, s_index, t_index, x) {
        Ok(KernelMeasure::Sticky { z, theta })
    } else {
        Ok(KernelMeasure::Dirac(z))
    }
}

/// `int f dK`.
pub fn kernel_apply(k: &KernelMeasure, f: &TestFunction) -> f64 {
    match *k {
        KernelMeasure::Dirac(z) => f.value(z),
        KernelMeasure::Sticky { z, theta } => g_transform_parts(f.value(0.0), |u| f.value(u), 2.0 * theta, z),
    }
}

/// One draw from `K`.
pub fn kernel_sample(k: &KernelMeasure, seed: u64) -> f64 {
    match *k {
        KernelMeasure::Dirac(z) => z,
        KernelMeasure::Sticky { z, theta } => {
            let t: f64 = rng_from_seed(seed).sample(Exp::new(2.0 * theta).expect("theta > 0"));
            (z - t).max(0.0)
        }
    }
}

/// Both sides of `K_{s,u} f(x) = (K_{s,t} K_{t,u} f)(x)`.
///
/// When `K_{s,t}(x)` is sticky the outer integral is split where `y -> K_{t,u} f(y)`
/// switches branches: for `y <= W_t - min_{[t,u]} W` the walk started at `y` has
/// hit zero by `u` and the inner value is the constant `G_f(W^+_{t,u})`.
pub fn kernel_compose(
    path: &BrownianPath,
    s: usize,
    t: usize,
    u: usize,
    x: f64,
    theta: f64,
    f: &TestFunction,
) -> Result<(f64, f64)> {
    if !(s <= t && t <= u) {
        return Err(Error::IndexOrder(format!("need s <= t <= u, got {s}, {t}, {u}")));
    }
    check_order(path, s, u)?;
    let lhs = kernel_apply(&kernel_measure(path, s, u, x, theta)?, f);
    let inner = |y: f64| -> f64 { kernel_apply(&kernel_measure(path, t, u, y, theta).expect("indices checked"), f) };
    let rhs = match kernel_measure(path, s, t, x, theta)? {
        KernelMeasure::Dirac(y) => inner(y),
        KernelMeasure::Sticky { z, .. } => {
            let lambda = 2.0 * theta;
            let threshold = if u == t {
                0.0
            } else {
                path.value(t) - min_on(path, t, u)
            };
            let hit_value = inner(0.0);
            let split = threshold.min(z);
            // Atom at 0 plus the density over (0, split], where the inner kernel is constant.
            let flat = hit_value * (-lambda * (z - split)).exp();
            let smooth = if split < z {
                let drift = path.value(u) - path.value(t);
                let width = (1.0 / lambda).min(1.0);
                let panels = ((z - split) / width).ceil().max(1.0) as usize;
                lambda * gl32().composite(|y| f.value(y + drift) * (-lambda * (z - y)).exp(), split, z, panels)
            } else {
                0.0
            };
            flat + smooth
        }
    };
    Ok((lhs, rhs))
}

/// Residual of the flow equation on one path, started at time 0 from `x`:
///
/// `K_{0,t} f(x) - f(x) - sum_u K_{0,u}(f' 1_(0,inf))(x) dW_u - 1/2 sum_u K_{0,u} f''(x) du`
///
/// with left-point sums over grid steps `0..t_index`.
pub fn sde_residual(path: &BrownianPath, x: f64, theta: f64, f: &TestFunction, t_index: usize) -> Result<f64> {
    if !f.in_da(theta) {
        return Err(Error::FunctionClass {
            name: f.name().to_string(),
            class: "D(A)",
            detail: format!("flow equation needs the boundary condition at theta = {theta}"),
        });
    }
    check_order(path, 0, t_index)?;
    let dt = path.grid().dt();
    let w = path.values();
    let hit = tau(path, 0, x);
    let mut run_min = w[0];
    let mut ito = 0.0;
    let mut drift = 0.0;
    for k in 0..t_index {
        run_min = run_min.min(w[k]);
        let dw = w[k + 1] - w[k];
        let (first, second) = match hit {
            Some(h) if k >= h => {
                let z = w[k] - run_min;
                (g_of_derivative(f, theta, z), g_of_second_derivative(f, theta, z))
            }
            _ => {
                let z = x + (w[k] - w[0]);
                let d1 = if z > 0.0 { f.d1(z) } else { 0.0 };
                (d1, f.d2(z))
            }
        };
        ito += first * dw;
        drift += second * dt;
    }
    let end = kernel_apply(&kernel_measure(path, 0, t_index, x, theta)?, f);
    Ok(end - f.value(x) - ito - 0.5 * drift)
}

/// `(max_y |G_{f'1}(y) - (G_f)'(y)|, max_y |G_{f''}(y) - (G_f)''(y)|)` over `y_grid`.
pub fn g_intertwine_check(f: &TestFunction, theta: f64, y_grid: &[f64]) -> Result<(f64, f64)> {
    let mut e1: f64 = 0.0;
    let mut e2: f64 = 0.0;
    for &y in y_grid {
        e1 = e1.max((g_of_derivative(f, theta, y) - g_transform_prime(f, theta, y)?).abs());
        e2 = e2.max((g_of_second_derivative(f, theta, y) - g_transform_second(f, theta, y)?).abs());
    }
    Ok((e1, e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{sample_brownian, TimeGrid};

    #[test]
    fn da_constructor_cases() {
        let zero = make_da_function(0.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(zero.value(1.3), 0.0);
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        let [_, d1, d2] = f.jet(0.0);
        assert_eq!(d1, 0.0);
        assert_eq!(d2, 0.0);
        assert!(make_da_function(1.0, 1.0, 0.6, 1.0).is_err());
        assert_eq!(da_coefficient_c(1.0, 1.0, 1.0), 0.5);
    }

    #[test]
    fn boundary_condition_by_finite_differences() {
        let theta = 1.3;
        let c = da_coefficient_c(0.4, -0.7, theta);
        let f = make_da_function(0.4, -0.7, c, theta).unwrap();
        // Central differences of the analytic continuation through 0.
        let h = 1e-4;
        let v = |y: f64| f.value(y);
        let d1 = (v(h) - v(-h)) / (2.0 * h);
        let d2 = (v(h) - 2.0 * v(0.0) + v(-h)) / (h * h);
        assert!((d2 - 2.0 * theta * d1).abs() < 1e-6, "{d2} vs {}", 2.0 * theta * d1);
        assert!((d1 - f.d1(0.0)).abs() < 1e-7);
    }

    #[test]
    fn g_transform_hand_values() {
        let one = TestFunction::constant(1.0);
        for y in [0.0, 0.3, 2.0, 17.0] {
            assert!((g_transform(&one, 1.7, y).unwrap() - 1.0).abs() < 1e-12);
            assert!(g_transform_prime(&one, 1.7, y).unwrap().abs() < 1e-12);
        }
        let f = TestFunction::exp_poly(1.0, 0.0, 0.0, 1.0);
        assert_eq!(g_transform(&f, 2.0, 0.0).unwrap(), 1.0);
        let want = 2.0 * (-1.0f64).exp() - (-2.0f64).exp();
        assert!((g_transform(&f, 1.0, 1.0).unwrap() - want).abs() < 1e-12);
        assert!(g_transform(&f, 1.0, -0.1).is_err());
    }

    #[test]
    fn g_prime_vanishes_at_origin_and_matches_fd() {
        let f = TestFunction::exp_poly(0.3, 1.1, -0.4, 0.8);
        assert!(g_transform_prime(&f, 1.3, 0.0).unwrap().abs() < 1e-15);
        let h = 1e-5;
        let fd = (g_transform(&f, 1.3, 0.7 + h).unwrap() - g_transform(&f, 1.3, 0.7 - h).unwrap()) / (2.0 * h);
        assert!((fd - g_transform_prime(&f, 1.3, 0.7).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn g_transform_stable_for_large_lambda() {
        let f = TestFunction::exp_poly(1.0, 0.5, 0.0, 0.5);
        let v = g_transform(&f, 200.0, 40.0).unwrap();
        assert!(v.is_finite());
        // For huge lambda, G_f(y) ~ f(y) - f'(y)/lambda.
        let approx = f.value(40.0) - f.d1(40.0) / 400.0;
        assert!((v - approx).abs() < 1e-8);
    }

    #[test]
    fn sticky_measure_total_mass() {
        for &(z, th) in &[(0.0, 1.0), (0.4, 0.5), (3.0, 2.0), (12.0, 10.0)] {
            let k = KernelMeasure::Sticky { z, theta: th };
            assert!((k.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_simple_cases() {
        let p = sample_brownian(TimeGrid::uniform(1.0, 100).unwrap(), 17);
        assert_eq!(phi(&p, 10, 10, 0.7).unwrap(), 0.7);
        for t in 11..100 {
            let want = p.value(t) - min_on(&p, 10, t);
            assert_eq!(phi(&p, 10, t, 0.0).unwrap(), want);
        }
        assert!(phi(&p, 10, 9, 0.0).is_err());
    }

    #[test]
    fn kernel_measure_simple_cases() {
        let p = sample_brownian(TimeGrid::uniform(1.0, 100).unwrap(), 19);
        assert_eq!(kernel_measure(&p, 5, 5, 0.3, 1.0).unwrap(), KernelMeasure::Dirac(0.3));
        match kernel_measure(&p, 5, 50, 0.0, 1.0).unwrap() {
            KernelMeasure::Sticky { z, .. } => assert_eq!(z, p.value(50) - min_on(&p, 5, 50)),
            k => panic!("expected sticky, got {k:?}"),
        }
        assert_eq!(
            kernel_measure(&p, 5, 50, 100.0, 1.0).unwrap(),
            KernelMeasure::Dirac(100.0 + p.value(50) - p.value(5))
        );
    }

    #[test]
    fn kernel_apply_simple_cases() {
        let f = TestFunction::exp_poly(1.0, 2.0, 0.0, 1.5);
        assert_eq!(kernel_apply(&KernelMeasure::Dirac(0.8), &f), f.value(0.8));
        assert_eq!(
            kernel_apply(&KernelMeasure::Sticky { z: 0.0, theta: 1.0 }, &f),
            f.value(0.0)
        );
        assert_eq!(kernel_sample(&KernelMeasure::Sticky { z: 0.0, theta: 1.0 }, 3), 0.0);
        assert_eq!(kernel_sample(&KernelMeasure::Dirac(0.25), 3), 0.25);
    }

    #[test]
    fn kernel_after_hit_forgets_start() {
        let p = sample_brownian(TimeGrid::uniform(1.0, 400).unwrap(), 23);
        let x = 0.05;
        if let Some(h) = tau(&p, 0, x) {
            for t in (h.max(1))..=400 {
                assert_eq!(
                    kernel_measure(&p, 0, t, x, 1.0).unwrap(),
                    kernel_measure(&p, 0, t, 0.0, 1.0).unwrap()
                );
            }
        }
    }

    #[test]
    fn kernel_reads_only_its_window() {
        let g = TimeGrid::uniform(1.0, 60).unwrap();
        let a = sample_brownian(g, 1);
        let b = sample_brownian(g, 2);
        // b agrees with a on [20, 40] up to a constant shift.
        let shift = a.value(20) - b.value(20);
        let mixed: Vec<f64> = (0..=60)
            .map(|i| {
                if (20..=40).contains(&i) {
                    a.value(i)
                } else {
                    b.value(i) + shift
                }
            })
            .collect();
        let c = BrownianPath::from_values(g, mixed, 0).unwrap();
        for x in [0.0, 0.1, 0.5, 3.0] {
            assert_eq!(
                kernel_measure(&a, 20, 40, x, 1.0).unwrap(),
                kernel_measure(&c, 20, 40, x, 1.0).unwrap()
            );
        }
    }

    #[test]
    fn compose_identity_cases() {
        let p = sample_brownian(TimeGrid::uniform(1.0, 100).unwrap(), 29);
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        let (l, r) = kernel_compose(&p, 10, 40, 40, 0.2, 1.0, &f).unwrap();
        assert!((l - r).abs() < 1e-12);
        let (l, r) = kernel_compose(&p, 10, 40, 90, 50.0, 1.0, &f).unwrap();
        assert_eq!(l, r);
        assert!(kernel_compose(&p, 10, 50, 40, 0.0, 1.0, &f).is_err());
    }

    #[test]
    fn sde_residual_trivial_cases() {
        let p = sample_brownian(TimeGrid::uniform(1.0, 64).unwrap(), 31);
        let zero = make_da_function(0.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(sde_residual(&p, 0.3, 1.0, &zero, 64).unwrap(), 0.0);
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(sde_residual(&p, 0.3, 1.0, &f, 0).unwrap(), 0.0);
        let not_da = TestFunction::exp_poly(1.0, 0.0, 0.0, 1.0);
        assert!(sde_residual(&p, 0.3, 1.0, &not_da, 10).is_err());
        assert!(sde_residual(&p, 0.3, 2.0, &f, 10).is_err());
    }

    #[test]
    fn intertwining_zero_and_negative_control() {
        let ys: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let zero = make_da_function(0.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(g_intertwine_check(&zero, 1.0, &ys).unwrap(), (0.0, 0.0));
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        let (e1, e2) = g_intertwine_check(&f, 1.0, &ys).unwrap();
        assert!(e1 <= 1e-8 && e2 <= 1e-8, "{e1:e} {e2:e}");
        let bad = TestFunction::exp_poly(1.0, 0.0, 0.0, 1.0);
        let (_, e2) = g_intertwine_check(&bad, 1.0, &ys).unwrap();
        assert!(e2 >= 1e-2);
    }
}
