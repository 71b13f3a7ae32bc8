//! Closed-form transition semigroup of sticky Brownian motion.
//!
//! For `t > 0`, `P_t(x, dy) = [p_t(y - x) - p_t(x + y) + 2 g_t(x + y)] dy + g_t(x)/theta delta_0(dy)`
//! with `p_t` the centred Gaussian density of variance `t` and
//! `g_t(x) = theta exp(2 theta x + 2 theta^2 t) erfc(x / sqrt(2t) + theta sqrt(2t))`.
//!
//! The exponential prefactor overflows long before the product does, so `g`
//! is evaluated as `theta erfcx(z) exp(-x^2 / 2t)` with
//! `z = x / sqrt(2t) + theta sqrt(2t)`, using `z^2 - x^2/2t = 2 theta x + 2 theta^2 t`.
//!
//! Integrals against the density are truncated to `[x - 12 sqrt(t), x + 12 sqrt(t)]`
//! (clipped at 0). Every term of the density is bounded there by a Gaussian
//! factor `exp(-72)` or smaller times an `O(1)` constant, well under `1e-14`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::kernel_flow::TestFunction;
use crate::quad::gl32;
use crate::special::{erfcx, gauss_pdf};

/// Truncation half-width in units of `sqrt(t)`.
pub const TRUNCATION_SIGMAS: f64 = 12.0;
/// Absolute stopping tolerance between successive quadrature refinements.
pub const QUAD_TOL: f64 = 1e-12;

/// Stickiness and time, both strictly positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemigroupParams {
    theta: f64,
    t: f64,
}

impl SemigroupParams {
    pub fn new(theta: f64, t: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::param("theta", format!("must be positive, got {theta}")));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::param("t", format!("must be positive, got {t}")));
        }
        Ok(Self { theta, t })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn t(&self) -> f64 {
        self.t
    }
}

/// `(g, g', g'')` at `x >= 0`.
pub fn g_jet(theta: f64, t: f64, x: f64) -> [f64; 3] {
    let s2t = (2.0 * t).sqrt();
    let z = x / s2t + theta * s2t;
    let gauss = (-x * x / (2.0 * t)).exp();
    let g = theta * erfcx(z) * gauss;
    let g1 = 2.0 * theta * g - theta * (2.0 / (PI * t)).sqrt() * gauss;
    let g2 = 2.0 * theta * g1 + 2.0 * theta * x / (2.0 * PI * t * t * t).sqrt() * gauss;
    [g, g1, g2]
}

/// `g_t(x)`.
pub fn g_fn(theta: f64, t: f64, x: f64) -> Result<f64> {
    let p = SemigroupParams::new(theta, t)?;
    if !(x >= 0.0) {
        return Err(Error::param("x", format!("must be >= 0, got {x}")));
    }
    Ok(g_jet(p.theta, p.t, x)[0])
}

/// `(p_t(y), p_t'(y), p_t''(y))` for the centred Gaussian density of variance `t`.
#[inline]
fn heat_jet(t: f64, y: f64) -> [f64; 3] {
    let p = gauss_pdf(y, t);
    [p, -y / t * p, (y * y / (t * t) - 1.0 / t) * p]
}

/// Sticky transition kernel at fixed `(theta, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionKernel {
    params: SemigroupParams,
    atom_enabled: bool,
    tol: f64,
}

impl TransitionKernel {
    pub fn new(params: SemigroupParams) -> Self {
        Self {
            params,
            atom_enabled: true,
            tol: QUAD_TOL,
        }
    }

    /// Overrides the adaptive quadrature tolerance.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// The same kernel with the boundary atom removed (ablation only).
    pub fn without_atom(mut self) -> Self {
        self.atom_enabled = false;
        self
    }

    pub fn params(&self) -> SemigroupParams {
        self.params
    }

    /// Density part at `y > 0`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        let SemigroupParams { theta, t } = self.params;
        gauss_pdf(y - x, t) - gauss_pdf(x + y, t) + 2.0 * g_jet(theta, t, x + y)[0]
    }

    /// `d/dx` of the density.
    pub fn density_dx(&self, x: f64, y: f64) -> f64 {
        let SemigroupParams { theta, t } = self.params;
        -heat_jet(t, y - x)[1] - heat_jet(t, x + y)[1] + 2.0 * g_jet(theta, t, x + y)[1]
    }

    /// `d^2/dx^2` of the density.
    pub fn density_dxx(&self, x: f64, y: f64) -> f64 {
        let SemigroupParams { theta, t } = self.params;
        heat_jet(t, y - x)[2] - heat_jet(t, x + y)[2] + 2.0 * g_jet(theta, t, x + y)[2]
    }

    /// Mass of the atom at 0, `g_t(x)/theta`.
    pub fn atom(&self, x: f64) -> f64 {
        self.atom_jet(x)[0]
    }

    fn atom_jet(&self, x: f64) -> [f64; 3] {
        if !self.atom_enabled {
            return [0.0; 3];
        }
        let SemigroupParams { theta, t } = self.params;
        let [g, g1, g2] = g_jet(theta, t, x);
        [g / theta, g1 / theta, g2 / theta]
    }

    fn window(&self, x: f64) -> (f64, f64) {
        let w = TRUNCATION_SIGMAS * self.params.t.sqrt();
        ((x - w).max(0.0), x + w)
    }

    fn integrate<K, F>(&self, x: f64, kernel: K, f: F) -> f64
    where
        K: Fn(f64) -> f64,
        F: Fn(f64) -> f64,
    {
        let (a, b) = self.window(x);
        gl32().adaptive(|y| kernel(y) * f(y), a, b, 4, self.tol)
    }

    /// `P_t f(x)` for a function given by its value `f0` at the origin and `f` on `(0, inf)`.
    pub fn apply_fn<F: Fn(f64) -> f64>(&self, x: f64, f0: f64, f: F) -> f64 {
        self.atom(x) * f0 + self.integrate(x, |y| self.density(x, y), f)
    }

    /// `(P_t f)'(x)`.
    pub fn apply_prime_fn<F: Fn(f64) -> f64>(&self, x: f64, f0: f64, f: F) -> f64 {
        self.atom_jet(x)[1] * f0 + self.integrate(x, |y| self.density_dx(x, y), f)
    }

    /// `(P_t f)''(x)`.
    pub fn apply_second_fn<F: Fn(f64) -> f64>(&self, x: f64, f0: f64, f: F) -> f64 {
        self.atom_jet(x)[2] * f0 + self.integrate(x, |y| self.density_dxx(x, y), f)
    }

    pub fn apply(&self, f: &TestFunction, x: f64) -> f64 {
        self.apply_fn(x, f.value(0.0), |y| f.value(y))
    }

    pub fn apply_prime(&self, f: &TestFunction, x: f64) -> f64 {
        self.apply_prime_fn(x, f.value(0.0), |y| f.value(y))
    }

    pub fn apply_second(&self, f: &TestFunction, x: f64) -> f64 {
        self.apply_second_fn(x, f.value(0.0), |y| f.value(y))
    }

    /// `D(P_t f)(x) = 1_(0,inf)(x) (P_t f)'(x)`.
    pub fn apply_d(&self, f: &TestFunction, x: f64) -> f64 {
        if x > 0.0 {
            self.apply_prime(f, x)
        } else {
            0.0
        }
    }

    /// `atom(x) + int density(x, y) dy`.
    pub fn total_mass(&self, x: f64) -> f64 {
        self.apply_fn(x, 1.0, |_| 1.0)
    }
}

/// `P_t(x, .)` density at `y`.
pub fn density(theta: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    Ok(TransitionKernel::new(SemigroupParams::new(theta, t)?).density(x, y))
}

/// Atom of `P_t(x, .)` at zero.
pub fn atom_mass(theta: f64, t: f64, x: f64) -> Result<f64> {
    Ok(TransitionKernel::new(SemigroupParams::new(theta, t)?).atom(x))
}

/// Semigroup of reflected Brownian motion, density `p_t(y - x) + p_t(x + y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectedKernel {
    t: f64,
    tol: f64,
}

impl ReflectedKernel {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::param("t", format!("must be positive, got {t}")));
        }
        Ok(Self { t, tol: QUAD_TOL })
    }

    /// Overrides the adaptive quadrature tolerance.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        gauss_pdf(y - x, self.t) + gauss_pdf(x + y, self.t)
    }

    pub fn density_dx(&self, x: f64, y: f64) -> f64 {
        -heat_jet(self.t, y - x)[1] + heat_jet(self.t, x + y)[1]
    }

    fn window(&self, x: f64) -> (f64, f64) {
        let w = TRUNCATION_SIGMAS * self.t.sqrt();
        ((x - w).max(0.0), x + w)
    }

    pub fn apply_fn<F: Fn(f64) -> f64>(&self, x: f64, f: F) -> f64 {
        let (a, b) = self.window(x);
        gl32().adaptive(|y| self.density(x, y) * f(y), a, b, 4, self.tol)
    }

    pub fn apply_prime_fn<F: Fn(f64) -> f64>(&self, x: f64, f: F) -> f64 {
        let (a, b) = self.window(x);
        gl32().adaptive(|y| self.density_dx(x, y) * f(y), a, b, 4, self.tol)
    }
}

/// `P^+_t f(x)`. `theta` is accepted for signature symmetry with the sticky semigroup and ignored.
pub fn reflected_apply(_theta: f64, t: f64, f: &TestFunction, x: f64) -> Result<f64> {
    Ok(ReflectedKernel::new(t)?.apply_fn(x, |y| f.value(y)))
}

/// `max_x |P_{s+t} f(x) - P_s(P_t f)(x)|` over `x_grid`. `s = 0` gives 0 (`P_0` is the identity).
pub fn chapman_check(theta: f64, s: f64, t: f64, f: &TestFunction, x_grid: &[f64]) -> Result<f64> {
    chapman_check_with(theta, s, t, f, x_grid, true)
}

/// [`chapman_check`] with the boundary atom optionally dropped from every kernel.
pub fn chapman_check_with(
    theta: f64,
    s: f64,
    t: f64,
    f: &TestFunction,
    x_grid: &[f64],
    with_atom: bool,
) -> Result<f64> {
    if s == 0.0 {
        SemigroupParams::new(theta, t)?;
        return Ok(0.0);
    }
    let make = |time: f64| -> Result<TransitionKernel> {
        let k = TransitionKernel::new(SemigroupParams::new(theta, time)?);
        Ok(if with_atom { k } else { k.without_atom() })
    };
    let (ks, kt, kst) = (make(s)?, make(t)?, make(s + t)?);
    let inner = |y: f64| kt.apply(f, y);
    let mut err: f64 = 0.0;
    for &x in x_grid {
        let direct = kst.apply(f, x);
        let composed = ks.apply_fn(x, inner(0.0), inner);
        err = err.max((direct - composed).abs());
    }
    Ok(err)
}

/// Writes `x,y,density,atom` rows on the product of the two grids.
pub fn write_density_csv<W: Write>(kernel: &TransitionKernel, xs: &[f64], ys: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "x,y,density,atom")?;
    for &x in xs {
        let atom = kernel.atom(x);
        for &y in ys {
            writeln!(out, "{x},{y},{},{atom}", kernel.density(x, y))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(theta: f64, t: f64) -> TransitionKernel {
        TransitionKernel::new(SemigroupParams::new(theta, t).unwrap())
    }

    #[test]
    fn params_reject_nonpositive() {
        assert!(SemigroupParams::new(0.0, 1.0).is_err());
        assert!(SemigroupParams::new(1.0, 0.0).is_err());
        assert!(g_fn(1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn g_reference_value() {
        // theta = 1, t = 1, x = 0: g = erfcx(sqrt 2), mpmath value.
        let g = g_fn(1.0, 1.0, 0.0).unwrap();
        assert!((g - 0.3362040024463412).abs() < 1e-15);
        assert!((atom_mass(1.0, 1.0, 0.0).unwrap() - g).abs() < 1e-16);
    }

    #[test]
    fn g_against_unscaled_formula_where_safe() {
        for &(theta, t, x) in &[
            (0.5f64, 0.25f64, 0.3f64),
            (1.0, 1.0, 1.0),
            (2.0, 4.0, 0.5),
            (1.5, 0.1, 2.0),
        ] {
            let direct = theta
                * (2.0 * theta * x + 2.0 * theta * theta * t).exp()
                * libm::erfc(x / (2.0f64 * t).sqrt() + theta * (2.0f64 * t).sqrt());
            let got = g_fn(theta, t, x).unwrap();
            assert!(((got - direct) / direct).abs() < 1e-12, "{got} vs {direct}");
        }
    }

    #[test]
    fn g_far_tail_is_finite() {
        let g = g_fn(1.0, 1.0, 50.0).unwrap();
        assert!(g.is_finite() && (0.0..1e-300).contains(&g));
        for x in [50.0, 200.0, 1e4] {
            let j = g_jet(10.0, 1e-4, x);
            assert!(j.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn g_derivatives_match_finite_differences() {
        let (theta, t) = (1.3, 0.7);
        for x in [0.2, 1.0, 2.5] {
            let h = 1e-5;
            let [_, g1, g2] = g_jet(theta, t, x);
            let gp = |x| g_jet(theta, t, x)[0];
            let d1 = (gp(x + h) - gp(x - h)) / (2.0 * h);
            let d2 = (g_jet(theta, t, x + h)[1] - g_jet(theta, t, x - h)[1]) / (2.0 * h);
            assert!((d1 - g1).abs() < 1e-8, "x={x}: {d1} vs {g1}");
            assert!((d2 - g2).abs() < 1e-8, "x={x}: {d2} vs {g2}");
        }
    }

    #[test]
    fn density_at_origin_is_twice_g() {
        let k = kernel(1.0, 0.5);
        for y in [0.1, 0.5, 2.0] {
            let want = 2.0 * g_jet(1.0, 0.5, y)[0];
            assert!((k.density(0.0, y) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn density_nonnegative_on_grid() {
        for &(theta, t) in &[(0.5, 0.25), (1.0, 1.0), (2.0, 4.0)] {
            let k = kernel(theta, t);
            for i in 0..40 {
                for j in 1..60 {
                    assert!(k.density(i as f64 * 0.1, j as f64 * 0.1) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn atom_is_probability_and_decays() {
        for &(theta, t) in &[(0.5, 0.25), (1.0, 1.0), (2.0, 4.0)] {
            let k = kernel(theta, t);
            for x in [0.0, 0.5, 2.0] {
                let a = k.atom(x);
                assert!(a > 0.0 && a < 1.0);
            }
            assert!(k.atom(40.0) < 1e-30);
        }
    }

    #[test]
    fn constants_are_preserved() {
        let k = kernel(1.0, 0.8);
        let one = TestFunction::constant(1.0);
        for x in [0.0, 0.3, 3.0] {
            assert!((k.apply(&one, x) - 1.0).abs() < 1e-8);
            assert!(k.apply_prime(&one, x).abs() < 1e-8);
        }
    }

    #[test]
    fn short_time_is_near_identity() {
        let k = kernel(1.0, 1e-6);
        let f = TestFunction::exp_poly(1.0, 1.0, 0.0, 1.0);
        for x in [0.0, 0.5, 2.0] {
            assert!((k.apply(&f, x) - f.value(x)).abs() < 1e-3);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let k = kernel(1.2, 0.6);
        let f = TestFunction::exp_poly(0.5, 1.0, -0.3, 1.0);
        for x in [0.3, 1.0, 2.2] {
            let h = 1e-4;
            let fd = (k.apply(&f, x + h) - k.apply(&f, x - h)) / (2.0 * h);
            assert!((fd - k.apply_prime(&f, x)).abs() < 1e-6, "x={x}");
            assert!(k.apply_d(&f, 0.0) == 0.0);
        }
    }

    #[test]
    fn reflected_semigroup_basics() {
        let one = TestFunction::constant(1.0);
        assert!((reflected_apply(9.0, 0.7, &one, 0.4).unwrap() - 1.0).abs() < 1e-10);
        let r = ReflectedKernel::new(0.7).unwrap();
        let f = TestFunction::exp_poly(1.0, 0.0, 0.0, 1.0);
        // Neumann boundary: derivative vanishes at 0.
        assert!(r.apply_prime_fn(0.0, |y| f.value(y)).abs() < 1e-12);
        // Chapman–Kolmogorov for the reflected kernel.
        let (a, b, ab) = (
            ReflectedKernel::new(0.3).unwrap(),
            ReflectedKernel::new(0.4).unwrap(),
            r,
        );
        for x in [0.0, 0.5, 1.5] {
            let composed = a.apply_fn(x, |y| b.apply_fn(y, |z| f.value(z)));
            assert!((composed - ab.apply_fn(x, |y| f.value(y))).abs() < 1e-9);
        }
    }

    #[test]
    fn chapman_zero_time_convention() {
        let f = TestFunction::exp_poly(1.0, 0.0, 0.0, 1.0);
        assert_eq!(chapman_check(1.0, 0.0, 0.5, &f, &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn density_csv_shape() {
        let mut buf = Vec::new();
        write_density_csv(&kernel(1.0, 1.0), &[0.0, 1.0], &[0.5, 1.0, 1.5], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 7);
        assert!(s.starts_with("x,y,density,atom\n"));
    }
}
