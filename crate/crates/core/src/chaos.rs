//! Truncated Wiener chaos expansion of the conditional law of the sticky
//! process given its driver.
//!
//! The order-`n` term is an iterated Itô integral over `0 < s_1 < ... < s_n < t`
//! of the deterministic coefficient
//! `c(s) = P_{s_1} D P_{s_2 - s_1} ... D P_{t - s_n} f (0)` with
//! `D g = 1_(0,inf) g'`. Coefficients are evaluated on a uniform time grid
//! with step `dt = t/K` by propagating grid functions through precomputed
//! operator matrices, and the integrals become left-point simplex sums
//! against the path increments.
//!
//! A grid function is stored as `[v(0), v(x_0+), v(x_1), ..., v(x_{m-1})]`:
//! slot 0 is the value at the origin itself, which the boundary atom of the
//! sticky kernel sees, and the remaining slots sample the function on
//! `(0, x_max]`. `D` writes 0 into slot 0 and keeps the right limit in slot 1.
//! The reflected (`P^+`, `D^+ g = g'`) variant uses the same layout with no atom.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel_flow::{g_transform, TestFunction};
use crate::paths::{reflected_increment, BrownianPath};
use crate::quad::{gl16, gl32};
use crate::semigroup::{g_jet, ReflectedKernel, SemigroupParams, TransitionKernel, TRUNCATION_SIGMAS};
use crate::special::gauss_pdf;

/// Largest time-step count accepted by [`build_propagators`].
pub const MAX_TIME_STEPS: usize = 512;
/// Highest chaos order computed.
pub const MAX_ORDER: usize = 3;

/// Uniform space grid `x_j = j x_max / (m - 1)` on `[0, x_max]`, plus the origin slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceGrid {
    x_max: f64,
    m: usize,
}

impl SpaceGrid {
    pub fn new(x_max: f64, m: usize) -> Result<Self> {
        if m < 16 {
            return Err(Error::param("m", format!("need at least 16 nodes, got {m}")));
        }
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::param("x_max", format!("must be positive, got {x_max}")));
        }
        Ok(Self { x_max, m })
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.x_max / (self.m - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }

    /// Length of a grid-function vector.
    pub fn dim(&self) -> usize {
        self.m + 1
    }

    /// Samples `f` with `f(0)` in the origin slot.
    pub fn sample(&self, f: &TestFunction) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(f.value(0.0));
        v.extend((0..self.m).map(|j| f.value(self.node(j))));
        v
    }
}

/// Square dense matrix acting on grid-function vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    n: usize,
    data: Vec<f64>,
}

impl Operator {
    fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// `r^T M`.
    pub fn apply_left(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &ri) in r.iter().enumerate() {
            if ri != 0.0 {
                for (o, &m) in out.iter_mut().zip(self.row(i)) {
                    *o += ri * m;
                }
            }
        }
        out
    }

    pub fn compose(&self, other: &Operator) -> Operator {
        let mut out = Operator::zeros(self.n);
        for i in 0..self.n {
            let row = other.apply_left(self.row(i));
            out.data[i * self.n..(i + 1) * self.n].copy_from_slice(&row);
        }
        out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which semigroup the propagators discretize.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Flavor {
    /// Sticky semigroup with its atom; `D g = 1_(0,inf) g'`.
    Sticky { theta: f64 },
    /// Reflected Brownian motion; `D^+ g = g'`.
    Reflected,
}

impl Flavor {
    /// Kernel pieces at time `s`: the `y - x` part and the `x + y` part, for
    /// the value (`deriv = false`) or the `x`-derivative.
    fn pieces(&self, s: f64, deriv: bool) -> (impl Fn(f64) -> f64, impl Fn(f64) -> f64) {
        let theta = match *self {
            Flavor::Sticky { theta } => Some(theta),
            Flavor::Reflected => None,
        };
        let diff = move |d: f64| {
            let p = gauss_pdf(d, s);
            if deriv {
                // d/dx p(y - x) = (y - x)/s p
                d / s * p
            } else {
                p
            }
        };
        let sum = move |u: f64| {
            let p = gauss_pdf(u, s);
            match (theta, deriv) {
                (Some(th), false) => -p + 2.0 * g_jet(th, s, u)[0],
                (Some(th), true) => u / s * p + 2.0 * g_jet(th, s, u)[1],
                (None, false) => p,
                (None, true) => -u / s * p,
            }
        };
        (diff, sum)
    }

    fn atom(&self, s: f64, x: f64, deriv: bool) -> f64 {
        match *self {
            Flavor::Sticky { theta } => g_jet(theta, s, x)[usize::from(deriv)] / theta,
            Flavor::Reflected => 0.0,
        }
    }
}

/// Cubic Lagrange stencil used on interval `j`: first node index and basis values at GL nodes.
struct Stencil {
    /// `basis[kind][local][q]`, kind 0 = first interval, 1 = interior, 2 = last.
    basis: [[Vec<f64>; 4]; 3],
    xi: Vec<f64>,
    w: Vec<f64>,
}

impl Stencil {
    fn new() -> Self {
        let rule = gl16();
        let (xi, w): (Vec<f64>, Vec<f64>) = rule.mapped(0.0, 1.0).unzip();
        let make = |o0: f64| -> [Vec<f64>; 4] {
            std::array::from_fn(|k| {
                xi.iter()
                    .map(|&x| {
                        let mut v = 1.0;
                        for l in 0..4 {
                            if l != k {
                                let (ok, ol) = (o0 + k as f64, o0 + l as f64);
                                v *= (x - ol) / (ok - ol);
                            }
                        }
                        v
                    })
                    .collect()
            })
        };
        Self {
            basis: [make(0.0), make(-1.0), make(-2.0)],
            xi,
            w,
        }
    }

    fn kind(&self, j: usize, m: usize) -> (usize, usize) {
        if j == 0 {
            (0, 0)
        } else if j + 2 >= m {
            (2, m - 4)
        } else {
            (1, j - 1)
        }
    }
}

/// Assembles the matrix of `v -> P_s v` (or its `x`-derivative) on the grid.
fn assemble(flavor: Flavor, s: f64, grid: &SpaceGrid, deriv: bool, stencil: &Stencil) -> Operator {
    let m = grid.m;
    let h = grid.h();
    let nq = stencil.xi.len();
    let (diff, sum) = flavor.pieces(s, deriv);
    // diff_tab[(d + m - 1) * nq + q] = piece at (d + xi_q) h, d = j - i in [-(m-1), m-2]
    let diff_tab: Vec<f64> = (0..(2 * m - 2))
        .flat_map(|di| {
            let d = di as f64 - (m - 1) as f64;
            stencil.xi.iter().map(move |&x| (d + x) * h).collect::<Vec<_>>()
        })
        .map(&diff)
        .collect();
    let sum_tab: Vec<f64> = (0..(2 * m - 2))
        .flat_map(|si| stencil.xi.iter().map(move |&x| (si as f64 + x) * h).collect::<Vec<_>>())
        .map(&sum)
        .collect();

    let n = grid.dim();
    let mut op = Operator::zeros(n);
    let tail_hi = |x: f64| x + TRUNCATION_SIGMAS * s.sqrt();
    for i in 0..m {
        let row = &mut op.data[(i + 1) * n..(i + 2) * n];
        row[0] = flavor.atom(s, grid.node(i), deriv);
        for j in 0..m - 1 {
            let (kind, first) = stencil.kind(j, m);
            let dbase = (j + m - 1 - i) * nq;
            let sbase = (i + j) * nq;
            for q in 0..nq {
                let kq = h * stencil.w[q] * (diff_tab[dbase + q] + sum_tab[sbase + q]);
                for (local, basis) in stencil.basis[kind].iter().enumerate() {
                    row[1 + first + local] += kq * basis[q];
                }
            }
        }
        // Beyond x_max the function is continued by its last node value.
        let x = grid.node(i);
        if tail_hi(x) > grid.x_max {
            let panels = ((tail_hi(x) - grid.x_max) / s.sqrt()).ceil().max(1.0) as usize;
            row[m] += gl32().composite(|y| diff(y - x) + sum(x + y), grid.x_max, tail_hi(x), panels);
        }
    }
    // Output origin slot: P v is continuous at 0; D zeroes it for the sticky flavor.
    let first_node: Vec<f64> = op.row(1).to_vec();
    let origin = &mut op.data[..n];
    match (flavor, deriv) {
        (Flavor::Sticky { .. }, true) => origin.fill(0.0),
        _ => origin.copy_from_slice(&first_node),
    }
    op
}

/// Precomputed operators for one `(flavor, t, K, grid)`.
#[derive(Clone, Debug)]
pub struct PropagatorSet {
    flavor: Flavor,
    t: f64,
    k_max: usize,
    grid: SpaceGrid,
    /// `rows[k]` = origin row of `P_{k dt}`, `k = 0..=K` (`k = 0` is the identity row).
    rows: Vec<Vec<f64>>,
    /// `dp[k - 1]` = matrix of `D P_{k dt}`, `k = 1..=K`.
    dp: Vec<Operator>,
}

fn check_steps(n_time_steps: usize) -> Result<()> {
    if n_time_steps == 0 {
        return Err(Error::param("n_time_steps", "must be >= 1"));
    }
    if n_time_steps > MAX_TIME_STEPS {
        return Err(Error::CostGuard(format!(
            "n_time_steps = {n_time_steps} exceeds {MAX_TIME_STEPS}"
        )));
    }
    Ok(())
}

/// Sticky propagators `P_{k dt}` and `D P_{k dt}`, `dt = t / n_time_steps`.
pub fn build_propagators(theta: f64, t: f64, n_time_steps: usize, grid: SpaceGrid) -> Result<PropagatorSet> {
    SemigroupParams::new(theta, t)?;
    build(Flavor::Sticky { theta }, t, n_time_steps, grid)
}

/// Reflected-Brownian-motion propagators `P^+_{k dt}` and `D^+ P^+_{k dt}`.
pub fn build_reflected_propagators(t: f64, n_time_steps: usize, grid: SpaceGrid) -> Result<PropagatorSet> {
    ReflectedKernel::new(t)?;
    build(Flavor::Reflected, t, n_time_steps, grid)
}

fn build(flavor: Flavor, t: f64, k_max: usize, grid: SpaceGrid) -> Result<PropagatorSet> {
    check_steps(k_max)?;
    let stencil = Stencil::new();
    let dt = t / k_max as f64;
    let mut identity_row = vec![0.0; grid.dim()];
    identity_row[0] = 1.0;
    let built: Vec<(Vec<f64>, Operator)> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let s = k as f64 * dt;
            let p = assemble(flavor, s, &grid, false, &stencil);
            let d = assemble(flavor, s, &grid, true, &stencil);
            (p.row(0).to_vec(), d)
        })
        .collect();
    let mut rows = vec![identity_row];
    let mut dp = Vec::with_capacity(k_max);
    for (r, d) in built {
        rows.push(r);
        dp.push(d);
    }
    Ok(PropagatorSet {
        flavor,
        t,
        k_max,
        grid,
        rows,
        dp,
    })
}

impl PropagatorSet {
    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n_time_steps(&self) -> usize {
        self.k_max
    }

    pub fn dt(&self) -> f64 {
        self.t / self.k_max as f64
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    /// Full matrix of `P_{k dt}` (assembled on demand; `k = 0` is the identity).
    pub fn p_matrix(&self, k: usize) -> Operator {
        if k == 0 {
            let n = self.grid.dim();
            let mut op = Operator::zeros(n);
            for i in 0..n {
                op.data[i * n + i] = 1.0;
            }
            return op;
        }
        assemble(self.flavor, k as f64 * self.dt(), &self.grid, false, &Stencil::new())
    }

    /// Matrix of `D P_{k dt}`, `1 <= k <= K`.
    pub fn dp_matrix(&self, k: usize) -> &Operator {
        &self.dp[k - 1]
    }

    /// Origin row of `P_{k dt}`.
    pub fn origin_row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    /// `D P_{k dt} f` sampled on the grid, with the derivative computed by quadrature
    /// against the analytic kernel derivative.
    pub fn innermost(&self, f: &(dyn Fn(f64) -> f64 + Sync), f0: f64, k: usize) -> Vec<f64> {
        let s = k as f64 * self.dt();
        let grid = self.grid;
        let mut v: Vec<f64> = match self.flavor {
            Flavor::Sticky { theta } => {
                let kern = TransitionKernel::new(SemigroupParams::new(theta, s).expect("validated at build"));
                let mut v = vec![0.0];
                v.extend((0..grid.m).map(|j| kern.apply_prime_fn(grid.node(j), f0, f)));
                v
            }
            Flavor::Reflected => {
                let kern = ReflectedKernel::new(s).expect("validated at build");
                let mut v = vec![0.0];
                v.extend((0..grid.m).map(|j| kern.apply_prime_fn(grid.node(j), f)));
                v[0] = v[1];
                v
            }
        };
        if let Flavor::Sticky { .. } = self.flavor {
            v[0] = 0.0;
        }
        v
    }
}

/// `G_f` tabulated on a fine grid and interpolated by cubic Hermite using
/// `G' = lambda (f - G)`. Used where `G_f` is needed at many points.
#[derive(Clone, Debug)]
pub struct TabulatedG {
    lambda: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl TabulatedG {
    pub fn new(f: &TestFunction, theta: f64, y_max: f64, step: f64) -> Self {
        let lambda = 2.0 * theta;
        let n = (y_max / step).ceil() as usize + 1;
        let mut values = Vec::with_capacity(n + 1);
        let mut integral = 0.0;
        values.push(f.value(0.0));
        let rule = gl16();
        let decay = (-lambda * step).exp();
        for k in 0..n {
            let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
            let cell = rule.integrate(|u| f.value(u) * (-lambda * (b - u)).exp(), a, b);
            integral = integral * decay + cell;
            values.push(f.value(0.0) * (-lambda * b).exp() + lambda * integral);
        }
        let slopes = values
            .iter()
            .enumerate()
            .map(|(k, &g)| lambda * (f.value(k as f64 * step) - g))
            .collect();
        Self {
            lambda,
            step,
            values,
            slopes,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eval(&self, y: f64) -> f64 {
        let pos = (y / self.step).max(0.0);
        let k = (pos.floor() as usize).min(self.values.len() - 2);
        let u = pos - k as f64;
        let (g0, g1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * g0 + (u3 - 2.0 * u2 + u) * d0 + (-2.0 * u3 + 3.0 * u2) * g1 + (u3 - u2) * d1
    }
}

/// Coefficient tables of orders 1..=n_max for one test function.
#[derive(Clone, Debug)]
pub struct ChaosExpansion {
    k_max: usize,
    n_max: usize,
    j0: f64,
    /// `c1[i]`, `i = 0..K`.
    c1: Vec<f64>,
    /// `c2[i1 * K + i2]`, `i1 < i2`.
    c2: Vec<f64>,
    /// `c3[(i2 * K + i3) * K + i1]`... stored per `(i2, i3)` pair for `i1 < i2`.
    c3: Vec<f64>,
    reference: Reference,
}

#[derive(Clone, Debug)]
enum Reference {
    Exact { f: TestFunction, theta: f64 },
    None,
}

/// Values of one expansion on one path.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosResult {
    pub j0: f64,
    /// `terms[n - 1]` is the order-`n` term.
    pub terms: Vec<f64>,
    pub truncation: f64,
    pub reference: f64,
}

fn check_order_cap(n_max: usize) -> Result<()> {
    if n_max > MAX_ORDER {
        return Err(Error::CostGuard(format!("n_max = {n_max} exceeds {MAX_ORDER}")));
    }
    Ok(())
}

impl ChaosExpansion {
    /// Sticky expansion of `E[f(X_t) | W]`; `f` must be in `S`.
    pub fn sticky(props: &PropagatorSet, f: &TestFunction, n_max: usize) -> Result<Self> {
        let theta = match props.flavor {
            Flavor::Sticky { theta } => theta,
            Flavor::Reflected => return Err(Error::param("props", "expected sticky propagators")),
        };
        if !f.in_s() {
            return Err(Error::FunctionClass {
                name: f.name().to_string(),
                class: "S",
                detail: "coefficients need f, f', f'' finite at 0+ and decay at infinity".into(),
            });
        }
        check_order_cap(n_max)?;
        let kern = TransitionKernel::new(SemigroupParams::new(theta, props.t)?);
        let j0 = kern.apply(f, 0.0);
        let fv = |y: f64| f.value(y);
        let mut exp = Self::from_innermost(props, &fv, f.value(0.0), j0, n_max);
        exp.reference = Reference::Exact { f: f.clone(), theta };
        Ok(exp)
    }

    /// Reflected expansion of `G_f(W_t^+)` built from `P^+` and `D^+`.
    pub fn reflected(props: &PropagatorSet, f: &TestFunction, theta: f64, n_max: usize) -> Result<Self> {
        if props.flavor != Flavor::Reflected {
            return Err(Error::param("props", "expected reflected propagators"));
        }
        check_order_cap(n_max)?;
        let y_max = props.grid.x_max + TRUNCATION_SIGMAS * props.t.sqrt() + 1.0;
        let table = TabulatedG::new(f, theta, y_max, 1e-3);
        let gv = |y: f64| table.eval(y);
        let kern = ReflectedKernel::new(props.t)?;
        let j0 = kern.apply_fn(0.0, |y| g_transform(f, theta, y).expect("y >= 0"));
        let mut exp = Self::from_innermost(props, &gv, f.value(0.0), j0, n_max);
        exp.reference = Reference::Exact { f: f.clone(), theta };
        Ok(exp)
    }

    fn from_innermost(props: &PropagatorSet, f: &(dyn Fn(f64) -> f64 + Sync), f0: f64, j0: f64, n_max: usize) -> Self {
        let k_max = props.k_max;
        // inner[i] = D P_{t - s_i} f on the grid, s_i = i dt, i = 0..K-1.
        let inner: Vec<Vec<f64>> = if n_max == 0 {
            Vec::new()
        } else {
            (0..k_max)
                .into_par_iter()
                .map(|i| props.innermost(f, f0, k_max - i))
                .collect()
        };
        let c1: Vec<f64> = if n_max >= 1 {
            (0..k_max).map(|i| dot(props.origin_row(i), &inner[i])).collect()
        } else {
            Vec::new()
        };
        let c2 = if n_max >= 2 {
            order_two(props, &inner)
        } else {
            Vec::new()
        };
        let c3 = if n_max >= 3 {
            order_three(props, &inner)
        } else {
            Vec::new()
        };
        Self {
            k_max,
            n_max,
            j0,
            c1,
            c2,
            c3,
            reference: Reference::None,
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn j0(&self) -> f64 {
        self.j0
    }

    /// Order-1 coefficient at `s = i dt`.
    pub fn c1(&self, i: usize) -> f64 {
        self.c1[i]
    }

    /// Order-2 coefficient at `(i1 dt, i2 dt)`, `i1 < i2`.
    pub fn c2(&self, i1: usize, i2: usize) -> f64 {
        self.c2[i1 * self.k_max + i2]
    }

    /// Order-3 coefficient at `(i1, i2, i3)`, `i1 < i2 < i3`.
    pub fn c3(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.c3[c3_index(self.k_max, i1, i2, i3)]
    }

    /// Evaluates every order on one path. The path must have `K` steps covering `[0, t]`.
    pub fn evaluate(&self, path: &BrownianPath) -> Result<ChaosResult> {
        if path.grid().n_steps() != self.k_max {
            return Err(Error::param(
                "path",
                format!(
                    "grid has {} steps, propagators use {}",
                    path.grid().n_steps(),
                    self.k_max
                ),
            ));
        }
        let dw: Vec<f64> = path.increments().collect();
        let k = self.k_max;
        let mut terms = Vec::with_capacity(self.n_max);
        if self.n_max >= 1 {
            terms.push(dot(&self.c1, &dw));
        }
        if self.n_max >= 2 {
            let mut j2 = 0.0;
            for i2 in 1..k {
                let mut inner = 0.0;
                for i1 in 0..i2 {
                    inner += self.c2[i1 * k + i2] * dw[i1];
                }
                j2 += inner * dw[i2];
            }
            terms.push(j2);
        }
        if self.n_max >= 3 {
            let mut j3 = 0.0;
            for i2 in 1..k {
                for i3 in i2 + 1..k {
                    let base = c3_index(k, 0, i2, i3);
                    let inner = dot(&self.c3[base..base + i2], &dw[..i2]);
                    j3 += inner * dw[i2] * dw[i3];
                }
            }
            terms.push(j3);
        }
        let truncation = self.j0 + terms.iter().sum::<f64>();
        let reference = match &self.reference {
            Reference::Exact { f, theta } => reference_value(path, f, *theta)?,
            Reference::None => f64::NAN,
        };
        Ok(ChaosResult {
            j0: self.j0,
            terms,
            truncation,
            reference,
        })
    }
}

/// Offset of `(i1, i2, i3)` in the packed order-3 table: pairs `(i2, i3)` with
/// `1 <= i2 < i3 < K` in lexicographic order, each followed by `i2` entries for `i1 < i2`.
fn c3_index(k: usize, i1: usize, i2: usize, i3: usize) -> usize {
    // Entries before pair (i2, *): sum over a < i2 of a * (K - 1 - a).
    let before_i2: usize = (0..i2).map(|a| a * (k - 1 - a)).sum();
    before_i2 + (i3 - i2 - 1) * i2 + i1
}

fn order_two(props: &PropagatorSet, inner: &[Vec<f64>]) -> Vec<f64> {
    let k = props.k_max;
    let columns: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i2| {
            let mut col = vec![0.0; i2];
            for (i1, c) in col.iter_mut().enumerate().skip(1) {
                let w = props.dp_matrix(i2 - i1).apply(&inner[i2]);
                *c = dot(props.origin_row(i1), &w);
            }
            col
        })
        .collect();
    let mut c2 = vec![0.0; k * k];
    for (i2, col) in columns.iter().enumerate() {
        for (i1, &c) in col.iter().enumerate() {
            c2[i1 * k + i2] = c;
        }
    }
    c2
}

fn order_three(props: &PropagatorSet, inner: &[Vec<f64>]) -> Vec<f64> {
    let k = props.k_max;
    let blocks: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i2| {
            if i2 == 0 {
                return Vec::new();
            }
            // left[i1] = e_0^T P_{i1 dt} D P_{(i2 - i1) dt}; i1 = 0 contributes nothing.
            let left: Vec<Vec<f64>> = (0..i2)
                .map(|i1| {
                    if i1 == 0 {
                        vec![0.0; props.grid.dim()]
                    } else {
                        props.dp_matrix(i2 - i1).apply_left(props.origin_row(i1))
                    }
                })
                .collect();
            let mut block = Vec::with_capacity(i2 * (k - 1 - i2));
            for i3 in i2 + 1..k {
                let right = props.dp_matrix(i3 - i2).apply(&inner[i3]);
                block.extend(left.iter().map(|l| dot(l, &right)));
            }
            block
        })
        .collect();
    blocks.concat()
}

/// Coefficient `P_{s_1} D P_{s_2 - s_1} ... D P_{t - s_n} f (0)` for grid-aligned times.
/// An empty `times` gives `P_t f(0)`.
pub fn chaos_coefficient(props: &PropagatorSet, f: &TestFunction, times: &[f64]) -> Result<f64> {
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("times", "must be strictly increasing"));
    }
    let dt = props.dt();
    let mut idx = Vec::with_capacity(times.len());
    for &s in times {
        let k = (s / dt).round();
        if (k * dt - s).abs() > 1e-9 * dt.max(1.0) || k < 0.0 || k as usize >= props.k_max {
            return Err(Error::param("times", format!("{s} is not a grid time in [0, t)")));
        }
        idx.push(k as usize);
    }
    let theta = match props.flavor {
        Flavor::Sticky { theta } => theta,
        Flavor::Reflected => return Err(Error::param("props", "expected sticky propagators")),
    };
    if idx.is_empty() {
        return Ok(TransitionKernel::new(SemigroupParams::new(theta, props.t)?).apply(f, 0.0));
    }
    let fv = |y: f64| f.value(y);
    let last = *idx.last().expect("non-empty");
    let mut v = props.innermost(&fv, f.value(0.0), props.k_max - last);
    for pair in idx.windows(2).rev() {
        v = props.dp_matrix(pair[1] - pair[0]).apply(&v);
    }
    Ok(dot(props.origin_row(idx[0]), &v))
}

/// Builds the sticky expansion and evaluates it on one path.
pub fn iterated_ito_sum(
    path: &BrownianPath,
    props: &PropagatorSet,
    f: &TestFunction,
    n_max: usize,
) -> Result<ChaosResult> {
    ChaosExpansion::sticky(props, f, n_max)?.evaluate(path)
}

/// `G_f(W_t^+)` for the end of `path`.
pub fn reference_value(path: &BrownianPath, f: &TestFunction, theta: f64) -> Result<f64> {
    let wplus = reflected_increment(path, 0, path.grid().n_steps());
    g_transform(f, theta, wplus)
}

/// Sticky and reflected expansions of the same test function, for term-by-term comparison.
#[derive(Clone, Debug)]
pub struct PplusComparison {
    pub sticky: ChaosExpansion,
    pub reflected: ChaosExpansion,
}

impl PplusComparison {
    pub fn new(
        theta: f64,
        t: f64,
        n_time_steps: usize,
        grid: SpaceGrid,
        f: &TestFunction,
        n_max: usize,
    ) -> Result<Self> {
        let sp = build_propagators(theta, t, n_time_steps, grid)?;
        let rp = build_reflected_propagators(t, n_time_steps, grid)?;
        Ok(Self {
            sticky: ChaosExpansion::sticky(&sp, f, n_max)?,
            reflected: ChaosExpansion::reflected(&rp, f, theta, n_max)?,
        })
    }

    /// `[|J0 - J0+|, |J1 - J1+|, ...]` on one path.
    pub fn termwise_diffs(&self, path: &BrownianPath) -> Result<Vec<f64>> {
        let a = self.sticky.evaluate(path)?;
        let b = self.reflected.evaluate(path)?;
        let mut out = vec![(a.j0 - b.j0).abs()];
        out.extend(a.terms.iter().zip(&b.terms).map(|(x, y)| (x - y).abs()));
        Ok(out)
    }
}

/// [`PplusComparison::termwise_diffs`] for a single path.
pub fn pplus_expansion_check(
    path: &BrownianPath,
    f: &TestFunction,
    theta: f64,
    t: f64,
    grid: SpaceGrid,
    n_max: usize,
) -> Result<Vec<f64>> {
    PplusComparison::new(theta, t, path.grid().n_steps(), grid, f, n_max)?.termwise_diffs(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_flow::make_da_function;
    use crate::paths::{sample_brownian, TimeGrid};

    fn grid() -> SpaceGrid {
        SpaceGrid::new(16.0, 64).unwrap()
    }

    #[test]
    fn guards() {
        assert!(SpaceGrid::new(10.0, 8).is_err());
        assert!(matches!(
            build_propagators(1.0, 1.0, 513, grid()),
            Err(Error::CostGuard(_))
        ));
        let props = build_propagators(1.0, 1.0, 8, grid()).unwrap();
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        assert!(matches!(
            ChaosExpansion::sticky(&props, &f, 4),
            Err(Error::CostGuard(_))
        ));
        assert!(chaos_coefficient(&props, &f, &[0.5, 0.25]).is_err());
        assert!(chaos_coefficient(&props, &f, &[0.3]).is_err());
    }

    #[test]
    fn c3_packing_is_dense_and_ordered() {
        let k = 9;
        let mut seen = Vec::new();
        for i2 in 1..k {
            for i3 in i2 + 1..k {
                for i1 in 0..i2 {
                    seen.push(c3_index(k, i1, i2, i3));
                }
            }
        }
        let n = seen.len();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn zero_step_is_identity() {
        let props = build_propagators(1.0, 1.0, 8, grid()).unwrap();
        let id = props.p_matrix(0);
        let v: Vec<f64> = (0..grid().dim()).map(|i| (i as f64).cos()).collect();
        assert_eq!(id.apply(&v), v);
    }

    #[test]
    fn rows_conserve_constants() {
        let props = build_propagators(1.0, 1.0, 8, grid()).unwrap();
        let ones = vec![1.0; grid().dim()];
        for k in [1, 4, 8] {
            let p = props.p_matrix(k);
            for (i, v) in p.apply(&ones).iter().enumerate() {
                assert!((v - 1.0).abs() < 1e-6, "k={k} row {i}: {v}");
            }
            for v in props.dp_matrix(k).apply(&ones) {
                assert!(v.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn tabulated_g_matches_direct() {
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        let tab = TabulatedG::new(&f, 1.0, 20.0, 1e-3);
        for y in [0.0, 0.0105, 0.7, 3.3, 12.0] {
            let want = g_transform(&f, 1.0, y).unwrap();
            assert!((tab.eval(y) - want).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn order_zero_is_path_independent() {
        let props = build_propagators(1.0, 1.0, 16, grid()).unwrap();
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        let exp = ChaosExpansion::sticky(&props, &f, 0).unwrap();
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let a = exp.evaluate(&sample_brownian(g, 1)).unwrap();
        let b = exp.evaluate(&sample_brownian(g, 2)).unwrap();
        assert_eq!(a.truncation, b.truncation);
        assert_eq!(a.truncation, exp.j0());
        assert!(a.terms.is_empty());
    }

    #[test]
    fn constant_function_has_no_higher_orders() {
        // 1 is not in S, so build from the raw pieces.
        let props = build_propagators(1.0, 1.0, 16, grid()).unwrap();
        let one = |_y: f64| 1.0;
        let exp = ChaosExpansion::from_innermost(&props, &one, 1.0, 1.0, 3);
        for i in 0..16 {
            assert!(exp.c1(i).abs() < 1e-9);
        }
        let path = sample_brownian(TimeGrid::uniform(1.0, 16).unwrap(), 3);
        let r = exp.evaluate(&path).unwrap();
        assert!(r.terms.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn truncation_is_sum_of_terms() {
        let props = build_propagators(1.0, 1.0, 16, grid()).unwrap();
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        let path = sample_brownian(TimeGrid::uniform(1.0, 16).unwrap(), 5);
        let r = iterated_ito_sum(&path, &props, &f, 3).unwrap();
        assert_eq!(r.terms.len(), 3);
        assert_eq!(r.truncation, r.j0 + r.terms.iter().sum::<f64>());
        let wrong = sample_brownian(TimeGrid::uniform(1.0, 8).unwrap(), 5);
        assert!(iterated_ito_sum(&wrong, &props, &f, 1).is_err());
    }

    #[test]
    fn coefficient_api_matches_tables() {
        let props = build_propagators(1.0, 1.0, 16, grid()).unwrap();
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        let exp = ChaosExpansion::sticky(&props, &f, 3).unwrap();
        let dt = props.dt();
        assert!((chaos_coefficient(&props, &f, &[]).unwrap() - exp.j0()).abs() < 1e-15);
        assert!((chaos_coefficient(&props, &f, &[5.0 * dt]).unwrap() - exp.c1(5)).abs() < 1e-14);
        let c = chaos_coefficient(&props, &f, &[3.0 * dt, 9.0 * dt]).unwrap();
        assert!((c - exp.c2(3, 9)).abs() < 1e-14);
        let c = chaos_coefficient(&props, &f, &[2.0 * dt, 7.0 * dt, 11.0 * dt]).unwrap();
        assert!((c - exp.c3(2, 7, 11)).abs() < 1e-14);
    }

    #[test]
    fn reference_value_degenerate_cases() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let flat = BrownianPath::from_values(g, vec![0.0; 11], 0).unwrap();
        let f = make_da_function(1.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(reference_value(&flat, &f, 1.0).unwrap(), f.value(0.0));
        let one = crate::kernel_flow::TestFunction::constant(1.0);
        let p = sample_brownian(g, 4);
        assert!((reference_value(&p, &one, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }
}
