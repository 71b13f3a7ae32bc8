//! Special functions on the real line.

use std::f64::consts::PI;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const ASYMPTOTIC_CUTOFF: f64 = 25.0;

/// `exp(x^2)` with the rounding error of `x*x` folded back in.
fn exp_square(x: f64) -> f64 {
    let hi = x * x;
    let lo = x.mul_add(x, -hi);
    hi.exp() * (1.0 + lo)
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `erfcx(x) = exp(x^2) erfc(x)`.
///
/// Finite and accurate to a few ulps for every `x >= 0`; for large `x` it
/// decays like `1/(x sqrt(pi))`. For negative `x` it grows like
/// `2 exp(x^2)` and overflows below about `-26.6`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 * exp_square(x) - erfcx(-x);
    }
    if x < ASYMPTOTIC_CUTOFF {
        return exp_square(x) * libm::erfc(x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    // erfcx(x) ~ 1/(x sqrt(pi)) * sum_k (-1)^k (2k-1)!! / (2x^2)^k
    let inv = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..20 {
        term *= -((2 * k - 1) as f64) * inv;
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum * FRAC_1_SQRT_PI / x
}

/// Density of `N(0, var)` at `x`.
#[inline]
pub fn gauss_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

/// Standard normal distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
