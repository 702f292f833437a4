//! Real error function and the entire function
//!
//! g(x) = sum_n x^n / (n! (2n+1)) = integral_0^1 e^{x t^2} dt,
//!
//! normalised to g(0) = 1. Equivalently g(x) = (sqrt(pi)/2) erfi(sqrt(x)) / sqrt(x)
//! for either branch of the square root.
//!
//! Three evaluation paths cover the complex plane:
//! - the Taylor series, where it does not cancel (|x| small, or x close to
//!   the positive real axis);
//! - Gauss-Legendre quadrature of the integral form for moderate |x|;
//! - the large-|x| expansion
//!   g(x) = e^x/(2x) * sum_n (2n-1)!!/(2x)^n + sqrt(pi)/(2 sqrt(-x)),
//!   summed to its smallest term and evaluated in log space.
//!
//! The leading large-M behaviour is g(M) ~ e^M / (2M), so
//! c(M) = g(M) M e^{-M} tends to 1/2.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::gauss_legendre;

pub const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Constant quoted for lim c(M) in the source derivation.
pub const QUOTED_ASYMPTOTIC_CONSTANT: f64 = 1.0 / PI;

/// Constant implied by the power series and the erfi expansion.
pub const SERIES_ASYMPTOTIC_CONSTANT: f64 = 0.5;

/// Taylor path radius.
pub const SERIES_RADIUS: f64 = 8.0;
/// Taylor path is also used while |x| - Re x stays below this.
pub const SERIES_CANCELLATION_LIMIT: f64 = 10.0;
/// Expansion path threshold on |x|.
pub const ASYMPTOTIC_RADIUS: f64 = 40.0;
/// Gauss-Legendre nodes on [0, 1] for the quadrature path.
pub const QUADRATURE_NODES: usize = 96;

const LN_MAX: f64 = 709.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("non-finite argument {0}")]
    NonFinite(Complex64),
    #[error("g({x}) overflows double precision (ln|g| = {ln_modulus:.3}); use the log form")]
    Overflow { x: Complex64, ln_modulus: f64 },
    #[error("{what} = {value} is outside the validated range {range}")]
    OutOfRange { what: &'static str, value: f64, range: &'static str },
}

/// Which evaluation path produced a g value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GPath {
    Series,
    Quadrature,
    Asymptotic,
}

impl GPath {
    pub fn as_str(self) -> &'static str {
        match self {
            GPath::Series => "series",
            GPath::Quadrature => "quadrature",
            GPath::Asymptotic => "asymptotic",
        }
    }
}

/// ln g(x) together with the path used. The imaginary part is defined modulo 2 pi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GLog {
    pub ln_value: Complex64,
    pub path: GPath,
}

/// Error function of a real argument, relative accuracy about 1e-15.
pub fn erf_real(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let a = z.abs();
    let v = if a < 2.0 { erf_series(a) } else { 1.0 - erfc_cf(a) };
    v.copysign(z)
}

/// Complementary error function of a real argument.
pub fn erfc_real(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < 0.0 {
        2.0 - erfc_real(-z)
    } else if z < 2.0 {
        1.0 - erf_series(z)
    } else {
        erfc_cf(z)
    }
}

/// erf(z) = (2/sqrt(pi)) e^{-z^2} sum_n 2^n z^{2n+1} / (2n+1)!!, all terms positive.
fn erf_series(z: f64) -> f64 {
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    let mut n = 0.0;
    while term > 1e-17 * sum {
        term *= 2.0 * z2 / (2.0 * n + 3.0);
        sum += term;
        n += 1.0;
        if n > 500.0 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-z2).exp() * sum
}

/// erfc by the Laplace continued fraction, modified Lentz, z >= 2.
fn erfc_cf(z: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for n in 1..5000 {
        let a = 0.5 * n as f64;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-z * z).exp() / (f * PI.sqrt())
}

/// erf(z)/z with the removable point patched by its series for |z| < 1e-3.
pub fn erf_over_z(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        let z2 = z * z;
        FRAC_2_SQRT_PI * (1.0 - z2 / 3.0 + z2 * z2 / 10.0)
    } else {
        erf_real(z) / z
    }
}

/// Truncated Taylor sum of g with `terms` terms.
pub fn g_series(x: Complex64, terms: usize) -> Complex64 {
    let mut power = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..terms {
        if n > 0 {
            power = power * x / n as f64;
        }
        sum += power / (2 * n + 1) as f64;
    }
    sum
}

fn g_series_converged(x: Complex64) -> Complex64 {
    let mut power = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(1.0, 0.0);
    let ax = x.norm();
    let mut n = 1usize;
    loop {
        power = power * x / n as f64;
        let t = power / (2 * n + 1) as f64;
        sum += t;
        if (n as f64) > ax && t.norm() <= 1e-17 * sum.norm() {
            break;
        }
        if n > 400 {
            break;
        }
        n += 1;
    }
    sum
}

fn unit_interval_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(QUADRATURE_NODES);
        let t2 = x.iter().map(|v| {
            let t = 0.5 * (v + 1.0);
            t * t
        });
        (t2.collect(), w.iter().map(|v| 0.5 * v).collect())
    })
}

/// Gauss-Legendre evaluation of the integral form of g.
pub fn g_quadrature(x: Complex64) -> Complex64 {
    let (t2, w) = unit_interval_rule();
    let mut sum = Complex64::new(0.0, 0.0);
    for (a, b) in t2.iter().zip(w) {
        sum += (x * a).exp() * b;
    }
    sum
}

/// ln g from the large-|x| expansion; accurate for |x| >= ASYMPTOTIC_RADIUS.
pub fn g_asymptotic_ln(x: Complex64) -> Complex64 {
    let inv = 1.0 / (2.0 * x);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut n = 0.0;
    loop {
        let next = term * ((2.0 * n + 1.0) * inv);
        if next.norm() >= term.norm() || next.norm() < 1e-17 * sum.norm() {
            break;
        }
        sum += next;
        term = next;
        n += 1.0;
    }
    let dominant = x - (2.0 * x).ln() + sum.ln();
    let sub = Complex64::new(0.5 * PI.ln() - std::f64::consts::LN_2, 0.0) - 0.5 * (-x).ln();
    log_add_exp(dominant, sub)
}

/// ln(e^a + e^b) for complex a, b.
pub fn log_add_exp(a: Complex64, b: Complex64) -> Complex64 {
    let (hi, lo) = if a.re >= b.re { (a, b) } else { (b, a) };
    if hi.re == f64::NEG_INFINITY {
        return hi;
    }
    let d = lo - hi;
    if d.re < -745.0 {
        return hi;
    }
    let w = d.exp();
    let l = if w.norm() < 1e-8 { w - w * w * 0.5 + w * w * w / 3.0 } else { (1.0 + w).ln() };
    hi + l
}

/// Path selection for g.
pub fn g_path(x: Complex64) -> GPath {
    let ax = x.norm();
    if ax >= ASYMPTOTIC_RADIUS {
        GPath::Asymptotic
    } else if ax <= SERIES_RADIUS || ax - x.re <= SERIES_CANCELLATION_LIMIT {
        GPath::Series
    } else {
        GPath::Quadrature
    }
}

/// ln g(x) for any finite complex x.
pub fn g_log(x: Complex64) -> Result<GLog, SpecialError> {
    if !(x.re.is_finite() && x.im.is_finite()) {
        return Err(SpecialError::NonFinite(x));
    }
    let path = g_path(x);
    let ln_value = match path {
        GPath::Series => g_series_converged(x).ln(),
        GPath::Quadrature => g_quadrature(x).ln(),
        GPath::Asymptotic => g_asymptotic_ln(x),
    };
    Ok(GLog { ln_value, path })
}

/// g(x); fails with `Overflow` when |g| exceeds double range.
pub fn g_fn(x: Complex64) -> Result<Complex64, SpecialError> {
    if x == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let l = g_log(x)?;
    match l.path {
        GPath::Series => Ok(g_series_converged(x)),
        GPath::Quadrature => Ok(g_quadrature(x)),
        GPath::Asymptotic => {
            if l.ln_value.re > LN_MAX {
                Err(SpecialError::Overflow { x, ln_modulus: l.ln_value.re })
            } else {
                Ok(l.ln_value.exp())
            }
        }
    }
}

/// c(M) = g(M) M e^{-M}, computed in log space.
pub fn g_asymptotic_constant(m: f64) -> Result<f64, SpecialError> {
    if !(m >= 10.0 && m.is_finite()) {
        return Err(SpecialError::OutOfRange { what: "M", value: m, range: "[10, inf)" });
    }
    let l = g_log(Complex64::new(m, 0.0))?;
    Ok((l.ln_value.re + m.ln() - m).exp())
}

/// g(M + z) / g(M) - e^z.
pub fn g_ratio_check(m: f64, z: Complex64) -> Result<Complex64, SpecialError> {
    if !(m >= 20.0 && m.is_finite()) {
        return Err(SpecialError::OutOfRange { what: "M", value: m, range: "[20, inf)" });
    }
    if z.norm() > m / 10.0 {
        return Err(SpecialError::OutOfRange { what: "|z|", value: z.norm(), range: "[0, M/10]" });
    }
    if z == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let a = g_log(Complex64::new(m, 0.0) + z)?.ln_value;
    let b = g_log(Complex64::new(m, 0.0))?.ln_value;
    Ok((a - b).exp() - z.exp())
}
