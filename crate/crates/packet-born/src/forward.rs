//! First-order amplitude in the forward direction.
//!
//! At theta = 0 the first-order amplitude reduces to
//! M1(0) = -e^{iET} i (eta/4) I(Z), with I(Z) the integral of erf(z)/z over
//! [-Z, Z] and Z = sqrt(8/eps). For large Z, I(Z) = 2 ln Z + gamma + 2 ln 2.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{
    gauss_legendre, integrate_adaptive_1d, integrate_adaptive_semi_infinite, IntegralResult, QuadratureError,
    QuadratureSpec,
};
use crate::scenario::{build_scenario, ScatteringScenario};
use crate::specfun::{erf_over_z, erf_real, erfc_real, FRAC_2_SQRT_PI};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Large-Z intercept of I(Z) - 2 ln Z.
pub const LOG_LAW_INTERCEPT: f64 = EULER_GAMMA + 2.0 * std::f64::consts::LN_2;

/// Default grid for the logarithmic fit.
pub const DEFAULT_FIT_GRID: [f64; 5] = [1e-2, 3.162_277_660_168_379_5e-3, 1e-3, 3.162_277_660_168_379_5e-4, 1e-4];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForwardError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("forward integral did not converge (error estimate {0:e})")]
    NotConverged(f64),
    #[error("degenerate fit grid: {0}")]
    DegenerateGrid(String),
    #[error("invalid epsilon {0} in fit grid")]
    InvalidEpsilon(f64),
}

/// One grid point of the forward fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardPoint {
    pub epsilon: f64,
    pub z: f64,
    /// I(Z) over the symmetric interval.
    pub integral: f64,
    /// |M1(0)| / eta = I(Z) / 4.
    pub modulus_over_eta: f64,
}

/// Least-squares fit of I(Z) = slope * ln Z + intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub epsilon_grid: Vec<f64>,
    pub points: Vec<ForwardPoint>,
}

/// Upper limit Z = sqrt(8 / eps).
pub fn forward_cutoff(epsilon: f64) -> f64 {
    (8.0 / epsilon).sqrt()
}

/// pi^2 erf(sqrt2 v s / sigma_x) / (v s), s = tau - T/2, with the s -> 0 limit
/// pi^2 (2/sqrt(pi)) sqrt2 / sigma_x.
pub fn forward_kernel_reduction(k_plus_speed: f64, tau_offset: f64, scenario: &ScatteringScenario) -> f64 {
    let a = std::f64::consts::SQRT_2 / scenario.sigma_x;
    let vs = k_plus_speed * tau_offset;
    PI * PI * a * erf_over_z(a * vs)
}

/// Left side of the kernel reduction at regulator `lambda` (absolute units):
/// the integral over k of e^{-k^2 / 8 sigma_p^2} e^{2i v k_z s} / (k^2 + lambda^2),
/// with v along z. Computed as a spherical product rule: adaptive radial
/// integral, Gauss-Legendre in cos(polar angle), trapezoid in azimuth.
pub fn forward_kernel_direct(
    k_plus_speed: f64,
    tau_offset: f64,
    lambda: f64,
    scenario: &ScatteringScenario,
    spec: &QuadratureSpec,
) -> Result<IntegralResult, QuadratureError> {
    let beta = 1.0 / (8.0 * scenario.sigma_p * scenario.sigma_p);
    let a = 2.0 * k_plus_speed * tau_offset;
    let width = (1.0 / beta).sqrt();
    // enough polar nodes for the e^{i a k cos} oscillation over the Gaussian support
    let n_mu = (24.0 + 2.0 * (a * 8.0 * width).abs()).ceil() as usize;
    let (mu, wmu) = gauss_legendre(n_mu.min(4000));
    const N_PHI: usize = 8;
    let angular = |k: f64| -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for (m, w) in mu.iter().zip(&wmu) {
            let st = (1.0 - m * m).max(0.0).sqrt();
            let mut ring = Complex64::new(0.0, 0.0);
            for j in 0..N_PHI {
                let phi = 2.0 * PI * j as f64 / N_PHI as f64;
                let kz = k * m;
                // k_x, k_y enter only through k^2; the ring sum stays explicit
                let kx = k * st * phi.cos();
                let ky = k * st * phi.sin();
                let k2 = kx * kx + ky * ky + kz * kz;
                ring += Complex64::from_polar((-beta * k2).exp() / (k2 + lambda * lambda), a * kz);
            }
            sum += ring * (*w * 2.0 * PI / N_PHI as f64);
        }
        sum
    };
    let cut = 12.0 * width;
    let inner = integrate_adaptive_1d(|k| angular(k) * (k * k), 0.0, cut, spec)?;
    let tail = integrate_adaptive_semi_infinite(|k| angular(k) * (k * k), cut, spec)?;
    Ok(IntegralResult {
        value: inner.value + tail.value,
        error_estimate: inner.error_estimate + tail.error_estimate,
        evaluations: inner.evaluations + tail.evaluations,
        converged: inner.converged && tail.converged,
    })
}

/// Closed form of the regulated left side,
/// (pi^2 / a) e^{b l^2} [e^{-a l} erfc(l sqrt(b) - a / 2 sqrt(b)) - e^{a l} erfc(l sqrt(b) + a / 2 sqrt(b))]
/// with a = 2 v s, b = 1 / 8 sigma_p^2, l = lambda. Tends to the reduction as lambda -> 0.
pub fn forward_kernel_regulated(k_plus_speed: f64, tau_offset: f64, lambda: f64, scenario: &ScatteringScenario) -> f64 {
    let beta = 1.0 / (8.0 * scenario.sigma_p * scenario.sigma_p);
    let rb = beta.sqrt();
    let a = (2.0 * k_plus_speed * tau_offset).abs();
    let lr = lambda * rb;
    if a / rb < 1e-6 {
        let core = PI.sqrt() / (2.0 * rb) - 0.5 * PI * lambda * (lr * lr).exp() * erfc_real(lr);
        return 4.0 * PI * core;
    }
    let y = 0.5 * a / rb;
    let first = (lr * lr - a * lambda).exp() * erfc_real(lr - y);
    let second = if lr + y > 26.0 { 0.0 } else { (lr * lr + a * lambda).exp() * erfc_real(lr + y) };
    PI * PI / a * (first - second)
}

/// I(Z) = 2 * integral of erf(z)/z over [0, Z].
pub fn forward_integral(epsilon: f64, spec: &QuadratureSpec) -> Result<IntegralResult, ForwardError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ForwardError::InvalidEpsilon(epsilon));
    }
    let z = forward_cutoff(epsilon);
    let half = integrate_adaptive_1d(|x| Complex64::new(erf_over_z(x), 0.0), 0.0, z, spec)?;
    if !half.converged {
        return Err(ForwardError::NotConverged(half.error_estimate));
    }
    Ok(half.scaled(Complex64::new(2.0, 0.0)))
}

/// Dense trapezoid evaluation of I(Z), used as an independent check.
pub fn forward_integral_trapezoid(z: f64, intervals: usize) -> f64 {
    let h = z / intervals as f64;
    let mut sum = 0.5 * (FRAC_2_SQRT_PI + erf_real(z) / z);
    for j in 1..intervals {
        sum += erf_over_z(j as f64 * h);
    }
    2.0 * h * sum
}

/// M1(0) = -e^{iET} i (eta / 4) I(Z).
pub fn m1_forward(scenario: &ScatteringScenario, spec: &QuadratureSpec) -> Result<Complex64, ForwardError> {
    if scenario.eta == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let i = forward_integral(scenario.epsilon, spec)?.value.re;
    let et = scenario.phase_et();
    Ok(-Complex64::from_polar(1.0, et) * Complex64::new(0.0, 0.25 * scenario.eta * i))
}

fn validate_grid(grid: &[f64]) -> Result<(), ForwardError> {
    if let Some(&bad) = grid.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(ForwardError::InvalidEpsilon(bad));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 5 {
        return Err(ForwardError::DegenerateGrid(format!("{} distinct values, need at least 5", sorted.len())));
    }
    let decades = (sorted[sorted.len() - 1] / sorted[0]).log10();
    if decades < 2.0 - 1e-9 {
        return Err(ForwardError::DegenerateGrid(format!("grid spans {decades:.3} decades, need at least 2")));
    }
    Ok(())
}

/// Unweighted least squares of 4|M1(0)|/eta = I(Z) against ln sqrt(8/eps).
pub fn fit_forward_log_law(epsilon_grid: &[f64], spec: &QuadratureSpec) -> Result<FitResult, ForwardError> {
    validate_grid(epsilon_grid)?;
    let points: Vec<ForwardPoint> = epsilon_grid
        .par_iter()
        .map(|&eps| {
            let s = build_scenario(1.0, 1.0, 1.0, eps).map_err(|_| ForwardError::InvalidEpsilon(eps))?;
            let m = m1_forward(&s, spec)?;
            let integral = 4.0 * m.norm();
            Ok(ForwardPoint { epsilon: eps, z: forward_cutoff(eps), integral, modulus_over_eta: 0.25 * integral })
        })
        .collect::<Result<_, ForwardError>>()?;
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.z.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.integral).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).abs()).fold(0.0, f64::max);
    Ok(FitResult { slope, intercept, max_residual, epsilon_grid: epsilon_grid.to_vec(), points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec { adaptive_rel_tol: 1e-12, adaptive_abs_tol: 1e-14, ..QuadratureSpec::default() }
    }

    #[test]
    fn kernel_limit_at_closest_approach() {
        let s = build_scenario(1.0, 1.0, 0.1, 0.01).unwrap();
        let expect = PI * PI * FRAC_2_SQRT_PI * std::f64::consts::SQRT_2 / s.sigma_x;
        assert!((forward_kernel_reduction(0.7, 0.0, &s) - expect).abs() < 1e-15 * expect);
    }

    #[test]
    fn kernel_is_even_in_offset() {
        let s = build_scenario(1.0, 1.0, 0.1, 0.01).unwrap();
        for off in [0.3, 17.0, 250.0] {
            assert_eq!(forward_kernel_reduction(1.1, off, &s), forward_kernel_reduction(1.1, -off, &s));
        }
    }

    #[test]
    fn modulus_at_one_per_mille() {
        let s = build_scenario(1.0, 1.0, 0.3, 0.001).unwrap();
        let m = m1_forward(&s, &spec()).unwrap();
        let pref = m.norm() / s.eta;
        assert!((pref - 2.737_676_711_670_896).abs() < 1e-9, "{pref}");
        assert!((pref - 2.74).abs() < 0.01);
    }

    #[test]
    fn stripped_phase_is_minus_i() {
        let s = build_scenario(1.0, 1.0, 0.2, 0.01).unwrap();
        let m = m1_forward(&s, &spec()).unwrap() * Complex64::from_polar(1.0, -s.phase_et());
        assert!(m.re.abs() < 1e-12 * m.norm());
        assert!(m.im < 0.0);
    }

    #[test]
    fn zero_coupling_gives_zero() {
        let s = build_scenario(1.0, 1.0, 0.0, 0.01).unwrap();
        assert_eq!(m1_forward(&s, &spec()).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn halving_z_drops_two_ln2() {
        let big = forward_integral(0.001, &spec()).unwrap().value.re;
        let small = forward_integral(0.004, &spec()).unwrap().value.re;
        let trap = forward_integral_trapezoid(forward_cutoff(0.001), 1_000_000)
            - forward_integral_trapezoid(forward_cutoff(0.004), 1_000_000);
        assert!((big - small - trap).abs() < 1e-8);
        assert!((big - small - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn matches_trapezoid_oracle() {
        let z = forward_cutoff(0.001);
        let adaptive = forward_integral(0.001, &spec()).unwrap().value.re;
        let trap = forward_integral_trapezoid(z, 1_000_000);
        assert!((adaptive - trap).abs() < 1e-9, "{adaptive} {trap}");
        assert!((adaptive - 10.950_706_846_683_585).abs() < 1e-10);
    }

    #[test]
    fn log_law_fit() {
        let fit = fit_forward_log_law(&DEFAULT_FIT_GRID, &spec()).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.05, "{}", fit.slope);
        assert!((fit.intercept - 1.96).abs() < 0.05, "{}", fit.intercept);
        assert!(fit.max_residual <= 0.02);
        assert!((fit.intercept - LOG_LAW_INTERCEPT).abs() < 1e-6);
    }

    #[test]
    fn modulus_grows_as_epsilon_shrinks() {
        let fit = fit_forward_log_law(&DEFAULT_FIT_GRID, &spec()).unwrap();
        assert!(fit.points.windows(2).all(|w| w[1].modulus_over_eta > w[0].modulus_over_eta));
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(matches!(fit_forward_log_law(&[1e-3], &spec()), Err(ForwardError::DegenerateGrid(_))));
        let narrow = [1e-3, 2e-3, 3e-3, 4e-3, 5e-3];
        assert!(matches!(fit_forward_log_law(&narrow, &spec()), Err(ForwardError::DegenerateGrid(_))));
        assert!(matches!(fit_forward_log_law(&[1e-3, -1.0], &spec()), Err(ForwardError::InvalidEpsilon(_))));
    }

    #[test]
    fn direct_kernel_matches_reduction_without_regulator() {
        let s = build_scenario(1.0, 1.0, 0.1, 0.04).unwrap();
        for (v, off) in [(1.0, 3.0), (0.6, -11.0), (1.3, 0.5)] {
            let direct = forward_kernel_direct(v, off, 0.0, &s, &spec()).unwrap();
            let reduced = forward_kernel_reduction(v, off, &s);
            assert!((direct.value.re - reduced).abs() <= 1e-8 * reduced, "{} {reduced}", direct.value.re);
            assert!(direct.value.im.abs() <= 1e-8 * reduced);
        }
    }

    #[test]
    fn regulated_form_tends_to_reduction() {
        let s = build_scenario(1.0, 1.0, 0.1, 0.01).unwrap();
        for (v, off) in [(1.0, 3.0), (0.6, -11.0), (1.3, 0.0)] {
            let r = forward_kernel_reduction(v, off, &s);
            assert!((forward_kernel_regulated(v, off, 0.0, &s) - r).abs() < 1e-12 * r);
        }
    }

    #[test]
    fn direct_kernel_at_sixteenth_sigma() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(24);
        let s = build_scenario(1.0, 1.0, 0.1, 0.04).unwrap();
        let lambda = s.sigma_p / 16.0;
        for _ in 0..4 {
            let v = rng.random_range(0.5..1.5);
            let off = rng.random_range(-0.2..0.2) * s.time;
            let direct = forward_kernel_direct(v, off, lambda, &s, &spec()).unwrap();
            let exact = forward_kernel_regulated(v, off, lambda, &s);
            assert!((direct.value.re - exact).abs() <= 1e-4 * exact.abs(), "{} {exact}", direct.value.re);
            // the regulated kernel sits O(lambda / sigma_p) below the lambda -> 0 reduction
            let gap = 1.0 - exact / forward_kernel_reduction(v, off, &s);
            assert!(gap > 0.0 && gap < 0.2, "{gap}");
        }
    }
}
