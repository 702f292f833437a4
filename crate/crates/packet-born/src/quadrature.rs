//! Deterministic integration engines: Gauss-Hermite tensor rules for
//! Gaussian-weighted momentum integrals, adaptive Gauss-Kronrod for one
//! dimensional integrals, composite Gauss-Legendre panels, and a regulator
//! schedule driver that extrapolates lambda -> 0.
//!
//! Every sum runs in a fixed order so results are bit-reproducible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite integrand value {value} at node {node}")]
    NonFinite { node: Vec3, value: Complex64 },
    #[error("non-finite integrand value {value} at abscissa {at}")]
    NonFinite1d { at: f64, value: Complex64 },
    #[error("empty regulator schedule")]
    EmptySchedule,
}

/// Node counts, tolerances and the regulator schedule for oracle integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Hermite nodes per axis for 3D Gaussian-weighted integrals.
    pub hermite_nodes_per_axis: usize,
    pub adaptive_rel_tol: f64,
    pub adaptive_abs_tol: f64,
    pub max_subdivisions: usize,
    /// Regulator values in units of sigma_p, strictly decreasing.
    pub lambda_schedule: Vec<f64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            hermite_nodes_per_axis: 24,
            adaptive_rel_tol: 1e-8,
            adaptive_abs_tol: 1e-12,
            max_subdivisions: 2000,
            lambda_schedule: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), QuadratureError> {
        if self.hermite_nodes_per_axis < 8 {
            return Err(QuadratureError::InvalidSpec(format!(
                "hermite_nodes_per_axis = {} (need >= 8)",
                self.hermite_nodes_per_axis
            )));
        }
        if !(self.adaptive_rel_tol > 0.0 && self.adaptive_abs_tol > 0.0) {
            return Err(QuadratureError::InvalidSpec("tolerances must be positive".into()));
        }
        if self.max_subdivisions == 0 {
            return Err(QuadratureError::InvalidSpec("max_subdivisions must be positive".into()));
        }
        if self.lambda_schedule.is_empty() {
            return Err(QuadratureError::EmptySchedule);
        }
        if self.lambda_schedule.iter().any(|&l| !(l > 0.0 && l.is_finite()))
            || self.lambda_schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(QuadratureError::InvalidSpec(
                "lambda_schedule must be positive and strictly decreasing".into(),
            ));
        }
        Ok(())
    }

    /// Copy of these settings with enough Hermite nodes for a phase e^{i k.R}
    /// across a packet of momentum width `width`. Returns whether a bump
    /// happened.
    pub fn bumped_for_oscillation(&self, width: f64, r: f64) -> (QuadratureSpec, bool) {
        let need = required_hermite_nodes(width, r);
        if need > self.hermite_nodes_per_axis {
            log::warn!(
                "raising hermite nodes per axis from {} to {} for phase scale |R| = {}",
                self.hermite_nodes_per_axis,
                need,
                r
            );
            let mut s = self.clone();
            s.hermite_nodes_per_axis = need;
            (s, true)
        } else {
            (self.clone(), false)
        }
    }
}

/// Node count needed to resolve e^{i k.R} under a Gaussian of width `width`:
/// six nodes per unit of width * |R|.
pub fn required_hermite_nodes(width: f64, r: f64) -> usize {
    (6.0 * width * r).ceil().max(0.0) as usize
}

/// Value, error estimate and cost of one integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub evaluations: u64,
    /// False when a rule stopped before meeting its tolerance.
    pub converged: bool,
}

impl IntegralResult {
    pub fn scaled(self, a: Complex64) -> IntegralResult {
        IntegralResult { value: self.value * a, error_estimate: self.error_estimate * a.norm(), ..self }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss-Hermite rule for the weight e^{-y^2/2} on the real line:
/// sum w_i f(y_i) approximates the integral of e^{-y^2/2} f(y).
pub fn gauss_hermite_prob(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_hermite_phys(n);
    let s2 = std::f64::consts::SQRT_2;
    (x.iter().map(|v| v * s2).collect(), w.iter().map(|v| v * s2).collect())
}

/// Gauss-Hermite rule for the weight e^{-x^2}, nodes ascending.
pub fn gauss_hermite_phys(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_hermite needs at least one node");
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / (pp * pp);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..m {
        nodes[i] = -x[i];
        nodes[n - 1 - i] = x[i];
        weights[i] = w[i];
        weights[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Integral of e^{-(k-c)^2 / 2 width^2} f(k) over R^3 on an n^3 tensor rule.
pub fn gaussian_3d_fixed<F>(f: &F, center: Vec3, width: f64, n: usize) -> Result<Complex64, QuadratureError>
where
    F: Fn(Vec3) -> Complex64 + ?Sized,
{
    let (y, w) = gauss_hermite_prob(n);
    let mut total = Complex64::new(0.0, 0.0);
    for (i, &yi) in y.iter().enumerate() {
        let mut plane = Complex64::new(0.0, 0.0);
        for (j, &yj) in y.iter().enumerate() {
            let mut line = Complex64::new(0.0, 0.0);
            for (l, &yl) in y.iter().enumerate() {
                let k = Vec3::new(center.x + width * yi, center.y + width * yj, center.z + width * yl);
                let v = f(k);
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(QuadratureError::NonFinite { node: k, value: v });
                }
                line += v * w[l];
            }
            plane += line * w[j];
        }
        total += plane * w[i];
    }
    Ok(total * width.powi(3))
}

/// Gaussian-weighted 3D integral with an n versus n+4 error estimate.
pub fn integrate_gaussian_3d<F>(
    f: F,
    center: Vec3,
    width: f64,
    spec: &QuadratureSpec,
) -> Result<IntegralResult, QuadratureError>
where
    F: Fn(Vec3) -> Complex64,
{
    if !(width > 0.0 && width.is_finite()) {
        return Err(QuadratureError::InvalidSpec(format!("width must be positive, got {width}")));
    }
    let n = spec.hermite_nodes_per_axis;
    let coarse = gaussian_3d_fixed(&f, center, width, n)?;
    let fine = gaussian_3d_fixed(&f, center, width, n + 4)?;
    let err = (fine - coarse).norm();
    let tol = spec.adaptive_abs_tol.max(spec.adaptive_rel_tol * coarse.norm());
    Ok(IntegralResult {
        value: coarse,
        error_estimate: err,
        evaluations: (n.pow(3) + (n + 4).pow(3)) as u64,
        converged: err <= tol.max(1e-6 * coarse.norm()),
    })
}

const GK_XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

struct Segment {
    a: f64,
    b: f64,
    value: Vec<Complex64>,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error && self.a == o.a
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error).then_with(|| o.a.total_cmp(&self.a))
    }
}

fn gk15<F>(f: &F, a: f64, b: f64, dim: usize) -> Result<(Vec<Complex64>, f64), QuadratureError>
where
    F: Fn(f64) -> Vec<Complex64>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![Complex64::new(0.0, 0.0); dim];
    let mut gauss = vec![Complex64::new(0.0, 0.0); dim];
    let eval = |x: f64| -> Result<Vec<Complex64>, QuadratureError> {
        let v = f(x);
        if let Some(bad) = v.iter().find(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(QuadratureError::NonFinite1d { at: x, value: *bad });
        }
        Ok(v)
    };
    let fc = eval(c)?;
    for d in 0..dim {
        kron[d] = fc[d] * GK_WK[7];
        gauss[d] = fc[d] * GK_WG[3];
    }
    for j in 0..7 {
        let dx = h * GK_XK[j];
        let f1 = eval(c - dx)?;
        let f2 = eval(c + dx)?;
        for d in 0..dim {
            let s = f1[d] + f2[d];
            kron[d] += s * GK_WK[j];
            if j % 2 == 1 {
                gauss[d] += s * GK_WG[j / 2];
            }
        }
    }
    let mut err: f64 = 0.0;
    for d in 0..dim {
        kron[d] *= h;
        gauss[d] *= h;
        err = err.max((kron[d] - gauss[d]).norm());
    }
    Ok((kron, err))
}

/// Adaptive Gauss-Kronrod (7-15) integration of a vector-valued integrand.
/// The error estimate is the largest component error; the tolerance applies
/// to the first component unless every component is checked.
pub fn integrate_adaptive_1d_vec<F>(
    f: F,
    a: f64,
    b: f64,
    dim: usize,
    spec: &QuadratureSpec,
) -> Result<(Vec<Complex64>, IntegralResult), QuadratureError>
where
    F: Fn(f64) -> Vec<Complex64>,
{
    if !(a < b) {
        return Err(QuadratureError::InvalidSpec(format!("need a < b, got [{a}, {b}]")));
    }
    let mut heap = BinaryHeap::new();
    let (v, e) = gk15(&f, a, b, dim)?;
    let mut evaluations = 15u64;
    heap.push(Segment { a, b, value: v, error: e });
    let mut converged = false;
    loop {
        let (total, err) = heap_totals(&heap, dim);
        let tol = spec.adaptive_abs_tol.max(spec.adaptive_rel_tol * total[0].norm());
        if err <= tol {
            converged = true;
            break;
        }
        if heap.len() >= spec.max_subdivisions {
            break;
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            heap.push(seg);
            break;
        }
        let (v1, e1) = gk15(&f, seg.a, mid, dim)?;
        let (v2, e2) = gk15(&f, mid, seg.b, dim)?;
        evaluations += 30;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
    }
    let (total, err) = heap_totals(&heap, dim);
    if !converged {
        log::warn!("adaptive rule on [{a}, {b}] stopped at {} segments, error {err:e}", heap.len());
    }
    let res = IntegralResult { value: total[0], error_estimate: err, evaluations, converged };
    Ok((total, res))
}

fn heap_totals(heap: &BinaryHeap<Segment>, dim: usize) -> (Vec<Complex64>, f64) {
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut total = vec![Complex64::new(0.0, 0.0); dim];
    let mut err = 0.0;
    for s in segs {
        for d in 0..dim {
            total[d] += s.value[d];
        }
        err += s.error;
    }
    (total, err)
}

/// Adaptive Gauss-Kronrod integration of a complex integrand on [a, b].
pub fn integrate_adaptive_1d<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<IntegralResult, QuadratureError>
where
    F: Fn(f64) -> Complex64,
{
    integrate_adaptive_1d_vec(|x| vec![f(x)], a, b, 1, spec).map(|(_, r)| r)
}

/// Integral over [a, inf) through the map x = a + t / (1 - t).
pub fn integrate_adaptive_semi_infinite<F>(
    f: F,
    a: f64,
    spec: &QuadratureSpec,
) -> Result<IntegralResult, QuadratureError>
where
    F: Fn(f64) -> Complex64,
{
    integrate_adaptive_1d(
        |t| {
            if t >= 1.0 {
                return Complex64::new(0.0, 0.0);
            }
            let u = 1.0 - t;
            let v = f(a + t / u);
            if v == Complex64::new(0.0, 0.0) {
                v
            } else {
                v / (u * u)
            }
        },
        0.0,
        1.0,
        spec,
    )
}

/// Composite Gauss-Legendre rule on the panels delimited by `edges`.
pub fn composite_gauss_legendre(edges: &[f64], per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(per_panel);
    let mut nodes = Vec::with_capacity(edges.len().saturating_sub(1) * per_panel);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let h = 0.5 * (b - a);
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(a + h * (xi + 1.0));
            weights.push(h * wi);
        }
    }
    (nodes, weights)
}

/// Outcome of running an integrand over the regulator schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulatorReport {
    /// (lambda / sigma_p, value) in schedule order.
    pub samples: Vec<(f64, Complex64)>,
    /// Richardson extrapolants using the first 2, 3, ... samples.
    pub extrapolants: Vec<Complex64>,
    /// Final lambda -> 0 estimate.
    pub value: Complex64,
    /// Difference of the last two extrapolants.
    pub error_estimate: f64,
    /// Set when |f| grows monotonically by more than 10x across the schedule.
    pub divergent: bool,
    /// Largest relative deviation of a raw sample from the final estimate.
    pub raw_spread: f64,
}

/// Growth factor across the schedule that marks divergence.
pub const DIVERGENCE_GROWTH: f64 = 10.0;

/// Evaluates `f` at each lambda of the schedule and extrapolates to zero by
/// polynomial (Neville) extrapolation in lambda^2.
pub fn regulator_extrapolate<F>(f: F, spec: &QuadratureSpec) -> Result<RegulatorReport, QuadratureError>
where
    F: Fn(f64) -> Complex64,
{
    let samples: Vec<(f64, Complex64)> = spec.lambda_schedule.iter().map(|&l| (l, f(l))).collect();
    extrapolate_samples(samples)
}

/// Same as [`regulator_extrapolate`] for values that were computed together.
pub fn extrapolate_samples(samples: Vec<(f64, Complex64)>) -> Result<RegulatorReport, QuadratureError> {
    if samples.is_empty() {
        return Err(QuadratureError::EmptySchedule);
    }
    let h: Vec<f64> = samples.iter().map(|(l, _)| l * l).collect();
    let y: Vec<Complex64> = samples.iter().map(|(_, v)| *v).collect();
    let mut extrapolants = Vec::new();
    for m in 2..=samples.len() {
        extrapolants.push(neville_at_zero(&h[..m], &y[..m]));
    }
    let value = extrapolants.last().copied().unwrap_or(y[0]);
    let error_estimate = match extrapolants.len() {
        0 => f64::INFINITY,
        1 => (extrapolants[0] - y[y.len() - 1]).norm(),
        k => (extrapolants[k - 1] - extrapolants[k - 2]).norm(),
    };
    let moduli: Vec<f64> = y.iter().map(|v| v.norm()).collect();
    let monotone = moduli.windows(2).all(|w| w[1] > w[0]);
    let divergent = monotone && moduli.len() >= 2 && moduli[moduli.len() - 1] > DIVERGENCE_GROWTH * moduli[0];
    let scale = value.norm().max(1e-300);
    let raw_spread = y.iter().map(|v| (v - value).norm() / scale).fold(0.0, f64::max);
    Ok(RegulatorReport { samples, extrapolants, value, error_estimate, divergent, raw_spread })
}

fn neville_at_zero(h: &[f64], y: &[Complex64]) -> Complex64 {
    let mut p = y.to_vec();
    let n = h.len();
    for m in 1..n {
        for i in 0..n - m {
            let (hi, hj) = (h[i], h[i + m]);
            p[i] = (p[i + 1] * hi - p[i] * hj) / (hi - hj);
        }
    }
    p[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 16, 33, 80] {
            let (x, w) = gauss_legendre(n);
            let sw: f64 = w.iter().sum();
            assert!((sw - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let m: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((m - exact).abs() < 1e-12, "n={n}");
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn hermite_moments() {
        for n in [1usize, 4, 9, 24, 28, 60] {
            let (y, w) = gauss_hermite_prob(n);
            let norm = (2.0 * PI).sqrt();
            let m0: f64 = w.iter().sum();
            let m2: f64 = y.iter().zip(&w).map(|(a, b)| b * a * a).sum();
            assert!((m0 / norm - 1.0).abs() < 1e-13, "n={n}");
            if n >= 2 {
                assert!((m2 / norm - 1.0).abs() < 1e-12, "n={n}");
            }
            if n >= 3 {
                let m4: f64 = y.iter().zip(&w).map(|(a, b)| b * a.powi(4)).sum();
                assert!((m4 / norm - 3.0).abs() < 1e-11, "n={n}");
            }
        }
    }

    #[test]
    fn gaussian_3d_normalisation_and_moment() {
        let spec = QuadratureSpec::default();
        let sigma = 0.01;
        let r = integrate_gaussian_3d(|_| c(1.0), Vec3::new(0.3, 0.0, -1.0), sigma, &spec).unwrap();
        let norm = (2.0 * PI * sigma * sigma).powf(1.5);
        assert!((r.value.re / norm - 1.0).abs() < 1e-12);
        let ctr = Vec3::new(0.0, 0.0, 1.0);
        let r = integrate_gaussian_3d(|k| c((k.x - ctr.x).powi(2)), ctr, sigma, &spec).unwrap();
        assert!((r.value.re / (norm * sigma * sigma) - 1.0).abs() < 1e-12);
        assert_eq!(r.evaluations, 24u64.pow(3) + 28u64.pow(3));
    }

    #[test]
    fn gaussian_3d_reports_non_finite_node() {
        let spec = QuadratureSpec { hermite_nodes_per_axis: 8, ..Default::default() };
        let e = integrate_gaussian_3d(|k| c(1.0 / k.x.max(0.0)), Vec3::ZERO, 1.0, &spec).unwrap_err();
        assert!(matches!(e, QuadratureError::NonFinite { .. }));
    }

    #[test]
    fn node_bump() {
        let spec = QuadratureSpec::default();
        assert_eq!(required_hermite_nodes(0.01, 500.0), 30);
        let (s, bumped) = spec.bumped_for_oscillation(0.01, 500.0);
        assert!(bumped);
        assert_eq!(s.hermite_nodes_per_axis, 30);
        let (s, bumped) = spec.bumped_for_oscillation(0.04, 62.5);
        assert!(!bumped);
        assert_eq!(s.hermite_nodes_per_axis, 24);
    }

    #[test]
    fn adaptive_basics() {
        let spec = QuadratureSpec::default();
        let r = integrate_adaptive_1d(|z| c(z * z), 0.0, 1.0, &spec).unwrap();
        assert!((r.value.re - 1.0 / 3.0).abs() < 1e-15);
        assert!(r.converged);
        let r = integrate_adaptive_semi_infinite(|z| c((-z * z).exp()), 0.0, &spec).unwrap();
        assert!((r.value.re - PI.sqrt() / 2.0).abs() < 1e-10);
        let r = integrate_adaptive_1d(|z| Complex64::new(0.0, 10.0 * z).exp(), 0.0, 20.0, &spec).unwrap();
        let exact = (Complex64::new(0.0, 200.0).exp() - 1.0) / Complex64::new(0.0, 10.0);
        assert!((r.value - exact).norm() < 1e-9);
    }

    #[test]
    fn adaptive_flags_non_convergence() {
        let spec = QuadratureSpec { max_subdivisions: 3, ..Default::default() };
        let r = integrate_adaptive_1d(|z| c(z.abs().sqrt().recip().min(1e8)), -1.0, 1.0, &spec).unwrap();
        assert!(!r.converged);
        assert!(r.error_estimate > 0.0);
    }

    #[test]
    fn adaptive_rejects_reversed_interval() {
        let spec = QuadratureSpec::default();
        assert!(integrate_adaptive_1d(|_| c(1.0), 1.0, 0.0, &spec).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = QuadratureSpec::default();
        assert!(s.validate().is_ok());
        s.lambda_schedule = vec![1.0, 1.0];
        assert!(s.validate().is_err());
        s.lambda_schedule = vec![];
        assert!(s.validate().is_err());
        let s = QuadratureSpec { hermite_nodes_per_axis: 4, ..Default::default() };
        assert!(s.validate().is_err());
        let s = QuadratureSpec { adaptive_rel_tol: 0.0, ..Default::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn extrapolation_examples() {
        let spec = QuadratureSpec::default();
        let r = regulator_extrapolate(|_| Complex64::new(7.0, 0.0), &spec).unwrap();
        assert_eq!(r.value, Complex64::new(7.0, 0.0));
        assert!(!r.divergent);
        let r = regulator_extrapolate(|l| c(1.0 + l * l), &spec).unwrap();
        assert!((r.value - c(1.0)).norm() < 1e-14);
        let r = regulator_extrapolate(|l| c(1.0 / (l * l)), &spec).unwrap();
        assert!(r.divergent);
        let r = regulator_extrapolate(|l| c(2.0 - 3.0 * l * l + 0.5 * l.powi(4)), &spec).unwrap();
        assert!((r.value - c(2.0)).norm() < 1e-13);
        assert!(r.error_estimate < 1e-13);
    }

    #[test]
    fn composite_rule_integrates_on_panels() {
        let (x, w) = composite_gauss_legendre(&[0.0, 0.1, 0.5, 2.0], 6);
        let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(3)).sum();
        assert!((s - 4.0).abs() < 1e-13);
        assert_eq!(x.len(), 18);
    }
}
