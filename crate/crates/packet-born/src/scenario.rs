//! Physical parameters, the small-parameter scaling scheme and the head-on
//! collision geometry.
//!
//! Natural units with ħ = c = 1. A scenario is fixed by the momentum `p`,
//! the mass `m0`, the coupling `alpha` and the resolution parameter
//! `epsilon = sigma_p / p`; everything else is derived.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on epsilon. Keeps sqrt(epsilon) <= 1/2.
pub const EPSILON_LIMIT: f64 = 0.25;

/// Errors raised while building a scenario or a geometry.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("momentum p must be positive and finite, got {0}")]
    NonPositiveMomentum(f64),
    #[error("mass m0 must be positive and finite, got {0}")]
    NonPositiveMass(f64),
    #[error("coupling alpha must be finite, got {0}")]
    NonFiniteCoupling(f64),
    #[error(
        "epsilon = {value} is outside (0, {limit}); amplitudes are expansions in sqrt(epsilon) \
         and need epsilon << 1"
    )]
    EpsilonOutOfRange { value: f64, limit: f64 },
    #[error("scattering angle {0} is outside [0, pi)")]
    AngleOutOfRange(f64),
}

/// Plain 3-vector. The mean vectors of the problem live in the x-z plane but
/// the y component is kept so that momentum integrals stay three dimensional.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(self, a: f64) -> Vec3 {
        Vec3::new(a * self.x, a * self.y, a * self.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v.scale(self)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// All physical and derived parameters of one collision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringScenario {
    /// Momentum magnitude.
    pub p: f64,
    /// Mass.
    pub m0: f64,
    /// Coupling; negative values are attractive.
    pub alpha: f64,
    /// Momentum resolution sigma_p / p.
    pub epsilon: f64,
    /// Momentum width, epsilon * p.
    pub sigma_p: f64,
    /// Position width, 1 / (2 sigma_p).
    pub sigma_x: f64,
    /// Half separation R = sigma_x / sqrt(epsilon).
    pub separation: f64,
    /// Free evolution time T = 2R / (p/m0).
    pub time: f64,
    /// Sommerfeld parameter alpha m0 / p.
    pub eta: f64,
    /// Kinetic energy p^2 / (2 m0).
    pub energy: f64,
}

/// Builds a scenario with the default epsilon bound.
pub fn build_scenario(p: f64, m0: f64, alpha: f64, epsilon: f64) -> Result<ScatteringScenario, ScenarioError> {
    build_scenario_with_limit(p, m0, alpha, epsilon, EPSILON_LIMIT)
}

/// Builds a scenario, accepting epsilon in (0, limit).
pub fn build_scenario_with_limit(
    p: f64,
    m0: f64,
    alpha: f64,
    epsilon: f64,
    limit: f64,
) -> Result<ScatteringScenario, ScenarioError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(ScenarioError::NonPositiveMomentum(p));
    }
    if !(m0.is_finite() && m0 > 0.0) {
        return Err(ScenarioError::NonPositiveMass(m0));
    }
    if !alpha.is_finite() {
        return Err(ScenarioError::NonFiniteCoupling(alpha));
    }
    if !(epsilon > 0.0 && epsilon < limit) {
        return Err(ScenarioError::EpsilonOutOfRange { value: epsilon, limit });
    }
    let sigma_p = epsilon * p;
    let sigma_x = 0.5 / sigma_p;
    let separation = sigma_x / epsilon.sqrt();
    let time = 2.0 * separation * m0 / p;
    Ok(ScatteringScenario {
        p,
        m0,
        alpha,
        epsilon,
        sigma_p,
        sigma_x,
        separation,
        time,
        eta: alpha * m0 / p,
        energy: p * p / (2.0 * m0),
    })
}

impl ScatteringScenario {
    /// Speed p / m0.
    pub fn velocity(&self) -> f64 {
        self.p / self.m0
    }

    /// Phase E T carried by every amplitude.
    pub fn phase_et(&self) -> f64 {
        self.energy * self.time
    }

    /// Same scenario with a different coupling.
    pub fn with_alpha(&self, alpha: f64) -> ScatteringScenario {
        ScatteringScenario { alpha, eta: alpha * self.m0 / self.p, ..*self }
    }

    /// Mean vectors for scattering angle `theta`.
    pub fn geometry(&self, theta: f64) -> Result<Geometry, ScenarioError> {
        Geometry::new(self, theta)
    }
}

/// Initial and final packet centres and mean momenta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub theta: f64,
    pub r_i: Vec3,
    pub r_f: Vec3,
    pub p_i: Vec3,
    pub p_f: Vec3,
    pub p_plus: Vec3,
}

impl Geometry {
    pub fn new(s: &ScatteringScenario, theta: f64) -> Result<Geometry, ScenarioError> {
        if !(0.0..std::f64::consts::PI).contains(&theta) {
            return Err(ScenarioError::AngleOutOfRange(theta));
        }
        Ok(Self::unchecked(s, theta))
    }

    /// Geometry without the angle check; used by oracles that accept theta = pi.
    pub(crate) fn unchecked(s: &ScatteringScenario, theta: f64) -> Geometry {
        let (st, ct) = theta.sin_cos();
        let dir_f = Vec3::new(st, 0.0, ct);
        let dir_i = Vec3::new(0.0, 0.0, 1.0);
        let p_i = s.p * dir_i;
        let p_f = s.p * dir_f;
        Geometry { theta, r_i: -(s.separation * dir_i), r_f: s.separation * dir_f, p_i, p_f, p_plus: 0.5 * (p_f + p_i) }
    }

    /// Momentum transfer squared, 4 p^2 sin^2(theta/2).
    pub fn q_sqr(&self) -> f64 {
        (self.p_f - self.p_i).norm_sqr()
    }
}

/// sin(theta/2) and cos(theta/2).
pub fn half_angle(theta: f64) -> (f64, f64) {
    (0.5 * theta).sin_cos()
}
