//! Closed-form finite amplitudes at orders 0, 1 and 2 and the bridge from
//! probabilities to differential cross sections.
//!
//! With s = sin(theta/2), c = cos(theta/2):
//!
//! - M0 = e^{iET} e^{-s^2 / 2 eps^2}
//! - M1 = -i e^{iET} 2 eta eps^2 / s^2
//! - M2 = -e^{iET} e^{i s^2 / 2 eps^{3/2}} C eta^2 eps^{7/2} e^{-s^2 / 2 eps} / (s^5 c)
//!
//! where C defaults to 16/pi^2 and can be replaced by a calibrated value.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{half_angle, ScatteringScenario};

/// Quoted prefactor of the second-order amplitude.
pub const QUOTED_M2_PREFACTOR: f64 = 16.0 / (PI * PI);

/// Default validity boundary theta_min = THETA_MIN_FACTOR * epsilon.
pub const THETA_MIN_FACTOR: f64 = 10.0;

const LN_UNDERFLOW: f64 = -745.2;
const LN_OVERFLOW: f64 = 709.7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BornError {
    #[error("theta = {theta} is below theta_min = {theta_min}; use the forward amplitude for the forward peak")]
    BelowThetaMin { theta: f64, theta_min: f64 },
    #[error("theta = {0} is outside [0, pi]")]
    AngleOutOfRange(f64),
    #[error("theta = {0} is outside the second-order window [theta_min, pi)")]
    SecondOrderRange(f64),
    #[error("rutherford cross section is undefined at theta = 0")]
    ZeroAngle,
    #[error("probability must be non-negative and finite, got {0}")]
    NegativeProbability(f64),
    #[error("amplitude overflows double precision (ln modulus {0})")]
    Overflow(f64),
}

/// Whether the common factor e^{iET} is kept or divided out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PhaseConvention {
    #[default]
    Included,
    Stripped,
}

/// Configuration of the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms {
    pub theta_min_factor: f64,
    pub m2_prefactor: f64,
    pub phase: PhaseConvention,
}

impl Default for ClosedForms {
    fn default() -> Self {
        ClosedForms {
            theta_min_factor: THETA_MIN_FACTOR,
            m2_prefactor: QUOTED_M2_PREFACTOR,
            phase: PhaseConvention::Included,
        }
    }
}

/// Amplitudes at one angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSet {
    pub m0: Complex64,
    pub m1: Complex64,
    pub m2: Complex64,
    pub theta: f64,
    pub scenario: ScatteringScenario,
    pub phase_convention: PhaseConvention,
}

impl AmplitudeSet {
    pub fn total(&self) -> Complex64 {
        self.m0 + self.m1 + self.m2
    }
}

/// e^{ln_mag + i phase}, exactly zero below the double range.
pub fn polar_from_log(ln_mag: f64, phase: f64) -> Result<Complex64, BornError> {
    if ln_mag > LN_OVERFLOW {
        return Err(BornError::Overflow(ln_mag));
    }
    if ln_mag < LN_UNDERFLOW || ln_mag == f64::NEG_INFINITY {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(Complex64::from_polar(ln_mag.exp(), phase))
}

impl ClosedForms {
    pub fn theta_min(&self, s: &ScatteringScenario) -> f64 {
        self.theta_min_factor * s.epsilon
    }

    fn common_phase(&self, s: &ScatteringScenario) -> f64 {
        match self.phase {
            PhaseConvention::Included => s.phase_et(),
            PhaseConvention::Stripped => 0.0,
        }
    }

    pub fn m0(&self, s: &ScatteringScenario, theta: f64) -> Result<Complex64, BornError> {
        if !(0.0..=PI).contains(&theta) {
            return Err(BornError::AngleOutOfRange(theta));
        }
        let (sh, _) = half_angle(theta);
        let eps = s.epsilon;
        polar_from_log(-sh * sh / (2.0 * eps * eps), self.common_phase(s))
    }

    /// First order away from the forward peak. Valid for theta in [theta_min, pi].
    pub fn m1(&self, s: &ScatteringScenario, theta: f64) -> Result<Complex64, BornError> {
        if !(theta <= PI) || theta.is_nan() {
            return Err(BornError::AngleOutOfRange(theta));
        }
        let tmin = self.theta_min(s);
        if theta < tmin {
            return Err(BornError::BelowThetaMin { theta, theta_min: tmin });
        }
        let (sh, _) = half_angle(theta);
        let eps = s.epsilon;
        let mag = 2.0 * s.eta * eps * eps / (sh * sh);
        Ok(Complex64::from_polar(mag, self.common_phase(s) - 0.5 * PI))
    }

    /// ln |M2| for the configured prefactor; -inf when eta = 0.
    pub fn m2_ln_modulus(&self, s: &ScatteringScenario, theta: f64) -> Result<f64, BornError> {
        let tmin = self.theta_min(s);
        if !(theta >= tmin && theta < PI) {
            return Err(BornError::SecondOrderRange(theta));
        }
        let (sh, ch) = half_angle(theta);
        let eps = s.epsilon;
        Ok(self.m2_prefactor.ln() + 2.0 * s.eta.abs().ln() + 3.5 * eps.ln()
            - sh * sh / (2.0 * eps)
            - 5.0 * sh.ln()
            - ch.ln())
    }

    pub fn m2(&self, s: &ScatteringScenario, theta: f64) -> Result<Complex64, BornError> {
        let ln_mag = self.m2_ln_modulus(s, theta)?;
        let (sh, _) = half_angle(theta);
        let phase = self.common_phase(s) + sh * sh / (2.0 * s.epsilon.powf(1.5)) + PI;
        polar_from_log(ln_mag, phase)
    }

    pub fn amplitude_set(&self, s: &ScatteringScenario, theta: f64) -> Result<AmplitudeSet, BornError> {
        Ok(AmplitudeSet {
            m0: self.m0(s, theta)?,
            m1: self.m1(s, theta)?,
            m2: self.m2(s, theta)?,
            theta,
            scenario: *s,
            phase_convention: self.phase,
        })
    }

    /// |M2/M1| from the closed forms, in log space.
    pub fn ln_ratio_m2_m1(&self, s: &ScatteringScenario, theta: f64) -> Result<f64, BornError> {
        let l2 = self.m2_ln_modulus(s, theta)?;
        let m1 = self.m1(s, theta)?;
        Ok(l2 - m1.norm().ln())
    }
}

pub fn m0_closed(s: &ScatteringScenario, theta: f64) -> Result<Complex64, BornError> {
    ClosedForms::default().m0(s, theta)
}

pub fn m1_closed(s: &ScatteringScenario, theta: f64) -> Result<Complex64, BornError> {
    ClosedForms::default().m1(s, theta)
}

pub fn m2_closed(s: &ScatteringScenario, theta: f64) -> Result<Complex64, BornError> {
    ClosedForms::default().m2(s, theta)
}

/// dsigma/dOmega = p^2 / (16 sigma_p^4) P.
pub fn probability_to_cross_section(s: &ScatteringScenario, probability: f64) -> Result<f64, BornError> {
    if !(probability >= 0.0 && probability.is_finite()) {
        return Err(BornError::NegativeProbability(probability));
    }
    Ok(s.p * s.p / (16.0 * s.sigma_p.powi(4)) * probability)
}

/// alpha^2 / (16 E^2 sin^4(theta/2)).
pub fn rutherford(s: &ScatteringScenario, theta: f64) -> Result<f64, BornError> {
    if theta == 0.0 {
        return Err(BornError::ZeroAngle);
    }
    let (sh, _) = half_angle(theta);
    Ok(s.alpha * s.alpha / (16.0 * s.energy * s.energy * sh.powi(4)))
}
