//! Finite Born-series amplitudes for nonrelativistic Coulomb scattering
//! between Gaussian wavepackets.
//!
//! - [`scenario`]: parameters, scaling scheme and geometry
//! - [`specfun`]: error function and the g function
//! - [`quadrature`]: integration engines and the regulator driver
//! - [`born`]: closed-form amplitudes and the cross-section bridge
//! - [`forward`]: first-order forward amplitude and its logarithmic fit
//! - [`oracle`]: quadrature evaluations of the defining integrals

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod born;
pub mod forward;
pub mod oracle;
pub mod quadrature;
pub mod scenario;
pub mod specfun;

pub use num_complex::Complex64;
pub use quadrature::{IntegralResult, QuadratureSpec};
pub use scenario::{build_scenario, Geometry, ScatteringScenario, ScenarioError, Vec3};
