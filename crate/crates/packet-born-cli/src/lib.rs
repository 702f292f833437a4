//! Command-line front end for packet-born: closed-form sweeps, the
//! Rutherford bridge, the forward logarithmic fit, oracle validation and
//! g-function diagnostics.
//!
//! Everything is deterministic: grid points are evaluated in parallel but
//! written in grid order, floats are printed with 17 significant digits and
//! every random draw comes from a seeded ChaCha stream.

pub mod args;
pub mod commands;
pub mod table;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use packet_born::QuadratureSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use args::{parse_config_file, resolve, Cli};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "PACKET_BORN_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Sweep,
    Rutherford,
    ForwardFit,
    Validate,
    Gprobe,
}

impl Subcommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Sweep => "sweep",
            Subcommand::Rutherford => "rutherford",
            Subcommand::ForwardFit => "forward-fit",
            Subcommand::Validate => "validate",
            Subcommand::Gprobe => "gprobe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Size of the validation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// epsilon = 0.04 only.
    Quick,
    /// epsilon in {0.04, 0.01, 0.0025}; second order at 0.04 and 0.01.
    Full,
}

/// Angles in radians; `start = None` means theta_min of each epsilon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub start: Option<f64>,
    pub stop: f64,
    pub count: usize,
}

impl ThetaGrid {
    pub fn points(&self, theta_min: f64) -> Vec<f64> {
        let a = self.start.unwrap_or(theta_min);
        if self.count == 1 {
            return vec![a];
        }
        (0..self.count).map(|j| a + (self.stop - a) * j as f64 / (self.count - 1) as f64).collect()
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub p: f64,
    pub m0: f64,
    pub alpha: f64,
    pub epsilons: Vec<f64>,
    pub theta: ThetaGrid,
    pub quadrature: QuadratureSpec,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub workers: Option<usize>,
    pub seed: u64,
    pub profile: Profile,
    pub m2_prefactor: f64,
    pub theta_min_factor: f64,
    /// Arguments for `gprobe`.
    pub g_points: Vec<(f64, f64)>,
    pub g_constant_points: Vec<f64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        for (name, v) in [("p", self.p), ("m0", self.m0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.alpha.is_finite() {
            return Err(CliError::InvalidConfig(format!("alpha must be finite, got {}", self.alpha)));
        }
        if self.epsilons.is_empty() {
            return Err(CliError::InvalidGrid("epsilon list is empty".into()));
        }
        if let Some(bad) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < packet_born::scenario::EPSILON_LIMIT)) {
            return Err(CliError::InvalidGrid(format!("epsilon {bad} outside (0, 0.25)")));
        }
        if self.theta.count == 0 {
            return Err(CliError::InvalidGrid("theta count must be positive".into()));
        }
        let start_ok = match self.theta.start {
            Some(a) => a.is_finite() && a >= 0.0 && a <= self.theta.stop,
            None => true,
        };
        if !start_ok || self.theta.stop.is_nan() || self.theta.stop > std::f64::consts::PI {
            return Err(CliError::InvalidGrid(format!(
                "theta grid [{:?}, {}] must lie in [0, pi] and be ordered",
                self.theta.start, self.theta.stop
            )));
        }
        if self.workers == Some(0) {
            return Err(CliError::InvalidConfig("workers must be positive".into()));
        }
        if !(self.m2_prefactor > 0.0 && self.theta_min_factor > 0.0) {
            return Err(CliError::InvalidConfig("m2_prefactor and theta_min_factor must be positive".into()));
        }
        self.quadrature.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: io::Error },
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("flagged: {0}")]
    Flagged(String),
}

impl CliError {
    /// Distinct exit status per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::InvalidConfig(_) => 3,
            CliError::InvalidGrid(_) => 4,
            CliError::Output { .. } => 5,
            CliError::Compute(_) => 6,
            CliError::Flagged(_) => 7,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::InvalidConfig(_) => "invalid_config",
            CliError::InvalidGrid(_) => "invalid_grid",
            CliError::Output { .. } => "output",
            CliError::Compute(_) => "compute",
            CliError::Flagged(_) => "flagged",
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind(), "code": self.exit_code(), "message": self.to_string() }
        })
        .to_string()
    }
}

/// Files produced by one run, plus anything flagged along the way.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub written: Vec<PathBuf>,
    pub flags: Vec<String>,
}

/// Primary and optional companion artifact of a subcommand.
pub struct Artifacts {
    pub csv: String,
    pub json: String,
    /// Subcommands with a summary write it next to a CSV output.
    pub has_summary: bool,
    pub flags: Vec<String>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Output { path: path.display().to_string(), source })
}

fn worker_count(config: &RunConfig) -> Option<usize> {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|n| *n > 0).or(config.workers)
}

/// Runs one subcommand and writes its outputs. Returns `Flagged` after the
/// outputs are written when a divergence or non-convergence was detected.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = worker_count(config) {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::InvalidConfig(format!("worker pool: {e}")))?
    };
    let art = pool.install(|| commands::execute(config))?;
    let mut outcome = RunOutcome { flags: art.flags.clone(), ..RunOutcome::default() };
    match &config.output {
        None => {
            let text = match config.format {
                Format::Csv => &art.csv,
                Format::Json => &art.json,
            };
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|source| CliError::Output { path: "<stdout>".into(), source })?;
        }
        Some(path) => match config.format {
            Format::Csv => {
                write_file(path, &art.csv)?;
                outcome.written.push(path.clone());
                if art.has_summary {
                    let side = path.with_extension("json");
                    write_file(&side, &art.json)?;
                    outcome.written.push(side);
                }
            }
            Format::Json => {
                write_file(path, &art.json)?;
                outcome.written.push(path.clone());
            }
        },
    }
    if !outcome.flags.is_empty() {
        return Err(CliError::Flagged(outcome.flags.join("; ")));
    }
    Ok(outcome)
}
