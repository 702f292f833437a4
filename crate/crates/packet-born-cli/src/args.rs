//! Flag parsing and the key=value config file. Flags override the file,
//! the file overrides built-in defaults.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{Args, Parser};
use packet_born::born::{QUOTED_M2_PREFACTOR, THETA_MIN_FACTOR};
use packet_born::forward::DEFAULT_FIT_GRID;
use packet_born::QuadratureSpec;

use crate::{CliError, Format, Profile, RunConfig, Subcommand, ThetaGrid};

#[derive(Debug, Parser)]
#[command(
    name = "packet-born",
    version,
    about = "Finite Born amplitudes for Coulomb scattering of Gaussian wavepackets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, clap::Subcommand)]
pub enum Command {
    /// Closed-form amplitudes over an (epsilon, theta) grid.
    Sweep,
    /// Cross section from |M1|^2 against the Rutherford formula.
    Rutherford,
    /// Logarithmic fit of the forward first-order amplitude.
    ForwardFit,
    /// Closed forms against the quadrature oracles.
    Validate,
    /// g-function values, evaluation paths and c(M).
    Gprobe,
}

#[derive(Debug, Default, Args)]
pub struct Common {
    /// key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub m0: Option<f64>,
    #[arg(long, global = true, conflicts_with = "eta")]
    pub alpha: Option<f64>,
    /// Sommerfeld parameter; sets alpha = eta p / m0.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Comma-separated epsilon list.
    #[arg(long, global = true)]
    pub epsilon: Option<String>,
    /// Angles accept plain radians or forms like `0.5pi`, `pi/3`.
    #[arg(long, global = true)]
    pub theta_start: Option<String>,
    #[arg(long, global = true)]
    pub theta_stop: Option<String>,
    #[arg(long, global = true)]
    pub theta_count: Option<usize>,
    #[arg(long, global = true)]
    pub hermite_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_subdivisions: Option<usize>,
    /// Comma-separated lambda / sigma_p values, strictly decreasing.
    #[arg(long, global = true)]
    pub lambda_schedule: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// quick or full.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    #[arg(long, global = true)]
    pub m2_prefactor: Option<f64>,
    #[arg(long, global = true)]
    pub theta_min_factor: Option<f64>,
    /// g arguments, comma-separated, each `re` or `re:im`.
    #[arg(long, global = true)]
    pub x: Option<String>,
    /// Arguments M of c(M), comma-separated.
    #[arg(long, global = true)]
    pub m: Option<String>,
}

const KEYS: &[&str] = &[
    "p",
    "m0",
    "alpha",
    "eta",
    "epsilon",
    "theta_start",
    "theta_stop",
    "theta_count",
    "hermite_nodes",
    "rel_tol",
    "abs_tol",
    "max_subdivisions",
    "lambda_schedule",
    "output",
    "format",
    "workers",
    "seed",
    "profile",
    "m2_prefactor",
    "theta_min_factor",
    "x",
    "m",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::InvalidConfig(format!("line {}: expected key=value", n + 1)))?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::InvalidConfig(format!("line {}: unknown key `{}`", n + 1, k.trim())));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

/// Angle in radians from `1.2`, `0.5pi`, `pi`, `pi/3` or `2pi/3`.
pub fn parse_angle(s: &str) -> Result<f64, CliError> {
    let t = s.trim().to_ascii_lowercase();
    let bad = || CliError::InvalidGrid(format!("cannot parse angle `{s}`"));
    if let Some(idx) = t.find("pi") {
        let (head, rest) = t.split_at(idx);
        let rest = &rest[2..];
        let coef = match head.trim().trim_end_matches('*') {
            "" => 1.0,
            h => h.parse::<f64>().map_err(|_| bad())?,
        };
        let div = match rest.trim() {
            "" => 1.0,
            r => r.strip_prefix('/').ok_or_else(bad)?.trim().parse::<f64>().map_err(|_| bad())?,
        };
        return Ok(coef * PI / div);
    }
    t.parse::<f64>().map_err(|_| bad())
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::InvalidGrid(format!("bad {what} value `{x}`"))))
        .collect()
}

fn parse_points(s: &str) -> Result<Vec<(f64, f64)>, CliError> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| {
            let bad = || CliError::InvalidGrid(format!("bad g argument `{x}`"));
            match x.split_once(':') {
                Some((a, b)) => Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)),
                None => Ok((x.trim().parse().map_err(|_| bad())?, 0.0)),
            }
        })
        .collect()
}

fn num<T: std::str::FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    file.get(key)
        .map(|v| v.parse::<T>().map_err(|_| CliError::InvalidConfig(format!("bad value `{v}` for `{key}`"))))
        .transpose()
}

fn text(cli: &Option<String>, file: &BTreeMap<String, String>, key: &str) -> Option<String> {
    cli.clone().or_else(|| file.get(key).cloned())
}

/// Combines flags, config file and defaults into a `RunConfig`.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let c = &cli.common;
    let file = match &c.config {
        Some(path) => {
            let t = std::fs::read_to_string(path)
                .map_err(|e| CliError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
            parse_config_file(&t)?
        }
        None => BTreeMap::new(),
    };
    let subcommand = match cli.command {
        Command::Sweep => Subcommand::Sweep,
        Command::Rutherford => Subcommand::Rutherford,
        Command::ForwardFit => Subcommand::ForwardFit,
        Command::Validate => Subcommand::Validate,
        Command::Gprobe => Subcommand::Gprobe,
    };
    let p = c.p.or(num(&file, "p")?).unwrap_or(1.0);
    let m0 = c.m0.or(num(&file, "m0")?).unwrap_or(1.0);
    let alpha = match (c.alpha, c.eta) {
        (Some(a), _) => a,
        (None, Some(e)) => e * p / m0,
        (None, None) => match (num::<f64>(&file, "alpha")?, num::<f64>(&file, "eta")?) {
            (Some(_), Some(_)) => return Err(CliError::InvalidConfig("set alpha or eta, not both".into())),
            (Some(a), None) => a,
            (None, Some(e)) => e * p / m0,
            (None, None) => 1.0 / 137.0,
        },
    };
    let profile = match text(&c.profile, &file, "profile").as_deref() {
        None | Some("quick") => Profile::Quick,
        Some("full") => Profile::Full,
        Some(other) => return Err(CliError::InvalidConfig(format!("unknown profile `{other}`"))),
    };
    let epsilons = match text(&c.epsilon, &file, "epsilon") {
        Some(s) => parse_list(&s, "epsilon")?,
        None => match subcommand {
            Subcommand::Sweep => vec![0.01],
            Subcommand::Rutherford => vec![0.04, 0.01, 0.0025],
            Subcommand::ForwardFit => DEFAULT_FIT_GRID.to_vec(),
            Subcommand::Validate => match profile {
                Profile::Quick => vec![0.04],
                Profile::Full => vec![0.04, 0.01, 0.0025],
            },
            Subcommand::Gprobe => vec![0.01],
        },
    };
    let theta = ThetaGrid {
        start: text(&c.theta_start, &file, "theta_start").map(|s| parse_angle(&s)).transpose()?,
        stop: text(&c.theta_stop, &file, "theta_stop").map(|s| parse_angle(&s)).transpose()?.unwrap_or(0.75 * PI),
        count: c.theta_count.or(num(&file, "theta_count")?).unwrap_or(50),
    };
    let d = QuadratureSpec::default();
    let quadrature = QuadratureSpec {
        hermite_nodes_per_axis: c.hermite_nodes.or(num(&file, "hermite_nodes")?).unwrap_or(d.hermite_nodes_per_axis),
        adaptive_rel_tol: c.rel_tol.or(num(&file, "rel_tol")?).unwrap_or(d.adaptive_rel_tol),
        adaptive_abs_tol: c.abs_tol.or(num(&file, "abs_tol")?).unwrap_or(d.adaptive_abs_tol),
        max_subdivisions: c.max_subdivisions.or(num(&file, "max_subdivisions")?).unwrap_or(d.max_subdivisions),
        lambda_schedule: match text(&c.lambda_schedule, &file, "lambda_schedule") {
            Some(s) => parse_list(&s, "lambda")?,
            None => d.lambda_schedule,
        },
    };
    let format = match text(&c.format, &file, "format").as_deref() {
        None | Some("csv") => Format::Csv,
        Some("json") => Format::Json,
        Some(other) => return Err(CliError::InvalidConfig(format!("unknown format `{other}`"))),
    };
    let output = c.output.clone().or_else(|| file.get("output").map(PathBuf::from));
    let g_points = match text(&c.x, &file, "x") {
        Some(s) => parse_points(&s)?,
        None => vec![(0.0, 0.0), (1.0, 0.0), (-4.0, 0.0), (10.0, 0.0), (50.0, 0.0), (20.0, 15.0), (-30.0, 5.0)],
    };
    let g_constant_points = match text(&c.m, &file, "m") {
        Some(s) => parse_list(&s, "M")?,
        None => vec![20.0, 50.0, 100.0, 200.0, 500.0],
    };
    Ok(RunConfig {
        subcommand,
        p,
        m0,
        alpha,
        epsilons,
        theta,
        quadrature,
        output,
        format,
        workers: c.workers.or(num(&file, "workers")?),
        seed: c.seed.or(num(&file, "seed")?).unwrap_or(20_240_601),
        profile,
        m2_prefactor: c.m2_prefactor.or(num(&file, "m2_prefactor")?).unwrap_or(QUOTED_M2_PREFACTOR),
        theta_min_factor: c.theta_min_factor.or(num(&file, "theta_min_factor")?).unwrap_or(THETA_MIN_FACTOR),
        g_points,
        g_constant_points,
    })
}
