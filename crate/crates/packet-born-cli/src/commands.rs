//! Subcommand bodies. Each returns its CSV table and JSON document as strings
//! so that `run` only deals with where they go.

use std::f64::consts::PI;

use packet_born::born::{probability_to_cross_section, rutherford, ClosedForms, PhaseConvention, QUOTED_M2_PREFACTOR};
use packet_born::forward::{fit_forward_log_law, m1_forward, FitResult, LOG_LAW_INTERCEPT};
use packet_born::oracle::{
    compare, g_product_sample, m0_oracle_with, m1_naive_ordering_probe, m1_oracle, m1_oracle_with, m2_exponent_ratio,
    m2_oracle_with, m2_prefactor, time_extension_check, AmplitudeComparison, FinalStateSign, KineticPhase,
    SchwingerOptions,
};
use packet_born::specfun::{g_asymptotic_constant, g_log, QUOTED_ASYMPTOTIC_CONSTANT, SERIES_ASYMPTOTIC_CONSTANT};
use packet_born::{build_scenario, Complex64, ScatteringScenario, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::table::{to_json, Cell, Table};
use crate::{Artifacts, CliError, Profile, RunConfig, Subcommand};

pub fn execute(config: &RunConfig) -> Result<Artifacts, CliError> {
    match config.subcommand {
        Subcommand::Sweep => sweep(config),
        Subcommand::Rutherford => rutherford_table(config),
        Subcommand::ForwardFit => forward_fit(config),
        Subcommand::Validate => validate(config),
        Subcommand::Gprobe => gprobe(config),
    }
}

fn scenario(config: &RunConfig, epsilon: f64) -> Result<ScatteringScenario, CliError> {
    build_scenario(config.p, config.m0, config.alpha, epsilon).map_err(|e| CliError::InvalidConfig(e.to_string()))
}

fn closed_forms(config: &RunConfig) -> ClosedForms {
    ClosedForms {
        theta_min_factor: config.theta_min_factor,
        m2_prefactor: config.m2_prefactor,
        phase: PhaseConvention::Included,
    }
}

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

fn provenance(s: &ScatteringScenario) -> Vec<Cell> {
    vec![s.p.into(), s.m0.into(), s.alpha.into(), s.eta.into(), s.epsilon.into()]
}

fn complex_cells(v: Option<Complex64>) -> [Cell; 2] {
    match v {
        Some(z) => [z.re.into(), z.im.into()],
        None => [Cell::Empty, Cell::Empty],
    }
}

fn table_json(config: &RunConfig, table: &Table) -> String {
    to_json(&serde_json::json!({ "subcommand": config.subcommand, "rows": table.to_json_rows() }))
}

fn sweep(config: &RunConfig) -> Result<Artifacts, CliError> {
    let cf = closed_forms(config);
    let mut table = Table::new(&[
        "p",
        "m0",
        "alpha",
        "eta",
        "epsilon",
        "theta",
        "regime",
        "m0_re",
        "m0_im",
        "m1_re",
        "m1_im",
        "m2_re",
        "m2_im",
        "total_re",
        "total_im",
        "total_abs",
        "dsigma_domega_first_order",
    ]);
    for &eps in &config.epsilons {
        let s = scenario(config, eps)?;
        let thetas = config.theta.points(cf.theta_min(&s));
        let rows: Vec<Result<Vec<Cell>, CliError>> = thetas
            .par_iter()
            .map(|&theta| {
                let m0 = cf.m0(&s, theta).map_err(compute)?;
                let (regime, m1, m2) = if theta == 0.0 {
                    let m1 = m1_forward(&s, &config.quadrature).map_err(compute)?;
                    ("forward", Some(m1), None)
                } else if theta < cf.theta_min(&s) {
                    ("excluded", None, None)
                } else {
                    let m1 = cf.m1(&s, theta).map_err(compute)?;
                    let m2 = if theta < PI { Some(cf.m2(&s, theta).map_err(compute)?) } else { None };
                    ("far", Some(m1), m2)
                };
                let total = m0 + m1.unwrap_or_default() + m2.unwrap_or_default();
                let dsigma = match (regime, m1) {
                    ("far", Some(m)) => Some(probability_to_cross_section(&s, m.norm_sqr()).map_err(compute)?),
                    _ => None,
                };
                let mut row = provenance(&s);
                row.push(theta.into());
                row.push(regime.into());
                row.extend(complex_cells(Some(m0)));
                row.extend(complex_cells(m1));
                row.extend(complex_cells(m2));
                row.extend(complex_cells(Some(total)));
                row.push(total.norm().into());
                row.push(dsigma.into());
                Ok(row)
            })
            .collect();
        for r in rows {
            table.push(r?);
        }
    }
    let json = table_json(config, &table);
    Ok(Artifacts { csv: table.to_csv(), json, has_summary: false, flags: Vec::new() })
}

fn rutherford_table(config: &RunConfig) -> Result<Artifacts, CliError> {
    let cf = closed_forms(config);
    let mut table =
        Table::new(&["p", "m0", "alpha", "eta", "epsilon", "theta", "dsigma_from_m1", "rutherford", "rel_diff"]);
    for &eps in &config.epsilons {
        let s = scenario(config, eps)?;
        for theta in config.theta.points(cf.theta_min(&s)) {
            let m1 = cf.m1(&s, theta).map_err(compute)?;
            let from_m1 = probability_to_cross_section(&s, m1.norm_sqr()).map_err(compute)?;
            let exact = rutherford(&s, theta).map_err(compute)?;
            let mut row = provenance(&s);
            row.extend([theta.into(), from_m1.into(), exact.into(), ((from_m1 - exact).abs() / exact).into()]);
            table.push(row);
        }
    }
    let json = table_json(config, &table);
    Ok(Artifacts { csv: table.to_csv(), json, has_summary: false, flags: Vec::new() })
}

#[derive(Debug, Serialize)]
struct ForwardSummary<'a> {
    fit: &'a FitResult,
    slope_asymptotic: f64,
    intercept_asymptotic: f64,
}

fn forward_fit(config: &RunConfig) -> Result<Artifacts, CliError> {
    let fit = fit_forward_log_law(&config.epsilons, &config.quadrature).map_err(|e| match e {
        packet_born::forward::ForwardError::DegenerateGrid(m) => CliError::InvalidGrid(m),
        other => compute(other),
    })?;
    let mut table = Table::new(&["epsilon", "z", "integral", "modulus_over_eta"]);
    for p in &fit.points {
        table.push(vec![p.epsilon.into(), p.z.into(), p.integral.into(), p.modulus_over_eta.into()]);
    }
    let json = to_json(&ForwardSummary { fit: &fit, slope_asymptotic: 2.0, intercept_asymptotic: LOG_LAW_INTERCEPT });
    Ok(Artifacts { csv: table.to_csv(), json, has_summary: true, flags: Vec::new() })
}

#[derive(Debug, Serialize)]
struct GConstant {
    m: f64,
    c: f64,
}

fn gprobe(config: &RunConfig) -> Result<Artifacts, CliError> {
    let mut table = Table::new(&["kind", "x_re", "x_im", "path", "ln_g_re", "ln_g_im", "g_re", "g_im", "c_m"]);
    for &(re, im) in &config.g_points {
        let x = Complex64::new(re, im);
        let l = g_log(x).map_err(compute)?;
        let g = if l.ln_value.re < 709.0 { Some(l.ln_value.exp()) } else { None };
        let [gr, gi] = complex_cells(g);
        table.push(vec![
            "g".into(),
            re.into(),
            im.into(),
            l.path.as_str().into(),
            l.ln_value.re.into(),
            l.ln_value.im.into(),
            gr,
            gi,
            Cell::Empty,
        ]);
    }
    let mut constants = Vec::new();
    for &m in &config.g_constant_points {
        let c = g_asymptotic_constant(m).map_err(compute)?;
        constants.push(GConstant { m, c });
        table.push(vec![
            "c".into(),
            m.into(),
            0.0.into(),
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            c.into(),
        ]);
    }
    let json = to_json(&serde_json::json!({
        "subcommand": config.subcommand,
        "rows": table.to_json_rows(),
        "c_of_m": constants,
        "c_limit_estimate": limit_in_inverse_m(&constants),
        "quoted_constant": QUOTED_ASYMPTOTIC_CONSTANT,
        "series_constant": SERIES_ASYMPTOTIC_CONSTANT,
    }));
    Ok(Artifacts { csv: table.to_csv(), json, has_summary: false, flags: Vec::new() })
}

/// Linear extrapolation in 1/M from the two largest M.
fn limit_in_inverse_m(points: &[GConstant]) -> Option<f64> {
    let mut v: Vec<&GConstant> = points.iter().collect();
    v.sort_by(|a, b| a.m.total_cmp(&b.m));
    let n = v.len();
    if n < 2 {
        return v.first().map(|p| p.c);
    }
    let (a, b) = (v[n - 2], v[n - 1]);
    Some((b.m * b.c - a.m * a.c) / (b.m - a.m))
}

/// Angles of the first- and second-order comparisons.
pub const FAR_ANGLES: [f64; 3] = [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0];

/// JSON summary of `validate`; the schema is described in the README.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationSummary {
    pub profile: Profile,
    pub seed: u64,
    pub p: f64,
    pub m0: f64,
    pub alpha: f64,
    pub epsilons: Vec<f64>,
    pub max_rel_diff: MaxRelDiff,
    pub per_epsilon: Vec<EpsilonSummary>,
    pub lambda_stability: Vec<LambdaRow>,
    pub g_constant: GConstantSummary,
    pub m2: Vec<M2Row>,
    pub m2_prefactor: M2PrefactorSummary,
    pub kinetic_phase: KineticPhaseCheck,
    pub g_product: GProductSummary,
    pub time_extension: TimeExtensionSummary,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxRelDiff {
    pub m0: f64,
    pub m1: f64,
    /// Against the closed form with the quoted prefactor.
    pub m2: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonSummary {
    pub epsilon: f64,
    pub m0_max_rel_diff: f64,
    pub m0_bound: f64,
    pub m1_max_rel_diff: f64,
    pub m1_bound: f64,
    pub m1_max_phase_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaRow {
    pub epsilon: f64,
    pub theta: f64,
    pub packet_first_raw_spread: f64,
    pub packet_first_extrapolant_change: f64,
    pub packet_first_limit_re: f64,
    pub packet_first_limit_im: f64,
    pub kernel_first_divergent_forward: bool,
    pub kernel_first_growth_forward: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GConstantSummary {
    pub samples: Vec<(f64, f64)>,
    pub limit_estimate: Option<f64>,
    pub quoted: f64,
    pub series: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct M2Row {
    pub epsilon: f64,
    pub theta: f64,
    pub value_re: f64,
    pub value_im: f64,
    pub converged: bool,
    pub panels: usize,
    pub prefactor: f64,
    pub exponent_ratio: f64,
    pub regulated_raw_spread: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct M2PrefactorSummary {
    pub quoted: f64,
    pub measured_by_epsilon: Vec<(f64, f64)>,
    /// max / min of the measured prefactor over angles, per epsilon.
    pub theta_spread_by_epsilon: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KineticPhaseCheck {
    pub epsilon: f64,
    pub m0_rel_diff: f64,
    pub m1_rel_diff: f64,
    pub bound: f64,
    pub m0_within_bound: bool,
    pub m1_within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GProductSummary {
    pub epsilon: f64,
    pub theta: f64,
    pub samples: usize,
    pub max_rel_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeExtensionSummary {
    pub epsilon: f64,
    pub theta: f64,
    pub rel_diff: f64,
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// Random (kappa, tau1, tau2) inside the support of the second-order
/// integrand: kappa' ~ sqrt(eps) p, times within eps T of T/2.
pub fn g_product_points(s: &ScatteringScenario, theta: f64, n: usize, seed: u64) -> Vec<(Vec3, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = s.geometry(theta).expect("angle checked by caller");
    let t = s.time;
    let w = s.epsilon.sqrt() * s.p;
    (0..n)
        .map(|_| {
            let mut u = || rng.random_range(-1.0..1.0);
            let a = 0.5 * t + s.epsilon * t * u();
            let b = 0.5 * t + s.epsilon * t * u();
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            let kp = Vec3::new(w * u(), w * u(), w * u());
            let kappa = kp - g.p_plus.scale((t1 - t2) / t);
            (kappa, t1, t2)
        })
        .collect()
}

/// Panel schedule of the second-order oracle. Below epsilon = 0.02 the time
/// integrand needs 64 panels for a few percent and 128 are out of budget.
pub fn m2_options(epsilon: f64, regulated: bool) -> SchwingerOptions {
    let (panels_start, panels_max, rel_tol) = if epsilon >= 0.02 { (8, 32, 5e-3) } else { (32, 64, 5e-2) };
    SchwingerOptions { panels_start, panels_max, rel_tol, regulated, ..SchwingerOptions::default() }
}

pub fn validate(config: &RunConfig) -> Result<Artifacts, CliError> {
    let cf = ClosedForms::default();
    let spec = &config.quadrature;
    let mut flags = Vec::new();
    let mut table = Table::new(&[
        "order",
        "p",
        "m0",
        "alpha",
        "eta",
        "epsilon",
        "theta",
        "closed_re",
        "closed_im",
        "oracle_re",
        "oracle_im",
        "oracle_error",
        "abs_diff",
        "rel_diff",
        "phase_diff",
    ]);
    let push = |table: &mut Table, order: usize, s: &ScatteringScenario, c: &AmplitudeComparison| {
        let mut row = vec![order.into()];
        row.extend(provenance(s));
        row.extend([
            c.theta.into(),
            c.closed_form.re.into(),
            c.closed_form.im.into(),
            c.oracle_value.re.into(),
            c.oracle_value.im.into(),
            c.oracle_error_estimate.into(),
            c.abs_diff.into(),
            c.rel_diff.into(),
            c.phase_diff().into(),
        ]);
        table.push(row);
    };

    let mut per_epsilon = Vec::new();
    let mut lambda_stability = Vec::new();
    let mut m2_rows = Vec::new();
    let mut max0: f64 = 0.0;
    let mut max1: f64 = 0.0;
    let mut max2: Option<f64> = None;
    for &eps in &config.epsilons {
        let s = scenario(config, eps)?;
        let sq = eps.sqrt();
        let m0s: Vec<Result<AmplitudeComparison, CliError>> = [0.0, eps, 2.0 * eps]
            .par_iter()
            .map(|&th| {
                let o = packet_born::oracle::m0_oracle(&s, th, spec).map_err(compute)?;
                Ok(compare(cf.m0(&s, th).map_err(compute)?, &o, th, eps))
            })
            .collect();
        let mut e0: f64 = 0.0;
        for c in m0s {
            let c = c?;
            e0 = e0.max(c.rel_diff);
            push(&mut table, 0, &s, &c);
        }
        let m1s: Vec<Result<(AmplitudeComparison, bool), CliError>> = FAR_ANGLES
            .par_iter()
            .map(|&th| {
                let o = m1_oracle(&s, th, spec).map_err(compute)?;
                Ok((compare(cf.m1(&s, th).map_err(compute)?, &o, th, eps), o.converged))
            })
            .collect();
        let mut e1: f64 = 0.0;
        let mut ph1: f64 = 0.0;
        for r in m1s {
            let (c, ok) = r?;
            if !ok {
                flags.push(format!("first-order oracle not converged at epsilon={eps}, theta={}", c.theta));
            }
            e1 = e1.max(c.rel_diff);
            ph1 = ph1.max(c.phase_diff().abs());
            push(&mut table, 1, &s, &c);
        }
        max0 = max0.max(e0);
        max1 = max1.max(e1);
        per_epsilon.push(EpsilonSummary {
            epsilon: eps,
            m0_max_rel_diff: e0,
            m0_bound: 3.0 * sq,
            m1_max_rel_diff: e1,
            m1_bound: 5.0 * sq,
            m1_max_phase_diff: ph1,
        });

        let probe = m1_naive_ordering_probe(&s, PI / 2.0, spec).map_err(compute)?;
        let forward = m1_naive_ordering_probe(&s, 0.0, spec).map_err(compute)?;
        let fwd = &forward.kernel_first.samples;
        lambda_stability.push(LambdaRow {
            epsilon: eps,
            theta: PI / 2.0,
            packet_first_raw_spread: probe.packet_first_spread,
            packet_first_extrapolant_change: probe.packet_first.error_estimate / probe.packet_first.value.norm(),
            packet_first_limit_re: probe.packet_first.value.re,
            packet_first_limit_im: probe.packet_first.value.im,
            kernel_first_divergent_forward: forward.kernel_first.divergent,
            kernel_first_growth_forward: fwd[fwd.len() - 1].1.norm() / fwd[0].1.norm(),
        });

        let m2_angles: &[f64] = match (config.profile, eps >= 0.02, eps >= 0.005) {
            (_, true, _) => &FAR_ANGLES,
            (Profile::Full, false, true) => &[PI / 2.0],
            _ => &[],
        };
        for &th in m2_angles {
            let regulated = th == PI / 2.0;
            let r = m2_oracle_with(&s, th, spec, &m2_options(eps, regulated)).map_err(compute)?;
            if !r.result.converged {
                flags.push(format!("second-order oracle not converged at epsilon={eps}, theta={th}"));
            }
            if r.regulated.as_ref().is_some_and(|x| x.divergent) {
                flags.push(format!("second-order regulated values diverge at epsilon={eps}, theta={th}"));
            }
            let closed = cf.m2(&s, th).map_err(compute)?;
            let c = compare(closed, &r.result, th, eps);
            max2 = Some(max2.unwrap_or(0.0f64).max(c.rel_diff));
            push(&mut table, 2, &s, &c);
            m2_rows.push(M2Row {
                epsilon: eps,
                theta: th,
                value_re: r.result.value.re,
                value_im: r.result.value.im,
                converged: r.result.converged,
                panels: r.history.last().map_or(0, |h| h.0),
                prefactor: m2_prefactor(&s, th, r.result.value),
                exponent_ratio: m2_exponent_ratio(&s, th, r.result.value),
                regulated_raw_spread: r.regulated.map(|x| x.raw_spread),
            });
        }
    }

    let mut measured = Vec::new();
    let mut spread = Vec::new();
    for &eps in &config.epsilons {
        let p: Vec<f64> = m2_rows.iter().filter(|r| r.epsilon == eps).map(|r| r.prefactor).collect();
        if p.is_empty() {
            continue;
        }
        measured.push((eps, p.iter().sum::<f64>() / p.len() as f64));
        let hi = p.iter().cloned().fold(f64::MIN, f64::max);
        let lo = p.iter().cloned().fold(f64::MAX, f64::min);
        spread.push((eps, hi / lo));
    }

    let samples: Vec<GConstant> = config
        .g_constant_points
        .iter()
        .map(|&m| g_asymptotic_constant(m).map(|c| GConstant { m, c }))
        .collect::<Result<_, _>>()
        .map_err(compute)?;

    let eps_k = 0.04;
    let sk = scenario(config, eps_k)?;
    let m0x = m0_oracle_with(&sk, 0.0, spec, KineticPhase::Exact).map_err(compute)?;
    let m0d = m0_oracle_with(&sk, 0.0, spec, KineticPhase::Dropped).map_err(compute)?;
    let m1x = m1_oracle_with(&sk, PI / 2.0, spec, KineticPhase::Exact).map_err(compute)?;
    let m1d = m1_oracle_with(&sk, PI / 2.0, spec, KineticPhase::Dropped).map_err(compute)?;
    let bound = 5.0 * eps_k.sqrt();
    let (r0, r1) = (rel(m0x.value, m0d.value), rel(m1x.value, m1d.value));
    let kinetic_phase = KineticPhaseCheck {
        epsilon: eps_k,
        m0_rel_diff: r0,
        m1_rel_diff: r1,
        bound,
        m0_within_bound: r0 <= bound,
        m1_within_bound: r1 <= bound,
    };

    let eps_g = 0.01;
    let sg = scenario(config, eps_g)?;
    let mut gmax: f64 = 0.0;
    let pts = g_product_points(&sg, PI / 2.0, 10, config.seed);
    for (kappa, t1, t2) in &pts {
        let g = g_product_sample(&sg, PI / 2.0, *kappa, *t1, *t2, FinalStateSign::Derived).map_err(compute)?;
        gmax = gmax.max(g.rel_diff);
    }
    let te = time_extension_check(PI / 2.0, eps_k, spec).map_err(compute)?;

    let summary = ValidationSummary {
        profile: config.profile,
        seed: config.seed,
        p: config.p,
        m0: config.m0,
        alpha: config.alpha,
        epsilons: config.epsilons.clone(),
        max_rel_diff: MaxRelDiff { m0: max0, m1: max1, m2: max2 },
        per_epsilon,
        lambda_stability,
        g_constant: GConstantSummary {
            samples: samples.iter().map(|g| (g.m, g.c)).collect(),
            limit_estimate: limit_in_inverse_m(&samples),
            quoted: QUOTED_ASYMPTOTIC_CONSTANT,
            series: SERIES_ASYMPTOTIC_CONSTANT,
        },
        m2: m2_rows,
        m2_prefactor: M2PrefactorSummary {
            quoted: QUOTED_M2_PREFACTOR,
            measured_by_epsilon: measured,
            theta_spread_by_epsilon: spread,
        },
        kinetic_phase,
        g_product: GProductSummary { epsilon: eps_g, theta: PI / 2.0, samples: pts.len(), max_rel_diff: gmax },
        time_extension: TimeExtensionSummary { epsilon: eps_k, theta: PI / 2.0, rel_diff: te.rel_diff },
        flags: flags.clone(),
    };
    Ok(Artifacts { csv: table.to_csv(), json: to_json(&summary), has_summary: true, flags })
}
