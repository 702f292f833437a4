//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use packet_born::born::{probability_to_cross_section, rutherford, ClosedForms, QUOTED_M2_PREFACTOR};
use packet_born::forward::{fit_forward_log_law, m1_forward, DEFAULT_FIT_GRID};
use packet_born::oracle::{
    compare, m0_oracle, m1_naive_ordering_probe, m1_oracle, m2_exponent_ratio, m2_oracle_with, m2_prefactor,
    time_integral_extended,
};
use packet_born::quadrature::integrate_adaptive_semi_infinite;
use packet_born::specfun::{g_asymptotic_constant, g_fn, g_series, QUOTED_ASYMPTOTIC_CONSTANT};
use packet_born::{build_scenario, Complex64, QuadratureSpec};
use packet_born_cli::commands::{m2_options, FAR_ANGLES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 1.0 / 137.0;
const SEED: u64 = 20240601;

const RUTHERFORD_TOL: f64 = 1e-12;
const SLOPE: (f64, f64) = (2.00, 0.05);
const INTERCEPT: (f64, f64) = (1.96, 0.05);
const FORWARD_MODULUS: (f64, f64) = (2.74, 0.01);
const M0_FACTOR: f64 = 3.0;
const M1_FACTOR: f64 = 5.0;
const LAMBDA_SPREAD: f64 = 1e-6;
const EXPONENT_BAND: f64 = 0.2;
const PREFACTOR_SPREAD: f64 = 2.0;
const SERIES_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-8;
const UNITARITY_FACTOR: f64 = 5.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = f();
    let el = t.elapsed();
    let in_time = el <= budget;
    let pass = o.pass && in_time;
    println!(
        "{} criterion {n} ({name}): {} [{:.2}s of {:.0}s]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        el.as_secs_f64(),
        budget.as_secs_f64()
    );
    pass
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn criterion_1() -> Outcome {
    let cf = ClosedForms::default();
    let mut worst: f64 = 0.0;
    for eps in [0.04, 0.01, 0.0025] {
        let s = build_scenario(1.0, 1.0, ALPHA, eps).unwrap();
        let a = cf.theta_min(&s);
        for j in 0..50 {
            let th = a + (0.75 * PI - a) * j as f64 / 49.0;
            let m1 = cf.m1(&s, th).unwrap();
            let d = probability_to_cross_section(&s, m1.norm_sqr()).unwrap();
            let r = rutherford(&s, th).unwrap();
            worst = worst.max((d - r).abs() / r);
        }
    }
    Outcome { pass: worst <= RUTHERFORD_TOL, detail: format!("max rel err {worst:.3e} <= {RUTHERFORD_TOL:e}") }
}

fn criterion_2() -> Outcome {
    let spec = QuadratureSpec::default();
    let fit = fit_forward_log_law(&DEFAULT_FIT_GRID, &spec).unwrap();
    let s = build_scenario(1.0, 1.0, ALPHA, 1e-3).unwrap();
    let modulus = m1_forward(&s, &spec).unwrap().norm() / s.eta;
    let ok = (fit.slope - SLOPE.0).abs() <= SLOPE.1
        && (fit.intercept - INTERCEPT.0).abs() <= INTERCEPT.1
        && (modulus - FORWARD_MODULUS.0).abs() <= FORWARD_MODULUS.1;
    Outcome {
        pass: ok,
        detail: format!("slope {:.4}, intercept {:.4}, |M1|/eta at eps=1e-3 {modulus:.4}", fit.slope, fit.intercept),
    }
}

fn criterion_3() -> Outcome {
    let spec = QuadratureSpec::default();
    let cf = ClosedForms::default();
    let mut ok = true;
    let mut worst = Vec::new();
    for eps in [0.04, 0.01] {
        let s = build_scenario(1.0, 1.0, ALPHA, eps).unwrap();
        let mut w: f64 = 0.0;
        for th in [0.0, eps, 2.0 * eps] {
            let o = m0_oracle(&s, th, &spec).unwrap();
            let c = compare(cf.m0(&s, th).unwrap(), &o, th, eps);
            w = w.max(c.rel_diff);
            ok &= c.rel_diff <= M0_FACTOR * eps.sqrt();
        }
        worst.push((eps, w));
    }
    let monotone = worst[1].1 < worst[0].1;
    Outcome {
        pass: ok && monotone,
        detail: format!(
            "max rel diff {:.4} (bound {:.2}) at eps=0.04, {:.4} (bound {:.2}) at eps=0.01, shrinking={monotone}",
            worst[0].1,
            M0_FACTOR * 0.2,
            worst[1].1,
            M0_FACTOR * 0.1
        ),
    }
}

fn criterion_4() -> Outcome {
    let spec = QuadratureSpec::default();
    let cf = ClosedForms::default();
    let mut within = true;
    let mut worst = Vec::new();
    let mut spreads = Vec::new();
    for eps in [0.04, 0.01, 0.0025] {
        let s = build_scenario(1.0, 1.0, ALPHA, eps).unwrap();
        let mut w: f64 = 0.0;
        for th in FAR_ANGLES {
            let o = m1_oracle(&s, th, &spec).unwrap();
            let c = compare(cf.m1(&s, th).unwrap(), &o, th, eps);
            within &= o.converged && c.rel_diff <= M1_FACTOR * eps.sqrt();
            w = w.max(c.rel_diff);
        }
        worst.push(w);
        let probe = m1_naive_ordering_probe(&s, PI / 2.0, &spec).unwrap();
        let change = probe.packet_first.error_estimate / probe.packet_first.value.norm();
        spreads.push((probe.packet_first_spread, change));
    }
    let monotone = worst.windows(2).all(|w| w[1] < w[0]);
    let stable = spreads.iter().all(|s| s.0 <= LAMBDA_SPREAD);
    Outcome {
        pass: within && monotone && stable,
        detail: format!(
            "rel diff {:.4}/{:.4}/{:.4} vs 5 sqrt(eps) {:.3}/{:.3}/{:.3}, monotone={monotone}; \
             packet-first raw lambda spread {:.2e}/{:.2e}/{:.2e} (limit {LAMBDA_SPREAD:e}), \
             extrapolant change {:.2e}/{:.2e}/{:.2e}",
            worst[0],
            worst[1],
            worst[2],
            M1_FACTOR * 0.2,
            M1_FACTOR * 0.1,
            M1_FACTOR * 0.05,
            spreads[0].0,
            spreads[1].0,
            spreads[2].0,
            spreads[0].1,
            spreads[1].1,
            spreads[2].1
        ),
    }
}

fn criterion_5() -> Outcome {
    let spec = QuadratureSpec::default();
    let mut ok = true;
    let mut lines = Vec::new();
    let mut prefactors = Vec::new();
    for (eps, angles) in [(0.04, &FAR_ANGLES[..]), (0.01, &[PI / 2.0][..])] {
        let s = build_scenario(1.0, 1.0, ALPHA, eps).unwrap();
        for &th in angles {
            let regulated = th == PI / 2.0;
            let r = m2_oracle_with(&s, th, &spec, &m2_options(eps, regulated)).unwrap();
            let v = r.result.value;
            let finite = v.re.is_finite() && v.im.is_finite() && v.norm() > 0.0 && r.result.converged;
            let ratio = m2_exponent_ratio(&s, th, v);
            let pref = m2_prefactor(&s, th, v);
            ok &= finite;
            if th == PI / 2.0 {
                ok &= (ratio - 1.0).abs() <= EXPONENT_BAND;
            }
            if eps == 0.04 {
                prefactors.push(pref);
            }
            let mut line =
                format!("eps={eps} theta={th:.4}: |M2|={:.4e} exponent ratio {ratio:.3} prefactor {pref:.3}", v.norm());
            if let Some(reg) = r.regulated {
                ok &= reg.raw_spread <= LAMBDA_SPREAD && !reg.divergent;
                let change = reg.error_estimate / reg.value.norm();
                line.push_str(&format!(
                    ", raw lambda spread {:.2e} (limit {LAMBDA_SPREAD:e}), extrapolant change {change:.2e}",
                    reg.raw_spread
                ));
            }
            lines.push(line);
        }
    }
    let hi = prefactors.iter().cloned().fold(f64::MIN, f64::max);
    let lo = prefactors.iter().cloned().fold(f64::MAX, f64::min);
    let spread_ok = hi / lo <= PREFACTOR_SPREAD;
    lines.push(format!(
        "prefactor max/min over angles at eps=0.04 {:.3} (limit {PREFACTOR_SPREAD}), quoted 16/pi^2 = {QUOTED_M2_PREFACTOR:.4}",
        hi / lo
    ));
    Outcome { pass: ok && spread_ok, detail: lines.join("; ") }
}

/// e^{-a k^2} sinh(b k) / (b k) with b^2 = b2, without overflow.
fn radial_integrand(a: f64, b2: f64, k: f64) -> f64 {
    let x2 = b2 * k * k;
    let g = (-a * k * k).exp();
    if x2.abs() < 1e-8 {
        return g * (1.0 + x2 / 6.0);
    }
    if b2 > 0.0 {
        let x = x2.sqrt();
        ((x - a * k * k).exp() - (-x - a * k * k).exp()) / (2.0 * x)
    } else {
        let x = (-x2).sqrt();
        g * x.sin() / x
    }
}

fn criterion_6() -> Outcome {
    let spec = QuadratureSpec { adaptive_rel_tol: 1e-12, adaptive_abs_tol: 1e-300, ..QuadratureSpec::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let g0 = g_fn(Complex64::new(0.0, 0.0)).unwrap();
    let g0_ok = g0 == Complex64::new(1.0, 0.0);

    let mut series: f64 = 0.0;
    for _ in 0..20 {
        let r = 5.0 * rng.random::<f64>().sqrt();
        let x = Complex64::from_polar(r, rng.random_range(-PI..PI));
        series = series.max(rel(g_series(x, 30), g_fn(x).unwrap()));
    }

    let s = build_scenario(1.0, 1.0, ALPHA, 0.04).unwrap();
    let sx2 = s.sigma_x * s.sigma_x;
    let mut radial: f64 = 0.0;
    for _ in 0..20 {
        let x: f64 = rng.random_range(-4.0..4.0);
        let b2 = 4.0 * sx2 * x;
        let lhs = integrate_adaptive_semi_infinite(|k| Complex64::new(radial_integrand(sx2, b2, k), 0.0), 0.0, &spec)
            .unwrap()
            .value
            .re;
        let rhs = (PI.sqrt() / 2.0 / s.sigma_x) * g_fn(Complex64::new(x, 0.0)).unwrap().re;
        radial = radial.max((lhs - rhs).abs() / rhs.abs());
    }

    let mut time: f64 = 0.0;
    for (th, eps) in [(PI / 3.0, 0.04), (PI / 2.0, 0.01), (2.0 * PI / 3.0, 0.0025)] {
        let (sh, ch) = ((th / 2.0).sin(), (th / 2.0).cos());
        let (a, b) = (sh * sh / (2.0 * eps * eps), 2.0 * ch * ch / (eps * eps));
        let inner = |xm: f64| {
            let plus = integrate_adaptive_semi_infinite(|xp| Complex64::new((-a * xp * xp).exp(), 0.0), 0.0, &spec)
                .unwrap()
                .value
                .re;
            Complex64::new(2.0 * plus * (-b * xm * xm).exp(), 0.0)
        };
        let num = integrate_adaptive_semi_infinite(|u| inner(-u), 0.0, &spec).unwrap().value.re;
        let closed = time_integral_extended(th, eps);
        time = time.max((num - closed).abs() / closed);
    }

    let ms = [20.0, 50.0, 100.0, 200.0, 500.0];
    let cs: Vec<f64> = ms.iter().map(|&m| g_asymptotic_constant(m).unwrap()).collect();
    let steps: Vec<f64> = cs.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let converging = steps.windows(2).all(|w| w[1] < w[0]) && steps[steps.len() - 1] < 1e-3;
    let (m4, m5) = (ms[3], ms[4]);
    let limit = (m5 * cs[4] - m4 * cs[3]) / (m5 - m4);

    let ok = g0_ok && series <= SERIES_TOL && radial <= IDENTITY_TOL && time <= IDENTITY_TOL && converging;
    Outcome {
        pass: ok,
        detail: format!(
            "g(0)=1 {g0_ok}; series vs g max rel {series:.2e}; radial identity {radial:.2e}; \
             time identity {time:.2e}; c(500)={:.6}, limit {limit:.6} vs quoted 1/pi={QUOTED_ASYMPTOTIC_CONSTANT:.6}",
            cs[4]
        ),
    }
}

fn criterion_7() -> Outcome {
    let spec = QuadratureSpec::default();
    let cf = ClosedForms::default();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for eps in [0.04, 0.01, 0.0025] {
        let s = build_scenario(1.0, 1.0, 0.1, eps).unwrap();
        let bound = 1.0 + UNITARITY_FACTOR * eps.sqrt();
        let a = cf.theta_min(&s);
        let mut totals = vec![cf.m0(&s, 0.0).unwrap() + m1_forward(&s, &spec).unwrap()];
        for j in 0..50 {
            let th = a + (0.75 * PI - a) * j as f64 / 49.0;
            totals.push(cf.amplitude_set(&s, th).unwrap().total());
        }
        for t in totals {
            worst = worst.max(t.norm() - bound + 1.0);
            ok &= t.norm() <= bound;
        }
    }
    Outcome { pass: ok, detail: format!("max |M| - 5 sqrt(eps) = {worst:.4} (limit 1) at eta=0.1") }
}

fn criterion_8() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_packet-born");
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(format!("{run}.csv"));
        let status = Command::new(bin)
            .args(["validate", "--profile", "quick", "--seed", "7", "-o"])
            .arg(&out)
            .env("PACKET_BORN_WORKERS", if run == "a" { "1" } else { "4" })
            .status()
            .unwrap();
        let csv = std::fs::read(&out).unwrap_or_default();
        let json = std::fs::read(out.with_extension("json")).unwrap_or_default();
        files.push((status.code(), csv, json));
    }
    let same = files[0] == files[1] && !files[0].1.is_empty() && !files[0].2.is_empty();
    Outcome {
        pass: same,
        detail: format!(
            "exit codes {:?}/{:?}, csv {} bytes, json {} bytes, identical={same}",
            files[0].0,
            files[1].0,
            files[0].1.len(),
            files[0].2.len()
        ),
    }
}

fn main() {
    let s = Duration::from_secs;
    let results = [
        report(1, "Rutherford reproduction", s(1), criterion_1),
        report(2, "forward log law", s(10), criterion_2),
        report(3, "zeroth-order oracle", s(30), criterion_3),
        report(4, "first-order oracle", s(180), criterion_4),
        report(5, "second-order finiteness and suppression", s(600), criterion_5),
        report(6, "special functions", s(10), criterion_6),
        report(7, "unitarity bound", s(1), criterion_7),
        report(8, "determinism", s(600), criterion_8),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
