//! Acceptance gate. Prints one line per criterion and exits non-zero when
//! any criterion fails.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use std::path::{Path, PathBuf};
use std::time::Instant;

use dispersal::config::Perturbation;
use dispersal::evolve::{check_comparison, propagate, POS_TOL};
use dispersal::spectral::{
    estimate_lambda_pe, estimate_lambda_pe_prime, lyapunov_top, monodromy_spectrum, principal_eigen_autonomous, theta,
    theta_dichotomy_check, Dichotomy, LyapunovOptions, PeOptions, PrimeOptions, ThetaVerdict,
};
use dispersal::verify::{self, Scenario};
use dispersal::{APField, DiscreteOperator, Grid, Kernel, Result, RunConfig, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// pinned tolerances
const BASELINE_TOL: f64 = 1e-2;
const EIGEN_TOL: f64 = 1e-6;
const BASELINE_SECONDS: f64 = 10.0;
const QP_LYAPUNOV_TOL: f64 = 5e-3;
const QP_PRIME_TOL: f64 = 2e-2;
const QP_SECONDS: f64 = 60.0;
const WINDOW_TOL: f64 = 1e-2;
const PROBE_OFFSET: f64 = 0.1;
const SANDWICH_TOL: f64 = 2e-2;
const LIMIT_PERIODIC_GAP: f64 = 3e-2;
const SUP_AVERAGE_TOL: f64 = 1e-2;
const LIPSCHITZ_TOL: f64 = 2e-3;
const MONOTONE_TOL: f64 = 1e-2;
const FFT_TOL: f64 = 1e-12;
const RK4_RATIO: (f64, f64) = (12.0, 20.0);
const THETA_SLACK: f64 = 1e-12;

type Outcome = Result<(bool, String)>;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Scenario {
    let cfg = RunConfig::load(&scenario_dir().join(format!("{name}.json"))).expect("shipped scenario loads");
    Scenario::new(cfg).expect("shipped scenario validates")
}

fn shipped() -> Vec<Scenario> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenario directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Scenario::new(RunConfig::load(p).expect("loads")).expect("validates"))
        .collect()
}

fn torus16() -> DiscreteOperator {
    let k = Kernel::gaussian(1.0, 1, 1.0, 4.0).unwrap();
    DiscreteOperator::assemble(&k, &Grid::ring(16.0, 256).unwrap()).unwrap()
}

fn name(sc: &Scenario) -> &str {
    sc.config.name.as_deref().unwrap_or("unnamed")
}

fn constant_baseline() -> Outcome {
    let start = Instant::now();
    let op = torus16();
    let a = APField::constant(0.0);
    let n = op.len();
    let ly = lyapunov_top(&op, &a, &vec![1.0; n], &LyapunovOptions::default())?.lambda_pl;
    let mono = monodromy_spectrum(&op, &a, Some(1.0), None)?.lambda_s;
    let perron = principal_eigen_autonomous(&op, &vec![0.0; n])?.value;
    let prime = estimate_lambda_pe_prime(&op, &a, (ly - 0.25, ly + 0.25), &PrimeOptions::default())?.lambda_pe_prime;
    let secs = start.elapsed().as_secs_f64();
    let ok = (ly - 1.0).abs() <= BASELINE_TOL
        && (prime - 1.0).abs() <= BASELINE_TOL
        && (mono - 1.0).abs() <= EIGEN_TOL
        && (perron - 1.0).abs() <= EIGEN_TOL
        && secs < BASELINE_SECONDS;
    Ok((
        ok,
        format!("lambda_pl={ly:.6} lambda_s={mono:.9} perron={perron:.9} prime={prime:.4} in {secs:.2}s"),
    ))
}

fn quasi_periodic() -> Outcome {
    let start = Instant::now();
    let sc = load("quasi_periodic");
    let op = &sc.problem.op;
    let a = &sc.problem.field;
    let est = lyapunov_top(op, a, &vec![1.0; op.len()], &LyapunovOptions::with_horizon(2000.0))?;
    let l = est.lambda_pl;
    let prime = estimate_lambda_pe_prime(op, a, (l - 0.25, l + 0.25), &sc.prime_options())?.lambda_pe_prime;
    let secs = start.elapsed().as_secs_f64();
    let ok = (l - 1.0).abs() <= QP_LYAPUNOV_TOL && (prime - l).abs() <= QP_PRIME_TOL && secs < QP_SECONDS;
    Ok((ok, format!("lambda_pl={l:.6} prime={prime:.4} in {secs:.2}s")))
}

fn coincidence(all: &[Scenario]) -> Outcome {
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for sc in all {
        let op = &sc.problem.op;
        let a = &sc.problem.field;
        let opts = sc.lyapunov_options();
        let e1 = lyapunov_top(op, a, &vec![1.0; op.len()], &opts)?;
        let e2 = lyapunov_top(op, a, &sc.random_positive(7), &opts)?;
        let spread = e1.lambda_pl_upper - e1.lambda_pl_lower;
        let dist = (e1.lambda_pl - e2.lambda_pl).abs();
        worst = worst.max(spread).max(dist);
        let decay = e1.probe(e1.lambda_pl + PROBE_OFFSET).verdict;
        let growth = e1.probe(e1.lambda_pl - PROBE_OFFSET).verdict;
        let ok = spread <= WINDOW_TOL
            && dist <= WINDOW_TOL
            && decay == Dichotomy::Decay
            && growth == Dichotomy::Growth;
        if !ok {
            bad.push(format!("{} (spread {spread:.2e}, starts {dist:.2e})", name(sc)));
        }
    }
    Ok((
        bad.is_empty(),
        format!("{} scenarios, worst spread/start gap {worst:.2e}; failing: [{}]", all.len(), bad.join(", ")),
    ))
}

fn sandwich() -> Outcome {
    let sc = load("stationary_cos");
    let op = &sc.problem.op;
    let a = &sc.problem.field;
    let perron = principal_eigen_autonomous(op, &a.sample(op.grid())?.c0)?.value;
    let prime = estimate_lambda_pe_prime(op, a, (perron - 0.25, perron + 0.25), &sc.prime_options())?.lambda_pe_prime;
    let pe = estimate_lambda_pe(op, a, &sc.pe_options())?.lambda_pe_lower;
    let qp = load("quasi_periodic");
    let qop = &qp.problem.op;
    let qa = &qp.problem.field;
    let ly = lyapunov_top(qop, qa, &vec![1.0; qop.len()], &qp.lyapunov_options())?.lambda_pl;
    let opts = PeOptions {
        denominators: vec![99],
        ..qp.pe_options()
    };
    let bound = estimate_lambda_pe(qop, qa, &opts)?;
    let b99 = bound
        .bounds
        .iter()
        .find(|b| b.q == Some(99))
        .map(|b| b.bound)
        .unwrap_or(f64::NAN);
    let gap = ly - b99;
    let ok = (prime - perron).abs() <= SANDWICH_TOL && pe <= perron + EIGEN_TOL && gap.abs() <= LIMIT_PERIODIC_GAP;
    Ok((
        ok,
        format!("perron={perron:.6} prime={prime:.4} pe_lower={pe:.6}; q=99 bound {b99:.4} vs lambda_pl {ly:.4}"),
    ))
}

fn lower_bounds(all: &[Scenario]) -> Outcome {
    let mut bad = Vec::new();
    let mut worst = f64::INFINITY;
    for sc in all {
        let r = verify::verify_sup_average(sc)?;
        let s = &r.slacks["above_sup_time_average"];
        worst = worst.min(s.value);
        if s.value < -SUP_AVERAGE_TOL {
            bad.push(name(sc).to_string());
        }
    }
    let bx = load("box_linear");
    let op = &bx.problem.op;
    let c0 = bx.problem.field.sample(op.grid())?.c0;
    let p_box = principal_eigen_autonomous(op, &c0)?.value;
    let mean_a = c0.iter().sum::<f64>() / c0.len() as f64;
    let mass = op.row_sums().iter().sum::<f64>() / op.len() as f64;
    let rayleigh = mean_a + mass;
    let tor = load("stationary_cos");
    let top = &tor.problem.op;
    let p_tor = principal_eigen_autonomous(top, &tor.problem.field.sample(top.grid())?.c0)?.value;
    let ok = bad.is_empty() && p_box >= rayleigh - EIGEN_TOL && p_tor >= 1.0 - EIGEN_TOL;
    Ok((
        ok,
        format!(
            "min lambda - sup avg {worst:.3e}; box perron {p_box:.6} >= {rayleigh:.6}; torus perron {p_tor:.6} >= 1; failing: [{}]",
            bad.join(", ")
        ),
    ))
}

fn lipschitz() -> Outcome {
    let base = load("lipschitz_time");
    let run = |pert: Perturbation| -> Result<(f64, bool)> {
        let mut sc = base.clone();
        sc.spec.perturbation = Some(pert);
        sc.spec.include_prime = false;
        let r = verify::verify_continuity(&sc)?;
        Ok((r.quantities["lambda_pl_difference"], r.verdict == Verdict::Pass))
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for delta in [0.05, 0.1, 0.2] {
        let (d, pass) = run(Perturbation {
            shift: 0.0,
            modes: vec![[delta, 1.0, 0.0]],
        })?;
        ok &= pass && d <= delta + LIPSCHITZ_TOL;
        parts.push(format!("delta={delta}: {d:.4}"));
    }
    let c = 0.3;
    let (d, pass) = run(Perturbation {
        shift: c,
        modes: Vec::new(),
    })?;
    ok &= pass && (d - c).abs() <= LIPSCHITZ_TOL;
    parts.push(format!("shift {c}: {d:.6}"));
    Ok((ok, parts.join(", ")))
}

fn monotone() -> Outcome {
    let linear = load("box_linear");
    let mut zero_cfg = linear.config.clone();
    zero_cfg.name = Some("box_zero".into());
    zero_cfg.coefficient.c0 = serde_json::from_str("0.0").unwrap();
    let zero = Scenario::new(zero_cfg)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for sc in [zero, linear, load("box_time")] {
        let r = verify::verify_monotone(&sc)?;
        let inner = r.quantities["lambda_inner"];
        let outer = r.quantities["lambda_outer"];
        ok &= inner <= outer + MONOTONE_TOL;
        parts.push(format!("{}: {inner:.4} <= {outer:.4}", name(&sc)));
    }
    Ok((ok, parts.join(", ")))
}

fn comparison() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in ["comparison", "lipschitz_time", "box_time"] {
        let sc = load(n);
        let a1 = &sc.problem.field;
        let a2 = a1.shifted(0.3)?.with_mode(0.2, 1.7, 0.0)?;
        let p = &sc.config.params;
        let rep = check_comparison(
            &sc.problem.op,
            a1,
            &a2,
            &sc.random_positive(3),
            p.start,
            p.horizon,
            50,
            p.dt,
        )?;
        let neg = rep.worst_negativity();
        let gap = rep.worst_gap();
        ok &= rep.points.len() >= 50 && neg >= -POS_TOL && rep.ordered && rep.nonnegative;
        parts.push(format!("{n}: {} checkpoints, min u/sup u {neg:.2e}, order gap {gap:.2e}", rep.points.len()));
    }
    Ok((ok, parts.join(", ")))
}

fn self_consistency() -> Outcome {
    let op = torus16();
    let dense = op.densified();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fa = op.apply(&u)?;
    let da = dense.apply(&u)?;
    let fft_err = fa.iter().zip(&da).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    // u' = (m + sin t) u with u(0) = 1 on a homogeneous state
    let a = APField::homogeneous(0.0, &[(1.0, 1.0, -std::f64::consts::FRAC_PI_2)])?;
    let m = op.row_sums()[0];
    let t = 10.0;
    let exact = m * t + 1.0 - t.cos();
    let err = |dt: f64| -> Result<f64> {
        let s = propagate(&op, &a, 0.0, t, &vec![1.0; op.len()], dt)?;
        let log_u = s.u[0].ln() + s.log_offset;
        Ok((log_u - exact).abs())
    };
    let e = [err(0.2)?, err(0.1)?, err(0.05)?];
    let r1 = e[0] / e[1];
    let r2 = e[1] / e[2];
    let in_band = |r: f64| (RK4_RATIO.0..=RK4_RATIO.1).contains(&r);

    let st = load("stationary_cos");
    let sop = &st.problem.op;
    let perron = principal_eigen_autonomous(sop, &st.problem.field.sample(sop.grid())?.c0)?.value;
    let mono = monodromy_spectrum(sop, &st.problem.field, Some(1.0), None)?.lambda_s;
    let ok = fft_err <= FFT_TOL && in_band(r1) && in_band(r2) && (mono - perron).abs() <= EIGEN_TOL;
    Ok((
        ok,
        format!(
            "fft vs dense {fft_err:.2e}; rk4 ratios {r1:.2}, {r2:.2}; monodromy {mono:.9} vs perron {perron:.9}"
        ),
    ))
}

fn theta_utility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut dominant = 0;
    for _ in 0..20 {
        let w: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| rng.gen_range(0.1..2.0)).collect()).collect();
        match theta_dichotomy_check(&w, 1e-9)? {
            ThetaVerdict::IndependentOfX => {
                let flat = w.iter().all(|r| r.iter().all(|v| (v - r[0]).abs() <= 1e-9 * r[0].abs()));
                if !flat {
                    return Ok((false, "independence claimed for an x-dependent field".into()));
                }
            }
            ThetaVerdict::Dominant { x_star, theta_row } => {
                let mut strict = false;
                for y in 0..8 {
                    let th = theta(&w, x_star, y);
                    if (th - theta_row[y]).abs() > THETA_SLACK || th < 1.0 - THETA_SLACK {
                        return Ok((false, format!("theta({x_star},{y}) = {th} fails")));
                    }
                    strict |= th > 1.0 + THETA_SLACK;
                }
                if !strict {
                    return Ok((false, format!("no strict inequality at x*={x_star}")));
                }
                dominant += 1;
            }
        }
    }
    Ok((true, format!("20 fields re-verified, {dominant} dominant")))
}

fn main() {
    let all = shipped();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("constant baseline", Box::new(constant_baseline)),
        ("quasi-periodic equality", Box::new(quasi_periodic)),
        ("Lyapunov coincidence", Box::new(|| coincidence(&all))),
        ("eigenvalue sandwich", Box::new(sandwich)),
        ("average lower bounds", Box::new(|| lower_bounds(&all))),
        ("Lipschitz continuity", Box::new(lipschitz)),
        ("domain monotonicity", Box::new(monotone)),
        ("comparison principle", Box::new(comparison)),
        ("numerical self-consistency", Box::new(self_consistency)),
        ("theta dichotomy", Box::new(theta_utility)),
    ];
    let mut failed = 0;
    for (i, (label, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {label}: {detail} [{:.1}s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
