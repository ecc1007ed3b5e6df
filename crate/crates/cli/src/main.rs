//! Command-line front end: loads a JSON run config, runs one pipeline and
//! emits JSON or CSV.
//!
//! Exit codes: 0 success or pass, 1 verification failure, 2 configuration
//! error, 3 numerical failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dispersal::config::{Problem, RunConfig};
use dispersal::evolve::{checkpoints_csv, Evolution};
use dispersal::io::write_atomic;
use dispersal::kernels::NORM_TOL;
use dispersal::spectral::{
    lyapunov_top, monodromy_from, principal_eigen_autonomous, spectral_report, LyapunovOptions, PeOptions,
    PrimeOptions, ReportPlan,
};
use dispersal::verify::{self, report_rows, write_rows, Scenario, TheoremId};
use dispersal::Error;

#[derive(Parser, Debug)]
#[command(name = "dispersal", version, about = "Principal spectral quantities of nonlocal dispersal equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; overrides `outputs.dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel loops.
    #[arg(long, global = true, env = "DISPERSAL_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Check kernel hypotheses and grid compatibility.
    KernelCheck,
    /// Integrate from u₀ = 1 and record checkpoints.
    Simulate,
    /// Top Lyapunov exponent with window slopes.
    Lyapunov,
    /// Perron pair (time-independent) or monodromy spectrum (periodic).
    Eigen,
    /// All spectral estimates and average bounds.
    Bounds,
    /// Run one theorem check; the id defaults to `verify.theorem`.
    Verify { theorem: Option<String> },
    /// Run the sweep plan.
    Sweep,
}

impl Command {
    fn stem(&self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Simulate => "simulate",
            Command::Lyapunov => "lyapunov",
            Command::Eigen => "eigen",
            Command::Bounds => "bounds",
            Command::Verify { .. } => "verify",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() || matches!(e, Error::Io(_) | Error::Csv(_)) {
            3
        } else {
            2
        };
        Failure { code, msg: e.to_string() }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

struct Output {
    json: Value,
    csv: Vec<u8>,
    passed: bool,
    /// Extra artifacts, written only with an output directory.
    extra: Vec<(String, Vec<u8>)>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let started = Instant::now();
    let path = cli.config.as_ref().ok_or_else(|| config_error("--config <path> is required"))?;
    let cfg = RunConfig::load(path)?;
    let threads = cli.threads.filter(|n| *n > 0);
    if let Some(n) = threads {
        dispersal::par::init_threads(n);
    }
    let out = match &cli.command {
        Command::KernelCheck => kernel_check(&cfg)?,
        Command::Simulate => simulate(&cfg, &cfg.problem()?)?,
        Command::Lyapunov => lyapunov(&cfg, &cfg.problem()?)?,
        Command::Eigen => eigen(&cfg, &cfg.problem()?)?,
        Command::Bounds => bounds(&cfg, &cfg.problem()?)?,
        Command::Verify { theorem } => run_verify(&cfg, theorem.as_deref())?,
        Command::Sweep => run_sweep(&cfg)?,
    };
    let default = if matches!(cli.command, Command::Sweep) { Format::Csv } else { Format::Json };
    let format = cli.format.unwrap_or(default);
    let primary = match format {
        Format::Json => {
            let mut b = serde_json::to_vec_pretty(&out.json).map_err(Error::from)?;
            b.push(b'\n');
            b
        }
        Format::Csv => out.csv.clone(),
    };
    std::io::stdout().write_all(&primary).map_err(Error::from)?;
    if let Some(dir) = cli.out.clone().or_else(|| cfg.outputs.dir.clone()) {
        let ext = if format == Format::Json { "json" } else { "csv" };
        let stem = cli.command.stem();
        std::fs::create_dir_all(&dir).map_err(Error::from)?;
        write_atomic(&dir.join(format!("{stem}.{ext}")), &primary)?;
        if cfg.outputs.diagnostics {
            for (name, bytes) in &out.extra {
                write_atomic(&dir.join(name), bytes)?;
            }
        }
        let finished = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let meta = json!({
            "command": stem,
            "config": path.display().to_string(),
            "config_hash": cfg.hash(),
            "finished_unix": finished,
            "runtime_seconds": started.elapsed().as_secs_f64(),
            "threads": threads,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let mut b = serde_json::to_vec_pretty(&meta).map_err(Error::from)?;
        b.push(b'\n');
        write_atomic(&dir.join(format!("{stem}.metadata.json")), &b)?;
    }
    Ok(out.passed)
}

fn key_value_csv(rows: &[(&str, f64)]) -> Vec<u8> {
    let mut s = String::from("quantity,value\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{v:e}\n"));
    }
    s.into_bytes()
}

fn lyapunov_options(cfg: &RunConfig) -> LyapunovOptions {
    let p = &cfg.params;
    LyapunovOptions {
        start: p.start,
        horizon: p.horizon,
        dt: p.dt,
        sample_every: p.sample_every,
        windows: p.windows,
    }
}

fn kernel_check(cfg: &RunConfig) -> Result<Output, Failure> {
    let kernel = cfg.kernel()?;
    let report = kernel.verify_h1(&kernel.default_probe())?;
    let grid = cfg.grid.build()?;
    let (grid_ok, grid_json) = match dispersal::DiscreteOperator::assemble(&kernel, &grid) {
        Ok(op) => {
            let rs = op.row_sums();
            let min = rs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (true, json!({"compatible": true, "row_sum_min": min, "row_sum_max": max, "norm_inf": op.norm_inf()}))
        }
        Err(e) => (false, json!({"compatible": false, "reason": e.to_string()})),
    };
    let passed = report.passes(NORM_TOL) && grid_ok;
    if !passed {
        eprintln!("kernel check failed: norm error {:e}, {} tail violations", report.norm_error, report.tail_violations.len());
    }
    let csv = key_value_csv(&[
        ("norm_error", report.norm_error),
        ("mass", report.mass),
        ("kappa0", report.kappa0),
        ("tail_violations", report.tail_violations.len() as f64),
        ("passes", if passed { 1.0 } else { 0.0 }),
    ]);
    Ok(Output {
        json: json!({"h1": report, "norm_tol": NORM_TOL, "grid": grid_json, "passes": passed}),
        csv,
        passed,
        extra: Vec::new(),
    })
}

fn simulate(cfg: &RunConfig, pb: &Problem) -> Result<Output, Failure> {
    let p = &cfg.params;
    let evo = Evolution::new(&pb.op, &pb.field)?;
    let dt = p.dt.unwrap_or_else(|| evo.default_dt());
    let count = (p.horizon / p.checkpoint_every).round().max(1.0) as usize;
    let (mut state, rows) = evo.trajectory(p.start, p.start + p.horizon, &vec![1.0; pb.op.len()], dt, count)?;
    state.meta = Some(cfg.hash());
    let csv = checkpoints_csv(&rows)?;
    Ok(Output {
        json: json!({"dt": dt, "checkpoints": rows, "final": state}),
        csv,
        passed: true,
        extra: Vec::new(),
    })
}

fn lyapunov(cfg: &RunConfig, pb: &Problem) -> Result<Output, Failure> {
    let est = lyapunov_top(&pb.op, &pb.field, &vec![1.0; pb.op.len()], &lyapunov_options(cfg))?;
    if !est.converged() {
        eprintln!("warning: window slopes spread {:e}; estimate not converged", est.spread());
    }
    let mut csv = String::from("start,end,slope\n");
    for w in &est.windows {
        csv.push_str(&format!("{:e},{:e},{:e}\n", w.start, w.end, w.slope));
    }
    let mut samples = String::from("t,log_norm\n");
    for (t, y) in &est.samples {
        samples.push_str(&format!("{t:e},{y:e}\n"));
    }
    Ok(Output {
        json: json!({
            "lambda_pl": est.lambda_pl,
            "lambda_pl_lower": est.lambda_pl_lower,
            "lambda_pl_upper": est.lambda_pl_upper,
            "converged": est.converged(),
            "horizon": est.horizon,
            "dt": est.dt,
            "windows": est.windows,
        }),
        csv: csv.into_bytes(),
        passed: true,
        extra: vec![("lyapunov.samples.csv".into(), samples.into_bytes())],
    })
}

fn vector_csv(pb: &Problem, v: &[f64]) -> Vec<u8> {
    let dim = pb.grid.dim();
    let mut s = String::from("index");
    for d in 0..dim {
        s.push_str(&format!(",x{}", d + 1));
    }
    s.push_str(",phi\n");
    for (i, (x, phi)) in pb.grid.nodes().zip(v).enumerate() {
        s.push_str(&i.to_string());
        for c in x {
            s.push_str(&format!(",{c:e}"));
        }
        s.push_str(&format!(",{phi:e}\n"));
    }
    s.into_bytes()
}

fn eigen(cfg: &RunConfig, pb: &Problem) -> Result<Output, Failure> {
    if pb.field.is_time_independent() {
        let c0 = pb.field.sample(&pb.grid)?.c0;
        let pair = principal_eigen_autonomous(&pb.op, &c0)?;
        let csv = vector_csv(pb, &pair.vector);
        return Ok(Output {
            json: json!({"method": "power_iteration", "value": pair.value, "perron": pair}),
            csv,
            passed: true,
            extra: Vec::new(),
        });
    }
    if pb.field.period().is_none() && cfg.params.period.is_none() {
        return Err(config_error("eigen needs a time-independent or periodic coefficient"));
    }
    let m = monodromy_from(&pb.op, &pb.field, cfg.params.period, cfg.params.start, cfg.params.dt)?;
    let csv = vector_csv(pb, &m.perron.vector);
    Ok(Output {
        json: json!({"method": "monodromy", "value": m.lambda_s, "monodromy": m}),
        csv,
        passed: true,
        extra: Vec::new(),
    })
}

fn bounds(cfg: &RunConfig, pb: &Problem) -> Result<Output, Failure> {
    let p = &cfg.params;
    let plan = ReportPlan {
        lyapunov: lyapunov_options(cfg),
        lambda_pe: Some(PeOptions {
            denominators: p.denominators.clone(),
            dt: p.dt,
            ..PeOptions::default()
        }),
        prime_half_width: Some(verify::BRACKET_HALF_WIDTH),
        prime: PrimeOptions {
            lower_horizon: p.lower_horizon,
            window: None,
            bisect_tol: p.bisect_tol,
        },
    };
    let report = spectral_report(&pb.op, &pb.field, &plan)?;
    let avg = pb.field.time_averaged().sample(&pb.grid)?.c0;
    let sup_avg = avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let st_avg = pb.field.space_time_average(&pb.grid).ok();
    let mass = pb.op.row_sums().iter().sum::<f64>() / pb.op.len() as f64;
    let mut rows = vec![
        ("lambda_pl", report.lambda_pl),
        ("lambda_pl_lower", report.lambda_pl_lower),
        ("sup_time_average", sup_avg),
        ("kernel_mass_average", mass),
    ];
    for (name, e) in [
        ("lambda_pe_lower", &report.lambda_pe),
        ("lambda_pe_prime", &report.lambda_pe_prime),
        ("lambda_s", &report.lambda_s),
        ("perron", &report.perron),
    ] {
        if let Some(e) = e {
            rows.push((name, e.value));
        }
    }
    if let Some(v) = st_avg {
        rows.push(("space_time_average", v));
    }
    Ok(Output {
        json: json!({
            "report": report,
            "sup_time_average": sup_avg,
            "space_time_average": st_avg,
            "kernel_mass_average": mass,
        }),
        csv: key_value_csv(&rows),
        passed: true,
        extra: Vec::new(),
    })
}

fn run_verify(cfg: &RunConfig, theorem: Option<&str>) -> Result<Output, Failure> {
    let id = match theorem {
        Some(s) => s.parse::<TheoremId>()?,
        None => cfg
            .verify
            .as_ref()
            .and_then(|v| v.theorem)
            .ok_or_else(|| config_error("no theorem given and verify.theorem is unset"))?,
    };
    let sc = Scenario::new(cfg.clone())?;
    let report = verify::verify(id, &sc)?;
    for (name, s) in report.failing() {
        eprintln!(
            "{id}: {name} violated: {} = {:e} vs {} = {:e} (slack {:e}, tolerance {:e})",
            s.lhs, s.lhs_value, s.rhs, s.rhs_value, s.value, s.tolerance
        );
    }
    for f in &report.flags {
        eprintln!("{id}: {f}");
    }
    let mut csv = Vec::new();
    write_rows(&mut csv, &report_rows(&report))?;
    Ok(Output {
        json: serde_json::to_value(&report).map_err(Error::from)?,
        csv,
        passed: report.passed(),
        extra: Vec::new(),
    })
}

fn run_sweep(cfg: &RunConfig) -> Result<Output, Failure> {
    let plan = cfg.sweep.clone().ok_or_else(|| config_error("sweep needs a `sweep` block in the config"))?;
    let sc = Scenario::new(cfg.clone())?;
    let rows = verify::sweep(&sc, &plan);
    let passed = rows.iter().all(|r| r.verdict == "pass");
    for r in rows.iter().filter(|r| r.verdict != "pass") {
        eprintln!("{}: {}", r.scenario_id, r.verdict);
    }
    let mut csv = Vec::new();
    write_rows(&mut csv, &rows)?;
    Ok(Output {
        json: serde_json::to_value(&rows).map_err(Error::from)?,
        csv,
        passed,
        extra: Vec::new(),
    })
}
