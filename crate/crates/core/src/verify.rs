//! Theorem-by-theorem verification harness.
//!
//! Every check is an inequality between two named quantities. A report
//! passes when each slack `lhs − rhs` has its expected sign up to the
//! tolerance of that check; the estimator behind a check sets its
//! tolerance (see [`Tolerances`]).

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::APField;
use crate::config::{Problem, RunConfig, SweepExpect, SweepParameter, SweepPlan, SweepQuantity, Tolerances, VerifySpec};
use crate::discretize::{DiscreteOperator, Domain};
use crate::error::{Error, Result};
use crate::evolve::{check_comparison, POS_TOL};
use crate::par;
use crate::spectral::{
    autonomous_certificate, estimate_lambda_pe, estimate_lambda_pe_prime, lyapunov_top, periodic_certificate,
    principal_eigen_autonomous, resolve_period, CertificateKind, LyapunovEstimate, LyapunovOptions,
    PeOptions, PrimeOptions,
};

/// Shift of the dichotomy probes around the Lyapunov estimate.
pub const PROBE_OFFSET: f64 = 0.1;
/// Half-width of the default supersolution bracket around `λ_PL`.
pub const BRACKET_HALF_WIDTH: f64 = 0.25;
/// Allowed mismatch of two Lyapunov runs sharing horizon and step, whose
/// discretization errors largely cancel in the difference.
pub const DIFFERENCE_TOL: f64 = 2e-3;

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    T1_1,
    T1_2,
    T1_3,
    T1_4,
    T1_5,
    L3_1,
    L4_2,
    L4_3,
    P2_2,
}

impl TheoremId {
    pub const ALL: [TheoremId; 9] = [
        TheoremId::T1_1,
        TheoremId::T1_2,
        TheoremId::T1_3,
        TheoremId::T1_4,
        TheoremId::T1_5,
        TheoremId::L3_1,
        TheoremId::L4_2,
        TheoremId::L4_3,
        TheoremId::P2_2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::T1_1 => "T1_1",
            TheoremId::T1_2 => "T1_2",
            TheoremId::T1_3 => "T1_3",
            TheoremId::T1_4 => "T1_4",
            TheoremId::T1_5 => "T1_5",
            TheoremId::L3_1 => "L3_1",
            TheoremId::L4_2 => "L4_2",
            TheoremId::L4_3 => "L4_3",
            TheoremId::P2_2 => "P2_2",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['.', '-'], "_");
        TheoremId::ALL
            .into_iter()
            .find(|id| id.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown theorem id '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `lhs − rhs ≤ tolerance`
    AtMost,
    /// `lhs − rhs ≥ −tolerance`
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    pub lhs: String,
    pub lhs_value: f64,
    pub rhs: String,
    pub rhs_value: f64,
    /// `lhs − rhs`
    pub value: f64,
    pub sense: Sense,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// An estimator did not converge; slacks are reported but not trusted.
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem_id: TheoremId,
    /// Config hash of the scenario.
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_name: Option<String>,
    pub quantities: BTreeMap<String, f64>,
    pub slacks: BTreeMap<String, Slack>,
    /// Largest per-check tolerance.
    pub tolerance: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Wall-clock seconds; kept out of the serialized report so identical
    /// inputs give identical bytes.
    #[serde(skip)]
    pub runtime: f64,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failing(&self) -> impl Iterator<Item = (&String, &Slack)> {
        self.slacks.iter().filter(|(_, s)| !s.holds)
    }
}

struct Checks {
    started: Instant,
    quantities: BTreeMap<String, f64>,
    slacks: BTreeMap<String, Slack>,
    flags: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks {
            started: Instant::now(),
            quantities: BTreeMap::new(),
            slacks: BTreeMap::new(),
            flags: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn quantity(&mut self, name: &str, v: f64) -> f64 {
        self.quantities.insert(name.to_string(), v);
        v
    }

    fn slack(&mut self, name: &str, lhs: (&str, f64), rhs: (&str, f64), sense: Sense, tolerance: f64) {
        let value = lhs.1 - rhs.1;
        let holds = match sense {
            Sense::AtMost => value <= tolerance,
            Sense::AtLeast => value >= -tolerance,
        };
        self.slacks.insert(
            name.to_string(),
            Slack {
                lhs: lhs.0.to_string(),
                lhs_value: lhs.1,
                rhs: rhs.0.to_string(),
                rhs_value: rhs.1,
                value,
                sense,
                tolerance,
                holds,
            },
        );
    }

    fn at_most(&mut self, name: &str, lhs: (&str, f64), rhs: (&str, f64), tol: f64) {
        self.slack(name, lhs, rhs, Sense::AtMost, tol);
    }

    fn at_least(&mut self, name: &str, lhs: (&str, f64), rhs: (&str, f64), tol: f64) {
        self.slack(name, lhs, rhs, Sense::AtLeast, tol);
    }

    /// `|x − y| ≤ tol`, recorded as `|x − y| − 0`.
    fn close(&mut self, name: &str, x: (&str, f64), y: (&str, f64), tol: f64) {
        let label = format!("|{} - {}|", x.0, y.0);
        self.slack(name, (&label, (x.1 - y.1).abs()), ("0", 0.0), Sense::AtMost, tol);
    }

    fn lyapunov(&mut self, prefix: &str, est: &LyapunovEstimate) -> f64 {
        self.quantity(&format!("{prefix}_lower"), est.lambda_pl_lower);
        self.quantity(&format!("{prefix}_upper"), est.lambda_pl_upper);
        if !est.converged() {
            self.flags.push(format!(
                "inconclusive: {prefix} windows spread {:.3e} over horizon {}",
                est.spread(),
                est.horizon
            ));
        }
        self.quantity(prefix, est.lambda_pl)
    }

    fn finish(self, id: TheoremId, sc: &Scenario) -> TheoremReport {
        let tolerance = self.slacks.values().map(|s| s.tolerance).fold(0.0, f64::max);
        let holds = self.slacks.values().all(|s| s.holds);
        let verdict = if self.flags.iter().any(|f| f.starts_with("inconclusive")) {
            Verdict::Inconclusive
        } else if holds {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        TheoremReport {
            theorem_id: id,
            scenario: sc.hash.clone(),
            scenario_name: sc.config.name.clone(),
            quantities: self.quantities,
            slacks: self.slacks,
            tolerance,
            verdict,
            flags: self.flags,
            notes: self.notes,
            runtime: self.started.elapsed().as_secs_f64(),
        }
    }
}

/// A validated config with its assembled problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: RunConfig,
    pub hash: String,
    pub problem: Problem,
    pub spec: VerifySpec,
}

impl Scenario {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let problem = config.problem()?;
        let spec = config.verify.clone().unwrap_or_default();
        Ok(Scenario {
            hash: config.hash(),
            config,
            problem,
            spec,
        })
    }

    fn op(&self) -> &DiscreteOperator {
        &self.problem.op
    }

    fn field(&self) -> &APField {
        &self.problem.field
    }

    fn tol(&self) -> Tolerances {
        self.spec.tolerances
    }

    pub fn lyapunov_options(&self) -> LyapunovOptions {
        let p = &self.config.params;
        LyapunovOptions {
            start: p.start,
            horizon: p.horizon,
            dt: p.dt,
            sample_every: p.sample_every,
            windows: p.windows,
        }
    }

    pub fn prime_options(&self) -> PrimeOptions {
        PrimeOptions {
            lower_horizon: self.config.params.lower_horizon,
            window: None,
            bisect_tol: self.config.params.bisect_tol,
        }
    }

    pub fn pe_options(&self) -> PeOptions {
        PeOptions {
            denominators: self.config.params.denominators.clone(),
            dt: self.config.params.dt,
            ..PeOptions::default()
        }
    }

    /// Strictly positive initial data drawn from the seed.
    pub fn random_positive(&self, salt: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        (0..self.op().len()).map(|_| rng.gen_range(0.1..1.0)).collect()
    }

    fn lyapunov(&self, a: &APField) -> Result<LyapunovEstimate> {
        lyapunov_top(self.op(), a, &vec![1.0; self.op().len()], &self.lyapunov_options())
    }

    fn bracket(&self, lambda_pl: f64) -> (f64, f64) {
        match self.config.params.bracket {
            Some([lo, hi]) => (lo, hi),
            None => (lambda_pl - BRACKET_HALF_WIDTH, lambda_pl + BRACKET_HALF_WIDTH),
        }
    }

    fn limit_periodic(&self) -> bool {
        self.spec
            .limit_periodic
            .unwrap_or_else(|| self.field().is_time_independent() || self.field().period().is_some())
    }

    fn wants(&self, clause: u8) -> bool {
        self.spec.clauses.as_ref().is_none_or(|c| c.contains(&clause))
    }

    fn requested(&self, clause: u8) -> bool {
        self.spec.clauses.as_ref().is_some_and(|c| c.contains(&clause))
    }
}

fn sup_time_average(sc: &Scenario) -> Result<f64> {
    let avg = sc.field().time_averaged().sample(&sc.problem.grid)?.c0;
    Ok(avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Perron value of `K`, i.e. `λ_PL(0)`.
fn zero_coefficient_value(op: &DiscreteOperator) -> Result<f64> {
    Ok(principal_eigen_autonomous(op, &vec![0.0; op.len()])?.value)
}

/// Coincidence of the Lyapunov exponents and the dichotomy threshold.
pub fn verify_t1_1(sc: &Scenario) -> Result<TheoremReport> {
    let mut c = Checks::new();
    let tol = sc.tol();
    let est = sc.lyapunov(sc.field())?;
    let alt = lyapunov_top(sc.op(), sc.field(), &sc.random_positive(1), &sc.lyapunov_options())?;
    let l = c.lyapunov("lambda_pl", &est);
    let l_alt = c.lyapunov("lambda_pl_alt_start", &alt);
    c.at_most(
        "upper_vs_lower",
        ("lambda_pl", l),
        ("lambda_pl_lower", est.lambda_pl_lower),
        tol.window,
    );
    c.at_most(
        "window_spread",
        ("lambda_pl_upper", est.lambda_pl_upper),
        ("lambda_pl_lower", est.lambda_pl_lower),
        tol.window,
    );
    c.close("start_independence", ("lambda_pl", l), ("lambda_pl_alt_start", l_alt), tol.window);
    let decay = est.probe(l + PROBE_OFFSET);
    let growth = est.probe(l - PROBE_OFFSET);
    c.quantity("probe_slope_above", decay.slope);
    c.quantity("probe_slope_below", growth.slope);
    // the probes classify by window extremes; the slack is the verdict margin
    c.at_most(
        "decay_above_threshold",
        ("lambda_pl_upper", est.lambda_pl_upper),
        ("lambda_pl + probe_offset - probe_margin", l + PROBE_OFFSET - crate::spectral::PROBE_MARGIN),
        0.0,
    );
    c.at_least(
        "growth_below_threshold",
        ("lambda_pl_lower", est.lambda_pl_lower),
        ("lambda_pl - probe_offset + probe_margin", l - PROBE_OFFSET + crate::spectral::PROBE_MARGIN),
        0.0,
    );
    Ok(c.finish(TheoremId::T1_1, sc))
}

/// `λ′_PE = λ_PL`, `λ_PE ≤ λ_PL`, and the closed form for space-homogeneous
/// coefficients.
pub fn verify_t1_2(sc: &Scenario) -> Result<TheoremReport> {
    let mut c = Checks::new();
    let tol = sc.tol();
    let bisect = sc.config.params.bisect_tol;
    let est = sc.lyapunov(sc.field())?;
    let l = c.lyapunov("lambda_pl", &est);
    let prime = estimate_lambda_pe_prime(sc.op(), sc.field(), sc.bracket(l), &sc.prime_options())?;
    let lp = c.quantity("lambda_pe_prime", prime.lambda_pe_prime);
    let pe = estimate_lambda_pe(sc.op(), sc.field(), &sc.pe_options())?;
    let lo = c.quantity("lambda_pe_lower", pe.lambda_pe_lower);
    let best = &pe.bounds[pe.best];
    c.quantity("approximant_distance", best.distance);
    if let Some(q) = best.q {
        c.quantity("approximant_q", q as f64);
    }
    c.close("prime_equals_lyapunov", ("lambda_pe_prime", lp), ("lambda_pl", l), bisect + tol.slope);
    c.at_most("pe_below_lyapunov", ("lambda_pe_lower", lo), ("lambda_pl", l), tol.slope);
    if sc.limit_periodic() {
        c.at_most("limit_periodic_gap", ("lambda_pl", l), ("lambda_pe_lower", lo), tol.gap);
    }
    if sc.field().is_time_independent() {
        let p = principal_eigen_autonomous(sc.op(), &sc.field().sample(&sc.problem.grid)?.c0)?;
        let pv = c.quantity("perron", p.value);
        c.close("prime_equals_perron", ("lambda_pe_prime", lp), ("perron", pv), bisect + tol.slope);
        c.at_most("pe_below_perron", ("lambda_pe_lower", lo), ("perron", pv), tol.eigen);
    }
    if sc.field().is_space_homogeneous() {
        let mean = sc.field().base().constant_value().unwrap_or(f64::NAN);
        let k0 = c.quantity("lambda_pl_zero", zero_coefficient_value(sc.op())?);
        let r = c.quantity("mean_plus_lambda_pl_zero", mean + k0);
        c.close("closed_form_lyapunov", ("lambda_pl", l), ("mean_plus_lambda_pl_zero", r), tol.slope);
        c.close("closed_form_prime", ("lambda_pe_prime", lp), ("mean_plus_lambda_pl_zero", r), bisect + tol.slope);
        c.close("closed_form_pe", ("lambda_pe_lower", lo), ("mean_plus_lambda_pl_zero", r), tol.gap);
    }
    Ok(c.finish(TheoremId::T1_2, sc))
}

/// Lower bounds on `λ_PE` from time and space averages.
pub fn verify_t1_3(sc: &Scenario) -> Result<TheoremReport> {
    let mut c = Checks::new();
    let tol = sc.tol();
    let grid = &sc.problem.grid;
    let a = sc.field();
    let stationary = a.is_time_independent();
    let symmetric = sc.problem.kernel.symmetric;
    let on_box = matches!(grid.domain(), Domain::Box { .. });
    let on_torus = grid.is_torus();
    let clause2 = stationary && symmetric && on_box;
    let clause3 = stationary && symmetric && on_torus;
    for (k, ok, why) in [
        (2u8, clause2, "a bounded box, a time-independent coefficient and a symmetric kernel"),
        (3u8, clause3, "a torus, a time-independent periodic coefficient and a symmetric kernel"),
    ] {
        if sc.requested(k) && !ok {
            return Err(Error::Config(format!("clause {k} requires {why}")));
        }
    }
    let pe = if sc.wants(1) || clause2 || clause3 {
        Some(estimate_lambda_pe(sc.op(), a, &sc.pe_options())?)
    } else {
        None
    };
    let lo = pe.as_ref().map(|p| c.quantity("lambda_pe_lower", p.lambda_pe_lower));
    if let (true, Some(lo)) = (sc.wants(1), lo) {
        let s = c.quantity("sup_time_average", sup_time_average(sc)?);
        c.at_least("above_sup_time_average", ("lambda_pe_lower", lo), ("sup_time_average", s), tol.window);
        c.notes.push(
            "sup of the time average is certified through periodic approximants and their eigenfunctions; \
             no gauge-function construction is used"
                .into(),
        );
    }
    let mean_rowsum = sc.op().row_sums().iter().sum::<f64>() / sc.op().len() as f64;
    if let (true, true, Some(lo)) = (clause2, sc.wants(2), lo) {
        // (1/|D|)∬κ by the same quadrature as the operator
        let mean = c.quantity("space_time_average", a.space_time_average(grid)?);
        let k = c.quantity("kernel_mass_average", mean_rowsum);
        let b = c.quantity("rayleigh_bound", mean + k);
        c.at_least("above_rayleigh_bound", ("lambda_pe_lower", lo), ("rayleigh_bound", b), tol.eigen);
    }
    if let (true, true, Some(lo)) = (clause3, sc.wants(3), lo) {
        let mean = c.quantity("space_time_average", a.space_time_average(grid)?);
        c.quantity("kernel_mass_average", mean_rowsum);
        let b = c.quantity("mean_plus_one", mean + 1.0);
        c.at_least("above_mean_plus_one", ("lambda_pe_lower", lo), ("mean_plus_one", b), tol.eigen);
    }
    Ok(c.finish(TheoremId::T1_3, sc))
}

/// `λ_PL(a) ≥ λ_PL(â) ≥ sup â`.
pub fn verify_t1_4(sc: &Scenario) -> Result<TheoremReport> {
    let mut c = Checks::new();
    let tol = sc.tol();
    let est = sc.lyapunov(sc.field())?;
    let l = c.lyapunov("lambda_pl", &est);
    let avg = sc.field().time_averaged().sample(&sc.problem.grid)?.c0;
    let la = c.quantity("lambda_pl_of_average", principal_eigen_autonomous(sc.op(), &avg)?.value);
    let s = c.quantity("sup_time_average", avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    c.at_least(
        "time_variation_raises",
        ("lambda_pl", l),
        ("lambda_pl_of_average", la),
        2.0 * tol.slope,
    );
    c.at_least("average_above_sup", ("lambda_pl_of_average", la), ("sup_time_average", s), tol.eigen);
    if sc.field().is_time_independent() {
        c.close("stationary_collapse", ("lambda_pl", l), ("lambda_pl_of_average", la), 2.0 * tol.slope);
    }
    if sc.field().is_space_homogeneous() && sc.problem.grid.is_torus() {
        c.close("homogeneous_average", ("lambda_pl_of_average", la), ("sup_time_average + 1", s + 1.0), tol.eigen);
    }
    Ok(c.finish(TheoremId::T1_4, sc))
}

/// Eigenpair certificates that make `sup Λ̃_PE` and `inf Λ̃′_PE` collapse.
pub fn verify_t1_5(sc: &Scenario) -> Result<TheoremReport> {
    let mut c = Checks::new();
    let tol = sc.tol();
    let a = sc.field();
    let (lambda, cert, gap_tol) = if a.is_time_independent() {
        if sc.requested(2) {
            return Err(Error::Config("clause 2 requires a periodic, time-dependent coefficient".into()));
        }
        let c0 = a.sample(&sc.problem.grid)?.c0;
        let (lambda, cert) = autonomous_certificate(sc.op(), &c0, CertificateKind::Subsolution)?;
        (lambda, cert, tol.eigen)
    } else {
        if sc.requested(1) {
            return Err(Error::Config("clause 1 requires a time-independent coefficient".into()));
        }
        let period = resolve_period(a, sc.config.params.period)
            .map_err(|_| Error::Config("certificate collapse needs a time-independent or periodic coefficient".into()))?;
        let (lambda, defect, cert) = periodic_certificate(sc.op(), a, a, period, 0.0, 0.0, &sc.pe_options())?;
        c.quantity("period", period);
        c.at_most("periodicity_defect", ("periodicity_defect", defect), ("0", 0.0), tol.collapse);
        (lambda, cert, tol.collapse)
    };
    c.quantity("lambda", lambda);
    c.quantity("inf_phi", cert.inf_phi);
    c.quantity("sup_phi", cert.sup_phi);
    c.at_least("positive_eigenfunction", ("inf_phi", cert.inf_phi), ("0", 0.0), 0.0);
    c.at_least("subsolution_at_lambda", ("min residual/phi", cert.ratio_min), ("0", 0.0), gap_tol);
    c.at_most("supersolution_at_lambda", ("max residual/phi", cert.ratio_max), ("0", 0.0), gap_tol);
    c.at_most("collapse_gap", ("collapse_gap", cert.collapse_gap()), ("0", 0.0), gap_tol);
    Ok(c.finish(TheoremId::T1_5, sc))
}

/// Lipschitz continuity of `λ_PL` and `λ′_PE` in the coefficient.
pub fn verify_continuity(sc: &Scenario) -> Result<TheoremReport> {
    let mut c = Checks::new();
    let pert = sc
        .spec
        .perturbation
        .clone()
        .ok_or_else(|| Error::Config("continuity check needs verify.perturbation".into()))?;
    let a1 = sc.field();
    let a2 = pert.apply(a1)?;
    let dist = c.quantity("coefficient_distance", a1.sup_distance_bound(&a2, &sc.problem.grid)?);
    let e1 = sc.lyapunov(a1)?;
    let e2 = sc.lyapunov(&a2)?;
    let l1 = c.lyapunov("lambda_pl_1", &e1);
    let l2 = c.lyapunov("lambda_pl_2", &e2);
    let d = c.quantity("lambda_pl_difference", (l2 - l1).abs());
    c.at_most(
        "lyapunov_lipschitz",
        ("lambda_pl_difference", d),
        ("coefficient_distance", dist),
        DIFFERENCE_TOL,
    );
    if pert.is_pure_shift() {
        c.close(
            "shift_equivariance",
            ("lambda_pl_2 - lambda_pl_1", l2 - l1),
            ("shift", pert.shift),
            DIFFERENCE_TOL,
        );
    }
    if sc.spec.include_prime {
        let opts = sc.prime_options();
        let p1 = estimate_lambda_pe_prime(sc.op(), a1, sc.bracket(l1), &opts)?.lambda_pe_prime;
        let bracket2 = match sc.config.params.bracket {
            Some([lo, hi]) => (lo - pert.sup_norm(), hi + pert.sup_norm()),
            None => (l2 - BRACKET_HALF_WIDTH, l2 + BRACKET_HALF_WIDTH),
        };
        let p2 = estimate_lambda_pe_prime(sc.op(), &a2, bracket2, &opts)?.lambda_pe_prime;
        c.quantity("lambda_pe_prime_1", p1);
        c.quantity("lambda_pe_prime_2", p2);
        let dp = c.quantity("lambda_pe_prime_difference", (p2 - p1).abs());
        c.at_most(
            "prime_lipschitz",
            ("lambda_pe_prime_difference", dp),
            ("coefficient_distance", dist),
            2.0 * opts.bisect_tol,
        );
    }
    Ok(c.finish(TheoremId::L3_1, sc))
}

/// `λ_PL(D₁) ≤ λ_PL(D₂)` for nested boxes.
pub fn verify_monotone(sc: &Scenario) -> Result<TheoremReport> {
    let mut c = Checks::new();
    let tol = sc.tol();
    let outer_spec = sc
        .spec
        .outer
        .as_ref()
        .ok_or_else(|| Error::Config("domain monotonicity needs verify.outer".into()))?;
    if sc.config.coefficient.random_c0.is_some() {
        return Err(Error::Config("domain monotonicity needs a closed-form coefficient".into()));
    }
    let outer_grid = outer_spec.build()?;
    sc.problem
        .grid
        .embedding_into(&outer_grid)
        .map_err(|e| Error::Config(e.to_string()))?;
    let outer_op = DiscreteOperator::assemble(&sc.problem.kernel, &outer_grid)?;
    let outer_field = sc.config.coefficient.build(&outer_grid, sc.config.seed)?;
    let (l1, l2, t) = if sc.field().is_time_independent() {
        let p1 = principal_eigen_autonomous(sc.op(), &sc.field().sample(&sc.problem.grid)?.c0)?.value;
        let p2 = principal_eigen_autonomous(&outer_op, &outer_field.sample(&outer_grid)?.c0)?.value;
        (c.quantity("lambda_inner", p1), c.quantity("lambda_outer", p2), tol.eigen)
    } else {
        let e1 = sc.lyapunov(sc.field())?;
        let e2 = lyapunov_top(&outer_op, &outer_field, &vec![1.0; outer_op.len()], &sc.lyapunov_options())?;
        (c.lyapunov("lambda_inner", &e1), c.lyapunov("lambda_outer", &e2), tol.slope)
    };
    c.at_most("inner_below_outer", ("lambda_inner", l1), ("lambda_outer", l2), t);
    Ok(c.finish(TheoremId::L4_2, sc))
}

/// `λ_PL ≥ sup â`.
pub fn verify_sup_average(sc: &Scenario) -> Result<TheoremReport> {
    let mut c = Checks::new();
    let est = sc.lyapunov(sc.field())?;
    let l = c.lyapunov("lambda_pl", &est);
    let s = c.quantity("sup_time_average", sup_time_average(sc)?);
    c.at_least("above_sup_time_average", ("lambda_pl", l), ("sup_time_average", s), sc.tol().slope);
    Ok(c.finish(TheoremId::L4_3, sc))
}

/// Positivity and coefficient ordering of solutions. The comparison
/// coefficient is the scenario's perturbation, or `a + 0.5`.
pub fn verify_comparison(sc: &Scenario) -> Result<TheoremReport> {
    let mut c = Checks::new();
    let pert = sc.spec.perturbation.clone().unwrap_or(crate::config::Perturbation {
        shift: 0.5,
        modes: Vec::new(),
    });
    let a1 = sc.field();
    let a2 = pert.apply(a1)?;
    let u0 = sc.random_positive(2);
    let p = &sc.config.params;
    let rep = check_comparison(
        sc.op(),
        a1,
        &a2,
        &u0,
        p.start,
        p.horizon,
        sc.spec.checkpoints,
        p.dt,
    )?;
    c.quantity("checkpoints", rep.points.len() as f64);
    let neg = rep
        .points
        .iter()
        .map(|q| q.min_ratio_lower.min(q.min_ratio_upper))
        .fold(f64::INFINITY, f64::min);
    c.at_least("nonnegative", ("min u / sup u", neg), ("0", 0.0), POS_TOL);
    c.at_most("ordered", ("max (u1 - u2) / sup u2", rep.worst_gap()), ("0", 0.0), rep.cmp_tol);
    Ok(c.finish(TheoremId::P2_2, sc))
}

pub fn verify(id: TheoremId, sc: &Scenario) -> Result<TheoremReport> {
    match id {
        TheoremId::T1_1 => verify_t1_1(sc),
        TheoremId::T1_2 => verify_t1_2(sc),
        TheoremId::T1_3 => verify_t1_3(sc),
        TheoremId::T1_4 => verify_t1_4(sc),
        TheoremId::T1_5 => verify_t1_5(sc),
        TheoremId::L3_1 => verify_continuity(sc),
        TheoremId::L4_2 => verify_monotone(sc),
        TheoremId::L4_3 => verify_sup_average(sc),
        TheoremId::P2_2 => verify_comparison(sc),
    }
}

/// One row of the fixed-schema CSV table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub scenario_id: String,
    pub theorem: String,
    pub quantity: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub slack: Option<f64>,
    pub verdict: String,
}

pub const CSV_HEADER: [&str; 7] = ["scenario_id", "theorem", "quantity", "value", "bound", "slack", "verdict"];

/// One row per slack.
pub fn report_rows(report: &TheoremReport) -> Vec<Row> {
    let id = report.scenario_name.clone().unwrap_or_else(|| report.scenario[..12].to_string());
    report
        .slacks
        .iter()
        .map(|(name, s)| Row {
            scenario_id: id.clone(),
            theorem: format!("{}:{name}", report.theorem_id),
            quantity: s.lhs.clone(),
            value: s.lhs_value,
            bound: Some(s.rhs_value),
            slack: Some(s.value),
            verdict: if s.holds { "pass" } else { "fail" }.into(),
        })
        .collect()
}

pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let num = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        w.write_record([
            r.scenario_id.clone(),
            r.theorem.clone(),
            r.quantity.clone(),
            format!("{:e}", r.value),
            num(r.bound),
            num(r.slack),
            r.verdict.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn sweep_quantity(op: &DiscreteOperator, a: &APField, sc: &Scenario, q: SweepQuantity) -> Result<f64> {
    match q {
        SweepQuantity::LambdaPl => Ok(lyapunov_top(op, a, &vec![1.0; op.len()], &sc.lyapunov_options())?.lambda_pl),
        SweepQuantity::Perron => {
            if !a.is_time_independent() {
                return Err(Error::Precondition("perron sweep needs a time-independent coefficient".into()));
            }
            Ok(principal_eigen_autonomous(op, &a.sample(op.grid())?.c0)?.value)
        }
        SweepQuantity::LambdaPePrime => {
            let l = lyapunov_top(op, a, &vec![1.0; op.len()], &sc.lyapunov_options())?.lambda_pl;
            Ok(estimate_lambda_pe_prime(op, a, sc.bracket(l), &sc.prime_options())?.lambda_pe_prime)
        }
    }
}

fn quantity_name(q: SweepQuantity) -> &'static str {
    match q {
        SweepQuantity::LambdaPl => "lambda_pl",
        SweepQuantity::Perron => "perron",
        SweepQuantity::LambdaPePrime => "lambda_pe_prime",
    }
}

/// Runs every scenario of the plan and checks the expected trend. Rows come
/// back in plan order; a failing scenario yields an `error` row and the
/// sweep continues.
pub fn sweep(sc: &Scenario, plan: &SweepPlan) -> Vec<Row> {
    let base = sc.field();
    let values: Vec<std::result::Result<f64, String>> = par::map_range(plan.values.len(), 1, |i| {
        let v = plan.values[i];
        let a = match plan.parameter {
            SweepParameter::Amplitude => base.scaled(v),
            SweepParameter::Shift => base.shifted(v),
        };
        a.and_then(|a| sweep_quantity(sc.op(), &a, sc, plan.quantity))
            .map_err(|e| e.to_string())
    });
    let label = sc.config.name.clone().unwrap_or_else(|| sc.hash[..12].to_string());
    let param = match plan.parameter {
        SweepParameter::Amplitude => "amplitude",
        SweepParameter::Shift => "shift",
    };
    let theorem = match plan.expect {
        SweepExpect::None => "sweep",
        SweepExpect::Nondecreasing => "sweep:nondecreasing",
        SweepExpect::Constant => "sweep:constant",
    };
    let mut prev: Option<f64> = None;
    let first = values.iter().find_map(|v| v.as_ref().ok().copied());
    let mut rows = Vec::with_capacity(values.len());
    for (i, v) in values.into_iter().enumerate() {
        let scenario_id = format!("{label}/{param}={}", plan.values[i]);
        let (value, bound, slack, verdict) = match v {
            Err(msg) => (f64::NAN, None, None, format!("error: {msg}")),
            Ok(x) => {
                let (bound, ok) = match plan.expect {
                    SweepExpect::None => (None, true),
                    SweepExpect::Nondecreasing => match prev {
                        Some(p) => (Some(p), x - p >= -plan.tolerance),
                        None => (None, true),
                    },
                    SweepExpect::Constant => {
                        let r = plan.reference.or(first).unwrap_or(x);
                        (Some(r), (x - r).abs() <= plan.tolerance)
                    }
                };
                prev = Some(x);
                (x, bound, bound.map(|b| x - b), if ok { "pass" } else { "fail" }.to_string())
            }
        };
        rows.push(Row {
            scenario_id,
            theorem: theorem.to_string(),
            quantity: quantity_name(plan.quantity).into(),
            value,
            bound,
            slack,
            verdict,
        });
    }
    rows
}
