//! Generalized principal eigenvalues through explicit test functions.
//!
//! `λ′_PE` is bracketed by bisection on the existence of a uniformly positive
//! supersolution. `λ_PE` is bounded from below by periodic eigenfunctions of
//! periodic approximants `a_q`, which are subsolutions for `a` at
//! `λ_q − ‖a − a_q‖`.

use std::path::Path;

use serde::Serialize;

use super::perron::{monodromy_from, principal_eigen_autonomous};
use crate::coefficients::APField;
use crate::discretize::DiscreteOperator;
use crate::error::{Error, Result};
use crate::evolve::{
    build_supersolution, sup_abs, write_snapshots_csv, Evolution, State, WindowSpec, CERT_TOL_REL, DEFAULT_DT,
};

pub const BISECT_TOL: f64 = 1e-2;
/// Lower horizon of the supersolution integral during bisection.
pub const PRIME_HORIZON: f64 = 1000.0;
/// Default approximant denominators for quasi-periodic coefficients.
pub const DEFAULT_DENOMINATORS: [u32; 3] = [5, 29, 99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Subsolution,
    Supersolution,
}

/// A test function with its residual `−φ_t + Kφ + aφ − λφ` on a window.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityCertificate {
    pub lambda: f64,
    pub kind: CertificateKind,
    pub window: (f64, f64),
    pub times: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub residual_min: f64,
    pub residual_max: f64,
    /// Extremes of `residual / φ` over the sampled points.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub inf_phi: f64,
    pub sup_phi: f64,
    pub tolerance: f64,
}

impl FeasibilityCertificate {
    pub fn valid(&self) -> bool {
        match self.kind {
            CertificateKind::Subsolution => {
                self.sup_phi > 0.0 && self.inf_phi >= 0.0 && self.residual_min >= -self.tolerance
            }
            CertificateKind::Supersolution => self.inf_phi > 0.0 && self.residual_max <= self.tolerance,
        }
    }

    /// Width of the `λ` interval on which the same `φ` is both a sub- and a
    /// supersolution up to its pointwise ratio: `ratio_max − ratio_min`.
    pub fn collapse_gap(&self) -> f64 {
        self.ratio_max - self.ratio_min
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_snapshots_csv(path, &self.times, &self.phi)
    }
}

#[derive(Debug, Clone)]
pub struct PrimeOptions {
    pub lower_horizon: f64,
    pub window: Option<WindowSpec>,
    pub bisect_tol: f64,
}

impl Default for PrimeOptions {
    fn default() -> Self {
        PrimeOptions {
            lower_horizon: PRIME_HORIZON,
            window: None,
            bisect_tol: BISECT_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimeEstimate {
    pub lambda_pe_prime: f64,
    pub bracket: (f64, f64),
    /// `(λ, feasible)` for every probe, in evaluation order.
    pub probes: Vec<(f64, bool)>,
    pub certificate: FeasibilityCertificate,
}

fn supersolution_trial(
    op: &DiscreteOperator,
    a: &APField,
    lambda: f64,
    opts: &PrimeOptions,
    window: WindowSpec,
) -> Result<Option<FeasibilityCertificate>> {
    match build_supersolution(op, a, lambda, opts.lower_horizon, window) {
        Ok(s) => {
            let feasible = s.feasible();
            let tolerance = s.cert_tol();
            Ok(feasible.then(|| FeasibilityCertificate {
                lambda,
                kind: CertificateKind::Supersolution,
                window: s.window,
                ratio_min: s.residual_min / s.sup_phi,
                ratio_max: s.residual_max / s.inf_phi,
                times: s.times,
                phi: s.phi,
                residual_min: s.residual_min,
                residual_max: s.residual_max,
                inf_phi: s.inf_phi,
                sup_phi: s.sup_phi,
                tolerance,
            }))
        }
        Err(Error::Divergent { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Bisection for `inf{λ : a uniformly positive supersolution exists}`.
pub fn estimate_lambda_pe_prime(
    op: &DiscreteOperator,
    a: &APField,
    bracket: (f64, f64),
    opts: &PrimeOptions,
) -> Result<PrimeEstimate> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || !(opts.bisect_tol > 0.0) {
        return Err(Error::Precondition(format!("invalid bracket ({lo}, {hi})")));
    }
    let window = opts.window.unwrap_or_else(|| WindowSpec::for_field(a));
    let mut probes = Vec::new();
    let mut cert = match supersolution_trial(op, a, hi, opts, window)? {
        Some(c) => c,
        None => return Err(Error::InfeasibleBracket { hi }),
    };
    probes.push((hi, true));
    while hi - lo > opts.bisect_tol {
        let mid = 0.5 * (lo + hi);
        match supersolution_trial(op, a, mid, opts, window)? {
            Some(c) => {
                probes.push((mid, true));
                hi = mid;
                cert = c;
            }
            None => {
                probes.push((mid, false));
                lo = mid;
            }
        }
    }
    Ok(PrimeEstimate {
        lambda_pe_prime: hi,
        bracket,
        probes,
        certificate: cert,
    })
}

/// A certified lower bound `λ_q − distance ∈ Λ_PE(a)`.
#[derive(Debug, Clone, Serialize)]
pub struct ApproximantBound {
    /// Denominator of the approximant; `None` when `a` is used as is.
    pub q: Option<u32>,
    pub period: Option<f64>,
    pub distance: f64,
    pub lambda_q: f64,
    pub bound: f64,
    /// Relative mismatch `‖φ(s₀+T) − φ(s₀)‖∞ / ‖φ‖∞` of the periodic extension.
    pub periodicity_defect: f64,
    pub certificate: FeasibilityCertificate,
}

impl ApproximantBound {
    pub fn certified(&self) -> bool {
        self.certificate.valid()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PeEstimate {
    pub lambda_pe_lower: f64,
    pub best: usize,
    pub bounds: Vec<ApproximantBound>,
    pub method: &'static str,
}

#[derive(Debug, Clone)]
pub struct PeOptions {
    pub denominators: Vec<u32>,
    pub dt: Option<f64>,
    /// Snapshots kept per certificate.
    pub keep: usize,
}

impl Default for PeOptions {
    fn default() -> Self {
        PeOptions {
            denominators: DEFAULT_DENOMINATORS.to_vec(),
            dt: None,
            keep: 64,
        }
    }
}

/// Certificate for a time-independent coefficient: the Perron vector.
pub fn autonomous_certificate(op: &DiscreteOperator, a: &[f64], kind: CertificateKind) -> Result<(f64, FeasibilityCertificate)> {
    let pair = principal_eigen_autonomous(op, a)?;
    let phi = pair.vector;
    let mut r = op.apply(&phi)?;
    for i in 0..r.len() {
        r[i] += (a[i] - pair.value) * phi[i];
    }
    let ratios: Vec<f64> = r.iter().zip(&phi).map(|(r, p)| r / p).collect();
    let sup = sup_abs(&phi);
    Ok((
        pair.value,
        FeasibilityCertificate {
            lambda: pair.value,
            kind,
            window: (0.0, 0.0),
            times: vec![0.0],
            residual_min: r.iter().cloned().fold(f64::INFINITY, f64::min),
            residual_max: r.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ratio_min: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
            ratio_max: ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            inf_phi: phi.iter().cloned().fold(f64::INFINITY, f64::min),
            sup_phi: sup,
            tolerance: CERT_TOL_REL * sup,
            phi: vec![phi],
        },
    ))
}

/// Periodic principal eigenfunction of `periodic` over `[start, start+T]`,
/// checked as a subsolution for `target` at `λ_s − distance`.
pub fn periodic_certificate(
    op: &DiscreteOperator,
    periodic: &APField,
    target: &APField,
    period: f64,
    start: f64,
    distance: f64,
    opts: &PeOptions,
) -> Result<(f64, f64, FeasibilityCertificate)> {
    // the residual is checked to ~1e-6, so the high modes need short steps
    let fine = opts
        .dt
        .unwrap_or(DEFAULT_DT)
        .min(0.02 / periodic.max_frequency().max(target.max_frequency()).max(1.0));
    let mono = monodromy_from(op, periodic, Some(period), start, Some(fine))?;
    let lambda_q = mono.lambda_s;
    let mu = lambda_q - distance;
    let evo = Evolution::new(op, periodic)?.shifted(lambda_q);
    let dt = evo.default_dt().min(fine);
    let target_field = target.sample(op.grid())?;
    let n = op.len();
    let steps = (period / dt).ceil().max(8.0) as usize;
    let h = period / steps as f64;
    let keep_every = (steps / opts.keep.max(1)).max(1);
    let mut state = State {
        t: start,
        u: mono.perron.vector.clone(),
        log_offset: 0.0,
        meta: None,
    };
    let mut ws = evo.workspace();
    let mut ring: Vec<(f64, Vec<f64>)> = Vec::with_capacity(6);
    let mut times = vec![start];
    let mut phi = vec![state.u.clone()];
    let mut stats = ResidualStats::new();
    let mut kphi = vec![0.0; n];
    let mut av = vec![0.0; n];
    let mut feed = |ring: &mut Vec<(f64, Vec<f64>)>, t: f64, u: Vec<f64>, stats: &mut ResidualStats| {
        ring.push((t, u));
        if ring.len() > 5 {
            ring.remove(0);
        }
        if ring.len() == 5 {
            let tc = ring[2].0;
            let c = &ring[2].1;
            op.apply_into(c, &mut kphi);
            target_field.fill(tc, &mut av);
            for i in 0..n {
                let d = (ring[0].1[i] - 8.0 * ring[1].1[i] + 8.0 * ring[3].1[i] - ring[4].1[i]) / (12.0 * h);
                let r = -d + kphi[i] + (av[i] - mu) * c[i];
                stats.push(r, c[i]);
            }
        }
    };
    feed(&mut ring, start, state.u.clone(), &mut stats);
    // three steps past the period so stencil centers cover a full period
    // without splicing the end onto the start
    let mut end_state = None;
    for k in 0..steps + 3 {
        let t = start + (k + 1) as f64 * h;
        evo.advance(&mut state, t, h, &mut ws, |_| {})?;
        if k + 1 == steps {
            end_state = Some(state.u.clone());
        }
        if k < steps && (k + 1) % keep_every == 0 {
            times.push(t);
            phi.push(state.u.clone());
        }
        feed(&mut ring, t, state.u.clone(), &mut stats);
    }
    let end_state = end_state.unwrap_or_default();
    let v0 = &mono.perron.vector;
    let sup = sup_abs(&end_state).max(sup_abs(v0));
    let defect = end_state.iter().zip(v0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / sup;
    let sup_phi = stats.sup.max(sup);
    Ok((
        lambda_q,
        defect,
        FeasibilityCertificate {
            lambda: mu,
            kind: CertificateKind::Subsolution,
            window: (start, start + period),
            times,
            phi,
            residual_min: stats.rmin,
            residual_max: stats.rmax,
            ratio_min: stats.qmin,
            ratio_max: stats.qmax,
            inf_phi: stats.inf,
            sup_phi,
            tolerance: CERT_TOL_REL * sup_phi,
        },
    ))
}

struct ResidualStats {
    rmin: f64,
    rmax: f64,
    qmin: f64,
    qmax: f64,
    inf: f64,
    sup: f64,
}

impl ResidualStats {
    fn new() -> Self {
        ResidualStats {
            rmin: f64::INFINITY,
            rmax: f64::NEG_INFINITY,
            qmin: f64::INFINITY,
            qmax: f64::NEG_INFINITY,
            inf: f64::INFINITY,
            sup: 0.0,
        }
    }

    fn push(&mut self, r: f64, phi: f64) {
        self.rmin = self.rmin.min(r);
        self.rmax = self.rmax.max(r);
        self.qmin = self.qmin.min(r / phi);
        self.qmax = self.qmax.max(r / phi);
        self.inf = self.inf.min(phi);
        self.sup = self.sup.max(phi.abs());
    }
}

/// Certified lower bound for `λ_PE(a)`.
pub fn estimate_lambda_pe(op: &DiscreteOperator, a: &APField, opts: &PeOptions) -> Result<PeEstimate> {
    let mut bounds = Vec::new();
    let method;
    if a.is_time_independent() {
        method = "perron_vector";
        let c0 = a.sample(op.grid())?.c0;
        let (lambda, cert) = autonomous_certificate(op, &c0, CertificateKind::Subsolution)?;
        bounds.push(ApproximantBound {
            q: None,
            period: None,
            distance: 0.0,
            lambda_q: lambda,
            bound: lambda,
            periodicity_defect: 0.0,
            certificate: cert,
        });
    } else if let Some(period) = a.period() {
        method = "periodic_eigenfunction";
        let (lambda_q, defect, cert) = periodic_certificate(op, a, a, period, 0.0, 0.0, opts)?;
        bounds.push(ApproximantBound {
            q: None,
            period: Some(period),
            distance: 0.0,
            lambda_q,
            bound: lambda_q,
            periodicity_defect: defect,
            certificate: cert,
        });
    } else {
        method = "periodic_approximants";
        for &q in &opts.denominators {
            let ap = match a.periodic_approximant(q, op.grid()) {
                Ok(ap) => ap,
                Err(Error::Precondition(_)) => continue,
                Err(e) => return Err(e),
            };
            let period = ap.period.expect("approximant of a time-dependent field is periodic");
            let (lambda_q, defect, cert) =
                periodic_certificate(op, &ap.field, a, period, -period / 2.0, ap.distance, opts)?;
            bounds.push(ApproximantBound {
                q: Some(q),
                period: Some(period),
                distance: ap.distance,
                lambda_q,
                bound: lambda_q - ap.distance,
                periodicity_defect: defect,
                certificate: cert,
            });
        }
    }
    let best = bounds
        .iter()
        .enumerate()
        .filter(|(_, b)| b.certified())
        .max_by(|x, y| x.1.bound.total_cmp(&y.1.bound))
        .map(|(i, _)| i)
        .ok_or(Error::NoCertificate)?;
    Ok(PeEstimate {
        lambda_pe_lower: bounds[best].bound,
        best,
        bounds,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Grid;
    use crate::kernels::Kernel;

    fn torus(n: usize) -> DiscreteOperator {
        let k = Kernel::gaussian(1.0, 1, 1.0, 4.0).unwrap();
        DiscreteOperator::assemble(&k, &Grid::ring(16.0, n).unwrap()).unwrap()
    }

    #[test]
    fn prime_for_constant() {
        let op = torus(32);
        let c = 0.4;
        let est = estimate_lambda_pe_prime(&op, &APField::constant(c), (c, c + 3.0), &PrimeOptions::default()).unwrap();
        assert!((est.lambda_pe_prime - (1.0 + c)).abs() <= BISECT_TOL);
        assert!(est.certificate.valid());
        assert!(matches!(
            estimate_lambda_pe_prime(&op, &APField::constant(c), (0.0, 1.0), &PrimeOptions::default()),
            Err(Error::InfeasibleBracket { .. })
        ));
    }

    #[test]
    fn pe_for_constant_and_periodic() {
        let op = torus(32);
        let est = estimate_lambda_pe(&op, &APField::constant(0.25), &PeOptions::default()).unwrap();
        assert!((est.lambda_pe_lower - 1.25).abs() < 1e-6);
        let p = APField::homogeneous(0.0, &[(1.0, 2.0 * std::f64::consts::PI, 0.0)]).unwrap();
        let est = estimate_lambda_pe(&op, &p, &PeOptions::default()).unwrap();
        assert_eq!(est.bounds[0].distance, 0.0);
        assert!((est.lambda_pe_lower - 1.0).abs() < 1e-6);
        assert!(est.bounds[0].certificate.collapse_gap() < 1e-4);
    }
}
