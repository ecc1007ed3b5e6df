//! Principal spectral quantities: top Lyapunov exponents, the dichotomy
//! probe, Perron and monodromy eigenvalues, and the generalized principal
//! eigenvalues with their certificates.

mod generalized;
mod lyapunov;
mod perron;
mod theta;

pub use generalized::{
    autonomous_certificate, estimate_lambda_pe, estimate_lambda_pe_prime, periodic_certificate, ApproximantBound,
    CertificateKind, FeasibilityCertificate, PeEstimate, PeOptions, PrimeEstimate, PrimeOptions, BISECT_TOL,
    DEFAULT_DENOMINATORS, PRIME_HORIZON,
};
pub use lyapunov::{
    dichotomy_probe, ls_slope, lyapunov_top, Dichotomy, DichotomyProbe, LyapunovEstimate, LyapunovOptions, Window,
    MIN_HORIZON, PROBE_MARGIN, WINDOW_TOL,
};
pub use perron::{
    monodromy_from, monodromy_spectrum, perron_dense, power_iteration, power_iteration_capped, principal_eigen_autonomous, resolve_period,
    Monodromy, PerronPair, CW_TOL,
};
pub use theta::{theta, theta_dichotomy_check, ThetaVerdict, THETA_TOL};

use serde::Serialize;

use crate::coefficients::APField;
use crate::discretize::DiscreteOperator;
use crate::error::Result;

/// One estimated quantity with the method that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub method: String,
    /// Convergence residual appropriate to the method (window spread,
    /// Collatz–Wielandt gap, bisection width, approximant distance).
    pub diagnostic: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub lambda_pl: f64,
    pub lambda_pl_lower: f64,
    pub windows: Vec<Window>,
    pub lambda_pe: Option<Estimate>,
    pub lambda_pe_prime: Option<Estimate>,
    pub lambda_s: Option<Estimate>,
    pub perron: Option<Estimate>,
    pub converged: bool,
}

/// Which estimators [`spectral_report`] runs beyond the Lyapunov exponent.
#[derive(Debug, Clone)]
pub struct ReportPlan {
    pub lyapunov: LyapunovOptions,
    pub lambda_pe: Option<PeOptions>,
    /// Bracket half-width around the Lyapunov estimate for `λ′_PE`.
    pub prime_half_width: Option<f64>,
    pub prime: PrimeOptions,
}

impl Default for ReportPlan {
    fn default() -> Self {
        ReportPlan {
            lyapunov: LyapunovOptions::default(),
            lambda_pe: Some(PeOptions::default()),
            prime_half_width: Some(0.25),
            prime: PrimeOptions::default(),
        }
    }
}

pub fn spectral_report(op: &DiscreteOperator, a: &APField, plan: &ReportPlan) -> Result<SpectralReport> {
    let ly = lyapunov_top(op, a, &vec![1.0; op.len()], &plan.lyapunov)?;
    let perron = if a.is_time_independent() {
        let c0 = a.sample(op.grid())?.c0;
        let p = principal_eigen_autonomous(op, &c0)?;
        Some(Estimate {
            value: p.value,
            method: "power_iteration".into(),
            diagnostic: p.gap(),
        })
    } else {
        None
    };
    let lambda_s = match a.period() {
        Some(period) => {
            let m = monodromy_spectrum(op, a, Some(period), None)?;
            Some(Estimate {
                value: m.lambda_s,
                method: "monodromy".into(),
                diagnostic: m.perron.gap() / m.perron.value,
            })
        }
        None => None,
    };
    let lambda_pe = match &plan.lambda_pe {
        Some(opts) => {
            let e = estimate_lambda_pe(op, a, opts)?;
            Some(Estimate {
                value: e.lambda_pe_lower,
                method: e.method.into(),
                diagnostic: e.bounds[e.best].distance,
            })
        }
        None => None,
    };
    let lambda_pe_prime = match plan.prime_half_width {
        Some(w) => {
            let e = estimate_lambda_pe_prime(op, a, (ly.lambda_pl - w, ly.lambda_pl + w), &plan.prime)?;
            Some(Estimate {
                value: e.lambda_pe_prime,
                method: "supersolution_bisection".into(),
                diagnostic: plan.prime.bisect_tol,
            })
        }
        None => None,
    };
    Ok(SpectralReport {
        converged: ly.converged(),
        lambda_pl: ly.lambda_pl,
        lambda_pl_lower: ly.lambda_pl_lower,
        windows: ly.windows,
        lambda_pe,
        lambda_pe_prime,
        lambda_s,
        perron,
    })
}
