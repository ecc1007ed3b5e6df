//! Top Lyapunov exponent by log-renormalized propagation, and the
//! exponential-dichotomy probe.

use serde::Serialize;

use crate::coefficients::APField;
use crate::discretize::DiscreteOperator;
use crate::error::{Error, Result};
use crate::evolve::{Evolution, State};

/// Maximum allowed spread between window slopes before a run is flagged.
pub const WINDOW_TOL: f64 = 1e-2;
/// Horizon below which an estimate is flagged as short.
pub const MIN_HORIZON: f64 = 100.0;
/// Slope margin of the dichotomy probe.
pub const PROBE_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
pub struct LyapunovOptions {
    pub start: f64,
    pub horizon: f64,
    pub dt: Option<f64>,
    pub sample_every: f64,
    pub windows: usize,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions {
            start: 0.0,
            horizon: 200.0,
            dt: None,
            sample_every: 0.5,
            windows: 4,
        }
    }
}

impl LyapunovOptions {
    pub fn with_horizon(horizon: f64) -> Self {
        LyapunovOptions { horizon, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    /// Least-squares slope of `ln‖u‖∞` over `[T/2, T]`.
    pub lambda_pl: f64,
    /// Smallest window slope (liminf-style).
    pub lambda_pl_lower: f64,
    /// Largest window slope (limsup-style).
    pub lambda_pl_upper: f64,
    pub windows: Vec<Window>,
    pub horizon: f64,
    pub dt: f64,
    /// `(t, ln‖u(t)‖∞)` samples.
    pub samples: Vec<(f64, f64)>,
    pub final_state: State,
}

impl LyapunovEstimate {
    pub fn spread(&self) -> f64 {
        self.lambda_pl_upper - self.lambda_pl_lower
    }

    /// False when the windows disagree by more than `WINDOW_TOL` or the
    /// horizon is below `MIN_HORIZON`.
    pub fn converged(&self) -> bool {
        self.spread() <= WINDOW_TOL && self.horizon >= MIN_HORIZON
    }

    /// Dichotomy verdict for the shift `λ`: decay needs every window slope
    /// below `λ − PROBE_MARGIN`, growth every one above `λ + PROBE_MARGIN`.
    pub fn probe(&self, lambda: f64) -> DichotomyProbe {
        let (lo, hi) = (self.lambda_pl_lower - lambda, self.lambda_pl_upper - lambda);
        let verdict = if hi <= -PROBE_MARGIN {
            Dichotomy::Decay
        } else if lo >= PROBE_MARGIN {
            Dichotomy::Growth
        } else {
            Dichotomy::Inconclusive
        };
        DichotomyProbe {
            lambda,
            verdict,
            slope: self.lambda_pl - lambda,
        }
    }
}

/// Least-squares slope of `y` against `t`.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in points {
        sxy += (t - tm) * (y - ym);
        sxx += (t - tm) * (t - tm);
    }
    sxy / sxx
}

/// Samples `ln‖Φ(t, s)u0‖∞ − shift·(t−s)` every `sample_every`.
fn log_norm_samples(evo: &Evolution, u0: &[f64], opts: &LyapunovOptions) -> Result<(Vec<(f64, f64)>, State, f64)> {
    if !(opts.horizon > 0.0 && opts.sample_every > 0.0) {
        return Err(Error::Precondition("horizon and sampling interval must be positive".into()));
    }
    let dt = opts.dt.unwrap_or_else(|| evo.default_dt());
    let count = (opts.horizon / opts.sample_every).round().max(8.0) as usize;
    let mut state = State {
        t: opts.start,
        u: u0.to_vec(),
        log_offset: 0.0,
        meta: None,
    };
    let mut ws = evo.workspace();
    let mut samples = Vec::with_capacity(count + 1);
    samples.push((0.0, state.log_norm()));
    for c in 1..=count {
        let t = opts.start + opts.horizon * c as f64 / count as f64;
        evo.advance(&mut state, t, dt, &mut ws, |_| {})?;
        samples.push((t - opts.start, state.log_norm()));
    }
    Ok((samples, state, dt))
}

pub fn lyapunov_top(op: &DiscreteOperator, a: &APField, u0: &[f64], opts: &LyapunovOptions) -> Result<LyapunovEstimate> {
    if u0.len() != op.len() {
        return Err(Error::LengthMismatch {
            expected: op.len(),
            got: u0.len(),
        });
    }
    if !u0.iter().all(|v| *v > 0.0) {
        return Err(Error::Precondition("initial data must be strictly positive".into()));
    }
    let evo = Evolution::new(op, a)?;
    let (samples, final_state, dt) = log_norm_samples(&evo, u0, opts)?;
    let half = opts.horizon / 2.0;
    let tail: Vec<(f64, f64)> = samples.iter().copied().filter(|p| p.0 >= half - 1e-9).collect();
    let lambda_pl = ls_slope(&tail);
    let k = opts.windows.max(1);
    let width = half / k as f64;
    let windows: Vec<Window> = (0..k)
        .map(|j| {
            let (lo, hi) = (half + j as f64 * width, half + (j + 1) as f64 * width);
            let pts: Vec<(f64, f64)> = tail
                .iter()
                .copied()
                .filter(|p| p.0 >= lo - 1e-9 && p.0 <= hi + 1e-9)
                .collect();
            Window {
                start: opts.start + lo,
                end: opts.start + hi,
                slope: ls_slope(&pts),
            }
        })
        .collect();
    let lower = windows.iter().map(|w| w.slope).fold(f64::INFINITY, f64::min);
    let upper = windows.iter().map(|w| w.slope).fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovEstimate {
        lambda_pl,
        lambda_pl_lower: lower,
        lambda_pl_upper: upper,
        windows,
        horizon: opts.horizon,
        dt,
        samples,
        final_state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dichotomy {
    Decay,
    Growth,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DichotomyProbe {
    pub lambda: f64,
    pub verdict: Dichotomy,
    /// Terminal slope of `ln‖Φ_λ(t,0)𝟙‖∞` over `[T/2, T]`.
    pub slope: f64,
}

/// Classifies the shifted family `e^{−λt}Φ(t,0)` by its growth over the
/// windows of `[T/2, T]`.
pub fn dichotomy_probe(op: &DiscreteOperator, a: &APField, lambda: f64, horizon: f64, dt: Option<f64>) -> Result<DichotomyProbe> {
    let est = lyapunov_top(
        op,
        a,
        &vec![1.0; op.len()],
        &LyapunovOptions {
            horizon,
            dt,
            ..LyapunovOptions::default()
        },
    )?;
    Ok(est.probe(lambda))
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
    fn slope_of_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert!((ls_slope(&pts) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_coefficient_rate_one() {
        let op = torus(64);
        let est = lyapunov_top(&op, &APField::constant(0.0), &[1.0; 64], &LyapunovOptions::default()).unwrap();
        assert!((est.lambda_pl - 1.0).abs() < 1e-3);
        assert!(est.converged());
        assert_eq!(est.windows.len(), 4);
    }

    #[test]
    fn rejects_nonpositive_start() {
        let op = torus(16);
        let mut u0 = vec![1.0; 16];
        u0[3] = 0.0;
        assert!(lyapunov_top(&op, &APField::constant(0.0), &u0, &LyapunovOptions::default()).is_err());
    }

    #[test]
    fn short_horizon_is_flagged() {
        let op = torus(16);
        let est = lyapunov_top(&op, &APField::constant(0.0), &[1.0; 16], &LyapunovOptions::with_horizon(10.0)).unwrap();
        assert!(!est.converged());
    }

    #[test]
    fn probe_verdicts() {
        let op = torus(32);
        let a = APField::constant(0.0);
        assert_eq!(dichotomy_probe(&op, &a, 1.1, 200.0, None).unwrap().verdict, Dichotomy::Decay);
        assert_eq!(dichotomy_probe(&op, &a, 0.9, 200.0, None).unwrap().verdict, Dichotomy::Growth);
        assert_eq!(dichotomy_probe(&op, &a, 1.0, 200.0, None).unwrap().verdict, Dichotomy::Inconclusive);
    }
}
