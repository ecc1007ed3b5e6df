//! Perron pairs by power iteration with Collatz–Wielandt bounds, for the
//! autonomous operator `K + diag(a)` and for monodromy matrices.

use serde::Serialize;

use crate::coefficients::APField;
use crate::discretize::{DenseMatrix, DiscreteOperator};
use crate::error::{Error, Result};
use crate::evolve::{sup_abs, Evolution};

/// Relative Collatz–Wielandt gap at which power iteration stops.
pub const CW_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 2_000_000;

/// Perron value, positive eigenvector (`‖φ‖∞ = 1`) and the certified
/// two-sided bounds `min (Mφ)/φ ≤ value ≤ max (Mφ)/φ`.
#[derive(Debug, Clone, Serialize)]
pub struct PerronPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub cw_lower: f64,
    pub cw_upper: f64,
    pub iterations: usize,
}

impl PerronPair {
    pub fn gap(&self) -> f64 {
        self.cw_upper - self.cw_lower
    }
}

/// Power iteration for a nonnegative, primitive operator given by `apply`.
/// `shift` is added to the operator during iteration and removed from the
/// result.
pub fn power_iteration(
    n: usize,
    shift: f64,
    start: Option<&[f64]>,
    apply: impl FnMut(&[f64], &mut [f64]),
) -> Result<PerronPair> {
    power_iteration_capped(n, shift, start, MAX_ITER, apply)
}

/// [`power_iteration`] with an explicit iteration budget.
pub fn power_iteration_capped(
    n: usize,
    shift: f64,
    start: Option<&[f64]>,
    max_iter: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]),
) -> Result<PerronPair> {
    let mut v: Vec<f64> = match start {
        Some(s) if s.len() == n && s.iter().all(|x| *x > 0.0) => {
            let m = sup_abs(s);
            s.iter().map(|x| x / m).collect()
        }
        _ => vec![1.0; n],
    };
    let mut w = vec![0.0; n];
    let mut last_gap = f64::INFINITY;
    for it in 1..=max_iter {
        apply(&v, &mut w);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            w[i] += shift * v[i];
            let r = w[i] / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 && hi <= 0.0 {
            return Err(Error::NoConvergence {
                what: "power iteration",
                iterations: it,
                residual: f64::NAN,
            });
        }
        let norm = sup_abs(&w);
        for i in 0..n {
            v[i] = w[i] / norm;
        }
        last_gap = hi - lo;
        if last_gap <= CW_TOL * hi.abs().max(1.0) {
            return Ok(PerronPair {
                value: 0.5 * (lo + hi) - shift,
                vector: v,
                cw_lower: lo - shift,
                cw_upper: hi - shift,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: max_iter,
        residual: last_gap,
    })
}

/// Perron eigenpair of `K + diag(a)`.
pub fn principal_eigen_autonomous(op: &DiscreteOperator, a: &[f64]) -> Result<PerronPair> {
    if a.len() != op.len() {
        return Err(Error::LengthMismatch {
            expected: op.len(),
            got: a.len(),
        });
    }
    // K has a positive diagonal, so any shift making K + diag(a + s) ≥ 0
    // keeps the iteration matrix primitive.
    let a_min = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let shift = (-a_min).max(0.0);
    power_iteration(op.len(), shift, None, |u, out| {
        op.apply_into(u, out);
        for i in 0..u.len() {
            out[i] += a[i] * u[i];
        }
    })
}

/// Perron pair of a dense nonnegative matrix.
pub fn perron_dense(m: &DenseMatrix) -> Result<PerronPair> {
    power_iteration(m.size(), 0.0, None, |u, out| m.mul_vec_into(u, out))
}

/// `λ_s = ln ρ(Φ(s₀+T, s₀)) / T` for a `T`-periodic coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct Monodromy {
    pub lambda_s: f64,
    pub period: f64,
    pub start: f64,
    /// Coefficient shift `c` used to keep the matrix in range.
    pub shift: f64,
    /// Perron pair of `e^{−log_scale} Φ_{a−c}(s₀+T, s₀)`.
    pub perron: PerronPair,
    pub log_scale: f64,
    pub dt: f64,
}

/// Period for monodromy analysis: the field's own, the requested one if it
/// is a period, or 1 for time-independent fields.
pub fn resolve_period(a: &APField, period: Option<f64>) -> Result<f64> {
    match (period, a.is_time_independent()) {
        (Some(p), _) if a.has_period(p) || (a.is_time_independent() && p > 0.0) => Ok(p),
        (Some(p), _) => Err(Error::Precondition(format!("{p} is not a period of the coefficient"))),
        (None, true) => Ok(1.0),
        (None, false) => a
            .period()
            .ok_or_else(|| Error::Precondition("coefficient is not periodic in time".into())),
    }
}

pub fn monodromy_spectrum(
    op: &DiscreteOperator,
    a: &APField,
    period: Option<f64>,
    dt: Option<f64>,
) -> Result<Monodromy> {
    monodromy_from(op, a, period, 0.0, dt)
}

/// Monodromy over `[start, start + T]`.
pub fn monodromy_from(
    op: &DiscreteOperator,
    a: &APField,
    period: Option<f64>,
    start: f64,
    dt: Option<f64>,
) -> Result<Monodromy> {
    let period = resolve_period(a, period)?;
    let sampled = a.sample(op.grid())?;
    // Rayleigh-type estimate of the exponent keeps Φ_{a−c} near unit size.
    let n = op.len() as f64;
    let shift = sampled.c0.iter().sum::<f64>() / n + op.row_sums().iter().sum::<f64>() / n;
    let evo = Evolution::from_sampled(op, sampled)?.shifted(shift);
    let dt = dt.unwrap_or_else(|| evo.default_dt());
    // Long periods separate the spectrum enough that a few propagations of
    // a single vector converge; the dense matrix costs one per node.
    let (perron, log_scale) = match monodromy_matrix_free(&evo, start, period, dt, op.len() / 4) {
        Ok(found) => found,
        Err(Error::NoConvergence { .. }) => {
            let (m, log_scale) = evo.matrix(start, start + period, dt)?;
            (perron_dense(&m)?, log_scale)
        }
        Err(e) => return Err(e),
    };
    Ok(Monodromy {
        lambda_s: shift + (perron.value.ln() + log_scale) / period,
        period,
        start,
        shift,
        perron,
        log_scale,
        dt,
    })
}

fn monodromy_matrix_free(
    evo: &Evolution,
    start: f64,
    period: f64,
    dt: f64,
    max_iter: usize,
) -> Result<(PerronPair, f64)> {
    let mut log_scale = None;
    let mut failure = None;
    let pair = power_iteration_capped(evo.op().len(), 0.0, None, max_iter.max(1), |v, out| {
        match evo.propagate(start, start + period, v, dt) {
            Ok(st) => {
                let scale = *log_scale.get_or_insert(st.log_offset);
                let f = (st.log_offset - scale).exp();
                for (o, x) in out.iter_mut().zip(&st.u) {
                    *o = x * f;
                }
            }
            Err(e) => {
                failure = Some(e);
                out.fill(f64::NAN);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((pair?, log_scale.unwrap_or(0.0)))
}
