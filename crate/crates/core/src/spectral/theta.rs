//! The θ-function dichotomy for positive space–time samples.
//!
//! With `θ(x,y) = mean_t w(t,y)/w(t,x)`, either `w` does not depend on `x`
//! or some `x*` has `θ(x*,y) ≥ 1` for all `y` with strict inequality for
//! some `y`. Jensen's inequality makes the minimizer of `mean_t ln w(t,x)`
//! such a point.

use serde::Serialize;

use crate::error::{Error, Result};

pub const THETA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ThetaVerdict {
    IndependentOfX,
    Dominant { x_star: usize, theta_row: Vec<f64> },
}

/// `θ(x, y)` for samples `w[t][x]`.
pub fn theta(w: &[Vec<f64>], x: usize, y: usize) -> f64 {
    w.iter().map(|row| row[y] / row[x]).sum::<f64>() / w.len() as f64
}

pub fn theta_dichotomy_check(w: &[Vec<f64>], tol: f64) -> Result<ThetaVerdict> {
    let m = w.first().map_or(0, |r| r.len());
    if w.is_empty() || m == 0 {
        return Err(Error::Precondition("empty sample field".into()));
    }
    if w.iter().any(|r| r.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            got: w.iter().map(|r| r.len()).find(|&l| l != m).unwrap_or(m),
        });
    }
    if w.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Precondition("samples must be positive and finite".into()));
    }
    let spread = w
        .iter()
        .map(|r| {
            let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
            (hi - lo) / hi
        })
        .fold(0.0, f64::max);
    if spread <= tol {
        return Ok(ThetaVerdict::IndependentOfX);
    }
    let log_mean = |x: usize| w.iter().map(|r| r[x].ln()).sum::<f64>();
    let x_star = (0..m)
        .min_by(|&i, &j| log_mean(i).total_cmp(&log_mean(j)))
        .expect("nonempty");
    let theta_row = (0..m).map(|y| theta(w, x_star, y)).collect();
    Ok(ThetaVerdict::Dominant { x_star, theta_row })
}
