//! Time stepping for `u' = Ku + a(t)u`, the evolution family `Φ(t,s;a)`,
//! and the explicit constructions built on it.
//!
//! The integrator is classical RK4. With `M = N − cI`, `N ≥ 0`, the RK4
//! update is a polynomial in `dt·N` with nonnegative coefficients as long as
//! `c·dt ≤ 1`; the step guard `dt ≤ 0.5 / (‖K‖∞ + sup|a|)` keeps us there, so
//! positivity and coefficient ordering hold exactly up to rounding.

use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::coefficients::{APField, SampledField, ScalarPath};
use crate::discretize::{DenseMatrix, DiscreteOperator};
use crate::error::{Error, Result};
use crate::par;

/// Relative positivity tolerance: `min u ≥ −POS_TOL·‖u‖∞`.
pub const POS_TOL: f64 = 1e-12;
/// Renormalization band for long runs.
pub const RENORM_LO: f64 = 1e-100;
pub const RENORM_HI: f64 = 1e100;
/// Safety factor in the RK4 step guard.
pub const DT_SAFETY: f64 = 0.5;
/// Default step cap, below the guard, for accuracy.
pub const DEFAULT_DT: f64 = 0.05;
/// Margin required above `sup â` for the bounded entire solution.
pub const ENTIRE_MARGIN: f64 = 0.05;
/// Target truncation factor `e^{−δH}` for integrals over the past.
pub const TRUNCATION_FACTOR: f64 = 1e-10;
/// Relative certificate tolerance applied to `‖φ‖∞`.
pub const CERT_TOL_REL: f64 = 1e-6;
/// Damping of the logistic fixed-point iteration.
pub const LOGISTIC_DAMPING: f64 = 0.5;
pub const LOGISTIC_TOL: f64 = 1e-10;
pub const LOGISTIC_MAX_ITER: usize = 200_000;

/// A solution snapshot. The represented vector is `u · e^{log_offset}`.
#[derive(Debug, Clone, Serialize)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub log_offset: f64,
    pub meta: Option<String>,
}

impl State {
    pub fn norm_inf(&self) -> f64 {
        sup_abs(&self.u)
    }

    pub fn log_norm(&self) -> f64 {
        self.norm_inf().ln() + self.log_offset
    }

    /// Unscaled values; may overflow for renormalized states.
    pub fn values(&self) -> Vec<f64> {
        let f = self.log_offset.exp();
        self.u.iter().map(|v| v * f).collect()
    }

    /// `min u / ‖u‖∞`; nonnegative data keeps this above `−POS_TOL`.
    pub fn min_ratio(&self) -> f64 {
        let n = self.norm_inf();
        if n == 0.0 {
            0.0
        } else {
            self.u.iter().cloned().fold(f64::INFINITY, f64::min) / n
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    pub min: f64,
    pub max: f64,
    pub log_norm: f64,
}

impl Checkpoint {
    fn of(s: &State) -> Self {
        let min = s.u.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = s.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let f = s.log_offset.exp();
        Checkpoint {
            t: s.t,
            min: min * f,
            max: max * f,
            log_norm: s.log_norm(),
        }
    }
}

/// `t,min,max,log_norm` rows with a header.
pub fn checkpoints_csv(rows: &[Checkpoint]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_checkpoints_csv(path: &Path, rows: &[Checkpoint]) -> Result<()> {
    crate::io::write_atomic(path, &checkpoints_csv(rows)?)
}

pub(crate) fn sup_abs(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Scratch buffers for one RK4 stepper.
#[derive(Debug, Clone)]
pub struct Workspace {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    a: [Vec<f64>; 3],
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            a: std::array::from_fn(|_| vec![0.0; n]),
        }
    }
}

/// The right-hand side `u ↦ Ku + (a(t) − shift)u + forcing` on a grid.
#[derive(Debug, Clone)]
pub struct Evolution<'a> {
    op: &'a DiscreteOperator,
    field: SampledField,
    shift: f64,
    forcing: f64,
}

impl<'a> Evolution<'a> {
    pub fn new(op: &'a DiscreteOperator, a: &APField) -> Result<Self> {
        Self::from_sampled(op, a.sample(op.grid())?)
    }

    pub fn from_sampled(op: &'a DiscreteOperator, field: SampledField) -> Result<Self> {
        if field.len() != op.len() {
            return Err(Error::LengthMismatch {
                expected: op.len(),
                got: field.len(),
            });
        }
        Ok(Evolution {
            op,
            field,
            shift: 0.0,
            forcing: 0.0,
        })
    }

    /// Replaces `a` by `a − lambda`.
    pub fn shifted(mut self, lambda: f64) -> Self {
        self.shift = lambda;
        self
    }

    /// Adds a constant source term.
    pub fn forced(mut self, f: f64) -> Self {
        self.forcing = f;
        self
    }

    pub fn op(&self) -> &DiscreteOperator {
        self.op
    }

    pub fn field(&self) -> &SampledField {
        &self.field
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `0.5 / (‖K‖∞ + sup|a − shift|)`.
    pub fn dt_max(&self) -> f64 {
        let sup = (0..self.field.len())
            .map(|i| {
                (self.field.c0[i] - self.shift).abs()
                    + self.field.modes.iter().map(|m| m.0[i].abs()).sum::<f64>()
            })
            .fold(0.0, f64::max);
        DT_SAFETY / (self.op.norm_inf() + sup)
    }

    pub fn default_dt(&self) -> f64 {
        self.dt_max().min(DEFAULT_DT)
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        let dt_max = self.dt_max();
        if !(dt > 0.0) || dt > dt_max * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, dt_max });
        }
        Ok(())
    }

    pub fn workspace(&self) -> Workspace {
        let mut ws = Workspace::new(self.op.len());
        if self.field.is_time_independent() {
            for a in ws.a.iter_mut() {
                a.copy_from_slice(&self.field.c0);
            }
        }
        ws
    }

    fn rhs(&self, a: &[f64], u: &[f64], out: &mut [f64]) {
        self.op.apply_into(u, out);
        for i in 0..u.len() {
            out[i] += (a[i] - self.shift) * u[i] + self.forcing;
        }
    }

    /// One RK4 step from `t` to `t + dt`, in place.
    pub fn step(&self, t: f64, dt: f64, u: &mut [f64], ws: &mut Workspace) {
        let Workspace { k, tmp, a } = ws;
        if !self.field.is_time_independent() {
            self.field.fill(t, &mut a[0]);
            self.field.fill(t + 0.5 * dt, &mut a[1]);
            self.field.fill(t + dt, &mut a[2]);
        }
        let [k1, k2, k3, k4] = k;
        self.rhs(&a[0], u, k1);
        for i in 0..u.len() {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        self.rhs(&a[1], tmp, k2);
        for i in 0..u.len() {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        self.rhs(&a[1], tmp, k3);
        for i in 0..u.len() {
            tmp[i] = u[i] + dt * k3[i];
        }
        self.rhs(&a[2], tmp, k4);
        for i in 0..u.len() {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
    }

    /// Integrates from `state.t` to `t` with steps of at most `dt`, calling
    /// `observe` after every step. Renormalizes into `[RENORM_LO, RENORM_HI]`
    /// when there is no forcing.
    pub fn advance(
        &self,
        state: &mut State,
        t: f64,
        dt: f64,
        ws: &mut Workspace,
        mut observe: impl FnMut(&State),
    ) -> Result<()> {
        if t < state.t {
            return Err(Error::Precondition(format!(
                "end time {t} precedes start time {}",
                state.t
            )));
        }
        if state.u.len() != self.op.len() {
            return Err(Error::LengthMismatch {
                expected: self.op.len(),
                got: state.u.len(),
            });
        }
        self.check_dt(dt)?;
        let span = t - state.t;
        if span == 0.0 {
            return Ok(());
        }
        let steps = (span / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let t0 = state.t;
        for k in 0..steps {
            self.step(t0 + k as f64 * h, h, &mut state.u, ws);
            state.t = if k + 1 == steps { t } else { t0 + (k + 1) as f64 * h };
            let n = sup_abs(&state.u);
            if !n.is_finite() {
                return Err(Error::NonFinite { t: state.t });
            }
            if self.forcing == 0.0 && n > 0.0 && !(RENORM_LO..=RENORM_HI).contains(&n) {
                for v in state.u.iter_mut() {
                    *v /= n;
                }
                state.log_offset += n.ln();
            } else if self.forcing != 0.0 && n > RENORM_HI {
                return Err(Error::Divergent { lambda: self.shift });
            }
            observe(state);
        }
        Ok(())
    }

    /// `Φ(t, s) u0`.
    pub fn propagate(&self, s: f64, t: f64, u0: &[f64], dt: f64) -> Result<State> {
        let mut state = State {
            t: s,
            u: u0.to_vec(),
            log_offset: 0.0,
            meta: None,
        };
        let mut ws = self.workspace();
        self.advance(&mut state, t, dt, &mut ws, |_| {})?;
        Ok(state)
    }

    /// Propagates and records `count` equally spaced checkpoints after `s`.
    pub fn trajectory(&self, s: f64, t: f64, u0: &[f64], dt: f64, count: usize) -> Result<(State, Vec<Checkpoint>)> {
        let mut state = State {
            t: s,
            u: u0.to_vec(),
            log_offset: 0.0,
            meta: None,
        };
        let mut ws = self.workspace();
        let count = count.max(1);
        let mut rows = Vec::with_capacity(count + 1);
        rows.push(Checkpoint::of(&state));
        for c in 1..=count {
            let tc = if c == count { t } else { s + (t - s) * c as f64 / count as f64 };
            self.advance(&mut state, tc, dt, &mut ws, |_| {})?;
            rows.push(Checkpoint::of(&state));
        }
        Ok((state, rows))
    }

    /// The propagator matrix `Φ(t, s)`, assembled column by column. Returns
    /// the matrix scaled by `e^{−log_scale}`.
    pub fn matrix(&self, s: f64, t: f64, dt: f64) -> Result<(DenseMatrix, f64)> {
        let n = self.op.len();
        let cols = par::map_range(n, 2, |j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            self.propagate(s, t, &e, dt)
        });
        let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
        let scale = cols.iter().map(|c| c.log_offset).fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| {
                let f = (c.log_offset - scale).exp();
                c.u.iter().map(|v| v * f).collect()
            })
            .collect();
        Ok((DenseMatrix::from_columns(&scaled), scale))
    }
}

/// Free-function form of [`Evolution::propagate`].
pub fn propagate(op: &DiscreteOperator, a: &APField, s: f64, t: f64, u0: &[f64], dt: f64) -> Result<State> {
    Evolution::new(op, a)?.propagate(s, t, u0, dt)
}

/// `‖Φ(t,s;a)‖` in the sup-operator norm, which for a positive operator is
/// `‖Φ(t,s)𝟙‖∞`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PropagatorNorm {
    /// `None` when the norm left the representable range.
    pub norm: Option<f64>,
    pub log_norm: f64,
    pub renormalized: bool,
}

pub fn propagator_norm(op: &DiscreteOperator, a: &APField, s: f64, t: f64, dt: Option<f64>) -> Result<PropagatorNorm> {
    let evo = Evolution::new(op, a)?;
    let dt = dt.unwrap_or_else(|| evo.default_dt());
    let state = evo.propagate(s, t, &vec![1.0; op.len()], dt)?;
    let renormalized = state.log_offset != 0.0;
    let log_norm = state.log_norm();
    let norm = log_norm.exp();
    Ok(PropagatorNorm {
        norm: (!renormalized && norm.is_finite() && norm <= 1e300).then_some(norm),
        log_norm,
        renormalized,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComparisonPoint {
    pub t: f64,
    /// `max_i (u1 − u2)_i / ‖u2‖∞`.
    pub order_gap: f64,
    pub min_ratio_lower: f64,
    pub min_ratio_upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub points: Vec<ComparisonPoint>,
    pub cmp_tol: f64,
    pub ordered: bool,
    pub nonnegative: bool,
}

impl ComparisonReport {
    pub fn holds(&self) -> bool {
        self.ordered && self.nonnegative
    }

    pub fn worst_gap(&self) -> f64 {
        self.points.iter().map(|p| p.order_gap).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn worst_negativity(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.min_ratio_lower.min(p.min_ratio_upper))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Propagates `u0 ≥ 0` under `a1 ≤ a2` and compares at `checkpoints`
/// equally spaced times.
#[allow(clippy::too_many_arguments)]
pub fn check_comparison(
    op: &DiscreteOperator,
    a1: &APField,
    a2: &APField,
    u0: &[f64],
    s: f64,
    horizon: f64,
    checkpoints: usize,
    dt: Option<f64>,
) -> Result<ComparisonReport> {
    if u0.iter().any(|v| *v < 0.0) {
        return Err(Error::Precondition("initial data must be nonnegative".into()));
    }
    let e1 = Evolution::new(op, a1)?;
    let e2 = Evolution::new(op, a2)?;
    let checkpoints = checkpoints.max(1);
    let samples = 4 * checkpoints;
    for k in 0..=samples {
        let t = s + horizon * k as f64 / samples as f64;
        let v1 = e1.field().values_at(t);
        let v2 = e2.field().values_at(t);
        if let Some(i) = (0..v1.len()).find(|&i| v1[i] > v2[i] + 1e-14 * (1.0 + v2[i].abs())) {
            return Err(Error::Precondition(format!(
                "a1 > a2 at t = {t}, node {i}: {} > {}",
                v1[i], v2[i]
            )));
        }
    }
    let dt = dt.unwrap_or_else(|| e1.default_dt().min(e2.default_dt()));
    let mut s1 = State { t: s, u: u0.to_vec(), log_offset: 0.0, meta: None };
    let mut s2 = s1.clone();
    let (mut w1, mut w2) = (e1.workspace(), e2.workspace());
    let mut points = Vec::with_capacity(checkpoints);
    for c in 1..=checkpoints {
        let tc = if c == checkpoints { s + horizon } else { s + horizon * c as f64 / checkpoints as f64 };
        e1.advance(&mut s1, tc, dt, &mut w1, |_| {})?;
        e2.advance(&mut s2, tc, dt, &mut w2, |_| {})?;
        let scale = s1.log_offset.max(s2.log_offset);
        let f1 = (s1.log_offset - scale).exp();
        let f2 = (s2.log_offset - scale).exp();
        let n2 = sup_abs(&s2.u) * f2;
        let gap = (0..s1.u.len())
            .map(|i| s1.u[i] * f1 - s2.u[i] * f2)
            .fold(f64::NEG_INFINITY, f64::max);
        points.push(ComparisonPoint {
            t: tc,
            order_gap: if n2 > 0.0 { gap / n2 } else { gap },
            min_ratio_lower: s1.min_ratio(),
            min_ratio_upper: s2.min_ratio(),
        });
    }
    let cmp_tol = 1e-12;
    Ok(ComparisonReport {
        ordered: points.iter().all(|p| p.order_gap <= cmp_tol),
        nonnegative: points
            .iter()
            .all(|p| p.min_ratio_lower >= -POS_TOL && p.min_ratio_upper >= -POS_TOL),
        points,
        cmp_tol,
    })
}

/// `φ*(t) = ∫_{−∞}^t exp(∫_s^t a − λ(t−s)) g(s) ds` at a fixed point,
/// truncated to `[t − lower_horizon, t]`.
#[derive(Debug, Clone)]
pub struct EntireSolution {
    a: ScalarPath,
    g: ScalarPath,
    pub lambda: f64,
    pub lower_horizon: f64,
    /// Bound on the discarded tail of the integral.
    pub truncation_bound: f64,
    intervals: usize,
}

pub fn bounded_entire_solution(
    a: &ScalarPath,
    lambda: f64,
    g: &ScalarPath,
    lower_horizon: Option<f64>,
) -> Result<EntireSolution> {
    let delta = lambda - a.mean;
    if !(delta > ENTIRE_MARGIN) {
        return Err(Error::Precondition(format!(
            "lambda = {lambda} must exceed the time average {} by more than {ENTIRE_MARGIN}",
            a.mean
        )));
    }
    let horizon = lower_horizon.unwrap_or(-TRUNCATION_FACTOR.ln() / delta);
    if !(horizon > 0.0) {
        return Err(Error::Precondition("lower horizon must be positive".into()));
    }
    let g_sup = g.mean.abs() + g.modes.iter().map(|m| m.0.abs()).sum::<f64>();
    let truncation_bound = g_sup * (a.oscillation_bound() - delta * horizon).exp() / delta;
    let w_max = a
        .modes
        .iter()
        .chain(&g.modes)
        .map(|m| m.1)
        .fold(0.0, f64::max);
    let h = (0.005f64).min(0.05 / w_max.max(1e-300)).min(0.05 / delta);
    let mut intervals = (horizon / h).ceil() as usize;
    intervals += intervals % 2;
    Ok(EntireSolution {
        a: a.clone(),
        g: g.clone(),
        lambda,
        lower_horizon: horizon,
        truncation_bound,
        intervals: intervals.max(2),
    })
}

impl EntireSolution {
    /// Composite Simpson on `[t − H, t]`.
    pub fn eval(&self, t: f64) -> f64 {
        let m = self.intervals;
        let h = self.lower_horizon / m as f64;
        let at = self.a.integral(t);
        let f = |s: f64| (at - self.a.integral(s) - self.lambda * (t - s)).exp() * self.g.eval(s);
        let mut sum = f(t - self.lower_horizon) + f(t);
        for k in 1..m {
            let s = t - self.lower_horizon + k as f64 * h;
            sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(s);
        }
        sum * h / 3.0
    }
}

/// A supersolution candidate `φ(t) = ∫_{t−H}^t Φ_λ(t,s)𝟙 ds` sampled on a
/// reporting window, with its residual `−φ_t + Kφ + (a − λ)φ`.
///
/// `φ` is integrated from the fixed lower limit `t₀ − H`, which solves the
/// forced equation exactly (residual `−1`). The moving lower limit adds the
/// integrand there, `Φ_λ(t, t₀−H)𝟙`, to the residual; that term is carried
/// alongside, so the reported residual is `−1 + Φ_λ(t, t₀−H)𝟙` up to
/// differencing error and turns positive once the integrand grows.
#[derive(Debug, Clone, Serialize)]
pub struct Supersolution {
    pub lambda: f64,
    pub lower_horizon: f64,
    pub window: (f64, f64),
    pub times: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub residual_min: f64,
    pub residual_max: f64,
    /// Largest `ln‖Φ_λ(t, t₀−H)𝟙‖∞` over the window.
    pub log_integrand_max: f64,
    pub inf_phi: f64,
    pub sup_phi: f64,
}

impl Supersolution {
    /// Measured against the unit source term rather than `‖φ‖∞`, which
    /// grows without bound below the threshold.
    pub fn cert_tol(&self) -> f64 {
        CERT_TOL_REL
    }

    pub fn feasible(&self) -> bool {
        self.inf_phi > 0.0 && self.residual_max <= self.cert_tol()
    }
}

/// Options for [`build_supersolution`].
#[derive(Debug, Clone, Copy)]
pub struct WindowSpec {
    pub start: f64,
    pub length: f64,
    pub dt: Option<f64>,
    /// Snapshots kept in the result; residuals use every step.
    pub keep: usize,
}

impl WindowSpec {
    /// A window covering two periods of the slowest mode (or a short span
    /// for time-independent fields).
    pub fn for_field(a: &APField) -> Self {
        let slowest = a.modes().iter().map(|m| m.omega).fold(f64::INFINITY, f64::min);
        let length = if slowest.is_finite() {
            (4.0 * std::f64::consts::PI / slowest).min(200.0)
        } else {
            2.0
        };
        WindowSpec { start: 0.0, length, dt: None, keep: 64 }
    }
}

/// Fourth-order centered first derivative from five samples.
fn central_derivative(w: &[&[f64]; 5], h: f64, i: usize) -> f64 {
    (w[0][i] - 8.0 * w[1][i] + 8.0 * w[3][i] - w[4][i]) / (12.0 * h)
}

pub fn build_supersolution(
    op: &DiscreteOperator,
    a: &APField,
    lambda: f64,
    lower_horizon: f64,
    window: WindowSpec,
) -> Result<Supersolution> {
    if !(lower_horizon > 0.0) || !(window.length > 0.0) {
        return Err(Error::Precondition("horizon and window must be positive".into()));
    }
    let unforced = Evolution::new(op, a)?.shifted(lambda);
    let evo = unforced.clone().forced(1.0);
    let dt = window.dt.unwrap_or_else(|| evo.dt_max().min(0.1));
    let n = op.len();
    let mut ws = evo.workspace();
    let t0 = window.start - lower_horizon;
    let mut state = State { t: t0, u: vec![0.0; n], log_offset: 0.0, meta: None };
    let mut tail = State { t: t0, u: vec![1.0; n], log_offset: 0.0, meta: None };
    evo.advance(&mut state, window.start, dt, &mut ws, |_| {})?;
    unforced.advance(&mut tail, window.start, dt, &mut ws, |_| {})?;

    // finer steps inside the window keep the differencing error small
    let h_max = dt.min(0.01 / a.max_frequency().max(1.0));
    let steps = (window.length / h_max).ceil().max(8.0) as usize;
    let h = window.length / steps as f64;
    let keep_every = (steps / window.keep.max(1)).max(1);
    let mut ring: Vec<Vec<f64>> = vec![state.u.clone()];
    let mut ring_t = vec![state.t];
    let mut tails = vec![tail.clone()];
    let mut times = vec![state.t];
    let mut phi = vec![state.u.clone()];
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut inf, mut sup) = (f64::INFINITY, 0.0f64);
    let mut log_integrand_max = tail.log_norm();
    let mut kphi = vec![0.0; n];
    let mut av = vec![0.0; n];
    for v in &state.u {
        inf = inf.min(*v);
        sup = sup.max(v.abs());
    }
    for k in 0..steps {
        let t = window.start + (k + 1) as f64 * h;
        evo.advance(&mut state, t, h, &mut ws, |_| {})?;
        unforced.advance(&mut tail, t, h, &mut ws, |_| {})?;
        log_integrand_max = log_integrand_max.max(tail.log_norm());
        for v in &state.u {
            inf = inf.min(*v);
            sup = sup.max(v.abs());
        }
        if (k + 1) % keep_every == 0 {
            times.push(t);
            phi.push(state.u.clone());
        }
        ring.push(state.u.clone());
        ring_t.push(t);
        tails.push(tail.clone());
        if ring.len() > 5 {
            ring.remove(0);
            ring_t.remove(0);
            tails.remove(0);
        }
        if ring.len() == 5 {
            let w: [&[f64]; 5] = std::array::from_fn(|j| ring[j].as_slice());
            let tc = ring_t[2];
            let scale = tails[2].log_offset.exp();
            op.apply_into(w[2], &mut kphi);
            evo.field().fill(tc, &mut av);
            for i in 0..n {
                let r = -central_derivative(&w, h, i) + kphi[i] + (av[i] - lambda) * w[2][i] + tails[2].u[i] * scale;
                rmin = rmin.min(r);
                rmax = rmax.max(r);
            }
        }
    }
    Ok(Supersolution {
        lambda,
        lower_horizon,
        window: (window.start, window.start + window.length),
        times,
        phi,
        residual_min: rmin,
        residual_max: rmax,
        log_integrand_max,
        inf_phi: inf,
        sup_phi: sup,
    })
}

/// Outcome of [`logistic_steady_state`].
#[derive(Debug, Clone, Serialize)]
pub enum Logistic {
    Steady {
        phi: Vec<f64>,
        residual: f64,
        iterations: usize,
    },
    Extinct {
        perron: f64,
    },
}

/// Positive stationary solution of `Kφ + φ(a − bφ) = 0`, when the Perron
/// value of `K + diag(a)` is positive.
///
/// Iterates the damped positive-root map
/// `φ ← (1−θ)φ + θ (a + √(a² + 4b·Kφ)) / 2b`, whose fixed points are exactly
/// the positive solutions.
pub fn logistic_steady_state(op: &DiscreteOperator, a: &[f64], b: &[f64]) -> Result<Logistic> {
    let n = op.len();
    for v in [a, b] {
        if v.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: v.len() });
        }
    }
    let b_inf = b.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(b_inf > 0.0) {
        return Err(Error::Precondition("inf b must be positive".into()));
    }
    let pair = crate::spectral::principal_eigen_autonomous(op, a)?;
    if pair.value <= 0.0 {
        return Ok(Logistic::Extinct { perron: pair.value });
    }
    let scale = pair.value / b_inf;
    let mut phi: Vec<f64> = pair.vector.iter().map(|v| v * scale).collect();
    let mut kphi = vec![0.0; n];
    let residual = |phi: &[f64], kphi: &[f64]| {
        (0..n)
            .map(|i| (kphi[i] + phi[i] * (a[i] - b[i] * phi[i])).abs())
            .fold(0.0, f64::max)
    };
    for it in 0..LOGISTIC_MAX_ITER {
        op.apply_into(&phi, &mut kphi);
        let r = residual(&phi, &kphi);
        let tol = LOGISTIC_TOL * sup_abs(&phi).max(1.0).powi(2);
        if r <= tol {
            return Ok(Logistic::Steady { phi, residual: r, iterations: it });
        }
        for i in 0..n {
            let g = (a[i] + (a[i] * a[i] + 4.0 * b[i] * kphi[i]).sqrt()) / (2.0 * b[i]);
            phi[i] = (1.0 - LOGISTIC_DAMPING) * phi[i] + LOGISTIC_DAMPING * g;
        }
    }
    op.apply_into(&phi, &mut kphi);
    Err(Error::NoConvergence {
        what: "logistic fixed-point iteration",
        iterations: LOGISTIC_MAX_ITER,
        residual: residual(&phi, &kphi),
    })
}

/// Writes `v` to `path` with a header, one `t,...` row per entry.
pub fn write_snapshots_csv(path: &Path, times: &[f64], rows: &[Vec<f64>]) -> Result<()> {
    let mut buf = Vec::new();
    let n = rows.first().map_or(0, |r| r.len());
    write!(buf, "t")?;
    for i in 0..n {
        write!(buf, ",u{i}")?;
    }
    writeln!(buf)?;
    for (t, r) in times.iter().zip(rows) {
        write!(buf, "{t:e}")?;
        for v in r {
            write!(buf, ",{v:e}")?;
        }
        writeln!(buf)?;
    }
    crate::io::write_atomic(path, &buf)
}
