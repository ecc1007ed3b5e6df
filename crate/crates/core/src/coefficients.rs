//! Almost periodic coefficients as finite trigonometric sums
//! `a(t, x) = c₀(x) + Σ_j c_j(x) cos(ω_j t + θ_j)`.
//!
//! Such sums are dense in the almost periodic class, and they make the time
//! average exact (`â = c₀`) and the periodic approximants explicit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::discretize::{Domain, Grid};
use crate::error::{Error, Result};
use crate::expr::Expr;

/// Step used by [`APField::numeric_average`].
pub const AVERAGE_STEP: f64 = 1e-2;

/// A spatial profile: closed form or values on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Expr(Expr),
    Nodal { grid: Box<Grid>, values: Vec<f64> },
}

impl Profile {
    pub fn constant(v: f64) -> Self {
        Profile::Expr(Expr::constant(v))
    }

    pub fn parse(src: &str) -> Result<Self> {
        Ok(Profile::Expr(Expr::parse(src)?))
    }

    pub fn nodal(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCoefficient("nodal values must be finite".into()));
        }
        Ok(Profile::Nodal {
            grid: Box::new(grid.clone()),
            values,
        })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Profile::Expr(e) => {
                if e.arity() > x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: e.arity(),
                        got: x.len(),
                    });
                }
                Ok(e.eval(x))
            }
            Profile::Nodal { grid, values } => grid
                .locate(x)
                .map(|i| values[i])
                .ok_or_else(|| Error::InvalidCoefficient(format!("point {x:?} is not a node of the profile grid"))),
        }
    }

    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            Profile::Nodal { grid: own, values } if own.as_ref() == grid => Ok(values.clone()),
            _ => grid.nodes().map(|x| self.eval(x)).collect(),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Profile::Expr(e) if e.is_constant() => Some(e.eval(&[])),
            Profile::Nodal { values, .. } if values.windows(2).all(|w| w[0] == w[1]) => values.first().copied(),
            _ => None,
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64, src: impl Fn(&str) -> String) -> Result<Self> {
        Ok(match self {
            Profile::Expr(e) => {
                if let Some(c) = self.constant_value() {
                    Profile::constant(f(c))
                } else {
                    Profile::Expr(Expr::parse(&src(e.source()))?)
                }
            }
            Profile::Nodal { grid, values } => Profile::Nodal {
                grid: grid.clone(),
                values: values.iter().map(|&v| f(v)).collect(),
            },
        })
    }

    pub fn shifted(&self, c: f64) -> Result<Self> {
        self.map(|v| v + c, |s| format!("({s}) + ({c:?})"))
    }

    pub fn scaled(&self, e: f64) -> Result<Self> {
        self.map(|v| v * e, |s| format!("({e:?}) * ({s})"))
    }
}

/// One oscillatory term `amp(x) cos(omega t + theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub amp: Profile,
    pub omega: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceProfileKind {
    Constant,
    SmoothBounded,
    TrigPeriodic(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct APField {
    base: Profile,
    modes: Vec<Mode>,
    space_kind: SpaceProfileKind,
}

impl APField {
    pub fn new(base: Profile, modes: Vec<Mode>, space_kind: SpaceProfileKind) -> Result<Self> {
        for (i, m) in modes.iter().enumerate() {
            if !(m.omega > 0.0 && m.omega.is_finite()) {
                return Err(Error::InvalidCoefficient(format!("mode {i}: omega must be positive")));
            }
            if !m.theta.is_finite() {
                return Err(Error::InvalidCoefficient(format!("mode {i}: theta must be finite")));
            }
            if modes[..i].iter().any(|o| o.omega == m.omega) {
                return Err(Error::InvalidCoefficient(format!("mode {i}: duplicate frequency {}", m.omega)));
            }
        }
        let field = APField {
            base,
            modes,
            space_kind,
        };
        field.check_space_kind()?;
        Ok(field)
    }

    /// Time-independent field `a(x)`.
    pub fn stationary(base: Profile, space_kind: SpaceProfileKind) -> Result<Self> {
        Self::new(base, Vec::new(), space_kind)
    }

    /// Space-homogeneous `c₀ + Σ amp_j cos(ω_j t + θ_j)`.
    pub fn homogeneous(c0: f64, modes: &[(f64, f64, f64)]) -> Result<Self> {
        let modes = modes
            .iter()
            .map(|&(amp, omega, theta)| Mode {
                amp: Profile::constant(amp),
                omega,
                theta,
            })
            .collect();
        Self::new(Profile::constant(c0), modes, SpaceProfileKind::Constant)
    }

    pub fn constant(c: f64) -> Self {
        APField {
            base: Profile::constant(c),
            modes: Vec::new(),
            space_kind: SpaceProfileKind::Constant,
        }
    }

    fn profiles(&self) -> impl Iterator<Item = &Profile> {
        std::iter::once(&self.base).chain(self.modes.iter().map(|m| &m.amp))
    }

    fn check_space_kind(&self) -> Result<()> {
        match &self.space_kind {
            SpaceProfileKind::Constant => {
                if self.profiles().any(|p| p.constant_value().is_none()) {
                    return Err(Error::InvalidCoefficient(
                        "space profile declared constant but depends on x".into(),
                    ));
                }
            }
            SpaceProfileKind::SmoothBounded => {}
            SpaceProfileKind::TrigPeriodic(periods) => {
                if periods.iter().any(|p| !(*p > 0.0)) {
                    return Err(Error::InvalidCoefficient("spatial periods must be positive".into()));
                }
                for p in self.profiles() {
                    let Profile::Expr(e) = p else {
                        return Err(Error::InvalidCoefficient(
                            "trig_periodic profiles must be closed-form".into(),
                        ));
                    };
                    if e.arity() > periods.len() {
                        return Err(Error::InvalidCoefficient("fewer periods than spatial variables".into()));
                    }
                    // sampled check of x ↦ x + P_i e_i invariance
                    let dim = periods.len();
                    for s in 0..16 {
                        let x: Vec<f64> = (0..dim)
                            .map(|i| periods[i] * ((s * 7 + i * 3) % 16) as f64 / 16.0 + 0.1 * s as f64)
                            .collect();
                        let v = e.eval(&x);
                        for axis in 0..dim {
                            let mut y = x.clone();
                            y[axis] += periods[axis];
                            let w = e.eval(&y);
                            if (v - w).abs() > 1e-9 * (1.0 + v.abs()) {
                                return Err(Error::InvalidCoefficient(format!(
                                    "'{e}' is not {}-periodic along axis {axis}",
                                    periods[axis]
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn base(&self) -> &Profile {
        &self.base
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn space_kind(&self) -> &SpaceProfileKind {
        &self.space_kind
    }

    pub fn is_time_independent(&self) -> bool {
        self.modes.is_empty()
    }

    /// Largest angular frequency, 0 for time-independent fields.
    pub fn max_frequency(&self) -> f64 {
        self.modes.iter().map(|m| m.omega).fold(0.0, f64::max)
    }

    pub fn is_space_homogeneous(&self) -> bool {
        self.profiles().all(|p| p.constant_value().is_some())
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        let mut v = self.base.eval(x)?;
        for m in &self.modes {
            v += m.amp.eval(x)? * (m.omega * t + m.theta).cos();
        }
        Ok(v)
    }

    /// Exact time average `â(x) = c₀(x)`.
    pub fn time_average(&self, x: &[f64]) -> Result<f64> {
        self.base.eval(x)
    }

    /// Trapezoid average of `a(·, x)` over `[0, horizon]`; differs from
    /// [`APField::time_average`] by `O(1/horizon)`.
    pub fn numeric_average(&self, x: &[f64], horizon: f64) -> Result<f64> {
        if !(horizon > 0.0) {
            return Err(Error::Precondition("averaging horizon must be positive".into()));
        }
        let path = self.at_point(x)?;
        let steps = (horizon / AVERAGE_STEP).ceil().max(1.0) as usize;
        let h = horizon / steps as f64;
        let mut sum = 0.5 * (path.eval(0.0) + path.eval(horizon));
        for k in 1..steps {
            sum += path.eval(k as f64 * h);
        }
        Ok(sum * h / horizon)
    }

    /// Space–time average `ā`: quadrature mean of `â` over a box, or over the
    /// torus cell when the profile is periodic with a commensurate period.
    pub fn space_time_average(&self, grid: &Grid) -> Result<f64> {
        if let Domain::Torus { period } = grid.domain() {
            match &self.space_kind {
                SpaceProfileKind::Constant => {}
                SpaceProfileKind::SmoothBounded => {
                    return Err(Error::InvalidCoefficient(
                        "space-time average on a torus needs a periodic or constant profile".into(),
                    ))
                }
                SpaceProfileKind::TrigPeriodic(p) => {
                    for (l, q) in period.iter().zip(p) {
                        let ratio = l / q;
                        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
                            return Err(Error::InvalidCoefficient(format!(
                                "torus period {l} is not a multiple of the profile period {q}"
                            )));
                        }
                    }
                }
            }
        }
        let vals = self.base.sample(grid)?;
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// The stationary field `â(x)`.
    pub fn time_averaged(&self) -> APField {
        APField {
            base: self.base.clone(),
            modes: Vec::new(),
            space_kind: self.space_kind.clone(),
        }
    }

    pub fn shifted(&self, c: f64) -> Result<APField> {
        Ok(APField {
            base: self.base.shifted(c)?,
            ..self.clone()
        })
    }

    pub fn scaled(&self, e: f64) -> Result<APField> {
        Ok(APField {
            base: self.base.scaled(e)?,
            modes: self
                .modes
                .iter()
                .map(|m| {
                    Ok(Mode {
                        amp: m.amp.scaled(e)?,
                        ..m.clone()
                    })
                })
                .collect::<Result<_>>()?,
            space_kind: self.space_kind.clone(),
        })
    }

    /// Adds the space-homogeneous term `amp cos(omega t + theta)`, merging
    /// with an existing mode of the same frequency and phase.
    pub fn with_mode(&self, amp: f64, omega: f64, theta: f64) -> Result<APField> {
        let mut modes = self.modes.clone();
        if let Some(m) = modes.iter_mut().find(|m| m.omega == omega && m.theta == theta) {
            m.amp = m.amp.shifted(amp)?;
        } else {
            modes.push(Mode {
                amp: Profile::constant(amp),
                omega,
                theta,
            });
        }
        APField::new(self.base.clone(), modes, self.space_kind.clone())
    }

    /// The scalar path `t ↦ a(t, x)`.
    pub fn at_point(&self, x: &[f64]) -> Result<ScalarPath> {
        Ok(ScalarPath {
            mean: self.base.eval(x)?,
            modes: self
                .modes
                .iter()
                .map(|m| Ok((m.amp.eval(x)?, m.omega, m.theta)))
                .collect::<Result<_>>()?,
        })
    }

    pub fn sample(&self, grid: &Grid) -> Result<SampledField> {
        Ok(SampledField {
            c0: self.base.sample(grid)?,
            modes: self
                .modes
                .iter()
                .map(|m| Ok((m.amp.sample(grid)?, m.omega, m.theta)))
                .collect::<Result<_>>()?,
        })
    }

    /// True if `a(t + period, x) = a(t, x)`.
    pub fn has_period(&self, period: f64) -> bool {
        period > 0.0
            && self.modes.iter().all(|m| {
                let k = m.omega * period / (2.0 * PI);
                (k - k.round()).abs() < 1e-9 * k.max(1.0) && k.round() >= 1.0
            })
    }

    /// Minimal period in time, when the frequencies are commensurate.
    /// `None` for time-independent fields (every period works) and for
    /// quasi-periodic ones.
    pub fn period(&self) -> Option<f64> {
        let first = self.modes.first()?.omega;
        let mut dens = Vec::with_capacity(self.modes.len());
        let mut nums = Vec::with_capacity(self.modes.len());
        for m in &self.modes {
            let (p, q) = rationalize(m.omega / first, 1e-12, 10_000)?;
            nums.push(p);
            dens.push(q);
        }
        let l = dens.iter().fold(1i64, |acc, &q| lcm(acc, q));
        let ks: Vec<i64> = nums.iter().zip(&dens).map(|(p, q)| p * (l / q)).collect();
        let g = ks.iter().fold(0i64, |acc, &k| gcd(acc, k));
        // ω_j = k_j · first / l
        Some(2.0 * PI * l as f64 / (g as f64 * first))
    }

    /// Replaces each frequency by the nearest multiple of `1/q`, so the result
    /// has period `2πq / gcd(p_j)`. Fields whose frequencies already lie on
    /// that lattice come back unchanged.
    ///
    /// The returned distance is the sup-norm of `a − a_q` over the grid and
    /// the centered period window `|t| ≤ period/2`, using
    /// `|cos(ωt+θ) − cos(ω̃t+θ)| ≤ |ω − ω̃| |t|`.
    pub fn periodic_approximant(&self, q: u32, grid: &Grid) -> Result<Approximant> {
        if q == 0 {
            return Err(Error::Precondition("denominator bound q must be at least 1".into()));
        }
        let qf = q as f64;
        let on_lattice = self.modes.iter().all(|m| {
            let p = m.omega * qf;
            (p - p.round()).abs() <= 1e-12 * p.max(1.0)
        });
        if on_lattice {
            return Ok(Approximant {
                period: self.period(),
                field: self.clone(),
                frequency_errors: vec![0.0; self.modes.len()],
                drift_rate: 0.0,
                distance: 0.0,
            });
        }
        let mut modes = Vec::with_capacity(self.modes.len());
        let mut errors = Vec::with_capacity(self.modes.len());
        let mut nums = Vec::with_capacity(self.modes.len());
        let mut drift = 0.0;
        let mut amp_total = 0.0;
        for m in &self.modes {
            let p = (m.omega * qf).round().max(1.0);
            let approx = p / qf;
            let amp_sup = m.amp.sample(grid)?.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            errors.push((m.omega - approx).abs());
            drift += amp_sup * (m.omega - approx).abs();
            amp_total += amp_sup;
            nums.push(p as i64);
            modes.push(Mode {
                amp: m.amp.clone(),
                omega: approx,
                theta: m.theta,
            });
        }
        let field = APField::new(self.base.clone(), modes, self.space_kind.clone()).map_err(|_| {
            Error::Precondition(format!("q = {q} maps two frequencies onto the same rational"))
        })?;
        let g = nums.iter().fold(0i64, |acc, &k| gcd(acc, k));
        let period = 2.0 * PI * qf / g as f64;
        Ok(Approximant {
            field,
            period: Some(period),
            frequency_errors: errors,
            drift_rate: drift,
            distance: (drift * period / 2.0).min(2.0 * amp_total),
        })
    }

    /// Upper bound on `sup |self − other|` over the grid, exact when the two
    /// fields share every mode except for amplitudes.
    pub fn sup_distance_bound(&self, other: &APField, grid: &Grid) -> Result<f64> {
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        let b1 = self.base.sample(grid)?;
        let b2 = other.base.sample(grid)?;
        let mut bound = sup(&b1.iter().zip(&b2).map(|(a, b)| a - b).collect::<Vec<_>>());
        let mut used = vec![false; other.modes.len()];
        for m in &self.modes {
            let a = m.amp.sample(grid)?;
            match other
                .modes
                .iter()
                .position(|o| o.omega == m.omega && o.theta == m.theta)
            {
                Some(j) => {
                    used[j] = true;
                    let b = other.modes[j].amp.sample(grid)?;
                    bound += sup(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
                }
                None => bound += sup(&a),
            }
        }
        for (j, o) in other.modes.iter().enumerate() {
            if !used[j] {
                bound += sup(&o.amp.sample(grid)?);
            }
        }
        Ok(bound)
    }
}

/// A periodic approximant and its distance to the original field.
#[derive(Debug, Clone)]
pub struct Approximant {
    pub field: APField,
    /// `None` only for time-independent fields.
    pub period: Option<f64>,
    pub frequency_errors: Vec<f64>,
    /// `Σ_j ‖c_j‖ |ω_j − ω̃_j|`.
    pub drift_rate: f64,
    /// Sup-norm distance on the centered period window.
    pub distance: f64,
}

/// `t ↦ mean + Σ amp cos(ω t + θ)` at a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPath {
    pub mean: f64,
    pub modes: Vec<(f64, f64, f64)>,
}

impl ScalarPath {
    pub fn constant(c: f64) -> Self {
        ScalarPath {
            mean: c,
            modes: Vec::new(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.mean
            + self
                .modes
                .iter()
                .map(|&(a, w, th)| a * (w * t + th).cos())
                .sum::<f64>()
    }

    /// Antiderivative vanishing at `t = 0` up to a constant.
    pub fn integral(&self, t: f64) -> f64 {
        self.mean * t
            + self
                .modes
                .iter()
                .map(|&(a, w, th)| a / w * (w * t + th).sin())
                .sum::<f64>()
    }

    /// Bound on `|∫_s^t (a − mean)|` for all `s, t`.
    pub fn oscillation_bound(&self) -> f64 {
        2.0 * self.modes.iter().map(|&(a, w, _)| (a / w).abs()).sum::<f64>()
    }

    pub fn inf_bound(&self) -> f64 {
        self.mean - self.modes.iter().map(|m| m.0.abs()).sum::<f64>()
    }

    pub fn sup_bound(&self) -> f64 {
        self.mean + self.modes.iter().map(|m| m.0.abs()).sum::<f64>()
    }
}

/// A coefficient sampled at grid nodes, ready for time stepping.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub c0: Vec<f64>,
    pub modes: Vec<(Vec<f64>, f64, f64)>,
}

impl SampledField {
    pub fn from_values(values: Vec<f64>) -> Self {
        SampledField {
            c0: values,
            modes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.c0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c0.is_empty()
    }

    pub fn is_time_independent(&self) -> bool {
        self.modes.is_empty()
    }

    /// Writes `a(t, x_i)` into `out`.
    pub fn fill(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.c0);
        for (amp, w, th) in &self.modes {
            let c = (w * t + th).cos();
            for (o, a) in out.iter_mut().zip(amp) {
                *o += a * c;
            }
        }
    }

    pub fn values_at(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        self.fill(t, &mut v);
        v
    }

    /// `max_i (|c₀| + Σ |c_j|)`, a bound on `sup |a|`.
    pub fn sup_abs_bound(&self) -> f64 {
        (0..self.len())
            .map(|i| self.c0[i].abs() + self.modes.iter().map(|m| m.0[i].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max_i (c₀ − Σ |c_j|)` is not needed; the lower bound per node is.
    pub fn inf_bound(&self) -> f64 {
        (0..self.len())
            .map(|i| self.c0[i] - self.modes.iter().map(|m| m.0[i].abs()).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn shifted(&self, c: f64) -> Self {
        SampledField {
            c0: self.c0.iter().map(|v| v + c).collect(),
            modes: self.modes.clone(),
        }
    }
}

pub(crate) fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

/// Continued-fraction rationalization of `x` with relative tolerance `tol`.
fn rationalize(x: f64, tol: f64, max_den: i64) -> Option<(i64, i64)> {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            return None;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            return None;
        }
        if (h2 as f64 / k2 as f64 - x).abs() <= tol * x.abs().max(1.0) {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac == 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}
