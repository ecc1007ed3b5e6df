//! JSON run configuration and the problem it describes.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::{APField, Mode, Profile, SpaceProfileKind};
use crate::discretize::{DiscreteOperator, Grid};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::kernels::Kernel;

pub const MAX_NODES: usize = 4096;
pub const MAX_HORIZON: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kernel: KernelSpec,
    pub grid: GridSpec,
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepPlan>,
    #[serde(default)]
    pub outputs: Outputs,
    /// Seeds randomized vectors only (alternative initial data, random
    /// profiles); never a physical parameter.
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn default_mu() -> f64 {
    1.0
}

fn default_m() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Gaussian {
        sigma: f64,
        #[serde(default = "one")]
        dim: usize,
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(rename = "M", default = "default_m")]
        m: f64,
    },
    Bump {
        radius: f64,
        #[serde(default = "one")]
        dim: usize,
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(rename = "M", default = "default_m")]
        m: f64,
    },
    /// Two-column CSV `(radius, value)`; relative paths resolve against the
    /// config file's directory.
    Tabulated {
        path: PathBuf,
        #[serde(default = "one")]
        dim: usize,
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(rename = "M", default = "default_m")]
        m: f64,
    },
}

/// A scalar for one-dimensional grids or one entry per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> PerAxis<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            PerAxis::One(v) => vec![v.clone()],
            PerAxis::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Torus {
        #[serde(rename = "L")]
        l: PerAxis<f64>,
        n: PerAxis<usize>,
    },
    Box {
        lo: PerAxis<f64>,
        hi: PerAxis<f64>,
        n: PerAxis<usize>,
    },
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        let n = match self {
            GridSpec::Torus { n, .. } | GridSpec::Box { n, .. } => n.to_vec(),
        };
        let total = n.iter().try_fold(1usize, |acc, k| acc.checked_mul(*k));
        if !matches!(total, Some(t) if t <= MAX_NODES) {
            return Err(Error::Config(format!("grid has more than {MAX_NODES} nodes")));
        }
        match self {
            GridSpec::Torus { l, .. } => Grid::new_torus(&l.to_vec(), &n),
            GridSpec::Box { lo, hi, .. } => Grid::new_box(&lo.to_vec(), &hi.to_vec(), &n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub amp: Expr,
    pub omega: f64,
    #[serde(default)]
    pub theta: f64,
}

/// Uniform random nodal values on `[lo, hi]`, drawn from the config seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomProfile {
    pub lo: f64,
    pub hi: f64,
}

fn zero_expr() -> Expr {
    Expr::constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    #[serde(default = "zero_expr")]
    pub c0: Expr,
    /// Added to `c0` on the grid nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_c0: Option<RandomProfile>,
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
    /// Inferred when absent: constant if nothing depends on `x`, periodic
    /// with the torus periods when every profile is, smooth-bounded
    /// otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_kind: Option<SpaceProfileKind>,
}

impl CoefficientSpec {
    pub fn constant(c: f64) -> Self {
        CoefficientSpec {
            c0: Expr::constant(c),
            random_c0: None,
            modes: Vec::new(),
            space_kind: None,
        }
    }

    pub fn build(&self, grid: &Grid, seed: u64) -> Result<APField> {
        let modes: Vec<Mode> = self
            .modes
            .iter()
            .map(|m| Mode {
                amp: Profile::Expr(m.amp.clone()),
                omega: m.omega,
                theta: m.theta,
            })
            .collect();
        let base = match self.random_c0 {
            Some(r) => {
                if !(r.lo <= r.hi) || !r.lo.is_finite() || !r.hi.is_finite() {
                    return Err(Error::Config("random_c0 needs finite lo <= hi".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values = grid
                    .nodes()
                    .map(|x| self.c0.eval(x) + rng.gen_range(r.lo..=r.hi))
                    .collect();
                Profile::nodal(grid, values)?
            }
            None => Profile::Expr(self.c0.clone()),
        };
        let constant = self.random_c0.is_none() && self.c0.is_constant() && self.modes.iter().all(|m| m.amp.is_constant());
        match &self.space_kind {
            Some(k) => APField::new(base, modes, k.clone()),
            None if constant => APField::new(base, modes, SpaceProfileKind::Constant),
            None => {
                if let (crate::discretize::Domain::Torus { period }, None) = (grid.domain(), self.random_c0) {
                    let periodic = SpaceProfileKind::TrigPeriodic(period.clone());
                    if let Ok(a) = APField::new(base.clone(), modes.clone(), periodic) {
                        return Ok(a);
                    }
                }
                APField::new(base, modes, SpaceProfileKind::SmoothBounded)
            }
        }
    }
}

fn default_horizon() -> f64 {
    200.0
}

fn default_checkpoint_every() -> f64 {
    1.0
}

fn default_sample_every() -> f64 {
    0.5
}

fn default_windows() -> usize {
    4
}

fn default_bisect_tol() -> f64 {
    crate::spectral::BISECT_TOL
}

fn default_lower_horizon() -> f64 {
    crate::spectral::PRIME_HORIZON
}

fn default_denominators() -> Vec<u32> {
    crate::spectral::DEFAULT_DENOMINATORS.to_vec()
}

/// Command parameters shared by the pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: f64,
    #[serde(default = "default_windows")]
    pub windows: usize,
    /// Bracket for the supersolution bisection; defaults to the Lyapunov
    /// estimate ± 0.25.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
    #[serde(default = "default_bisect_tol")]
    pub bisect_tol: f64,
    #[serde(default = "default_lower_horizon")]
    pub lower_horizon: f64,
    #[serde(default = "default_denominators")]
    pub denominators: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            dt: None,
            horizon: default_horizon(),
            start: 0.0,
            checkpoint_every: default_checkpoint_every(),
            sample_every: default_sample_every(),
            windows: default_windows(),
            bracket: None,
            bisect_tol: default_bisect_tol(),
            lower_horizon: default_lower_horizon(),
            denominators: default_denominators(),
            period: None,
        }
    }
}

impl Params {
    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite")))
            }
        };
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        positive("horizon", self.horizon)?;
        positive("checkpoint_every", self.checkpoint_every)?;
        positive("sample_every", self.sample_every)?;
        positive("bisect_tol", self.bisect_tol)?;
        positive("lower_horizon", self.lower_horizon)?;
        if !self.start.is_finite() {
            return Err(Error::Config("start must be finite".into()));
        }
        for (name, v) in [("horizon", self.horizon), ("lower_horizon", self.lower_horizon)] {
            if v > MAX_HORIZON {
                return Err(Error::Config(format!("{name} exceeds {MAX_HORIZON}")));
            }
        }
        if self.windows == 0 || self.windows > 64 {
            return Err(Error::Config("windows must be in 1..=64".into()));
        }
        if let Some([lo, hi]) = self.bracket {
            if !(lo < hi) {
                return Err(Error::Config("bracket must satisfy lo < hi".into()));
            }
        }
        if self.denominators.iter().any(|q| *q == 0 || *q > 1000) {
            return Err(Error::Config("denominators must be in 1..=1000".into()));
        }
        if let Some(p) = self.period {
            positive("period", p)?;
        }
        Ok(())
    }
}

/// Space-homogeneous perturbation `shift + Σ amp cos(omega t + theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    #[serde(default)]
    pub shift: f64,
    #[serde(default)]
    pub modes: Vec<[f64; 3]>,
}

impl Perturbation {
    pub fn apply(&self, a: &APField) -> Result<APField> {
        let mut out = a.shifted(self.shift)?;
        for [amp, omega, theta] in &self.modes {
            out = out.with_mode(*amp, *omega, *theta)?;
        }
        Ok(out)
    }

    /// `‖perturbation‖∞` bound.
    pub fn sup_norm(&self) -> f64 {
        self.shift.abs() + self.modes.iter().map(|m| m[0].abs()).sum::<f64>()
    }

    pub fn is_pure_shift(&self) -> bool {
        self.modes.iter().all(|m| m[0] == 0.0)
    }
}

fn default_checkpoints() -> usize {
    50
}

/// Inputs of the verification harness beyond the base scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Theorem run by `verify` when none is named on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<crate::verify::TheoremId>,
    /// Restricts multi-clause checks; all applicable clauses otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clauses: Option<Vec<u8>>,
    /// Overrides the inferred limit-periodicity of the coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_periodic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    /// Outer box for the domain-monotonicity check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<GridSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    /// Whether the continuity check also bisects for `λ′_PE`.
    #[serde(default = "default_true")]
    pub include_prime: bool,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            theorem: None,
            clauses: None,
            limit_periodic: None,
            perturbation: None,
            outer: None,
            tolerances: Tolerances::default(),
            checkpoints: default_checkpoints(),
            include_prime: true,
        }
    }
}

fn default_true() -> bool {
    true
}

/// Per-check tolerances. Defaults follow the estimator tolerances they
/// compose; see the README for the formula behind each check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Lyapunov slope accuracy.
    pub slope: f64,
    /// Allowed spread between window slopes.
    pub window: f64,
    /// Eigen-path accuracy (Perron, monodromy, Rayleigh bounds).
    pub eigen: f64,
    /// Allowed gap `λ_PL − λ_PE` for limit-periodic coefficients.
    pub gap: f64,
    /// Allowed collapse gap of eigenpair certificates.
    pub collapse: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            slope: 5e-3,
            window: crate::spectral::WINDOW_TOL,
            eigen: 1e-6,
            gap: 3e-2,
            collapse: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Scales the whole coefficient.
    Amplitude,
    /// Adds a constant to the coefficient.
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepQuantity {
    LambdaPl,
    Perron,
    LambdaPePrime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepExpect {
    None,
    Nondecreasing,
    Constant,
}

fn default_sweep_tol() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub quantity: SweepQuantity,
    #[serde(default = "default_expect")]
    pub expect: SweepExpect,
    /// Expected value for `constant`; the first row's value otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(default = "default_sweep_tol")]
    pub tolerance: f64,
}

fn default_expect() -> SweepExpect {
    SweepExpect::None
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Artifact directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also dump certificate snapshots and window slopes as CSV.
    #[serde(default)]
    pub diagnostics: bool,
}

/// Kernel, grid, operator and coefficient assembled from a config.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kernel: Kernel,
    pub grid: Grid,
    pub op: DiscreteOperator,
    pub field: APField,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let KernelSpec::Tabulated { path: p, .. } = &mut cfg.kernel {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite")))
            }
        };
        match &self.kernel {
            KernelSpec::Gaussian { sigma: s, dim, mu, m } | KernelSpec::Bump { radius: s, dim, mu, m } => {
                finite_pos("kernel width", *s)?;
                finite_pos("mu", *mu)?;
                finite_pos("M", *m)?;
                if !(1..=3).contains(dim) {
                    return Err(Error::Config("kernel dim must be 1, 2 or 3".into()));
                }
            }
            KernelSpec::Tabulated { dim, mu, m, .. } => {
                finite_pos("mu", *mu)?;
                finite_pos("M", *m)?;
                if !(1..=3).contains(dim) {
                    return Err(Error::Config("kernel dim must be 1, 2 or 3".into()));
                }
            }
        }
        for (i, m) in self.coefficient.modes.iter().enumerate() {
            finite_pos(&format!("modes[{i}].omega"), m.omega)?;
        }
        self.params.validate()?;
        if let Some(plan) = &self.sweep {
            if plan.values.iter().any(|v| !v.is_finite()) || plan.values.len() > 256 {
                return Err(Error::Config("sweep values must be finite, at most 256".into()));
            }
        }
        if let Some(v) = &self.verify {
            if v.checkpoints == 0 || v.checkpoints > 10_000 {
                return Err(Error::Config("checkpoints must be in 1..=10000".into()));
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel> {
        match &self.kernel {
            KernelSpec::Gaussian { sigma, dim, mu, m } => Kernel::gaussian(*sigma, *dim, *mu, *m),
            KernelSpec::Bump { radius, dim, mu, m } => Kernel::bump(*radius, *dim, *mu, *m),
            KernelSpec::Tabulated { path, dim, mu, m } => Kernel::tabulated_from_csv(path, *dim, *mu, *m),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let kernel = self.kernel()?;
        let grid = self.grid.build()?;
        let op = DiscreteOperator::assemble(&kernel, &grid)?;
        let field = self.coefficient.build(&grid, self.seed)?;
        Ok(Problem { kernel, grid, op, field })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "kernel": {"kind":"gaussian","sigma":1.0,"dim":1,"mu":1.0,"M":4.0},
        "grid": {"domain":"torus","L":16.0,"n":256},
        "coefficient": {"c0":"2.0","modes":[{"amp":"cos(x)","omega":1.4142135623730951,"theta":0.0}]},
        "seed": 7
    }"#;

    #[test]
    fn parses_documented_blocks() {
        let cfg = RunConfig::from_json(SAMPLE).unwrap();
        assert_eq!(
            cfg.kernel,
            KernelSpec::Gaussian { sigma: 1.0, dim: 1, mu: 1.0, m: 4.0 }
        );
        assert_eq!(cfg.grid.build().unwrap().len(), 256);
        assert_eq!(cfg.params, Params::default());
        let b = RunConfig::from_json(r#"{"kernel":{"kind":"gaussian","sigma":0.1},"grid":{"domain":"box","lo":0.0,"hi":1.0,"n":256},"coefficient":{"c0":0}}"#).unwrap();
        assert!(!b.grid.build().unwrap().is_torus());
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = RunConfig::from_json(SAMPLE).unwrap();
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn rejects_out_of_range() {
        let big = SAMPLE.replace("\"n\":256", "\"n\":5000");
        assert!(matches!(RunConfig::from_json(&big).unwrap().grid.build(), Err(Error::Config(_))));
        let long = SAMPLE.replace("\"seed\": 7", "\"seed\": 7, \"params\": {\"horizon\": 2e5}");
        assert!(RunConfig::from_json(&long).is_err());
        assert!(RunConfig::from_json("{").is_err());
        let unknown = SAMPLE.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1");
        assert!(RunConfig::from_json(&unknown).is_err());
        let bad_kernel = SAMPLE.replace("\"sigma\":1.0", "\"sigma\":1.0,\"extra\":2");
        assert!(RunConfig::from_json(&bad_kernel).is_err());
    }

    #[test]
    fn random_profile_follows_seed() {
        let cfg = RunConfig::from_json(
            r#"{"kernel":{"kind":"gaussian","sigma":1.0},"grid":{"domain":"torus","L":16.0,"n":64},
                "coefficient":{"random_c0":{"lo":-1.0,"hi":1.0}},"seed":3}"#,
        )
        .unwrap();
        let grid = cfg.grid.build().unwrap();
        let a = cfg.coefficient.build(&grid, 3).unwrap().sample(&grid).unwrap().c0;
        let b = cfg.coefficient.build(&grid, 3).unwrap().sample(&grid).unwrap().c0;
        let c = cfg.coefficient.build(&grid, 4).unwrap().sample(&grid).unwrap().c0;
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn space_kind_inference() {
        let cfg = RunConfig::from_json(SAMPLE).unwrap();
        let grid = cfg.grid.build().unwrap();
        // cos x is not 16-periodic
        let a = cfg.coefficient.build(&grid, 0).unwrap();
        assert_eq!(a.space_kind(), &SpaceProfileKind::SmoothBounded);
        let g = Grid::ring(6.0 * std::f64::consts::PI, 64).unwrap();
        let a = cfg.coefficient.build(&g, 0).unwrap();
        assert!(matches!(a.space_kind(), SpaceProfileKind::TrigPeriodic(_)));
        let c = CoefficientSpec::constant(1.0).build(&grid, 0).unwrap();
        assert_eq!(c.space_kind(), &SpaceProfileKind::Constant);
    }
}
