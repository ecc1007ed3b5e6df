//! Dispersal kernels and their admissibility checks.
//!
//! A kernel is a nonnegative density `κ` on `R^N` with `κ(0) > 0`, unit mass,
//! and an exponential tail `κ(z) ≤ exp(-μ|z|)` beyond a radius `M`. The tail
//! constants are user-declared metadata; [`Kernel::verify_h1`] checks them
//! empirically on a probe grid.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mass tolerance at the default probe resolution.
pub const NORM_TOL: f64 = 1e-8;
/// Radial samples used by the tail scan.
pub const TAIL_SAMPLES: usize = 512;
/// Gaussian kernels are treated as supported on `[-8σ, 8σ]^N`.
pub const GAUSSIAN_TRUNCATION: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian {
        sigma: f64,
    },
    /// `C exp(-1 / (1 - |z/r|²))` inside the ball of radius `r`.
    Bump {
        radius: f64,
        normalization: f64,
    },
    /// Radial profile, linearly interpolated in `|z|`, zero past the last radius.
    Tabulated {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub dim: usize,
    pub symmetric: bool,
    pub tail_mu: f64,
    pub tail_m: f64,
}

/// Outcome of a tail-bound violation scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailViolation {
    pub point: Vec<f64>,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1Report {
    pub norm_error: f64,
    pub tail_violations: Vec<TailViolation>,
    pub kappa0: f64,
    pub mass: f64,
}

impl H1Report {
    pub fn passes(&self, norm_tol: f64) -> bool {
        self.norm_error <= norm_tol && self.tail_violations.is_empty() && self.kappa0 > 0.0
    }
}

/// Uniform midpoint probe grid on `[-half_width, half_width]^N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeGrid {
    pub half_width: f64,
    pub h: f64,
}

impl ProbeGrid {
    pub fn points_per_axis(&self) -> usize {
        if self.half_width <= 0.0 || self.h <= 0.0 || !self.h.is_finite() {
            return 0;
        }
        (2.0 * self.half_width / self.h).round().max(0.0) as usize
    }

    /// Midpoint nodes along one axis. The actual spacing is `2 half_width / n`.
    fn axis(&self) -> (Vec<f64>, f64) {
        let n = self.points_per_axis();
        let h = 2.0 * self.half_width / n as f64;
        let nodes = (0..n)
            .map(|i| -self.half_width + (i as f64 + 0.5) * h)
            .collect();
        (nodes, h)
    }
}

/// Surface area of the unit sphere in `R^n`.
#[cfg(test)]
fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI * sphere_area(n - 2) / (n - 2) as f64,
    }
}

fn bump_profile(s2: f64) -> f64 {
    if s2 < 1.0 {
        (-1.0 / (1.0 - s2)).exp()
    } else {
        0.0
    }
}

impl Kernel {
    pub fn gaussian(sigma: f64, dim: usize, tail_mu: f64, tail_m: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidKernel(format!("sigma must be positive, got {sigma}")));
        }
        Self::checked(KernelKind::Gaussian { sigma }, dim, tail_mu, tail_m)
    }

    /// Compactly supported bump; the constant is fixed so that the midpoint
    /// sum on the default probe grid is exactly one.
    pub fn bump(radius: f64, dim: usize, tail_mu: f64, tail_m: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidKernel(format!("radius must be positive, got {radius}")));
        }
        let mut k = Self::checked(
            KernelKind::Bump {
                radius,
                normalization: 1.0,
            },
            dim,
            tail_mu,
            tail_m,
        )?;
        let mass = k.mass_on(&k.default_probe());
        if !(mass > 0.0) {
            return Err(Error::InvalidKernel("bump has zero mass on the probe grid".into()));
        }
        k.kind = KernelKind::Bump {
            radius,
            normalization: 1.0 / mass,
        };
        Ok(k)
    }

    pub fn tabulated(radii: Vec<f64>, values: Vec<f64>, dim: usize, tail_mu: f64, tail_m: f64) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::InvalidKernel(
                "tabulated kernel needs at least two (radius, value) rows".into(),
            ));
        }
        if radii[0] != 0.0 {
            return Err(Error::InvalidKernel("first tabulated radius must be 0".into()));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidKernel("radii must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidKernel("tabulated values must be finite and nonnegative".into()));
        }
        Self::checked(KernelKind::Tabulated { radii, values }, dim, tail_mu, tail_m)
    }

    /// Reads a two-column `radius,value` CSV. A non-numeric first row is
    /// treated as a header.
    pub fn tabulated_from_csv(path: &Path, dim: usize, tail_mu: f64, tail_m: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let (mut radii, mut values) = (Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::InvalidKernel(format!("row {row}: expected two columns")));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(r), Ok(v)) => {
                    radii.push(r);
                    values.push(v);
                }
                _ if row == 0 => continue,
                _ => return Err(Error::InvalidKernel(format!("row {row}: not numeric"))),
            }
        }
        Self::tabulated(radii, values, dim, tail_mu, tail_m)
    }

    fn checked(kind: KernelKind, dim: usize, tail_mu: f64, tail_m: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidKernel("dimension must be at least 1".into()));
        }
        if !(tail_mu > 0.0) || !(tail_m > 0.0) {
            return Err(Error::InvalidKernel("tail constants mu and M must be positive".into()));
        }
        let k = Kernel {
            kind,
            dim,
            symmetric: true,
            tail_mu,
            tail_m,
        };
        if !(k.radial(0.0) > 0.0) {
            return Err(Error::InvalidKernel("kappa(0) must be positive".into()));
        }
        Ok(k)
    }

    /// `κ` as a function of `|z|²`.
    #[inline]
    pub fn radial_sq(&self, r2: f64) -> f64 {
        match &self.kind {
            KernelKind::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                (2.0 * PI * s2).powf(-(self.dim as f64) / 2.0) * (-r2 / (2.0 * s2)).exp()
            }
            KernelKind::Bump {
                radius,
                normalization,
            } => normalization * bump_profile(r2 / (radius * radius)),
            KernelKind::Tabulated { .. } => self.radial(r2.sqrt()),
        }
    }

    /// `κ` as a function of `|z|`.
    pub fn radial(&self, r: f64) -> f64 {
        match &self.kind {
            KernelKind::Tabulated { radii, values } => {
                let last = radii.len() - 1;
                if r >= radii[last] {
                    return if r == radii[last] { values[last] } else { 0.0 };
                }
                let j = radii.partition_point(|&x| x <= r) - 1;
                let w = (r - radii[j]) / (radii[j + 1] - radii[j]);
                values[j] * (1.0 - w) + values[j + 1] * w
            }
            _ => self.radial_sq(r * r),
        }
    }

    /// Density at `z`. Unchecked variant of [`Kernel::eval`].
    #[inline]
    pub fn density(&self, z: &[f64]) -> f64 {
        self.radial_sq(z.iter().map(|v| v * v).sum())
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        Ok(self.density(z))
    }

    /// Radius outside which the kernel is treated as zero.
    pub fn support_radius(&self) -> f64 {
        match &self.kind {
            KernelKind::Gaussian { sigma } => GAUSSIAN_TRUNCATION * sigma,
            KernelKind::Bump { radius, .. } => *radius,
            KernelKind::Tabulated { radii, .. } => radii[radii.len() - 1],
        }
    }

    /// Largest admissible mesh width for discretizing this kernel.
    pub fn max_mesh(&self) -> f64 {
        match &self.kind {
            KernelKind::Gaussian { sigma } => *sigma,
            KernelKind::Bump { radius, .. } => radius / 4.0,
            KernelKind::Tabulated { radii, .. } => radii[radii.len() - 1] / 4.0,
        }
    }

    /// Probe grid at the documented default resolution.
    pub fn default_probe(&self) -> ProbeGrid {
        let tail = self.tail_m + 5.0 / self.tail_mu;
        match &self.kind {
            KernelKind::Gaussian { sigma } => ProbeGrid {
                half_width: tail.max(GAUSSIAN_TRUNCATION * sigma),
                h: sigma / 4.0,
            },
            KernelKind::Bump { radius, .. } => ProbeGrid {
                half_width: tail.max(*radius),
                h: radius / 64.0,
            },
            KernelKind::Tabulated { radii, .. } => {
                let rmax = radii[radii.len() - 1];
                ProbeGrid {
                    half_width: tail.max(rmax),
                    h: rmax / 64.0,
                }
            }
        }
    }

    /// Midpoint-rule mass over the probe box.
    pub fn mass_on(&self, probe: &ProbeGrid) -> f64 {
        let (axis, h) = probe.axis();
        let n = axis.len();
        let total = n.pow(self.dim as u32);
        let mut z = vec![0.0; self.dim];
        let mut sum = 0.0;
        for flat in 0..total {
            let mut rem = flat;
            for zi in z.iter_mut().rev() {
                *zi = axis[rem % n];
                rem /= n;
            }
            sum += self.density(&z);
        }
        sum * h.powi(self.dim as i32)
    }

    /// Checks unit mass, positivity at the origin and the declared exponential tail.
    pub fn verify_h1(&self, probe: &ProbeGrid) -> Result<H1Report> {
        let n = probe.points_per_axis();
        if n == 0 {
            return Err(Error::EmptyProbeGrid);
        }
        let (axis, _) = probe.axis();
        let mass = self.mass_on(probe);
        let mut violations = Vec::new();
        let bound = |r: f64| (-self.tail_mu * r).exp();

        let total = n.pow(self.dim as u32);
        let mut z = vec![0.0; self.dim];
        for flat in 0..total {
            let mut rem = flat;
            for zi in z.iter_mut().rev() {
                *zi = axis[rem % n];
                rem /= n;
            }
            let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r >= self.tail_m {
                let v = self.density(&z);
                if v > bound(r) {
                    violations.push(TailViolation {
                        point: z.clone(),
                        value: v,
                        bound: bound(r),
                    });
                }
            }
        }
        let r_hi = probe.half_width.max(self.tail_m);
        for k in 0..TAIL_SAMPLES {
            let r = self.tail_m + (r_hi - self.tail_m) * k as f64 / (TAIL_SAMPLES - 1) as f64;
            let v = self.radial(r);
            if v > bound(r) {
                let mut point = vec![0.0; self.dim];
                point[0] = r;
                violations.push(TailViolation {
                    point,
                    value: v,
                    bound: bound(r),
                });
            }
        }
        Ok(H1Report {
            norm_error: (mass - 1.0).abs(),
            tail_violations: violations,
            kappa0: self.radial(0.0),
            mass,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_origin_density() {
        let k = Kernel::gaussian(1.0, 1, 1.0, 4.0).unwrap();
        assert!((k.eval(&[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        let k2 = Kernel::gaussian(1.0, 2, 1.0, 4.0).unwrap();
        assert!((k2.eval(&[0.0, 0.0]).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn bump_vanishes_outside_support() {
        let k = Kernel::bump(1.0, 1, 1.0, 2.0).unwrap();
        assert_eq!(k.eval(&[1.5]).unwrap(), 0.0);
        assert_eq!(k.eval(&[1.0]).unwrap(), 0.0);
        assert!(k.eval(&[0.0]).unwrap() > 0.0);
        let k2 = Kernel::bump(1.0, 2, 1.0, 2.0).unwrap();
        assert_eq!(k2.eval(&[1.2, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = Kernel::gaussian(1.0, 2, 1.0, 4.0).unwrap();
        assert!(matches!(
            k.eval(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn gaussian_mass_matches_fine_oracle() {
        let k = Kernel::gaussian(1.0, 1, 1.0, 4.0).unwrap();
        let coarse = k.mass_on(&ProbeGrid { half_width: 8.0, h: 1.0 / 64.0 });
        let fine = k.mass_on(&ProbeGrid { half_width: 8.0, h: 1.0 / 1024.0 });
        assert!((coarse - 1.0).abs() < 1e-10);
        assert!((coarse - fine).abs() < 1e-10);
    }

    #[test]
    fn h1_gaussian_and_bump_clean() {
        let g = Kernel::gaussian(1.0, 1, 1.0, 4.0).unwrap();
        let rep = g.verify_h1(&g.default_probe()).unwrap();
        assert!(rep.tail_violations.is_empty());
        assert!(rep.norm_error < NORM_TOL);
        assert!(rep.passes(NORM_TOL));

        let b = Kernel::bump(1.0, 1, 1.0, 2.0).unwrap();
        let rep = b.verify_h1(&b.default_probe()).unwrap();
        assert!(rep.tail_violations.is_empty());
        assert!(rep.norm_error < NORM_TOL);
    }

    #[test]
    fn h1_two_dimensional_defaults() {
        let g = Kernel::gaussian(1.0, 2, 1.0, 4.0).unwrap();
        assert!(g.verify_h1(&g.default_probe()).unwrap().passes(NORM_TOL));
        let b = Kernel::bump(1.5, 2, 1.0, 2.0).unwrap();
        assert!(b.verify_h1(&b.default_probe()).unwrap().passes(NORM_TOL));
    }

    #[test]
    fn h1_flags_heavy_tail() {
        // mu too large for a unit gaussian at M = 1
        let g = Kernel::gaussian(1.0, 1, 3.0, 1.0).unwrap();
        let rep = g.verify_h1(&g.default_probe()).unwrap();
        assert!(!rep.tail_violations.is_empty());
        for v in &rep.tail_violations {
            assert!(v.value > v.bound);
        }
    }

    #[test]
    fn unnormalized_tabulated_mass_two() {
        // triangle of height 2 and half-width 1 has mass 2
        let k = Kernel::tabulated(vec![0.0, 1.0], vec![2.0, 0.0], 1, 1.0, 2.0).unwrap();
        let rep = k
            .verify_h1(&ProbeGrid { half_width: 7.0, h: 1.0 / 256.0 })
            .unwrap();
        assert!((rep.norm_error - 1.0).abs() < 1e-4);
        assert!(!rep.passes(NORM_TOL));
    }

    #[test]
    fn tabulated_interpolates_linearly() {
        let k = Kernel::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0], 1, 1.0, 2.0).unwrap();
        assert!((k.eval(&[0.5]).unwrap() - 0.75).abs() < 1e-15);
        assert!((k.eval(&[-1.5]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(k.eval(&[3.0]).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(Kernel::tabulated(vec![0.0, 1.0], vec![0.0, 0.0], 1, 1.0, 1.0).is_err());
        assert!(Kernel::tabulated(vec![0.5, 1.0], vec![1.0, 0.0], 1, 1.0, 1.0).is_err());
        assert!(Kernel::tabulated(vec![0.0, 0.0], vec![1.0, 0.0], 1, 1.0, 1.0).is_err());
        assert!(Kernel::tabulated(vec![0.0, 1.0], vec![1.0, -0.1], 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn empty_probe_rejected() {
        let g = Kernel::gaussian(1.0, 1, 1.0, 4.0).unwrap();
        assert!(matches!(
            g.verify_h1(&ProbeGrid { half_width: 0.0, h: 0.1 }),
            Err(Error::EmptyProbeGrid)
        ));
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn bump_mass_agrees_with_radial_integral() {
        // continuum mass via the radial integral, independent of the probe grid
        for dim in 1..=2 {
            let k = Kernel::bump(1.0, dim, 1.0, 2.0).unwrap();
            let c = match k.kind {
                KernelKind::Bump { normalization, .. } => normalization,
                _ => unreachable!(),
            };
            let m = 200_000;
            let h = 1.0 / m as f64;
            let radial: f64 = (0..m)
                .map(|i| {
                    let s = (i as f64 + 0.5) * h;
                    s.powi(dim as i32 - 1) * bump_profile(s * s)
                })
                .sum::<f64>()
                * h;
            let continuum = c * sphere_area(dim) * radial;
            assert!((continuum - 1.0).abs() < 1e-8, "dim {dim}: {continuum}");
        }
    }
}
