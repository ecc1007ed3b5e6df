//! Grids, midpoint quadrature, and the discrete dispersal operator
//! `u ↦ Σ_j κ(x_j − x_i) u_j w_j`.
//!
//! Bounded domains are axis-aligned boxes sampled at cell midpoints. Unbounded
//! domains with spatially periodic coefficients are replaced by a torus, on
//! which the operator is circulant and applied by FFT.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::par;

/// Row-sum tolerance on the torus.
pub const ROWSUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "lowercase")]
pub enum Domain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Torus { period: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    n: Vec<usize>,
    h: Vec<f64>,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new_box(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != n.len() || lo.is_empty() {
            return Err(Error::InvalidGrid("lo, hi and n must have equal nonzero length".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidGrid("box requires lo < hi on every axis".into()));
        }
        let h: Vec<f64> = lo
            .iter()
            .zip(hi)
            .zip(n)
            .map(|((a, b), &k)| (b - a) / k as f64)
            .collect();
        let domain = Domain::Box {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        };
        Self::build(domain, n, h, |axis, i, h| lo[axis] + (i as f64 + 0.5) * h)
    }

    pub fn new_torus(period: &[f64], n: &[usize]) -> Result<Self> {
        if period.len() != n.len() || period.is_empty() {
            return Err(Error::InvalidGrid("period and n must have equal nonzero length".into()));
        }
        if period.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidGrid("torus period must be positive".into()));
        }
        let h: Vec<f64> = period.iter().zip(n).map(|(p, &k)| p / k as f64).collect();
        let domain = Domain::Torus {
            period: period.to_vec(),
        };
        Self::build(domain, n, h, |_, i, h| i as f64 * h)
    }

    /// One-dimensional box `[lo, hi]` with `n` cells.
    pub fn interval(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new_box(&[lo], &[hi], &[n])
    }

    /// One-dimensional torus of period `period` with `n` nodes.
    pub fn ring(period: f64, n: usize) -> Result<Self> {
        Self::new_torus(&[period], &[n])
    }

    fn build(domain: Domain, n: &[usize], h: Vec<f64>, coord: impl Fn(usize, usize, f64) -> f64) -> Result<Self> {
        if n.contains(&0) {
            return Err(Error::InvalidGrid("need at least one point per axis".into()));
        }
        let dim = n.len();
        let total: usize = n.iter().product();
        let mut nodes = Vec::with_capacity(total * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            for (axis, &i) in idx.iter().enumerate() {
                nodes.push(coord(axis, i, h[axis]));
            }
            for axis in (0..dim).rev() {
                idx[axis] += 1;
                if idx[axis] < n[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Ok(Grid {
            domain,
            n: n.to_vec(),
            h,
            nodes,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.domain, Domain::Torus { .. })
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks(self.dim())
    }

    /// Uniform midpoint weight `Π h_i`.
    pub fn weight(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![self.weight(); self.len()]
    }

    /// Lebesgue measure of the domain (of one period cell for the torus).
    pub fn measure(&self) -> f64 {
        match &self.domain {
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            Domain::Torus { period } => period.iter().product(),
        }
    }

    /// Index of the node at `x`, if `x` is a node up to a small fraction of the mesh.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut flat = 0usize;
        for axis in 0..self.dim() {
            let h = self.h[axis];
            let first = self.nodes[axis];
            let mut offset = x[axis] - first;
            if let Domain::Torus { period } = &self.domain {
                offset = offset.rem_euclid(period[axis]);
            }
            let k = (offset / h).round();
            if (offset - k * h).abs() > 1e-9 * h {
                return None;
            }
            let mut k = k as i64;
            if self.is_torus() {
                k = k.rem_euclid(self.n[axis] as i64);
            }
            if k < 0 || k >= self.n[axis] as i64 {
                return None;
            }
            flat = flat * self.n[axis] + k as usize;
        }
        Some(flat)
    }

    /// For nested boxes with the same mesh, the outer index of every inner node.
    pub fn embedding_into(&self, outer: &Grid) -> Result<Vec<usize>> {
        let (Domain::Box { lo, hi }, Domain::Box { lo: olo, hi: ohi }) = (&self.domain, &outer.domain) else {
            return Err(Error::InvalidGrid("nesting is defined for boxes only".into()));
        };
        if self.dim() != outer.dim() {
            return Err(Error::InvalidGrid("grids have different dimensions".into()));
        }
        for axis in 0..self.dim() {
            if (self.h[axis] - outer.h[axis]).abs() > 1e-12 * self.h[axis] {
                return Err(Error::InvalidGrid("nested grids must share the mesh width".into()));
            }
            if lo[axis] < olo[axis] - 1e-12 || hi[axis] > ohi[axis] + 1e-12 {
                return Err(Error::InvalidGrid("inner box is not contained in outer box".into()));
            }
        }
        self.nodes()
            .map(|x| {
                outer
                    .locate(x)
                    .ok_or_else(|| Error::InvalidGrid("inner nodes are not outer nodes".into()))
            })
            .collect()
    }
}

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Self {
        let mut data = vec![0.0; n * n];
        par::for_each_chunk_mut(&mut data, n.max(1), 64, |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(i, j);
            }
        });
        DenseMatrix { n, data }
    }

    /// Builds a matrix from its columns.
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let n = cols.len();
        Self::from_fn(n, |i, j| cols[j][i])
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        par::for_each_chunk_mut(out, 32, 8, |c, chunk| {
            for (k, o) in chunk.iter_mut().enumerate() {
                let i = c * 32 + k;
                *o = self.data[i * n..(i + 1) * n]
                    .iter()
                    .zip(u)
                    .map(|(a, b)| a * b)
                    .sum();
            }
        });
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }
}

#[derive(Clone)]
struct Circulant {
    shape: Vec<usize>,
    stencil: Vec<f64>,
    spectrum: Vec<Complex<f64>>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for Circulant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Circulant")
            .field("shape", &self.shape)
            .finish_non_exhaustive()
    }
}

impl Circulant {
    fn new(shape: Vec<usize>, stencil: Vec<f64>) -> Self {
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse: Vec<_> = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let mut c = Circulant {
            shape,
            stencil,
            spectrum: Vec::new(),
            forward,
            inverse,
        };
        let mut spec: Vec<Complex<f64>> = c.stencil.iter().map(|&v| Complex::new(v, 0.0)).collect();
        c.transform(&mut spec, true);
        c.spectrum = spec;
        c
    }

    fn transform(&self, data: &mut [Complex<f64>], forward: bool) {
        let plans = if forward { &self.forward } else { &self.inverse };
        let dim = self.shape.len();
        let total = data.len();
        let mut line = Vec::new();
        for axis in 0..dim {
            let n = self.shape[axis];
            let stride: usize = self.shape[axis + 1..].iter().product();
            let plan = &plans[axis];
            if stride == 1 {
                plan.process(data);
                continue;
            }
            line.resize(n, Complex::new(0.0, 0.0));
            let block = n * stride;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[base + k * stride];
                    }
                    plan.process(&mut line);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride] = *v;
                    }
                }
            }
        }
    }

    fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, true);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.transform(&mut buf, false);
        let scale = 1.0 / buf.len() as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }

    /// Entry `(i, j)` of the equivalent dense matrix.
    fn entry(&self, i: usize, j: usize) -> f64 {
        let mut flat = 0usize;
        let (mut ri, mut rj) = (i, j);
        let mut digits = vec![0usize; self.shape.len()];
        for axis in (0..self.shape.len()).rev() {
            let n = self.shape[axis];
            let (a, b) = (ri % n, rj % n);
            ri /= n;
            rj /= n;
            digits[axis] = (a + n - b) % n;
        }
        for (axis, d) in digits.into_iter().enumerate() {
            flat = flat * self.shape[axis] + d;
        }
        self.stencil[flat]
    }
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(DenseMatrix),
    Circulant(Circulant),
}

/// Quadrature discretization of the dispersal integral on a grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    storage: Storage,
    row_sums: Vec<f64>,
    symmetric_weighted: bool,
}

/// Periodized kernel: sum of the nearest images of `z` on the torus.
fn periodized(k: &Kernel, z: &[f64], period: &[f64]) -> f64 {
    let dim = z.len();
    let mut base = z.to_vec();
    for (b, p) in base.iter_mut().zip(period) {
        *b -= p * (*b / p).round();
    }
    let mut shifted = vec![0.0; dim];
    let mut sum = 0.0;
    for code in 0..3usize.pow(dim as u32) {
        let mut c = code;
        for axis in 0..dim {
            let m = (c % 3) as f64 - 1.0;
            c /= 3;
            shifted[axis] = base[axis] + m * period[axis];
        }
        sum += k.density(&shifted);
    }
    sum
}

fn check_compat(k: &Kernel, g: &Grid) -> Result<()> {
    if k.dim != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim,
            got: g.dim(),
        });
    }
    let limit = k.max_mesh();
    if let Some(&h) = g.h().iter().find(|&&h| h > limit * (1.0 + 1e-12)) {
        return Err(Error::GridTooCoarse { h, limit });
    }
    if let Domain::Torus { period } = g.domain() {
        let support = k.support_radius();
        for p in period {
            if support > p / 2.0 * (1.0 + 1e-12) {
                return Err(Error::SupportExceedsHalfPeriod {
                    support,
                    half_period: p / 2.0,
                });
            }
        }
    }
    Ok(())
}

impl DiscreteOperator {
    /// Assembles the operator: circulant on a torus, dense on a box.
    pub fn assemble(k: &Kernel, g: &Grid) -> Result<Self> {
        check_compat(k, g)?;
        match g.domain() {
            Domain::Torus { period } => {
                let dim = g.dim();
                let w = g.weight();
                let mut z = vec![0.0; dim];
                let stencil: Vec<f64> = (0..g.len())
                    .map(|m| {
                        // stencil[m] = κ_per(-x_m) w, with x_0 = 0 on the torus
                        for (zi, xi) in z.iter_mut().zip(g.node(m)) {
                            *zi = -xi;
                        }
                        periodized(k, &z, period) * w
                    })
                    .collect();
                let sum: f64 = stencil.iter().sum();
                let circ = Circulant::new(g.shape().to_vec(), stencil);
                Ok(DiscreteOperator {
                    grid: g.clone(),
                    storage: Storage::Circulant(circ),
                    row_sums: vec![sum; g.len()],
                    symmetric_weighted: k.symmetric,
                })
            }
            Domain::Box { .. } => Self::assemble_dense(k, g),
        }
    }

    /// Dense assembly on any grid; the torus path sums the nearest images.
    pub fn assemble_dense(k: &Kernel, g: &Grid) -> Result<Self> {
        check_compat(k, g)?;
        let w = g.weight();
        let period = match g.domain() {
            Domain::Torus { period } => Some(period.clone()),
            Domain::Box { .. } => None,
        };
        let dim = g.dim();
        let m = DenseMatrix::from_fn(g.len(), |i, j| {
            let mut z = vec![0.0; dim];
            for ((zi, xj), xi) in z.iter_mut().zip(g.node(j)).zip(g.node(i)) {
                *zi = xj - xi;
            }
            let v = match &period {
                Some(p) => periodized(k, &z, p),
                None => k.density(&z),
            };
            v * w
        });
        Ok(Self::from_dense(g.clone(), m, k.symmetric))
    }

    /// Wraps an explicit matrix. Used for toy operators and tests.
    pub fn from_dense(grid: Grid, m: DenseMatrix, symmetric_weighted: bool) -> Self {
        let row_sums = m.row_sums();
        DiscreteOperator {
            grid,
            storage: Storage::Dense(m),
            row_sums,
            symmetric_weighted,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn is_circulant(&self) -> bool {
        matches!(self.storage, Storage::Circulant(_))
    }

    pub fn is_symmetric_weighted(&self) -> bool {
        self.symmetric_weighted
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// Sup-operator norm, the largest row sum of a nonnegative matrix.
    pub fn norm_inf(&self) -> f64 {
        self.row_sums.iter().cloned().fold(0.0, f64::max)
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m.get(i, j),
            Storage::Circulant(c) => c.entry(i, j),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Circulant(c) => DenseMatrix::from_fn(self.len(), |i, j| c.entry(i, j)),
        }
    }

    /// Dense operator on the same grid, for cross-checking the fast path.
    pub fn densified(&self) -> Self {
        Self::from_dense(self.grid.clone(), self.to_dense(), self.symmetric_weighted)
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        let mut out = vec![0.0; u.len()];
        self.apply_into(u, &mut out);
        Ok(out)
    }

    /// Unchecked application; `u` and `out` must have the grid length.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        match &self.storage {
            Storage::Dense(m) => m.mul_vec_into(u, out),
            Storage::Circulant(c) => c.apply_into(u, out),
        }
    }

    /// Writes the dense matrix as CSV, one row per line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.len() {
            let row: Vec<String> = (0..self.len()).map(|j| format!("{:e}", self.entry(i, j))).collect();
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// The operator rewritten as `Σ_j K_ij (u_j − u_i) + ã_i u_i` with
/// `ã_i = a_i + Σ_j K_ij`.
#[derive(Debug, Clone)]
pub struct NeumannForm {
    pub a_tilde: Vec<f64>,
    pub row_sums: Vec<f64>,
}

impl NeumannForm {
    pub fn apply(&self, op: &DiscreteOperator, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = op.apply(u)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o += (self.a_tilde[i] - self.row_sums[i]) * u[i];
        }
        Ok(out)
    }
}

pub fn neumann_form(op: &DiscreteOperator, a: &[f64]) -> Result<NeumannForm> {
    if a.len() != op.len() {
        return Err(Error::LengthMismatch {
            expected: op.len(),
            got: a.len(),
        });
    }
    Ok(NeumannForm {
        a_tilde: a.iter().zip(op.row_sums()).map(|(a, r)| a + r).collect(),
        row_sums: op.row_sums().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss() -> Kernel {
        Kernel::gaussian(1.0, 1, 1.0, 4.0).unwrap()
    }

    #[test]
    fn weights_sum_to_measure() {
        let b = Grid::new_box(&[0.0, -1.0], &[1.0, 2.0], &[8, 12]).unwrap();
        assert!((b.weights().iter().sum::<f64>() - 3.0).abs() < 1e-13);
        let t = Grid::new_torus(&[16.0], &[256]).unwrap();
        assert!((t.weights().iter().sum::<f64>() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn nodes_uniform_increasing() {
        let b = Grid::interval(0.0, 1.0, 4).unwrap();
        let xs: Vec<f64> = b.nodes().map(|x| x[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
        let t = Grid::ring(2.0, 4).unwrap();
        let xs: Vec<f64> = t.nodes().map(|x| x[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0, 1.5]);
    }

    #[test]
    fn two_node_toy_box() {
        let g = Grid::interval(-0.5, 1.5, 2).unwrap();
        let op = DiscreteOperator::assemble(&gauss(), &g).unwrap();
        let k0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let k1 = k0 * (-0.5f64).exp();
        assert!((op.entry(0, 0) - k0).abs() < 1e-15);
        assert!((op.entry(0, 1) - k1).abs() < 1e-15);
        assert!((op.entry(1, 0) - k1).abs() < 1e-15);
        assert!((op.entry(0, 1) - 0.24197).abs() < 1e-5);
    }

    #[test]
    fn torus_row_sums_match_direct_summation() {
        let g = Grid::ring(16.0, 256).unwrap();
        let k = gauss();
        let op = DiscreteOperator::assemble(&k, &g).unwrap();
        // oracle: sum every image within 40 periods directly
        for i in [0usize, 17, 255] {
            let xi = g.node(i)[0];
            let mut s = 0.0;
            for j in 0..256 {
                for m in -40..=40 {
                    s += k.density(&[g.node(j)[0] - xi + 16.0 * m as f64]);
                }
            }
            s *= g.weight();
            assert!((op.row_sums()[i] - s).abs() < 1e-13);
            assert!((s - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn circulant_matches_dense_entrywise() {
        let g = Grid::ring(16.0, 64).unwrap();
        let fast = DiscreteOperator::assemble(&gauss(), &g).unwrap();
        let dense = DiscreteOperator::assemble_dense(&gauss(), &g).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                assert!((fast.entry(i, j) - dense.entry(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn circulant_two_dimensional_matches_dense() {
        let k = Kernel::gaussian(1.0, 2, 1.0, 4.0).unwrap();
        let g = Grid::new_torus(&[16.0, 16.0], &[16, 32]).unwrap();
        let fast = DiscreteOperator::assemble(&k, &g).unwrap();
        let dense = DiscreteOperator::assemble_dense(&k, &g).unwrap();
        let u: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        let a = fast.apply(&u).unwrap();
        let b = dense.apply(&u).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn indicator_returns_column() {
        let g = Grid::interval(0.0, 2.0, 32).unwrap();
        let op = DiscreteOperator::assemble(&gauss(), &g).unwrap();
        let mut e = vec![0.0; 32];
        e[5] = 1.0;
        let col = op.apply(&e).unwrap();
        for (i, c) in col.iter().enumerate() {
            assert_eq!(*c, op.entry(i, 5));
        }
    }

    #[test]
    fn weighted_symmetry() {
        let g = Grid::new_box(&[0.0, 0.0], &[2.0, 1.0], &[8, 4]).unwrap();
        let k = Kernel::gaussian(0.5, 2, 1.0, 4.0).unwrap();
        let op = DiscreteOperator::assemble(&k, &g).unwrap();
        let w = g.weight();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_eq!(op.entry(i, j) * w, op.entry(j, i) * w);
            }
        }
    }

    #[test]
    fn box_row_sums_bounded() {
        let g = Grid::interval(0.0, 1.0, 64).unwrap();
        let op = DiscreteOperator::assemble(&gauss(), &g).unwrap();
        assert!(op.row_sums().iter().all(|&r| r > 0.0 && r <= 1.0 + ROWSUM_TOL));
    }

    #[test]
    fn compatibility_errors() {
        let k = gauss();
        assert!(matches!(
            DiscreteOperator::assemble(&k, &Grid::ring(12.0, 64).unwrap()),
            Err(Error::SupportExceedsHalfPeriod { .. })
        ));
        assert!(matches!(
            DiscreteOperator::assemble(&k, &Grid::interval(0.0, 10.0, 4).unwrap()),
            Err(Error::GridTooCoarse { .. })
        ));
        let k2 = Kernel::gaussian(1.0, 2, 1.0, 4.0).unwrap();
        assert!(matches!(
            DiscreteOperator::assemble(&k2, &Grid::interval(0.0, 1.0, 8).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
        let op = DiscreteOperator::assemble(&k, &Grid::interval(0.0, 1.0, 8).unwrap()).unwrap();
        assert!(matches!(op.apply(&[1.0; 3]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn neumann_torus_shift_and_box_rowsum() {
        let g = Grid::ring(16.0, 128).unwrap();
        let op = DiscreteOperator::assemble(&gauss(), &g).unwrap();
        let a: Vec<f64> = g.nodes().map(|x| x[0].cos()).collect();
        let nf = neumann_form(&op, &a).unwrap();
        for (at, a) in nf.a_tilde.iter().zip(&a) {
            assert!((at - a - 1.0).abs() < 1e-8);
        }
        let b = Grid::interval(0.0, 1.0, 32).unwrap();
        let opb = DiscreteOperator::assemble(&gauss(), &b).unwrap();
        let nf = neumann_form(&opb, &[0.0; 32]).unwrap();
        assert!(nf.a_tilde.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert_eq!(nf.a_tilde, opb.row_sums());
    }

    #[test]
    fn embedding_of_nested_boxes() {
        let inner = Grid::interval(0.0, 1.0, 16).unwrap();
        let outer = Grid::interval(0.0, 2.0, 32).unwrap();
        let map = inner.embedding_into(&outer).unwrap();
        assert_eq!(map, (0..16).collect::<Vec<_>>());
        let off = Grid::interval(0.0, 2.0, 30).unwrap();
        assert!(inner.embedding_into(&off).is_err());
    }

    #[test]
    fn locate_wraps_on_torus() {
        let t = Grid::ring(4.0, 8).unwrap();
        assert_eq!(t.locate(&[4.5]), Some(1));
        assert_eq!(t.locate(&[0.25]), None);
    }
}
