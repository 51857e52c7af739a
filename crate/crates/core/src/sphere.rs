//! Probability-normalized integration on spheres `S^{dim-1}`: deterministic
//! product rules, seeded Monte Carlo with standard errors, low-discrepancy
//! scanning grids and random rotations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;

/// Weighted point set on the unit sphere of `R^dim`, weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Largest ambient dimension for which product rules are offered.
pub const MAX_PRODUCT_DIM: usize = 4;

impl SphereRule {
    /// Deterministic product rule on `S^{dim-1}` for `dim <= 4`.
    ///
    /// `resolution` is the number of latitude nodes per level; polynomials of
    /// degree up to `2 * resolution - 1` are integrated exactly.
    pub fn product(dim: usize, resolution: usize) -> Result<SphereRule> {
        if dim > MAX_PRODUCT_DIM {
            return Err(Error::Unsupported(format!(
                "deterministic product rules are limited to N <= {MAX_PRODUCT_DIM} (got N = {dim}); use Monte Carlo or a design rule"
            )));
        }
        SphereRule::design(dim, resolution)
    }

    /// Recursive Gauss-Gegenbauer rule on `S^{dim-1}` for any `dim >= 1`.
    ///
    /// Writes `theta = (t, sqrt(1 - t^2) phi)` with `t` from a Gauss rule for
    /// the slice density and `phi` from the rule one dimension down. Exact
    /// for polynomials of degree `<= 2 * resolution - 1`. The point count
    /// grows like `resolution^(dim - 1)`.
    pub fn design(dim: usize, resolution: usize) -> Result<SphereRule> {
        if dim == 0 || resolution == 0 {
            return Err(Error::InvalidArgument(
                "sphere rules need dim >= 1 and resolution >= 1".into(),
            ));
        }
        Ok(design_rule(dim, resolution))
    }

    /// Builds a rule from explicit points (row-major, `dim` per point) and
    /// weights, renormalizing the weights.
    pub fn from_parts(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> SphereRule {
        assert_eq!(points.len(), dim * weights.len());
        let total: f64 = weights.iter().sum();
        SphereRule {
            dim,
            points,
            weights: weights.into_iter().map(|w| w / total).collect(),
        }
    }

    /// Equal-weight rule on given unit points.
    pub fn equal_weight(dim: usize, points: Vec<f64>) -> SphereRule {
        let count = points.len() / dim;
        SphereRule::from_parts(dim, points, vec![1.0; count])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Weighted mean of `f` over the nodes. Summation order is fixed.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        const CHUNK: usize = 1024;
        let partial: Vec<f64> = self
            .points
            .par_chunks(self.dim * CHUNK)
            .zip(self.weights.par_chunks(CHUNK))
            .map(|(pts, ws)| {
                pts.chunks_exact(self.dim)
                    .zip(ws)
                    .map(|(p, w)| w * f(p))
                    .sum::<f64>()
            })
            .collect();
        partial.iter().sum()
    }

    /// Maps the rule through an orthonormal basis (`big_dim x dim`), giving a
    /// rule on the great subsphere it spans.
    pub fn embed(&self, basis: &DMatrix<f64>) -> SphereRule {
        assert_eq!(basis.ncols(), self.dim, "basis width must match rule dimension");
        let big = basis.nrows();
        let mut points = Vec::with_capacity(self.len() * big);
        for p in self.points() {
            for r in 0..big {
                let mut acc = 0.0;
                for (c, &x) in p.iter().enumerate() {
                    acc += basis[(r, c)] * x;
                }
                points.push(acc);
            }
        }
        SphereRule {
            dim: big,
            points,
            weights: self.weights.clone(),
        }
    }
}

fn design_rule(dim: usize, resolution: usize) -> SphereRule {
    match dim {
        1 => SphereRule {
            dim: 1,
            points: vec![-1.0, 1.0],
            weights: vec![0.5, 0.5],
        },
        2 => {
            let count = 2 * resolution;
            let mut points = Vec::with_capacity(2 * count);
            for k in 0..count {
                let angle = std::f64::consts::TAU * (k as f64 + 0.5) / count as f64;
                points.push(angle.cos());
                points.push(angle.sin());
            }
            SphereRule {
                dim: 2,
                points,
                weights: vec![1.0 / count as f64; count],
            }
        }
        _ => {
            let slice = GaussRule::sphere_slice(resolution, dim);
            let lower = design_rule(dim - 1, resolution);
            let mut points = Vec::with_capacity(slice.len() * lower.len() * dim);
            let mut weights = Vec::with_capacity(slice.len() * lower.len());
            for (&t, &wt) in slice.nodes.iter().zip(&slice.weights) {
                let r = (1.0 - t * t).max(0.0).sqrt();
                for (phi, &wp) in lower.points().zip(&lower.weights) {
                    points.push(t);
                    points.extend(phi.iter().map(|x| r * x));
                    weights.push(wt * wp);
                }
            }
            SphereRule {
                dim,
                points,
                weights,
            }
        }
    }
}

impl SphereRule {
    /// Weighted mean of `f(B p)` over the rule points `p`, where `basis` is
    /// `big_dim x dim` with orthonormal columns. Avoids materializing the
    /// embedded rule.
    pub fn integrate_mapped(&self, basis: &DMatrix<f64>, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        assert_eq!(basis.ncols(), self.dim, "basis width must match rule dimension");
        const CHUNK: usize = 1024;
        let big = basis.nrows();
        let partial: Vec<f64> = self
            .points
            .par_chunks(self.dim * CHUNK)
            .zip(self.weights.par_chunks(CHUNK))
            .map(|(pts, ws)| {
                let mut x = vec![0.0; big];
                let mut acc = 0.0;
                for (p, w) in pts.chunks_exact(self.dim).zip(ws) {
                    embed_into(basis, p, &mut x);
                    acc += w * f(&x);
                }
                acc
            })
            .collect();
        partial.iter().sum()
    }
}

fn embed_into(basis: &DMatrix<f64>, p: &[f64], x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = 0.0);
    for (c, &pc) in p.iter().enumerate() {
        if pc != 0.0 {
            for (v, b) in x.iter_mut().zip(basis.column(c).iter()) {
                *v += pc * b;
            }
        }
    }
}

/// How to integrate over a sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    /// Product rule, available for `dim <= 4`.
    Product { resolution: usize },
    /// Recursive Gauss-Gegenbauer rule for any dimension.
    Design { resolution: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

/// A ready-to-use probability-normalized integration scheme on `S^{dim-1}`.
#[derive(Debug, Clone)]
pub enum QuadratureRule {
    Deterministic(Arc<SphereRule>),
    MonteCarlo { dim: usize, mc: MonteCarlo },
}

/// Builds an integration scheme. Product rules are refused for `dim > 4`.
pub fn sphere_quadrature(dim: usize, kind: QuadratureKind) -> Result<QuadratureRule> {
    if dim < 1 {
        return Err(Error::InvalidArgument("sphere dimension must be positive".into()));
    }
    Ok(match kind {
        QuadratureKind::Product { resolution } => {
            QuadratureRule::Deterministic(Arc::new(SphereRule::product(dim, resolution)?))
        }
        QuadratureKind::Design { resolution } => {
            QuadratureRule::Deterministic(Arc::new(SphereRule::design(dim, resolution)?))
        }
        QuadratureKind::MonteCarlo { samples, seed } => QuadratureRule::MonteCarlo {
            dim,
            mc: MonteCarlo::new(samples, seed),
        },
    })
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        match self {
            QuadratureRule::Deterministic(r) => r.dim(),
            QuadratureRule::MonteCarlo { dim, .. } => *dim,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, QuadratureRule::MonteCarlo { .. })
    }

    /// Mean of `f` over the sphere; the standard error is zero for rules.
    pub fn mean(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> McEstimate {
        match self {
            QuadratureRule::Deterministic(r) => McEstimate {
                mean: r.integrate(f),
                std_err: 0.0,
            },
            QuadratureRule::MonteCarlo { dim, mc } => mc.estimate(*dim, f),
        }
    }

    /// Mean of `f` over the great subsphere spanned by the orthonormal
    /// columns of `basis`, whose width must equal this rule's dimension.
    pub fn mean_on(&self, basis: &DMatrix<f64>, f: impl Fn(&[f64]) -> f64 + Sync) -> McEstimate {
        match self {
            QuadratureRule::Deterministic(r) => McEstimate {
                mean: r.integrate_mapped(basis, f),
                std_err: 0.0,
            },
            QuadratureRule::MonteCarlo { dim, mc } => {
                assert_eq!(basis.ncols(), *dim, "basis width must match rule dimension");
                let big = basis.nrows();
                mc.estimate_many(*dim, 1, |p, out| {
                    let mut x = vec![0.0; big];
                    embed_into(basis, p, &mut x);
                    out[0] = f(&x);
                })[0]
            }
        }
    }
}

/// Uniform random point on `S^{dim-1}` via normalized Gaussians.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Haar-random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..dim {
        if r[(c, c)] < 0.0 {
            let mut col = q.column_mut(c);
            col.neg_mut();
        }
    }
    q
}

/// Seeded, chunked Monte Carlo integration on `S^{dim-1}`.
///
/// Chunk `c` draws from its own ChaCha8 stream, so results do not depend on
/// the number of worker threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

const MC_CHUNK: usize = 8192;

impl MonteCarlo {
    pub fn new(samples: usize, seed: u64) -> Self {
        MonteCarlo { samples, seed }
    }

    /// RNG for chunk `index`, independent across chunks.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Estimates `outputs` means simultaneously. `f` writes its values into the
    /// provided slice, which lets callers form paired differences.
    pub fn estimate_many(
        &self,
        dim: usize,
        outputs: usize,
        f: impl Fn(&[f64], &mut [f64]) + Sync,
    ) -> Vec<McEstimate> {
        let chunks = self.samples.div_ceil(MC_CHUNK);
        let partial: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = self.stream(c as u64);
                let count = MC_CHUNK.min(self.samples - c * MC_CHUNK);
                let mut sum = vec![0.0; outputs];
                let mut sq = vec![0.0; outputs];
                let mut buf = vec![0.0; outputs];
                let mut x = vec![0.0; dim];
                for _ in 0..count {
                    fill_unit(&mut rng, &mut x);
                    f(&x, &mut buf);
                    for k in 0..outputs {
                        sum[k] += buf[k];
                        sq[k] += buf[k] * buf[k];
                    }
                }
                (sum, sq, count)
            })
            .collect();
        let mut sum = vec![0.0; outputs];
        let mut sq = vec![0.0; outputs];
        let mut total = 0usize;
        for (s, q, c) in &partial {
            for k in 0..outputs {
                sum[k] += s[k];
                sq[k] += q[k];
            }
            total += c;
        }
        let n = total as f64;
        (0..outputs)
            .map(|k| {
                let mean = sum[k] / n;
                let var = ((sq[k] / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
                McEstimate {
                    mean,
                    std_err: (var / n).sqrt(),
                }
            })
            .collect()
    }

    pub fn estimate(&self, dim: usize, f: impl Fn(&[f64]) -> f64 + Sync) -> McEstimate {
        self.estimate_many(dim, 1, |x, out| out[0] = f(x))[0]
    }
}

fn fill_unit<R: Rng + ?Sized>(rng: &mut R, x: &mut [f64]) {
    loop {
        let mut norm = 0.0;
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
            norm += *v * *v;
        }
        if norm > 1e-300 {
            let inv = 1.0 / norm.sqrt();
            x.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Low-discrepancy scanning grid on `S^{dim-1}`: a Halton sequence with a
/// seeded Cranley-Patterson shift, pushed through the Gaussian quantile and
/// normalized.
pub fn halton_grid(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if dim > PRIMES.len() {
        return Err(Error::Unsupported(format!(
            "Halton grids support dim <= {}, got {dim}",
            PRIMES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let grid = (0..count)
        .map(|i| {
            let g: Vec<f64> = (0..dim)
                .map(|k| {
                    let u = (radical_inverse(i as u64 + 1, PRIMES[k]) + shift[k]).fract();
                    let p = u.clamp(1e-12, 1.0 - 1e-12);
                    std::f64::consts::SQRT_2 * statrs::function::erf::erf_inv(2.0 * p - 1.0)
                })
                .collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            g.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    Ok(grid)
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `m * x` for a dense matrix and a slice.
pub fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).as_slice().to_vec()
}
