//! Spherical transforms: the Funk transform, the cosine-transform family
//! `M^alpha` and its analytic continuation through Funk-Hecke multipliers,
//! spherical Radon transforms and their generalized versions, homogeneous
//! extension, and the Riesz-derivative operator `D_m`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::algebra::{check_unit, complete_basis, orthogonal_complement, PIVOT_TOL};
use crate::error::{Error, Result};
use crate::harmonic::{Evaluator, HarmonicSum, SphericalFunction};
use crate::quadrature::TanhSinh;
use crate::special::{gamma, gegenbauer, near_arithmetic_progression, near_odd_positive, recip_gamma, unit_sphere_area};
use crate::sphere::{McEstimate, QuadratureRule, SphereRule};

pub use crate::harmonic::{Component, Parity};

/// Distance from an excluded parameter below which it is treated as excluded.
pub const EXCLUSION_MARGIN: f64 = 1e-9;

/// Rejects `alpha` on or near `1, 3, 5, ...`.
pub fn check_cosine_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() {
        return Err(Error::ExcludedParameter(format!("alpha = {alpha} is not finite")));
    }
    if near_odd_positive(alpha, EXCLUSION_MARGIN) {
        return Err(Error::ExcludedParameter(format!(
            "alpha = {alpha} is excluded: the cosine transform needs alpha != 1,3,5,..."
        )));
    }
    Ok(())
}

/// Normalizing constant of `M^alpha`:
/// `sigma_{N-1} Gamma((1 - alpha)/2) / (2 pi^{(N-1)/2} Gamma(alpha/2))`.
pub fn cosine_constant(dim: usize, alpha: f64) -> Result<f64> {
    check_cosine_alpha(alpha)?;
    let n = dim as f64;
    Ok(unit_sphere_area(n) * gamma((1.0 - alpha) / 2.0) * recip_gamma(alpha / 2.0)
        / (2.0 * PI.powf((n - 1.0) / 2.0)))
}

/// Normalizing constant of `R_i^alpha` on `i`-planes in `R^dim`.
pub fn radon_constant(dim: usize, i: usize, alpha: f64) -> Result<f64> {
    let n = dim as f64;
    let shift = alpha + i as f64 - n;
    if near_arithmetic_progression(shift, 0.0, EXCLUSION_MARGIN) {
        return Err(Error::ExcludedParameter(format!(
            "alpha = {alpha} is excluded for i = {i}, N = {dim}: need alpha + i - N != 0,2,4,..."
        )));
    }
    Ok(unit_sphere_area(n) * gamma((n - alpha - i as f64) / 2.0) * recip_gamma(alpha / 2.0)
        / (2.0 * PI.powf((n - 1.0) / 2.0)))
}

/// `c_i = sigma_{i-1} / (2 pi^{(i-1)/2})`, the limit of `R_i^alpha` at `alpha = 0`
/// in units of `R_i`.
pub fn radon_limit_constant(i: usize) -> f64 {
    let k = i as f64;
    unit_sphere_area(k) / (2.0 * PI.powf((k - 1.0) / 2.0))
}

/// Funk-Hecke multiplier of `M^alpha` on degree-`j` harmonics:
/// `(-1)^{j/2} Gamma((j + 1 - alpha)/2) / Gamma((j + N - 1 + alpha)/2)`.
///
/// Odd degrees give zero because the kernel is even.
pub fn funk_hecke_multiplier(dim: usize, alpha: f64, j: usize) -> Result<f64> {
    check_cosine_alpha(alpha)?;
    if j % 2 == 1 {
        return Ok(0.0);
    }
    let sign = if (j / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let jf = j as f64;
    let n = dim as f64;
    Ok(sign * gamma((jf + 1.0 - alpha) / 2.0) * recip_gamma((jf + n - 1.0 + alpha) / 2.0))
}

/// The same multiplier computed from its defining integral,
/// `gamma_N(alpha) E[|t|^{alpha-1} P_j(t)]` over the slice density, for
/// `alpha > 0`. The kernel singularity is removed by `t = s^{1/alpha}`.
pub fn funk_hecke_multiplier_quadrature(dim: usize, alpha: f64, j: usize) -> Result<f64> {
    check_cosine_alpha(alpha)?;
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "the integral form needs alpha > 0, got {alpha}"
        )));
    }
    if j % 2 == 1 {
        return Ok(0.0);
    }
    let n = dim as f64;
    let q = (n - 3.0) / 2.0;
    // Normalizer of the slice density (1 - t^2)^q on [-1, 1].
    let beta = gamma(0.5) * gamma(q + 1.0) / gamma(q + 1.5);
    let inv = 1.0 / alpha;
    let est = TanhSinh::with_tol(1e-14).integrate(0.0, 1.0, |s, _, dr| {
        let t = s.powf(inv);
        // 1 - s^{2/alpha} without cancellation near s = 1.
        let gap = -((2.0 * inv) * (-dr).ln_1p()).exp_m1();
        gegenbauer(dim, j, t) * gap.powf(q)
    });
    Ok(cosine_constant(dim, alpha)? * 2.0 * inv * est.value / beta)
}

/// `M^alpha` applied to a finite harmonic sum by exact multipliers.
pub fn cosine_transform(f: &HarmonicSum, alpha: f64) -> Result<HarmonicSum> {
    check_cosine_alpha(alpha)?;
    let dim = f.dim();
    Ok(f.map_degrees(|j| funk_hecke_multiplier(dim, alpha, j).expect("alpha already checked")))
}

/// Multiplier of the probability-normalized Funk transform on degree `j`.
pub fn funk_multiplier(dim: usize, j: usize) -> f64 {
    gegenbauer(dim, j, 0.0)
}

/// Funk transform of a harmonic sum by exact multipliers.
pub fn funk_transform_harmonic(f: &HarmonicSum) -> HarmonicSum {
    let dim = f.dim();
    f.map_degrees(|j| funk_multiplier(dim, j))
}

/// Inverse Funk transform `c_{N-1} M^{2-N}` on harmonic sums.
pub fn inverse_funk(f: &HarmonicSum) -> Result<HarmonicSum> {
    let dim = f.dim();
    let back = cosine_transform(f, 2.0 - dim as f64)?;
    Ok(back.scaled(radon_limit_constant(dim - 1)))
}

/// Mean of `f` over the great subsphere `S^{N-1} cap u^perp`.
///
/// `quad` must be a rule on `S^{N-2}`.
pub fn funk_transform(f: &SphericalFunction, u: &[f64], quad: &QuadratureRule) -> Result<McEstimate> {
    check_unit("u", u)?;
    let basis = orthogonal_complement(u);
    radon_transform(f, &basis, quad)
}

/// Mean of `f` over `S^{N-1} cap xi`, where `xi` has orthonormal columns
/// spanning an `i`-dimensional subspace and `quad` lives on `S^{i-1}`.
pub fn radon_transform(f: &SphericalFunction, xi: &DMatrix<f64>, quad: &QuadratureRule) -> Result<McEstimate> {
    let dim = f.dim();
    let i = xi.ncols();
    if xi.nrows() != dim {
        return Err(Error::Dimension(format!(
            "subspace lives in R^{}, function on S^{}",
            xi.nrows(),
            dim - 1
        )));
    }
    if i < 1 || i >= dim {
        return Err(Error::InvalidArgument(format!(
            "subspace dimension i = {i} must satisfy 1 <= i <= N - 1"
        )));
    }
    if quad.dim() != i {
        return Err(Error::Dimension(format!(
            "quadrature is on S^{}, subspace sphere is S^{}",
            quad.dim() - 1,
            i - 1
        )));
    }
    Ok(quad.mean_on(xi, |x| f.eval(x)))
}

/// Resolution of the inner rules used by the deterministic generalized Radon transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectOptions {
    /// Resolution of the product rules on the two subspheres.
    pub resolution: usize,
    /// Relative tolerance of the outer double-exponential integral.
    pub rel_tol: f64,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions {
            resolution: 12,
            rel_tol: 1e-12,
        }
    }
}

/// Generalized cosine transform `R_i^alpha f` on the `i`-plane spanned by `xi`:
/// `gamma_{N,i}(alpha) E[|Pr_{xi^perp} theta|^{alpha + i - N} f(theta)]`.
///
/// Writes `theta = sqrt(s) a + sqrt(1 - s) b` with `a` on the sphere of
/// `xi^perp`, `b` on the sphere of `xi` and `s ~ Beta((N-i)/2, i/2)`. The
/// `s`-integral is done by double-exponential quadrature after `s = r^{2/alpha}`,
/// which absorbs the kernel singularity; the inner averages use
/// deterministic rules.
pub fn generalized_radon(f: &SphericalFunction, xi: &DMatrix<f64>, alpha: f64, opts: DirectOptions) -> Result<f64> {
    let dim = f.dim();
    let i = xi.ncols();
    if xi.nrows() != dim || i < 1 || i >= dim {
        return Err(Error::Dimension(format!(
            "need an i-plane in R^{dim} with 1 <= i <= N - 1, got {}x{}",
            xi.nrows(),
            i
        )));
    }
    if alpha <= 0.0 {
        return Err(Error::ExcludedParameter(format!(
            "the direct generalized cosine transform needs alpha > 0, got {alpha}"
        )));
    }
    let constant = radon_constant(dim, i, alpha)?;
    let perp = complete_basis(xi, PIVOT_TOL);
    let rule_perp = SphereRule::design(dim - i, opts.resolution)?;
    let rule_xi = SphereRule::design(i, opts.resolution)?;
    let p = (dim - i) as f64 / 2.0;
    let q = i as f64 / 2.0;
    let beta = gamma(p) * gamma(q) / gamma(p + q);
    let perp_pts: Vec<Vec<f64>> = rule_perp.points().map(|a| crate::sphere::mat_vec(&perp, a)).collect();
    let xi_pts: Vec<Vec<f64>> = rule_xi.points().map(|b| crate::sphere::mat_vec(xi, b)).collect();
    let inner = |s: f64| -> f64 {
        let (ra, rb) = (s.sqrt(), (1.0 - s).max(0.0).sqrt());
        let mut x = vec![0.0; dim];
        let mut acc = 0.0;
        for (a, wa) in perp_pts.iter().zip(rule_perp.weights()) {
            for (b, wb) in xi_pts.iter().zip(rule_xi.weights()) {
                for k in 0..dim {
                    x[k] = ra * a[k] + rb * b[k];
                }
                acc += wa * wb * f.eval(&x);
            }
        }
        acc
    };
    // E[s^{(alpha+i-N)/2} g(s)] = (1/B) int s^{alpha/2 - 1} (1-s)^{q-1} g(s) ds
    //                          = (2 / (alpha B)) int (1 - r^{2/alpha})^{q-1} g(r^{2/alpha}) dr.
    let expo = 2.0 / alpha;
    let est = TanhSinh::with_tol(opts.rel_tol).integrate(0.0, 1.0, |r, _, dr| {
        let s = r.powf(expo);
        let gap = -(expo * (-dr).ln_1p()).exp_m1();
        gap.powf(q - 1.0) * inner(s)
    });
    Ok(constant * expo * est.value / beta)
}

/// `(M^alpha f)(u)` for `alpha > 0` by direct integration.
pub fn cosine_transform_direct(f: &SphericalFunction, alpha: f64, u: &[f64], opts: DirectOptions) -> Result<f64> {
    check_cosine_alpha(alpha)?;
    check_unit("u", u)?;
    let xi = orthogonal_complement(u);
    generalized_radon(f, &xi, alpha, opts)
}

/// `(E_lambda f)(x) = |x|^lambda f(x / |x|)`.
pub fn homogeneous_extend(f: &SphericalFunction, lambda: f64) -> Evaluator {
    let f = f.clone();
    Arc::new(move |x: &[f64]| {
        let r = crate::sphere::norm(x);
        if r == 0.0 {
            return if lambda > 0.0 { 0.0 } else { f64::NAN };
        }
        let u: Vec<f64> = x.iter().map(|v| v / r).collect();
        r.powf(lambda) * f.eval(&u)
    })
}

/// Rejects `m` when `2m` lies in `N - d, N - d + 2, ...`.
pub fn check_riesz_order(dim: usize, d: usize, m: usize) -> Result<()> {
    let start = dim as f64 - d as f64;
    if near_arithmetic_progression(2.0 * m as f64, start, 0.5) {
        return Err(Error::ExcludedParameter(format!(
            "m = {m} is excluded for N = {dim}, d = {d}: need 2m != N-d, N-d+2, ..."
        )));
    }
    Ok(())
}

/// Eigenvalue of `D_m` on `E_{-d}` of a degree-`j` harmonic:
/// `2^{-2m} prod_{k<m} -[(a-2k)(a-2k+N-2) - j(j+N-2)]` with `a = -d`.
pub fn riesz_multiplier(dim: usize, d: usize, m: usize, j: usize) -> f64 {
    let n = dim as f64;
    let a = -(d as f64);
    let jf = j as f64;
    let mut out = 1.0;
    for k in 0..m {
        let ak = a - 2.0 * k as f64;
        out *= -(ak * (ak + n - 2.0) - jf * (jf + n - 2.0)) / 4.0;
    }
    out
}

/// `D_m` on a harmonic sum, by the radial-Laplacian eigenrelation.
pub fn riesz_dm_harmonic(f: &HarmonicSum, d: usize, m: usize) -> Result<HarmonicSum> {
    let dim = f.dim();
    check_riesz_order(dim, d, m)?;
    Ok(f.map_degrees(|j| riesz_multiplier(dim, d, m, j)))
}

/// `(D_m f)(theta) = 2^{-2m} [(-Delta)^m E_{-d} f](theta)`.
///
/// Harmonic sums use the exact eigenrelation; other inputs use nested
/// central differences of the homogeneous extension with one Richardson step
/// between `h = 1e-2` and `h = 5e-3`.
pub fn riesz_dm(f: &SphericalFunction, d: usize, m: usize, theta: &[f64]) -> Result<f64> {
    let dim = f.dim();
    check_riesz_order(dim, d, m)?;
    check_unit("theta", theta)?;
    if let Some(h) = f.as_harmonic() {
        return Ok(riesz_dm_harmonic(h, d, m)?.eval(theta));
    }
    Ok(riesz_dm_finite_difference(f, d, m, theta))
}

/// Finite-difference `D_m`, exposed for cross-checks of the exact route.
pub fn riesz_dm_finite_difference(f: &SphericalFunction, d: usize, m: usize, theta: &[f64]) -> f64 {
    let ext = homogeneous_extend(f, -(d as f64));
    let at = |h: f64| neg_laplacian_power(&*ext, theta, m, h) / 4f64.powi(m as i32);
    (4.0 * at(5e-3) - at(1e-2)) / 3.0
}

fn neg_laplacian_power(g: &dyn Fn(&[f64]) -> f64, x: &[f64], m: usize, h: f64) -> f64 {
    if m == 0 {
        return g(x);
    }
    let mut y = x.to_vec();
    let centre = neg_laplacian_power(g, &y, m - 1, h);
    let mut acc = 0.0;
    for i in 0..x.len() {
        let orig = y[i];
        y[i] = orig + h;
        let plus = neg_laplacian_power(g, &y, m - 1, h);
        y[i] = orig - h;
        let minus = neg_laplacian_power(g, &y, m - 1, h);
        y[i] = orig;
        acc += plus + minus - 2.0 * centre;
    }
    -acc / (h * h)
}

/// Funk-Hecke multipliers `m_j(alpha)` for `j = 0..=max_degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierTable {
    pub dim: usize,
    pub alpha: f64,
    pub values: Vec<(usize, f64)>,
}

impl MultiplierTable {
    /// Even degrees only when `even_only`.
    pub fn new(dim: usize, alpha: f64, max_degree: usize, even_only: bool) -> Result<Self> {
        let step = if even_only { 2 } else { 1 };
        let values = (0..=max_degree)
            .step_by(step)
            .map(|j| Ok((j, funk_hecke_multiplier(dim, alpha, j)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiplierTable { dim, alpha, values })
    }

    /// Largest `|m_j(alpha) m_j(2 - N - alpha) - 1|` over the stored degrees.
    pub fn reciprocity_defect(&self) -> Result<f64> {
        let partner = 2.0 - self.dim as f64 - self.alpha;
        let mut worst: f64 = 0.0;
        for &(j, m) in &self.values {
            if j % 2 == 1 {
                continue;
            }
            let other = funk_hecke_multiplier(self.dim, partner, j)?;
            worst = worst.max((m * other - 1.0).abs());
        }
        Ok(worst)
    }

    /// Text form with one `N,alpha,j,value` record per line after a header.
    pub fn to_text(&self) -> String {
        let mut out = String::from("N,alpha,j,multiplier\n");
        for &(j, m) in &self.values {
            let _ = writeln!(out, "{},{:.17e},{},{:.17e}", self.dim, self.alpha, j, m);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut alpha = None;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("line {}: expected N,alpha,j,multiplier", lineno + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            let n: usize = fields[0].trim().parse().map_err(|_| bad())?;
            let a: f64 = fields[1].trim().parse().map_err(|_| bad())?;
            let j: usize = fields[2].trim().parse().map_err(|_| bad())?;
            let m: f64 = fields[3].trim().parse().map_err(|_| bad())?;
            if *dim.get_or_insert(n) != n || *alpha.get_or_insert(a) != a {
                return Err(Error::Parse(format!(
                    "line {}: a table holds a single (N, alpha) pair",
                    lineno + 1
                )));
            }
            values.push((j, m));
        }
        match (dim, alpha) {
            (Some(dim), Some(alpha)) => Ok(MultiplierTable { dim, alpha, values }),
            _ => Err(Error::Parse("multiplier table is empty".into())),
        }
    }
}
