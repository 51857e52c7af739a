//! Central sections `S_K(theta) = vol_{N-d}(K cap H_theta)`, shifted radial
//! functions, weighted section functions `A_{i,beta}(t, xi)` and the
//! identities tying them to cosine transforms.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::algebra::{complete_basis, SectionFrame, PIVOT_TOL};
use crate::bodies::{gauge, StarBody};
use crate::error::{Error, Result};
use crate::quadrature::{GaussRule, TanhSinh};
use crate::special::{gamma, unit_sphere_area};
use crate::sphere::{sphere_quadrature, QuadratureKind, QuadratureRule, SphereRule, MAX_PRODUCT_DIM};
use crate::transforms::cosine_transform;

/// A value with its Monte Carlo standard error (zero for deterministic rules).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SectionEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// Everything needed for one central section.
#[derive(Debug, Clone, Copy)]
pub struct SectionRequest<'a> {
    pub body: &'a StarBody,
    pub frame: &'a SectionFrame,
    /// Rule on `S^{N-d-1}`.
    pub quad: &'a QuadratureRule,
}

fn section_dims(body: &StarBody, frame: &SectionFrame) -> Result<(usize, usize)> {
    let dim = body.dim();
    if frame.basis_h.nrows() != dim {
        return Err(Error::Dimension(format!(
            "frame lives in R^{}, body in R^{dim}",
            frame.basis_h.nrows()
        )));
    }
    let k = frame.basis_h.ncols();
    if k == 0 {
        return Err(Error::InvalidArgument("the section subspace is trivial".into()));
    }
    Ok((dim, k))
}

/// `vol_{N-d}(K cap H_theta) = (sigma_{N-d-1} / (N-d)) E_v[rho(v)^{N-d}]`
/// with `v` uniform on the unit sphere of `H_theta`.
pub fn section_volume(req: SectionRequest<'_>) -> Result<SectionEstimate> {
    let (_, k) = section_dims(req.body, req.frame)?;
    if req.quad.dim() != k {
        return Err(Error::Dimension(format!(
            "quadrature lives on S^{}, section sphere is S^{}",
            req.quad.dim() - 1,
            k - 1
        )));
    }
    let scale = unit_sphere_area(k as f64) / k as f64;
    let kp = k as i32;
    let est = req.quad.mean_on(&req.frame.basis_h, |v| req.body.rho(v).powi(kp));
    Ok(SectionEstimate {
        value: scale * est.mean,
        std_err: scale * est.std_err,
    })
}

/// Section volume of a profile body by reduction to principal angles.
///
/// If `rho` depends only on `s = |Pr_F theta|^2`, then on the unit sphere of
/// `H` we have `s = sum_i sigma_i^2 y_i^2`, where `sigma_i` are the cosines
/// of the principal angles between `F` and `H` and `y` are coordinates in
/// the matching singular basis. The leading `m` coordinates are `sqrt(u) w`
/// with `u ~ Beta(m/2, (k-m)/2)` and `w` uniform on `S^{m-1}`, which leaves a
/// low-dimensional deterministic integral.
pub fn section_volume_profile(body: &StarBody, basis_h: &DMatrix<f64>, resolution: usize) -> Result<f64> {
    let fiber = body
        .profile_fiber()
        .ok_or_else(|| Error::Unsupported("body has no profile structure".into()))?;
    let k = basis_h.ncols();
    let cross = fiber.basis().transpose() * basis_h;
    let svd = cross.svd(false, false);
    let mut sig2: Vec<f64> = svd.singular_values.iter().map(|s| (s * s).min(1.0)).collect();
    sig2.sort_by(|a, b| b.total_cmp(a));
    let m = sig2.len().min(k);
    let kp = k as i32;
    let g = |s: f64| body.profile_radial(s).expect("profile checked").powi(kp);
    let res = resolution.max(2);
    let mean = if m == 0 {
        g(0.0)
    } else {
        let w_rule = SphereRule::design(m, res)?;
        let shape = |w: &[f64]| -> f64 { w.iter().zip(&sig2).map(|(x, s)| s * x * x).sum() };
        if m == k {
            w_rule.points().zip(w_rule.weights()).map(|(w, wt)| wt * g(shape(w))).sum()
        } else {
            let u_rule = GaussRule::beta(res, m as f64 / 2.0, (k - m) as f64 / 2.0);
            let mut acc = 0.0;
            for (w, wt) in w_rule.points().zip(w_rule.weights()) {
                let q = shape(w);
                for (&u, &uw) in u_rule.nodes.iter().zip(&u_rule.weights) {
                    acc += wt * uw * g(u * q);
                }
            }
            acc
        }
    };
    Ok(unit_sphere_area(k as f64) / k as f64 * mean)
}

/// How sections are integrated in scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionMethod {
    /// Principal-angle reduction for profile bodies, otherwise a product
    /// rule when the section sphere allows it, otherwise Monte Carlo.
    Auto {
        resolution: usize,
        samples: usize,
        seed: u64,
    },
    /// Always this kind of rule on `S^{N-d-1}`.
    Rule(QuadratureKind),
}

impl Default for SectionMethod {
    fn default() -> Self {
        SectionMethod::Auto {
            resolution: 24,
            samples: 200_000,
            seed: 0,
        }
    }
}

/// Section volume by the chosen method.
pub fn section_at(body: &StarBody, frame: &SectionFrame, method: SectionMethod) -> Result<SectionEstimate> {
    let (_, k) = section_dims(body, frame)?;
    let kind = match method {
        SectionMethod::Auto { resolution, .. } if body.profile_fiber().is_some() => {
            return Ok(SectionEstimate {
                value: section_volume_profile(body, &frame.basis_h, resolution)?,
                std_err: 0.0,
            });
        }
        SectionMethod::Auto { resolution, .. } if k <= MAX_PRODUCT_DIM => QuadratureKind::Product { resolution },
        SectionMethod::Auto { samples, seed, .. } => QuadratureKind::MonteCarlo { samples, seed },
        SectionMethod::Rule(kind) => kind,
    };
    let quad = sphere_quadrature(k, kind)?;
    section_volume(SectionRequest { body, frame, quad: &quad })
}

/// `pi^{N/2 - d} sigma_{d-1} / (N - d)`, the factor between the section
/// function and `M^{1-d} rho^{N-d}`.
pub fn section_constant(dim: usize, d: usize) -> f64 {
    let (n, df) = (dim as f64, d as f64);
    PI.powf(n / 2.0 - df) * unit_sphere_area(df) / (n - df)
}

/// Both sides of the section identity at one `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub direct: SectionEstimate,
    pub transform: f64,
    pub residual: f64,
}

/// Compares the section volume with `c (M^{1-d} rho^{N-d})(theta)`.
///
/// `rho^{N-d}` must be available as an exact harmonic sum when `d >= 2`;
/// for `d = 1` a projection to degree `max_degree` is accepted.
pub fn section_identity_check(
    body: &StarBody,
    frame: &SectionFrame,
    quad: &QuadratureRule,
    max_degree: usize,
) -> Result<IdentityResidual> {
    let (dim, k) = section_dims(body, frame)?;
    let d = dim - k;
    let (sum, err) = body.power_sum(k as f64, max_degree)?;
    if d >= 2 && err != 0.0 {
        return Err(Error::Unsupported(format!(
            "for d = {d} the identity needs rho^{k} as an exact harmonic sum"
        )));
    }
    let direct = section_volume(SectionRequest { body, frame, quad })?;
    let theta: Vec<f64> = frame.theta.iter().copied().collect();
    let transform = section_constant(dim, d) * cosine_transform(&sum, 1.0 - d as f64)?.eval(&theta);
    Ok(IdentityResidual {
        direct,
        transform,
        residual: (direct.value - transform).abs(),
    })
}

/// Bisection and secant tolerance for boundary crossings.
const ROOT_REL_TOL: f64 = 1e-12;

fn ray_gauge(body: &StarBody, z: &[f64], v: &[f64], r: f64) -> f64 {
    let x: Vec<f64> = z.iter().zip(v).map(|(a, b)| a + r * b).collect();
    gauge(body, &x)
}

/// Root of `gauge(z + r v) = 1` in `[lo, hi]`, where the gauge is below one
/// at `lo` and above one at `hi` (or the reverse when `rising` is false).
fn boundary_crossing(body: &StarBody, z: &[f64], v: &[f64], mut lo: f64, mut hi: f64, rising: bool) -> f64 {
    let f = |r: f64| {
        let g = ray_gauge(body, z, v, r) - 1.0;
        if rising {
            g
        } else {
            -g
        }
    };
    while hi - lo > ROOT_REL_TOL * hi.abs().max(1e-300) {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Secant polish on the final bracket.
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..3 {
        if fb == fa {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        if !(c.is_finite()) || c < lo - (hi - lo) || c > hi + (hi - lo) {
            break;
        }
        a = b;
        fa = fb;
        b = c;
        fb = f(b);
    }
    if (lo..=hi).contains(&b) || (b - 0.5 * (lo + hi)).abs() <= (hi - lo) {
        b
    } else {
        0.5 * (lo + hi)
    }
}

fn ray_bound(body: &StarBody, z: &[f64], v: &[f64]) -> f64 {
    let znorm = crate::sphere::norm(z);
    let mut hi = 2.0 * body.radial_bounds().1 + znorm;
    while ray_gauge(body, z, v, hi) <= 1.0 {
        hi *= 2.0;
    }
    hi
}

/// Distance from the interior point `z` to the boundary in direction `v`.
pub fn shifted_radial(body: &StarBody, z: &[f64], v: &[f64]) -> Result<f64> {
    if z.len() != body.dim() || v.len() != body.dim() {
        return Err(Error::Dimension("point and direction must live in R^N".into()));
    }
    crate::algebra::check_unit("v", v)?;
    let g0 = gauge(body, z);
    if g0 >= 1.0 {
        return Err(Error::NotInterior(g0));
    }
    let hi = ray_bound(body, z, v);
    Ok(boundary_crossing(body, z, v, 0.0, hi, true))
}

/// The interval `{r >= 0 : z + r v in K}` for a convex body and any `z`,
/// or `None` when the ray misses the body.
pub fn chord_interval(body: &StarBody, z: &[f64], v: &[f64]) -> Option<(f64, f64)> {
    let hi = ray_bound(body, z, v);
    if gauge(body, z) < 1.0 {
        return Some((0.0, boundary_crossing(body, z, v, 0.0, hi, true)));
    }
    // The gauge along the ray is convex; locate its minimum first.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (ray_gauge(body, z, v, c), ray_gauge(body, z, v, d));
    for _ in 0..90 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ray_gauge(body, z, v, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ray_gauge(body, z, v, d);
        }
    }
    let best = 0.5 * (a + b);
    if ray_gauge(body, z, v, best) >= 1.0 {
        return None;
    }
    let enter = boundary_crossing(body, z, v, 0.0, best, false);
    let leave = boundary_crossing(body, z, v, best, hi, true);
    Some((enter, leave))
}

/// Everything needed for one value of `A_{i,beta}(t, xi)`.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSectionRequest<'a> {
    pub body: &'a StarBody,
    /// `N x i` orthonormal basis of `xi`.
    pub xi: &'a DMatrix<f64>,
    pub beta: f64,
    pub t: f64,
    /// Rule on the sphere of `xi^perp`, dimension `N - i`.
    pub outer: &'a QuadratureRule,
    /// Rule on the sphere of `xi`, dimension `i`.
    pub middle: &'a QuadratureRule,
}

/// Inscribed radius used for the `|t| < r_K` guard: the smallest sampled
/// radial value less one percent.
pub fn inscribed_radius(body: &StarBody) -> f64 {
    0.99 * body.radial_bounds().0
}

/// `A_{i,beta}(t, xi)`: the mean over unit `u` in `xi^perp` of the
/// `|x|^beta`-weighted volume of `K cap (xi + t u)`.
pub fn weighted_section(req: WeightedSectionRequest<'_>) -> Result<SectionEstimate> {
    let i = req.xi.ncols() as f64;
    if !(req.beta > -i) {
        return Err(Error::ExcludedParameter(format!(
            "beta = {} must exceed -i = {}",
            req.beta, -i
        )));
    }
    let r_k = inscribed_radius(req.body);
    if req.t.abs() >= r_k {
        return Err(Error::InvalidArgument(format!(
            "|t| = {} must stay below the inscribed radius {r_k}",
            req.t.abs()
        )));
    }
    weighted_section_unchecked(req)
}

/// `a^beta(t) = int_{r0}^{r1} r^{i-1} (r^2 + t^2)^{beta/2} dr`.
fn radial_moment(i: f64, beta: f64, t: f64, r0: f64, r1: f64) -> f64 {
    if r1 <= r0 {
        return 0.0;
    }
    if t == 0.0 {
        let e = i + beta;
        return (r1.powf(e) - r0.powf(e)) / e;
    }
    let t2 = t * t;
    TanhSinh::with_tol(1e-13)
        .integrate(r0, r1, |r, _, _| r.powf(i - 1.0) * (r * r + t2).powf(beta / 2.0))
        .value
}

/// [`weighted_section`] without the inscribed-radius guard. Planes that miss
/// the interior point `t u` are integrated along chords, which needs `K`
/// convex.
pub fn weighted_section_unchecked(req: WeightedSectionRequest<'_>) -> Result<SectionEstimate> {
    let dim = req.body.dim();
    let i = req.xi.ncols();
    if req.xi.nrows() != dim || i == 0 || i >= dim {
        return Err(Error::Dimension(format!(
            "xi must be an i-plane in R^{dim} with 1 <= i < N"
        )));
    }
    if req.outer.dim() != dim - i || req.middle.dim() != i {
        return Err(Error::Dimension(format!(
            "need rules on S^{} and S^{}",
            dim - i - 1,
            i - 1
        )));
    }
    let perp = complete_basis(req.xi, PIVOT_TOL);
    let fi = i as f64;
    let sphere = unit_sphere_area(fi);
    let (beta, t) = (req.beta, req.t);
    let outer = req.outer.mean_on(&perp, |u| {
        let z: Vec<f64> = u.iter().map(|x| t * x).collect();
        let inner = req.middle.mean_on(req.xi, |v| match chord_interval(req.body, &z, v) {
            Some((r0, r1)) => radial_moment(fi, beta, t, r0, r1),
            None => 0.0,
        });
        sphere * inner.mean
    });
    Ok(SectionEstimate {
        value: outer.mean,
        std_err: outer.std_err,
    })
}

/// Outcome of a Brunn-type monotonicity scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BrunnReport {
    pub at_zero: SectionEstimate,
    /// `(t, A(t), A(0) - A(t))` per grid point.
    pub scan: Vec<(f64, SectionEstimate, f64)>,
    pub worst_margin: f64,
    /// Grid points where `A(t)` exceeds `A(0)` by more than three standard
    /// errors (or a relative `1e-10` for deterministic rules).
    pub violations: usize,
}

/// Checks `A_{i,beta}(t, xi) <= A_{i,beta}(0, xi)` on `t_grid`.
/// The body is assumed convex.
pub fn brunn_check(
    body: &StarBody,
    xi: &DMatrix<f64>,
    beta: f64,
    t_grid: &[f64],
    outer: &QuadratureRule,
    middle: &QuadratureRule,
) -> Result<BrunnReport> {
    let i = xi.ncols() as f64;
    if !(beta > -i && beta <= 0.0) {
        return Err(Error::ExcludedParameter(format!(
            "the monotone bound needs -i < beta <= 0, got beta = {beta} with i = {i}"
        )));
    }
    let at = |t: f64| {
        weighted_section(WeightedSectionRequest {
            body,
            xi,
            beta,
            t,
            outer,
            middle,
        })
    };
    let zero = at(0.0)?;
    let mut scan = Vec::with_capacity(t_grid.len());
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for &t in t_grid {
        let a = at(t)?;
        let margin = zero.value - a.value;
        let sigma = (zero.std_err.powi(2) + a.std_err.powi(2)).sqrt();
        let tol = (3.0 * sigma).max(1e-10 * zero.value.abs());
        if margin < -tol {
            violations += 1;
        }
        worst = worst.min(margin);
        scan.push((t, a, margin));
    }
    Ok(BrunnReport {
        at_zero: zero,
        scan,
        worst_margin: worst,
        violations,
    })
}

/// Which representation of `(M^{alpha+1-N} rho^{alpha+beta})(theta)` through
/// weighted sections of `H_theta` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KryaCase {
    /// `alpha > N - d`: a Mellin-type integral of `A(t)`.
    PositiveAlpha,
    /// `alpha = N - d`: the value `A(0)`.
    Boundary,
    /// `alpha = N - d - 2`: the second derivative `A''(0)`.
    SecondDerivative,
}

/// `C = pi^{(N-d)/2} / ((alpha + beta) Gamma((N - alpha)/2))`, the constant
/// in front of the transform side.
pub fn krya_constant(dim: usize, d: usize, alpha: f64, beta: f64) -> f64 {
    let n = dim as f64;
    PI.powf((n - d as f64) / 2.0) / ((alpha + beta) * gamma((n - alpha) / 2.0))
}

/// `C_1 = pi^{(N-d)/2} / ((beta + N - d - 2) Gamma((d + 2)/2))`.
pub fn krya_second_constant(dim: usize, d: usize, beta: f64) -> f64 {
    let k = (dim - d) as f64;
    PI.powf(k / 2.0) / ((beta + k - 2.0) * gamma((d as f64 + 2.0) / 2.0))
}

/// Quadrature settings for [`krya_identity_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KryaOptions {
    /// Resolution of the rules on the fiber sphere and on `H_theta`.
    pub resolution: usize,
    /// Gauss-Jacobi nodes for the `t` integral.
    pub t_nodes: usize,
    /// Harmonic degree cap when `rho^{alpha+beta}` must be projected.
    pub max_degree: usize,
}

impl Default for KryaOptions {
    fn default() -> Self {
        KryaOptions {
            resolution: 16,
            t_nodes: 40,
            max_degree: 12,
        }
    }
}

/// Both sides of a weighted-section identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KryaResidual {
    pub weighted_side: f64,
    pub transform_side: f64,
    pub residual: f64,
}

/// Evaluates `(M^{alpha+1-N} rho^{alpha+beta})(theta)` from weighted
/// sections of `H_theta` and from multipliers, and reports the difference.
pub fn krya_identity_check(
    body: &StarBody,
    frame: &SectionFrame,
    alpha: f64,
    beta: f64,
    case: KryaCase,
    opts: KryaOptions,
) -> Result<KryaResidual> {
    let (dim, k) = section_dims(body, frame)?;
    let d = dim - k;
    let n = dim as f64;
    let kf = k as f64;
    let expected_alpha = match case {
        KryaCase::PositiveAlpha => None,
        KryaCase::Boundary => Some(kf),
        KryaCase::SecondDerivative => Some(kf - 2.0),
    };
    if let Some(a) = expected_alpha {
        if (alpha - a).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "this case fixes alpha = {a}, got {alpha}"
            )));
        }
    }
    match case {
        KryaCase::PositiveAlpha if !(alpha > kf && alpha < n && beta > -kf) => {
            return Err(Error::ExcludedParameter(format!(
                "the integral case needs N - d < alpha < N and beta > d - N, got alpha = {alpha}, beta = {beta}"
            )))
        }
        KryaCase::Boundary if !(beta > -kf) => {
            return Err(Error::ExcludedParameter(format!(
                "the boundary case needs beta > d - N, got {beta}"
            )))
        }
        KryaCase::SecondDerivative if !(beta > 2.0 - kf && beta <= 0.0) => {
            return Err(Error::ExcludedParameter(format!(
                "the second-derivative case needs 2 + d - N < beta <= 0, got {beta}"
            )))
        }
        _ => {}
    }
    let outer = sphere_quadrature(d, QuadratureKind::Design { resolution: opts.resolution })?;
    let middle = sphere_quadrature(k, QuadratureKind::Design { resolution: opts.resolution })?;
    let a_of = |t: f64| -> Result<f64> {
        Ok(weighted_section_unchecked(WeightedSectionRequest {
            body,
            xi: &frame.basis_h,
            beta,
            t,
            outer: &outer,
            middle: &middle,
        })?
        .value)
    };
    let weighted_side = match case {
        KryaCase::PositiveAlpha => {
            let a = alpha + d as f64 - n;
            let top = body.radial_bounds().1;
            // t^{a-1} on [0, top] is the Jacobi weight (1 + x)^{a-1} after t = top (1 + x) / 2.
            let rule = GaussRule::jacobi(opts.t_nodes, 0.0, a - 1.0);
            let mut acc = 0.0;
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                acc += w * a_of(0.5 * top * (1.0 + x))?;
            }
            let integral = acc * (0.5 * top).powf(a);
            integral / (gamma(a / 2.0) * krya_constant(dim, d, alpha, beta))
        }
        KryaCase::Boundary => a_of(0.0)? / (2.0 * krya_constant(dim, d, alpha, beta)),
        KryaCase::SecondDerivative => {
            let centre = a_of(0.0)?;
            let second = |h: f64| -> Result<f64> { Ok((a_of(h)? - 2.0 * centre + a_of(-h)?) / (h * h)) };
            let rich = (4.0 * second(0.01)? - second(0.02)?) / 3.0;
            -rich / (4.0 * krya_second_constant(dim, d, beta))
        }
    };
    let (sum, _) = body.power_sum(alpha + beta, opts.max_degree)?;
    let theta: Vec<f64> = frame.theta.iter().copied().collect();
    let transform_side = cosine_transform(&sum, alpha + 1.0 - n)?.eval(&theta);
    Ok(KryaResidual {
        weighted_side,
        transform_side,
        residual: (weighted_side - transform_side).abs(),
    })
}

/// Rule on the `S^{N-d-1}` section sphere exact for harmonic data of degree
/// `< 2 * resolution`.
pub fn section_rule(dim: usize, d: usize, resolution: usize) -> Result<QuadratureRule> {
    sphere_quadrature(dim - d, QuadratureKind::Design { resolution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{group_element, section_frame, Chirality, VectorFieldSystem};
    use crate::bodies::{ball_block_lp, perturbed_body};
    use crate::harmonic::{Component, Fiber, HarmonicSum, SphericalFunction};
    use crate::sphere::random_unit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn frame(d: usize, n: usize, theta: &[f64]) -> SectionFrame {
        let sys = VectorFieldSystem::new(d, Chirality::Left).unwrap();
        section_frame(&sys, n, theta).unwrap()
    }

    fn design(dim: usize, res: usize) -> QuadratureRule {
        sphere_quadrature(dim, QuadratureKind::Design { resolution: res }).unwrap()
    }

    fn unit(v: &[f64]) -> Vec<f64> {
        let r = crate::sphere::norm(v);
        v.iter().map(|x| x / r).collect()
    }

    /// Ball in `R^{dn}` perturbed by a fiber-zonal harmonic about `F_d(u)`.
    fn fiber_perturbed_ball(d: usize, n: usize, degree: usize, eps: f64, u: &[f64]) -> StarBody {
        let dim = d * n;
        let fiber = Arc::new(Fiber::new(frame(d, n, u).frame).unwrap());
        let comp = Component::fiber_zonal(degree, 1.0, fiber).unwrap();
        let phi = SphericalFunction::Harmonic(HarmonicSum::new(dim, vec![comp]));
        perturbed_body(&StarBody::ball(dim, 1.0).unwrap(), eps, &phi, d).unwrap()
    }

    #[test]
    fn ball_sections() {
        let ball3 = StarBody::ball(3, 1.0).unwrap();
        let f = frame(1, 3, &unit(&[1.0, 2.0, 2.0]));
        let s = section_volume(SectionRequest { body: &ball3, frame: &f, quad: &design(2, 4) }).unwrap();
        assert!((s.value - PI).abs() < 1e-13);

        let ball8 = StarBody::ball(8, 1.0).unwrap();
        let f8 = frame(4, 2, &unit(&[1.0, 0.0, 2.0, 0.0, -1.0, 0.5, 0.0, 1.0]));
        let s8 = section_volume(SectionRequest { body: &ball8, frame: &f8, quad: &design(4, 3) }).unwrap();
        assert!((s8.value - PI * PI / 2.0).abs() < 1e-12);

        let mc = sphere_quadrature(4, QuadratureKind::MonteCarlo { samples: 1000, seed: 1 }).unwrap();
        let mismatch = section_volume(SectionRequest { body: &ball3, frame: &f, quad: &mc });
        assert!(matches!(mismatch, Err(Error::Dimension(_))));
    }

    #[test]
    fn block_l4_section_against_polar_integral() {
        let body = ball_block_lp(2, 2, 4.0, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let theta = random_unit(&mut rng, 4);
            let f = frame(2, 2, &theta);
            // Brute force: half the integral of rho^2 around the circle of H.
            let steps = 20_000;
            let mut acc = 0.0;
            for s in 0..steps {
                let phi = 2.0 * PI * s as f64 / steps as f64;
                let v = f.embed_h(&[phi.cos(), phi.sin()]);
                acc += body.rho(&v).powi(2);
            }
            let oracle = 0.5 * acc * 2.0 * PI / steps as f64;
            let mc = sphere_quadrature(2, QuadratureKind::MonteCarlo { samples: 200_000, seed: 5 }).unwrap();
            let est = section_volume(SectionRequest { body: &body, frame: &f, quad: &mc }).unwrap();
            // H_theta is a complex line, so the section is a round disc and the
            // sample variance collapses to roundoff.
            assert!((est.value - oracle).abs() < 4.0 * est.std_err + 1e-11, "{} vs {oracle}", est.value);
            let det = section_volume(SectionRequest { body: &body, frame: &f, quad: &design(2, 40) }).unwrap();
            assert!((det.value - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn profile_fast_path_matches_rule() {
        let fiber = Fiber::coordinate(6, 2);
        let body = StarBody::fiber_profile(Arc::new(fiber), "ell4-like", |s: f64| (s * s + (1.0 - s).powi(2)).powf(-0.25)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [2usize, 4, 5] {
            let g = crate::sphere::random_rotation(&mut rng, 6);
            let basis = g.columns(0, k).into_owned();
            let fast = section_volume_profile(&body, &basis, 24).unwrap();
            let rule = SphereRule::design(k, 14).unwrap();
            let mean = rule.integrate_mapped(&basis, |v| body.rho(v).powi(k as i32));
            let slow = unit_sphere_area(k as f64) / k as f64 * mean;
            assert!((fast - slow).abs() < 1e-6 * slow, "k = {k}: {fast} vs {slow}");
        }
        let plain = StarBody::closed_form(3, "plain", |t: &[f64]| 1.0 + 0.1 * t[0] * t[0]).unwrap();
        assert!(section_volume_profile(&plain, &DMatrix::identity(3, 2), 8).is_err());
    }

    #[test]
    fn identity_on_balls_and_perturbations() {
        let ball3 = StarBody::ball(3, 1.0).unwrap();
        let f = frame(1, 3, &unit(&[0.3, -1.0, 0.2]));
        let r = section_identity_check(&ball3, &f, &design(2, 4), 8).unwrap();
        assert!(r.residual < 1e-10);
        assert!((r.transform - PI).abs() < 1e-10);

        // rho^3 = 1 - eps P_2 is a quadratic polynomial on S^3, so the design rule is exact.
        let axis = unit(&[1.0, 1.0, 0.0, 1.0]);
        let phi = SphericalFunction::Harmonic(HarmonicSum::new(4, vec![Component::zonal(2, 1.0, axis)]));
        let body = perturbed_body(&StarBody::ball(4, 1.0).unwrap(), 0.1, &phi, 1).unwrap();
        let f4 = frame(1, 4, &unit(&[0.2, 0.5, -0.7, 0.1]));
        let r4 = section_identity_check(&body, &f4, &design(3, 6), 8).unwrap();
        assert!(r4.residual < 1e-10, "{r4:?}");

        let g = fiber_perturbed_ball(2, 2, 4, 0.1, &unit(&[1.0, 0.0, 0.5, 0.5]));
        let f22 = frame(2, 2, &unit(&[0.1, 0.7, -0.3, 0.2]));
        let det = section_identity_check(&g, &f22, &design(2, 8), 8).unwrap();
        assert!(det.residual < 1e-10, "{det:?}");
        let mc = sphere_quadrature(2, QuadratureKind::MonteCarlo { samples: 100_000, seed: 9 }).unwrap();
        let noisy = section_identity_check(&g, &f22, &mc, 8).unwrap();
        assert!(noisy.residual < 3.0 * noisy.direct.std_err + 1e-12, "{noisy:?}");
    }

    #[test]
    fn identity_refuses_projected_data_for_d_two() {
        let body = ball_block_lp(2, 2, 4.0, false).unwrap();
        let f = frame(2, 2, &unit(&[1.0, 0.2, 0.3, 0.4]));
        assert!(section_identity_check(&body, &f, &design(2, 8), 8).is_err());
    }

    #[test]
    fn sections_scale_and_respect_the_group() {
        let g = fiber_perturbed_ball(2, 3, 2, 0.2, &unit(&[1.0, 0.0, 0.0, 1.0, 0.5, 0.0]));
        let theta = unit(&[0.3, 0.1, -0.4, 0.8, 0.2, 0.1]);
        let method = SectionMethod::Rule(QuadratureKind::Design { resolution: 6 });
        let base = section_at(&g, &frame(2, 3, &theta), method).unwrap().value;
        let big = section_at(&g.dilated(2.0).unwrap(), &frame(2, 3, &theta), method).unwrap().value;
        assert!((big - 16.0 * base).abs() < 1e-11 * big);

        let sys = VectorFieldSystem::new(2, Chirality::Left).unwrap();
        let rot = group_element(&sys, 3, &unit(&[0.6, -0.8])).unwrap();
        let moved = rot.apply(&theta);
        let again = section_at(&g, &frame(2, 3, &moved), method).unwrap().value;
        assert!((again - base).abs() < 1e-12 * base);

        let auto = section_at(&g, &frame(2, 3, &theta), SectionMethod::default()).unwrap().value;
        assert!((auto - base).abs() < 1e-9 * base);
    }

    #[test]
    fn shifted_radial_on_the_ball() {
        let ball = StarBody::ball(3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let z: Vec<f64> = random_unit(&mut rng, 3).iter().map(|x| 0.7 * x).collect();
            let v = random_unit(&mut rng, 3);
            let zv = crate::sphere::dot(&z, &v);
            let oracle = -zv + (1.0 - 0.49 + zv * zv).sqrt();
            let r = shifted_radial(&ball, &z, &v).unwrap();
            assert!((r - oracle).abs() < 1e-11);
            assert!(r <= 2.0 * ball.radial_bounds().1);
        }
        let l4 = ball_block_lp(3, 1, 4.0, false).unwrap();
        let v = unit(&[1.0, 2.0, -1.0]);
        assert!((shifted_radial(&l4, &[0.0; 3], &v).unwrap() - l4.rho(&v)).abs() < 1e-11);
        assert!(matches!(shifted_radial(&ball, &[1.0, 0.0, 0.0], &v), Err(Error::NotInterior(_))));
    }

    #[test]
    fn chords_from_outside() {
        let ball = StarBody::ball(3, 1.0).unwrap();
        let (a, b) = chord_interval(&ball, &[2.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]).unwrap();
        assert!((a - 1.0).abs() < 1e-10 && (b - 3.0).abs() < 1e-10);
        assert!(chord_interval(&ball, &[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).is_none());
        assert!(chord_interval(&ball, &[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).is_none());
    }

    fn weighted(body: &StarBody, xi: &DMatrix<f64>, beta: f64, t: f64, res: usize) -> Result<SectionEstimate> {
        let dim = body.dim();
        let i = xi.ncols();
        weighted_section(WeightedSectionRequest {
            body,
            xi,
            beta,
            t,
            outer: &design(dim - i, res),
            middle: &design(i, res),
        })
    }

    #[test]
    fn weighted_sections_of_the_ball() {
        let ball = StarBody::ball(3, 1.0).unwrap();
        let xi = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        for t in [0.0, 0.3, 0.6] {
            let a = weighted(&ball, &xi, 0.0, t, 12).unwrap().value;
            assert!((a - PI * (1.0 - t * t)).abs() < 1e-10, "t = {t}: {a}");
        }
        // |x|^beta over the unit disc at t = 0 is 2 pi / (2 + beta).
        let a = weighted(&ball, &xi, -0.5, 0.0, 12).unwrap().value;
        assert!((a - 2.0 * PI / 1.5).abs() < 1e-10);
        assert!(matches!(weighted(&ball, &xi, -2.0, 0.0, 8), Err(Error::ExcludedParameter(_))));
        assert!(weighted(&ball, &xi, 0.0, 0.995, 8).is_err());
    }

    #[test]
    fn weighted_section_reduces_and_is_even() {
        let body = fiber_perturbed_ball(1, 3, 2, 0.15, &unit(&[0.2, 0.4, 1.0]));
        let f = frame(1, 3, &unit(&[1.0, -0.5, 0.3]));
        let plain = section_volume(SectionRequest { body: &body, frame: &f, quad: &design(2, 24) }).unwrap();
        let a0 = weighted(&body, &f.basis_h, 0.0, 0.0, 24).unwrap();
        assert!((a0.value - plain.value).abs() < 1e-10);
        let h = 1e-3;
        let up = weighted(&body, &f.basis_h, -0.5, h, 16).unwrap().value;
        let down = weighted(&body, &f.basis_h, -0.5, -h, 16).unwrap().value;
        assert!(((up - down) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn brunn_bound() {
        let ball = StarBody::ball(3, 1.0).unwrap();
        let xi = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
        let (outer, middle) = (design(1, 4), design(2, 12));
        let report = brunn_check(&ball, &xi, 0.0, &grid, &outer, &middle).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.worst_margin > 0.0);

        let body = fiber_perturbed_ball(1, 3, 2, 0.2, &unit(&[0.5, 0.1, 1.0]));
        let grid: Vec<f64> = (1..8).map(|k| 0.1 * k as f64).filter(|t| *t < inscribed_radius(&body)).collect();
        let report = brunn_check(&body, &xi, -0.5, &grid, &outer, &middle).unwrap();
        assert_eq!(report.violations, 0, "{report:?}");
        assert!(brunn_check(&body, &xi, 0.5, &grid, &outer, &middle).is_err());
    }

    fn ball_frame(dim: usize) -> SectionFrame {
        let mut theta = vec![0.0; dim];
        theta[dim - 1] = 1.0;
        frame(1, dim, &theta)
    }

    #[test]
    fn weighted_identities_on_the_ball() {
        let ball = StarBody::ball(3, 1.0).unwrap();
        let f = ball_frame(3);
        let opts = KryaOptions::default();
        let pos = krya_identity_check(&ball, &f, 2.5, 0.0, KryaCase::PositiveAlpha, opts).unwrap();
        assert!((pos.transform_side - 4.0).abs() < 1e-12);
        assert!(pos.residual < 1e-4, "{pos:?}");

        let edge = krya_identity_check(&ball, &f, 2.0, 0.0, KryaCase::Boundary, opts).unwrap();
        assert!((edge.transform_side - PI.sqrt()).abs() < 1e-12);
        assert!(edge.residual < 1e-6, "{edge:?}");

        let ball4 = StarBody::ball(4, 1.0).unwrap();
        let second = krya_identity_check(&ball4, &ball_frame(4), 1.0, 0.0, KryaCase::SecondDerivative, opts).unwrap();
        assert!((second.transform_side - 0.5).abs() < 1e-12);
        assert!(second.residual < 1e-4, "{second:?}");

        assert!(krya_identity_check(&ball, &f, 1.5, 0.0, KryaCase::PositiveAlpha, opts).is_err());
        assert!(krya_identity_check(&ball, &f, 2.5, 0.0, KryaCase::Boundary, opts).is_err());
    }

    #[test]
    fn boundary_constant_matches_section_constant() {
        for (dim, d) in [(3, 1), (4, 2), (8, 4), (6, 2), (5, 1)] {
            let c = krya_constant(dim, d, (dim - d) as f64, 0.0);
            let sub = section_constant(dim, d);
            assert!((2.0 * c - sub).abs() < 1e-13 * sub, "N = {dim}, d = {d}");
        }
    }

    #[test]
    fn weighted_identity_on_a_perturbed_ball() {
        let body = fiber_perturbed_ball(1, 3, 2, 0.1, &unit(&[0.0, 0.3, 1.0]));
        let f = frame(1, 3, &unit(&[0.4, 0.2, 0.9]));
        let opts = KryaOptions { resolution: 20, ..KryaOptions::default() };
        let r = krya_identity_check(&body, &f, 2.0, -0.5, KryaCase::Boundary, opts).unwrap();
        assert!(r.residual < 1e-6 * r.transform_side.abs(), "{r:?}");
    }
}
