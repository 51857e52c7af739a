//! Busemann-Petty comparison engine: section-versus-volume verdicts,
//! positivity certificates, the perturbative counterexample search,
//! lambda-intersection-body sign tests and the `D_m` variant of the
//! comparison.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::{section_frame, Chirality, SectionFrame, VectorFieldSystem};
use crate::bodies::{
    convexity_check, perturbed_body, profile_convexity_margin, volume_pair, StarBody, SymmetryTag, Volume,
    VolumeOptions,
};
use crate::error::{Error, Result};
use crate::harmonic::{fiber_weight_rule, project_fiber, Component, Fiber, HarmonicSum, SphericalFunction};
use crate::sections::{section_constant, section_volume, section_volume_profile, SectionEstimate, SectionMethod, SectionRequest};
use crate::special::horner;
use crate::sphere::{halton_grid, random_unit, sphere_quadrature, QuadratureKind, QuadratureRule, MAX_PRODUCT_DIM};
use crate::transforms::{check_cosine_alpha, check_riesz_order, cosine_transform, funk_hecke_multiplier, riesz_dm_harmonic};

/// Size of the default low-discrepancy scanning grid.
pub const DEFAULT_GRID: usize = 4096;

/// Relative floor on error bars, so that exact rules still need a margin
/// well above roundoff before anything is claimed.
pub const SIGMA_FLOOR_REL: f64 = 1e-12;

/// Margins count as significant beyond this many standard errors.
pub const SIGNIFICANCE: f64 = 3.0;

/// Outcome of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// The data do not contradict the implication "smaller sections give
    /// smaller volume".
    Consistent,
    /// Every section of `K` is smaller than that of `L` and `K` has the
    /// larger volume, all beyond three standard errors.
    Counterexample,
    /// Some margin is too small to call either way.
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Counterexample => "counterexample",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// One grid direction of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMargin {
    pub index: usize,
    pub theta: Vec<f64>,
    pub s_k: SectionEstimate,
    pub s_l: SectionEstimate,
    /// `S_L - S_K`; negative values are violations of `S_K <= S_L`.
    pub margin: f64,
    /// Error bar of the margin, floored at [`SIGMA_FLOOR_REL`] times the
    /// section scale.
    pub sigma: f64,
}

/// Sections on a grid, volumes and the resulting verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub dim: usize,
    pub d: usize,
    pub rows: Vec<ThetaMargin>,
    /// Grid points where `S_K > S_L` by more than three error bars.
    pub violations: usize,
    pub worst_margin: f64,
    pub worst_index: usize,
    /// Smallest `margin / sigma` over the grid.
    pub min_z: f64,
    pub vol_k: Volume,
    pub vol_l: Volume,
    /// `vol(K) - vol(L)`; positive values reverse the volume ordering.
    pub vol_diff: f64,
    pub vol_sigma: f64,
    pub verdict: Verdict,
    pub seed: u64,
}

impl ComparisonReport {
    pub fn grid_size(&self) -> usize {
        self.rows.len()
    }

    /// `vol_diff / vol_sigma`.
    pub fn volume_z(&self) -> f64 {
        self.vol_diff / self.vol_sigma
    }

    fn assemble(dim: usize, d: usize, rows: Vec<ThetaMargin>, volumes: (Volume, Volume, Volume), seed: u64) -> Self {
        let (vol_k, vol_l, diff_lk) = volumes;
        let violations = rows.iter().filter(|r| r.margin < -SIGNIFICANCE * r.sigma).count();
        let (worst_index, worst_margin) = rows
            .iter()
            .map(|r| (r.index, r.margin))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let min_z = rows.iter().map(|r| r.margin / r.sigma).fold(f64::INFINITY, f64::min);
        let vol_diff = -diff_lk.value;
        let vol_sigma = sigma_floor(diff_lk.std_err, vol_k.value.abs().max(vol_l.value.abs()));
        let sections_ordered = rows.iter().all(|r| r.margin >= SIGNIFICANCE * r.sigma);
        let verdict = if violations > 0 || vol_diff <= 0.0 {
            Verdict::Consistent
        } else if sections_ordered && vol_diff >= SIGNIFICANCE * vol_sigma {
            Verdict::Counterexample
        } else {
            Verdict::Inconclusive
        };
        ComparisonReport {
            dim,
            d,
            rows,
            violations,
            worst_margin,
            worst_index,
            min_z,
            vol_k,
            vol_l,
            vol_diff,
            vol_sigma,
            verdict,
            seed,
        }
    }
}

fn sigma_floor(sigma: f64, scale: f64) -> f64 {
    sigma.max(SIGMA_FLOOR_REL * scale).max(f64::MIN_POSITIVE)
}

/// Integration settings for [`bp_compare`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompareOptions {
    pub section: SectionMethod,
    pub volume: VolumeOptions,
    /// Root seed, recorded in the report and used for any Monte Carlo.
    pub seed: u64,
}

impl CompareOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.volume.seed = seed;
        if let SectionMethod::Auto { seed: s, .. } = &mut self.section {
            *s = seed;
        }
        self
    }
}

/// Scanning grid of `count` points on `S^{dim-1}`.
pub fn theta_grid(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    halton_grid(dim, count, seed)
}

fn system_for(dim: usize, d: usize) -> Result<(VectorFieldSystem, usize)> {
    if d == 0 || !dim.is_multiple_of(d) {
        return Err(Error::Dimension(format!("N = {dim} is not a multiple of d = {d}")));
    }
    Ok((VectorFieldSystem::new(d, Chirality::Left)?, dim / d))
}

fn check_pair(k: &StarBody, l: &StarBody, d: usize) -> Result<()> {
    if k.dim() != l.dim() {
        return Err(Error::Dimension(format!(
            "K lives in R^{} and L in R^{}",
            k.dim(),
            l.dim()
        )));
    }
    if d == 0 || d >= k.dim() {
        return Err(Error::InvalidArgument(format!("need 1 <= d < N, got d = {d}")));
    }
    for tag in [k.symmetry(), l.symmetry()].into_iter().flatten() {
        if tag.d != d || tag.dim() != k.dim() {
            return Err(Error::Dimension(format!(
                "body is tagged with (d, n) = ({}, {}), the comparison uses d = {d} in R^{}",
                tag.d,
                tag.n,
                k.dim()
            )));
        }
    }
    if let (Some(a), Some(b)) = (k.symmetry(), l.symmetry()) {
        if a != b {
            return Err(Error::InvalidArgument("K and L carry different symmetry tags".into()));
        }
    }
    Ok(())
}

fn profile_pair(k: &StarBody, l: &StarBody, frame: &SectionFrame, resolution: usize) -> Result<(SectionEstimate, SectionEstimate)> {
    let one = |b: &StarBody| -> Result<SectionEstimate> {
        let fine = section_volume_profile(b, &frame.basis_h, resolution)?;
        let coarse = section_volume_profile(b, &frame.basis_h, resolution / 2 + 1)?;
        Ok(SectionEstimate {
            value: fine,
            std_err: (fine - coarse).abs(),
        })
    };
    Ok((one(k)?, one(l)?))
}

/// Sections of `K` and `L` at one frame and the error bar of `S_L - S_K`.
/// Monte Carlo rules share their sample points between the two bodies.
fn section_pair(
    k: &StarBody,
    l: &StarBody,
    frame: &SectionFrame,
    method: SectionMethod,
) -> Result<(SectionEstimate, SectionEstimate, f64)> {
    let dim_h = frame.basis_h.ncols();
    let kind = match method {
        SectionMethod::Auto { resolution, .. } if k.profile_fiber().is_some() && l.profile_fiber().is_some() => {
            let (a, b) = profile_pair(k, l, frame, resolution)?;
            return Ok((a, b, a.std_err.hypot(b.std_err)));
        }
        SectionMethod::Auto { resolution, .. } if dim_h <= MAX_PRODUCT_DIM => QuadratureKind::Design { resolution },
        SectionMethod::Auto { samples, seed, .. } => QuadratureKind::MonteCarlo { samples, seed },
        SectionMethod::Rule(kind) => kind,
    };
    match kind {
        QuadratureKind::MonteCarlo { samples, seed } => {
            let quad = sphere_quadrature(dim_h, kind)?;
            let QuadratureRule::MonteCarlo { mc, .. } = quad else {
                unreachable!("Monte Carlo kind builds a Monte Carlo rule")
            };
            debug_assert_eq!(mc.samples, samples);
            debug_assert_eq!(mc.seed, seed);
            let kp = dim_h as i32;
            let scale = crate::special::unit_sphere_area(dim_h as f64) / dim_h as f64;
            let big = frame.basis_h.nrows();
            let est = mc.estimate_many(dim_h, 3, |p, out| {
                let mut x = vec![0.0; big];
                for (c, &w) in p.iter().enumerate() {
                    for (o, b) in x.iter_mut().zip(frame.basis_h.column(c).iter()) {
                        *o += w * b;
                    }
                }
                let (a, b) = (k.rho(&x).powi(kp), l.rho(&x).powi(kp));
                out[0] = a;
                out[1] = b;
                out[2] = b - a;
            });
            let make = |i: usize| SectionEstimate {
                value: scale * est[i].mean,
                std_err: scale * est[i].std_err,
            };
            Ok((make(0), make(1), scale * est[2].std_err))
        }
        QuadratureKind::Product { resolution } | QuadratureKind::Design { resolution } => {
            let at = |res: usize| -> Result<(f64, f64)> {
                let quad = match kind {
                    QuadratureKind::Product { .. } => sphere_quadrature(dim_h, QuadratureKind::Product { resolution: res })?,
                    _ => sphere_quadrature(dim_h, QuadratureKind::Design { resolution: res })?,
                };
                let a = section_volume(SectionRequest { body: k, frame, quad: &quad })?.value;
                let b = section_volume(SectionRequest { body: l, frame, quad: &quad })?.value;
                Ok((a, b))
            };
            let (fa, fb) = at(resolution)?;
            let (ca, cb) = at(resolution / 2 + 1)?;
            let a = SectionEstimate {
                value: fa,
                std_err: (fa - ca).abs(),
            };
            let b = SectionEstimate {
                value: fb,
                std_err: (fb - cb).abs(),
            };
            Ok((a, b, ((fb - fa) - (cb - ca)).abs()))
        }
    }
}

/// Compares central sections of `K` and `L` on `grid` and their volumes.
///
/// The section subspaces are `H_theta`, the orthogonal complements of the
/// `d`-frames, so `d = 1` gives ordinary hyperplane sections.
pub fn bp_compare(k: &StarBody, l: &StarBody, d: usize, grid: &[Vec<f64>], opts: &CompareOptions) -> Result<ComparisonReport> {
    check_pair(k, l, d)?;
    let dim = k.dim();
    let (sys, n) = system_for(dim, d)?;
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(index, theta)| -> Result<ThetaMargin> {
            let frame = section_frame(&sys, n, theta)?;
            let (s_k, s_l, sigma) = section_pair(k, l, &frame, opts.section)?;
            Ok(ThetaMargin {
                index,
                theta: theta.clone(),
                s_k,
                s_l,
                margin: s_l.value - s_k.value,
                sigma: sigma_floor(sigma, s_k.value.abs().max(s_l.value.abs())),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let volumes = volume_pair(k, l, &opts.volume);
    Ok(ComparisonReport::assemble(dim, d, rows, volumes, opts.seed))
}

/// Minimum of a transformed function over a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub alpha: f64,
    pub minimum: f64,
    pub argmin: Vec<f64>,
    /// Truncation error of the harmonic expansion that was transformed
    /// (zero for exact harmonic data).
    pub truncation_error: f64,
    pub points: usize,
}

/// Grid plus, for profile bodies, a fine sweep of the meridian
/// `s -> sqrt(s) a + sqrt(1 - s) b`, which covers every value the scanned
/// function takes.
fn scan_points(body: &StarBody, grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut points = grid.to_vec();
    if let Some(fiber) = body.profile_fiber() {
        let (a, b) = fiber.representative_pair();
        let steps = 2048;
        for i in 0..=steps {
            let s = i as f64 / steps as f64;
            let (ca, cb) = (s.sqrt(), (1.0 - s).sqrt());
            points.push(a.iter().zip(&b).map(|(x, y)| ca * x + cb * y).collect());
        }
    }
    points
}

fn scan_minimum(f: &HarmonicSum, points: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let values: Vec<f64> = points.par_iter().map(|p| f.eval(p)).collect();
    let (i, v) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    (v, points[i].clone())
}

/// Minimum over `grid` of `(M^{alpha+1-N} rho_K^d)(theta)`.
///
/// A negative value shows that `K` is not the body `L` of a positive
/// comparison at this `alpha`, which is the starting point of
/// [`counterexample_search`].
pub fn positivity_certificate(body: &StarBody, d: usize, alpha: f64, grid: &[Vec<f64>], max_degree: usize) -> Result<Certificate> {
    let dim = body.dim();
    if !(alpha > 0.0 && alpha < dim as f64) {
        return Err(Error::ExcludedParameter(format!(
            "alpha = {alpha} must lie in (0, N) = (0, {dim})"
        )));
    }
    let exponent = alpha + 1.0 - dim as f64;
    check_cosine_alpha(exponent)?;
    let (sum, err) = body.power_sum(d as f64, max_degree)?;
    let transformed = cosine_transform(&sum, exponent)?;
    let points = scan_points(body, grid);
    let (minimum, argmin) = scan_minimum(&transformed, &points);
    Ok(Certificate {
        alpha,
        minimum,
        argmin,
        truncation_error: err,
        points: points.len(),
    })
}

/// Families of nonnegative test functions `psi` for the counterexample search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiDictionary {
    /// `psi = q(s)^2 + delta E[q^2]` with `q` a polynomial of the given
    /// degree in `s = |Pr_F theta|^2`, chosen to make the volume pairing
    /// `E[psi M^{alpha+1-N} rho_L^d]` as negative as possible for a fixed
    /// `E[q^2]`. The result has harmonic degree `4 * degree`.
    PolynomialSquare { degree: usize, delta: f64 },
}

impl Default for PsiDictionary {
    fn default() -> Self {
        PsiDictionary::PolynomialSquare { degree: 3, delta: 0.02 }
    }
}

/// Geometric schedule `start, start/2, ...` down to and including the last
/// value not below `stop`.
pub fn eps_schedule(start: f64, stop: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut eps = start;
    while eps >= stop * (1.0 - 1e-12) {
        out.push(eps);
        eps *= 0.5;
    }
    out
}

/// Settings of [`counterexample_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub psi: PsiDictionary,
    pub eps_schedule: Vec<f64>,
    pub grid_size: usize,
    pub convexity_trials: usize,
    /// Meridian samples of the curvature test for profile bodies.
    pub profile_samples: usize,
    pub certificate_degree: usize,
    pub compare: CompareOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            psi: PsiDictionary::default(),
            eps_schedule: eps_schedule(0.2, 1e-8),
            grid_size: DEFAULT_GRID,
            convexity_trials: 200_000,
            profile_samples: 4000,
            certificate_degree: 12,
            compare: CompareOptions::default(),
        }
    }
}

impl SearchOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.compare = self.compare.with_seed(seed);
        self
    }
}

/// What happened at one `eps` of the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsAttempt {
    pub eps: f64,
    /// The perturbed radial function stayed positive.
    pub built: bool,
    pub convex: bool,
    /// Curvature margin of the meridian for profile bodies.
    pub convexity_margin: Option<f64>,
}

/// Result of [`counterexample_search`].
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub certificate: Certificate,
    pub psi: HarmonicSum,
    /// `E[psi M^{alpha+1-N} rho_L^d]`, negative for a useful `psi`.
    pub pairing: f64,
    pub attempts: Vec<EpsAttempt>,
    pub eps: Option<f64>,
    pub body: Option<StarBody>,
    pub report: Option<ComparisonReport>,
    pub verdict: Verdict,
}

/// `psi` from the polynomial-square family, normalized by `E[q^2] = 1`,
/// and its pairing with `cert`.
fn polynomial_square_psi(
    fiber: &Arc<Fiber>,
    cert: &dyn Fn(f64) -> f64,
    degree: usize,
    delta: f64,
) -> Result<(HarmonicSum, f64)> {
    let dim = fiber.ambient();
    let size = degree + 1;
    let rule = fiber_weight_rule(dim, fiber.rank(), 4 * degree + 80);
    let mut gram = DMatrix::<f64>::zeros(size, size);
    let mut pair = DMatrix::<f64>::zeros(size, size);
    for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
        let c = cert(s);
        for i in 0..size {
            for j in 0..size {
                let b = w * s.powi((i + j) as i32);
                gram[(i, j)] += b;
                pair[(i, j)] += b * c;
            }
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("monomial Gram matrix is not positive definite".into()))?;
    let lower = chol.l();
    let inv_l = lower
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular Gram factor".into()))?;
    let reduced = &inv_l * &pair * inv_l.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
    let coeffs = inv_l.transpose() * v;
    let coeffs: Vec<f64> = coeffs.iter().copied().collect();
    let q = |s: f64| horner(&coeffs, s);
    let norm: f64 = rule.nodes.iter().zip(&rule.weights).map(|(&s, &w)| w * q(s).powi(2)).sum();
    let psi_of = |s: f64| q(s).powi(2) / norm + delta;
    let psi = project_fiber(fiber.clone(), 4 * degree, 4 * degree + 80, psi_of);
    let (worst, peak) = rule.nodes.iter().fold((0.0f64, 0.0f64), |(w, p), &s| {
        let x = fiber_point(fiber, s);
        (w.max((psi.eval(&x) - psi_of(s)).abs()), p.max(psi_of(s).abs()))
    });
    if worst > 1e-10 * peak {
        return Err(Error::InvalidArgument(format!(
            "the squared polynomial was not reproduced by its harmonic expansion (error {worst:e})"
        )));
    }
    let pairing = rule.nodes.iter().zip(&rule.weights).map(|(&s, &w)| w * psi_of(s) * cert(s)).sum();
    Ok((psi, pairing))
}

fn fiber_point(fiber: &Fiber, s: f64) -> Vec<f64> {
    let (a, b) = fiber.representative_pair();
    let (ca, cb) = (s.sqrt(), (1.0 - s).sqrt());
    a.iter().zip(&b).map(|(x, y)| ca * x + cb * y).collect()
}

/// Sampled convexity test; profile bodies also get the meridian curvature test.
fn convexity_status(body: &StarBody, trials: usize, samples: usize, seed: u64) -> (bool, Option<f64>) {
    let margin = profile_convexity_margin(body, samples);
    if margin.is_some_and(|m| m <= 0.0) {
        return (false, margin);
    }
    (convexity_check(body, trials, seed).is_none(), margin)
}

/// Builds `K` with `rho_K^{N-d} = rho_L^{N-d} - eps M^{alpha+1-N} psi` for
/// the first `eps` of the schedule that keeps `K` convex, then compares.
///
/// With `alpha = d` the construction gives `S_K = S_L - c eps psi`, so the
/// sections are ordered by design, while the volume changes by a multiple
/// of `-eps E[psi M^{alpha+1-N} rho_L^d]` to first order. `L` must be a
/// profile body whose `rho^d` is available as a harmonic sum.
pub fn counterexample_search(l: &StarBody, d: usize, alpha: f64, opts: &SearchOptions) -> Result<SearchOutcome> {
    let dim = l.dim();
    let grid = theta_grid(dim, opts.grid_size, opts.compare.seed)?;
    let certificate = positivity_certificate(l, d, alpha, &grid, opts.certificate_degree)?;
    if certificate.minimum >= 0.0 {
        return Err(Error::Refused(format!(
            "the positivity certificate of L is nonnegative (minimum {:e}), so this recipe cannot produce a counterexample",
            certificate.minimum
        )));
    }
    let fiber = l
        .profile_fiber()
        .cloned()
        .ok_or_else(|| Error::Unsupported("the search needs L to be a profile body".into()))?;
    let exponent = alpha + 1.0 - dim as f64;
    let (sum, _) = l.power_sum(d as f64, opts.certificate_degree)?;
    let transformed = cosine_transform(&sum, exponent)?;
    let cert = |s: f64| transformed.eval(&fiber_point(&fiber, s));
    let (psi, pairing) = match opts.psi {
        PsiDictionary::PolynomialSquare { degree, delta } => polynomial_square_psi(&fiber, &cert, degree, delta)?,
    };
    if pairing >= 0.0 {
        return Err(Error::Refused(format!(
            "no test function in the dictionary pairs negatively with the certificate (best {pairing:e})"
        )));
    }
    let shift = SphericalFunction::Harmonic(cosine_transform(&psi, exponent)?);
    let mut attempts = Vec::new();
    for &eps in &opts.eps_schedule {
        let body = match perturbed_body(l, eps, &shift, d) {
            Ok(b) => b,
            Err(_) => {
                attempts.push(EpsAttempt {
                    eps,
                    built: false,
                    convex: false,
                    convexity_margin: None,
                });
                continue;
            }
        };
        let (convex, margin) = convexity_status(&body, opts.convexity_trials, opts.profile_samples, opts.compare.seed);
        attempts.push(EpsAttempt {
            eps,
            built: true,
            convex,
            convexity_margin: margin,
        });
        if !convex {
            continue;
        }
        let body = body.with_label(format!("K(eps = {eps:e})"));
        let report = bp_compare(&body, l, d, &grid, &opts.compare)?;
        return Ok(SearchOutcome {
            certificate,
            psi,
            pairing,
            attempts,
            eps: Some(eps),
            verdict: report.verdict,
            body: Some(body),
            report: Some(report),
        });
    }
    Ok(SearchOutcome {
        certificate,
        psi,
        pairing,
        attempts,
        eps: None,
        body: None,
        report: None,
        verdict: Verdict::Inconclusive,
    })
}

/// Membership verdict of a lambda-intersection-body test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Member,
    NonMember,
    Inconclusive,
}

impl fmt::Display for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Membership::Member => "member",
            Membership::NonMember => "non-member",
            Membership::Inconclusive => "inconclusive",
        })
    }
}

/// Result of [`intersection_body_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionBodyReport {
    pub lambda: f64,
    pub max_degree: usize,
    pub minimum: f64,
    pub argmin: Vec<f64>,
    /// Half-width of the undecided band around zero.
    pub band: f64,
    pub verdict: Membership,
}

/// Sign scan of `M^{1+lambda-N} rho_K^lambda` on `grid`.
///
/// The band is three times the projection error of `rho^lambda` times the
/// largest multiplier applied to it; exact harmonic data give a zero band.
pub fn intersection_body_test(body: &StarBody, lambda: f64, max_degree: usize, grid: &[Vec<f64>]) -> Result<IntersectionBodyReport> {
    let dim = body.dim();
    if !(lambda > 0.0 && lambda < dim as f64) {
        return Err(Error::ExcludedParameter(format!(
            "lambda = {lambda} must lie in (0, N) = (0, {dim})"
        )));
    }
    let exponent = 1.0 + lambda - dim as f64;
    check_cosine_alpha(exponent)?;
    let (sum, err) = body.power_sum(lambda, max_degree)?;
    let transformed = cosine_transform(&sum, exponent)?;
    let largest = (0..=sum.max_degree())
        .step_by(2)
        .map(|j| funk_hecke_multiplier(dim, exponent, j).map(f64::abs))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    let band = SIGNIFICANCE * err * largest;
    let points = scan_points(body, grid);
    let (minimum, argmin) = scan_minimum(&transformed, &points);
    let verdict = if minimum > band {
        Membership::Member
    } else if minimum < -band {
        Membership::NonMember
    } else {
        Membership::Inconclusive
    };
    Ok(IntersectionBodyReport {
        lambda,
        max_degree,
        minimum,
        argmin,
        band,
        verdict,
    })
}

/// Rejects `m` outside `max(N - 2d - 2, 0) <= 2m < N - d`.
pub fn check_dm_range(dim: usize, d: usize, m: usize) -> Result<()> {
    let lower = dim.saturating_sub(2 * d + 2);
    if d >= dim || 2 * m < lower || 2 * m >= dim - d {
        return Err(Error::ExcludedParameter(format!(
            "m = {m} is outside max(N - 2d - 2, 0) <= 2m < N - d for N = {dim}, d = {d}"
        )));
    }
    check_riesz_order(dim, d, m)
}

/// How `D_m S_K` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmRoute {
    /// `c M^{1-d-2m} rho^{N-d}` by Funk-Hecke multipliers.
    Multiplier,
    /// The Laplacian eigenrelation applied to `S_K = c M^{1-d} rho^{N-d}`.
    Riesz,
}

/// `D_m S_K` as a harmonic sum. Needs exact harmonic data for `rho^{N-d}`.
/// Only the eigenvalue guard on `m` applies here; the comparison range is
/// enforced by [`dm_comparison`].
pub fn dm_section_function(body: &StarBody, d: usize, m: usize, route: DmRoute) -> Result<HarmonicSum> {
    let dim = body.dim();
    if d == 0 || d >= dim {
        return Err(Error::InvalidArgument(format!("need 1 <= d < N, got d = {d}")));
    }
    check_riesz_order(dim, d, m)?;
    let power = (dim - d) as f64;
    let sum = body.exact_power_sum(power).ok_or_else(|| {
        Error::Unsupported(format!("D_m sections need rho^{power} as an exact harmonic sum"))
    })?;
    let c = section_constant(dim, d);
    let df = d as f64;
    Ok(match route {
        DmRoute::Multiplier => cosine_transform(&sum, 1.0 - df - 2.0 * m as f64)?.scaled(c),
        DmRoute::Riesz => riesz_dm_harmonic(&cosine_transform(&sum, 1.0 - df)?.scaled(c), d, m)?,
    })
}

/// Compares `D_m S_K` with `D_m S_L` on `grid` and reports the volume verdict.
pub fn dm_comparison(
    k: &StarBody,
    l: &StarBody,
    d: usize,
    m: usize,
    grid: &[Vec<f64>],
    opts: &CompareOptions,
) -> Result<ComparisonReport> {
    check_pair(k, l, d)?;
    let dim = k.dim();
    check_dm_range(dim, d, m)?;
    let fk = dm_section_function(k, d, m, DmRoute::Multiplier)?;
    let fl = dm_section_function(l, d, m, DmRoute::Multiplier)?;
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(index, theta)| {
            let (a, b) = (fk.eval(theta), fl.eval(theta));
            ThetaMargin {
                index,
                theta: theta.clone(),
                s_k: SectionEstimate { value: a, std_err: 0.0 },
                s_l: SectionEstimate { value: b, std_err: 0.0 },
                margin: b - a,
                sigma: sigma_floor(0.0, a.abs().max(b.abs())),
            }
        })
        .collect();
    let volumes = volume_pair(k, l, &opts.volume);
    Ok(ComparisonReport::assemble(dim, d, rows, volumes, opts.seed))
}

/// Settings of the randomized ordered-pair generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    /// Number of fiber-zonal terms in `rho_K^{N-d}` and in `phi`.
    pub terms: usize,
    /// Largest harmonic degree of a term (even).
    pub max_degree: usize,
    /// Size of the deformation of `K` away from the ball.
    pub amplitude: f64,
    /// Starting size of the step from `K` to `L`.
    pub eps: f64,
    pub convexity_trials: usize,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            terms: 2,
            max_degree: 4,
            amplitude: 0.15,
            eps: 0.3,
            convexity_trials: 20_000,
        }
    }
}

/// A randomized pair with `D_m S_K <= D_m S_L` by construction.
#[derive(Debug, Clone)]
pub struct OrderedPair {
    pub k: StarBody,
    pub l: StarBody,
    pub eps: f64,
}

fn random_fiber_terms(
    rng: &mut ChaCha8Rng,
    sys: &VectorFieldSystem,
    n: usize,
    terms: usize,
    max_degree: usize,
    scale: f64,
) -> Result<Vec<Component>> {
    let dim = sys.d() * n;
    let top = (max_degree / 2).max(1);
    (0..terms)
        .map(|_| {
            let u = random_unit(rng, dim);
            let fiber = Arc::new(Fiber::new(section_frame(sys, n, &u)?.frame)?);
            let degree = 2 * rng.random_range(1..=top);
            let coef = scale * rng.random_range(-1.0..1.0) / terms as f64;
            Component::fiber_zonal(degree, coef, fiber)
        })
        .collect()
}

/// Draws a `G`-invariant convex `K` (a ball deformed by fiber-zonal
/// harmonics) and `L` with
/// `rho_L^{N-d} = rho_K^{N-d} + eps M^{1-N+d+2m} phi` for a random positive
/// `G`-invariant `phi`, so that `D_m S_L - D_m S_K = c eps phi > 0`.
/// Amplitudes are halved until both bodies pass the sampled convexity test.
pub fn random_ordered_pair(tag: SymmetryTag, m: usize, seed: u64, opts: &PairOptions) -> Result<OrderedPair> {
    let dim = tag.dim();
    let d = tag.d;
    let n = tag.n;
    if m > 0 {
        check_dm_range(dim, d, m)?;
    }
    let sys = tag.system()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_terms = random_fiber_terms(&mut rng, &sys, n, opts.terms, opts.max_degree, 1.0)?;
    let phi_terms = random_fiber_terms(&mut rng, &sys, n, opts.terms, opts.max_degree, 0.9)?;
    let mut phi = HarmonicSum::constant(dim, 1.0);
    phi = phi.plus(&HarmonicSum::new(dim, phi_terms));
    let exponent = 1.0 - dim as f64 + d as f64 + 2.0 * m as f64;
    let lift = cosine_transform(&phi, exponent)?;
    let mut amplitude = opts.amplitude;
    for _ in 0..30 {
        let base = HarmonicSum::constant(dim, 1.0).plus(&HarmonicSum::new(
            dim,
            k_terms.iter().map(|c| c.scaled(amplitude)).collect(),
        ));
        let power = (dim - d) as f64;
        let k = match StarBody::harmonic_power(power, base.clone(), "K") {
            Ok(k) if convexity_check(&k, opts.convexity_trials, seed).is_none() => k.with_symmetry(tag)?,
            _ => {
                amplitude *= 0.5;
                continue;
            }
        };
        let mut eps = opts.eps;
        for _ in 0..30 {
            let sum = base.plus(&lift.scaled(eps));
            if let Ok(l) = StarBody::harmonic_power(power, sum, "L") {
                if convexity_check(&l, opts.convexity_trials, seed ^ 0x5bd1e995).is_none() {
                    let l = l.with_symmetry(tag)?;
                    return Ok(OrderedPair { k, l, eps });
                }
            }
            eps *= 0.5;
        }
        amplitude *= 0.5;
    }
    Err(Error::InvalidArgument(
        "could not draw a convex ordered pair; reduce the amplitudes".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies::ball_block_lp;
    use crate::special::gamma;

    fn zonal_body(dim: usize, coef: f64) -> StarBody {
        let mut axis = vec![0.0; dim];
        axis[dim - 1] = 1.0;
        let sum = HarmonicSum::new(dim, vec![Component::zonal(0, 1.0, axis.clone()), Component::zonal(2, coef, axis)]);
        StarBody::harmonic_power(1.0, sum, "L")
            .unwrap()
            .with_symmetry(SymmetryTag::new(1, dim))
            .unwrap()
    }

    fn small_grid(dim: usize) -> Vec<Vec<f64>> {
        theta_grid(dim, 256, 7).unwrap()
    }

    #[test]
    fn balls_compare_consistently() {
        let k = StarBody::ball(4, 1.0).unwrap();
        let l = StarBody::ball(4, 1.1).unwrap();
        let grid = small_grid(4);
        let rep = bp_compare(&k, &l, 1, &grid, &CompareOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent);
        assert_eq!(rep.violations, 0);
        assert!(rep.vol_diff < 0.0);
        assert!(rep.worst_margin > 0.0);

        let same = bp_compare(&k, &k, 1, &grid, &CompareOptions::default()).unwrap();
        assert_eq!(same.verdict, Verdict::Consistent);
        assert!(same.rows.iter().all(|r| r.margin == 0.0));
        assert_eq!(same.vol_diff, 0.0);
    }

    #[test]
    fn comparison_is_antisymmetric() {
        let k = zonal_body(4, 0.2);
        let l = StarBody::ball(4, 1.0).unwrap();
        let grid = small_grid(4);
        let opts = CompareOptions::default();
        let a = bp_compare(&k, &l, 1, &grid, &opts).unwrap();
        let b = bp_compare(&l, &k, 1, &grid, &opts).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.margin, -y.margin);
        }
    }

    #[test]
    fn mismatched_bodies_are_rejected() {
        let k = StarBody::ball(4, 1.0).unwrap();
        let l = StarBody::ball(5, 1.0).unwrap();
        assert!(matches!(
            bp_compare(&k, &l, 1, &small_grid(4), &CompareOptions::default()),
            Err(Error::Dimension(_))
        ));
        let tagged = ball_block_lp(2, 2, 4.0, false).unwrap();
        assert!(bp_compare(&tagged, &k, 1, &small_grid(4), &CompareOptions::default()).is_err());
    }

    #[test]
    fn certificate_of_the_ball_and_scaling() {
        let grid = small_grid(5);
        let ball = StarBody::ball(5, 1.0).unwrap();
        let cert = positivity_certificate(&ball, 1, 1.0, &grid, 8).unwrap();
        // m_0(-3) in R^5 is Gamma(2) / Gamma(1/2).
        assert!((cert.minimum - 1.0 / gamma(0.5)).abs() < 1e-12);

        let l = zonal_body(5, 0.35);
        let c1 = positivity_certificate(&l, 1, 1.0, &grid, 8).unwrap();
        assert!(c1.minimum < 0.0);
        let c2 = positivity_certificate(&l.dilated(2.0).unwrap(), 1, 1.0, &grid, 8).unwrap();
        assert!((c2.minimum - 2.0 * c1.minimum).abs() < 1e-12);
        assert_eq!(c1.argmin, c2.argmin);
        assert!(positivity_certificate(&l, 1, 5.0, &grid, 8).is_err());
    }

    #[test]
    fn counterexample_in_five_dimensions() {
        let l = zonal_body(5, 0.35);
        let opts = SearchOptions {
            grid_size: 512,
            convexity_trials: 20_000,
            ..SearchOptions::default()
        };
        let out = counterexample_search(&l, 1, 1.0, &opts).unwrap();
        assert!(out.pairing < 0.0);
        let report = out.report.expect("a convex K was found");
        assert_eq!(report.violations, 0);
        assert!(report.min_z >= SIGNIFICANCE, "{}", report.min_z);
        assert!(report.volume_z() >= SIGNIFICANCE);
        assert_eq!(out.verdict, Verdict::Counterexample);
    }

    #[test]
    fn refusal_when_the_certificate_is_positive() {
        let ball = StarBody::ball(3, 1.0).unwrap();
        let err = counterexample_search(&ball, 1, 1.0, &SearchOptions { grid_size: 128, ..SearchOptions::default() }).unwrap_err();
        assert!(matches!(err, Error::Refused(_)));
    }

    #[test]
    fn zero_eps_gives_the_same_body() {
        let l = zonal_body(5, 0.35);
        let opts = SearchOptions {
            grid_size: 128,
            eps_schedule: vec![0.0],
            convexity_trials: 2000,
            ..SearchOptions::default()
        };
        let out = counterexample_search(&l, 1, 1.0, &opts).unwrap();
        let rep = out.report.unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent);
        assert!(rep.rows.iter().all(|r| r.margin == 0.0));
    }

    #[test]
    fn intersection_tests() {
        for dim in [3usize, 4, 5] {
            let ball = StarBody::ball(dim, 1.0).unwrap();
            for lambda in [0.5, 1.0, 2.0] {
                let rep = intersection_body_test(&ball, lambda, 8, &small_grid(dim)).unwrap();
                assert_eq!(rep.verdict, Membership::Member);
                assert!(rep.minimum > 0.0);
            }
        }
        let l = zonal_body(5, 0.35);
        let low = intersection_body_test(&l, 1.0, 8, &small_grid(5)).unwrap();
        let high = intersection_body_test(&l, 1.0, 12, &small_grid(5)).unwrap();
        assert_eq!(low.verdict, Membership::NonMember);
        assert_eq!(high.verdict, low.verdict);
        assert!(intersection_body_test(&l, 5.0, 8, &small_grid(5)).is_err());
    }

    #[test]
    fn dm_range_guard() {
        assert!(check_dm_range(6, 1, 1).is_ok());
        assert!(check_dm_range(6, 1, 0).is_err());
        assert!(check_dm_range(6, 1, 3).is_err());
        assert!(check_dm_range(8, 2, 1).is_ok());
        assert!(check_dm_range(8, 2, 0).is_err());
        assert!(check_dm_range(8, 2, 3).is_err());
        assert!(check_dm_range(4, 1, 0).is_ok());
    }

    #[test]
    fn dm_routes_agree_and_scale() {
        let tag = SymmetryTag::new(1, 6);
        let pair = random_ordered_pair(tag, 1, 3, &PairOptions::default()).unwrap();
        let grid = small_grid(6);
        let a = dm_section_function(&pair.k, 1, 1, DmRoute::Multiplier).unwrap();
        let b = dm_section_function(&pair.k, 1, 1, DmRoute::Riesz).unwrap();
        for t in &grid {
            assert!((a.eval(t) - b.eval(t)).abs() < 1e-10 * a.eval(t).abs().max(1.0));
        }
        // D_m S is linear in rho^{N-d}, so dilation by 2 scales it by 2^{N-d}.
        let big = dm_section_function(&pair.k.dilated(2.0).unwrap(), 1, 1, DmRoute::Multiplier).unwrap();
        for t in grid.iter().take(20) {
            assert!((big.eval(t) - 32.0 * a.eval(t)).abs() < 1e-10 * a.eval(t).abs().max(1.0));
        }
        let rep = dm_comparison(&pair.k, &pair.l, 1, 1, &grid, &CompareOptions::default()).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.min_z > SIGNIFICANCE);
    }

    #[test]
    fn ordered_pairs_have_ordered_sections() {
        for (d, n) in [(1usize, 3usize), (2, 2)] {
            let tag = SymmetryTag::new(d, n);
            let pair = random_ordered_pair(tag, 0, 11, &PairOptions::default()).unwrap();
            let rep = bp_compare(&pair.k, &pair.l, d, &small_grid(tag.dim()), &CompareOptions::default()).unwrap();
            assert_eq!(rep.violations, 0);
            assert!(rep.min_z > SIGNIFICANCE, "{}", rep.min_z);
            assert_ne!(rep.verdict, Verdict::Counterexample);
        }
    }
}
