//! Origin-symmetric star bodies given by radial functions: constructors for
//! balls, block `l^p` balls, profile bodies and harmonic perturbations, plus
//! gauges, volumes, group averaging and sampled convexity tests.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::algebra::{group_element, Chirality, VectorFieldSystem};
use crate::error::{Error, Result};
use crate::harmonic::{
    fiber_weight_rule, project_dense, project_fiber, Component, Evaluator, Fiber, HarmonicSum, Parity,
    SphericalFunction,
};
use crate::special::unit_sphere_area;
use crate::sphere::{halton_grid, norm, random_unit, MonteCarlo, SphereRule, MAX_PRODUCT_DIM};

/// Points in the grid used to validate positivity and origin symmetry of
/// newly built bodies.
pub const CONSTRUCTION_GRID: usize = 4096;
/// Points in the grid used to validate positivity of perturbed bodies.
pub const PERTURBATION_GRID: usize = 100_000;
const GRID_SEED: u64 = 0x00b0_d1e5;

/// Assertion that a body is invariant under the block group built from the
/// `d`-dimensional vector-field system with `n` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetryTag {
    pub d: usize,
    pub n: usize,
    pub chirality: Chirality,
}

impl SymmetryTag {
    pub fn new(d: usize, n: usize) -> SymmetryTag {
        SymmetryTag {
            d,
            n,
            chirality: Chirality::Left,
        }
    }

    pub fn dim(&self) -> usize {
        self.d * self.n
    }

    pub fn system(&self) -> Result<VectorFieldSystem> {
        VectorFieldSystem::new(self.d, self.chirality)
    }
}

/// Which description of the radial function a body carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    ClosedForm,
    /// A function of `theta . axis`.
    Zonal,
    /// A function of `|Pr_F theta|^2` for a subspace `F` of rank at least two.
    FiberProfile,
    /// `rho^power` is a finite harmonic sum.
    HarmonicPower,
}

/// `rho^power` as a finite sum of spherical harmonics.
#[derive(Debug, Clone)]
pub struct HarmonicPower {
    pub power: f64,
    pub sum: HarmonicSum,
}

/// Marks a radial function that depends only on `s = |Pr_F theta|^2`.
#[derive(Debug, Clone)]
struct ProfileData {
    fiber: Arc<Fiber>,
    inside: Vec<f64>,
    outside: Vec<f64>,
}

impl ProfileData {
    fn new(fiber: Arc<Fiber>) -> Result<ProfileData> {
        if fiber.rank() >= fiber.ambient() {
            return Err(Error::InvalidArgument(
                "a profile fiber must be a proper subspace".into(),
            ));
        }
        let (inside, outside) = fiber.representative_pair();
        Ok(ProfileData {
            fiber,
            inside,
            outside,
        })
    }

    fn point(&self, s: f64) -> Vec<f64> {
        let (a, b) = (s.clamp(0.0, 1.0).sqrt(), (1.0 - s).clamp(0.0, 1.0).sqrt());
        self.inside.iter().zip(&self.outside).map(|(x, y)| a * x + b * y).collect()
    }
}

/// An origin-symmetric star body in `R^dim`.
#[derive(Clone)]
pub struct StarBody {
    dim: usize,
    rho: Evaluator,
    label: String,
    profile: Option<ProfileData>,
    harmonic: Option<HarmonicPower>,
    symmetry: Option<SymmetryTag>,
    radial_bounds: (f64, f64),
}

impl fmt::Debug for StarBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StarBody")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("representation", &self.representation())
            .field("symmetry", &self.symmetry)
            .field("radial_bounds", &self.radial_bounds)
            .finish()
    }
}

impl StarBody {
    /// Body with the given radial function, checked for positivity and
    /// origin symmetry on a fixed grid.
    pub fn closed_form(
        dim: usize,
        label: impl Into<String>,
        rho: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<StarBody> {
        StarBody::from_parts(dim, label.into(), Arc::new(rho), None, None, CONSTRUCTION_GRID)
    }

    /// Euclidean ball of the given radius.
    pub fn ball(dim: usize, radius: f64) -> Result<StarBody> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        let mut body = StarBody::from_parts(
            dim,
            format!("ball(r = {radius})"),
            Arc::new(move |_: &[f64]| radius),
            None,
            Some(HarmonicPower {
                power: 1.0,
                sum: HarmonicSum::constant(dim, radius),
            }),
            16,
        )?;
        body.radial_bounds = (radius, radius);
        Ok(body)
    }

    /// Body of revolution about `axis` with `rho(theta) = profile(theta . axis)`.
    /// The profile must be even.
    pub fn zonal(
        dim: usize,
        axis: Vec<f64>,
        label: impl Into<String>,
        profile: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<StarBody> {
        crate::algebra::check_unit("axis", &axis)?;
        let fiber = Arc::new(Fiber::line(&axis)?);
        let ax = axis.clone();
        let rho: Evaluator = Arc::new(move |x: &[f64]| profile(crate::sphere::dot(x, &ax)));
        StarBody::from_parts(
            dim,
            label.into(),
            rho,
            Some(ProfileData::new(fiber)?),
            None,
            CONSTRUCTION_GRID,
        )
    }

    /// Body with `rho(theta) = profile(|Pr_F theta|^2)`.
    pub fn fiber_profile(
        fiber: Arc<Fiber>,
        label: impl Into<String>,
        profile: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<StarBody> {
        let f = fiber.clone();
        let rho: Evaluator = Arc::new(move |x: &[f64]| profile(f.weight(x)));
        StarBody::from_parts(
            fiber.ambient(),
            label.into(),
            rho,
            Some(ProfileData::new(fiber)?),
            None,
            CONSTRUCTION_GRID,
        )
    }

    /// Body with `rho^power = sum`. The sum must be positive and even.
    pub fn harmonic_power(power: f64, sum: HarmonicSum, label: impl Into<String>) -> Result<StarBody> {
        if !(power > 0.0) {
            return Err(Error::InvalidArgument(format!("power must be positive, got {power}")));
        }
        if sum.parity() != Parity::Even {
            return Err(Error::InvalidArgument(
                "the harmonic data of an origin-symmetric body must be even".into(),
            ));
        }
        let dim = sum.dim();
        let profile = sum.common_fiber().map(ProfileData::new).transpose()?;
        let inner = sum.clone();
        let inv = 1.0 / power;
        let rho: Evaluator = Arc::new(move |x: &[f64]| {
            let v = inner.eval(x);
            if v > 0.0 {
                v.powf(inv)
            } else {
                f64::NAN
            }
        });
        StarBody::from_parts(
            dim,
            label.into(),
            rho,
            profile,
            Some(HarmonicPower { power, sum }),
            CONSTRUCTION_GRID,
        )
    }

    fn from_parts(
        dim: usize,
        label: String,
        rho: Evaluator,
        profile: Option<ProfileData>,
        harmonic: Option<HarmonicPower>,
        grid_size: usize,
    ) -> Result<StarBody> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("bodies need N >= 2, got {dim}")));
        }
        let grid = validation_grid(dim, grid_size)?;
        let (lo, hi) = radial_scan(dim, &*rho, &grid, true)?;
        Ok(StarBody {
            dim,
            rho,
            label,
            profile,
            harmonic,
            symmetry: None,
            radial_bounds: (lo, hi),
        })
    }

    /// Attaches a symmetry tag after checking invariance on sampled orbits.
    pub fn with_symmetry(mut self, tag: SymmetryTag) -> Result<StarBody> {
        if tag.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "symmetry tag describes R^{}, body lives in R^{}",
                tag.dim(),
                self.dim
            )));
        }
        let defect = g_invariance(&self, tag, 32, 4, GRID_SEED)?;
        let scale = self.radial_bounds.1;
        if defect > 1e-10 * scale.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "radial function is not invariant under the (d = {}, n = {}) group: orbit defect {defect:e}",
                tag.d, tag.n
            )));
        }
        self.symmetry = Some(tag);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> StarBody {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rho(&self, theta: &[f64]) -> f64 {
        (self.rho)(theta)
    }

    pub fn evaluator(&self) -> Evaluator {
        self.rho.clone()
    }

    pub fn symmetry(&self) -> Option<SymmetryTag> {
        self.symmetry
    }

    pub fn harmonic(&self) -> Option<&HarmonicPower> {
        self.harmonic.as_ref()
    }

    /// Smallest and largest radial value seen on the construction grid.
    pub fn radial_bounds(&self) -> (f64, f64) {
        self.radial_bounds
    }

    /// The fiber `F` when `rho` depends only on `|Pr_F theta|^2`.
    pub fn profile_fiber(&self) -> Option<&Arc<Fiber>> {
        self.profile.as_ref().map(|p| &p.fiber)
    }

    /// `rho` at any point with `|Pr_F theta|^2 = s`, for profile bodies.
    pub fn profile_radial(&self, s: f64) -> Option<f64> {
        self.profile.as_ref().map(|p| self.rho(&p.point(s)))
    }

    pub fn representation(&self) -> Representation {
        match (&self.harmonic, &self.profile) {
            (Some(_), _) => Representation::HarmonicPower,
            (None, Some(p)) if p.fiber.rank() == 1 => Representation::Zonal,
            (None, Some(_)) => Representation::FiberProfile,
            (None, None) => Representation::ClosedForm,
        }
    }

    /// `rho^power` as a finite harmonic sum when that is known exactly:
    /// the stored power, or any power of a ball.
    pub fn exact_power_sum(&self, power: f64) -> Option<HarmonicSum> {
        let h = self.harmonic.as_ref()?;
        if (h.power - power).abs() < 1e-14 {
            return Some(h.sum.clone());
        }
        if h.sum.max_degree() == 0 {
            let value = h.sum.eval(&unit_e1(self.dim)).powf(power / h.power);
            return Some(HarmonicSum::constant(self.dim, value));
        }
        None
    }

    /// `rho^power` as a harmonic sum up to degree `max_degree`, with an
    /// estimate of the truncation error (zero when exact).
    ///
    /// Exact when the stored power matches or the body is a ball; profile
    /// bodies use a one-dimensional projection; other bodies with `N <= 4`
    /// use a dense-grid projection.
    pub fn power_sum(&self, power: f64, max_degree: usize) -> Result<(HarmonicSum, f64)> {
        if let Some(sum) = self.exact_power_sum(power) {
            if sum.max_degree() <= max_degree {
                return Ok((sum, 0.0));
            }
        }
        if let Some(p) = &self.profile {
            let g = |s: f64| self.rho(&p.point(s)).powf(power);
            let sum = project_fiber(p.fiber.clone(), max_degree, 4 * max_degree + 64, g);
            let rule = fiber_weight_rule(self.dim, p.fiber.rank(), 2 * max_degree + 80);
            let mut worst = 0.0f64;
            for &s in &rule.nodes {
                let x = p.point(s);
                worst = worst.max((sum.eval(&x) - g(s)).abs());
            }
            return Ok((sum, worst));
        }
        if self.dim <= MAX_PRODUCT_DIM {
            let rho = self.rho.clone();
            let f = move |x: &[f64]| rho(x).powf(power);
            let proj = project_dense(&f, self.dim, max_degree, true, max_degree + 16)?;
            return Ok((proj.sum, proj.rms_residual));
        }
        Err(Error::Unsupported(format!(
            "no harmonic expansion of rho^{power} is available for this body in R^{}",
            self.dim
        )))
    }

    /// The dilate `sK`.
    pub fn dilated(&self, factor: f64) -> Result<StarBody> {
        if !(factor > 0.0) {
            return Err(Error::InvalidArgument(format!("dilation factor must be positive, got {factor}")));
        }
        let rho = self.rho.clone();
        let mut out = self.clone();
        out.rho = Arc::new(move |x: &[f64]| factor * rho(x));
        out.label = format!("{} x {factor}", self.label);
        out.harmonic = self.harmonic.as_ref().map(|h| HarmonicPower {
            power: h.power,
            sum: h.sum.scaled(factor.powf(h.power)),
        });
        out.radial_bounds = (factor * self.radial_bounds.0, factor * self.radial_bounds.1);
        Ok(out)
    }
}

fn unit_e1(dim: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[0] = 1.0;
    e
}

fn validation_grid(dim: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    let mut grid = halton_grid(dim, count, GRID_SEED)?;
    for k in 0..dim {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        grid.push(e);
    }
    Ok(grid)
}

/// Minimum and maximum of `rho` on `grid`, rejecting non-positive values and,
/// when `check_symmetry`, asymmetric ones.
fn radial_scan(dim: usize, rho: &(dyn Fn(&[f64]) -> f64 + Sync), grid: &[Vec<f64>], check_symmetry: bool) -> Result<(f64, f64)> {
    let results: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|theta| {
            let v = rho(theta);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Positivity {
                    theta: theta.clone(),
                    value: v,
                });
            }
            if check_symmetry {
                let neg: Vec<f64> = theta.iter().map(|x| -x).collect();
                let w = rho(&neg);
                if (v - w).abs() > 1e-10 * v.max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "radial function is not origin-symmetric at theta = {theta:?}: {v} vs {w}"
                    )));
                }
            }
            Ok((v, v))
        })
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for r in results {
        let (a, b) = r?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    debug_assert!(dim > 0);
    Ok((lo, hi))
}

/// Unit ball of the block norm `(sum_j |x_j|_2^p)^{1/p}` with `n` blocks of
/// size `d`. Exponents below one give non-convex star bodies and are refused
/// unless `allow_nonconvex`.
pub fn ball_block_lp(n: usize, d: usize, p: f64, allow_nonconvex: bool) -> Result<StarBody> {
    if n < 1 || d < 1 {
        return Err(Error::InvalidArgument("need n >= 1 and d >= 1".into()));
    }
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!("exponent p must be positive and finite, got {p}")));
    }
    if p < 1.0 && !allow_nonconvex {
        return Err(Error::InvalidArgument(format!(
            "p = {p} < 1 gives a non-convex body; pass the non-convex override to build it anyway"
        )));
    }
    let dim = n * d;
    let rho = move |x: &[f64]| -> f64 {
        let total: f64 = x
            .chunks_exact(d)
            .map(|block| block.iter().map(|v| v * v).sum::<f64>().sqrt().powf(p))
            .sum();
        total.powf(-1.0 / p)
    };
    let mut body = StarBody::closed_form(dim, format!("block-l{p}(n = {n}, d = {d})"), rho)?;
    if (p - 2.0).abs() < 1e-15 {
        body.harmonic = Some(HarmonicPower {
            power: 1.0,
            sum: HarmonicSum::constant(dim, 1.0),
        });
    }
    if matches!(d, 1 | 2 | 4 | 8) && n >= 2 {
        body = body.with_symmetry(SymmetryTag::new(d, n))?;
    }
    Ok(body)
}

/// The body `K` with `rho_K^{N-d} = rho_L^{N-d} - eps * phi`.
///
/// Positivity is validated on a fixed grid of [`PERTURBATION_GRID`] points.
/// Harmonic data and profile structure carry over when `phi` allows it, and
/// the symmetry tag carries over when `phi` passes the orbit test.
pub fn perturbed_body(base: &StarBody, eps: f64, phi: &SphericalFunction, d: usize) -> Result<StarBody> {
    let dim = base.dim;
    if phi.dim() != dim {
        return Err(Error::Dimension(format!(
            "perturbation lives on S^{}, body in R^{dim}",
            phi.dim() - 1
        )));
    }
    if d == 0 || d >= dim {
        return Err(Error::InvalidArgument(format!("need 1 <= d < N, got d = {d}")));
    }
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be finite and nonnegative, got {eps}")));
    }
    let power = (dim - d) as f64;
    let base_rho = base.rho.clone();
    let phi_eval = phi.to_evaluator();
    let inv = 1.0 / power;
    let rho: Evaluator = Arc::new(move |x: &[f64]| {
        let v = base_rho(x).powf(power) - eps * phi_eval(x);
        if v > 0.0 {
            v.powf(inv)
        } else {
            f64::NAN
        }
    });
    let grid = validation_grid(dim, PERTURBATION_GRID)?;
    let bounds = radial_scan(dim, &*rho, &grid, true)?;

    let harmonic = match (phi.as_harmonic(), base.exact_power_sum(power)) {
        (Some(h), Some(sum)) => Some(HarmonicPower {
            power,
            sum: sum.plus(&h.scaled(-eps)),
        }),
        _ => None,
    };
    let phi_fiber = match phi {
        SphericalFunction::Harmonic(h) => h.common_fiber(),
        SphericalFunction::Zonal { axis, .. } => Fiber::line(axis).ok().map(Arc::new),
        SphericalFunction::Evaluator { .. } => None,
    };
    let base_is_round = base.harmonic.as_ref().is_some_and(|h| h.sum.max_degree() == 0);
    let profile = match (&base.profile, phi_fiber) {
        _ if eps == 0.0 => base.profile.clone(),
        (Some(p), Some(f)) if p.fiber.same_subspace(&f) => Some(p.clone()),
        (None, Some(f)) if base_is_round => Some(ProfileData::new(f)?),
        _ => None,
    };
    let mut body = StarBody {
        dim,
        rho,
        label: format!("{} - {eps:e} phi", base.label),
        profile,
        harmonic,
        symmetry: None,
        radial_bounds: bounds,
    };
    if let Some(tag) = base.symmetry {
        if function_invariance(phi, tag, 32, 4, GRID_SEED)? <= 1e-10 {
            body.symmetry = Some(tag);
        }
    }
    Ok(body)
}

/// Minkowski functional `|x| / rho_K(x / |x|)`.
pub fn gauge(body: &StarBody, x: &[f64]) -> f64 {
    let r = norm(x);
    if r == 0.0 {
        return 0.0;
    }
    let u: Vec<f64> = x.iter().map(|v| v / r).collect();
    r / body.rho(&u)
}

/// How volumes are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VolumeOptions {
    /// One-dimensional node count for profile bodies, or product-rule
    /// resolution for `N <= 4`.
    pub resolution: usize,
    /// Monte Carlo sample count for everything else.
    pub samples: usize,
    pub seed: u64,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        VolumeOptions {
            resolution: 64,
            samples: 1_000_000,
            seed: 0,
        }
    }
}

/// A volume with its error bar: a Monte Carlo standard error, or for
/// deterministic rules the change between two resolutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Volume {
    pub value: f64,
    pub std_err: f64,
    pub stochastic: bool,
}

/// `vol_N(K) = (sigma_{N-1} / N) E[rho^N]`.
pub fn volume(body: &StarBody, opts: &VolumeOptions) -> Volume {
    volume_pair(body, body, opts).0
}

/// Volumes of two bodies and of their difference `vol(L) - vol(K)`. Monte
/// Carlo runs share sample points so the difference has a paired error bar.
pub fn volume_pair(k: &StarBody, l: &StarBody, opts: &VolumeOptions) -> (Volume, Volume, Volume) {
    assert_eq!(k.dim, l.dim, "bodies live in different dimensions");
    let dim = k.dim;
    let scale = unit_sphere_area(dim as f64) / dim as f64;
    let nf = dim as i32;
    let shared_fiber = match (&k.profile, &l.profile) {
        (Some(a), Some(b)) if a.fiber.same_subspace(&b.fiber) => Some(a.clone()),
        _ => None,
    };
    let deterministic = |f: &dyn Fn(usize) -> [f64; 3]| -> (Volume, Volume, Volume) {
        let coarse = f(opts.resolution);
        let fine = f(2 * opts.resolution);
        let make = |i: usize| Volume {
            value: scale * fine[i],
            std_err: scale * (fine[i] - coarse[i]).abs(),
            stochastic: false,
        };
        (make(0), make(1), make(2))
    };
    if let Some(p) = shared_fiber {
        return deterministic(&|nodes| {
            let rule = fiber_weight_rule(dim, p.fiber.rank(), nodes);
            let mut acc = [0.0; 3];
            for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
                let x = p.point(s);
                let (a, b) = (k.rho(&x).powi(nf), l.rho(&x).powi(nf));
                acc[0] += w * a;
                acc[1] += w * b;
                acc[2] += w * (b - a);
            }
            acc
        });
    }
    if dim <= MAX_PRODUCT_DIM {
        return deterministic(&|res| {
            let rule = SphereRule::product(dim, res).expect("dimension checked");
            let a = rule.integrate(|x| k.rho(x).powi(nf));
            let b = rule.integrate(|x| l.rho(x).powi(nf));
            [a, b, b - a]
        });
    }
    let mc = MonteCarlo::new(opts.samples, opts.seed);
    let est = mc.estimate_many(dim, 3, |x, out| {
        let (a, b) = (k.rho(x).powi(nf), l.rho(x).powi(nf));
        out[0] = a;
        out[1] = b;
        out[2] = b - a;
    });
    let make = |i: usize| Volume {
        value: scale * est[i].mean,
        std_err: scale * est[i].std_err,
        stochastic: true,
    };
    (make(0), make(1), make(2))
}

/// Average of `f` over the group orbit `{G_lambda theta : lambda in S^{d-1}}`.
///
/// Since `G_lambda theta = F_d(theta) lambda`, the average is a mean over
/// the sphere of the frame span. The rule is `{+1, -1}` for `d = 1`, an
/// equispaced trapezoid for `d = 2` and recursive Gauss rules on `S^3` and
/// `S^7`. Harmonic sums stay harmonic sums degree by degree.
pub fn symmetrize(f: &SphericalFunction, sys: &VectorFieldSystem, n: usize, resolution: usize) -> Result<SphericalFunction> {
    let d = sys.d();
    let dim = f.dim();
    if dim != d * n {
        return Err(Error::Dimension(format!(
            "function on S^{} cannot be averaged over the (d = {d}, n = {n}) group",
            dim - 1
        )));
    }
    let rule = Arc::new(SphereRule::design(d, resolution.max(1))?);
    let lifted: Arc<Vec<nalgebra::DMatrix<f64>>> = Arc::new((0..d).map(|i| sys.lifted(i, n)).collect());
    let average = move |g: Evaluator| -> Evaluator {
        let rule = rule.clone();
        let lifted = lifted.clone();
        Arc::new(move |theta: &[f64]| {
            let th = nalgebra::DVector::from_column_slice(theta);
            let frame: Vec<nalgebra::DVector<f64>> = lifted.iter().map(|a| a * &th).collect();
            let mut x = vec![0.0; theta.len()];
            let mut acc = 0.0;
            for (lambda, w) in rule.points().zip(rule.weights()) {
                x.iter_mut().for_each(|v| *v = 0.0);
                for (col, &l) in frame.iter().zip(lambda) {
                    for (v, c) in x.iter_mut().zip(col.iter()) {
                        *v += l * c;
                    }
                }
                acc += w * g(&x);
            }
            acc
        })
    };
    Ok(match f {
        SphericalFunction::Harmonic(h) => {
            let components = h
                .components()
                .iter()
                .map(|c| {
                    let degree = c.degree();
                    let c = c.clone();
                    let g: Evaluator = Arc::new(move |x: &[f64]| c.eval(dim, x));
                    Component::explicit(degree, 1.0, average(g))
                })
                .collect();
            SphericalFunction::Harmonic(HarmonicSum::new(dim, components))
        }
        other => SphericalFunction::Evaluator {
            dim,
            f: average(other.to_evaluator()),
            parity: other.parity(),
        },
    })
}

/// Largest `|f(G_lambda theta) - f(theta)|` over `orbits` random points and
/// `per_orbit` random group elements each.
fn orbit_defect(dim: usize, f: &(dyn Fn(&[f64]) -> f64 + Sync), tag: SymmetryTag, orbits: usize, per_orbit: usize, seed: u64) -> Result<f64> {
    if tag.dim() != dim {
        return Err(Error::Dimension(format!(
            "group acts on R^{}, function lives on S^{}",
            tag.dim(),
            dim - 1
        )));
    }
    let sys = tag.system()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..orbits {
        let theta = random_unit(&mut rng, dim);
        let base = f(&theta);
        for _ in 0..per_orbit {
            let lambda = random_unit(&mut rng, tag.d);
            let g = group_element(&sys, tag.n, &lambda)?;
            worst = worst.max((f(&g.apply(&theta)) - base).abs());
        }
    }
    Ok(worst)
}

/// Largest change of `rho` along sampled group orbits.
pub fn g_invariance(body: &StarBody, tag: SymmetryTag, orbits: usize, per_orbit: usize, seed: u64) -> Result<f64> {
    orbit_defect(body.dim, &*body.rho, tag, orbits, per_orbit, seed)
}

/// Largest change of `f` along sampled group orbits.
pub fn function_invariance(f: &SphericalFunction, tag: SymmetryTag, orbits: usize, per_orbit: usize, seed: u64) -> Result<f64> {
    orbit_defect(f.dim(), &|x: &[f64]| f.eval(x), tag, orbits, per_orbit, seed)
}

/// Two boundary points whose midpoint lies outside the body.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityWitness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub midpoint: Vec<f64>,
    pub gauge: f64,
}

/// Slack allowed in the midpoint test.
pub const CONVEXITY_SLACK: f64 = 1e-9;

/// Sampled midpoint test: draws `trials` pairs of boundary points
/// `rho(u) u`, `rho(v) v` and checks that their midpoints have gauge at most
/// `1 + 1e-9`. Returns the first failure in sampling order.
pub fn convexity_check(body: &StarBody, trials: usize, seed: u64) -> Option<ConvexityWitness> {
    const CHUNK: usize = 4096;
    let dim = body.dim;
    let chunks = trials.div_ceil(CHUNK);
    let found: Vec<Option<ConvexityWitness>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(trials - c * CHUNK);
            for _ in 0..count {
                let u = random_unit(&mut rng, dim);
                let v = random_unit(&mut rng, dim);
                let (ru, rv) = (body.rho(&u), body.rho(&v));
                let x: Vec<f64> = u.iter().map(|a| ru * a).collect();
                let y: Vec<f64> = v.iter().map(|a| rv * a).collect();
                let midpoint: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                let g = gauge(body, &midpoint);
                if g > 1.0 + CONVEXITY_SLACK {
                    return Some(ConvexityWitness {
                        x,
                        y,
                        midpoint,
                        gauge: g,
                    });
                }
            }
            None
        })
        .collect();
    found.into_iter().flatten().next()
}

/// For profile bodies, the smallest value of `rho^2 + 2 rho'^2 - rho rho''`
/// along the meridian curve `phi -> rho(cos^2 phi)` on `[0, pi/2]`.
///
/// The body is the solid generated by this planar curve under the product
/// of the orthogonal groups of `F` and `F^perp`, so it is convex exactly when
/// the curve is, which for a smooth closed star curve means the expression
/// is nonnegative. Derivatives are central differences with step `1e-4`.
pub fn profile_convexity_margin(body: &StarBody, samples: usize) -> Option<f64> {
    let p = body.profile.as_ref()?;
    let r = |phi: f64| body.rho(&p.point(phi.cos().powi(2)));
    let h = 1e-4;
    let samples = samples.max(2);
    let margin = (0..=samples)
        .into_par_iter()
        .map(|k| {
            let phi = std::f64::consts::FRAC_PI_2 * k as f64 / samples as f64;
            let (a, b, c) = (r(phi - h), r(phi), r(phi + h));
            let d1 = (c - a) / (2.0 * h);
            let d2 = (c - 2.0 * b + a) / (h * h);
            b * b + 2.0 * d1 * d1 - b * d2
        })
        .reduce(|| f64::INFINITY, f64::min);
    Some(margin)
}

/// Summary of a body: volume, sampled convexity and radial range.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyReport {
    pub volume: Volume,
    pub convexity_witness: Option<ConvexityWitness>,
    pub min_radial: f64,
    pub max_radial: f64,
}

pub fn body_report(body: &StarBody, opts: &VolumeOptions, convexity_trials: usize) -> BodyReport {
    BodyReport {
        volume: volume(body, opts),
        convexity_witness: convexity_check(body, convexity_trials, opts.seed),
        min_radial: body.radial_bounds.0,
        max_radial: body.radial_bounds.1,
    }
}
