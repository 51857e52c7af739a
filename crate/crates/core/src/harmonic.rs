//! Functions on the sphere: black-box evaluators, zonal profiles and finite
//! sums of spherical harmonics, plus the projections that turn the first two
//! into the third.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;
use crate::special::{gegenbauer, gegenbauer_all, gegenbauer_coefficients, harmonic_dimension, horner, pochhammer};
use crate::sphere::{dot, halton_grid, SphereRule};

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

/// A `d`-dimensional subspace `F` of `R^N` given by orthonormal columns.
/// Functions of `s = |Pr_F theta|^2` are invariant under `O(F) x O(F^perp)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fiber {
    basis: DMatrix<f64>,
}

impl Fiber {
    pub fn new(basis: DMatrix<f64>) -> Result<Fiber> {
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::<f64>::identity(basis.ncols(), basis.ncols())).amax();
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "fiber basis is not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Fiber { basis })
    }

    /// Span of the first `d` standard basis vectors of `R^dim`.
    pub fn coordinate(dim: usize, d: usize) -> Fiber {
        Fiber {
            basis: DMatrix::from_fn(dim, d, |r, c| if r == c { 1.0 } else { 0.0 }),
        }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Rank-one fiber spanned by a unit `axis`.
    pub fn line(axis: &[f64]) -> Result<Fiber> {
        Fiber::new(DMatrix::from_column_slice(axis.len(), 1, axis))
    }

    /// Whether both fibers span the same subspace.
    pub fn same_subspace(&self, other: &Fiber) -> bool {
        if self.ambient() != other.ambient() || self.rank() != other.rank() {
            return false;
        }
        let p = &self.basis * self.basis.transpose();
        let q = &other.basis * other.basis.transpose();
        (p - q).amax() < 1e-12
    }

    /// Unit vectors `a` in `F` and `b` in `F^perp`, so that
    /// `sqrt(s) a + sqrt(1 - s) b` has `|Pr_F theta|^2 = s`.
    pub fn representative_pair(&self) -> (Vec<f64>, Vec<f64>) {
        let a: Vec<f64> = self.basis.column(0).iter().copied().collect();
        let perp = crate::algebra::complete_basis(&self.basis, crate::algebra::PIVOT_TOL);
        let b: Vec<f64> = perp.column(0).iter().copied().collect();
        (a, b)
    }

    /// `|Pr_F theta|^2`.
    pub fn weight(&self, theta: &[f64]) -> f64 {
        let mut s = 0.0;
        for c in 0..self.basis.ncols() {
            let col = self.basis.column(c);
            let p: f64 = col.iter().zip(theta).map(|(a, b)| a * b).sum();
            s += p * p;
        }
        s
    }
}

/// Monomial coefficients in `s` of the fiber-zonal harmonic of degree `2k`:
/// the average of `P_{2k}(theta . a)` over unit `a` in a rank-`rank` fiber.
pub fn fiber_zonal_polynomial(dim: usize, rank: usize, k: usize) -> Vec<f64> {
    let p = gegenbauer_coefficients(dim, 2 * k);
    (0..=k)
        .map(|i| p[2 * i] * pochhammer(0.5, i) / pochhammer(rank as f64 / 2.0, i))
        .collect()
}

/// One term of a harmonic sum; each is a spherical harmonic of `degree`.
#[derive(Clone)]
pub enum Component {
    /// `coef * P_degree(theta . axis)`.
    Zonal {
        degree: usize,
        coef: f64,
        axis: Arc<Vec<f64>>,
    },
    /// `coef * Z(|Pr_F theta|^2)` with `Z` from [`fiber_zonal_polynomial`].
    FiberZonal {
        degree: usize,
        coef: f64,
        fiber: Arc<Fiber>,
        poly: Arc<Vec<f64>>,
    },
    /// `scale * f(theta)` for a caller-supplied harmonic `f`.
    Explicit {
        degree: usize,
        scale: f64,
        f: Evaluator,
    },
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Zonal { degree, coef, axis } => f
                .debug_struct("Zonal")
                .field("degree", degree)
                .field("coef", coef)
                .field("axis", axis)
                .finish(),
            Component::FiberZonal {
                degree, coef, fiber, ..
            } => f
                .debug_struct("FiberZonal")
                .field("degree", degree)
                .field("coef", coef)
                .field("rank", &fiber.rank())
                .finish(),
            Component::Explicit { degree, scale, .. } => f
                .debug_struct("Explicit")
                .field("degree", degree)
                .field("scale", scale)
                .finish(),
        }
    }
}

impl Component {
    pub fn zonal(degree: usize, coef: f64, axis: Vec<f64>) -> Component {
        Component::Zonal {
            degree,
            coef,
            axis: Arc::new(axis),
        }
    }

    /// Fiber-zonal harmonic of even `degree` about `fiber`.
    pub fn fiber_zonal(degree: usize, coef: f64, fiber: Arc<Fiber>) -> Result<Component> {
        if !degree.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "fiber-zonal harmonics have even degree, got {degree}"
            )));
        }
        let poly = fiber_zonal_polynomial(fiber.ambient(), fiber.rank(), degree / 2);
        Ok(Component::FiberZonal {
            degree,
            coef,
            fiber,
            poly: Arc::new(poly),
        })
    }

    pub fn explicit(degree: usize, scale: f64, f: Evaluator) -> Component {
        Component::Explicit { degree, scale, f }
    }

    pub fn degree(&self) -> usize {
        match self {
            Component::Zonal { degree, .. }
            | Component::FiberZonal { degree, .. }
            | Component::Explicit { degree, .. } => *degree,
        }
    }

    pub fn eval(&self, dim: usize, theta: &[f64]) -> f64 {
        match self {
            Component::Zonal { degree, coef, axis } => {
                coef * gegenbauer(dim, *degree, dot(theta, axis))
            }
            Component::FiberZonal {
                coef, fiber, poly, ..
            } => coef * horner(poly, fiber.weight(theta)),
            Component::Explicit { scale, f, .. } => scale * f(theta),
        }
    }

    /// The same harmonic multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Component {
        let mut out = self.clone();
        match &mut out {
            Component::Zonal { coef, .. } | Component::FiberZonal { coef, .. } => *coef *= factor,
            Component::Explicit { scale, .. } => *scale *= factor,
        }
        out
    }

    /// Image under an orthogonal map `g`: `theta -> c(g^T theta)`.
    pub fn rotated(&self, g: &DMatrix<f64>) -> Result<Component> {
        match self {
            Component::Zonal { degree, coef, axis } => {
                let moved = crate::sphere::mat_vec(g, axis);
                Ok(Component::zonal(*degree, *coef, moved))
            }
            Component::FiberZonal {
                degree,
                coef,
                fiber,
                poly,
            } => Ok(Component::FiberZonal {
                degree: *degree,
                coef: *coef,
                fiber: Arc::new(Fiber::new(g * fiber.basis())?),
                poly: poly.clone(),
            }),
            Component::Explicit { degree, scale, f } => {
                let gt = g.transpose();
                let f = f.clone();
                let inner: Evaluator = Arc::new(move |x: &[f64]| f(&crate::sphere::mat_vec(&gt, x)));
                Ok(Component::explicit(*degree, *scale, inner))
            }
        }
    }
}

/// Finite sum of spherical harmonics on `S^{dim-1}`.
#[derive(Debug, Clone)]
pub struct HarmonicSum {
    dim: usize,
    components: Vec<Component>,
}

impl HarmonicSum {
    pub fn new(dim: usize, components: Vec<Component>) -> HarmonicSum {
        HarmonicSum { dim, components }
    }

    pub fn constant(dim: usize, value: f64) -> HarmonicSum {
        let mut axis = vec![0.0; dim];
        axis[0] = 1.0;
        HarmonicSum::new(dim, vec![Component::zonal(0, value, axis)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn max_degree(&self) -> usize {
        self.components.iter().map(Component::degree).max().unwrap_or(0)
    }

    pub fn parity(&self) -> Parity {
        let odd = self.components.iter().any(|c| c.degree() % 2 == 1);
        let even = self.components.iter().any(|c| c.degree() % 2 == 0);
        match (even, odd) {
            (_, false) => Parity::Even,
            (false, true) => Parity::Odd,
            (true, true) => Parity::Mixed,
        }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.components.iter().map(|c| c.eval(self.dim, theta)).sum()
    }

    /// Multiplies each degree-`j` component by `multiplier(j)`, dropping
    /// components whose multiplier is exactly zero.
    pub fn map_degrees(&self, multiplier: impl Fn(usize) -> f64) -> HarmonicSum {
        let components = self
            .components
            .iter()
            .filter_map(|c| {
                let m = multiplier(c.degree());
                (m != 0.0).then(|| c.scaled(m))
            })
            .collect();
        HarmonicSum::new(self.dim, components)
    }

    pub fn scaled(&self, factor: f64) -> HarmonicSum {
        self.map_degrees(|_| factor)
    }

    pub fn plus(&self, other: &HarmonicSum) -> HarmonicSum {
        assert_eq!(self.dim, other.dim, "harmonic sums live on different spheres");
        let mut components = self.components.clone();
        components.extend(other.components.iter().cloned());
        HarmonicSum::new(self.dim, components)
    }

    /// Whether every non-constant component depends on `theta` only through
    /// `|Pr_F theta|^2` for this `fiber`.
    pub fn is_fiber_zonal_about(&self, fiber: &Fiber) -> bool {
        self.components.iter().all(|c| match c {
            _ if c.degree() == 0 && !matches!(c, Component::Explicit { .. }) => true,
            Component::FiberZonal { fiber: f, .. } => f.same_subspace(fiber),
            Component::Zonal { degree, axis, .. } => {
                degree % 2 == 0 && fiber.rank() == 1 && Fiber::line(axis).is_ok_and(|l| l.same_subspace(fiber))
            }
            Component::Explicit { .. } => false,
        })
    }

    /// The fiber of the first non-constant component, if the whole sum is
    /// fiber-zonal about it.
    pub fn common_fiber(&self) -> Option<Arc<Fiber>> {
        let fiber = self.components.iter().find_map(|c| match c {
            Component::FiberZonal { fiber, .. } => Some(fiber.clone()),
            Component::Zonal { degree, axis, .. } if *degree > 0 => Fiber::line(axis).ok().map(Arc::new),
            _ => None,
        })?;
        self.is_fiber_zonal_about(&fiber).then_some(fiber)
    }

    /// The part of degree `degree`.
    pub fn degree_part(&self, degree: usize) -> HarmonicSum {
        HarmonicSum::new(
            self.dim,
            self.components
                .iter()
                .filter(|c| c.degree() == degree)
                .cloned()
                .collect(),
        )
    }

    /// Drops every component above `cap`.
    pub fn truncated(&self, cap: usize) -> HarmonicSum {
        HarmonicSum::new(
            self.dim,
            self.components
                .iter()
                .filter(|c| c.degree() <= cap)
                .cloned()
                .collect(),
        )
    }

    pub fn rotated(&self, g: &DMatrix<f64>) -> Result<HarmonicSum> {
        let components = self
            .components
            .iter()
            .map(|c| c.rotated(g))
            .collect::<Result<Vec<_>>>()?;
        Ok(HarmonicSum::new(self.dim, components))
    }
}

/// A function on `S^{dim-1}` in one of three representations.
#[derive(Clone)]
pub enum SphericalFunction {
    Evaluator {
        dim: usize,
        f: Evaluator,
        parity: Parity,
    },
    /// `profile(theta . axis)`.
    Zonal {
        dim: usize,
        axis: Arc<Vec<f64>>,
        profile: Profile,
    },
    Harmonic(HarmonicSum),
}

impl fmt::Debug for SphericalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SphericalFunction::Evaluator { dim, parity, .. } => {
                write!(f, "Evaluator(dim = {dim}, {parity:?})")
            }
            SphericalFunction::Zonal { dim, axis, .. } => write!(f, "Zonal(dim = {dim}, axis = {axis:?})"),
            SphericalFunction::Harmonic(h) => write!(f, "Harmonic({h:?})"),
        }
    }
}

impl SphericalFunction {
    pub fn evaluator(dim: usize, parity: Parity, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        SphericalFunction::Evaluator {
            dim,
            f: Arc::new(f),
            parity,
        }
    }

    pub fn zonal(dim: usize, axis: Vec<f64>, profile: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SphericalFunction::Zonal {
            dim,
            axis: Arc::new(axis),
            profile: Arc::new(profile),
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        SphericalFunction::Harmonic(HarmonicSum::constant(dim, value))
    }

    pub fn dim(&self) -> usize {
        match self {
            SphericalFunction::Evaluator { dim, .. } | SphericalFunction::Zonal { dim, .. } => *dim,
            SphericalFunction::Harmonic(h) => h.dim(),
        }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        match self {
            SphericalFunction::Evaluator { f, .. } => f(theta),
            SphericalFunction::Zonal { axis, profile, .. } => profile(dot(theta, axis)),
            SphericalFunction::Harmonic(h) => h.eval(theta),
        }
    }

    pub fn parity(&self) -> Parity {
        match self {
            SphericalFunction::Evaluator { parity, .. } => *parity,
            SphericalFunction::Zonal { .. } => Parity::Mixed,
            SphericalFunction::Harmonic(h) => h.parity(),
        }
    }

    pub fn as_harmonic(&self) -> Option<&HarmonicSum> {
        match self {
            SphericalFunction::Harmonic(h) => Some(h),
            _ => None,
        }
    }

    /// Shareable evaluator for this function.
    pub fn to_evaluator(&self) -> Evaluator {
        let me = self.clone();
        Arc::new(move |x: &[f64]| me.eval(x))
    }
}

/// Projection coefficients below this fraction of the largest one are
/// treated as rounding noise and dropped.
const ROUNDOFF_FLOOR: f64 = 1e-14;

/// Gegenbauer coefficients `c_j` with `g(t) ~ sum_j c_j P_j(t)` for `j <= max_degree`,
/// using `nodes` Gauss points for the slice density on `S^{dim-1}`.
pub fn zonal_coefficients(dim: usize, max_degree: usize, nodes: usize, profile: impl Fn(f64) -> f64) -> Vec<f64> {
    let rule = GaussRule::sphere_slice(nodes, dim);
    let values: Vec<f64> = rule.nodes.iter().map(|&t| profile(t)).collect();
    let mut coeffs = vec![0.0; max_degree + 1];
    for ((&t, &w), &g) in rule.nodes.iter().zip(&rule.weights).zip(&values) {
        let p = gegenbauer_all(dim, max_degree, t);
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c += w * g * p[j];
        }
    }
    for (j, c) in coeffs.iter_mut().enumerate() {
        *c *= harmonic_dimension(dim, j) as f64;
    }
    coeffs
}

/// Harmonic sum of a zonal profile about `axis`, truncated at `max_degree`.
pub fn project_zonal(
    dim: usize,
    axis: &[f64],
    max_degree: usize,
    nodes: usize,
    profile: impl Fn(f64) -> f64,
) -> HarmonicSum {
    let coeffs = zonal_coefficients(dim, max_degree, nodes, profile);
    let floor = ROUNDOFF_FLOOR * coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let axis = Arc::new(axis.to_vec());
    let components = coeffs
        .into_iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > floor)
        .map(|(j, c)| Component::Zonal {
            degree: j,
            coef: c,
            axis: axis.clone(),
        })
        .collect();
    HarmonicSum::new(dim, components)
}

/// Rule for `E[g(s)]` where `s = |Pr_F theta|^2`, which is `Beta(d/2, (N-d)/2)`.
pub fn fiber_weight_rule(dim: usize, rank: usize, nodes: usize) -> GaussRule {
    if rank == dim {
        return GaussRule {
            nodes: vec![1.0],
            weights: vec![1.0],
        };
    }
    GaussRule::beta(nodes, rank as f64 / 2.0, (dim - rank) as f64 / 2.0)
}

/// Fiber-zonal expansion of `profile(|Pr_F theta|^2)` up to harmonic degree
/// `max_degree` (even degrees only; odd parts vanish).
pub fn project_fiber(fiber: Arc<Fiber>, max_degree: usize, nodes: usize, profile: impl Fn(f64) -> f64) -> HarmonicSum {
    let dim = fiber.ambient();
    let rule = fiber_weight_rule(dim, fiber.rank(), nodes);
    let values: Vec<f64> = rule.nodes.iter().map(|&s| profile(s)).collect();
    let mut components = Vec::new();
    let mut coeffs = Vec::new();
    for k in 0..=max_degree / 2 {
        let poly = fiber_zonal_polynomial(dim, fiber.rank(), k);
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&s, &w), &g) in rule.nodes.iter().zip(&rule.weights).zip(&values) {
            let z = horner(&poly, s);
            num += w * g * z;
            den += w * z * z;
        }
        let coef = num / den;
        coeffs.push((k, coef, poly));
    }
    let floor = ROUNDOFF_FLOOR * coeffs.iter().fold(0.0f64, |m, c| m.max(c.1.abs()));
    for (k, coef, poly) in coeffs {
        if coef.abs() > floor {
            components.push(Component::FiberZonal {
                degree: 2 * k,
                coef,
                fiber: fiber.clone(),
                poly: Arc::new(poly),
            });
        }
    }
    HarmonicSum::new(dim, components)
}

/// Result of a dense-grid projection.
#[derive(Debug, Clone)]
pub struct Projection {
    pub sum: HarmonicSum,
    /// Root-mean-square difference between the function and its projection
    /// on the integration grid.
    pub rms_residual: f64,
}

/// Projects a black-box function on `S^{dim-1}` (`dim <= 4`) onto harmonics of
/// degree `<= max_degree`, keeping only even degrees when `even_only`.
///
/// Each degree-`j` space is spanned by zonal harmonics `P_j(. a_k)` about a
/// fixed low-discrepancy set of axes; the coefficients solve the normal
/// equations with Gram matrix `P_j(a_k . a_l) / dim H_j` by pseudo-inverse.
pub fn project_dense(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    dim: usize,
    max_degree: usize,
    even_only: bool,
    resolution: usize,
) -> Result<Projection> {
    let rule = SphereRule::product(dim, resolution)?;
    let values: Vec<f64> = rule.points().map(f).collect();
    let mut components = Vec::new();
    let step = if even_only { 2 } else { 1 };
    for j in (0..=max_degree).step_by(step) {
        let hdim = harmonic_dimension(dim, j);
        let count = if j == 0 { 1 } else { 2 * hdim };
        let axes = halton_grid(dim, count, 0x5eed_0000 + j as u64)?;
        let gram = DMatrix::from_fn(count, count, |k, l| {
            gegenbauer(dim, j, dot(&axes[k], &axes[l])) / hdim as f64
        });
        let rhs: Vec<f64> = axes
            .iter()
            .map(|a| {
                rule.points()
                    .zip(rule.weights())
                    .zip(&values)
                    .map(|((p, w), v)| w * v * gegenbauer(dim, j, dot(p, a)))
                    .sum()
            })
            .collect();
        let pinv = gram
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Unsupported(format!("projection failed at degree {j}: {e}")))?;
        let coef = pinv * nalgebra::DVector::from_vec(rhs);
        for (a, c) in axes.into_iter().zip(coef.iter()) {
            components.push(Component::zonal(j, *c, a));
        }
    }
    let sum = HarmonicSum::new(dim, components);
    let mse: f64 = rule
        .points()
        .zip(rule.weights())
        .zip(&values)
        .map(|((p, w), v)| w * (v - sum.eval(p)).powi(2))
        .sum();
    Ok(Projection {
        sum,
        rms_residual: mse.sqrt(),
    })
}

/// Finite-difference Laplacian of the degree-`degree` homogeneous extension
/// of `f` at the unit point `theta`, relative to `max(1, |f(theta)|)`.
/// A spherical harmonic of that degree gives zero.
pub fn harmonic_defect(f: &dyn Fn(&[f64]) -> f64, degree: usize, theta: &[f64]) -> f64 {
    let ext = |x: &[f64]| {
        let r = crate::sphere::norm(x);
        let u: Vec<f64> = x.iter().map(|v| v / r).collect();
        r.powi(degree as i32) * f(&u)
    };
    let lap = |h: f64| {
        let mut x = theta.to_vec();
        let centre = ext(&x);
        let mut acc = 0.0;
        for i in 0..theta.len() {
            let orig = x[i];
            x[i] = orig + h;
            let plus = ext(&x);
            x[i] = orig - h;
            let minus = ext(&x);
            x[i] = orig;
            acc += plus + minus - 2.0 * centre;
        }
        acc / (h * h)
    };
    let rich = (4.0 * lap(5e-3) - lap(1e-2)) / 3.0;
    rich.abs() / f(theta).abs().max(1.0)
}
