//! One-dimensional quadrature: Gauss-Jacobi rules from the Golub-Welsch
//! eigenproblem and double-exponential (tanh-sinh) integration for endpoint
//! singularities.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::special::ln_gamma;

/// Nodes and weights of an interpolatory rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss-Jacobi rule for the weight `(1 - x)^a (1 + x)^b` on `[-1, 1]`.
    /// Requires `a, b > -1`. Weights integrate the weight function exactly.
    pub fn jacobi(n: usize, a: f64, b: f64) -> GaussRule {
        assert!(n >= 1 && a > -1.0 && b > -1.0, "invalid Jacobi parameters");
        let ab = a + b;
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        diag[0] = (b - a) / (ab + 2.0);
        for (k, slot) in diag.iter_mut().enumerate().skip(1) {
            let kf = k as f64;
            let s = 2.0 * kf + ab;
            *slot = (b * b - a * a) / (s * (s + 2.0));
        }
        for (idx, slot) in off.iter_mut().enumerate() {
            let k = (idx + 1) as f64;
            let s = 2.0 * k + ab;
            let num = 4.0 * k * (k + a) * (k + b) * (k + ab);
            let den = s * s * (s + 1.0) * (s - 1.0);
            // k = 1 with a + b = -1 or 0 needs the limiting form.
            let beta = if den.abs() < 1e-300 || (s - 1.0).abs() < 1e-14 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                num / den
            };
            *slot = beta.sqrt();
        }
        let mut jm = DMatrix::zeros(n, n);
        for i in 0..n {
            jm[(i, i)] = diag[i];
            if i + 1 < n {
                jm[(i, i + 1)] = off[i];
                jm[(i + 1, i)] = off[i];
            }
        }
        let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
            - ln_gamma(ab + 2.0))
        .exp();
        let eig = SymmetricEigen::new(jm);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut rule = GaussRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        };
        if a == b {
            rule.symmetrize();
        }
        rule
    }

    /// Gauss-Legendre rule on `[-1, 1]`.
    pub fn legendre(n: usize) -> GaussRule {
        GaussRule::jacobi(n, 0.0, 0.0)
    }

    /// Rule for `E[g(t)]` where `t = theta . u` for `theta` uniform on
    /// `S^{dim-1}`, i.e. density proportional to `(1 - t^2)^{(dim-3)/2}`.
    /// Weights sum to one. Needs `dim >= 2`.
    pub fn sphere_slice(n: usize, dim: usize) -> GaussRule {
        let e = (dim as f64 - 3.0) / 2.0;
        GaussRule::jacobi(n, e, e).normalized()
    }

    /// Rule for `E[g(s)]` with `s ~ Beta(p, q)` on `[0, 1]`. Weights sum to one.
    pub fn beta(n: usize, p: f64, q: f64) -> GaussRule {
        let j = GaussRule::jacobi(n, q - 1.0, p - 1.0).normalized();
        GaussRule {
            nodes: j.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
            weights: j.weights,
        }
    }

    /// Affine map of a rule on `[-1, 1]` to `[lo, hi]`, scaling weights.
    pub fn on_interval(&self, lo: f64, hi: f64) -> GaussRule {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        GaussRule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }

    pub fn normalized(mut self) -> GaussRule {
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    fn symmetrize(&mut self) {
        let n = self.nodes.len();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (self.nodes[j] - self.nodes[i]);
            let w = 0.5 * (self.weights[i] + self.weights[j]);
            self.nodes[i] = -x;
            self.nodes[j] = x;
            self.weights[i] = w;
            self.weights[j] = w;
        }
        if n % 2 == 1 {
            self.nodes[n / 2] = 0.0;
        }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Double-exponential integration on a finite interval.
///
/// The integrand receives `(x, x - lo, hi - x)`, with the two distances
/// computed without cancellation, so algebraic endpoint singularities such
/// as `(hi - x)^{-1/2}` are evaluated accurately.
#[derive(Debug, Clone, Copy)]
pub struct TanhSinh {
    pub max_level: u32,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for TanhSinh {
    fn default() -> Self {
        TanhSinh {
            max_level: 9,
            rel_tol: 1e-13,
            abs_tol: 1e-300,
        }
    }
}

// Far enough out that the node gap underflows before the abscissa range ends,
// so integrable endpoint singularities lose no tail mass.
const TANH_SINH_T_MAX: f64 = 6.2;

impl TanhSinh {
    pub fn with_tol(rel_tol: f64) -> Self {
        TanhSinh {
            rel_tol,
            ..TanhSinh::default()
        }
    }

    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64, f64, f64) -> f64) -> Estimate {
        let half = 0.5 * (hi - lo);
        // Contribution at abscissa t (weights already include dt scaling via h).
        let term = |t: f64| -> f64 {
            let u = FRAC_PI_2 * t.sinh();
            let cu = u.cosh();
            let w = FRAC_PI_2 * t.cosh() / (cu * cu);
            // Distance from x to the nearer endpoint: half * (1 - tanh|u|).
            let e = (-2.0 * u.abs()).exp();
            let gap = half * 2.0 * e / (1.0 + e);
            if gap <= 0.0 || !w.is_finite() {
                return 0.0;
            }
            let (x, dl, dr) = if u >= 0.0 {
                (hi - gap, 2.0 * half - gap, gap)
            } else {
                (lo + gap, gap, 2.0 * half - gap)
            };
            let v = f(x, dl, dr);
            if v.is_finite() {
                w * v
            } else {
                0.0
            }
        };
        let mut h = 1.0;
        let mut sum = term(0.0);
        let mut k = 1;
        while k as f64 * h <= TANH_SINH_T_MAX {
            let t = k as f64 * h;
            sum += term(t) + term(-t);
            k += 1;
        }
        let mut value = sum * h * half;
        let mut error = f64::INFINITY;
        for _ in 0..self.max_level {
            h *= 0.5;
            let mut add = 0.0;
            let mut k = 1;
            while k as f64 * h <= TANH_SINH_T_MAX {
                let t = k as f64 * h;
                add += term(t) + term(-t);
                k += 2;
            }
            sum += add;
            let next = sum * h * half;
            error = (next - value).abs();
            value = next;
            if error <= self.rel_tol * value.abs() || error <= self.abs_tol {
                break;
            }
        }
        Estimate { value, error }
    }

    /// Convenience wrapper for integrands that only need `x`.
    pub fn integrate_simple(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> Estimate {
        self.integrate(lo, hi, |x, _, _| f(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;
    use std::f64::consts::PI;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::legendre(10);
        for k in 0..20 {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            let got = rule.integrate(|x| x.powi(k));
            assert!((got - exact).abs() < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn jacobi_weights_sum_to_beta_function() {
        let (a, b) = (0.5, -0.3);
        let rule = GaussRule::jacobi(12, a, b);
        let total: f64 = rule.weights.iter().sum();
        let exact = 2f64.powf(a + b + 1.0) * gamma(a + 1.0) * gamma(b + 1.0) / gamma(a + b + 2.0);
        assert!((total - exact).abs() < 1e-13);
        // Chebyshev first kind: nodes cos((2k-1) pi / 2n).
        let cheb = GaussRule::jacobi(5, -0.5, -0.5);
        for (i, x) in cheb.nodes.iter().enumerate() {
            let expected = -((2 * i + 1) as f64 * PI / 10.0).cos();
            assert!((x - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_slice_second_moment() {
        for dim in 2..10 {
            let rule = GaussRule::sphere_slice(8, dim);
            let m2 = rule.integrate(|t| t * t);
            assert!((m2 - 1.0 / dim as f64).abs() < 1e-14, "dim = {dim}");
        }
    }

    #[test]
    fn beta_rule_mean() {
        let rule = GaussRule::beta(6, 1.5, 2.5);
        assert!((rule.integrate(|s| s) - 1.5 / 4.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_endpoint_singularities() {
        let ts = TanhSinh::default();
        let r = ts.integrate(0.0, 1.0, |_, dl, _| dl.powf(-0.5));
        assert!((r.value - 2.0).abs() < 1e-12, "{r:?}");
        let r = ts.integrate(-1.0, 1.0, |_, dl, dr| 1.0 / (dl * dr).sqrt());
        assert!((r.value - PI).abs() < 1e-12, "{r:?}");
        let r = ts.integrate_simple(0.0, 2.0, |x| x.exp());
        assert!((r.value - (2f64.exp() - 1.0)).abs() < 1e-13);
        // Beta(0.3, 0.7) = Gamma(0.3) Gamma(0.7).
        let r = ts.integrate(0.0, 1.0, |_, dl, dr| dl.powf(-0.7) * dr.powf(-0.3));
        let exact = gamma(0.3) * gamma(0.7);
        assert!((r.value - exact).abs() < 1e-11 * exact, "{r:?}");
    }
}
