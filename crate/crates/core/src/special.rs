//! Special functions and sphere constants.
//!
//! Gamma values come from `statrs`. Everything on the unit sphere here uses
//! the probability normalization, so surface areas only enter through the
//! explicit constants below.

use std::f64::consts::PI;

/// Euler Gamma function, including negative non-integer arguments.
///
/// Returns `NaN` at the poles `0, -1, -2, ...` so callers can detect them.
pub fn gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return f64::NAN;
    }
    statrs::function::gamma::gamma(x)
}

/// Reciprocal Gamma, which is entire: zero at the poles of Gamma.
pub fn recip_gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        0.0
    } else {
        1.0 / statrs::function::gamma::gamma(x)
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// Surface area of the unit sphere in `R^n`, i.e. `2 pi^{n/2} / Gamma(n/2)`.
///
/// `unit_sphere_area(1.0) == 2` counts the two points of `S^0`.
pub fn unit_sphere_area(n: f64) -> f64 {
    2.0 * PI.powf(n / 2.0) / gamma(n / 2.0)
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: f64) -> f64 {
    unit_sphere_area(n) / n
}

/// Dimension of the space of degree-`j` spherical harmonics on `S^{n-1}`.
pub fn harmonic_dimension(n: usize, j: usize) -> usize {
    if n == 1 {
        return usize::from(j <= 1);
    }
    if n == 2 {
        return if j == 0 { 1 } else { 2 };
    }
    let top = binomial(j + n - 1, n - 1);
    let low = if j >= 2 { binomial(j + n - 3, n - 1) } else { 0 };
    (top - low) as usize
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Rising factorial `(a)_k`.
pub fn pochhammer(a: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (a + i as f64))
}

/// Normalized Gegenbauer polynomial `P_j` for the sphere `S^{n-1}`, scaled so
/// that `P_j(1) = 1`. For `n = 2` these are Chebyshev polynomials, for `n = 3`
/// Legendre polynomials.
pub fn gegenbauer(n: usize, j: usize, t: f64) -> f64 {
    let mut prev = 1.0;
    if j == 0 {
        return prev;
    }
    let mut cur = t;
    let nf = n as f64;
    for k in 1..j {
        let kf = k as f64;
        let next = if n == 2 {
            2.0 * t * cur - prev
        } else {
            ((2.0 * kf + nf - 2.0) * t * cur - kf * prev) / (kf + nf - 2.0)
        };
        prev = cur;
        cur = next;
    }
    cur
}

/// All normalized Gegenbauer values `P_0(t), ..., P_jmax(t)` in one pass.
pub fn gegenbauer_all(n: usize, jmax: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(jmax + 1);
    out.push(1.0);
    if jmax == 0 {
        return out;
    }
    out.push(t);
    let nf = n as f64;
    for k in 1..jmax {
        let kf = k as f64;
        let next = if n == 2 {
            2.0 * t * out[k] - out[k - 1]
        } else {
            ((2.0 * kf + nf - 2.0) * t * out[k] - kf * out[k - 1]) / (kf + nf - 2.0)
        };
        out.push(next);
    }
    out
}

/// Monomial coefficients (lowest degree first) of the normalized Gegenbauer
/// polynomial `P_j` for `S^{n-1}`.
pub fn gegenbauer_coefficients(n: usize, j: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if j == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    let nf = n as f64;
    for k in 1..j {
        let kf = k as f64;
        let (a, b) = if n == 2 {
            (2.0, 1.0)
        } else {
            (
                (2.0 * kf + nf - 2.0) / (kf + nf - 2.0),
                kf / (kf + nf - 2.0),
            )
        };
        let mut next = vec![0.0; k + 2];
        for (i, c) in cur.iter().enumerate() {
            next[i + 1] += a * c;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= b * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Evaluates a polynomial given by monomial coefficients, lowest degree first.
pub fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// True when `x` lies within `margin` of an odd positive integer.
pub fn near_odd_positive(x: f64, margin: f64) -> bool {
    if x < 1.0 - margin {
        return false;
    }
    let k = ((x - 1.0) / 2.0).round();
    let odd = 2.0 * k + 1.0;
    k >= 0.0 && (x - odd).abs() <= margin
}

/// True when `x` lies within `margin` of one of `start, start + 2, start + 4, ...`.
pub fn near_arithmetic_progression(x: f64, start: f64, margin: f64) -> bool {
    if x < start - margin {
        return false;
    }
    let k = ((x - start) / 2.0).round().max(0.0);
    (x - (start + 2.0 * k)).abs() <= margin
}
