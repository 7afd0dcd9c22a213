//! Hyperbolic geometry of the upper half plane and its finite products.
//!
//! `gamma(g, h) = |g - h|^2 / (Im g Im h)` is the semi-metric in which the
//! recursion maps contract; `dist = acosh(gamma / 2 + 1)` is the Poincaré
//! distance. The contraction quantities below split `gamma` of a weighted sum
//! into per-component pieces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point of the upper half plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    pub re: f64,
    pub im: f64,
}

impl HalfPlanePoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !(im > 0.0) || !re.is_finite() || !im.is_finite() {
            return Err(Error::invalid(format!("{re} + {im}i is not in the upper half plane")));
        }
        Ok(HalfPlanePoint { re, im })
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl TryFrom<Complex64> for HalfPlanePoint {
    type Error = Error;

    fn try_from(z: Complex64) -> Result<Self> {
        HalfPlanePoint::new(z.re, z.im)
    }
}

pub fn gamma(g: Complex64, h: Complex64) -> f64 {
    (g - h).norm_sqr() / (g.im * h.im)
}

pub fn gamma_max(g: &[Complex64], h: &[Complex64]) -> Result<f64> {
    if g.len() != h.len() {
        return Err(Error::Shape {
            expected: h.len(),
            actual: g.len(),
        });
    }
    Ok(g.iter().zip(h).map(|(&a, &b)| gamma(a, b)).fold(0.0, f64::max))
}

/// `acosh(gamma / 2 + 1)`, evaluated as `2 asinh(sqrt(gamma) / 2)` so that
/// small distances keep full precision.
pub fn dist_from_gamma(gamma: f64) -> f64 {
    2.0 * (0.5 * gamma.sqrt()).asinh()
}

/// Poincaré distance on the product, taken in the max norm.
pub fn dist(g: &[Complex64], h: &[Complex64]) -> Result<f64> {
    gamma_max(g, h).map(dist_from_gamma)
}

/// Reflection `g -> -1/g`, an isometry for `gamma`.
pub fn rho(g: Complex64) -> Complex64 {
    -g.inv()
}

/// Weighted sum `sum_x w_x g_x`.
pub fn tau(g: &[Complex64], weights: &[f64]) -> Complex64 {
    g.iter().zip(weights).map(|(&x, &w)| x * w).sum()
}

/// Factor by which the shift `g -> g + s`, `Im s = eta`, contracts `gamma`.
pub fn shift_contraction(eta: f64, g: Complex64, h: Complex64) -> f64 {
    1.0 / ((1.0 + eta / g.im) * (1.0 + eta / h.im))
}

/// Geometry of a `gamma`-ball of radius `r` around a center of the product.
/// Every point of the ball has imaginary parts at least `eps2` and the
/// imaginary parts of the center are at most `eps1` above that floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallGeometry {
    pub eps0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub r: f64,
}

impl BallGeometry {
    pub fn from_radius(center: &[Complex64], r: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::invalid("empty center"));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::invalid(format!("radius {r} must be finite and nonnegative")));
        }
        let eps0 = center.iter().map(|c| c.im).fold(f64::INFINITY, f64::min);
        if !(eps0 > 0.0) {
            return Err(Error::invalid("center is not in the upper half plane"));
        }
        // eps1 is the positive root of e^2 + r eps0 e - r eps0^2
        let eps1 = 0.5 * eps0 * ((r * r + 4.0 * r).sqrt() - r);
        Ok(BallGeometry {
            eps0,
            eps1,
            eps2: eps0 - eps1,
            r,
        })
    }
}

/// Radius `r` for which the ball geometry has `eps1 = delta`.
pub fn radius_for_eps1(eps0: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < eps0) {
        return Err(Error::invalid(format!("need 0 < delta < eps0, got delta = {delta}, eps0 = {eps0}")));
    }
    Ok(delta * delta / ((eps0 - delta) * eps0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationMode {
    /// `g -> g + lambda`
    Shift,
    /// `g -> (1 + lambda) g`
    Scale,
}

/// Constant `c >= 1` of the substitute triangle inequality
/// `gamma(g + l, h) <= c gamma(g, h) + c - 1` (shift) or
/// `gamma((1 + l) g, h) <= (c gamma(g, h) + c - 1) / (1 + l)` (scale).
pub fn triangle_substitute_coeffs(h: Complex64, lam: f64, mode: PerturbationMode) -> Result<f64> {
    if !(h.im > 0.0) {
        return Err(Error::invalid("h must lie in the upper half plane"));
    }
    if !lam.is_finite() {
        return Err(Error::invalid("lambda must be finite"));
    }
    match mode {
        PerturbationMode::Shift => Ok((1.0 + 2.0 * lam.abs() / h.im).powi(2)),
        PerturbationMode::Scale => {
            if lam <= -1.0 {
                return Err(Error::invalid(format!("scale mode needs lambda > -1, got {lam}")));
            }
            Ok((1.0 + 2.0 * 2f64.sqrt() * lam.abs() * h.norm() / h.im).powi(2))
        }
    }
}

/// Quantities splitting `gamma(tau(g), tau(h))` into per-component pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionQuantities {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Row-major `n x n`.
    pub big_q: Vec<f64>,
    /// Row-major `n x n`, values in `(-pi, pi]`.
    pub alpha: Vec<f64>,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ContractionQuantities {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn big_q(&self, x: usize, y: usize) -> f64 {
        self.big_q[x * self.len() + y]
    }

    pub fn alpha(&self, x: usize, y: usize) -> f64 {
        self.alpha[x * self.len() + y]
    }

    /// `sum_x p_x c_x gamma_x`, which equals `gamma(tau(g), tau(h))`.
    pub fn assemble(&self) -> f64 {
        (0..self.len()).map(|x| self.p[x] * self.c[x] * self.gamma[x]).sum()
    }
}

pub fn contraction_quantities(g: &[Complex64], h: &[Complex64], weights: &[f64]) -> Result<ContractionQuantities> {
    let n = h.len();
    if g.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: g.len(),
        });
    }
    if weights.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: weights.len(),
        });
    }
    let sum_h: f64 = h.iter().zip(weights).map(|(x, w)| w * x.im).sum();
    let sum_g: f64 = g.iter().zip(weights).map(|(x, w)| w * x.im).sum();
    let p: Vec<f64> = h.iter().zip(weights).map(|(x, w)| w * x.im / sum_h).collect();
    let q: Vec<f64> = g.iter().zip(weights).map(|(x, w)| w * x.im / sum_g).collect();
    let gam: Vec<f64> = g.iter().zip(h).map(|(&a, &b)| gamma(a, b)).collect();
    let diff: Vec<Complex64> = g.iter().zip(h).map(|(&a, &b)| a - b).collect();

    let mut big_q = vec![0.0; n * n];
    let mut alpha = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            if gam[x] == 0.0 || gam[y] == 0.0 {
                continue;
            }
            let geo = (g[x].im * g[y].im * h[x].im * h[y].im * gam[x] * gam[y]).sqrt();
            let arith = 0.5 * (g[x].im * h[y].im * gam[y] + g[y].im * h[x].im * gam[x]);
            big_q[x * n + y] = (geo / arith).min(1.0);
            alpha[x * n + y] = (diff[x] * diff[y].conj()).arg();
        }
    }
    let c = (0..n)
        .map(|x| (0..n).map(|v| q[v] * big_q[x * n + v] * alpha[x * n + v].cos()).sum())
        .collect();
    Ok(ContractionQuantities {
        p,
        q,
        big_q,
        alpha,
        c,
        gamma: gam,
    })
}

/// Distance on the circle, `min(|a|, 2 pi - |a|)` for `a` in `(-pi, pi]`.
pub fn circle_abs(a: f64) -> f64 {
    let a = a.rem_euclid(std::f64::consts::TAU);
    a.min(std::f64::consts::TAU - a)
}
