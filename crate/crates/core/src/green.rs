//! Reduced truncated Green function `Gamma(z)` of a label-invariant operator.
//!
//! `Gamma(z)` is the unique fixed point in the upper half plane of
//! `Phi_z(g)_j = -1 / (z - m_j + sum_k m_jk g_k)`. Equivalently it solves the
//! polynomial system `P_j(z, xi) = (z - m_j + sum_k m_jk xi_k) xi_j + 1 = 0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::{dist_from_gamma, gamma_max};
use crate::operator::OperatorParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Spectral parameter `z = E + i eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    #[serde(rename = "E")]
    pub e: f64,
    pub eta: f64,
}

impl SpectralPoint {
    pub fn new(e: f64, eta: f64) -> Result<Self> {
        if !e.is_finite() || !eta.is_finite() || eta < 0.0 {
            return Err(Error::invalid(format!("bad spectral point E = {e}, eta = {eta}")));
        }
        Ok(SpectralPoint { e, eta })
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.e, self.eta)
    }
}

/// One value per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenVector {
    pub components: Vec<Complex64>,
}

impl GreenVector {
    pub fn new(components: Vec<Complex64>) -> Self {
        GreenVector { components }
    }

    /// The starting point `i (1, ..., 1)`.
    pub fn ones_i(n: usize) -> Self {
        GreenVector::new(vec![I; n])
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn min_im(&self) -> f64 {
        self.components.iter().map(|c| c.im).fold(f64::INFINITY, f64::min)
    }

    pub fn max_im(&self) -> f64 {
        self.components.iter().map(|c| c.im).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn in_upper_half_plane(&self) -> bool {
        self.components.iter().all(|c| c.im > 0.0 && c.re.is_finite())
    }
}

impl std::ops::Index<usize> for GreenVector {
    type Output = Complex64;

    fn index(&self, j: usize) -> &Complex64 {
        &self.components[j]
    }
}

fn check_len(p: &OperatorParams, g: &[Complex64]) -> Result<()> {
    if g.len() != p.size() {
        return Err(Error::Shape {
            expected: p.size(),
            actual: g.len(),
        });
    }
    Ok(())
}

/// `z - m_j + sum_k m_jk g_k`
fn denominators(p: &OperatorParams, z: Complex64, g: &[Complex64]) -> Vec<Complex64> {
    (0..p.size())
        .map(|j| {
            let s: Complex64 = p.offdiag[j].iter().zip(g).map(|(&m, &x)| x * m).sum();
            z - p.diag[j] + s
        })
        .collect()
}

pub fn phi_map(p: &OperatorParams, z: Complex64, g: &GreenVector) -> Result<GreenVector> {
    check_len(p, &g.components)?;
    let den = denominators(p, z, &g.components);
    let mut out = Vec::with_capacity(den.len());
    for (j, d) in den.into_iter().enumerate() {
        if d == Complex64::new(0.0, 0.0) {
            return Err(Error::ZeroDenominator { component: j });
        }
        out.push(-d.inv());
    }
    Ok(GreenVector::new(out))
}

/// `P_j(z, xi)` for every label.
pub fn polynomial_residual(p: &OperatorParams, z: Complex64, xi: &GreenVector) -> Vec<Complex64> {
    denominators(p, z, &xi.components)
        .into_iter()
        .zip(&xi.components)
        .map(|(s, &x)| s * x + 1.0)
        .collect()
}

pub fn max_residual(p: &OperatorParams, z: Complex64, xi: &GreenVector) -> f64 {
    polynomial_residual(p, z, xi).iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Two-sided a priori bounds on `|Gamma_j(z)|`: the upper bound
/// `1 / sqrt(m_jj)` and, from it, the lower bound
/// `1 / (|z| + |m_j| + sum_k m_jk / sqrt(m_kk))`. Bounds that would need
/// `m_kk = 0` are infinite above and zero below.
pub fn gm_bounds(p: &OperatorParams, z: Complex64) -> Vec<(f64, f64)> {
    let upper: Vec<f64> = (0..p.size())
        .map(|k| {
            let mkk = p.offdiag[k][k];
            if mkk > 0.0 {
                1.0 / mkk.sqrt()
            } else {
                f64::INFINITY
            }
        })
        .collect();
    (0..p.size())
        .map(|j| {
            let s: f64 = p.offdiag[j]
                .iter()
                .zip(&upper)
                .filter(|(&m, _)| m > 0.0)
                .map(|(&m, &u)| m * u)
                .sum();
            let lower = if s.is_finite() { 1.0 / (z.norm() + p.diag[j].abs() + s) } else { 0.0 };
            (lower, upper[j])
        })
        .collect()
}

/// Hyperbolic step size `dist(Phi(g), g)`.
fn step_size(next: &GreenVector, g: &GreenVector) -> f64 {
    gamma_max(&next.components, &g.components).map(dist_from_gamma).unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stopping threshold on the hyperbolic step `dist(Phi(g), g)`.
    pub tol: f64,
    pub max_iter: usize,
    /// First level of the eta continuation.
    pub eta_start: f64,
    /// Last level of the eta continuation before the boundary polish.
    pub eta_min: f64,
    /// `Im Gamma` below this counts as a real boundary value.
    pub tau: f64,
    /// Attempt a final Newton solve directly on the real axis.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 10_000,
            eta_start: 1.0,
            eta_min: 1e-7,
            tau: 1e-4,
            polish: true,
        }
    }
}

/// Plain Picard iteration of `Phi_z` from `i (1, ..., 1)`.
pub fn solve_fixed_point(p: &OperatorParams, z: Complex64, tol: f64, max_iter: usize) -> Result<GreenVector> {
    picard(p, z, GreenVector::ones_i(p.size()), tol, max_iter)
}

pub fn picard(p: &OperatorParams, z: Complex64, init: GreenVector, tol: f64, max_iter: usize) -> Result<GreenVector> {
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("fixed point iteration needs Im z > 0, got {z}")));
    }
    check_len(p, &init.components)?;
    if !init.in_upper_half_plane() {
        return Err(Error::invalid("initial guess must lie in the upper half plane"));
    }
    let mut g = init;
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let next = phi_map(p, z, &g)?;
        last = step_size(&next, &g);
        g = next;
        if last < tol {
            return Ok(g);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        eta: z.im,
        last_step: last,
    })
}

/// Newton's method on the polynomial system. Returns `None` if the
/// iteration blows up or stalls.
pub fn newton(p: &OperatorParams, z: Complex64, init: &GreenVector, max_iter: usize) -> Option<GreenVector> {
    let n = p.size();
    let mut g = init.components.clone();
    for _ in 0..max_iter {
        let s = denominators(p, z, &g);
        let res = DVector::from_iterator(n, s.iter().zip(&g).map(|(&sj, &gj)| -(sj * gj + 1.0)));
        let jac = DMatrix::from_fn(n, n, |j, k| {
            let d = if j == k { s[j] } else { Complex64::new(0.0, 0.0) };
            d + g[j] * p.offdiag[j][k]
        });
        let dx = jac.lu().solve(&res)?;
        let scale = g.iter().map(|x| x.norm()).fold(1.0, f64::max);
        let size = dx.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for (x, d) in g.iter_mut().zip(dx.iter()) {
            *x += d;
        }
        if !g.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return None;
        }
        if size <= 1e-15 * scale {
            return Some(GreenVector::new(g));
        }
    }
    let out = GreenVector::new(g);
    (max_residual(p, z, &out) < 1e-12).then_some(out)
}

/// Accepts `g` as the fixed point at `z` (with `Im z > 0`) if it lies in the
/// upper half plane and one more application of `Phi_z` moves it by less than
/// `tol`, or by no more than rounding.
fn accept(p: &OperatorParams, z: Complex64, g: &GreenVector, tol: f64) -> bool {
    if !g.in_upper_half_plane() {
        return false;
    }
    let Ok(next) = phi_map(p, z, g) else {
        return false;
    };
    if step_size(&next, g) < tol {
        return true;
    }
    let scale = g.components.iter().map(|x| x.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let euclid = next
        .components
        .iter()
        .zip(&g.components)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    euclid <= 1e-13 * scale
}

/// Fixed point at a single `z` with `Im z > 0` from a warm start: Newton
/// first, Picard if Newton leaves the upper half plane.
pub fn solve_warm(p: &OperatorParams, z: Complex64, init: &GreenVector, opts: &SolverOptions) -> Result<GreenVector> {
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("need Im z > 0, got {z}")));
    }
    check_len(p, &init.components)?;
    if let Some(g) = newton(p, z, init, 60) {
        if accept(p, z, &g, opts.tol) {
            return Ok(g);
        }
    }
    let start = if init.in_upper_half_plane() {
        init.clone()
    } else {
        GreenVector::ones_i(p.size())
    };
    let g = picard(p, z, start, opts.tol, opts.max_iter)?;
    // Picard stops on the step size; a Newton pass removes the remaining error
    // when it stays put.
    match newton(p, z, &g, 20) {
        Some(h) if accept(p, z, &h, opts.tol) => Ok(h),
        _ => Ok(g),
    }
}

fn eta_ladder(start: f64, target: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut eta = start;
    while eta > target {
        out.push(eta);
        eta *= 0.5;
    }
    out.push(target);
    out
}

/// Fixed point at `z` reached by halving `eta` from `opts.eta_start` down to
/// `Im z`, warm-starting each level from the previous one.
pub fn solve(p: &OperatorParams, z: Complex64, opts: &SolverOptions) -> Result<GreenVector> {
    if !(z.im > 0.0) || !z.re.is_finite() {
        return Err(Error::invalid(format!("need Im z > 0, got {z}")));
    }
    let mut g = GreenVector::ones_i(p.size());
    for eta in eta_ladder(opts.eta_start, z.im) {
        g = solve_warm(p, Complex64::new(z.re, eta), &g, opts)?;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValue {
    pub gamma: GreenVector,
    /// Imaginary part at which `gamma` was computed: `0` when the real-axis
    /// polish was accepted, otherwise `eta_min`.
    pub eta: f64,
    /// `min_j Im Gamma_j < tau`.
    pub real_limit: bool,
}

/// Boundary value `lim_{eta -> 0} Gamma(E + i eta)` by continuation down to
/// `eta_min`, followed by a Newton solve at `eta = 0` that is kept only if it
/// stays in the upper half plane next to the `eta_min` iterate.
pub fn solve_boundary(p: &OperatorParams, e: f64, opts: &SolverOptions) -> Result<BoundaryValue> {
    if !(opts.eta_min > 0.0) {
        return Err(Error::invalid("eta_min must be positive"));
    }
    let g = solve(p, Complex64::new(e, opts.eta_min), opts)?;
    if opts.polish {
        if let Some(h) = newton(p, Complex64::new(e, 0.0), &g, 60) {
            let close = h
                .components
                .iter()
                .zip(&g.components)
                .all(|(a, b)| (a - b).norm() <= 1e-4 * (1.0 + b.norm()));
            if close && h.min_im() >= opts.tau {
                return Ok(BoundaryValue {
                    gamma: h,
                    eta: 0.0,
                    real_limit: false,
                });
            }
        }
    }
    let real_limit = g.min_im() < opts.tau;
    Ok(BoundaryValue {
        gamma: g,
        eta: opts.eta_min,
        real_limit,
    })
}

/// Green function of a regular tree operator with branching `k` and diagonal
/// `w`: the root of `k zeta^2 + (z - w) zeta + 1 = 0` in the upper half plane,
/// continued to the real axis from above.
pub fn closed_form_regular(k: f64, w: f64, z: Complex64) -> Result<Complex64> {
    if !(k > 0.0) {
        return Err(Error::invalid(format!("k must be positive, got {k}")));
    }
    let b = z - w;
    if z.im > 0.0 {
        let root = (b * b - 4.0 * k).sqrt();
        let a = (-b + root) / (2.0 * k);
        let c = (-b - root) / (2.0 * k);
        return Ok(if a.im >= c.im { a } else { c });
    }
    let x = b.re;
    let mut disc = x * x - 4.0 * k;
    if disc.abs() <= 1e-14 * 4.0 * k {
        disc = 0.0;
    }
    if disc < 0.0 {
        Ok(Complex64::new(-x, (-disc).sqrt()) / (2.0 * k))
    } else {
        // the smaller of the two real roots in modulus
        Ok(Complex64::new((-x + x.signum() * disc.sqrt()) / (2.0 * k), 0.0))
    }
}
