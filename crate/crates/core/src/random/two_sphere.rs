//! Two-step expansion around a vertex `o` and one of its children `o'` of the
//! same label, with the averaged contraction coefficient `kappa`.
//!
//! Vectors over `S_{o,o'}` are stored upper sphere first (the children of
//! `o'`, in label order) followed by the lower sphere `S_o \ {o'}`.

use num_complex::Complex64;
use rand::rngs::SmallRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{solve, solve_boundary, SolverOptions};
use crate::hyperbolic::{contraction_quantities, gamma, gamma_max, tau, triangle_substitute_coeffs, PerturbationMode};
use crate::operator::OperatorParams;
use crate::tree::SubstitutionMatrix;

/// Permutation families larger than this are sampled instead of enumerated.
pub const PERMUTATION_CAP: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSphereContext {
    pub root_label: usize,
    pub z: Complex64,
    /// Labels of `S_{o'}`.
    pub upper: Vec<usize>,
    /// Labels of `S_o \ {o'}`.
    pub lower: Vec<usize>,
    /// `|t|^2` from the parent, per entry of `upper ++ lower`.
    pub weights: Vec<f64>,
    /// `|t(o, o')|^2`.
    pub weight_oprime: f64,
    /// `Gamma(z)` per entry of `upper ++ lower`.
    pub h: Vec<Complex64>,
    /// `Gamma_{a(o)}(z)`, the reference value at `o` and at `o'`.
    pub h_root: Complex64,
    pub diag_root: f64,
    pub eps0: f64,
    /// `|Pi|`, possibly beyond the enumeration cap.
    pub pi_size: u128,
    /// Enumerated family when `pi_size <= PERMUTATION_CAP`.
    pub permutations: Option<Vec<Vec<usize>>>,
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).fold(1u128, |a, b| a.saturating_mul(b))
}

/// All permutations of `items` in lexicographic order of positions.
fn permutations_of(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations_of(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

impl TwoSphereContext {
    pub fn len(&self) -> usize {
        self.upper.len() + self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<usize> {
        self.upper.iter().chain(&self.lower).copied().collect()
    }

    /// Positions of each label in `upper ++ lower`.
    fn groups(&self) -> Vec<Vec<usize>> {
        let labels = self.labels();
        let n_labels = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); n_labels];
        for (i, &l) in labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups.retain(|g| !g.is_empty());
        groups
    }

    fn enumerate(&self) -> Vec<Vec<usize>> {
        let mut family = vec![(0..self.len()).collect::<Vec<usize>>()];
        for group in self.groups() {
            let perms = permutations_of(&group);
            let mut next = Vec::with_capacity(family.len() * perms.len());
            for base in &family {
                for perm in &perms {
                    let mut pi = base.clone();
                    for (&from, &to) in group.iter().zip(perm) {
                        pi[from] = to;
                    }
                    next.push(pi);
                }
            }
            family = next;
        }
        family
    }

    /// Uniform label-preserving permutation.
    pub fn random_permutation<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let mut pi: Vec<usize> = (0..self.len()).collect();
        for group in self.groups() {
            let mut shuffled = group.clone();
            shuffled.shuffle(rng);
            for (&from, &to) in group.iter().zip(&shuffled) {
                pi[from] = to;
            }
        }
        pi
    }

    /// `z - m_{a(o)} + sum_{x in S_o} |t|^2 h_x`, the point at which the
    /// diagonal shift acts in the two-step estimate.
    pub fn shifted_reference(&self) -> Complex64 {
        let nu = self.upper.len();
        let lower: Complex64 = self.h[nu..].iter().zip(&self.weights[nu..]).map(|(&x, &w)| x * w).sum();
        self.z - self.diag_root + self.h_root * self.weight_oprime + lower
    }
}

pub fn build_two_sphere_context(
    p: &OperatorParams,
    m: &SubstitutionMatrix,
    root_label: usize,
    z: Complex64,
    opts: &SolverOptions,
) -> Result<TwoSphereContext> {
    if root_label >= m.size() {
        return Err(Error::invalid(format!("root label index {root_label} out of range")));
    }
    if m.entry(root_label, root_label) == 0 {
        return Err(Error::invalid("the root needs a child of its own label"));
    }
    p.check_compatible(m)?;
    let gam = if z.im > 0.0 {
        solve(p, z, opts)?
    } else if z.im == 0.0 {
        let b = solve_boundary(p, z.re, opts)?;
        if b.real_limit || !b.gamma.in_upper_half_plane() {
            return Err(Error::invalid(format!("energy {} is outside the spectrum", z.re)));
        }
        b.gamma
    } else {
        return Err(Error::invalid(format!("need Im z >= 0, got {z}")));
    };
    let j0 = root_label;
    let mut upper = Vec::new();
    for k in 0..m.size() {
        upper.extend(std::iter::repeat_n(k, m.entry(j0, k) as usize));
    }
    let mut lower = upper.clone();
    let first_own = lower.iter().position(|&k| k == j0).expect("M_jj >= 1");
    lower.remove(first_own);

    let w = |k: usize| p.offdiag[j0][k] / m.entry(j0, k) as f64;
    let all: Vec<usize> = upper.iter().chain(&lower).copied().collect();
    let weights = all.iter().map(|&k| w(k)).collect();
    let h: Vec<Complex64> = all.iter().map(|&k| gam[k]).collect();
    let eps0 = h.iter().map(|x| x.im).fold(gam[j0].im, f64::min);

    let mut counts = vec![0usize; m.size()];
    for &k in &all {
        counts[k] += 1;
    }
    let pi_size = counts.iter().map(|&c| factorial(c)).fold(1u128, |a, b| a.saturating_mul(b));
    let mut ctx = TwoSphereContext {
        root_label,
        z,
        upper,
        lower,
        weights,
        weight_oprime: w(j0),
        h,
        h_root: gam[j0],
        diag_root: p.diag[j0],
        eps0,
        pi_size,
        permutations: None,
    };
    if pi_size <= PERMUTATION_CAP as u128 {
        ctx.permutations = Some(ctx.enumerate());
    }
    Ok(ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZValues {
    pub z0: f64,
    pub z1: f64,
    /// `c_{o'}`, whose sign decides whether the two steps compose.
    pub c_oprime: f64,
}

fn check_vector(ctx: &TwoSphereContext, g: &[Complex64]) -> Result<()> {
    if g.len() != ctx.len() {
        return Err(Error::Shape {
            expected: ctx.len(),
            actual: g.len(),
        });
    }
    if g.iter().any(|x| !(x.im > 0.0)) {
        return Err(Error::invalid("g must lie in the upper half plane"));
    }
    Ok(())
}

/// `-1 / (z - v - m_{a(o)} + sum |t|^2 g)`.
fn psi(ctx: &TwoSphereContext, v: f64, sum: Complex64) -> Complex64 {
    -(ctx.z - v - ctx.diag_root + sum).inv()
}

/// `g_{o'} = Psi_{z - v, o'}(g_{S_{o'}})`.
pub fn g_oprime(ctx: &TwoSphereContext, v: f64, g: &[Complex64]) -> Complex64 {
    let nu = ctx.upper.len();
    psi(ctx, v, tau(&g[..nu], &ctx.weights[..nu]))
}

/// `g_o` after two recursion steps with potentials `v_o` at `o` and `v_o'` at `o'`.
pub fn g_root(ctx: &TwoSphereContext, v_o: f64, v_oprime: f64, g: &[Complex64]) -> Complex64 {
    let nu = ctx.upper.len();
    let go = g_oprime(ctx, v_oprime, g);
    psi(ctx, v_o, go * ctx.weight_oprime + tau(&g[nu..], &ctx.weights[nu..]))
}

pub fn z0_z1(ctx: &TwoSphereContext, v: f64, g: &[Complex64], p_exp: f64) -> Result<ZValues> {
    check_vector(ctx, g)?;
    Ok(z_unchecked(ctx, v, g, p_exp))
}

fn z_unchecked(ctx: &TwoSphereContext, v: f64, g: &[Complex64], p_exp: f64) -> ZValues {
    let nu = ctx.upper.len();
    let up = contraction_quantities(&g[..nu], &ctx.h[..nu], &ctx.weights[..nu]).expect("shapes match");

    let mut g_s = Vec::with_capacity(ctx.lower.len() + 1);
    g_s.push(g_oprime(ctx, v, g));
    g_s.extend_from_slice(&g[nu..]);
    let mut h_s = Vec::with_capacity(g_s.len());
    h_s.push(ctx.h_root);
    h_s.extend_from_slice(&ctx.h[nu..]);
    let mut w_s = Vec::with_capacity(g_s.len());
    w_s.push(ctx.weight_oprime);
    w_s.extend_from_slice(&ctx.weights[nu..]);
    let low = contraction_quantities(&g_s, &h_s, &w_s).expect("shapes match");

    let (p_o, c_o) = (low.p[0], low.c[0]);
    let mut z0 = 0.0;
    let mut z1 = 0.0;
    for y in 0..nu {
        z0 += p_o * up.p[y] * c_o * up.c[y] * up.gamma[y];
        z1 += p_o * up.p[y] * up.gamma[y].powf(p_exp);
    }
    for x in 1..low.len() {
        z0 += low.p[x] * low.c[x] * low.gamma[x];
        z1 += low.p[x] * low.gamma[x].powf(p_exp);
    }
    ZValues { z0, z1, c_oprime: c_o }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaValue {
    pub kappa: f64,
    pub permutations: usize,
    pub exact: bool,
}

fn permuted(g: &[Complex64], pi: &[usize]) -> Vec<Complex64> {
    pi.iter().map(|&i| g[i]).collect()
}

/// `sum_pi |Z_0(g o pi)|^p / sum_pi Z_1(g o pi)` over the label-preserving
/// permutations, or over `PERMUTATION_CAP` sampled ones when the family is
/// too large. `seed` only matters in the sampled case.
pub fn kappa(ctx: &TwoSphereContext, v: f64, g: &[Complex64], p_exp: f64, seed: u64) -> Result<KappaValue> {
    check_vector(ctx, g)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut add = |pi: &[usize]| {
        let zv = z_unchecked(ctx, v, &permuted(g, pi), p_exp);
        num += zv.z0.abs().powf(p_exp);
        den += zv.z1;
    };
    let (count, exact) = match &ctx.permutations {
        Some(family) => {
            family.iter().for_each(|pi| add(pi));
            (family.len(), true)
        }
        None => {
            let mut rng = SmallRng::seed_from_u64(seed);
            for _ in 0..PERMUTATION_CAP {
                let pi = ctx.random_permutation(&mut rng);
                add(&pi);
            }
            (PERMUTATION_CAP, false)
        }
    };
    if !(den > 0.0) {
        return Err(Error::Degenerate("g equals h on S_{o,o'}".into()));
    }
    Ok(KappaValue {
        kappa: num / den,
        permutations: count,
        exact,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStepBound {
    /// `gamma(g_o, h_o)`.
    pub lhs: f64,
    pub z0: f64,
    /// `1 + c(lambda)`.
    pub factor: f64,
    /// `C(lambda)`.
    pub offset: f64,
    pub c_oprime: f64,
}

impl TwoStepBound {
    pub fn rhs(&self) -> f64 {
        self.factor * self.z0 + self.offset
    }
}

/// Both sides of the two-step estimate
/// `gamma(g_o, h_o) <= (1 + c) Z_0 + C` for potentials `v_o, v_o'` in
/// `[-lam, lam]`, with `1 + c = c0^2` and `C = c0^2 - 1` where `c0` is the
/// shift coefficient of the substitute triangle inequality.
pub fn two_step_bound(ctx: &TwoSphereContext, lam: f64, v_o: f64, v_oprime: f64, g: &[Complex64]) -> Result<TwoStepBound> {
    check_vector(ctx, g)?;
    if v_o.abs() > lam || v_oprime.abs() > lam {
        return Err(Error::invalid("potentials must lie in [-lambda, lambda]"));
    }
    let c0 = triangle_substitute_coeffs(ctx.shifted_reference(), lam, PerturbationMode::Shift)?;
    let zv = z_unchecked(ctx, v_oprime, g, 1.0);
    Ok(TwoStepBound {
        lhs: gamma(g_root(ctx, v_o, v_oprime, g), ctx.h_root),
        z0: zv.z0,
        factor: c0 * c0,
        offset: c0 * c0 - 1.0,
        c_oprime: zv.c_oprime,
    })
}

/// Point with `gamma_max(g, h) = r`, in a direction drawn uniformly from the
/// product of unit discs scaled by `Im h`.
pub fn sample_on_gamma_sphere<R: Rng>(h: &[Complex64], r: f64, rng: &mut R) -> Vec<Complex64> {
    let dirs: Vec<Complex64> = h
        .iter()
        .map(|_| loop {
            let u = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if u.norm_sqr() <= 1.0 && u.norm_sqr() > 0.0 {
                break u;
            }
        })
        .collect();
    // gamma(h + s u Im h, h) = s^2 |u|^2 / (1 + s Im u) increases in s
    let s = dirs
        .iter()
        .map(|u| {
            let (a, b) = (u.norm_sqr(), u.im);
            (r * b + (r * r * b * b + 4.0 * a * r).sqrt()) / (2.0 * a)
        })
        .fold(f64::INFINITY, f64::min);
    h.iter().zip(&dirs).map(|(&x, &u)| x + u * (s * x.im)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSurvey {
    pub samples: usize,
    pub radius: f64,
    pub lambda: f64,
    pub p_exp: f64,
    pub max_kappa: f64,
    pub delta_hat: f64,
    /// `[min, 5%, 25%, 50%, 75%, 95%, max]`.
    pub quantiles: [f64; 7],
    pub permutations_per_eval: usize,
    pub exact: bool,
    /// Largest `|gamma_max(g, h) / r - 1|` over the samples.
    pub radius_error: f64,
}

/// `kappa` on points drawn at `gamma`-radius uniform in `[R, 10R]` around `h`,
/// with `v` uniform in `[-lam, lam]`.
pub fn kappa_survey(ctx: &TwoSphereContext, lam: f64, radius: f64, n_samples: usize, p_exp: f64, seed: u64) -> Result<KappaSurvey> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if !(lam >= 0.0) {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lam}")));
    }
    let results: Vec<Result<(f64, usize, bool, f64)>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = SmallRng::seed_from_u64(seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let r = rng.random_range(radius..=10.0 * radius);
            let v = if lam > 0.0 { rng.random_range(-lam..=lam) } else { 0.0 };
            let g = sample_on_gamma_sphere(&ctx.h, r, &mut rng);
            let err = (gamma_max(&g, &ctx.h)? / r - 1.0).abs();
            let k = kappa(ctx, v, &g, p_exp, rng.random())?;
            Ok((k.kappa, k.permutations, k.exact, err))
        })
        .collect();
    let mut ks = Vec::with_capacity(n_samples);
    let mut perms = 0;
    let mut exact = true;
    let mut radius_error: f64 = 0.0;
    for r in results {
        let (k, n, e, err) = r?;
        ks.push(k);
        perms = n;
        exact &= e;
        radius_error = radius_error.max(err);
    }
    ks.sort_by(f64::total_cmp);
    let q = |f: f64| ks[((ks.len() - 1) as f64 * f).round() as usize];
    let max_kappa = *ks.last().expect("nonempty");
    Ok(KappaSurvey {
        samples: n_samples,
        radius,
        lambda: lam,
        p_exp,
        max_kappa,
        delta_hat: 1.0 - max_kappa,
        quantiles: [q(0.0), q(0.05), q(0.25), q(0.5), q(0.75), q(0.95), q(1.0)],
        permutations_per_eval: perms,
        exact,
        radius_error,
    })
}
