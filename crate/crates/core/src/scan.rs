//! Band scans: where on the real axis the boundary values of `Gamma` have
//! positive imaginary part, and where their components are aligned.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{max_residual, solve_boundary, BoundaryValue, SolverOptions};
use crate::operator::OperatorParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub solver: SolverOptions,
    /// Largest pairwise argument difference (radians) of an aligned point.
    pub align_tol: f64,
    /// Interval endpoints are bisected to this width.
    pub refine_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            solver: SolverOptions::default(),
            align_tol: 1e-3,
            refine_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFailure {
    pub index: usize,
    #[serde(rename = "E")]
    pub e: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandScan {
    pub grid: Vec<f64>,
    /// Boundary value per grid point, `None` where the solver failed.
    pub gamma: Vec<Option<Vec<Complex64>>>,
    pub im_gamma: Vec<Vec<f64>>,
    pub sigma1_intervals: Vec<[f64; 2]>,
    pub sigma0_candidates: Vec<f64>,
    /// Minimizer of the misalignment near each candidate.
    pub sigma0_refined: Vec<f64>,
    pub failures: Vec<ScanFailure>,
    pub max_residual: f64,
}

/// Largest `|arg(g_j conj(g_k))|` over label pairs.
pub fn alignment(g: &[Complex64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, a) in g.iter().enumerate() {
        for b in &g[j + 1..] {
            worst = worst.max((a * b.conj()).arg().abs());
        }
    }
    worst
}

fn in_band(v: &BoundaryValue, tau: f64) -> bool {
    v.gamma.max_im() > tau
}

fn bisect_edge(p: &OperatorParams, mut outside: f64, mut inside: f64, opts: &ScanOptions) -> f64 {
    while (inside - outside).abs() > opts.refine_tol {
        let mid = 0.5 * (inside + outside);
        match solve_boundary(p, mid, &opts.solver) {
            Ok(v) if in_band(&v, opts.solver.tau) => inside = mid,
            _ => outside = mid,
        }
    }
    0.5 * (inside + outside)
}

fn misalignment(p: &OperatorParams, e: f64, opts: &ScanOptions) -> f64 {
    match solve_boundary(p, e, &opts.solver) {
        Ok(v) if in_band(&v, opts.solver.tau) => alignment(&v.gamma.components),
        _ => f64::INFINITY,
    }
}

/// Golden-section search for the least misalignment on `[a, b]`.
fn refine_alignment(p: &OperatorParams, mut a: f64, mut b: f64, opts: &ScanOptions) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (misalignment(p, c, opts), misalignment(p, d, opts));
    while b - a > opts.refine_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = misalignment(p, c, opts);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = misalignment(p, d, opts);
        }
    }
    let e = 0.5 * (a + b);
    (e, misalignment(p, e, opts))
}

/// Evenly spaced grid with `points` entries including both ends.
pub fn linear_grid(emin: f64, emax: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(emax > emin) {
        return Err(Error::invalid(format!(
            "need emin < emax and at least two points, got [{emin}, {emax}] with {points}"
        )));
    }
    let step = (emax - emin) / (points - 1) as f64;
    Ok((0..points).map(|i| emin + step * i as f64).collect())
}

pub fn scan_bands(p: &OperatorParams, grid: &[f64], opts: &ScanOptions) -> Result<BandScan> {
    if grid.is_empty() {
        return Err(Error::invalid("empty energy grid"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("energy grid must be strictly increasing"));
    }
    let values: Vec<Result<BoundaryValue>> = grid.par_iter().map(|&e| solve_boundary(p, e, &opts.solver)).collect();

    let n = p.size();
    let mut gamma = Vec::with_capacity(grid.len());
    let mut im_gamma = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    let mut inside = vec![false; grid.len()];
    let mut align = vec![f64::INFINITY; grid.len()];
    let mut worst_residual: f64 = 0.0;
    for (i, v) in values.into_iter().enumerate() {
        match v {
            Ok(v) => {
                let z = Complex64::new(grid[i], v.eta);
                worst_residual = worst_residual.max(max_residual(p, z, &v.gamma));
                inside[i] = in_band(&v, opts.solver.tau);
                if inside[i] {
                    align[i] = alignment(&v.gamma.components);
                }
                im_gamma.push(v.gamma.components.iter().map(|c| c.im).collect());
                gamma.push(Some(v.gamma.components));
            }
            Err(err) => {
                failures.push(ScanFailure {
                    index: i,
                    e: grid[i],
                    error: err.to_string(),
                });
                im_gamma.push(vec![f64::NAN; n]);
                gamma.push(None);
            }
        }
    }

    let mut runs = Vec::new();
    let mut i = 0;
    while i < grid.len() {
        if !inside[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < grid.len() && inside[i + 1] {
            i += 1;
        }
        runs.push((start, i));
        i += 1;
    }
    let sigma1_intervals = runs
        .par_iter()
        .map(|&(a, b)| {
            let lo = if a == 0 { grid[0] } else { bisect_edge(p, grid[a - 1], grid[a], opts) };
            let hi = if b + 1 == grid.len() {
                grid[b]
            } else {
                bisect_edge(p, grid[b + 1], grid[b], opts)
            };
            [lo, hi]
        })
        .collect();

    // local minima of the misalignment, refined between their neighbours
    let minima: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            align[i].is_finite()
                && (i == 0 || align[i] <= align[i - 1])
                && (i + 1 == grid.len() || align[i] <= align[i + 1])
        })
        .collect();
    let refined: Vec<Option<f64>> = minima
        .par_iter()
        .map(|&i| {
            let lo = if i > 0 && align[i - 1].is_finite() { grid[i - 1] } else { grid[i] };
            let hi = if i + 1 < grid.len() && align[i + 1].is_finite() { grid[i + 1] } else { grid[i] };
            let (e, a) = if lo < hi { refine_alignment(p, lo, hi, opts) } else { (grid[i], align[i]) };
            let (e, a) = if a <= align[i] { (e, a) } else { (grid[i], align[i]) };
            (a < opts.align_tol).then_some(e)
        })
        .collect();
    let mut sigma0_candidates = Vec::new();
    let mut sigma0_refined = Vec::new();
    for (&i, r) in minima.iter().zip(refined) {
        if let Some(e) = r {
            sigma0_candidates.push(grid[i]);
            sigma0_refined.push(e);
        }
    }

    Ok(BandScan {
        grid: grid.to_vec(),
        gamma,
        im_gamma,
        sigma1_intervals,
        sigma0_candidates,
        sigma0_refined,
        failures,
        max_residual: worst_residual,
    })
}
