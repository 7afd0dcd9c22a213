//! Vertex-level Green functions on explicit trees, spectral densities and
//! integrability diagnostics built on the reduced solver.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{solve, GreenVector, SolverOptions};
use crate::operator::{realize_on_tree, OperatorParams, VertexOperator};
use crate::tree::{TruncatedTree, VertexId};

/// Boundary data for the deepest sphere of a truncated tree.
#[derive(Debug, Clone, Copy)]
pub enum LeafSeed<'a> {
    /// The tree simply ends: leaves see no forward neighbours.
    Free,
    /// Leaves take the infinite-tree value of their label.
    Labels(&'a GreenVector),
    /// Every leaf takes the same value.
    Constant(Complex64),
}

/// Truncated Green functions `Gamma_x` of every vertex, computed leaves first
/// from `-1/Gamma_x = z - diag(x) + sum_y weight(y) Gamma_y` over the children
/// `y` of `x`. `weight(y)` is `|t(parent(y), y)|^2`.
pub fn upward_sweep<D, W>(tree: &TruncatedTree, z: Complex64, diag: D, weight: W, leaf: LeafSeed<'_>) -> Vec<Complex64>
where
    D: Fn(VertexId) -> f64,
    W: Fn(VertexId) -> f64,
{
    let n = tree.len();
    let depth = tree.depth_limit();
    let mut gamma = vec![Complex64::new(0.0, 0.0); n];
    for v in (0..n).rev() {
        let vert = tree.vertex(v);
        if vert.depth == depth {
            match leaf {
                LeafSeed::Labels(g) => {
                    gamma[v] = g[vert.label];
                    continue;
                }
                LeafSeed::Constant(c) => {
                    gamma[v] = c;
                    continue;
                }
                LeafSeed::Free => {}
            }
        }
        let s: Complex64 = vert.children.iter().map(|&c| gamma[c] * weight(c)).sum();
        gamma[v] = -(z - diag(v) + s).inv();
    }
    gamma
}

/// Per-vertex truncated Green functions of a realized operator.
pub fn truncated_green_on_tree(vo: &VertexOperator<'_>, z: Complex64, leaf: LeafSeed<'_>) -> Vec<Complex64> {
    upward_sweep(vo.tree, z, |v| vo.w[v], |c| vo.t_parent[c] * vo.t_parent[c], leaf)
}

/// Full diagonal Green functions from truncated ones:
/// `G_root = Gamma_root`, `G_y = Gamma_y + |t(x,y)|^2 Gamma_y^2 G_x` for a child `y` of `x`.
pub fn extend_to_full_green(vo: &VertexOperator<'_>, gamma: &[Complex64]) -> Result<Vec<Complex64>> {
    let tree = vo.tree;
    if gamma.len() != tree.len() {
        return Err(Error::Shape {
            expected: tree.len(),
            actual: gamma.len(),
        });
    }
    let mut full = vec![Complex64::new(0.0, 0.0); tree.len()];
    full[tree.root()] = gamma[tree.root()];
    // breadth-first order: parents precede children
    for y in 1..tree.len() {
        let x = tree.vertex(y).parent.expect("non-root vertex has a parent");
        let t2 = vo.t_parent[y] * vo.t_parent[y];
        full[y] = gamma[y] + gamma[y] * gamma[y] * full[x] * t2;
    }
    Ok(full)
}

/// Full Green functions of the infinite label-invariant operator at the
/// vertices of a truncated tree, using the reduced fixed point `gamma_vec`.
pub fn extend_label_invariant(p: &OperatorParams, tree: &TruncatedTree, gamma_vec: &GreenVector) -> Result<Vec<Complex64>> {
    let vo = realize_on_tree(p, tree)?;
    if gamma_vec.len() != p.size() {
        return Err(Error::Shape {
            expected: p.size(),
            actual: gamma_vec.len(),
        });
    }
    let gamma: Vec<Complex64> = tree.vertices().iter().map(|v| gamma_vec[v.label]).collect();
    extend_to_full_green(&vo, &gamma)
}

/// `G_{x,y}` for `y` in the forward tree of `x`, along the path
/// `x = x_0, ..., x_n = y`: `G_x prod_j (-t(x_{j-1}, x_j) Gamma_{x_j})`.
pub fn off_diagonal_green(
    vo: &VertexOperator<'_>,
    gamma: &[Complex64],
    full: &[Complex64],
    x: VertexId,
    y: VertexId,
) -> Result<Complex64> {
    let path = vo.tree.path_from_root(y);
    let start = path
        .iter()
        .position(|&v| v == x)
        .ok_or_else(|| Error::invalid(format!("vertex {y} is not in the forward tree of {x}")))?;
    Ok(path[start + 1..]
        .iter()
        .fold(full[x], |acc, &v| acc * gamma[v] * (-vo.t_parent[v])))
}

/// Reduced Green vectors at `E + i eta` for every grid energy.
pub fn green_on_grid(p: &OperatorParams, grid: &[f64], eta: f64, opts: &SolverOptions) -> Result<Vec<GreenVector>> {
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    grid.par_iter().map(|&e| solve(p, Complex64::new(e, eta), opts)).collect()
}

/// `rho(E) = Im G_root(E + i eta) / pi` for a root of label `root_label`.
pub fn density(p: &OperatorParams, root_label: usize, grid: &[f64], eta: f64, opts: &SolverOptions) -> Result<Vec<f64>> {
    if root_label >= p.size() {
        return Err(Error::invalid(format!("root label index {root_label} out of range")));
    }
    Ok(green_on_grid(p, grid, eta, opts)?
        .iter()
        .map(|g| g[root_label].im / std::f64::consts::PI)
        .collect())
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpPoint {
    pub eta: f64,
    pub integral: f64,
}

/// `int_a^b |G_root(E + i eta)|^p dE` for each `eta`, by the trapezoid rule on
/// `points` equally spaced energies.
pub fn lp_diagnostic(
    p: &OperatorParams,
    root_label: usize,
    interval: [f64; 2],
    points: usize,
    p_exp: f64,
    etas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<LpPoint>> {
    if !(p_exp > 1.0) {
        return Err(Error::invalid(format!("exponent must exceed 1, got {p_exp}")));
    }
    if root_label >= p.size() {
        return Err(Error::invalid(format!("root label index {root_label} out of range")));
    }
    let grid = crate::scan::linear_grid(interval[0], interval[1], points)?;
    etas.iter()
        .map(|&eta| {
            let vals: Vec<f64> = green_on_grid(p, &grid, eta, opts)?
                .iter()
                .map(|g| g[root_label].norm().powf(p_exp))
                .collect();
            Ok(LpPoint {
                eta,
                integral: trapezoid(&grid, &vals),
            })
        })
        .collect()
}
