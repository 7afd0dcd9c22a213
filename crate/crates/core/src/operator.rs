//! Label-invariant operators in reduced form.
//!
//! A label-invariant nearest-neighbour operator on `T(M, j)` is fully described
//! by the matrix `m[j][k] = |t(x,y)|^2 M[j][k]` (summed edge weight from a label
//! `j` vertex into its label `k` children) and the diagonal `m[j]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{SubstitutionMatrix, TruncatedTree};

const REGULAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub offdiag: Vec<Vec<f64>>,
    pub diag: Vec<f64>,
}

impl OperatorParams {
    pub fn new(offdiag: Vec<Vec<f64>>, diag: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::invalid("operator needs at least one label"));
        }
        if offdiag.len() != n {
            return Err(Error::Shape {
                expected: n,
                actual: offdiag.len(),
            });
        }
        for row in &offdiag {
            if row.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    actual: row.len(),
                });
            }
            if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::invalid("off-diagonal coefficients must be finite and nonnegative"));
            }
        }
        if diag.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("diagonal coefficients must be finite"));
        }
        Ok(OperatorParams { offdiag, diag })
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn row_sum(&self, j: usize) -> f64 {
        self.offdiag[j].iter().sum()
    }

    /// Fails unless `m[j][k] > 0` exactly where `M[j][k] > 0`.
    pub fn check_compatible(&self, m: &SubstitutionMatrix) -> Result<()> {
        if m.size() != self.size() {
            return Err(Error::Shape {
                expected: m.size(),
                actual: self.size(),
            });
        }
        for j in 0..self.size() {
            for k in 0..self.size() {
                if (self.offdiag[j][k] > 0.0) != (m.entry(j, k) > 0) {
                    return Err(Error::invalid(format!(
                        "zero pattern mismatch at ({j}, {k}): m = {}, M = {}",
                        self.offdiag[j][k],
                        m.entry(j, k)
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn build_adjacency(m: &SubstitutionMatrix) -> OperatorParams {
    let n = m.size();
    let offdiag = (0..n)
        .map(|j| (0..n).map(|k| m.entry(j, k) as f64).collect())
        .collect();
    OperatorParams {
        offdiag,
        diag: vec![0.0; n],
    }
}

/// Graph Laplacian with Dirichlet condition at the root: the root's missing
/// backward edge is compensated, so every vertex has diagonal `1 + sum_k M[j][k]`.
pub fn build_laplacian_dirichlet(m: &SubstitutionMatrix) -> OperatorParams {
    let mut p = build_adjacency(m);
    for j in 0..m.size() {
        p.diag[j] = 1.0 + m.row_sum(j) as f64;
    }
    p
}

pub fn build_normalized_laplacian(m: &SubstitutionMatrix) -> OperatorParams {
    let n = m.size();
    let nu: Vec<f64> = (0..n).map(|j| 1.0 + m.row_sum(j) as f64).collect();
    let offdiag = (0..n)
        .map(|j| (0..n).map(|k| m.entry(j, k) as f64 / (nu[j] * nu[j])).collect())
        .collect();
    OperatorParams {
        offdiag,
        diag: vec![1.0; n],
    }
}

/// Operator description as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Adjacency,
    Laplacian,
    Normalized,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offdiag: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag: Option<Vec<f64>>,
}

impl OperatorSpec {
    pub fn kind(kind: OperatorKind) -> Self {
        OperatorSpec {
            kind,
            offdiag: None,
            diag: None,
        }
    }

    pub fn build(&self, m: &SubstitutionMatrix) -> Result<OperatorParams> {
        let p = match self.kind {
            OperatorKind::Adjacency => build_adjacency(m),
            OperatorKind::Laplacian => build_laplacian_dirichlet(m),
            OperatorKind::Normalized => build_normalized_laplacian(m),
            OperatorKind::Custom => {
                let offdiag = self
                    .offdiag
                    .clone()
                    .ok_or_else(|| Error::invalid("custom operator needs \"offdiag\""))?;
                let diag = self
                    .diag
                    .clone()
                    .ok_or_else(|| Error::invalid("custom operator needs \"diag\""))?;
                OperatorParams::new(offdiag, diag)?
            }
        };
        p.check_compatible(m)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularClass {
    pub regular: bool,
    pub k: Option<f64>,
    pub w: Option<f64>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REGULAR_RTOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Regular tree operator: constant row sums `k` and constant diagonal `w`.
pub fn classify_regular(p: &OperatorParams) -> RegularClass {
    let k = p.row_sum(0);
    let w = p.diag[0];
    let regular = (1..p.size()).all(|j| close(p.row_sum(j), k) && close(p.diag[j], w));
    if regular {
        RegularClass {
            regular,
            k: Some(k),
            w: Some(w),
        }
    } else {
        RegularClass {
            regular,
            k: None,
            w: None,
        }
    }
}

/// Operator written out vertex by vertex on a truncated tree, with `nu = 1`.
/// Edge weights are real and nonnegative and are stored at the child end of
/// each edge, so `t_parent[y] = t(parent(y), y) = t(y, parent(y))`.
#[derive(Debug, Clone)]
pub struct VertexOperator<'a> {
    pub tree: &'a TruncatedTree,
    pub t_parent: Vec<f64>,
    pub w: Vec<f64>,
    pub nu: Vec<f64>,
}

impl VertexOperator<'_> {
    /// `t(x, y)`, zero unless the vertices are adjacent.
    pub fn t(&self, x: usize, y: usize) -> f64 {
        if self.tree.vertex(y).parent == Some(x) {
            self.t_parent[y]
        } else if self.tree.vertex(x).parent == Some(y) {
            self.t_parent[x]
        } else {
            0.0
        }
    }
}

pub fn realize_on_tree<'a>(p: &OperatorParams, tree: &'a TruncatedTree) -> Result<VertexOperator<'a>> {
    let m = tree.matrix();
    p.check_compatible(m)?;
    let n = tree.len();
    let mut t_parent = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (id, v) in tree.vertices().iter().enumerate() {
        w[id] = p.diag[v.label];
        if let Some(parent) = v.parent {
            let a = tree.vertex(parent).label;
            t_parent[id] = (p.offdiag[a][v.label] / m.entry(a, v.label) as f64).sqrt();
        }
    }
    Ok(VertexOperator {
        tree,
        t_parent,
        w,
        nu: vec![1.0; n],
    })
}

/// `s_n = (1 / t_{n+1}) sum_{k <= n} 1 / t_k` for `n = 0 .. len - 2`.
pub fn moderate_growth_indicator(tn: &[f64]) -> Result<Vec<f64>> {
    if tn.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    if tn.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::invalid("sequence entries must be positive and finite"));
    }
    let mut acc = 0.0;
    Ok(tn
        .windows(2)
        .map(|w| {
            acc += 1.0 / w[0];
            acc / w[1]
        })
        .collect())
}
