//! Ground truth on truncated trees by plain linear algebra.
//!
//! Nothing here calls the recursion code: the operator is written out as a
//! matrix, resolvent entries come from an LU factorization with partial
//! pivoting, and spectral measures from a symmetric eigensolver.
//!
//! The factorization stores rows sparsely and skips updates with a zero
//! multiplier or a zero pivot-row entry; otherwise it performs exactly the
//! operations of dense Gaussian elimination. Matrix indices number the
//! vertices deepest sphere first, which keeps the fill-in small.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::VertexOperator;
use crate::tree::VertexId;

pub const LU_CAP: usize = 20_000;
pub const EIGEN_CAP: usize = 4_000;

/// Hermitian matrix of an operator restricted to a truncated tree.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMatrix {
    n: usize,
    /// Row `i` as `column -> value`.
    rows: Vec<BTreeMap<usize, Complex64>>,
}

impl OracleMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Matrix index of a vertex.
    pub fn index(&self, v: VertexId) -> usize {
        self.n - 1 - v
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rows[i].get(&j).copied().unwrap_or_default()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|(&j, &a)| (a - self.get(j, i).conj()).norm() <= tol))
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    fn to_real_symmetric(&self) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for (&j, a) in row {
                if a.im != 0.0 {
                    return Err(Error::invalid("eigensolver expects real entries"));
                }
                out[(i, j)] = a.re;
            }
        }
        Ok(out)
    }
}

/// `H_{T'}` with entries `t(x, y)` off the diagonal and `w(x)` on it.
pub fn assemble_matrix(vo: &VertexOperator<'_>) -> Result<OracleMatrix> {
    let n = vo.tree.len();
    if n > LU_CAP {
        return Err(Error::SizeCap {
            what: "oracle matrix dimension",
            needed: n as u128,
            limit: LU_CAP as u128,
        });
    }
    let mut rows = vec![BTreeMap::new(); n];
    let idx = |v: usize| n - 1 - v;
    for (v, vert) in vo.tree.vertices().iter().enumerate() {
        if vo.w[v] != 0.0 {
            rows[idx(v)].insert(idx(v), Complex64::new(vo.w[v], 0.0));
        }
        for &c in &vert.children {
            let t = vo.t(v, c);
            if t != 0.0 {
                rows[idx(v)].insert(idx(c), Complex64::new(t, 0.0));
                rows[idx(c)].insert(idx(v), Complex64::new(vo.t(c, v), 0.0));
            }
        }
    }
    let mat = OracleMatrix { n, rows };
    assert!(mat.is_hermitian(0.0), "assembled matrix must be Hermitian");
    Ok(mat)
}

/// LU factorization of `H - z` with partial pivoting, `P (H - z) = L U`.
#[derive(Debug, Clone)]
pub struct Resolvent {
    n: usize,
    /// Row `i` holds `L[i][j]` for `j < i` and `U[i][j]` for `j >= i`.
    rows: Vec<BTreeMap<usize, Complex64>>,
    /// `perm[i]` is the original row now at position `i`.
    perm: Vec<usize>,
}

impl Resolvent {
    pub fn new(mat: &OracleMatrix, z: Complex64) -> Result<Self> {
        let n = mat.n;
        let mut rows = mat.rows.clone();
        for (i, row) in rows.iter_mut().enumerate() {
            *row.entry(i).or_default() -= z;
        }
        // rows (by current position) with a nonzero in each column
        let mut col_rows: Vec<BTreeMap<usize, ()>> = vec![BTreeMap::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for &j in row.keys() {
                col_rows[j].insert(i, ());
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let cands: Vec<usize> = col_rows[k].range(k..).map(|(&i, _)| i).collect();
            let mut piv = k;
            let mut best = 0.0;
            for &i in &cands {
                let a = rows[i].get(&k).map_or(0.0, |x| x.norm());
                if a > best {
                    best = a;
                    piv = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Degenerate(format!("singular matrix at column {k}")));
            }
            if piv != k {
                for &j in rows[k].keys() {
                    col_rows[j].remove(&k);
                }
                for &j in rows[piv].keys() {
                    col_rows[j].remove(&piv);
                }
                rows.swap(k, piv);
                perm.swap(k, piv);
                for &j in rows[k].keys() {
                    col_rows[j].insert(k, ());
                }
                for &j in rows[piv].keys() {
                    col_rows[j].insert(piv, ());
                }
            }
            let pivot = rows[k][&k];
            let upper: Vec<(usize, Complex64)> = rows[k].range(k + 1..).map(|(&j, &a)| (j, a)).collect();
            let below: Vec<usize> = col_rows[k].range(k + 1..).map(|(&i, _)| i).collect();
            for i in below {
                let l = rows[i][&k] / pivot;
                rows[i].insert(k, l);
                if l == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for &(j, a) in &upper {
                    let e = rows[i].entry(j).or_insert_with(|| {
                        col_rows[j].insert(i, ());
                        Complex64::new(0.0, 0.0)
                    });
                    *e -= l * a;
                }
            }
        }
        Ok(Resolvent { n, rows, perm })
    }

    /// Solution of `(H - z) phi = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: Complex64 = self.rows[i].range(..i).map(|(&j, &l)| l * y[j]).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let s: Complex64 = self.rows[i].range(i + 1..).map(|(&j, &u)| u * y[j]).sum();
            y[i] = (y[i] - s) / self.rows[i][&i];
        }
        y
    }

    /// `<delta_x, (H - z)^{-1} delta_y>` by matrix index.
    pub fn entry(&self, x: usize, y: usize) -> Complex64 {
        let mut b = vec![Complex64::new(0.0, 0.0); self.n];
        b[y] = Complex64::new(1.0, 0.0);
        self.solve(&b)[x]
    }

    /// Stored entries of the factors, a measure of fill-in.
    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }
}

/// Resolvent entry between vertices `x` and `y`.
pub fn resolvent_entry(mat: &OracleMatrix, z: Complex64, x: VertexId, y: VertexId) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("resolvent needs Im z > 0, got {z}")));
    }
    if x >= mat.n || y >= mat.n {
        return Err(Error::invalid("vertex out of range"));
    }
    Ok(Resolvent::new(mat, z)?.entry(mat.index(x), mat.index(y)))
}

/// Eigenvalues and spectral weights `|psi_n(v)|^2` at one vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub eigenvalues: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectralMeasure {
    /// `sum_n w_n / (lambda_n - z)`.
    pub fn stieltjes(&self, z: Complex64) -> Complex64 {
        self.eigenvalues
            .iter()
            .zip(&self.weights)
            .map(|(&l, &w)| w / (l - z))
            .sum()
    }
}

pub fn spectral_measure(mat: &OracleMatrix, vertex: VertexId) -> Result<SpectralMeasure> {
    if mat.n > EIGEN_CAP {
        return Err(Error::SizeCap {
            what: "eigensolver dimension",
            needed: mat.n as u128,
            limit: EIGEN_CAP as u128,
        });
    }
    let eig = mat.to_real_symmetric()?.symmetric_eigen();
    let row = mat.index(vertex);
    let mut pairs: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &l)| (l, eig.eigenvectors[(row, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SpectralMeasure {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenHistogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    /// Eigenvalue counts normalized to total mass 1.
    pub mass: Vec<f64>,
    /// Spectral measure of the root vertex.
    pub root_mass: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

/// Histograms of the full spectrum and of the root spectral measure over
/// `range` (defaults to the spectrum's hull).
pub fn eigen_histogram(mat: &OracleMatrix, root: VertexId, bins: usize, range: Option<[f64; 2]>) -> Result<EigenHistogram> {
    if bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    let mu = spectral_measure(mat, root)?;
    let lo_hi = range.unwrap_or_else(|| {
        let lo = mu.eigenvalues[0];
        let hi = *mu.eigenvalues.last().expect("nonempty");
        let pad = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        [lo - pad, hi + pad]
    });
    let [lo, hi] = lo_hi;
    if !(hi > lo) {
        return Err(Error::invalid("empty histogram range"));
    }
    let width = (hi - lo) / bins as f64;
    let mut mass = vec![0.0; bins];
    let mut root_mass = vec![0.0; bins];
    let n = mu.eigenvalues.len() as f64;
    for (&l, &w) in mu.eigenvalues.iter().zip(&mu.weights) {
        if l < lo || l > hi {
            continue;
        }
        let b = (((l - lo) / width) as usize).min(bins - 1);
        mass[b] += 1.0 / n;
        root_mass[b] += w;
    }
    Ok(EigenHistogram {
        edges: (0..=bins).map(|i| lo + width * i as f64).collect(),
        mass,
        root_mass,
        eigenvalues: mu.eigenvalues,
    })
}
