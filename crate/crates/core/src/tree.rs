//! Substitution matrices and the finite trees they generate.
//!
//! A substitution matrix `M` over a finite label set says that every vertex
//! with label `j` has exactly `M[j][k]` forward neighbours of label `k`. Trees
//! are built breadth first from a root label, so each sphere occupies a
//! contiguous block of the vertex arena.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default limit on the number of vertices of a truncated tree.
pub const DEFAULT_VERTEX_CAP: usize = 5_000_000;

/// Non-negative integer matrix over an ordered label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MatrixFile", into = "MatrixFile")]
pub struct SubstitutionMatrix {
    labels: Vec<String>,
    entries: Vec<Vec<u32>>,
    primitivity_exponent: Option<usize>,
}

/// On-disk form: `{"labels": ["1","2"], "matrix": [[2,1],[1,1]]}`.
/// `labels` may be omitted, in which case labels `"1".."N"` are used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub matrix: Vec<Vec<u32>>,
}

impl TryFrom<MatrixFile> for SubstitutionMatrix {
    type Error = Error;

    fn try_from(file: MatrixFile) -> Result<Self> {
        match file.labels {
            Some(labels) => SubstitutionMatrix::new(labels, file.matrix),
            None => SubstitutionMatrix::from_rows(file.matrix),
        }
    }
}

impl From<SubstitutionMatrix> for MatrixFile {
    fn from(m: SubstitutionMatrix) -> Self {
        MatrixFile {
            labels: Some(m.labels),
            matrix: m.entries,
        }
    }
}

impl SubstitutionMatrix {
    pub fn new(labels: Vec<String>, entries: Vec<Vec<u32>>) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::invalid("substitution matrix needs at least one label"));
        }
        if labels.len() != n {
            return Err(Error::Shape {
                expected: n,
                actual: labels.len(),
            });
        }
        for row in &entries {
            if row.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    actual: row.len(),
                });
            }
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::invalid(format!("duplicate label {a:?}")));
            }
        }
        let primitivity_exponent = primitivity_exponent(&entries);
        Ok(SubstitutionMatrix {
            labels,
            entries,
            primitivity_exponent,
        })
    }

    /// Matrix with labels `"1"`, `"2"`, ...
    pub fn from_rows(entries: Vec<Vec<u32>>) -> Result<Self> {
        let labels = (1..=entries.len()).map(|i| i.to_string()).collect();
        Self::new(labels, entries)
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn entry(&self, j: usize, k: usize) -> u32 {
        self.entries[j][k]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.entries
    }

    /// Number of forward neighbours of a vertex with label `j`.
    pub fn row_sum(&self, j: usize) -> u64 {
        self.entries[j].iter().map(|&e| e as u64).sum()
    }

    /// Least `n <= N^2` with `M^n` entrywise positive, if any.
    pub fn primitivity_exponent(&self) -> Option<usize> {
        self.primitivity_exponent
    }

    /// Row `root` of `M^n`: label counts of the n-th sphere of `T(M, root)`.
    /// Saturates instead of overflowing.
    pub fn sphere_row(&self, root: usize, n: usize) -> Vec<u128> {
        let size = self.size();
        let mut row = vec![0u128; size];
        row[root] = 1;
        for _ in 0..n {
            let mut next = vec![0u128; size];
            for (j, &cnt) in row.iter().enumerate() {
                if cnt == 0 {
                    continue;
                }
                for (k, &e) in self.entries[j].iter().enumerate() {
                    next[k] = next[k].saturating_add(cnt.saturating_mul(e as u128));
                }
            }
            row = next;
        }
        row
    }
}

fn primitivity_exponent(entries: &[Vec<u32>]) -> Option<usize> {
    let n = entries.len();
    let base: Vec<Vec<bool>> = entries
        .iter()
        .map(|r| r.iter().map(|&e| e > 0).collect())
        .collect();
    let mut power = base.clone();
    for exp in 1..=n * n {
        if power.iter().all(|r| r.iter().all(|&b| b)) {
            return Some(exp);
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if !power[i][k] {
                    continue;
                }
                for j in 0..n {
                    next[i][j] |= base[k][j];
                }
            }
        }
        power = next;
    }
    None
}

/// Outcome of [`check_axioms`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomReport {
    /// More than one label, or a single label with `M > 1`.
    #[serde(rename = "M0")]
    pub m0: bool,
    /// Positive diagonal.
    #[serde(rename = "M1")]
    pub m1: bool,
    /// Primitivity.
    #[serde(rename = "M2")]
    pub m2: bool,
    /// Primitivity exponent when `m2` holds.
    pub n: Option<usize>,
}

impl AxiomReport {
    pub fn all(&self) -> bool {
        self.m0 && self.m1 && self.m2
    }
}

/// Reports which of the three tree axioms hold. Never fails.
pub fn check_axioms(m: &SubstitutionMatrix) -> AxiomReport {
    let size = m.size();
    let m0 = size > 1 || m.entry(0, 0) > 1;
    let m1 = (0..size).all(|j| m.entry(j, j) >= 1);
    let n = m.primitivity_exponent();
    AxiomReport {
        m0,
        m1,
        m2: n.is_some(),
        n,
    }
}

pub type VertexId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub label: usize,
    pub depth: usize,
    pub parent: Option<VertexId>,
    pub children: Vec<VertexId>,
}

/// Explicit rooted labelled tree cut off at a fixed depth.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTree {
    matrix: SubstitutionMatrix,
    vertices: Vec<Vertex>,
    depth_limit: usize,
    // sphere n is vertices[sphere_starts[n]..sphere_starts[n + 1]]
    sphere_starts: Vec<usize>,
}

impl TruncatedTree {
    pub fn build(m: &SubstitutionMatrix, root_label: usize, depth: usize) -> Result<Self> {
        Self::build_with_cap(m, root_label, depth, DEFAULT_VERTEX_CAP)
    }

    /// Breadth-first construction. Children of a vertex are emitted in label
    /// order, so two builds from the same input are identical.
    pub fn build_with_cap(
        m: &SubstitutionMatrix,
        root_label: usize,
        depth: usize,
        vertex_cap: usize,
    ) -> Result<Self> {
        if root_label >= m.size() {
            return Err(Error::invalid(format!(
                "root label index {root_label} out of range for {} labels",
                m.size()
            )));
        }
        let report = check_axioms(m);
        if !report.all() {
            return Err(Error::invalid(format!(
                "substitution matrix violates the tree axioms: {report:?}"
            )));
        }

        let mut total: u128 = 0;
        for n in 0..=depth {
            total = total.saturating_add(m.sphere_row(root_label, n).iter().sum::<u128>());
            if total > vertex_cap as u128 {
                return Err(Error::SizeCap {
                    what: "truncated tree vertices",
                    needed: total,
                    limit: vertex_cap as u128,
                });
            }
        }

        let mut vertices = Vec::with_capacity(total as usize);
        vertices.push(Vertex {
            label: root_label,
            depth: 0,
            parent: None,
            children: Vec::new(),
        });
        let mut sphere_starts = vec![0, 1];
        for d in 0..depth {
            let (start, end) = (sphere_starts[d], sphere_starts[d + 1]);
            for v in start..end {
                let label = vertices[v].label;
                let mut children = Vec::with_capacity(m.row_sum(label) as usize);
                for k in 0..m.size() {
                    for _ in 0..m.entry(label, k) {
                        children.push(vertices.len());
                        vertices.push(Vertex {
                            label: k,
                            depth: d + 1,
                            parent: Some(v),
                            children: Vec::new(),
                        });
                    }
                }
                vertices[v].children = children;
            }
            sphere_starts.push(vertices.len());
        }

        Ok(TruncatedTree {
            matrix: m.clone(),
            vertices,
            depth_limit: depth,
            sphere_starts,
        })
    }

    pub fn matrix(&self) -> &SubstitutionMatrix {
        &self.matrix
    }

    pub fn root(&self) -> VertexId {
        0
    }

    pub fn depth_limit(&self) -> usize {
        self.depth_limit
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id]
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    /// Vertex ids of the n-th sphere around the root.
    pub fn sphere(&self, n: usize) -> Result<std::ops::Range<VertexId>> {
        if n > self.depth_limit {
            return Err(Error::DepthOutOfRange {
                depth: n,
                limit: self.depth_limit,
            });
        }
        Ok(self.sphere_starts[n]..self.sphere_starts[n + 1])
    }

    pub fn sphere_sizes(&self) -> Vec<usize> {
        self.sphere_starts.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Path from the root to `v`, both included.
    pub fn path_from_root(&self, v: VertexId) -> Vec<VertexId> {
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.vertices[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Adjacency-list export: one record per vertex.
    pub fn export(&self) -> Vec<ExportedVertex> {
        self.vertices
            .iter()
            .enumerate()
            .map(|(id, v)| ExportedVertex {
                id,
                label: self.matrix.labels()[v.label].clone(),
                parent: v.parent,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedVertex {
    pub id: VertexId,
    pub label: String,
    pub parent: Option<VertexId>,
}

/// Label counts of the n-th sphere, indexed by label.
pub fn sphere_label_counts(t: &TruncatedTree, n: usize) -> Result<Vec<u64>> {
    let range = t.sphere(n)?;
    let mut counts = vec![0u64; t.matrix().size()];
    for v in range {
        counts[t.vertex(v).label] += 1;
    }
    Ok(counts)
}
