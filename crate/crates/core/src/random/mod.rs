//! Random perturbations of label-invariant operators on truncated trees.
//!
//! Draws are derived from `(master seed, sample index, vertex id)` alone, so
//! a sample does not depend on traversal order or thread count. The potential
//! lives on vertices of depth `< D`; the leaves at depth `D` carry the
//! unperturbed Green function of their label, which makes the root value the
//! exact Green function of the operator perturbed on the first `D` spheres.

mod two_sphere;

pub use two_sphere::*;

use num_complex::Complex64;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{solve, GreenVector, SolverOptions};
use crate::hyperbolic::gamma;
use crate::operator::OperatorParams;
use crate::spectral::{upward_sweep, LeafSeed};
use crate::tree::{TruncatedTree, VertexId};

/// Single-site distribution on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Uniform,
    /// `a` with probability `p`, else `b`.
    TwoPoint { a: f64, b: f64, p: f64 },
    Constant { value: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let inside = |x: f64| (-1.0..=1.0).contains(&x);
        match *self {
            Distribution::Uniform => Ok(()),
            Distribution::TwoPoint { a, b, p } if inside(a) && inside(b) && (0.0..=1.0).contains(&p) => Ok(()),
            Distribution::Constant { value } if inside(value) => Ok(()),
            other => Err(Error::invalid(format!("distribution {other:?} is not supported on [-1, 1]"))),
        }
    }

    /// Value for a uniform variate `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Distribution::Uniform => 2.0 * u - 1.0,
            Distribution::TwoPoint { a, b, p } => {
                if u < p {
                    a
                } else {
                    b
                }
            }
            Distribution::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    /// Potential `lambda v(x)` added to the diagonal.
    Diagonal,
    /// Edge weights multiplied by `1 + lambda v(x)` on the edge into `x`.
    OffDiagonal,
}

/// Independent draws per vertex, identically distributed per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PerturbationKind,
    /// One distribution per label, or a single one shared by all labels.
    pub distributions: Vec<Distribution>,
    pub lambda: f64,
    pub seed: u64,
}

/// Off-diagonal variant; kept as its own name for readability at call sites.
pub type EdgeWeightSpec = PotentialSpec;

impl PotentialSpec {
    pub fn diagonal(distribution: Distribution, lambda: f64, seed: u64) -> Self {
        PotentialSpec {
            kind: PerturbationKind::Diagonal,
            distributions: vec![distribution],
            lambda,
            seed,
        }
    }

    pub fn off_diagonal(distribution: Distribution, lambda: f64, seed: u64) -> Self {
        PotentialSpec {
            kind: PerturbationKind::OffDiagonal,
            ..Self::diagonal(distribution, lambda, seed)
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        PotentialSpec { lambda, ..self.clone() }
    }

    pub fn validate(&self, labels: usize) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.kind == PerturbationKind::OffDiagonal && self.lambda >= 1.0 {
            return Err(Error::invalid(format!(
                "edge weights 1 + lambda v need lambda < 1, got {}",
                self.lambda
            )));
        }
        if self.distributions.len() != 1 && self.distributions.len() != labels {
            return Err(Error::Shape {
                expected: labels,
                actual: self.distributions.len(),
            });
        }
        self.distributions.iter().try_for_each(|d| d.validate())
    }

    fn distribution(&self, label: usize) -> &Distribution {
        if self.distributions.len() == 1 {
            &self.distributions[0]
        } else {
            &self.distributions[label]
        }
    }

    /// `v(x)` for vertex `id` of label `label` in sample `sample`.
    pub fn value(&self, sample: u64, id: VertexId, label: usize) -> f64 {
        let mut rng = SmallRng::seed_from_u64(mix(self.seed, sample, id as u64));
        self.distribution(label).quantile(rng.random::<f64>())
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn mix(seed: u64, sample: u64, vertex: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ sample) ^ vertex.rotate_left(32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub solver: SolverOptions,
    /// Largest accepted `gamma` between root values seeded with the
    /// unperturbed fixed point and with `i (1, ..., 1)`.
    pub depth_tol: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            solver: SolverOptions::default(),
            depth_tol: 1e-3,
        }
    }
}

/// Monte Carlo sampler of truncated Green functions for one `(tree, spec, z)`.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    p: &'a OperatorParams,
    tree: &'a TruncatedTree,
    spec: PotentialSpec,
    z: Complex64,
    unperturbed: GreenVector,
    /// Sensitivity of sample 0 to the leaf seed.
    pub seed_sensitivity: f64,
}

impl<'a> Sampler<'a> {
    pub fn new(p: &'a OperatorParams, tree: &'a TruncatedTree, spec: &PotentialSpec, z: Complex64, opts: &SamplerOptions) -> Result<Self> {
        if !(z.im > 0.0) {
            return Err(Error::invalid(format!("sampling needs Im z > 0, got {z}")));
        }
        p.check_compatible(tree.matrix())?;
        spec.validate(p.size())?;
        let unperturbed = solve(p, z, &opts.solver)?;
        let mut sampler = Sampler {
            p,
            tree,
            spec: spec.clone(),
            z,
            unperturbed,
            seed_sensitivity: 0.0,
        };
        let a = sampler.sweep(0, LeafSeed::Labels(&sampler.unperturbed));
        let b = sampler.sweep(0, LeafSeed::Constant(Complex64::new(0.0, 1.0)));
        let sens = gamma(a[tree.root()], b[tree.root()]);
        if !(sens <= opts.depth_tol) {
            return Err(Error::DepthInsufficient {
                depth: tree.depth_limit(),
                sensitivity: sens,
                tol: opts.depth_tol,
                required: None,
            });
        }
        sampler.seed_sensitivity = sens;
        Ok(sampler)
    }

    pub fn unperturbed(&self) -> &GreenVector {
        &self.unperturbed
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    fn sweep(&self, sample: u64, leaf: LeafSeed<'_>) -> Vec<Complex64> {
        let tree = self.tree;
        let m = tree.matrix();
        let spec = &self.spec;
        let lam = spec.lambda;
        let edge = |c: VertexId| {
            let y = tree.vertex(c);
            let a = tree.vertex(y.parent.expect("child has a parent")).label;
            self.p.offdiag[a][y.label] / m.entry(a, y.label) as f64
        };
        match spec.kind {
            PerturbationKind::Diagonal => upward_sweep(
                tree,
                self.z,
                |v| {
                    let x = tree.vertex(v);
                    let pot = if lam == 0.0 { 0.0 } else { lam * spec.value(sample, v, x.label) };
                    self.p.diag[x.label] + pot
                },
                edge,
                leaf,
            ),
            PerturbationKind::OffDiagonal => upward_sweep(
                tree,
                self.z,
                |v| self.p.diag[tree.vertex(v).label],
                |c| {
                    let theta = if lam == 0.0 {
                        1.0
                    } else {
                        1.0 + lam * spec.value(sample, c, tree.vertex(c).label)
                    };
                    edge(c) * theta * theta
                },
                leaf,
            ),
        }
    }

    /// Truncated Green functions of every vertex for one sample.
    pub fn sample_all(&self, sample: u64) -> Vec<Complex64> {
        if self.spec.lambda == 0.0 {
            // the unperturbed recursion fixes the leaf values exactly
            return self.tree.vertices().iter().map(|v| self.unperturbed[v.label]).collect();
        }
        self.sweep(sample, LeafSeed::Labels(&self.unperturbed))
    }

    pub fn sample_root(&self, sample: u64) -> Complex64 {
        self.sample_all(sample)[self.tree.root()]
    }
}

/// `Gamma_root` of one sample.
pub fn sample_green(
    p: &OperatorParams,
    tree: &TruncatedTree,
    spec: &PotentialSpec,
    z: Complex64,
    sample_index: u64,
) -> Result<Complex64> {
    Ok(Sampler::new(p, tree, spec, z, &SamplerOptions::default())?.sample_root(sample_index))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub ci95: [f64; 2],
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let std_err = (var / n).sqrt();
        Estimate {
            mean,
            std_err,
            ci95: [mean - 1.96 * std_err, mean + 1.96 * std_err],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDeviation {
    pub label: usize,
    /// Vertex whose Green function was sampled for this label.
    pub vertex: VertexId,
    pub gamma_p: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    pub p_exp: f64,
    pub lambda: f64,
    pub samples: usize,
    /// `E[gamma(Gamma_root, Gamma^0_root)^p]`.
    pub root: Estimate,
    /// Same for the shallowest vertex of every label present in the tree.
    pub per_label: Vec<LabelDeviation>,
    /// `E[|G_root|^p]`.
    pub green_p: Estimate,
    pub seed_sensitivity: f64,
}

/// Shallowest vertex of each label, if any.
fn label_representatives(tree: &TruncatedTree) -> Vec<Option<VertexId>> {
    let mut reps = vec![None; tree.matrix().size()];
    for (id, v) in tree.vertices().iter().enumerate() {
        if reps[v.label].is_none() {
            reps[v.label] = Some(id);
        }
    }
    reps
}

pub fn estimate_deviation(sampler: &Sampler<'_>, p_exp: f64, n_samples: usize) -> Result<DeviationStats> {
    if !(p_exp > 1.0) {
        return Err(Error::invalid(format!("exponent must exceed 1, got {p_exp}")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let reps: Vec<(usize, VertexId)> = label_representatives(sampler.tree)
        .into_iter()
        .enumerate()
        .filter_map(|(j, v)| v.map(|v| (j, v)))
        .collect();
    let h = &sampler.unperturbed;
    let rows: Vec<(Vec<f64>, f64)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let all = sampler.sample_all(s);
            let per: Vec<f64> = reps.iter().map(|&(j, v)| gamma(all[v], h[j]).powf(p_exp)).collect();
            (per, all[sampler.tree.root()].norm().powf(p_exp))
        })
        .collect();

    let root_pos = reps.iter().position(|&(_, v)| v == sampler.tree.root()).expect("root represents its label");
    let column = |k: usize| rows.iter().map(|r| r.0[k]).collect::<Vec<f64>>();
    let per_label = reps
        .iter()
        .enumerate()
        .map(|(k, &(label, vertex))| LabelDeviation {
            label,
            vertex,
            gamma_p: Estimate::from_samples(&column(k)),
        })
        .collect();
    let greens: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(DeviationStats {
        p_exp,
        lambda: sampler.spec.lambda,
        samples: n_samples,
        root: Estimate::from_samples(&column(root_pos)),
        per_label,
        green_p: Estimate::from_samples(&greens),
        seed_sensitivity: sampler.seed_sensitivity,
    })
}
