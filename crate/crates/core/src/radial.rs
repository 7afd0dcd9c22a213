//! Radial label-symmetric potentials: `v(x)` depends only on the depth `|x|`
//! and the label `a(x)`. The reduced Green function then depends on the layer
//! `s` as well and is computed by a backward recursion over layers.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{phi_map, solve, solve_boundary, GreenVector, SolverOptions};
use crate::hyperbolic::gamma_max;
use crate::operator::OperatorParams;
use crate::tree::SubstitutionMatrix;

const LAYER_CAP: usize = 100_000;
const MIN_LAYERS: usize = 50;

/// Values `v[s][j]` in `[-1, 1]` for layers `s < horizon`; deeper layers read
/// `default`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialPotential {
    pub horizon: usize,
    pub values: Vec<Vec<f64>>,
    pub default: f64,
}

/// On-disk form: `{"horizon": N, "values": [[s, label, v], ...], "default": 0}`.
/// Labels are label names; a bare JSON number `1` means the label `"1"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialPotentialFile {
    pub horizon: usize,
    #[serde(default)]
    pub values: Vec<(usize, serde_json::Value, f64)>,
    #[serde(default)]
    pub default: f64,
}

fn check_range(v: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("potential value {v} outside [-1, 1]")));
    }
    Ok(())
}

impl RadialPotentialFile {
    pub fn resolve(&self, m: &SubstitutionMatrix) -> Result<RadialPotential> {
        let mut pot = RadialPotential::constant(m.size(), self.horizon, self.default)?;
        for (s, label, v) in &self.values {
            let name = match label {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                other => return Err(Error::invalid(format!("bad label {other}"))),
            };
            let j = m
                .label_index(&name)
                .ok_or_else(|| Error::invalid(format!("unknown label {name:?}")))?;
            pot.set(*s, j, *v)?;
        }
        Ok(pot)
    }
}

impl RadialPotential {
    pub fn constant(labels: usize, horizon: usize, value: f64) -> Result<Self> {
        check_range(value)?;
        Ok(RadialPotential {
            horizon,
            values: vec![vec![value; labels]; horizon],
            default: value,
        })
    }

    pub fn from_fn(labels: usize, horizon: usize, default: f64, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        check_range(default)?;
        let values: Vec<Vec<f64>> = (0..horizon).map(|s| (0..labels).map(|j| f(s, j)).collect()).collect();
        for row in &values {
            for &v in row {
                check_range(v)?;
            }
        }
        Ok(RadialPotential {
            horizon,
            values,
            default,
        })
    }

    pub fn set(&mut self, s: usize, j: usize, v: f64) -> Result<()> {
        check_range(v)?;
        if s >= self.horizon {
            return Err(Error::DepthOutOfRange {
                depth: s,
                limit: self.horizon.saturating_sub(1),
            });
        }
        let row = &mut self.values[s];
        if j >= row.len() {
            return Err(Error::invalid(format!("label index {j} out of range")));
        }
        row[j] = v;
        Ok(())
    }

    pub fn labels(&self) -> Option<usize> {
        self.values.first().map(|r| r.len())
    }

    pub fn layer(&self, s: usize, labels: usize) -> Vec<f64> {
        match self.values.get(s) {
            Some(row) => row.clone(),
            None => vec![self.default; labels],
        }
    }
}

/// One backward layer: `g -> (-1 / (z - m_j - lam v_j + sum_k m_jk g_k))_j`.
pub fn psi_layer(p: &OperatorParams, z: Complex64, lam: f64, v_layer: &[f64], g: &GreenVector) -> Result<GreenVector> {
    if v_layer.len() != p.size() {
        return Err(Error::Shape {
            expected: p.size(),
            actual: v_layer.len(),
        });
    }
    let shifted = OperatorParams {
        offdiag: p.offdiag.clone(),
        diag: p.diag.iter().zip(v_layer).map(|(m, v)| m + lam * v).collect(),
    };
    phi_map(&shifted, z, g)
}

/// Layer count for which the worst-case contraction `(1 + eta^2 / t)^-2`
/// with `t = max_j sum_k m_jk` drives a seed error below `tol`; never fewer
/// than 50.
pub fn default_layers(p: &OperatorParams, z: Complex64, tol: f64) -> usize {
    let t = (0..p.size()).map(|j| p.row_sum(j)).fold(f64::MIN_POSITIVE, f64::max);
    let rate = (1.0 + z.im * z.im / t).powi(-2);
    if !(rate < 1.0) {
        return LAYER_CAP;
    }
    let n = (tol.ln() / rate.ln()).ceil();
    (n as usize).clamp(MIN_LAYERS, LAYER_CAP)
}

/// Extrapolates the geometric decay of seed sensitivities (indexed by number
/// of layers) to the depth where it drops below `tol`.
pub(crate) fn required_depth(sens: &[f64], tol: f64) -> Option<usize> {
    let n = sens.len();
    if n < 4 {
        return None;
    }
    let (a, b) = (sens[n / 2], sens[n - 1]);
    if !(a > 0.0 && b > 0.0 && b < a) {
        return None;
    }
    let rate = (b / a).powf(1.0 / (n - 1 - n / 2) as f64);
    let extra = (tol / b).ln() / rate.ln();
    Some(n - 1 + extra.max(0.0).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    /// `Gamma_s` for `s = 0 ..= n_layers`.
    pub layers: Vec<GreenVector>,
    /// `gamma_max` between the layer-0 values of the two seeds.
    pub seed_sensitivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialOptions {
    pub solver: SolverOptions,
    /// `None` picks [`default_layers`], raised to the potential's horizon.
    pub n_layers: Option<usize>,
    pub seed_tol: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        RadialOptions {
            solver: SolverOptions::default(),
            n_layers: None,
            seed_tol: 1e-8,
        }
    }
}

fn backward(p: &OperatorParams, z: Complex64, lam: f64, v: &RadialPotential, n: usize, seed: GreenVector) -> Result<Vec<GreenVector>> {
    let mut layers = vec![seed];
    for s in (0..n).rev() {
        let next = psi_layer(p, z, lam, &v.layer(s, p.size()), layers.last().expect("nonempty"))?;
        layers.push(next);
    }
    layers.reverse();
    Ok(layers)
}

/// Layered Green functions of `T + lam v`. The deepest layer is seeded with
/// the exact value of the tail beyond the horizon, the label-invariant fixed
/// point at `z - lam * default`. A second run seeded with `i (1, ..., 1)`
/// guards against too few layers.
pub fn solve_radial(p: &OperatorParams, z: Complex64, lam: f64, v: &RadialPotential, opts: &RadialOptions) -> Result<RadialSolution> {
    if !(lam >= 0.0) || !lam.is_finite() {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lam}")));
    }
    if let Some(n) = v.labels() {
        if n != p.size() {
            return Err(Error::Shape {
                expected: p.size(),
                actual: n,
            });
        }
    }
    let n = opts
        .n_layers
        .unwrap_or_else(|| default_layers(p, z, opts.seed_tol))
        .max(v.horizon);
    let tail = z - lam * v.default;
    let seed = if z.im > 0.0 {
        solve(p, tail, &opts.solver)?
    } else {
        solve_boundary(p, tail.re, &opts.solver)?.gamma
    };
    let layers = backward(p, z, lam, v, n, seed)?;
    let other = backward(p, z, lam, v, n, GreenVector::ones_i(p.size()))?;
    let sens: Vec<f64> = other
        .iter()
        .rev()
        .zip(layers.iter().rev())
        .map(|(a, b)| gamma_max(&a.components, &b.components))
        .collect::<Result<_>>()?;
    let seed_sensitivity = sens[n];
    if !(seed_sensitivity < opts.seed_tol) {
        return Err(Error::DepthInsufficient {
            depth: n,
            sensitivity: seed_sensitivity,
            tol: opts.seed_tol,
            required: required_depth(&sens, opts.seed_tol),
        });
    }
    Ok(RadialSolution { layers, seed_sensitivity })
}

/// Potential values read back as a sparse map, for reporting.
pub fn nonzero_sites(v: &RadialPotential) -> BTreeMap<(usize, usize), f64> {
    let mut out = BTreeMap::new();
    for (s, row) in v.values.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x != 0.0 {
                out.insert((s, j), x);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::build_adjacency;

    fn m1() -> (SubstitutionMatrix, OperatorParams) {
        let m = SubstitutionMatrix::from_rows(vec![vec![1, 2], vec![1, 1]]).unwrap();
        let p = build_adjacency(&m);
        (m, p)
    }

    #[test]
    fn zero_coupling_is_phi() {
        let (_, p) = m1();
        let g = GreenVector::new(vec![Complex64::new(0.1, 0.4), Complex64::new(-0.2, 0.9)]);
        let z = Complex64::new(0.3, 0.2);
        assert_eq!(psi_layer(&p, z, 0.0, &[0.7, -0.3], &g).unwrap(), phi_map(&p, z, &g).unwrap());
    }

    #[test]
    fn constant_layer_is_energy_shift() {
        let (_, p) = m1();
        let g = GreenVector::new(vec![Complex64::new(0.1, 0.4), Complex64::new(-0.2, 0.9)]);
        let z = Complex64::new(0.3, 0.2);
        let a = psi_layer(&p, z, 0.25, &[0.8, 0.8], &g).unwrap();
        let b = phi_map(&p, z - 0.2, &g).unwrap();
        for (x, y) in a.components.iter().zip(&b.components) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn potential_file() {
        let (m, _) = m1();
        let f: RadialPotentialFile =
            serde_json::from_str(r#"{"horizon": 3, "values": [[0, "2", 0.5], [2, 1, -1.0]], "default": 0}"#).unwrap();
        let v = f.resolve(&m).unwrap();
        assert_eq!(v.layer(0, 2), vec![0.0, 0.5]);
        assert_eq!(v.layer(2, 2), vec![-1.0, 0.0]);
        assert_eq!(v.layer(7, 2), vec![0.0, 0.0]);
        assert_eq!(nonzero_sites(&v).len(), 2);
        let bad: RadialPotentialFile = serde_json::from_str(r#"{"horizon": 3, "values": [[0, "2", 1.5]]}"#).unwrap();
        assert!(bad.resolve(&m).is_err());
        let unknown: RadialPotentialFile = serde_json::from_str(r#"{"horizon": 3, "values": [[0, "x", 0.5]]}"#).unwrap();
        assert!(unknown.resolve(&m).is_err());
    }

    #[test]
    fn too_few_layers_reported() {
        let (_, p) = m1();
        let v = RadialPotential::constant(2, 0, 0.0).unwrap();
        let opts = RadialOptions {
            n_layers: Some(5),
            ..RadialOptions::default()
        };
        let err = solve_radial(&p, Complex64::new(0.5, 0.1), 0.1, &v, &opts).unwrap_err();
        assert!(matches!(err, Error::DepthInsufficient { depth: 5, required: Some(r), .. } if r > 5));
    }

    #[test]
    fn required_depth_extrapolates() {
        let sens: Vec<f64> = (0..10).map(|n| 0.5f64.powi(n)).collect();
        let r = required_depth(&sens, 1e-6).unwrap();
        assert!((19..=21).contains(&r), "{r}");
    }
}
