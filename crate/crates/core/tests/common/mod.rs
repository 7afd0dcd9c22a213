#![allow(dead_code)]

use conetree::operator::OperatorParams;
use conetree::tree::check_axioms;
use conetree::{Complex64, SubstitutionMatrix};
use proptest::prelude::*;

/// Substitution matrices with 1 to 3 labels satisfying all axioms.
pub fn matrix() -> impl Strategy<Value = SubstitutionMatrix> {
    (1usize..=3)
        .prop_flat_map(|n| proptest::collection::vec(proptest::collection::vec(0u32..=3, n), n))
        .prop_map(|mut rows| {
            for (j, row) in rows.iter_mut().enumerate() {
                row[j] = row[j].max(1);
            }
            if rows.len() == 1 {
                rows[0][0] = rows[0][0].max(2);
            }
            rows
        })
        .prop_filter_map("axioms", |rows| {
            let m = SubstitutionMatrix::from_rows(rows).ok()?;
            check_axioms(&m).all().then_some(m)
        })
}

/// Label-invariant parameters on the zero pattern of `m`.
pub fn params_for(m: &SubstitutionMatrix) -> impl Strategy<Value = OperatorParams> {
    let n = m.size();
    let pattern: Vec<Vec<bool>> = (0..n).map(|j| (0..n).map(|k| m.entry(j, k) > 0).collect()).collect();
    (
        proptest::collection::vec(proptest::collection::vec(0.1f64..3.0, n), n),
        proptest::collection::vec(-2.0f64..2.0, n),
    )
        .prop_map(move |(vals, diag)| {
            let offdiag = vals
                .iter()
                .zip(&pattern)
                .map(|(row, pat)| row.iter().zip(pat).map(|(&v, &on)| if on { v } else { 0.0 }).collect())
                .collect();
            OperatorParams::new(offdiag, diag).unwrap()
        })
}

pub fn matrix_and_params() -> impl Strategy<Value = (SubstitutionMatrix, OperatorParams)> {
    matrix().prop_flat_map(|m| {
        let p = params_for(&m);
        (Just(m), p)
    })
}

pub fn half_plane() -> impl Strategy<Value = Complex64> {
    (-3.0f64..3.0, 1e-3f64..3.0).prop_map(|(a, b)| Complex64::new(a, b))
}

pub fn half_plane_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    proptest::collection::vec(half_plane(), n)
}
