mod common;

use conetree::tree::{sphere_label_counts, TruncatedTree};
use proptest::prelude::*;

/// Row `root` of `M^n` by repeated integer multiplication.
fn matrix_power_row(rows: &[Vec<u32>], root: usize, n: usize) -> Vec<u64> {
    let size = rows.len();
    let mut row = vec![0u64; size];
    row[root] = 1;
    for _ in 0..n {
        let mut next = vec![0u64; size];
        for (j, &c) in row.iter().enumerate() {
            for k in 0..size {
                next[k] += c * rows[j][k] as u64;
            }
        }
        row = next;
    }
    row
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_counts_follow_matrix_powers(m in common::matrix(), root_pick in 0usize..3, depth in 0usize..6) {
        let root = root_pick % m.size();
        let tree = match TruncatedTree::build(&m, root, depth) {
            Ok(t) => t,
            Err(_) => return Ok(()),
        };
        for n in 0..=depth {
            prop_assert_eq!(sphere_label_counts(&tree, n).unwrap(), matrix_power_row(m.rows(), root, n));
            prop_assert_eq!(tree.sphere(n).unwrap().len() as u64, matrix_power_row(m.rows(), root, n).iter().sum::<u64>());
        }
    }

    #[test]
    fn construction_is_deterministic(m in common::matrix(), depth in 0usize..5) {
        let a = TruncatedTree::build(&m, 0, depth);
        let b = TruncatedTree::build(&m, 0, depth);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert_eq!(a.export(), b.export());
        }
    }

    #[test]
    fn interior_vertices_have_two_children(m in common::matrix(), depth in 1usize..5) {
        if let Ok(tree) = TruncatedTree::build(&m, 0, depth) {
            for v in tree.vertices().iter().filter(|v| v.depth < depth) {
                prop_assert!(v.children.len() >= 2);
                let degree = v.children.len() + usize::from(v.parent.is_some());
                prop_assert!(v.parent.is_none() || degree >= 3);
            }
        }
    }
}
